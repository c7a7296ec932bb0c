#include "rtrl/replay.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace rtrl;

namespace {

ReplayRecord record_with_reward(double r) {
    ReplayRecord rec;
    rec.obs = VectorXd::Constant(1, r);
    rec.action = VectorXd::Zero(1);
    rec.reward = r;
    rec.next_obs = VectorXd::Zero(1);
    return rec;
}

}  // namespace

TEST_CASE("replay memory ring semantics") {
    REQUIRE_THROWS_AS(ReplayMemory(0), SpecError);
    ReplayMemory mem(3);
    Rng rng = make_rng(1, 0);
    REQUIRE_THROWS_AS(mem.sample(rng), SpecError);
    for (int i = 0; i < 5; ++i) mem.push(record_with_reward(i));
    REQUIRE(mem.size() == 3);
    // oldest two (0, 1) were overwritten by 3 and 4
    std::vector<double> rewards = {mem[0].reward, mem[1].reward, mem[2].reward};
    std::sort(rewards.begin(), rewards.end());
    REQUIRE(rewards == std::vector<double>{2.0, 3.0, 4.0});
}

TEST_CASE("replay sampling is uniform") {
    const int records = 100, draws = 1'000'000;
    ReplayMemory mem(records);
    for (int i = 0; i < records; ++i) mem.push(record_with_reward(i));
    Rng rng = make_rng(2, 0);
    std::vector<int> counts(records, 0);
    for (int i = 0; i < draws; ++i)
        counts[static_cast<int>(mem.sample(rng).reward)]++;
    double p = 1.0 / records;
    double se = std::sqrt(p * (1.0 - p) / draws);
    for (int i = 0; i < records; ++i) {
        INFO("record " << i << " count " << counts[i]);
        REQUIRE(std::abs(static_cast<double>(counts[i]) / draws - p) <= 4.0 * se);
    }
}

TEST_CASE("batch sampling draws independently") {
    ReplayMemory mem(4);
    for (int i = 0; i < 4; ++i) mem.push(record_with_reward(i));
    Rng rng = make_rng(3, 0);
    auto batch = mem.sample_batch(64, rng);
    REQUIRE(batch.size() == 64);
    std::set<double> seen;
    for (const auto* r : batch) seen.insert(r->reward);
    REQUIRE(seen.size() == 4);  // 64 draws from 4 records hit everything w.h.p.
}
