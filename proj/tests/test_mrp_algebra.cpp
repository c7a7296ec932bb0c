#include "rtrl/augment.hpp"
#include "rtrl/envs.hpp"
#include "rtrl/mrp_algebra.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace rtrl;

namespace {

Mrp random_mrp(std::uint64_t seed, int ns, int na = 2) {
    FiniteMdp env = random_finite_mdp(seed, ns, na);
    return compose_tbmrp(env, random_plain_policy(seed, ns, na));
}

Mrp two_cycle() {
    Mrp m;
    m.initial = VectorXd::Zero(2);
    m.initial[0] = 1.0;
    m.kernel.resize(2, 2);
    m.kernel << 0, 1, 1, 0;
    m.reward = VectorXd::Zero(2);
    m.reward << 0.5, -0.25;
    return m;
}

}  // namespace

TEST_CASE("n-step kernel against a matrix power oracle") {
    Mrp m = random_mrp(2, 4);
    REQUIRE((n_step_kernel(m, 1) - m.kernel).cwiseAbs().maxCoeff() == 0.0);
    MatrixXd cube = m.kernel * m.kernel * m.kernel;
    REQUIRE((n_step_kernel(m, 3) - cube).cwiseAbs().maxCoeff() <= 1e-12);
    REQUIRE_THROWS_AS(n_step_kernel(m, 0), SpecError);

    Mrp cyc = two_cycle();
    MatrixXd k2 = n_step_kernel(cyc, 2);
    REQUIRE(k2(0, 0) == 1.0);
    REQUIRE(k2(1, 1) == 1.0);
}

TEST_CASE("n-step value basics and enumeration oracle") {
    Mrp m = random_mrp(4, 3);
    REQUIRE((n_step_value(m, 1) - m.reward).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE_THROWS_AS(n_step_value(m, 0), SpecError);

    Mrp absorbing;
    absorbing.initial = VectorXd::Ones(1);
    absorbing.kernel = MatrixXd::Ones(1, 1);
    absorbing.reward = VectorXd::Ones(1);
    REQUIRE(n_step_value(absorbing, 3)[0] == 3.0);

    // v^4(s) = expected 4-step undiscounted reward sum started from s
    const int n = 4;
    VectorXd v = n_step_value(m, n);
    for (int s = 0; s < m.num_states(); ++s) {
        Mrp from_s = m;
        from_s.initial.setZero();
        from_s.initial[s] = 1.0;
        TrajectoryDistribution d = enumerate_trajectory_distribution(from_s, n - 1);
        double expect = 0.0;
        for (std::size_t i = 0; i < d.states.size(); ++i) {
            double sum = 0.0;
            for (double r : d.rewards[i]) sum += r;
            expect += d.probability[i] * sum;
        }
        REQUIRE(std::abs(v[s] - expect) <= 1e-12);
    }
}

TEST_CASE("sub-mrp interval semantics") {
    Mrp m = random_mrp(6, 4);
    Mrp s1 = sub_mrp(m, 1);
    REQUIRE(mrp_equal(s1, m, 0.0).equal);

    Mrp s2 = sub_mrp(m, 2);
    REQUIRE_NOTHROW(s2.validate());
    // reward at any state = rbar(s) + E_{s' ~ kappa}[rbar(s')]
    VectorXd expect = m.reward + m.kernel * m.reward;
    REQUIRE((s2.reward - expect).cwiseAbs().maxCoeff() <= 1e-14);

    // n_step_value(m, n) = n_step_value(sub_mrp(m, n), 1) for n <= 4
    for (int n = 1; n <= 4; ++n)
        REQUIRE((n_step_value(m, n) - n_step_value(sub_mrp(m, n), 1)).cwiseAbs().maxCoeff() <=
                1e-12);
}

TEST_CASE("reduction identity and rejection") {
    Mrp m = random_mrp(8, 3);
    Mrp same = reduce_mrp(m, StateTransformation::identity(3));
    REQUIRE(mrp_equal(same, m, 1e-14).equal);

    // collapsing two states with different rewards is not a valid reduction
    Mrp bad = two_cycle();
    StateTransformation collapse;
    collapse.map = {0, 0};
    collapse.target_size = 1;
    REQUIRE_THROWS_WITH(reduce_mrp(bad, collapse),
                        Catch::Matchers::ContainsSubstring("fiber"));
}

TEST_CASE("theorem 2 end to end and its failure modes") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        FiniteMdp env = random_finite_mdp(seed, 1 + static_cast<int>(seed % 4),
                                          1 + static_cast<int>(seed % 3));
        TabularPolicy pi = random_plain_policy(seed, env.num_states, env.num_actions);
        FiniteMdp tb = tbmdp(env);
        Mrp psi = compose_rtmrp(tb, lift_policy_over_tbmdp(env, pi));
        Mrp omega = compose_tbmrp(env, pi);
        StateTransformation f;
        f.target_size = env.num_states;
        f.map.resize(tb.num_states * tb.num_actions);
        for (int s = 0; s < env.num_states; ++s)
            for (int b = 0; b < 2; ++b)
                for (int a = 0; a < env.num_actions; ++a)
                    f.map[turn_index(s, b) * env.num_actions + a] = s;

        // the reduced 2-step sub-MRP equals the plain composition exactly
        Mrp reduced = reduce_mrp(sub_mrp(psi, 2), f);
        MrpComparison cmp = mrp_equal(reduced, omega, 1e-12);
        INFO("seed " << seed << ": " << cmp.detail);
        REQUIRE(cmp.equal);

        ContainsResult res = contains(psi, omega, 2, f, 1e-12);
        REQUIRE(res.contains);

        // perturbing the target reward breaks containment
        Mrp wrong = omega;
        wrong.reward[0] += 1e-6;
        REQUIRE_FALSE(contains(psi, wrong, 2, f, 1e-12).contains);
    }
}

TEST_CASE("containment is reflexive at interval 1") {
    Mrp m = random_mrp(10, 4);
    REQUIRE(contains(m, m, 1, StateTransformation::identity(4)).contains);
}

TEST_CASE("produced kernels stay stochastic") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Mrp m = random_mrp(seed, 4, 3);
        for (int n = 1; n <= 3; ++n) REQUIRE_NOTHROW(sub_mrp(m, n).validate());
    }
}
