#include "rtrl/agents.hpp"
#include "rtrl/exact_values.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace rtrl;

namespace {

Hyperparameters small_hp() {
    Hyperparameters hp;
    hp.hidden_units = 8;
    hp.batch_size = 8;
    hp.start_steps = 32;
    hp.replay_capacity = 4096;
    return hp;
}

ReplayRecord random_record(int obs_dim, int action_dim, Rng& rng, bool terminal = false) {
    std::normal_distribution<double> normal(0.0, 0.5);
    ReplayRecord rec;
    rec.obs.resize(obs_dim);
    rec.action.resize(action_dim);
    rec.next_obs.resize(obs_dim);
    for (int i = 0; i < obs_dim; ++i) rec.obs[i] = normal(rng);
    for (int i = 0; i < action_dim; ++i) rec.action[i] = std::tanh(normal(rng));
    for (int i = 0; i < obs_dim; ++i) rec.next_obs[i] = normal(rng);
    rec.reward = normal(rng);
    rec.terminal = terminal;
    return rec;
}

}  // namespace

TEST_CASE("hyperparameter defaults") {
    Hyperparameters hp;
    REQUIRE(hp.learning_rate == 0.0003);
    REQUIRE(hp.gamma == 0.99);
    REQUIRE(hp.tau == 0.005);
    REQUIRE(hp.batch_size == 256);
    REQUIRE(hp.reward_scale == 5.0);
    REQUIRE(hp.entropy_scale == 1.0);
    REQUIRE(hp.beta == 0.2);
    REQUIRE(hp.start_steps == 10000);
    REQUIRE(hp.grad_steps_per_env_step == 1);
    REQUIRE(hp.popart_alpha == 0.0003);
    REQUIRE(hp.hidden_layers == 2);
    REQUIRE(hp.hidden_units == 256);
    REQUIRE(hp.temperature() == 0.2);
}

TEST_CASE("polyak update") {
    VectorXd theta = VectorXd::Random(10), target = VectorXd::Random(10);
    VectorXd old_target = target;
    double tau = 0.005;
    polyak_update(target, theta, tau);
    VectorXd expect = tau * theta + (1.0 - tau) * old_target;
    REQUIRE((target - expect).cwiseAbs().maxCoeff() == 0.0);

    VectorXd t1 = old_target;
    polyak_update(t1, theta, 1.0);
    REQUIRE((t1 - theta).cwiseAbs().maxCoeff() == 0.0);
    VectorXd t0 = old_target;
    polyak_update(t0, theta, 0.0);
    REQUIRE((t0 - old_target).cwiseAbs().maxCoeff() == 0.0);

    VectorXd wrong = VectorXd::Zero(9);
    REQUIRE_THROWS_AS(polyak_update(wrong, theta, tau), SpecError);
}

TEST_CASE("rtac value target masks terminals") {
    Hyperparameters hp = small_hp();
    RtacAgent agent(5, 2, hp, 1);
    Rng rng = make_rng(2, 0);
    ReplayRecord terminal = random_record(5, 2, rng, true);
    MatrixXd eps = MatrixXd::Zero(2, 1);
    REQUIRE(agent.value_target(terminal, eps) == terminal.reward);

    ReplayRecord rec = random_record(5, 2, rng, false);
    double t = agent.value_target(rec, eps);
    REQUIRE(std::isfinite(t));
    REQUIRE(t != rec.reward);
}

TEST_CASE("sac q target masks terminals") {
    Hyperparameters hp = small_hp();
    SacAgent agent(4, 2, hp, 1);
    Rng rng = make_rng(3, 0);
    ReplayRecord terminal = random_record(4, 2, rng, true);
    MatrixXd eps = MatrixXd::Zero(2, 1);
    REQUIRE(agent.q_target(terminal, eps) == terminal.reward);
}

TEST_CASE("rtac value loss trivia on hand-built batches") {
    RtacModel m;
    m.action_dim = 1;
    m.layout.add("trunk", MlpSpec{3, {4}, 2 * 1 + 2});
    VectorXd theta = VectorXd::Zero(m.layout.total);  // all heads output 0
    PopArtState pa;
    RtacBatchData d;
    d.obs = MatrixXd::Zero(3, 1);
    d.next_state = MatrixXd::Zero(2, 1);
    d.targets_norm = Eigen::RowVectorXd::Zero(1);
    d.not_terminal = Eigen::RowVectorXd::Ones(1);
    d.eps = MatrixXd::Zero(1, 1);

    {   // predictions equal targets -> value loss 0
        ad::Tape tape(&theta);
        LossVars l = build_rtac_losses(tape, m, pa, theta, d);
        REQUIRE(tape.scalar(l.value) == 0.0);
    }
    {   // one head off by e -> e^2 / 2 across the two-head average
        double e = 0.3;
        VectorXd bumped = theta;
        auto [w_off, b_off] = affine_offsets(m.layout.entries[0].spec, 0, 1);
        bumped[b_off + 2] = e;  // bias of the first value head row
        ad::Tape tape(&bumped);
        LossVars l = build_rtac_losses(tape, m, pa, bumped, d);
        REQUIRE(tape.scalar(l.value) == Catch::Approx(e * e / 2.0));
    }
    {   // beta mixing: beta=0.2 total = 0.2 policy + 0.8 value
        Rng rng = make_rng(4, 0);
        VectorXd t2 = VectorXd::Zero(m.layout.total);
        init_mlp(t2, m.layout.entries[0].spec, 0, rng);
        std::normal_distribution<double> normal(0.0, 1.0);
        d.eps(0, 0) = normal(rng);
        d.targets_norm[0] = normal(rng);
        ad::Tape tape(&t2);
        LossVars l = build_rtac_losses(tape, m, pa, t2, d);
        REQUIRE(tape.scalar(l.total) ==
                Catch::Approx(0.2 * tape.scalar(l.policy) + 0.8 * tape.scalar(l.value)));
        RtacModel m0 = m;
        m0.beta = 0.0;
        ad::Tape tape0(&t2);
        LossVars l0 = build_rtac_losses(tape0, m0, pa, t2, d);
        REQUIRE(tape0.scalar(l0.total) == tape0.scalar(l0.value));
        RtacModel m1 = m;
        m1.beta = 1.0;
        ad::Tape tape1(&t2);
        LossVars l1 = build_rtac_losses(tape1, m1, pa, t2, d);
        REQUIRE(tape1.scalar(l1.total) == tape1.scalar(l1.policy));
    }
}

TEST_CASE("rtac policy loss limits") {
    // separate nets so the critic can be zeroed independently of the policy
    RtacModel m;
    m.merged = false;
    m.action_dim = 2;
    m.layout.add("policy", MlpSpec{4, {6}, 4});
    m.layout.add("value", MlpSpec{4, {6}, 2});
    Rng rng = make_rng(5, 0);
    VectorXd theta = VectorXd::Zero(m.layout.total);
    init_mlp(theta, m.layout.find("policy").spec, m.layout.find("policy").offset, rng);
    // critic weights stay zero: v is the constant popart mean after denorm
    PopArtState pa;
    pa.mean = 1.7;
    pa.scale = 2.0;

    RtacBatchData d;
    int b = 5;
    d.obs = MatrixXd::Random(4, b);
    d.next_state = MatrixXd::Random(2, b);
    d.targets_norm = Eigen::RowVectorXd::Zero(b);
    d.not_terminal = Eigen::RowVectorXd::Ones(b);
    d.eps = MatrixXd::Random(2, b);

    // constant critic: policy gradient is alpha times the entropy-term gradient
    ad::Tape tape(&theta);
    LossVars l = build_rtac_losses(tape, m, pa, theta, d);
    tape.backward(l.policy);
    VectorXd g_policy = tape.grad;

    ad::Tape tape2(&theta);
    const auto& p = m.layout.find("policy");
    ad::Tape::Var head = mlp_forward(tape2, p.spec, p.offset, tape2.constant(d.obs));
    PolicyHeadVars s = policy_sample_tape(tape2, tape2.rows(head, 0, 2),
                                          tape2.rows(head, 2, 2), d.eps);
    tape2.backward(tape2.scale(tape2.mean(s.log_density), m.alpha));
    REQUIRE((g_policy - tape2.grad).cwiseAbs().maxCoeff() <= 1e-12);

    // alpha -> 0 with the same fixed critic: loss = -gamma * mean(mask * v_min)
    RtacModel m0 = m;
    m0.alpha = 0.0;
    ad::Tape tape3(&theta);
    LossVars l0 = build_rtac_losses(tape3, m0, pa, theta, d);
    REQUIRE(tape3.scalar(l0.policy) == Catch::Approx(-m.gamma * pa.mean));
}

TEST_CASE("sac policy loss with a constant critic is entropy-only") {
    SacModel m;
    m.action_dim = 1;
    m.layout.add("actor", MlpSpec{3, {5}, 2});
    m.layout.add("q1", MlpSpec{4, {5}, 1});
    m.layout.add("q2", MlpSpec{4, {5}, 1});
    Rng rng = make_rng(6, 0);
    VectorXd theta = VectorXd::Zero(m.layout.total);
    init_mlp(theta, m.layout.find("actor").spec, m.layout.find("actor").offset, rng);
    PopArtState pa;
    pa.mean = -0.4;

    SacBatchData d;
    int b = 4;
    d.obs = MatrixXd::Random(3, b);
    d.actions = MatrixXd::Random(1, b) * 0.5;
    d.targets_norm = Eigen::RowVectorXd::Zero(b);
    d.eps = MatrixXd::Random(1, b);

    ad::Tape tape(&theta);
    LossVars l = build_sac_losses(tape, m, pa, theta, d);
    tape.backward(l.policy);
    VectorXd g = tape.grad;

    ad::Tape tape2(&theta);
    const auto& a = m.layout.find("actor");
    ad::Tape::Var head = mlp_forward(tape2, a.spec, a.offset, tape2.constant(d.obs));
    PolicyHeadVars s = policy_sample_tape(tape2, tape2.rows(head, 0, 1),
                                          tape2.rows(head, 1, 1), d.eps);
    tape2.backward(tape2.scale(tape2.mean(s.log_density), m.alpha));
    REQUIRE((g - tape2.grad).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("rtac ignores the stored next-action component") {
    // two agents with identical seeds, records differing only in the action
    // part of next_obs: every update is bit-identical
    Hyperparameters hp = small_hp();
    RtacAgent a1(5, 2, hp, 7), a2(5, 2, hp, 7);
    Rng rng = make_rng(8, 0);
    for (int i = 0; i < 64; ++i) {
        ReplayRecord rec = random_record(5, 2, rng);
        ReplayRecord swapped = rec;
        swapped.next_obs.tail(2).setConstant(0.123);  // historical action replaced
        a1.observe(rec);
        a2.observe(swapped);
    }
    for (int i = 0; i < 10; ++i) {
        LossStats s1 = a1.update(), s2 = a2.update();
        REQUIRE(s1.policy_loss == s2.policy_loss);
        REQUIRE(s1.value_loss == s2.value_loss);
    }
    REQUIRE((a1.parameters() - a2.parameters()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("tabular rtac value target converges to the exact soft fixed point") {
    FiniteMdp env = random_finite_mdp(31, 3, 2);
    TabularPolicy pitilde = random_augmented_policy(31, 3, 2);
    double gamma = 0.99, alpha = 0.2;
    int ns = 3, na = 2, nx = ns * na;

    // iterate v(x) <- E_{s'}[partial_simulation_target(...)] to convergence
    VectorXd v = VectorXd::Zero(nx);
    for (int it = 0; it < 4000; ++it) {
        VectorXd next = VectorXd::Zero(nx);
        for (int s = 0; s < ns; ++s)
            for (int a = 0; a < na; ++a) {
                int x = s * na + a;
                for (int sp = 0; sp < ns; ++sp) {
                    double p = env.transition(env.row(s, a), sp);
                    if (p == 0.0) continue;
                    FiniteTransition rec{s, a, env.reward(s, a), sp};
                    next[x] += p * partial_simulation_target(env, v, rec, pitilde, gamma, alpha);
                }
            }
        v = next;
    }

    // oracle: direct linear solve of the entropy-augmented fixed point
    MatrixXd sys = MatrixXd::Identity(nx, nx);
    VectorXd rhs(nx);
    for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a) {
            int x = s * na + a;
            rhs[x] = env.reward(s, a);
            for (int at = 0; at < na; ++at) {
                double pr = pitilde.probs(x, at);
                rhs[x] -= gamma * alpha * pr * std::log(pr);
                for (int sp = 0; sp < ns; ++sp)
                    sys(x, sp * na + at) -= gamma * env.transition(env.row(s, a), sp) * pr;
            }
        }
    VectorXd exact = sys.partialPivLu().solve(rhs);
    REQUIRE((v - exact).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("tabular sac q target converges to the soft q fixed point") {
    FiniteMdp env = random_finite_mdp(37, 3, 2);
    TabularPolicy pi = random_plain_policy(37, 3, 2);
    double gamma = 0.99;
    int ns = 3, na = 2, nq = ns * na;

    auto soft_solve = [&](double alpha) {
        MatrixXd sys = MatrixXd::Identity(nq, nq);
        VectorXd rhs(nq);
        for (int s = 0; s < ns; ++s)
            for (int a = 0; a < na; ++a) {
                int i = s * na + a;
                rhs[i] = env.reward(s, a);
                for (int sp = 0; sp < ns; ++sp) {
                    double p = env.transition(env.row(s, a), sp);
                    for (int ap = 0; ap < na; ++ap) {
                        double pr = pi.probs(sp, ap);
                        sys(i, sp * na + ap) -= gamma * p * pr;
                        rhs[i] -= gamma * p * alpha * pr * std::log(pr);
                    }
                }
            }
        return VectorXd(sys.partialPivLu().solve(rhs));
    };

    // iterate the sac target rule with exact expectations
    for (double alpha : {0.0, 0.2}) {
        VectorXd q = VectorXd::Zero(nq);
        for (int it = 0; it < 4000; ++it) {
            VectorXd next(nq);
            for (int s = 0; s < ns; ++s)
                for (int a = 0; a < na; ++a) {
                    int i = s * na + a;
                    double boot = 0.0;
                    for (int sp = 0; sp < ns; ++sp) {
                        double p = env.transition(env.row(s, a), sp);
                        for (int ap = 0; ap < na; ++ap)
                            boot += p * pi.probs(sp, ap) *
                                    (q[sp * na + ap] - alpha * std::log(pi.probs(sp, ap)));
                    }
                    next[i] = env.reward(s, a) + gamma * boot;
                }
            q = next;
        }
        VectorXd exact = soft_solve(alpha);
        REQUIRE((q - exact).cwiseAbs().maxCoeff() <= 1e-3);
        if (alpha == 0.0) {
            // alpha=0: the soft fixed point is the plain solve_q table
            MatrixXd plain = solve_q(env, pi, gamma);
            for (int s = 0; s < ns; ++s)
                for (int a = 0; a < na; ++a)
                    REQUIRE(std::abs(q[s * na + a] - plain(s, a)) <= 1e-3);
        }
    }
}

TEST_CASE("train takes no gradient steps before the threshold") {
    Hyperparameters hp = small_hp();
    hp.start_steps = 1000;
    PointMassConfig pc;
    pc.episode_length = 50;
    PointMassEnv env(pc), eval_env(pc);
    RtacAgent agent(4, 2, hp, 1);
    VectorXd before = agent.parameters();
    TrainOptions opt;
    opt.total_steps = 200;
    opt.eval_interval = 100;
    opt.eval_episodes = 1;
    TrainResult r = train(agent, env, eval_env, opt, 1);
    REQUIRE_FALSE(r.aborted);
    REQUIRE((agent.parameters() - before).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(agent.popart().mean == 0.0);
    for (const auto& p : r.curve) REQUIRE(p.policy_loss == 0.0);
}

TEST_CASE("training is bit-deterministic per seed") {
    for (bool sac : {false, true}) {
        Hyperparameters hp = small_hp();
        PointMassConfig pc;
        pc.episode_length = 50;
        TrainOptions opt;
        opt.total_steps = 300;
        opt.eval_interval = 100;
        opt.eval_episodes = 2;
        std::vector<TrainResult> results;
        for (int rep = 0; rep < 2; ++rep) {
            PointMassEnv env(pc), eval_env(pc);
            std::unique_ptr<Agent> agent;
            if (sac) agent = std::make_unique<SacAgent>(4, 2, hp, 11);
            else agent = std::make_unique<RtacAgent>(4, 2, hp, 11);
            results.push_back(train(*agent, env, eval_env, opt, 11));
        }
        REQUIRE(results[0].curve.size() == results[1].curve.size());
        for (std::size_t i = 0; i < results[0].curve.size(); ++i) {
            const EvalPoint &a = results[0].curve[i], &b = results[1].curve[i];
            REQUIRE(a.step == b.step);
            REQUIRE(a.episode_return == b.episode_return);
            REQUIRE(a.policy_loss == b.policy_loss);
            REQUIRE(a.value_loss == b.value_loss);
            REQUIRE(a.popart_mean == b.popart_mean);
            REQUIRE(a.popart_scale == b.popart_scale);
        }
    }
}
