#pragma once

#include "rtrl/agents.hpp"
#include "rtrl/augment.hpp"
#include "rtrl/envs.hpp"
#include "rtrl/exact_values.hpp"
#include "rtrl/gradcheck.hpp"
#include "rtrl/mrp_algebra.hpp"

#include <chrono>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace rtrl {

struct PropertyResult {
    std::string name;
    int instances = 0;
    double max_residual = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;
};

struct SuiteReport {
    std::string name;
    std::vector<PropertyResult> properties;
    double seconds = 0.0;

    bool pass() const {
        for (const auto& p : properties)
            if (!p.pass) return false;
        return !properties.empty();
    }
};

namespace detail {

struct ResidualTracker {
    PropertyResult result;

    explicit ResidualTracker(std::string name, double tol) {
        result.name = std::move(name);
        result.tolerance = tol;
    }

    void record(double residual, const std::string& where = {}) {
        ++result.instances;
        if (residual > result.max_residual) {
            result.max_residual = residual;
            result.detail = where;
        }
    }

    PropertyResult finish() {
        result.pass = result.max_residual <= result.tolerance && result.instances > 0;
        return result;
    }
};

inline FiniteMdp suite_env(std::uint64_t seed) {
    Rng rng = make_rng(seed, 41);
    std::uniform_int_distribution<int> ns_dist(1, 4), na_dist(1, 3);
    return random_finite_mdp(seed, ns_dist(rng), na_dist(rng));
}

}  // namespace detail

// The real-time composition equals the turn-based composition with the
// real-time augmentation, both as MRP tuples and as finite-horizon
// trajectory distributions.
inline SuiteReport suite_theorem1() {
    SuiteReport report;
    report.name = "theorem1";
    detail::ResidualTracker tuples("rtmrp_equals_tbmrp_of_rtmdp", 1e-12);
    detail::ResidualTracker tv("horizon4_trajectory_tv_distance", 1e-12);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        FiniteMdp env = detail::suite_env(seed);
        TabularPolicy pitilde =
            random_augmented_policy(seed, env.num_states, env.num_actions);
        Mrp lhs = compose_rtmrp(env, pitilde);
        Mrp rhs = compose_tbmrp(rtmdp(env), pitilde);
        MrpComparison cmp = mrp_equal(lhs, rhs, 1e-12);
        tuples.record(cmp.max_discrepancy, "seed " + std::to_string(seed) + " " + cmp.detail);
        double dist = trajectory_tv_distance(enumerate_trajectory_distribution(lhs, 4),
                                             enumerate_trajectory_distribution(rhs, 4));
        tv.record(dist, "seed " + std::to_string(seed));
    }
    report.properties.push_back(tuples.finish());
    report.properties.push_back(tv.finish());
    return report;
}

// The real-time composition with the turn-based augmentation contains the
// plain turn-based composition at interval 2 under (s, b, a) -> s.
inline SuiteReport suite_theorem2() {
    SuiteReport report;
    report.name = "theorem2";
    detail::ResidualTracker prop("contains_tbmrp_at_interval_2", 1e-12);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        FiniteMdp env = detail::suite_env(seed);
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
        ContainsResult res = contains(psi, omega, 2, f, 1e-12);
        double residual = res.contains ? res.max_discrepancy : 1.0;
        prop.record(residual, "seed " + std::to_string(seed) +
                                  (res.diagnostic.empty() ? "" : ": " + res.diagnostic));
    }
    report.properties.push_back(prop.finish());
    return report;
}

// Fixed-point identities for the augmented q and v tables via exact solves.
inline SuiteReport suite_lemmas() {
    SuiteReport report;
    report.name = "lemmas";
    detail::ResidualTracker l1("lemma1_q_identity", 1e-10);
    detail::ResidualTracker l2("lemma2_v_identity", 1e-10);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        FiniteMdp env = detail::suite_env(seed);
        TabularPolicy pitilde =
            random_augmented_policy(seed, env.num_states, env.num_actions);
        l1.record(verify_lemma1(env, pitilde, 0.99), "seed " + std::to_string(seed));
        l2.record(verify_lemma2(env, pitilde, 0.99), "seed " + std::to_string(seed));
    }
    report.properties.push_back(l1.finish());
    report.properties.push_back(l2.finish());
    return report;
}

namespace detail {

// Exact entropy-regularized policy loss over a finite augmented space:
//   L = sum_x w(x) sum_a pi(a|x) (alpha log pi(a|x) - Q(a, x))
// with pi a softmax over logits theta (na x nx), all expectations in closed form.
inline ad::Tape::Var exact_policy_loss(ad::Tape& tape, int na, int nx, double alpha,
                                       const VectorXd& w, const MatrixXd& q_table) {
    ad::Tape::Var logits = tape.param(0, na, nx, "logits");
    ad::Tape::Var log_z = tape.log(tape.colsum(tape.exp(logits)));  // 1 x nx
    ad::Tape::Var log_pi = tape.sub_row(logits, log_z);
    ad::Tape::Var pi = tape.exp(log_pi);
    MatrixXd wmat = w.transpose().replicate(na, 1);
    ad::Tape::Var weighted = tape.mul(tape.constant(wmat, "state_weights"), pi);
    ad::Tape::Var inner = tape.sub(tape.scale(log_pi, alpha), tape.constant(q_table, "q"));
    return tape.sum(tape.mul(weighted, inner));
}

}  // namespace detail

// With the action-value table built from the augmented state-value table via
// q((s,a), a~) = r(s,a) + gamma E_{s'}[v(s', a~)], the two policy losses have
// identical gradients: their difference is an expected reward that does not
// depend on the policy parameters.
inline SuiteReport suite_proposition() {
    SuiteReport report;
    report.name = "proposition";
    detail::ResidualTracker prop("policy_gradient_equivalence", 1e-6);
    double gamma = 0.99, alpha = 0.2;
    for (std::uint64_t trial = 1; trial <= 100; ++trial) {
        Rng rng = make_rng(trial, 47);
        // at least two actions, otherwise the policy gradient is identically zero
        int ns = std::uniform_int_distribution<int>(1, 4)(rng);
        int na = std::uniform_int_distribution<int>(2, 3)(rng);
        FiniteMdp env = random_finite_mdp(trial % 10 + 1, ns, na);
        int nx = ns * na;
        std::normal_distribution<double> normal(0.0, 1.0);
        std::exponential_distribution<double> expo(1.0);

        MatrixXd v(ns, na);  // v(s', a~): state-value over augmented states
        for (int s = 0; s < ns; ++s)
            for (int a = 0; a < na; ++a) v(s, a) = normal(rng);
        VectorXd w(nx);  // weighting over augmented states (the "D" marginal)
        for (int x = 0; x < nx; ++x) w[x] = expo(rng);
        w /= w.sum();
        VectorXd theta(na * nx);
        for (int i = 0; i < theta.size(); ++i) theta[i] = normal(rng);

        MatrixXd q_rtac(na, nx), q_sac(na, nx);
        for (int s = 0; s < ns; ++s) {
            for (int a = 0; a < na; ++a) {
                int x = s * na + a;
                for (int at = 0; at < na; ++at) {
                    double boot = 0.0;
                    for (int sp = 0; sp < ns; ++sp)
                        boot += env.transition(env.row(s, a), sp) * v(sp, at);
                    q_rtac(at, x) = gamma * boot;
                    q_sac(at, x) = env.reward(s, a) + gamma * boot;
                }
            }
        }
        auto grad_of = [&](const MatrixXd& q_table) {
            ad::Tape tape(&theta);
            tape.backward(detail::exact_policy_loss(tape, na, nx, alpha, w, q_table));
            return tape.grad;
        };
        VectorXd g_rtac = grad_of(q_rtac), g_sac = grad_of(q_sac);
        double rel = (g_sac - g_rtac).norm() / std::max(g_sac.norm(), 1e-12);
        prop.record(rel, "trial " + std::to_string(trial));
    }
    report.properties.push_back(prop.finish());
    return report;
}

namespace detail {

struct GradConfig {
    int state_dim, action_dim, hidden, batch;
    PopArtState popart;
};

inline GradConfig random_grad_config(std::uint64_t seed) {
    Rng rng = make_rng(seed, 53);
    GradConfig cfg;
    cfg.state_dim = std::uniform_int_distribution<int>(2, 4)(rng);
    cfg.action_dim = std::uniform_int_distribution<int>(1, 3)(rng);
    cfg.hidden = std::uniform_int_distribution<int>(5, 10)(rng);
    cfg.batch = std::uniform_int_distribution<int>(2, 6)(rng);
    cfg.popart.mean = std::normal_distribution<double>(0.0, 2.0)(rng);
    cfg.popart.scale = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    return cfg;
}

inline MatrixXd random_matrix(int rows, int cols, Rng& rng, double sd = 1.0) {
    std::normal_distribution<double> normal(0.0, sd);
    MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
}

// One finite-difference check of one loss term against the tape gradient.
template <class Build>
GradCheckReport check_loss_gradient(const VectorXd& theta, Build build) {
    ad::Tape tape(&theta);
    ad::Tape::Var loss = build(tape, theta);
    tape.backward(loss);
    VectorXd analytic = tape.grad;
    auto loss_fn = [&](const VectorXd& probe) {
        ad::Tape t(&probe);
        return t.scalar(build(t, theta));  // stop-gradient copies stay at theta
    };
    return finite_difference_check(loss_fn, theta, analytic);
}

}  // namespace detail

// Central finite differences on every loss term of both agents, over random
// small configurations, with the stop-gradient (target/detached) parameter
// copies held fixed.
inline SuiteReport suite_gradients() {
    SuiteReport report;
    report.name = "gradients";
    detail::ResidualTracker rtac_policy("rtac_policy_loss_fd", 1e-4);
    detail::ResidualTracker rtac_value("rtac_value_loss_fd", 1e-4);
    detail::ResidualTracker rtac_total("rtac_total_loss_fd", 1e-4);
    detail::ResidualTracker sac_policy("sac_policy_loss_fd", 1e-4);
    detail::ResidualTracker sac_value("sac_value_loss_fd", 1e-4);
    detail::ResidualTracker sac_total("sac_total_loss_fd", 1e-4);

    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        detail::GradConfig cfg = detail::random_grad_config(seed);
        Rng rng = make_rng(seed, 59);
        int ds = cfg.state_dim, da = cfg.action_dim, b = cfg.batch;
        int obs_dim = ds + da;  // augmented observation (s, a)
        std::string where = "seed " + std::to_string(seed);

        // --- RTAC, alternating merged / separate architectures ---
        RtacModel rm;
        rm.merged = (seed % 2 == 0);
        rm.action_dim = da;
        rm.alpha = 0.2;
        rm.gamma = 0.99;
        rm.beta = 0.2;
        if (rm.merged) {
            rm.layout.add("trunk", MlpSpec{obs_dim, {cfg.hidden}, 2 * da + 2});
        } else {
            rm.layout.add("policy", MlpSpec{obs_dim, {cfg.hidden}, 2 * da});
            rm.layout.add("value", MlpSpec{obs_dim, {cfg.hidden}, 2});
        }
        VectorXd theta = VectorXd::Zero(rm.layout.total);
        for (const auto& e : rm.layout.entries) init_mlp(theta, e.spec, e.offset, rng);

        RtacBatchData rd;
        rd.obs = detail::random_matrix(obs_dim, b, rng);
        rd.next_state = detail::random_matrix(ds, b, rng);
        rd.targets_norm = detail::random_matrix(1, b, rng).row(0);
        rd.not_terminal.resize(b);
        std::bernoulli_distribution coin(0.8);
        for (int j = 0; j < b; ++j) rd.not_terminal[j] = coin(rng) ? 1.0 : 0.0;
        rd.eps = detail::random_matrix(da, b, rng);

        PopArtState pa = cfg.popart;
        auto rtac_check = [&](auto pick) {
            return detail::check_loss_gradient(theta, [&](ad::Tape& t, const VectorXd& frozen) {
                LossVars l = build_rtac_losses(t, rm, pa, frozen, rd);
                return pick(l);
            });
        };
        rtac_policy.record(rtac_check([](const LossVars& l) { return l.policy; }).max_relative_error,
                           where);
        rtac_value.record(rtac_check([](const LossVars& l) { return l.value; }).max_relative_error,
                          where);
        rtac_total.record(rtac_check([](const LossVars& l) { return l.total; }).max_relative_error,
                          where);

        // --- SAC ---
        SacModel sm;
        sm.action_dim = da;
        sm.alpha = 0.2;
        sm.layout.add("actor", MlpSpec{obs_dim, {cfg.hidden}, 2 * da});
        sm.layout.add("q1", MlpSpec{obs_dim + da, {cfg.hidden}, 1});
        sm.layout.add("q2", MlpSpec{obs_dim + da, {cfg.hidden}, 1});
        VectorXd theta_s = VectorXd::Zero(sm.layout.total);
        for (const auto& e : sm.layout.entries) init_mlp(theta_s, e.spec, e.offset, rng);

        SacBatchData sd;
        sd.obs = detail::random_matrix(obs_dim, b, rng);
        sd.actions = detail::random_matrix(da, b, rng, 0.5);
        sd.targets_norm = detail::random_matrix(1, b, rng).row(0);
        sd.eps = detail::random_matrix(da, b, rng);

        auto sac_check = [&](auto pick) {
            return detail::check_loss_gradient(theta_s, [&](ad::Tape& t, const VectorXd& frozen) {
                LossVars l = build_sac_losses(t, sm, pa, frozen, sd);
                return pick(l);
            });
        };
        sac_policy.record(sac_check([](const LossVars& l) { return l.policy; }).max_relative_error,
                          where);
        sac_value.record(sac_check([](const LossVars& l) { return l.value; }).max_relative_error,
                         where);
        sac_total.record(sac_check([](const LossVars& l) { return l.total; }).max_relative_error,
                         where);
    }

    report.properties.push_back(rtac_policy.finish());
    report.properties.push_back(rtac_value.finish());
    report.properties.push_back(rtac_total.finish());
    report.properties.push_back(sac_policy.finish());
    report.properties.push_back(sac_value.finish());
    report.properties.push_back(sac_total.finish());
    return report;
}

// Feeding a drifting synthetic target stream through the adaptive
// normalization: after every statistics update the de-normalized predictions
// at fixed probe inputs must be preserved.
inline SuiteReport suite_popart() {
    SuiteReport report;
    report.name = "popart";
    detail::ResidualTracker prop("denormalized_prediction_preservation", 1e-8);

    MlpSpec spec{3, {8}, 2};
    Rng rng = make_rng(7, 61);
    VectorXd theta = VectorXd::Zero(spec.param_count());
    init_mlp(theta, spec, 0, rng);
    PopArtState pa;
    std::vector<ValueHeadRef> heads = {{spec, 0, 0}, {spec, 0, 1}};
    MatrixXd probes = detail::random_matrix(3, 100, rng);

    std::normal_distribution<double> noise(0.0, 1.0);
    for (int t = 0; t < 10'000; ++t) {
        // drifting mean and growing spread
        double mean = 100.0 * std::sin(t / 500.0);
        double sd = 1.0 + t / 1000.0;
        std::vector<double> targets(8);
        for (double& v : targets) v = mean + sd * noise(rng);

        MatrixXd before = mlp_eval(theta, spec, 0, probes);
        double scale0 = pa.scale, mean0 = pa.mean;
        popart_update(pa, targets, heads, {&theta});
        MatrixXd after = mlp_eval(theta, spec, 0, probes);
        double change = ((pa.scale * after.array() + pa.mean) -
                         (scale0 * before.array() + mean0))
                            .abs()
                            .maxCoeff();
        prop.record(change, "step " + std::to_string(t));
    }
    report.properties.push_back(prop.finish());
    return report;
}

inline std::vector<std::string> verification_suite_names() {
    return {"theorem1", "theorem2", "lemmas", "proposition", "gradients", "popart"};
}

inline SuiteReport run_verification_suite(const std::string& name) {
    auto started = std::chrono::steady_clock::now();
    SuiteReport report;
    if (name == "theorem1") report = suite_theorem1();
    else if (name == "theorem2") report = suite_theorem2();
    else if (name == "lemmas") report = suite_lemmas();
    else if (name == "proposition") report = suite_proposition();
    else if (name == "gradients") report = suite_gradients();
    else if (name == "popart") report = suite_popart();
    else {
        std::string msg = "unknown suite '" + name + "'; available:";
        for (const auto& s : verification_suite_names()) msg += " " + s;
        throw SpecError(msg);
    }
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

inline void write_report_json(const SuiteReport& report, std::ostream& out) {
    out << "{\n  \"suite\": \"" << report.name << "\",\n  \"pass\": "
        << (report.pass() ? "true" : "false") << ",\n  \"seconds\": " << std::setprecision(6)
        << report.seconds << ",\n  \"properties\": [\n";
    for (std::size_t i = 0; i < report.properties.size(); ++i) {
        const auto& p = report.properties[i];
        out << "    {\"name\": \"" << p.name << "\", \"instances\": " << p.instances
            << ", \"max_residual\": " << std::setprecision(17) << p.max_residual
            << ", \"tolerance\": " << p.tolerance << ", \"pass\": "
            << (p.pass ? "true" : "false") << "}" << (i + 1 < report.properties.size() ? "," : "")
            << "\n";
    }
    out << "  ]\n}\n";
}

}  // namespace rtrl
