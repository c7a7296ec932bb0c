#pragma once

#include "rtrl/augment.hpp"
#include "rtrl/mdp.hpp"

#include <Eigen/LU>

namespace rtrl {

// Unique fixed point of q(s,a) = r(s,a) + gamma E_{s'} E_{a'~pi}[q(s',a')],
// as a |S| x |A| table, by dense direct solve.
inline MatrixXd solve_q(const FiniteMdp& env, const TabularPolicy& pi, double gamma,
                        double residual_tol = 1e-10) {
    if (gamma < 0.0 || gamma >= 1.0) throw SpecError("solve_q: gamma must lie in [0, 1)");
    if (pi.num_conditions() != env.num_states || pi.num_actions() != env.num_actions)
        throw SpecError("solve_q: policy/environment signature mismatch");
    int ns = env.num_states, na = env.num_actions, nq = ns * na;
    if (nq > 10'000) throw SpecError("solve_q: table exceeds the 10^4 entry cap");
    // q = r + gamma P Pi q  with  P: (SA x S), Pi: (S x SA)
    MatrixXd pimat = MatrixXd::Zero(ns, nq);
    for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a) pimat(s, s * na + a) = pi.probs(s, a);
    MatrixXd sys = MatrixXd::Identity(nq, nq) - gamma * env.transition * pimat;
    VectorXd rvec(nq);
    for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a) rvec[s * na + a] = env.reward(s, a);
    Eigen::PartialPivLU<MatrixXd> lu(sys);
    VectorXd q = lu.solve(rvec);
    double residual = (sys * q - rvec).cwiseAbs().maxCoeff();
    if (!q.allFinite() || residual > residual_tol)
        throw SpecError("solve_q: system is singular or ill-conditioned (residual " +
                        std::to_string(residual) + ")");
    MatrixXd table(ns, na);
    for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a) table(s, a) = q[s * na + a];
    return table;
}

// Fixed point of v(s) = E_{a~pi}[r(s,a) + gamma E_{s'}[v(s')]].
inline VectorXd solve_v(const FiniteMdp& env, const TabularPolicy& pi, double gamma,
                        double residual_tol = 1e-10) {
    if (gamma < 0.0 || gamma >= 1.0) throw SpecError("solve_v: gamma must lie in [0, 1)");
    if (pi.num_conditions() != env.num_states || pi.num_actions() != env.num_actions)
        throw SpecError("solve_v: policy/environment signature mismatch");
    Mrp m = compose_tbmrp(env, pi);
    int ns = env.num_states;
    MatrixXd sys = MatrixXd::Identity(ns, ns) - gamma * m.kernel;
    Eigen::PartialPivLU<MatrixXd> lu(sys);
    VectorXd v = lu.solve(m.reward);
    double residual = (sys * v - m.reward).cwiseAbs().maxCoeff();
    if (!v.allFinite() || residual > residual_tol)
        throw SpecError("solve_v: system is singular or ill-conditioned (residual " +
                        std::to_string(residual) + ")");
    return v;
}

// Max residual of the Lemma identity
//   q((s,a),atilde) = r(s,a) + gamma E_{s'~p} E_{atilde'~pitilde(.|s',atilde)}
//                                 [q((s',atilde), atilde')]
// against the q-table of RTMDP(E) obtained by linear solve.
inline double verify_lemma1(const FiniteMdp& env, const TabularPolicy& pitilde, double gamma) {
    int ns = env.num_states, na = env.num_actions;
    FiniteMdp aug = rtmdp(env);
    MatrixXd q = solve_q(aug, pitilde, gamma);  // (S*A) x A
    double max_res = 0.0;
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            int x = s * na + a;
            for (int at = 0; at < na; ++at) {
                double rhs = env.reward(s, a);
                for (int sp = 0; sp < ns; ++sp) {
                    double p = env.transition(env.row(s, a), sp);
                    if (p == 0.0) continue;
                    int xp = sp * na + at;  // (s', atilde): the emitted action passed through
                    double inner = 0.0;
                    for (int atp = 0; atp < na; ++atp)
                        inner += pitilde.probs(xp, atp) * q(xp, atp);
                    rhs += gamma * p * inner;
                }
                max_res = std::max(max_res, std::abs(q(x, at) - rhs));
            }
        }
    }
    return max_res;
}

// Max residual of
//   v((s,a)) = r(s,a) + gamma E_{s'~p(.|s,a)} E_{atilde~pitilde(.|s,a)}[v((s',atilde))].
inline double verify_lemma2(const FiniteMdp& env, const TabularPolicy& pitilde, double gamma) {
    int ns = env.num_states, na = env.num_actions;
    FiniteMdp aug = rtmdp(env);
    VectorXd v = solve_v(aug, pitilde, gamma);
    double max_res = 0.0;
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            int x = s * na + a;
            double rhs = env.reward(s, a);
            for (int sp = 0; sp < ns; ++sp) {
                double p = env.transition(env.row(s, a), sp);
                if (p == 0.0) continue;
                for (int at = 0; at < na; ++at)
                    rhs += gamma * p * pitilde.probs(x, at) * v[sp * na + at];
            }
            max_res = std::max(max_res, std::abs(v[x] - rhs));
        }
    }
    return max_res;
}

struct FiniteTransition {
    int state;
    int action;
    double reward;
    int next_state;
};

// Off-policy value target via partial simulation: the stored s' is replayed
// for the unknown environment factor while the known action pass-through is
// resampled exactly, giving
//   r + gamma E_{atilde~pitilde(.|s,a)}[ v((s',atilde)) - alpha log pitilde(atilde|s,a) ].
inline double partial_simulation_target(const FiniteMdp& env, const VectorXd& v_augmented,
                                        const FiniteTransition& record,
                                        const TabularPolicy& pitilde, double gamma,
                                        double alpha) {
    int ns = env.num_states, na = env.num_actions;
    if (record.state < 0 || record.state >= ns || record.action < 0 || record.action >= na ||
        record.next_state < 0 || record.next_state >= ns)
        throw SpecError("partial_simulation_target: record indices out of range");
    if (env.transition(env.row(record.state, record.action), record.next_state) == 0.0)
        throw SpecError("partial_simulation_target: stored transition not in the support of p");
    if (std::abs(env.reward(record.state, record.action) - record.reward) > 1e-9)
        throw SpecError("partial_simulation_target: stored reward inconsistent with r(s,a)");
    if (v_augmented.size() != ns * na)
        throw SpecError("partial_simulation_target: value table must cover S x A");
    int x = record.state * na + record.action;
    double expect = 0.0;
    for (int at = 0; at < na; ++at) {
        double pr = pitilde.probs(x, at);
        if (pr == 0.0) continue;
        expect += pr * (v_augmented[record.next_state * na + at] - alpha * std::log(pr));
    }
    return record.reward + gamma * expect;
}

}  // namespace rtrl
