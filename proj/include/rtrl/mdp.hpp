#pragma once

#include "rtrl/common.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

namespace rtrl {

// A finite Markov Decision Process (S, A, mu, p, r).
// Transition rows are indexed by s * num_actions + a.
struct FiniteMdp {
    int num_states = 0;
    int num_actions = 0;
    VectorXd initial;     // |S|
    MatrixXd transition;  // (|S|*|A|) x |S|, row-stochastic
    MatrixXd reward;      // |S| x |A|

    int row(int s, int a) const { return s * num_actions + a; }

    void validate(double tol = 1e-12) const {
        if (num_states < 1 || num_actions < 1)
            throw SpecError("FiniteMdp: empty state or action space");
        if (initial.size() != num_states || transition.rows() != num_states * num_actions ||
            transition.cols() != num_states || reward.rows() != num_states ||
            reward.cols() != num_actions)
            throw SpecError("FiniteMdp: inconsistent shapes");
        if (std::abs(initial.sum() - 1.0) > tol)
            throw SpecError("FiniteMdp: initial distribution does not sum to 1");
        for (int i = 0; i < transition.rows(); ++i)
            if (std::abs(transition.row(i).sum() - 1.0) > tol)
                throw SpecError("FiniteMdp: transition row " + std::to_string(i) +
                                " does not sum to 1");
        if (!reward.allFinite() || !initial.allFinite() || !transition.allFinite())
            throw SpecError("FiniteMdp: non-finite entries");
    }
};

// A stochastic tabular policy. Row i is the action distribution for
// conditioning index i: plain policies condition on states (rows == |S|),
// augmented policies condition on state-action pairs (rows == |S|*|A|).
struct TabularPolicy {
    MatrixXd probs;  // conditioning x |A|

    int num_conditions() const { return static_cast<int>(probs.rows()); }
    int num_actions() const { return static_cast<int>(probs.cols()); }

    void validate(double tol = 1e-9) const {
        for (int i = 0; i < probs.rows(); ++i)
            if (std::abs(probs.row(i).sum() - 1.0) > tol)
                throw SpecError("TabularPolicy: row " + std::to_string(i) +
                                " does not sum to 1");
        if ((probs.array() < -tol).any())
            throw SpecError("TabularPolicy: negative probability");
    }
};

// A finite Markov Reward Process (S, mu, kappa, rbar).
struct Mrp {
    VectorXd initial;  // |S|
    MatrixXd kernel;   // |S| x |S|, row-stochastic (row = from-state)
    VectorXd reward;   // |S|

    int num_states() const { return static_cast<int>(initial.size()); }

    void validate(double tol = 1e-12) const {
        int n = num_states();
        if (kernel.rows() != n || kernel.cols() != n || reward.size() != n)
            throw SpecError("Mrp: inconsistent shapes");
        for (int i = 0; i < n; ++i)
            if (std::abs(kernel.row(i).sum() - 1.0) > tol)
                throw SpecError("Mrp: kernel row " + std::to_string(i) + " does not sum to 1");
    }
};

// Turn-based composition (Def. of TBMRP):
//   kappa(s'|s) = sum_a p(s'|s,a) pi(a|s),  rbar(s) = sum_a r(s,a) pi(a|s).
inline Mrp compose_tbmrp(const FiniteMdp& env, const TabularPolicy& pi) {
    if (pi.num_conditions() != env.num_states || pi.num_actions() != env.num_actions)
        throw SpecError(
            "compose_tbmrp: policy must condition on plain states (" +
            std::to_string(env.num_states) + " rows, got " +
            std::to_string(pi.num_conditions()) + ")");
    Mrp m;
    m.initial = env.initial;
    m.kernel = MatrixXd::Zero(env.num_states, env.num_states);
    m.reward = VectorXd::Zero(env.num_states);
    for (int s = 0; s < env.num_states; ++s) {
        for (int a = 0; a < env.num_actions; ++a) {
            m.kernel.row(s) += pi.probs(s, a) * env.transition.row(env.row(s, a));
            m.reward[s] += pi.probs(s, a) * env.reward(s, a);
        }
    }
    return m;
}

// Real-time composition (Def. of RTMRP) over X = S x A, index x = s*|A|+a:
//   kappa((s',a')|(s,a)) = p(s'|s,a) pitilde(a'|s,a),  rbar((s,a)) = r(s,a),
//   initial mu(s0) delta(a0 - c).
inline Mrp compose_rtmrp(const FiniteMdp& env, const TabularPolicy& pitilde,
                         int initial_action = 0) {
    int ns = env.num_states, na = env.num_actions;
    if (pitilde.num_conditions() != ns * na || pitilde.num_actions() != na)
        throw SpecError(
            "compose_rtmrp: policy must condition on state-action pairs (" +
            std::to_string(ns * na) + " rows, got " +
            std::to_string(pitilde.num_conditions()) + ")");
    if (initial_action < 0 || initial_action >= na)
        throw SpecError("compose_rtmrp: initial action out of range");
    int nx = ns * na;
    Mrp m;
    m.initial = VectorXd::Zero(nx);
    m.kernel = MatrixXd::Zero(nx, nx);
    m.reward = VectorXd::Zero(nx);
    for (int s = 0; s < ns; ++s) m.initial[s * na + initial_action] = env.initial[s];
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            int x = s * na + a;
            m.reward[x] = env.reward(s, a);
            for (int sp = 0; sp < ns; ++sp)
                for (int ap = 0; ap < na; ++ap)
                    m.kernel(x, sp * na + ap) =
                        env.transition(env.row(s, a), sp) * pitilde.probs(x, ap);
        }
    }
    return m;
}

struct TrajectoryStep {
    int state;
    double reward;
};

// Samples a state/reward sequence of length horizon+1. Deterministic given rng state.
inline std::vector<TrajectoryStep> sample_trajectory(const Mrp& m, int horizon, Rng& rng) {
    if (horizon < 0) throw SpecError("sample_trajectory: negative horizon");
    std::vector<TrajectoryStep> traj;
    traj.reserve(horizon + 1);
    int s = sample_index(m.initial, rng);
    traj.push_back({s, m.reward[s]});
    for (int t = 0; t < horizon; ++t) {
        s = sample_index(m.kernel.row(s), rng);
        traj.push_back({s, m.reward[s]});
    }
    return traj;
}

// Exact joint distribution over state sequences of length horizon+1.
struct TrajectoryDistribution {
    int horizon = 0;
    std::vector<std::vector<int>> states;   // each of length horizon+1
    std::vector<double> probability;        // aligned with states
    std::vector<std::vector<double>> rewards;

    double total_mass() const {
        return std::accumulate(probability.begin(), probability.end(), 0.0);
    }
};

inline TrajectoryDistribution enumerate_trajectory_distribution(
    const Mrp& m, int horizon, std::uint64_t budget = 1'000'000) {
    if (horizon < 0) throw SpecError("enumerate_trajectory_distribution: negative horizon");
    double count = std::pow(static_cast<double>(m.num_states()), horizon + 1);
    if (count > static_cast<double>(budget))
        throw SpecError("enumerate_trajectory_distribution: |S|^(horizon+1) = " +
                        std::to_string(count) + " exceeds budget " + std::to_string(budget));
    TrajectoryDistribution dist;
    dist.horizon = horizon;
    std::vector<int> path(horizon + 1);
    // iterative DFS over prefixes with nonzero probability
    struct Frame { int state; double prob; };
    std::vector<Frame> stack_cur, stack_next;
    auto emit = [&](double prob) {
        dist.states.push_back(path);
        dist.probability.push_back(prob);
        std::vector<double> rs(horizon + 1);
        for (int t = 0; t <= horizon; ++t) rs[t] = m.reward[path[t]];
        dist.rewards.push_back(std::move(rs));
    };
    std::function<void(int, double)> extend = [&](int depth, double prob) {
        if (depth == horizon) {
            emit(prob);
            return;
        }
        int s = path[depth];
        for (int sp = 0; sp < m.num_states(); ++sp) {
            double p = m.kernel(s, sp);
            if (p == 0.0) continue;
            path[depth + 1] = sp;
            extend(depth + 1, prob * p);
        }
    };
    for (int s0 = 0; s0 < m.num_states(); ++s0) {
        if (m.initial[s0] == 0.0) continue;
        path[0] = s0;
        extend(0, m.initial[s0]);
    }
    return dist;
}

// Total variation distance between two trajectory distributions over the same
// state labels (after relabeling d2's states through `relabel` if supplied).
inline double trajectory_tv_distance(const TrajectoryDistribution& d1,
                                     const TrajectoryDistribution& d2,
                                     const std::vector<int>* relabel = nullptr) {
    std::map<std::vector<int>, double> diff;
    for (std::size_t i = 0; i < d1.states.size(); ++i) diff[d1.states[i]] += d1.probability[i];
    for (std::size_t i = 0; i < d2.states.size(); ++i) {
        std::vector<int> key = d2.states[i];
        if (relabel)
            for (int& s : key) s = (*relabel)[s];
        diff[key] -= d2.probability[i];
    }
    double tv = 0.0;
    for (const auto& [k, v] : diff) tv += std::abs(v);
    return 0.5 * tv;
}

struct MrpComparison {
    bool equal = false;
    double max_discrepancy = 0.0;
    std::string detail;  // names the worst entry
};

// Entrywise comparison of initial distributions, kernels and state rewards.
// `relabel` maps m1 state indices to m2 state indices (identity if absent).
inline MrpComparison mrp_equal(const Mrp& m1, const Mrp& m2, double tol,
                               const std::vector<int>* relabel = nullptr) {
    int n = m1.num_states();
    if (m2.num_states() != n)
        throw SpecError("mrp_equal: incomparable state spaces (" + std::to_string(n) +
                        " vs " + std::to_string(m2.num_states()) + ")");
    std::vector<int> id;
    if (!relabel) {
        id.resize(n);
        std::iota(id.begin(), id.end(), 0);
        relabel = &id;
    }
    MrpComparison cmp;
    auto note = [&](double d, const std::string& where) {
        if (d > cmp.max_discrepancy) {
            cmp.max_discrepancy = d;
            cmp.detail = where;
        }
    };
    for (int i = 0; i < n; ++i) {
        int j = (*relabel)[i];
        note(std::abs(m1.initial[i] - m2.initial[j]), "initial[" + std::to_string(i) + "]");
        note(std::abs(m1.reward[i] - m2.reward[j]), "reward[" + std::to_string(i) + "]");
        for (int k = 0; k < n; ++k) {
            int l = (*relabel)[k];
            note(std::abs(m1.kernel(i, k) - m2.kernel(j, l)),
                 "kernel[" + std::to_string(i) + "," + std::to_string(k) + "]");
        }
    }
    cmp.equal = cmp.max_discrepancy <= tol;
    return cmp;
}

// Plain-text tabular serialization: header "|S| |A|", then mu, then the
// |S|*|A| transition rows, then the reward table (one line per state).
inline void save_finite_mdp(const FiniteMdp& env, std::ostream& out) {
    out.precision(17);
    out << env.num_states << " " << env.num_actions << "\n";
    for (int s = 0; s < env.num_states; ++s)
        out << env.initial[s] << (s + 1 == env.num_states ? "\n" : " ");
    for (int i = 0; i < env.transition.rows(); ++i) {
        for (int j = 0; j < env.transition.cols(); ++j)
            out << env.transition(i, j) << (j + 1 == env.transition.cols() ? "\n" : " ");
    }
    for (int s = 0; s < env.num_states; ++s)
        for (int a = 0; a < env.num_actions; ++a)
            out << env.reward(s, a) << (a + 1 == env.num_actions ? "\n" : " ");
}

inline FiniteMdp load_finite_mdp(std::istream& in) {
    FiniteMdp env;
    if (!(in >> env.num_states >> env.num_actions))
        throw SpecError("load_finite_mdp: missing header");
    if (env.num_states < 1 || env.num_actions < 1)
        throw SpecError("load_finite_mdp: invalid dimensions");
    env.initial.resize(env.num_states);
    env.transition.resize(env.num_states * env.num_actions, env.num_states);
    env.reward.resize(env.num_states, env.num_actions);
    for (int s = 0; s < env.num_states; ++s)
        if (!(in >> env.initial[s])) throw SpecError("load_finite_mdp: truncated mu");
    for (int i = 0; i < env.transition.rows(); ++i)
        for (int j = 0; j < env.transition.cols(); ++j)
            if (!(in >> env.transition(i, j)))
                throw SpecError("load_finite_mdp: truncated transition");
    for (int s = 0; s < env.num_states; ++s)
        for (int a = 0; a < env.num_actions; ++a)
            if (!(in >> env.reward(s, a))) throw SpecError("load_finite_mdp: truncated reward");
    env.validate();
    return env;
}

}  // namespace rtrl
