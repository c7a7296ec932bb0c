#pragma once

#include "rtrl/mdp.hpp"

#include <set>
#include <vector>

namespace rtrl {

// Total mapping from a source state space onto a target state space.
struct StateTransformation {
    std::vector<int> map;  // source index -> target index
    int target_size = 0;

    static StateTransformation identity(int n) {
        StateTransformation f;
        f.map.resize(n);
        std::iota(f.map.begin(), f.map.end(), 0);
        f.target_size = n;
        return f;
    }

    void validate(int source_size) const {
        if (static_cast<int>(map.size()) != source_size)
            throw SpecError("StateTransformation: not total over the source space");
        for (int v : map)
            if (v < 0 || v >= target_size)
                throw SpecError("StateTransformation: image out of range");
    }
};

// kappa^n by repeated kernel composition, kappa^1 = kappa.
inline MatrixXd n_step_kernel(const Mrp& m, int n) {
    if (n < 1) throw SpecError("n_step_kernel: n must be >= 1");
    MatrixXd k = m.kernel;
    for (int i = 1; i < n; ++i) k = k * m.kernel;
    return k;
}

// v^1 = rbar, v^n(s) = rbar(s) + sum_s' kappa(s'|s) v^{n-1}(s').
inline VectorXd n_step_value(const Mrp& m, int n) {
    if (n < 1) throw SpecError("n_step_value: n must be >= 1");
    VectorXd v = m.reward;
    for (int i = 1; i < n; ++i) v = m.reward + m.kernel * v;
    return v;
}

// Sub-sampling with interval n: kernel kappa^n, rewards summed over each interval.
inline Mrp sub_mrp(const Mrp& m, int n) {
    Mrp sub;
    sub.initial = m.initial;
    sub.kernel = n_step_kernel(m, n);
    sub.reward = n_step_value(m, n);
    return sub;
}

// States with nonzero probability mass: support of the initial distribution
// closed under the kernel's support.
inline std::vector<bool> reachable_states(const Mrp& m) {
    int n = m.num_states();
    std::vector<bool> reach(n, false);
    std::vector<int> frontier;
    for (int s = 0; s < n; ++s)
        if (m.initial[s] > 0.0) {
            reach[s] = true;
            frontier.push_back(s);
        }
    while (!frontier.empty()) {
        int s = frontier.back();
        frontier.pop_back();
        for (int sp = 0; sp < n; ++sp)
            if (!reach[sp] && m.kernel(s, sp) > 0.0) {
                reach[sp] = true;
                frontier.push_back(sp);
            }
    }
    return reach;
}

// Collapses fibers of f. All fiber members with nonzero reachable mass must
// agree (within tol) on rewards and on fiber-aggregated kernel rows; a
// disagreement means f is not a valid reduction and is rejected.
inline Mrp reduce_mrp(const Mrp& m, const StateTransformation& f, double tol = 1e-10) {
    int n = m.num_states();
    f.validate(n);
    std::vector<bool> reach = reachable_states(m);

    std::vector<std::vector<int>> fiber(f.target_size);
    for (int z = 0; z < n; ++z) fiber[f.map[z]].push_back(z);
    for (int t = 0; t < f.target_size; ++t)
        if (fiber[t].empty())
            throw SpecError("reduce_mrp: target state " + std::to_string(t) +
                            " has an empty fiber");

    // source-row kernel aggregated over target fibers
    MatrixXd agg = MatrixXd::Zero(n, f.target_size);
    for (int z = 0; z < n; ++z)
        for (int zp = 0; zp < n; ++zp) agg(z, f.map[zp]) += m.kernel(z, zp);

    Mrp out;
    out.initial = VectorXd::Zero(f.target_size);
    out.kernel.resize(f.target_size, f.target_size);
    out.reward.resize(f.target_size);
    for (int z = 0; z < n; ++z) out.initial[f.map[z]] += m.initial[z];

    for (int t = 0; t < f.target_size; ++t) {
        int rep = -1;
        for (int z : fiber[t])
            if (reach[z]) {
                rep = z;
                break;
            }
        if (rep < 0) rep = fiber[t][0];  // zero-mass fiber, representative is arbitrary
        out.kernel.row(t) = agg.row(rep);
        out.reward[t] = m.reward[rep];
        for (int z : fiber[t]) {
            if (!reach[z]) continue;  // "for almost all z"
            double kd = (agg.row(z) - agg.row(rep)).cwiseAbs().maxCoeff();
            double rd = std::abs(m.reward[z] - m.reward[rep]);
            if (kd > tol || rd > tol)
                throw SpecError("reduce_mrp: fiber of target state " + std::to_string(t) +
                                " disagrees at source state " + std::to_string(z) +
                                " (kernel diff " + std::to_string(kd) + ", reward diff " +
                                std::to_string(rd) + "); f is not a valid reduction");
        }
    }
    return out;
}

struct ContainsResult {
    bool contains = false;
    double max_discrepancy = 0.0;
    std::string diagnostic;
};

// Psi contains Omega iff reducing the n-sub-sampled Psi through f yields Omega.
inline ContainsResult contains(const Mrp& psi, const Mrp& omega, int n,
                               const StateTransformation& f, double tol = 1e-12) {
    ContainsResult res;
    try {
        Mrp reduced = reduce_mrp(sub_mrp(psi, n), f, tol);
        MrpComparison cmp = mrp_equal(reduced, omega, tol);
        res.contains = cmp.equal;
        res.max_discrepancy = cmp.max_discrepancy;
        if (!cmp.equal) res.diagnostic = "mismatch at " + cmp.detail;
    } catch (const SpecError& e) {
        res.contains = false;
        res.diagnostic = e.what();
    }
    return res;
}

}  // namespace rtrl
