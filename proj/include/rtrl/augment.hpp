#pragma once

#include "rtrl/mdp.hpp"

namespace rtrl {

// Index of the augmented state (s, a) in the RTMDP state space X = S x A.
inline int augmented_index(const FiniteMdp& env, int s, int a) {
    return s * env.num_actions + a;
}

struct RtmdpConfig {
    int initial_action = 0;  // the fixed action c paired with s0
};

// Real-time augmentation. The returned MDP has state space S x A and the
// emitted action is deterministically passed through into the next state:
//   p~((s',a') | (s,a), atilde) = p(s'|s,a) * [a' == atilde]
//   r~((s,a), atilde) = r(s,a)
inline FiniteMdp rtmdp(const FiniteMdp& env, const RtmdpConfig& cfg = {}) {
    int ns = env.num_states, na = env.num_actions;
    if (cfg.initial_action < 0 || cfg.initial_action >= na)
        throw SpecError("rtmdp: initial action out of range");
    FiniteMdp aug;
    aug.num_states = ns * na;
    aug.num_actions = na;
    aug.initial = VectorXd::Zero(aug.num_states);
    for (int s = 0; s < ns; ++s) aug.initial[s * na + cfg.initial_action] = env.initial[s];
    aug.transition = MatrixXd::Zero(aug.num_states * na, aug.num_states);
    aug.reward.resize(aug.num_states, na);
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            int x = s * na + a;
            for (int at = 0; at < na; ++at) {
                aug.reward(x, at) = env.reward(s, a);  // independent of the emitted action
                for (int sp = 0; sp < ns; ++sp)
                    aug.transition(aug.row(x, at), sp * na + at) =
                        env.transition(env.row(s, a), sp);
            }
        }
    }
    return aug;
}

// Index of the turn state (s, b) in the TBMDP state space S x {0, 1}.
inline int turn_index(int s, int b) { return s * 2 + b; }

// Turn-based augmentation. A turn bit b alternates every step; the underlying
// state only advances on b = 1 steps and rewards are gated by b:
//   b=0: s frozen, b -> 1, reward 0
//   b=1: s' ~ p(.|s,a), b -> 0, reward r(s,a)
inline FiniteMdp tbmdp(const FiniteMdp& env) {
    int ns = env.num_states, na = env.num_actions;
    FiniteMdp aug;
    aug.num_states = ns * 2;
    aug.num_actions = na;
    aug.initial = VectorXd::Zero(aug.num_states);
    for (int s = 0; s < ns; ++s) aug.initial[turn_index(s, 0)] = env.initial[s];
    aug.transition = MatrixXd::Zero(aug.num_states * na, aug.num_states);
    aug.reward = MatrixXd::Zero(aug.num_states, na);
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            aug.transition(aug.row(turn_index(s, 0), a), turn_index(s, 1)) = 1.0;
            for (int sp = 0; sp < ns; ++sp)
                aug.transition(aug.row(turn_index(s, 1), a), turn_index(sp, 0)) =
                    env.transition(env.row(s, a), sp);
            aug.reward(turn_index(s, 1), a) = env.reward(s, a);
        }
    }
    return aug;
}

// Lifts a plain policy pi(a|s) of E to the augmented policy
// pitilde(a | s, b, a_prev) = pi(a|s) over the RTMRP(TBMDP(E)) state space.
inline TabularPolicy lift_policy_over_tbmdp(const FiniteMdp& env, const TabularPolicy& pi) {
    if (pi.num_conditions() != env.num_states)
        throw SpecError("lift_policy_over_tbmdp: plain policy expected");
    int ns = env.num_states, na = env.num_actions;
    TabularPolicy lifted;
    lifted.probs.resize(ns * 2 * na, na);
    for (int s = 0; s < ns; ++s)
        for (int b = 0; b < 2; ++b)
            for (int a = 0; a < na; ++a)
                lifted.probs.row(turn_index(s, b) * na + a) = pi.probs.row(s);
    return lifted;
}

}  // namespace rtrl
