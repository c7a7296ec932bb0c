#pragma once

#include "rtrl/common.hpp"
#include "rtrl/mdp.hpp"

#include <memory>

namespace rtrl {

// Seeded random finite MDP: transition rows from a symmetric Dirichlet with
// concentration 1, rewards uniform in [reward_min, reward_max].
inline FiniteMdp random_finite_mdp(std::uint64_t seed, int num_states, int num_actions,
                                   double reward_min = -1.0, double reward_max = 1.0) {
    if (num_states < 1 || num_actions < 1)
        throw SpecError("random_finite_mdp: need at least one state and action");
    Rng rng = make_rng(seed, 17);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_real_distribution<double> unif(reward_min, reward_max);
    auto dirichlet_row = [&](int n) {
        VectorXd row(n);
        for (int i = 0; i < n; ++i) row[i] = expo(rng);
        return VectorXd(row / row.sum());
    };
    FiniteMdp env;
    env.num_states = num_states;
    env.num_actions = num_actions;
    env.initial = dirichlet_row(num_states);
    env.transition.resize(num_states * num_actions, num_states);
    for (int i = 0; i < env.transition.rows(); ++i)
        env.transition.row(i) = dirichlet_row(num_states).transpose();
    env.reward.resize(num_states, num_actions);
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) env.reward(s, a) = unif(rng);
    env.validate();
    return env;
}

// Random augmented policy pitilde(atilde | s, a) with Dirichlet rows.
inline TabularPolicy random_augmented_policy(std::uint64_t seed, int num_states,
                                             int num_actions) {
    Rng rng = make_rng(seed, 23);
    std::exponential_distribution<double> expo(1.0);
    TabularPolicy pi;
    pi.probs.resize(num_states * num_actions, num_actions);
    for (int i = 0; i < pi.probs.rows(); ++i) {
        VectorXd row(num_actions);
        for (int a = 0; a < num_actions; ++a) row[a] = expo(rng);
        pi.probs.row(i) = (row / row.sum()).transpose();
    }
    return pi;
}

inline TabularPolicy random_plain_policy(std::uint64_t seed, int num_states, int num_actions) {
    Rng rng = make_rng(seed, 29);
    std::exponential_distribution<double> expo(1.0);
    TabularPolicy pi;
    pi.probs.resize(num_states, num_actions);
    for (int i = 0; i < pi.probs.rows(); ++i) {
        VectorXd row(num_actions);
        for (int a = 0; a < num_actions; ++a) row[a] = expo(rng);
        pi.probs.row(i) = (row / row.sum()).transpose();
    }
    return pi;
}

// --- continuous simulators ---

struct StepResult {
    VectorXd obs;
    double reward = 0.0;
    bool terminal = false;
};

// Single-owner stateful simulator with box actions in [-1, 1]^d.
class ContinuousEnv {
  public:
    virtual ~ContinuousEnv() = default;
    virtual int obs_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual VectorXd reset(Rng& rng) = 0;
    virtual StepResult step(const VectorXd& action, Rng& rng) = 0;
};

// 2-D point mass pushed toward the origin. Reward is the negative distance
// to the goal after the move; episodes run a fixed number of steps.
struct PointMassConfig {
    int dims = 2;
    double gain = 0.1;
    double damping = 0.95;
    double noise_std = 0.005;
    int episode_length = 200;
};

class PointMassEnv : public ContinuousEnv {
  public:
    using Config = PointMassConfig;

    explicit PointMassEnv(Config cfg = {}) : cfg_(cfg) {}

    int obs_dim() const override { return 2 * cfg_.dims; }
    int action_dim() const override { return cfg_.dims; }
    int clip_warnings() const { return clip_warnings_; }
    const Config& config() const { return cfg_; }

    VectorXd reset(Rng& rng) override {
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        pos_.resize(cfg_.dims);
        vel_ = VectorXd::Zero(cfg_.dims);
        for (int i = 0; i < cfg_.dims; ++i) pos_[i] = unif(rng);
        steps_ = 0;
        return observation();
    }

    StepResult step(const VectorXd& action, Rng& rng) override {
        if (action.size() != cfg_.dims) throw SpecError("PointMassEnv: action dimension");
        VectorXd a = action.cwiseMax(-1.0).cwiseMin(1.0);
        if ((a - action).cwiseAbs().maxCoeff() > 0.0) ++clip_warnings_;
        std::normal_distribution<double> noise(0.0, cfg_.noise_std);
        vel_ = cfg_.damping * vel_ + cfg_.gain * a;
        if (cfg_.noise_std > 0.0)
            for (int i = 0; i < cfg_.dims; ++i) vel_[i] += noise(rng);
        pos_ = (pos_ + vel_).cwiseMax(-1.0).cwiseMin(1.0);
        ++steps_;
        StepResult out;
        out.obs = observation();
        out.reward = -pos_.norm();  // goal is the origin
        out.terminal = steps_ >= cfg_.episode_length;
        return out;
    }

  private:
    VectorXd observation() const {
        VectorXd obs(2 * cfg_.dims);
        obs << pos_, vel_;
        return obs;
    }

    Config cfg_;
    VectorXd pos_, vel_;
    int steps_ = 0;
    int clip_warnings_ = 0;
};

// Real-time wrapper (continuous counterpart of rtmdp): the emitted action
// only reaches the dynamics one step later; observations carry the action
// component of the augmented state.
class RealTimeEnv : public ContinuousEnv {
  public:
    explicit RealTimeEnv(std::unique_ptr<ContinuousEnv> inner, VectorXd initial_action = {})
        : inner_(std::move(inner)) {
        pending_ = initial_action.size() ? std::move(initial_action)
                                         : VectorXd::Zero(inner_->action_dim());
        if (pending_.size() != inner_->action_dim())
            throw SpecError("RealTimeEnv: initial action dimension");
        initial_action_ = pending_;
    }

    int obs_dim() const override { return inner_->obs_dim() + inner_->action_dim(); }
    int action_dim() const override { return inner_->action_dim(); }
    ContinuousEnv& inner() { return *inner_; }

    VectorXd reset(Rng& rng) override {
        pending_ = initial_action_;
        return augment(inner_->reset(rng), pending_);
    }

    StepResult step(const VectorXd& action, Rng& rng) override {
        // dynamics receive the stored action; the new one takes effect next step
        StepResult r = inner_->step(pending_, rng);
        pending_ = action;
        r.obs = augment(r.obs, action);
        return r;
    }

    static VectorXd augment(const VectorXd& obs, const VectorXd& action) {
        VectorXd out(obs.size() + action.size());
        out << obs, action;
        return out;
    }

  private:
    std::unique_ptr<ContinuousEnv> inner_;
    VectorXd pending_, initial_action_;
};

}  // namespace rtrl
