#pragma once

#include "rtrl/envs.hpp"
#include "rtrl/network.hpp"
#include "rtrl/replay.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace rtrl {

// Defaults follow the standard SAC-style configuration.
struct Hyperparameters {
    double learning_rate = 0.0003;
    double gamma = 0.99;
    double tau = 0.005;
    double reward_scale = 5.0;
    double entropy_scale = 1.0;
    double beta = 0.2;  // actor-critic loss trade-off (RTAC)
    int batch_size = 256;
    int start_steps = 10000;  // uniform-random acting before training starts
    int grad_steps_per_env_step = 1;
    double popart_alpha = 0.0003;
    int hidden_layers = 2;
    int hidden_units = 256;
    int replay_capacity = 1'000'000;

    double temperature() const { return entropy_scale / reward_scale; }

    std::vector<int> hidden() const {
        return std::vector<int>(static_cast<std::size_t>(hidden_layers), hidden_units);
    }
};

struct Adam {
    VectorXd m, v;
    long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit Adam(int n) : m(VectorXd::Zero(n)), v(VectorXd::Zero(n)) {}

    void step(VectorXd& theta, const VectorXd& grad, double lr) {
        ++t;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
        theta -= (lr / c1) * m.cwiseQuotient(((v / c2).cwiseSqrt().array() + eps).matrix());
    }
};

// theta_bar <- tau * theta + (1 - tau) * theta_bar
inline void polyak_update(VectorXd& target, const VectorXd& online, double tau) {
    if (target.size() != online.size()) throw SpecError("polyak_update: layout mismatch");
    target = tau * online + (1.0 - tau) * target;
}

struct LossStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
};

namespace detail {

// Batched plain-Eigen squashed-Gaussian sample from policy head outputs
// (2*da x B: means stacked over log-stds). Returns actions and log densities.
struct BatchSample {
    MatrixXd pre;     // da x B
    MatrixXd action;  // da x B
    VectorXd logp;    // B
};

inline BatchSample squash_sample(const MatrixXd& head, const MatrixXd& eps) {
    int da = static_cast<int>(eps.rows()), b = static_cast<int>(eps.cols());
    BatchSample out;
    MatrixXd mean = head.topRows(da);
    MatrixXd log_std = head.bottomRows(da).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    out.pre = mean + log_std.array().exp().matrix().cwiseProduct(eps);
    out.action = out.pre.array().tanh().matrix();
    out.logp.resize(b);
    for (int j = 0; j < b; ++j) {
        double lp = 0.0;
        for (int i = 0; i < da; ++i) {
            double y = out.pre(i, j);
            double sp = std::max(-2.0 * y, 0.0) + std::log1p(std::exp(-std::abs(2.0 * y)));
            lp += -0.5 * eps(i, j) * eps(i, j) - log_std(i, j) - kHalfLog2Pi;
            lp -= 2.0 * (std::log(2.0) - y - sp);
        }
        out.logp[j] = lp;
    }
    return out;
}

inline MatrixXd draw_noise(int rows, int cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd eps(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) eps(i, j) = normal(rng);
    return eps;
}

}  // namespace detail

// --- loss graphs (shared between agents and the gradient test harness) ---

// Fixed inputs of one RTAC gradient step. `targets_norm` are the Pop-Art
// normalized regression targets (computed without gradients).
struct RtacBatchData {
    MatrixXd obs;                      // obs_dim x B, augmented (s, a)
    MatrixXd next_state;               // (obs_dim - action_dim) x B, stored s'
    Eigen::RowVectorXd targets_norm;   // 1 x B
    Eigen::RowVectorXd not_terminal;   // 1 x B
    MatrixXd eps;                      // action_dim x B policy noise
};

struct RtacModel {
    Layout layout;
    bool merged = true;
    int action_dim = 0;
    double alpha = 0.2;  // temperature
    double gamma = 0.99;
    double beta = 0.2;
};

struct LossVars {
    ad::Tape::Var policy;
    ad::Tape::Var value;
    ad::Tape::Var total;
};

// Builds the RTAC losses on `tape` (whose parameter vector carries gradients).
// The critic evaluated at (s', a~) inside the policy loss reads its weights
// from `frozen` so the policy gradient flows only through the emitted action.
inline LossVars build_rtac_losses(ad::Tape& tape, const RtacModel& m, const PopArtState& pa,
                                  const VectorXd& frozen, const RtacBatchData& d) {
    int da = m.action_dim;
    ad::Tape::Var obs_v = tape.constant(d.obs, "obs");
    ad::Tape::Var mean_v, log_std_v, v_norm;
    if (m.merged) {
        const auto& e = m.layout.entries[0];
        ad::Tape::Var trunk = mlp_forward(tape, e.spec, e.offset, obs_v);
        mean_v = tape.rows(trunk, 0, da);
        log_std_v = tape.rows(trunk, da, da);
        v_norm = tape.rows(trunk, 2 * da, 2);
    } else {
        const auto& p = m.layout.find("policy");
        const auto& v = m.layout.find("value");
        ad::Tape::Var pol = mlp_forward(tape, p.spec, p.offset, obs_v);
        mean_v = tape.rows(pol, 0, da);
        log_std_v = tape.rows(pol, da, da);
        v_norm = mlp_forward(tape, v.spec, v.offset, obs_v);
    }

    ad::Tape::Var targets_c = tape.constant(d.targets_norm.replicate(2, 1), "targets");
    LossVars out;
    out.value = tape.mean(tape.square(tape.sub(v_norm, targets_c)));

    PolicyHeadVars sample = policy_sample_tape(tape, mean_v, log_std_v, d.eps);
    ad::Tape::Var next_in = tape.vcat(tape.constant(d.next_state, "next_state"), sample.action);
    ad::Tape::Var v_next;
    if (m.merged) {
        const auto& e = m.layout.entries[0];
        ad::Tape::Var det = mlp_forward(tape, e.spec, e.offset, next_in, &frozen);
        v_next = tape.rows(det, 2 * da, 2);
    } else {
        const auto& v = m.layout.find("value");
        v_next = mlp_forward(tape, v.spec, v.offset, next_in, &frozen);
    }
    ad::Tape::Var v_min = tape.add_scalar(
        tape.scale(tape.cwise_min(tape.rows(v_next, 0, 1), tape.rows(v_next, 1, 1)), pa.scale),
        pa.mean);
    ad::Tape::Var mask = tape.constant(d.not_terminal, "not_terminal");
    out.policy = tape.mean(tape.sub(tape.scale(sample.log_density, m.alpha),
                                    tape.scale(tape.mul(mask, v_min), m.gamma)));
    out.total = tape.add(tape.scale(out.policy, m.beta), tape.scale(out.value, 1.0 - m.beta));
    return out;
}

struct SacBatchData {
    MatrixXd obs;                     // obs_dim x B
    MatrixXd actions;                 // action_dim x B, stored actions
    Eigen::RowVectorXd targets_norm;  // 1 x B
    MatrixXd eps;                     // action_dim x B policy noise
};

struct SacModel {
    Layout layout;
    int action_dim = 0;
    double alpha = 0.2;
};

inline LossVars build_sac_losses(ad::Tape& tape, const SacModel& m, const PopArtState& pa,
                                 const VectorXd& frozen, const SacBatchData& d) {
    int da = m.action_dim;
    const auto& actor = m.layout.find("actor");
    const auto& q1 = m.layout.find("q1");
    const auto& q2 = m.layout.find("q2");

    ad::Tape::Var obs_c = tape.constant(d.obs, "obs");
    MatrixXd qin(d.obs.rows() + da, d.obs.cols());
    qin << d.obs, d.actions;
    ad::Tape::Var qin_c = tape.constant(qin, "q_input");
    ad::Tape::Var q1_v = mlp_forward(tape, q1.spec, q1.offset, qin_c);
    ad::Tape::Var q2_v = mlp_forward(tape, q2.spec, q2.offset, qin_c);
    ad::Tape::Var targets_c = tape.constant(d.targets_norm, "targets");
    LossVars out;
    out.value = tape.scale(tape.add(tape.mean(tape.square(tape.sub(q1_v, targets_c))),
                                    tape.mean(tape.square(tape.sub(q2_v, targets_c)))),
                           0.5);

    ad::Tape::Var head = mlp_forward(tape, actor.spec, actor.offset, obs_c);
    PolicyHeadVars sample = policy_sample_tape(tape, tape.rows(head, 0, da),
                                               tape.rows(head, da, da), d.eps);
    ad::Tape::Var pol_in = tape.vcat(obs_c, sample.action);
    ad::Tape::Var q1_pi = mlp_forward(tape, q1.spec, q1.offset, pol_in, &frozen);
    ad::Tape::Var q2_pi = mlp_forward(tape, q2.spec, q2.offset, pol_in, &frozen);
    ad::Tape::Var q_min =
        tape.add_scalar(tape.scale(tape.cwise_min(q1_pi, q2_pi), pa.scale), pa.mean);
    out.policy = tape.mean(tape.sub(tape.scale(sample.log_density, m.alpha), q_min));
    out.total = tape.add(out.policy, out.value);
    return out;
}

// --- agents ---

class Agent {
  public:
    virtual ~Agent() = default;
    virtual VectorXd act(const VectorXd& obs, bool deterministic, Rng& rng) = 0;
    virtual void observe(ReplayRecord record) = 0;
    virtual LossStats update() = 0;  // one gradient step + target tracking
    virtual const PopArtState& popart() const = 0;
    virtual const Layout& layout() const = 0;
    virtual const VectorXd& parameters() const = 0;
    virtual const Hyperparameters& hyper() const = 0;
    virtual bool ready() const = 0;
};

// Real-Time Actor-Critic: state-value critic over augmented states, merged
// (shared trunk) or separate actor/critic networks, twin value heads with
// Pop-Art normalization and slowly tracking target weights.
class RtacAgent : public Agent {
  public:
    RtacAgent(int obs_dim, int action_dim, Hyperparameters hp, std::uint64_t seed,
              bool merged = true)
        : obs_dim_(obs_dim),
          action_dim_(action_dim),
          hp_(hp),
          merged_(merged),
          replay_(static_cast<std::size_t>(hp.replay_capacity)),
          rng_(make_rng(seed, 3)) {
        if (merged_) {
            layout_.add("trunk", MlpSpec{obs_dim_, hp_.hidden(), 2 * action_dim_ + 2});
        } else {
            layout_.add("policy", MlpSpec{obs_dim_, hp_.hidden(), 2 * action_dim_});
            layout_.add("value", MlpSpec{obs_dim_, hp_.hidden(), 2});
        }
        theta_ = VectorXd::Zero(layout_.total);
        Rng init_rng = make_rng(seed, 4);
        for (const auto& e : layout_.entries) init_mlp(theta_, e.spec, e.offset, init_rng);
        theta_bar_ = theta_;
        popart_.alpha = hp_.popart_alpha;
        adam_ = std::make_unique<Adam>(layout_.total);
    }

    VectorXd act(const VectorXd& obs, bool deterministic, Rng& rng) override {
        MatrixXd head = policy_heads_eval(theta_, obs);
        if (deterministic) return head.col(0).head(action_dim_).array().tanh().matrix();
        MatrixXd eps = detail::draw_noise(action_dim_, 1, rng);
        return detail::squash_sample(head, eps).action.col(0);
    }

    void observe(ReplayRecord record) override { replay_.push(std::move(record)); }
    bool ready() const override {
        return replay_.size() >= static_cast<std::size_t>(hp_.batch_size);
    }

    // One value target: r + gamma (1-terminal) E_{a~ ~ pi~(.|s,a)}
    // [vbar_min((s', a~)) - alpha log pi~(a~|s,a)], one reparameterized sample.
    double value_target(const ReplayRecord& record, const MatrixXd& eps) const {
        MatrixXd head = policy_heads_eval(theta_, record.obs);
        detail::BatchSample s = detail::squash_sample(head, eps);
        VectorXd next_aug(obs_dim_);
        next_aug << record.next_obs.head(obs_dim_ - action_dim_), s.action.col(0);
        MatrixXd vbar = value_heads_eval(theta_bar_, next_aug);
        double vmin = popart_denormalize(popart_, std::min(vbar(0, 0), vbar(1, 0)));
        if (record.terminal) return record.reward;
        return record.reward + hp_.gamma * (vmin - hp_.temperature() * s.logp[0]);
    }

    LossStats update() override {
        if (!ready()) return {};
        int b = hp_.batch_size;
        auto batch = replay_.sample_batch(static_cast<std::size_t>(b), rng_);
        int ds = obs_dim_ - action_dim_;

        RtacBatchData data;
        data.obs.resize(obs_dim_, b);
        data.next_state.resize(ds, b);
        data.not_terminal.resize(b);
        VectorXd rewards(b);
        for (int j = 0; j < b; ++j) {
            data.obs.col(j) = batch[j]->obs;
            data.next_state.col(j) = batch[j]->next_obs.head(ds);
            rewards[j] = batch[j]->reward;
            data.not_terminal[j] = batch[j]->terminal ? 0.0 : 1.0;
        }

        // targets in de-normalized units, then Pop-Art statistics + rescale
        MatrixXd head_now = policy_heads_eval(theta_, data.obs);
        MatrixXd eps_t = detail::draw_noise(action_dim_, b, rng_);
        detail::BatchSample resampled = detail::squash_sample(head_now, eps_t);
        MatrixXd next_aug(obs_dim_, b);
        next_aug << data.next_state, resampled.action;
        MatrixXd vbar = value_heads_eval(theta_bar_, next_aug);
        std::vector<double> targets(static_cast<std::size_t>(b));
        double alpha = hp_.temperature();
        for (int j = 0; j < b; ++j) {
            double vmin = popart_denormalize(popart_, std::min(vbar(0, j), vbar(1, j)));
            targets[static_cast<std::size_t>(j)] =
                rewards[j] + hp_.gamma * data.not_terminal[j] * (vmin - alpha * resampled.logp[j]);
        }
        popart_update(popart_, targets, value_head_refs(), {&theta_, &theta_bar_});
        data.targets_norm.resize(b);
        for (int j = 0; j < b; ++j)
            data.targets_norm[j] = popart_normalize(popart_, targets[static_cast<std::size_t>(j)]);
        data.eps = detail::draw_noise(action_dim_, b, rng_);

        ad::Tape tape(&theta_);
        LossVars losses = build_rtac_losses(tape, model(), popart_, theta_, data);
        tape.backward(losses.total);
        adam_->step(theta_, tape.grad, hp_.learning_rate);
        polyak_update(theta_bar_, theta_, hp_.tau);
        return {tape.scalar(losses.policy), tape.scalar(losses.value)};
    }

    RtacModel model() const {
        return {layout_, merged_, action_dim_, hp_.temperature(), hp_.gamma, hp_.beta};
    }

    const PopArtState& popart() const override { return popart_; }
    const Layout& layout() const override { return layout_; }
    const VectorXd& parameters() const override { return theta_; }
    const VectorXd& target_parameters() const { return theta_bar_; }
    const Hyperparameters& hyper() const override { return hp_; }
    bool merged() const { return merged_; }

    MatrixXd policy_heads_eval(const VectorXd& params, const MatrixXd& obs) const {
        const auto& e = merged_ ? layout_.entries[0] : layout_.find("policy");
        return MatrixXd(mlp_eval(params, e.spec, e.offset, obs).topRows(2 * action_dim_));
    }

    MatrixXd value_heads_eval(const VectorXd& params, const MatrixXd& obs) const {
        if (merged_) {
            const auto& e = layout_.entries[0];
            return MatrixXd(mlp_eval(params, e.spec, e.offset, obs).middleRows(2 * action_dim_, 2));
        }
        const auto& e = layout_.find("value");
        return mlp_eval(params, e.spec, e.offset, obs);
    }

  private:
    std::vector<ValueHeadRef> value_head_refs() const {
        if (merged_) {
            const auto& e = layout_.entries[0];
            return {{e.spec, e.offset, 2 * action_dim_}, {e.spec, e.offset, 2 * action_dim_ + 1}};
        }
        const auto& e = layout_.find("value");
        return {{e.spec, e.offset, 0}, {e.spec, e.offset, 1}};
    }

    int obs_dim_, action_dim_;
    Hyperparameters hp_;
    bool merged_;
    Layout layout_;
    VectorXd theta_, theta_bar_;
    PopArtState popart_;
    std::unique_ptr<Adam> adam_;
    ReplayMemory replay_;
    Rng rng_;
};

// Soft Actor-Critic baseline with twin q-critics, Pop-Art on the critic
// outputs and target critics. Runs on plain or real-time-wrapped envs alike;
// in the latter case the critic must learn the action pass-through from data.
class SacAgent : public Agent {
  public:
    SacAgent(int obs_dim, int action_dim, Hyperparameters hp, std::uint64_t seed)
        : obs_dim_(obs_dim),
          action_dim_(action_dim),
          hp_(hp),
          replay_(static_cast<std::size_t>(hp.replay_capacity)),
          rng_(make_rng(seed, 3)) {
        layout_.add("actor", MlpSpec{obs_dim_, hp_.hidden(), 2 * action_dim_});
        layout_.add("q1", MlpSpec{obs_dim_ + action_dim_, hp_.hidden(), 1});
        layout_.add("q2", MlpSpec{obs_dim_ + action_dim_, hp_.hidden(), 1});
        theta_ = VectorXd::Zero(layout_.total);
        Rng init_rng = make_rng(seed, 4);
        for (const auto& e : layout_.entries) init_mlp(theta_, e.spec, e.offset, init_rng);
        theta_bar_ = theta_;
        popart_.alpha = hp_.popart_alpha;
        adam_ = std::make_unique<Adam>(layout_.total);
    }

    VectorXd act(const VectorXd& obs, bool deterministic, Rng& rng) override {
        const auto& e = layout_.find("actor");
        MatrixXd head = mlp_eval(theta_, e.spec, e.offset, obs);
        if (deterministic) return head.col(0).head(action_dim_).array().tanh().matrix();
        MatrixXd eps = detail::draw_noise(action_dim_, 1, rng);
        return detail::squash_sample(head, eps).action.col(0);
    }

    void observe(ReplayRecord record) override { replay_.push(std::move(record)); }
    bool ready() const override {
        return replay_.size() >= static_cast<std::size_t>(hp_.batch_size);
    }

    // r + gamma (1-terminal) [qbar_min(x', a~') - alpha log pi(a~'|x')]
    double q_target(const ReplayRecord& record, const MatrixXd& eps) const {
        const auto& actor = layout_.find("actor");
        MatrixXd head = mlp_eval(theta_, actor.spec, actor.offset, record.next_obs);
        detail::BatchSample s = detail::squash_sample(head, eps);
        VectorXd qin(obs_dim_ + action_dim_);
        qin << record.next_obs, s.action.col(0);
        const auto& q1 = layout_.find("q1");
        const auto& q2 = layout_.find("q2");
        double b1 = mlp_eval(theta_bar_, q1.spec, q1.offset, qin)(0, 0);
        double b2 = mlp_eval(theta_bar_, q2.spec, q2.offset, qin)(0, 0);
        double qmin = popart_denormalize(popart_, std::min(b1, b2));
        if (record.terminal) return record.reward;
        return record.reward + hp_.gamma * (qmin - hp_.temperature() * s.logp[0]);
    }

    LossStats update() override {
        if (!ready()) return {};
        int b = hp_.batch_size;
        auto batch = replay_.sample_batch(static_cast<std::size_t>(b), rng_);

        SacBatchData data;
        data.obs.resize(obs_dim_, b);
        data.actions.resize(action_dim_, b);
        MatrixXd next_obs(obs_dim_, b);
        VectorXd rewards(b), not_terminal(b);
        for (int j = 0; j < b; ++j) {
            data.obs.col(j) = batch[j]->obs;
            data.actions.col(j) = batch[j]->action;
            next_obs.col(j) = batch[j]->next_obs;
            rewards[j] = batch[j]->reward;
            not_terminal[j] = batch[j]->terminal ? 0.0 : 1.0;
        }

        const auto& actor = layout_.find("actor");
        const auto& q1 = layout_.find("q1");
        const auto& q2 = layout_.find("q2");
        MatrixXd next_head = mlp_eval(theta_, actor.spec, actor.offset, next_obs);
        MatrixXd eps_t = detail::draw_noise(action_dim_, b, rng_);
        detail::BatchSample next_sample = detail::squash_sample(next_head, eps_t);
        MatrixXd next_in(obs_dim_ + action_dim_, b);
        next_in << next_obs, next_sample.action;
        MatrixXd qb1 = mlp_eval(theta_bar_, q1.spec, q1.offset, next_in);
        MatrixXd qb2 = mlp_eval(theta_bar_, q2.spec, q2.offset, next_in);
        std::vector<double> targets(static_cast<std::size_t>(b));
        double alpha = hp_.temperature();
        for (int j = 0; j < b; ++j) {
            double qmin = popart_denormalize(popart_, std::min(qb1(0, j), qb2(0, j)));
            targets[static_cast<std::size_t>(j)] =
                rewards[j] + hp_.gamma * not_terminal[j] * (qmin - alpha * next_sample.logp[j]);
        }
        popart_update(popart_, targets, {{q1.spec, q1.offset, 0}, {q2.spec, q2.offset, 0}},
                      {&theta_, &theta_bar_});
        data.targets_norm.resize(b);
        for (int j = 0; j < b; ++j)
            data.targets_norm[j] = popart_normalize(popart_, targets[static_cast<std::size_t>(j)]);
        data.eps = detail::draw_noise(action_dim_, b, rng_);

        ad::Tape tape(&theta_);
        LossVars losses = build_sac_losses(tape, model(), popart_, theta_, data);
        tape.backward(losses.total);
        adam_->step(theta_, tape.grad, hp_.learning_rate);
        polyak_update(theta_bar_, theta_, hp_.tau);
        return {tape.scalar(losses.policy), tape.scalar(losses.value)};
    }

    SacModel model() const { return {layout_, action_dim_, hp_.temperature()}; }

    const PopArtState& popart() const override { return popart_; }
    const Layout& layout() const override { return layout_; }
    const VectorXd& parameters() const override { return theta_; }
    const VectorXd& target_parameters() const { return theta_bar_; }
    const Hyperparameters& hyper() const override { return hp_; }

  private:
    int obs_dim_, action_dim_;
    Hyperparameters hp_;
    Layout layout_;
    VectorXd theta_, theta_bar_;
    PopArtState popart_;
    std::unique_ptr<Adam> adam_;
    ReplayMemory replay_;
    Rng rng_;
};

// --- training loop ---

struct EvalPoint {
    long step = 0;
    double episode_return = 0.0;  // undiscounted, unscaled
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double popart_mean = 0.0;
    double popart_scale = 1.0;
    double wall_time = 0.0;  // seconds since training started
};

struct TrainResult {
    std::vector<EvalPoint> curve;
    bool aborted = false;
    std::string abort_reason;
};

struct TrainOptions {
    long total_steps = 50'000;
    int eval_interval = 1000;
    int eval_episodes = 4;
};

// Evaluation episodes use the deterministic (tanh-mean) policy and report the
// mean undiscounted raw return.
inline double evaluate(Agent& agent, ContinuousEnv& env, int episodes, Rng& rng) {
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) {
        VectorXd obs = env.reset(rng);
        bool done = false;
        while (!done) {
            StepResult r = env.step(agent.act(obs, true, rng), rng);
            total += r.reward;
            obs = r.obs;
            done = r.terminal;
        }
    }
    return total / episodes;
}

inline TrainResult train(Agent& agent, ContinuousEnv& env, ContinuousEnv& eval_env,
                         const TrainOptions& opt, std::uint64_t seed,
                         const std::function<void(const EvalPoint&)>& on_eval = {}) {
    const Hyperparameters& hp = agent.hyper();
    TrainResult result;
    Rng env_rng = make_rng(seed, 1);
    Rng act_rng = make_rng(seed, 2);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    auto started = std::chrono::steady_clock::now();

    VectorXd obs = env.reset(env_rng);
    LossStats last_losses;
    for (long t = 1; t <= opt.total_steps; ++t) {
        VectorXd action(env.action_dim());
        if (t <= hp.start_steps) {
            for (int i = 0; i < action.size(); ++i) action[i] = unif(act_rng);
        } else {
            action = agent.act(obs, false, act_rng);
        }
        StepResult r = env.step(action, env_rng);
        agent.observe({obs, action, r.reward * hp.reward_scale, r.obs, r.terminal});
        obs = r.terminal ? env.reset(env_rng) : r.obs;

        if (t > hp.start_steps) {
            for (int g = 0; g < hp.grad_steps_per_env_step; ++g) last_losses = agent.update();
            if (!std::isfinite(last_losses.policy_loss) ||
                !std::isfinite(last_losses.value_loss)) {
                result.aborted = true;
                result.abort_reason = "non-finite loss at step " + std::to_string(t);
                return result;
            }
        }

        if (t % opt.eval_interval == 0) {
            Rng eval_rng = make_rng(seed, 1000 + static_cast<std::uint64_t>(t));
            EvalPoint point;
            point.step = t;
            point.episode_return = evaluate(agent, eval_env, opt.eval_episodes, eval_rng);
            point.policy_loss = last_losses.policy_loss;
            point.value_loss = last_losses.value_loss;
            point.popart_mean = agent.popart().mean;
            point.popart_scale = agent.popart().scale;
            point.wall_time =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            result.curve.push_back(point);
            if (on_eval) on_eval(point);
        }
    }
    return result;
}

}  // namespace rtrl
