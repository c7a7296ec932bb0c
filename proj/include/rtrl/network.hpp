#pragma once

#include "rtrl/autodiff.hpp"
#include "rtrl/common.hpp"

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace rtrl {

// Fully connected network: affine layers with rectified-linear hidden units
// and a linear output layer.
struct MlpSpec {
    int input = 0;
    std::vector<int> hidden;
    int output = 0;

    std::vector<std::pair<int, int>> layer_shapes() const {  // (out, in) per affine layer
        std::vector<std::pair<int, int>> shapes;
        int in = input;
        for (int h : hidden) {
            shapes.emplace_back(h, in);
            in = h;
        }
        shapes.emplace_back(output, in);
        return shapes;
    }

    int param_count() const {
        int n = 0;
        for (auto [out, in] : layer_shapes()) n += out * in + out;
        return n;
    }

    bool operator==(const MlpSpec&) const = default;
};

// Offsets of one network's weights inside a flat parameter vector.
struct LayoutEntry {
    std::string name;
    MlpSpec spec;
    int offset = 0;

    bool operator==(const LayoutEntry& o) const = default;
};

struct Layout {
    std::vector<LayoutEntry> entries;
    int total = 0;

    int add(const std::string& name, const MlpSpec& spec) {
        entries.push_back({name, spec, total});
        total += spec.param_count();
        return entries.back().offset;
    }

    const LayoutEntry& find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw SpecError("Layout: no entry named " + name);
    }

    bool operator==(const Layout&) const = default;
};

// Weight/bias offsets of affine layer `layer` within an Mlp param block.
inline std::pair<int, int> affine_offsets(const MlpSpec& spec, int block_offset, int layer) {
    auto shapes = spec.layer_shapes();
    int off = block_offset;
    for (int l = 0; l < layer; ++l) off += shapes[l].first * shapes[l].second + shapes[l].first;
    return {off, off + shapes[layer].first * shapes[layer].second};
}

// Fan-in scaled uniform init, the torch.nn.Linear default.
inline void init_mlp(VectorXd& params, const MlpSpec& spec, int offset, Rng& rng) {
    auto shapes = spec.layer_shapes();
    int off = offset;
    for (auto [out, in] : shapes) {
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> unif(-bound, bound);
        for (int i = 0; i < out * in + out; ++i) params[off + i] = unif(rng);
        off += out * in + out;
    }
}

// Tape forward pass over a batch (columns). With `detached`, the weights are
// baked in as constants so no gradient flows into them.
inline ad::Tape::Var mlp_forward(ad::Tape& tape, const MlpSpec& spec, int offset,
                                 ad::Tape::Var input, const VectorXd* detached = nullptr) {
    auto shapes = spec.layer_shapes();
    ad::Tape::Var h = input;
    int off = offset;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        auto [out, in] = shapes[l];
        ad::Tape::Var w, b;
        if (detached) {
            w = tape.constant(Eigen::Map<const MatrixXd>(detached->data() + off, out, in), "W");
            b = tape.constant(Eigen::Map<const MatrixXd>(detached->data() + off + out * in, out, 1),
                              "b");
        } else {
            w = tape.param(off, out, in, "W");
            b = tape.param(off + out * in, out, 1, "b");
        }
        h = tape.add_col(tape.matmul(w, h), b);
        if (l + 1 < shapes.size()) h = tape.relu(h);
        off += out * in + out;
    }
    return h;
}

// Plain forward pass for acting and evaluation (no tape, no gradients).
inline MatrixXd mlp_eval(const VectorXd& params, const MlpSpec& spec, int offset,
                         const MatrixXd& input) {
    auto shapes = spec.layer_shapes();
    MatrixXd h = input;
    int off = offset;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        auto [out, in] = shapes[l];
        Eigen::Map<const MatrixXd> w(params.data() + off, out, in);
        Eigen::Map<const VectorXd> b(params.data() + off + out * in, out);
        h = ((w * h).colwise() + b).eval();
        if (l + 1 < shapes.size()) h = h.cwiseMax(0.0);
        off += out * in + out;
    }
    return h;
}

// --- checkpoint serialization: layout descriptor header + 64-bit weights ---

inline void save_checkpoint(const Layout& layout, const VectorXd& params, std::ostream& out) {
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    out.write("RTRLCKP1", 8);
    put_u32(static_cast<std::uint32_t>(layout.entries.size()));
    for (const auto& e : layout.entries) {
        put_u32(static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(static_cast<std::uint32_t>(e.spec.input));
        put_u32(static_cast<std::uint32_t>(e.spec.hidden.size()));
        for (int h : e.spec.hidden) put_u32(static_cast<std::uint32_t>(h));
        put_u32(static_cast<std::uint32_t>(e.spec.output));
    }
    put_u32(static_cast<std::uint32_t>(params.size()));
    out.write(reinterpret_cast<const char*>(params.data()),
              static_cast<std::streamsize>(params.size() * sizeof(double)));
}

inline std::pair<Layout, VectorXd> load_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "RTRLCKP1", 8) != 0)
        throw SpecError("load_checkpoint: bad magic");
    auto get_u32 = [&]() {
        std::uint32_t v;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (!in) throw SpecError("load_checkpoint: truncated header");
        return v;
    };
    Layout layout;
    std::uint32_t n_entries = get_u32();
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        std::uint32_t len = get_u32();
        std::string name(len, '\0');
        in.read(name.data(), len);
        MlpSpec spec;
        spec.input = static_cast<int>(get_u32());
        std::uint32_t nh = get_u32();
        for (std::uint32_t h = 0; h < nh; ++h) spec.hidden.push_back(static_cast<int>(get_u32()));
        spec.output = static_cast<int>(get_u32());
        layout.add(name, spec);
    }
    std::uint32_t total = get_u32();
    if (static_cast<int>(total) != layout.total)
        throw SpecError("load_checkpoint: weight count does not match layout");
    VectorXd params(total);
    in.read(reinterpret_cast<char*>(params.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!in) throw SpecError("load_checkpoint: truncated weights");
    return {layout, params};
}

// --- Pop-Art output normalization ---

// Running target statistics; de-normalized prediction is scale * out + mean.
struct PopArtState {
    double mean = 0.0;
    double second_moment = 1.0;
    double scale = 1.0;
    double alpha = 0.0003;
    double scale_floor = 1e-4;
};

// One value-head output row of a network's final affine layer.
struct ValueHeadRef {
    MlpSpec spec;
    int block_offset = 0;  // offset of the Mlp block in the flat vector
    int output_row = 0;    // which output row is the value head
};

// Updates the running statistics from a batch of (de-normalized) targets and
// rescales the listed head rows in every given parameter vector so that
// de-normalized predictions are preserved.
inline void popart_update(PopArtState& pa, const std::vector<double>& targets,
                          const std::vector<ValueHeadRef>& heads,
                          const std::vector<VectorXd*>& param_vectors) {
    if (targets.empty()) return;
    double m = 0.0, sq = 0.0;
    for (double t : targets) {
        if (!std::isfinite(t)) throw SpecError("popart_update: non-finite target");
        m += t;
        sq += t * t;
    }
    m /= static_cast<double>(targets.size());
    sq /= static_cast<double>(targets.size());

    double old_mean = pa.mean, old_scale = pa.scale;
    pa.mean = (1.0 - pa.alpha) * pa.mean + pa.alpha * m;
    pa.second_moment = (1.0 - pa.alpha) * pa.second_moment + pa.alpha * sq;
    double var = pa.second_moment - pa.mean * pa.mean;
    pa.scale = std::sqrt(std::max(var, pa.scale_floor * pa.scale_floor));

    double wf = old_scale / pa.scale;
    for (const auto& head : heads) {
        auto shapes = head.spec.layer_shapes();
        int last = static_cast<int>(shapes.size()) - 1;
        auto [w_off, b_off] = affine_offsets(head.spec, head.block_offset, last);
        auto [out, in] = shapes[last];
        for (VectorXd* params : param_vectors) {
            // column-major W (out x in): row stride is `out`
            for (int j = 0; j < in; ++j)
                (*params)[w_off + j * out + head.output_row] *= wf;
            double& b = (*params)[b_off + head.output_row];
            b = (old_scale * b + old_mean - pa.mean) / pa.scale;
        }
    }
}

inline double popart_denormalize(const PopArtState& pa, double normalized) {
    return pa.scale * normalized + pa.mean;
}

inline double popart_normalize(const PopArtState& pa, double denormalized) {
    return (denormalized - pa.mean) / pa.scale;
}

// --- squashed-Gaussian policy head ---

constexpr double kLogStdMin = -20.0;
constexpr double kLogStdMax = 2.0;
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)

// One reparameterized draw: a = tanh(mean + exp(log_std) * eps), with the
// tanh change-of-variables correction in the log density.
struct StochasticActionSample {
    VectorXd pre_squash;
    VectorXd action;
    double log_density = 0.0;
    VectorXd noise;
};

inline StochasticActionSample policy_sample(const VectorXd& mean, const VectorXd& log_std_raw,
                                            const VectorXd& eps) {
    StochasticActionSample out;
    out.noise = eps;
    VectorXd log_std = log_std_raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    out.pre_squash = mean + log_std.array().exp().matrix().cwiseProduct(eps);
    out.action = out.pre_squash.array().tanh().matrix();
    double logp = 0.0;
    for (int i = 0; i < mean.size(); ++i) {
        double y = out.pre_squash[i];
        // log N(y; mean, sigma) evaluated at the reparameterized point
        logp += -0.5 * eps[i] * eps[i] - log_std[i] - kHalfLog2Pi;
        // log(1 - tanh(y)^2) = 2 (ln 2 - y - softplus(-2y))
        double sp = std::max(-2.0 * y, 0.0) + std::log1p(std::exp(-std::abs(2.0 * y)));
        logp -= 2.0 * (std::log(2.0) - y - sp);
    }
    out.log_density = logp;
    return out;
}

// Tape version over a batch. Returns (action, log-density row vector).
struct PolicyHeadVars {
    ad::Tape::Var pre_squash;
    ad::Tape::Var action;
    ad::Tape::Var log_density;  // 1 x B
};

inline PolicyHeadVars policy_sample_tape(ad::Tape& tape, ad::Tape::Var mean,
                                         ad::Tape::Var log_std_raw, const MatrixXd& eps) {
    ad::Tape::Var log_std = tape.clamp(log_std_raw, kLogStdMin, kLogStdMax);
    ad::Tape::Var eps_c = tape.constant(eps, "eps");
    ad::Tape::Var pre = tape.add(mean, tape.mul(tape.exp(log_std), eps_c));
    PolicyHeadVars out;
    out.pre_squash = pre;
    out.action = tape.tanh(pre);
    // per-dimension terms, then summed over rows
    ad::Tape::Var gauss = tape.sub(
        tape.constant((-0.5 * eps.array().square() - kHalfLog2Pi).matrix(), "gauss_const"),
        log_std);
    ad::Tape::Var sp = tape.softplus(tape.scale(pre, -2.0));
    ad::Tape::Var corr =  // -log(1 - a^2) = 2 (y + softplus(-2y) - ln 2)
        tape.scale(tape.add_scalar(tape.add(pre, sp), -std::log(2.0)), 2.0);
    out.log_density = tape.colsum(tape.add(gauss, corr));
    return out;
}

}  // namespace rtrl
