#pragma once

#include "rtrl/agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace rtrl {

namespace fs = std::filesystem;

#ifndef RTRL_VERSION
#define RTRL_VERSION "0.1.0"
#endif

// Flat dotted-key configuration with Table-style defaults. Unknown keys are
// rejected; `code.version` is accepted (manifests are themselves valid
// configs) but informational.
struct ExperimentConfig {
    std::string agent_kind = "rtac";      // rtac | rtac-separate | sac
    std::string env_kind = "point-mass";  // point-mass
    std::string env_wrap = "plain";       // plain | rtmdp
    PointMassConfig env;
    Hyperparameters hp;
    std::vector<std::uint64_t> seeds = {0};
    long total_steps = 50'000;
    int eval_interval = 1000;
    int eval_episodes = 4;
    std::string out_dir = "runs/default";

    void validate() const {
        if (agent_kind != "rtac" && agent_kind != "rtac-separate" && agent_kind != "sac")
            throw SpecError("config: agent.kind must be rtac, rtac-separate or sac (got '" +
                            agent_kind + "')");
        if (env_kind != "point-mass")
            throw SpecError("config: env.kind must be point-mass (got '" + env_kind + "')");
        if (env_wrap != "plain" && env_wrap != "rtmdp")
            throw SpecError("config: env.wrap must be plain or rtmdp (got '" + env_wrap + "')");
        if (seeds.empty()) throw SpecError("config: seeds must be nonempty");
        if (total_steps < 1 || eval_interval < 1 || eval_episodes < 1)
            throw SpecError("config: steps, eval.interval and eval.episodes must be positive");
    }

    void set(const std::string& key, const std::string& value) {
        auto as_double = [&] {
            try {
                std::size_t pos = 0;
                double v = std::stod(value, &pos);
                if (pos != value.size()) throw std::invalid_argument("trailing characters");
                return v;
            } catch (const std::exception&) {
                throw SpecError("config: bad number '" + value + "' for " + key);
            }
        };
        auto as_int = [&] { return static_cast<long>(as_double()); };
        if (key == "agent.kind") agent_kind = value;
        else if (key == "env.kind") env_kind = value;
        else if (key == "env.wrap") env_wrap = value;
        else if (key == "env.dims") env.dims = static_cast<int>(as_int());
        else if (key == "env.gain") env.gain = as_double();
        else if (key == "env.damping") env.damping = as_double();
        else if (key == "env.noise_std") env.noise_std = as_double();
        else if (key == "env.episode_length") env.episode_length = static_cast<int>(as_int());
        else if (key == "hp.learning_rate") hp.learning_rate = as_double();
        else if (key == "hp.gamma") hp.gamma = as_double();
        else if (key == "hp.tau") hp.tau = as_double();
        else if (key == "hp.reward_scale") hp.reward_scale = as_double();
        else if (key == "hp.entropy_scale") hp.entropy_scale = as_double();
        else if (key == "hp.beta") hp.beta = as_double();
        else if (key == "hp.batch_size") hp.batch_size = static_cast<int>(as_int());
        else if (key == "hp.start_steps") hp.start_steps = static_cast<int>(as_int());
        else if (key == "hp.grad_steps") hp.grad_steps_per_env_step = static_cast<int>(as_int());
        else if (key == "hp.popart_alpha") hp.popart_alpha = as_double();
        else if (key == "hp.hidden_layers") hp.hidden_layers = static_cast<int>(as_int());
        else if (key == "hp.hidden_units") hp.hidden_units = static_cast<int>(as_int());
        else if (key == "hp.replay_capacity") hp.replay_capacity = static_cast<int>(as_int());
        else if (key == "seeds") {
            seeds.clear();
            std::stringstream ss(value);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (tok.empty()) continue;
                try {
                    seeds.push_back(std::stoull(tok));
                } catch (const std::exception&) {
                    throw SpecError("config: bad seed '" + tok + "'");
                }
            }
        } else if (key == "steps") total_steps = as_int();
        else if (key == "eval.interval") eval_interval = static_cast<int>(as_int());
        else if (key == "eval.episodes") eval_episodes = static_cast<int>(as_int());
        else if (key == "out") out_dir = value;
        else if (key == "code.version") {}  // informational, written by run()
        else throw SpecError("config: unknown key '" + key + "'");
    }

    static ExperimentConfig parse(std::istream& in) {
        ExperimentConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            auto last = line.find_last_not_of(" \t\r");
            line = line.substr(first, last - first + 1);
            std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw SpecError("config line " + std::to_string(lineno) + ": expected key=value");
            auto strip = [](std::string s) {
                auto a = s.find_first_not_of(" \t");
                auto b = s.find_last_not_of(" \t");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            cfg.set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
        }
        cfg.validate();
        return cfg;
    }

    static ExperimentConfig parse_file(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw SpecError("config: cannot open " + path.string());
        return parse(in);
    }

    // Fully resolved key=value dump; a valid config file in its own right.
    void serialize(std::ostream& out) const {
        char buf[64];
        auto num = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return std::string(buf);
        };
        out << "agent.kind=" << agent_kind << "\n";
        out << "env.kind=" << env_kind << "\n";
        out << "env.wrap=" << env_wrap << "\n";
        out << "env.dims=" << env.dims << "\n";
        out << "env.gain=" << num(env.gain) << "\n";
        out << "env.damping=" << num(env.damping) << "\n";
        out << "env.noise_std=" << num(env.noise_std) << "\n";
        out << "env.episode_length=" << env.episode_length << "\n";
        out << "hp.learning_rate=" << num(hp.learning_rate) << "\n";
        out << "hp.gamma=" << num(hp.gamma) << "\n";
        out << "hp.tau=" << num(hp.tau) << "\n";
        out << "hp.reward_scale=" << num(hp.reward_scale) << "\n";
        out << "hp.entropy_scale=" << num(hp.entropy_scale) << "\n";
        out << "hp.beta=" << num(hp.beta) << "\n";
        out << "hp.batch_size=" << hp.batch_size << "\n";
        out << "hp.start_steps=" << hp.start_steps << "\n";
        out << "hp.grad_steps=" << hp.grad_steps_per_env_step << "\n";
        out << "hp.popart_alpha=" << num(hp.popart_alpha) << "\n";
        out << "hp.hidden_layers=" << hp.hidden_layers << "\n";
        out << "hp.hidden_units=" << hp.hidden_units << "\n";
        out << "hp.replay_capacity=" << hp.replay_capacity << "\n";
        out << "seeds=";
        for (std::size_t i = 0; i < seeds.size(); ++i)
            out << seeds[i] << (i + 1 < seeds.size() ? "," : "");
        out << "\n";
        out << "steps=" << total_steps << "\n";
        out << "eval.interval=" << eval_interval << "\n";
        out << "eval.episodes=" << eval_episodes << "\n";
        out << "out=" << out_dir << "\n";
    }

    std::string condition_label() const {
        return agent_kind + "/" + (env_wrap == "rtmdp" ? "rtmdp(" + env_kind + ")" : env_kind);
    }

    std::unique_ptr<ContinuousEnv> make_env() const {
        std::unique_ptr<ContinuousEnv> e = std::make_unique<PointMassEnv>(env);
        if (env_wrap == "rtmdp") e = std::make_unique<RealTimeEnv>(std::move(e));
        return e;
    }

    std::unique_ptr<Agent> make_agent(std::uint64_t seed) const {
        auto probe = make_env();
        int od = probe->obs_dim(), ad = probe->action_dim();
        if (agent_kind == "sac") return std::make_unique<SacAgent>(od, ad, hp, seed);
        return std::make_unique<RtacAgent>(od, ad, hp, seed, agent_kind == "rtac");
    }
};

inline const char* kLogHeader =
    "step,episode_return,policy_loss,value_loss,popart_mean,popart_scale,wall_time";

struct RunOutcome {
    bool aborted = false;
    std::string abort_reason;
    fs::path directory;
    std::vector<fs::path> logs;
};

// One log + checkpoint per seed, plus a manifest with the resolved config.
inline RunOutcome run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    RunOutcome outcome;
    outcome.directory = cfg.out_dir;
    std::error_code ec;
    fs::create_directories(outcome.directory, ec);
    {
        std::ofstream manifest(outcome.directory / "manifest.txt");
        if (!manifest)
            throw SpecError("run: cannot write to output directory " + outcome.directory.string());
        manifest << "code.version=" << RTRL_VERSION << "\n";
        cfg.serialize(manifest);
    }

    for (std::uint64_t seed : cfg.seeds) {
        fs::path log_path = outcome.directory / ("seed_" + std::to_string(seed) + ".csv");
        std::ofstream log(log_path);
        log << kLogHeader << "\n";
        auto env = cfg.make_env();
        auto eval_env = cfg.make_env();
        auto agent = cfg.make_agent(seed);
        TrainOptions opt;
        opt.total_steps = cfg.total_steps;
        opt.eval_interval = cfg.eval_interval;
        opt.eval_episodes = cfg.eval_episodes;
        char buf[256];
        TrainResult result = train(*agent, *env, *eval_env, opt, seed, [&](const EvalPoint& p) {
            std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n", p.step,
                          p.episode_return, p.policy_loss, p.value_loss, p.popart_mean,
                          p.popart_scale, p.wall_time);
            log << buf;
        });
        outcome.logs.push_back(log_path);
        std::ofstream ckpt(outcome.directory / ("seed_" + std::to_string(seed) + ".ckpt"),
                           std::ios::binary);
        save_checkpoint(agent->layout(), agent->parameters(), ckpt);
        if (result.aborted) {
            outcome.aborted = true;
            outcome.abort_reason = "seed " + std::to_string(seed) + ": " + result.abort_reason;
            break;
        }
    }
    return outcome;
}

// Drops the trailing wall_time column from a csv log (the one column allowed
// to differ between reruns of the same manifest).
inline std::string strip_wall_time(const std::string& csv) {
    std::string out;
    std::stringstream ss(csv);
    std::string line;
    while (std::getline(ss, line)) {
        std::size_t comma = line.rfind(',');
        out += (comma == std::string::npos ? line : line.substr(0, comma)) + "\n";
    }
    return out;
}

// --- summaries ---

struct LearningCurve {
    std::vector<long> steps;
    std::vector<double> returns;
};

inline LearningCurve load_learning_curve(const fs::path& csv) {
    std::ifstream in(csv);
    if (!in) throw SpecError("summarize: cannot open " + csv.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("step,episode_return", 0) != 0)
        throw SpecError("summarize: " + csv.string() + " is not a learning-curve log");
    LearningCurve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');
        curve.steps.push_back(std::stol(tok));
        std::getline(ss, tok, ',');
        curve.returns.push_back(std::stod(tok));
    }
    return curve;
}

struct BandPoint {
    long step = 0;
    double mean = 0.0;
    double half_width = 0.0;  // 1.96 * sample std / sqrt(n)
};

// mean +/- 1.96 * std / sqrt(n) at one eval step (sample std, n-1 denominator)
inline BandPoint confidence_band(long step, const std::vector<double>& values) {
    BandPoint p;
    p.step = step;
    std::size_t n = values.size();
    if (n == 0) throw SpecError("confidence_band: no values");
    double sum = 0.0;
    for (double v : values) sum += v;
    p.mean = sum / static_cast<double>(n);
    if (n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - p.mean) * (v - p.mean);
        p.half_width = 1.96 * std::sqrt(ss / static_cast<double>(n - 1)) /
                       std::sqrt(static_cast<double>(n));
    }
    return p;
}

struct ConditionSummary {
    std::string label;
    std::string env_label;
    int num_seeds = 0;
    std::vector<BandPoint> band;
    std::vector<double> final_returns;  // per seed
    std::vector<double> auc;            // per seed, mean return over the grid
    double final_mean = 0.0, final_half = 0.0;
    double auc_mean = 0.0, auc_half = 0.0, auc_median = 0.0;
};

struct Summary {
    std::vector<ConditionSummary> conditions;
    std::vector<std::string> notes;
};

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Aggregates one run directory (one condition, several seeds) onto a common
// eval grid. Mismatched grids are resampled to the coarsest one.
inline Summary summarize_runs(const std::vector<fs::path>& dirs) {
    if (dirs.empty()) throw SpecError("summarize: need at least one run directory");
    Summary summary;
    for (const fs::path& dir : dirs) {
        ExperimentConfig cfg = ExperimentConfig::parse_file(dir / "manifest.txt");
        ConditionSummary cond;
        cond.label = cfg.condition_label();
        cond.env_label = cfg.env_kind;
        std::vector<LearningCurve> curves;
        for (std::uint64_t seed : cfg.seeds) {
            fs::path csv = dir / ("seed_" + std::to_string(seed) + ".csv");
            if (fs::exists(csv)) curves.push_back(load_learning_curve(csv));
        }
        if (curves.empty()) throw SpecError("summarize: no logs in " + dir.string());
        cond.num_seeds = static_cast<int>(curves.size());

        // coarsest grid = fewest eval points
        std::size_t coarse = 0;
        for (std::size_t i = 1; i < curves.size(); ++i)
            if (curves[i].steps.size() < curves[coarse].steps.size()) coarse = i;
        const std::vector<long>& grid = curves[coarse].steps;
        bool resampled = false;
        auto value_at = [&](const LearningCurve& c, long step) {
            // last eval at or before `step` (nearest-from-below resampling)
            auto it = std::upper_bound(c.steps.begin(), c.steps.end(), step);
            if (it == c.steps.begin()) return c.returns.front();
            std::size_t idx = static_cast<std::size_t>(it - c.steps.begin()) - 1;
            if (c.steps[idx] != step) resampled = true;
            return c.returns[idx];
        };
        for (long step : grid) {
            std::vector<double> vals;
            for (const auto& c : curves) vals.push_back(value_at(c, step));
            cond.band.push_back(confidence_band(step, vals));
        }
        if (resampled)
            summary.notes.push_back("note: " + dir.string() +
                                    " had mismatched eval grids; resampled to the coarsest grid");
        for (const auto& c : curves) {
            std::vector<double> vals;
            for (long step : grid) vals.push_back(value_at(c, step));
            cond.final_returns.push_back(vals.back());
            double s = 0.0;
            for (double v : vals) s += v;
            cond.auc.push_back(s / static_cast<double>(vals.size()));
        }
        BandPoint fin = confidence_band(grid.back(), cond.final_returns);
        cond.final_mean = fin.mean;
        cond.final_half = fin.half_width;
        BandPoint auc = confidence_band(0, cond.auc);
        cond.auc_mean = auc.mean;
        cond.auc_half = auc.half_width;
        cond.auc_median = median_of(cond.auc);
        summary.conditions.push_back(std::move(cond));
    }
    // rank by mean area-under-curve, best first
    std::stable_sort(summary.conditions.begin(), summary.conditions.end(),
                     [](const auto& a, const auto& b) { return a.auc_mean > b.auc_mean; });
    return summary;
}

inline void write_summary_table(const Summary& summary, std::ostream& out) {
    out << "condition                         seeds   final return (95% CI)      "
           "AUC return (95% CI)        AUC median\n";
    for (const auto& c : summary.conditions) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-32s %5d   %10.3f +/- %8.3f   %10.3f +/- %8.3f   %10.3f\n",
                      c.label.c_str(), c.num_seeds, c.final_mean, c.final_half, c.auc_mean,
                      c.auc_half, c.auc_median);
        out << buf;
    }
    for (const auto& n : summary.notes) out << n << "\n";
}

// Standalone vector plot: mean curve per condition with a shaded 95% band.
inline void write_summary_plot(const Summary& summary, const std::string& env_label,
                               std::ostream& out) {
    const int w = 720, h = 440, ml = 70, mr = 20, mt = 30, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    std::vector<const ConditionSummary*> conds;
    for (const auto& c : summary.conditions) {
        if (c.env_label != env_label) continue;
        conds.push_back(&c);
        for (const auto& p : c.band) {
            xmin = std::min(xmin, static_cast<double>(p.step));
            xmax = std::max(xmax, static_cast<double>(p.step));
            ymin = std::min(ymin, p.mean - p.half_width);
            ymax = std::max(ymax, p.mean + p.half_width);
        }
    }
    if (conds.empty()) return;
    if (ymax <= ymin) ymax = ymin + 1.0;
    if (xmax <= xmin) xmax = xmin + 1.0;
    double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
        << h - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double xv = xmin + (xmax - xmin) * i / 4.0, yv = ymin + (ymax - ymin) * i / 4.0;
        out << "<text x=\"" << px(xv) << "\" y=\"" << h - mb + 18
            << "\" font-size=\"11\" text-anchor=\"middle\">" << static_cast<long>(xv)
            << "</text>\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", yv);
        out << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
            << "\" font-size=\"11\" text-anchor=\"end\">" << buf << "</text>\n";
    }
    out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
        << "\" font-size=\"12\" text-anchor=\"middle\">environment steps</text>\n";
    out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << 18
        << "\" font-size=\"13\" text-anchor=\"middle\">" << env_label
        << ": evaluation return (mean, 95% CI)</text>\n";

    int ci = 0;
    for (const auto* c : conds) {
        const char* color = colors[ci % 5];
        out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
        for (const auto& p : c->band) out << px(p.step) << "," << py(p.mean + p.half_width) << " ";
        for (auto it = c->band.rbegin(); it != c->band.rend(); ++it)
            out << px(it->step) << "," << py(it->mean - it->half_width) << " ";
        out << "\"/>\n";
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : c->band) out << px(p.step) << "," << py(p.mean) << " ";
        out << "\"/>\n";
        out << "<text x=\"" << w - mr - 8 << "\" y=\"" << mt + 16 + 16 * ci << "\" font-size=\"12\""
            << " text-anchor=\"end\" fill=\"" << color << "\">" << c->label << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
}

inline void write_summary(const Summary& summary, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream table(out_dir / "summary.txt");
    write_summary_table(summary, table);
    std::vector<std::string> envs;
    for (const auto& c : summary.conditions)
        if (std::find(envs.begin(), envs.end(), c.env_label) == envs.end())
            envs.push_back(c.env_label);
    for (const auto& env : envs) {
        std::ofstream plot(out_dir / ("plot_" + env + ".svg"));
        write_summary_plot(summary, env, plot);
    }
}

}  // namespace rtrl
