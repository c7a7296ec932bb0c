#include "rtrl/experiment.hpp"
#include "rtrl/verify.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"real-time reinforcement learning lab"};
    app.require_subcommand(1);

    std::string config_path, out_dir, suite;
    std::vector<std::string> run_dirs;
    long seed = -1, steps = -1;

    CLI::App* run = app.add_subcommand("run", "train agents from a config file");
    run->add_option("--config", config_path, "config file (flat key=value)")->required();
    run->add_option("--seed", seed, "override: train this single seed");
    run->add_option("--steps", steps, "override: total environment steps");
    run->add_option("--out", out_dir, "override: output directory");

    CLI::App* verify = app.add_subcommand("verify", "run a verification suite");
    verify->add_option("suite", suite, "suite name")->required();

    CLI::App* summarize = app.add_subcommand("summarize", "aggregate run directories");
    summarize->add_option("dirs", run_dirs, "run directories")->required()->expected(-1);
    summarize->add_option("--out", out_dir, "output directory for table and plots");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) {
            rtrl::ExperimentConfig cfg = rtrl::ExperimentConfig::parse_file(config_path);
            if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
            if (steps > 0) cfg.total_steps = steps;
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            rtrl::RunOutcome outcome = rtrl::run_experiment(cfg);
            for (const auto& log : outcome.logs) std::cout << "log: " << log.string() << "\n";
            std::cout << "manifest: " << (outcome.directory / "manifest.txt").string() << "\n";
            if (outcome.aborted) {
                std::cerr << "training aborted: " << outcome.abort_reason << "\n";
                return 3;
            }
        } else if (verify->parsed()) {
            rtrl::SuiteReport report = rtrl::run_verification_suite(suite);
            rtrl::write_report_json(report, std::cout);
            if (!report.pass()) return 2;
        } else if (summarize->parsed()) {
            std::vector<rtrl::fs::path> dirs(run_dirs.begin(), run_dirs.end());
            rtrl::Summary summary = rtrl::summarize_runs(dirs);
            rtrl::write_summary_table(summary, std::cout);
            rtrl::write_summary(summary, out_dir.empty() ? "." : out_dir);
        }
    } catch (const rtrl::SpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
