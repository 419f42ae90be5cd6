// stepcast command-line tool: synth | run | predict | report.
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stepcast/stepcast.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string preset;
    std::string stages;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int jobs = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "TOML config file");
    cmd->add_option("--seed", f.seed, "master seed (overrides config)")->each([&](const std::string&) {
        f.seed_given = true;
    });
    cmd->add_option("--out", f.out_dir, "output directory (overrides config)");
    cmd->add_option("--preset", f.preset, "synthetic cohort preset (overrides config)");
    cmd->add_option("--stages", f.stages, "comma-separated stage filter (run only)");
    cmd->add_option("--jobs", f.jobs, "worker count (accepted; execution is deterministic single-thread)");
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Config file first, then every given flag overrides its config key.
stepcast::ExperimentConfig build_config(const CommonFlags& f) {
    stepcast::ExperimentConfig cfg;
    if (!f.config_path.empty()) cfg = stepcast::config_from_file(f.config_path);
    if (f.seed_given) cfg.seed = f.seed;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (!f.preset.empty()) {
        cfg.preset = f.preset;
        stepcast::synth::CohortSpec spec = stepcast::synth::preset_by_name(f.preset);
        if (cfg.synth_seed_pinned) spec.seed = cfg.synth_spec.seed;
        cfg.synth_spec = spec;
    }
    if (!f.stages.empty()) cfg.stages = split_commas(f.stages);
    if (f.jobs > 0) cfg.jobs = f.jobs;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stepcast: multimodal next-day physical-activity forecasting"};
    app.require_subcommand(1);

    CommonFlags synth_flags, run_flags, report_flags;
    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort as minute-level CSVs");
    add_common(synth, synth_flags);
    auto* run = app.add_subcommand("run", "run the experiment pipeline and write reports");
    add_common(run, run_flags);

    stepcast::cli::PredictArgs predict_args;
    auto* predict = app.add_subcommand("predict", "next-day predictions from a saved checkpoint");
    predict->add_option("--checkpoint", predict_args.checkpoint_path, "checkpoint JSON file")->required();
    predict->add_option("--features", predict_args.features_csv, "daily-features CSV")->required();
    predict->add_option("--out", predict_args.out_csv, "output predictions CSV")->required();

    auto* report = app.add_subcommand("report", "re-render report tables from raw_results.json");
    add_common(report, report_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? stepcast::cli::kExitOk : stepcast::cli::kExitConfig;
    }

    try {
        if (synth->parsed()) {
            stepcast::cli::run_synth(build_config(synth_flags), std::cout);
            return stepcast::cli::kExitOk;
        }
        if (run->parsed()) {
            auto outcome = stepcast::cli::run_pipeline(build_config(run_flags), std::cout);
            return outcome.exit_code;
        }
        if (predict->parsed()) {
            stepcast::cli::run_predict(predict_args, std::cout);
            return stepcast::cli::kExitOk;
        }
        if (report->parsed()) {
            stepcast::ExperimentConfig cfg = build_config(report_flags);
            stepcast::cli::run_report(cfg.out_dir, std::cout);
            return stepcast::cli::kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return stepcast::cli::exit_code_for_current_exception();
    }
    return stepcast::cli::kExitConfig;
}
