#pragma once

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepcast/checkpoint.hpp"
#include "stepcast/config.hpp"
#include "stepcast/experiments.hpp"
#include "stepcast/ingest.hpp"

namespace stepcast::cli {

// Exit codes: 0 success, 1 usage/config, 2 data/schema, 3 numerical.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

/// Maps the in-flight exception to an exit code. Call inside a catch block.
inline int exit_code_for_current_exception() {
    try {
        throw;
    } catch (const ConfigError&) {
        return kExitConfig;
    } catch (const NumericalError&) {
        return kExitNumerical;
    } catch (const MetricError&) {
        return kExitNumerical;
    } catch (const std::exception&) {
        return kExitData;  // parse/schema/io/state/shape/split/aggregation
    }
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw IoError("failed writing: " + path.string());
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// --- report JSON round-trip (raw_results.json, consumed by `report`) ------

inline nlohmann::json to_json(const CohortSummary& s) {
    return {{"n_users", s.n_users},
            {"mean_valid_days", s.mean_valid_days},
            {"mean_daily_steps", s.mean_daily_steps},
            {"mean_wear_hours", s.mean_wear_hours},
            {"mean_app_minutes", s.mean_app_minutes},
            {"lagged_correlation", s.lagged_correlation}};
}

inline CohortSummary summary_from_json(const nlohmann::json& j) {
    CohortSummary s;
    s.n_users = j.at("n_users").get<int>();
    s.mean_valid_days = j.at("mean_valid_days").get<double>();
    s.mean_daily_steps = j.at("mean_daily_steps").get<double>();
    s.mean_wear_hours = j.at("mean_wear_hours").get<double>();
    s.mean_app_minutes = j.at("mean_app_minutes").get<double>();
    s.lagged_correlation = j.at("lagged_correlation").get<double>();
    return s;
}

inline nlohmann::json to_json(const WindowSweepReport& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells)
        cells.push_back({{"window", c.window},
                         {"architecture", to_string(c.architecture)},
                         {"ok", c.ok},
                         {"test_mae", c.test_mae},
                         {"val_mae", std::isfinite(c.val_mae) ? nlohmann::json(c.val_mae) : nlohmann::json()},
                         {"error", c.error}});
    return {{"selected_window", r.selected_window}, {"cells", std::move(cells)}};
}

inline WindowSweepReport sweep_from_json(const nlohmann::json& j) {
    WindowSweepReport r;
    r.selected_window = j.at("selected_window").get<int>();
    for (const auto& c : j.at("cells")) {
        WindowSweepReport::Cell cell;
        cell.window = c.at("window").get<int>();
        cell.architecture = architecture_from_string(c.at("architecture").get<std::string>());
        cell.ok = c.at("ok").get<bool>();
        cell.test_mae = c.at("test_mae").get<double>();
        cell.val_mae = c.at("val_mae").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                 : c.at("val_mae").get<double>();
        cell.error = c.at("error").get<std::string>();
        r.cells.push_back(std::move(cell));
    }
    return r;
}

inline nlohmann::json to_json(const BaselineReport& r) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : r.columns)
        cols.push_back({{"architecture", to_string(c.architecture)},
                        {"ok", c.ok},
                        {"mae", c.mae},
                        {"rmse", c.rmse},
                        {"nrmse", c.nrmse},
                        {"m", c.m},
                        {"has_margin", c.has_margin},
                        {"margin_pct", c.margin_pct},
                        {"error", c.error}});
    return {{"window", r.window}, {"columns", std::move(cols)}};
}

inline BaselineReport baselines_from_json(const nlohmann::json& j) {
    BaselineReport r;
    r.window = j.at("window").get<int>();
    for (const auto& c : j.at("columns")) {
        BaselineReport::Column col;
        col.architecture = architecture_from_string(c.at("architecture").get<std::string>());
        col.ok = c.at("ok").get<bool>();
        col.mae = c.at("mae").get<double>();
        col.rmse = c.at("rmse").get<double>();
        col.nrmse = c.at("nrmse").get<double>();
        col.m = c.at("m").get<int>();
        col.has_margin = c.at("has_margin").get<bool>();
        col.margin_pct = c.at("margin_pct").get<long>();
        col.error = c.at("error").get<std::string>();
        r.columns.push_back(std::move(col));
    }
    return r;
}

inline nlohmann::json to_json(const ClassificationReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"threshold", row.threshold},
                        {"architecture", to_string(row.architecture)},
                        {"ok", row.ok},
                        {"accuracy", row.ok ? nlohmann::json(row.accuracy) : nlohmann::json()},
                        {"f1", row.ok ? nlohmann::json(row.f1) : nlohmann::json()},
                        {"m", row.m},
                        {"error", row.error}});
    return {{"window", r.window}, {"rows", std::move(rows)}};
}

inline ClassificationReport classification_from_json(const nlohmann::json& j) {
    ClassificationReport r;
    r.window = j.at("window").get<int>();
    for (const auto& c : j.at("rows")) {
        ClassificationReport::Row row;
        row.threshold = c.at("threshold").get<double>();
        row.architecture = architecture_from_string(c.at("architecture").get<std::string>());
        row.ok = c.at("ok").get<bool>();
        row.accuracy = c.at("accuracy").is_null() ? 0.0 : c.at("accuracy").get<double>();
        row.f1 = c.at("f1").is_null() ? 0.0 : c.at("f1").get<double>();
        row.m = c.at("m").get<int>();
        row.error = c.at("error").get<std::string>();
        r.rows.push_back(std::move(row));
    }
    return r;
}

inline nlohmann::json to_json(const PercentileReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"percentile", row.percentile},
                        {"n_users", row.n_users},
                        {"architecture", to_string(row.architecture)},
                        {"available", row.available},
                        {"test_mae", row.test_mae},
                        {"note", row.note}});
    return {{"window", r.window}, {"rows", std::move(rows)}};
}

inline PercentileReport percentiles_from_json(const nlohmann::json& j) {
    PercentileReport r;
    r.window = j.at("window").get<int>();
    for (const auto& c : j.at("rows")) {
        PercentileReport::Row row;
        row.percentile = c.at("percentile").get<int>();
        row.n_users = c.at("n_users").get<int>();
        row.architecture = architecture_from_string(c.at("architecture").get<std::string>());
        row.available = c.at("available").get<bool>();
        row.test_mae = c.at("test_mae").get<double>();
        row.note = c.at("note").get<std::string>();
        r.rows.push_back(std::move(row));
    }
    return r;
}

inline nlohmann::json to_json(const PerUserReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"user_id", row.user_id},
                        {"m", row.m},
                        {"early_mae", std::isfinite(row.early_mae) ? nlohmann::json(row.early_mae) : nlohmann::json()},
                        {"late_mae", std::isfinite(row.late_mae) ? nlohmann::json(row.late_mae) : nlohmann::json()}});
    return {{"window", r.window}, {"rows", std::move(rows)}};
}

inline PerUserReport per_user_from_json(const nlohmann::json& j) {
    PerUserReport r;
    r.window = j.at("window").get<int>();
    for (const auto& c : j.at("rows")) {
        PerUserReport::Row row;
        row.user_id = c.at("user_id").get<std::string>();
        row.m = c.at("m").get<int>();
        row.early_mae = c.at("early_mae").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                    : c.at("early_mae").get<double>();
        row.late_mae = c.at("late_mae").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                  : c.at("late_mae").get<double>();
        r.rows.push_back(std::move(row));
    }
    return r;
}

inline nlohmann::json to_json(const OutcomesReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"outcome", row.outcome},
                        {"ok", row.ok},
                        {"mae", row.mae},
                        {"nrmse", row.nrmse},
                        {"mean_actual", row.mean_actual},
                        {"m", row.m},
                        {"error", row.error}});
    return {{"window", r.window}, {"rows", std::move(rows)}};
}

inline OutcomesReport outcomes_from_json(const nlohmann::json& j) {
    OutcomesReport r;
    r.window = j.at("window").get<int>();
    for (const auto& c : j.at("rows")) {
        OutcomesReport::Row row;
        row.outcome = c.at("outcome").get<std::string>();
        row.ok = c.at("ok").get<bool>();
        row.mae = c.at("mae").get<double>();
        row.nrmse = c.at("nrmse").get<double>();
        row.mean_actual = c.at("mean_actual").get<double>();
        row.m = c.at("m").get<int>();
        row.error = c.at("error").get<std::string>();
        r.rows.push_back(std::move(row));
    }
    return r;
}

}  // namespace detail

struct StageOutput {
    std::string path;  // relative to out_dir
    std::string sha256;
};

struct StageRecord {
    std::string name;
    bool requested = false;
    bool ok = false;
    std::string error;
    std::vector<StageOutput> outputs;
};

struct RunOutcome {
    int exit_code = kExitOk;
    int selected_window = 0;
    std::uint64_t cohort_seed = 0;
    std::vector<StageRecord> stages;
    std::filesystem::path out_dir;
};

namespace detail {

/// Resolves the cohort seed: explicit [synth] seed wins, otherwise derive
/// from the master seed so different --seed values give different cohorts.
inline synth::CohortSpec resolve_synth_spec(const ExperimentConfig& cfg) {
    synth::CohortSpec spec = cfg.synth_spec;
    if (!cfg.synth_seed_pinned) spec.seed = derive_seed(cfg.seed.value(), "cohort");
    return spec;
}

inline std::map<std::string, std::vector<DailyFeatures>> load_cohort(const ExperimentConfig& cfg,
                                                                     std::uint64_t& cohort_seed_out) {
    if (!cfg.activity_csv.empty()) {
        cohort_seed_out = 0;
        auto activity = parse_activity_csv(cfg.activity_csv);
        auto engagement = parse_engagement_csv(cfg.engagement_csv);
        return preprocess_cohort(activity, engagement);
    }
    synth::CohortSpec spec = resolve_synth_spec(cfg);
    cohort_seed_out = spec.seed;
    return synth::generate_daily_cohort(spec).users;
}

struct ReportFilePair {
    StageOutput csv, txt;
};

inline ReportFilePair write_report_pair(const std::filesystem::path& out_dir, const std::string& experiment,
                                        const std::string& dataset, const std::string& csv, const std::string& txt) {
    ReportFilePair pair;
    std::string base = experiment + "_" + dataset;
    write_text_file(out_dir / (base + ".csv"), csv);
    write_text_file(out_dir / (base + ".txt"), txt);
    pair.csv = {base + ".csv", sha256_hex(csv)};
    pair.txt = {base + ".txt", sha256_hex(txt)};
    return pair;
}

}  // namespace detail

/// The `synth` subcommand: emit minute-level cohort CSVs, ground truth, and
/// the aggregated daily features (ready for `predict`).
inline void run_synth(const ExperimentConfig& cfg, std::ostream& log) {
    validate_experiment(cfg);
    synth::CohortSpec spec = detail::resolve_synth_spec(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    synth::CohortFiles files = synth::write_cohort_csvs(spec, cfg.out_dir);
    synth::DailyCohort cohort = synth::generate_daily_cohort(spec);
    std::vector<DailyFeatures> all_days;
    for (const auto& [user, days] : cohort.users) all_days.insert(all_days.end(), days.begin(), days.end());
    std::string features_path = (std::filesystem::path(cfg.out_dir) / "daily_features.csv").string();
    write_daily_features_csv(features_path, all_days);
    log << "synth: wrote " << files.activity_path << ", " << files.engagement_path << ", " << files.ground_truth_path
        << ", " << features_path << " (cohort seed " << spec.seed << ")\n";
}

/// The `run` subcommand: the full experiment pipeline. Stage failures are
/// recorded in the manifest; independent later stages still run.
inline RunOutcome run_pipeline(const ExperimentConfig& cfg, std::ostream& log) {
    validate_experiment(cfg);
    RunOutcome outcome;
    outcome.out_dir = cfg.out_dir;
    std::filesystem::create_directories(outcome.out_dir);
    std::filesystem::path ckpt_dir = outcome.out_dir / "checkpoints";

    auto requested = [&](const std::string& stage) {
        if (cfg.stages.empty()) return true;
        for (const auto& s : cfg.stages)
            if (s == stage) return true;
        return false;
    };

    nlohmann::json raw;
    raw["dataset"] = cfg.dataset;
    nlohmann::json checkpoints = nlohmann::json::array();

    ExperimentContext ctx;
    ctx.master_seed = cfg.seed.value();
    ctx.base = cfg.model;
    ctx.test_fraction = cfg.test_fraction;
    ctx.val_fraction = cfg.val_fraction;
    ctx.windows = cfg.windows;
    ctx.goal_thresholds = cfg.goal_thresholds;
    ctx.percentiles = cfg.percentiles;
    ctx.arima_min_days = cfg.arima_min_days;
    ctx.audit_splits = cfg.audit_splits;

    bool have_data = false;
    int selected_w = cfg.model.window;

    auto run_stage = [&](const std::string& name, auto&& body) {
        StageRecord rec;
        rec.name = name;
        rec.requested = requested(name);
        if (rec.requested) {
            try {
                body(rec);
                rec.ok = true;
                log << "stage " << name << ": ok\n";
            } catch (const std::exception& e) {
                rec.error = e.what();
                if (outcome.exit_code == kExitOk) outcome.exit_code = exit_code_for_current_exception();
                log << "stage " << name << ": FAILED: " << rec.error << "\n";
            }
        }
        outcome.stages.push_back(std::move(rec));
    };

    // Data preparation underlies every stage, so it runs unconditionally;
    // its report belongs to the "ingest" stage.
    std::string data_error;
    try {
        ctx.users = detail::load_cohort(cfg, outcome.cohort_seed);
        if (ctx.users.empty()) throw SchemaError("cohort is empty after filtering");
        have_data = true;
    } catch (const std::exception& e) {
        data_error = e.what();
        outcome.exit_code = exit_code_for_current_exception();
        log << "data preparation FAILED: " << data_error << "\n";
    }

    run_stage("ingest", [&](StageRecord& rec) {
        if (!have_data) throw StateError("data preparation failed: " + data_error);
        CohortSummary summary = summarize_cohort(ctx.users);
        raw["summary"] = detail::to_json(summary);
        auto pair = detail::write_report_pair(outcome.out_dir, "cohort_summary", cfg.dataset, to_csv(summary),
                                              to_text(summary));
        rec.outputs = {pair.csv, pair.txt};
    });

    run_stage("sweep", [&](StageRecord& rec) {
        if (!have_data) throw StateError("data preparation failed: " + data_error);
        WindowSweepReport report = run_window_sweep(ctx);
        selected_w = report.selected_window;
        raw["sweep"] = detail::to_json(report);
        auto pair =
            detail::write_report_pair(outcome.out_dir, "window_sweep", cfg.dataset, to_csv(report), to_text(report));
        rec.outputs = {pair.csv, pair.txt};
    });
    outcome.selected_window = selected_w;
    raw["selected_window"] = selected_w;

    run_stage("baselines", [&](StageRecord& rec) {
        if (!have_data) throw StateError("data preparation failed: " + data_error);
        BaselineReport report = run_baseline_comparison(ctx, selected_w);
        raw["baselines"] = detail::to_json(report);
        auto pair = detail::write_report_pair(outcome.out_dir, "baseline_comparison", cfg.dataset, to_csv(report),
                                              to_text(report));
        rec.outputs = {pair.csv, pair.txt};
        if (cfg.save_checkpoints) {
            std::filesystem::create_directories(ckpt_dir);
            for (Architecture arch : baseline_columns()) {
                std::string key =
                    stepcast::detail::make_cell_key("all", arch, selected_w, Head::regression, 0.0, "steps");
                auto it = ctx.cache.find(key);
                if (it == ctx.cache.end() || !it->second.ok || !it->second.model) continue;
                std::string text = save_checkpoint(*it->second.model);
                std::string name = std::string("checkpoint_") + to_string(arch) + "_w" + std::to_string(selected_w) +
                                   ".json";
                detail::write_text_file(ckpt_dir / name, text);
                checkpoints.push_back({{"architecture", to_string(arch)},
                                       {"path", "checkpoints/" + name},
                                       {"sha256", sha256_hex(text)}});
                rec.outputs.push_back({"checkpoints/" + name, sha256_hex(text)});
            }
        }
    });

    run_stage("classification", [&](StageRecord& rec) {
        if (!have_data) throw StateError("data preparation failed: " + data_error);
        ClassificationReport report = run_goal_classification(ctx, selected_w);
        raw["classification"] = detail::to_json(report);
        auto pair = detail::write_report_pair(outcome.out_dir, "goal_classification", cfg.dataset, to_csv(report),
                                              to_text(report));
        rec.outputs = {pair.csv, pair.txt};
    });

    run_stage("percentiles", [&](StageRecord& rec) {
        if (!have_data) throw StateError("data preparation failed: " + data_error);
        PercentileReport report = run_percentile_cohorts(ctx, selected_w);
        raw["percentiles"] = detail::to_json(report);
        auto pair = detail::write_report_pair(outcome.out_dir, "percentile_cohorts", cfg.dataset, to_csv(report),
                                              to_text(report));
        rec.outputs = {pair.csv, pair.txt};
    });

    run_stage("per_user", [&](StageRecord& rec) {
        if (!have_data) throw StateError("data preparation failed: " + data_error);
        PerUserReport report = run_per_user_report(ctx, selected_w);
        raw["per_user"] = detail::to_json(report);
        auto pair =
            detail::write_report_pair(outcome.out_dir, "per_user", cfg.dataset, to_csv(report), to_text(report));
        rec.outputs = {pair.csv, pair.txt};
    });

    run_stage("outcomes", [&](StageRecord& rec) {
        if (!have_data) throw StateError("data preparation failed: " + data_error);
        OutcomesReport report = run_additional_outcomes(ctx, selected_w);
        raw["outcomes"] = detail::to_json(report);
        auto pair = detail::write_report_pair(outcome.out_dir, "additional_outcomes", cfg.dataset, to_csv(report),
                                              to_text(report));
        rec.outputs = {pair.csv, pair.txt};
    });

    detail::write_text_file(outcome.out_dir / "raw_results.json", raw.dump(2) + "\n");

    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["dataset"] = cfg.dataset;
    manifest["seed"] = cfg.seed.value();
    manifest["cohort_seed"] = outcome.cohort_seed;
    manifest["selected_window"] = selected_w;
    manifest["checkpoints"] = std::move(checkpoints);
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& rec : outcome.stages) {
        nlohmann::json outputs = nlohmann::json::array();
        for (const auto& o : rec.outputs) outputs.push_back({{"path", o.path}, {"sha256", o.sha256}});
        stages.push_back({{"name", rec.name},
                          {"requested", rec.requested},
                          {"ok", rec.ok},
                          {"error", rec.error},
                          {"outputs", std::move(outputs)}});
    }
    manifest["stages"] = std::move(stages);
    detail::write_text_file(outcome.out_dir / "manifest.json", manifest.dump(2) + "\n");

    log << "run: manifest at " << (outcome.out_dir / "manifest.json").string() << "\n";
    return outcome;
}

struct PredictArgs {
    std::string checkpoint_path;
    std::string features_csv;
    std::string out_csv;
};

/// The `predict` subcommand: load a verified checkpoint, take each user's
/// most recent `window` days from a daily-features CSV, and write one
/// next-day prediction per user.
inline void run_predict(const PredictArgs& args, std::ostream& log) {
    if (args.checkpoint_path.empty() || args.features_csv.empty() || args.out_csv.empty())
        throw ConfigError("predict requires --checkpoint, --features and --out");
    TrainedForecaster model = load_checkpoint_file(args.checkpoint_path);
    std::vector<DailyFeatures> rows = read_daily_features_csv(args.features_csv);
    if (rows.empty()) throw SchemaError("features file has no rows: " + args.features_csv);
    std::map<std::string, std::vector<DailyFeatures>> users;
    for (auto& d : rows) users[d.user_id].push_back(std::move(d));
    for (auto& [user, days] : users)
        std::sort(days.begin(), days.end(),
                  [](const DailyFeatures& a, const DailyFeatures& b) { return a.date < b.date; });

    int w = model.config.window;
    std::string out = "user_id,window_end,target_date,prediction\n";
    for (const auto& [user, days] : users) {
        if (static_cast<int>(days.size()) < w)
            throw ShapeError("user '" + user + "' has " + std::to_string(days.size()) +
                             " usable days but the checkpoint window needs " + std::to_string(w));
        WindowedExample ex;
        ex.user_id = user;
        ex.target_date = days.back().date.plus_days(1);
        ex.u_window = RowMatrix(w, kEngagementDim);
        ex.v_window = RowMatrix(w, kActivityDim);
        for (int i = 0; i < w; ++i) {
            const DailyFeatures& d = days[days.size() - static_cast<std::size_t>(w) + static_cast<std::size_t>(i)];
            for (int c = 0; c < kEngagementDim; ++c) ex.u_window.at(i, c) = d.engagement[static_cast<std::size_t>(c)];
            for (int c = 0; c < kActivityDim; ++c) ex.v_window.at(i, c) = d.activity[static_cast<std::size_t>(c)];
        }
        double pred = predict(model, ex);
        out += user + "," + days.back().date.to_string() + "," + ex.target_date.to_string() + "," + fmt_g(pred) + "\n";
    }
    detail::write_text_file(args.out_csv, out);
    log << "predict: wrote " << args.out_csv << " (" << users.size() << " users, window " << w << ")\n";
}

/// The `report` subcommand: re-render all tables from raw_results.json
/// without recomputing anything.
inline void run_report(const std::string& out_dir, std::ostream& log) {
    std::filesystem::path dir = out_dir;
    nlohmann::json raw;
    try {
        raw = nlohmann::json::parse(detail::slurp(dir / "raw_results.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("raw_results.json is not valid JSON: ") + e.what());
    }
    try {
        std::string dataset = raw.at("dataset").get<std::string>();
        int n = 0;
        if (raw.contains("summary")) {
            CohortSummary s = detail::summary_from_json(raw.at("summary"));
            detail::write_report_pair(dir, "cohort_summary", dataset, to_csv(s), to_text(s));
            ++n;
        }
        if (raw.contains("sweep")) {
            WindowSweepReport r = detail::sweep_from_json(raw.at("sweep"));
            detail::write_report_pair(dir, "window_sweep", dataset, to_csv(r), to_text(r));
            ++n;
        }
        if (raw.contains("baselines")) {
            BaselineReport r = detail::baselines_from_json(raw.at("baselines"));
            detail::write_report_pair(dir, "baseline_comparison", dataset, to_csv(r), to_text(r));
            ++n;
        }
        if (raw.contains("classification")) {
            ClassificationReport r = detail::classification_from_json(raw.at("classification"));
            detail::write_report_pair(dir, "goal_classification", dataset, to_csv(r), to_text(r));
            ++n;
        }
        if (raw.contains("percentiles")) {
            PercentileReport r = detail::percentiles_from_json(raw.at("percentiles"));
            detail::write_report_pair(dir, "percentile_cohorts", dataset, to_csv(r), to_text(r));
            ++n;
        }
        if (raw.contains("per_user")) {
            PerUserReport r = detail::per_user_from_json(raw.at("per_user"));
            detail::write_report_pair(dir, "per_user", dataset, to_csv(r), to_text(r));
            ++n;
        }
        if (raw.contains("outcomes")) {
            OutcomesReport r = detail::outcomes_from_json(raw.at("outcomes"));
            detail::write_report_pair(dir, "additional_outcomes", dataset, to_csv(r), to_text(r));
            ++n;
        }
        log << "report: re-rendered " << n << " report(s) in " << dir.string() << "\n";
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("raw_results.json: ") + e.what());
    }
}

}  // namespace stepcast::cli
