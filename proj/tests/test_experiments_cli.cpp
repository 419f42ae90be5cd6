#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "stepcast/cli.hpp"

using namespace stepcast;
namespace fs = std::filesystem;

namespace {

fs::path test_root() {
    static fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "stepcast_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

// Healthy report rows never contain quoted fields, so a plain split suffices.
std::vector<std::string> fields_of(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// Small cohort, tiny models: every stage runs in seconds but nothing is stubbed.
ExperimentConfig tiny_config(const std::string& out_name) {
    ExperimentConfig cfg;
    cfg.seed = 4242;
    cfg.dataset = "tiny";
    cfg.out_dir = (test_root() / out_name).string();
    cfg.synth_spec.n_users = 14;
    cfg.synth_spec.n_days = 34;
    cfg.synth_spec.seed = 909;
    cfg.synth_seed_pinned = true;
    cfg.model.hidden = 4;
    cfg.model.late_hidden = 4;
    cfg.model.late_temp = 3;
    cfg.model.max_epochs = 2;
    cfg.model.batch_size = 16;
    cfg.windows = {3, 7};
    cfg.goal_thresholds = {6000.0};
    cfg.percentiles = {0, 50};
    return cfg;
}

struct PipelineRun {
    ExperimentConfig cfg;
    cli::RunOutcome outcome;
};

// One full pipeline shared by every test case below (training is the slow part).
const PipelineRun& main_run() {
    static PipelineRun run = [] {
        PipelineRun r;
        r.cfg = tiny_config("run_a");
        std::ostringstream log;
        r.outcome = cli::run_pipeline(r.cfg, log);
        return r;
    }();
    return run;
}

const std::vector<std::string>& report_names() {
    static const std::vector<std::string> names{
        "cohort_summary", "window_sweep", "baseline_comparison", "goal_classification",
        "percentile_cohorts", "per_user", "additional_outcomes"};
    return names;
}

}  // namespace

TEST_CASE("run_pipeline completes every stage and writes the full report set") {
    const PipelineRun& run = main_run();
    const cli::RunOutcome& out = run.outcome;

    REQUIRE(out.exit_code == cli::kExitOk);
    REQUIRE(out.cohort_seed == 909);  // pinned [synth] seed wins
    REQUIRE((out.selected_window == 3 || out.selected_window == 7));

    REQUIRE(out.stages.size() == all_stage_names().size());
    for (std::size_t i = 0; i < out.stages.size(); ++i) {
        REQUIRE(out.stages[i].name == all_stage_names()[i]);
        REQUIRE(out.stages[i].requested);
        REQUIRE(out.stages[i].ok);
        REQUIRE(out.stages[i].error.empty());
        REQUIRE_FALSE(out.stages[i].outputs.empty());
    }

    for (const std::string& name : report_names()) {
        REQUIRE(fs::exists(out.out_dir / (name + "_tiny.csv")));
        REQUIRE(fs::exists(out.out_dir / (name + "_tiny.txt")));
    }
    REQUIRE(fs::exists(out.out_dir / "raw_results.json"));
    REQUIRE(fs::exists(out.out_dir / "manifest.json"));
}

TEST_CASE("manifest records reproducible hashes for every artifact") {
    const PipelineRun& run = main_run();
    nlohmann::json manifest = nlohmann::json::parse(read_file(run.outcome.out_dir / "manifest.json"));

    REQUIRE(manifest.at("schema_version").get<int>() == 1);
    REQUIRE(manifest.at("dataset").get<std::string>() == "tiny");
    REQUIRE(manifest.at("seed").get<std::uint64_t>() == 4242);
    REQUIRE(manifest.at("cohort_seed").get<std::uint64_t>() == 909);
    REQUIRE(manifest.at("selected_window").get<int>() == run.outcome.selected_window);

    const auto& stages = manifest.at("stages");
    REQUIRE(stages.size() == all_stage_names().size());
    for (const auto& stage : stages) {
        REQUIRE(stage.at("ok").get<bool>());
        for (const auto& output : stage.at("outputs")) {
            fs::path p = run.outcome.out_dir / output.at("path").get<std::string>();
            REQUIRE(fs::exists(p));
            REQUIRE(sha256_hex(read_file(p)) == output.at("sha256").get<std::string>());
        }
    }

    // All eight baseline models train on this cohort, so all eight checkpoints exist.
    const auto& checkpoints = manifest.at("checkpoints");
    REQUIRE(checkpoints.size() == baseline_columns().size());
    std::set<std::string> seen;
    for (const auto& ckpt : checkpoints) {
        seen.insert(ckpt.at("architecture").get<std::string>());
        fs::path p = run.outcome.out_dir / ckpt.at("path").get<std::string>();
        REQUIRE(fs::exists(p));
        REQUIRE(sha256_hex(read_file(p)) == ckpt.at("sha256").get<std::string>());
    }
    for (Architecture arch : baseline_columns()) REQUIRE(seen.count(to_string(arch)) == 1);
}

TEST_CASE("window sweep report has window-major cells and one selected window") {
    const PipelineRun& run = main_run();
    auto lines = lines_of(read_file(run.outcome.out_dir / "window_sweep_tiny.csv"));

    REQUIRE(lines.at(0) == "window,architecture,test_mae,val_mae,selected,error");
    REQUIRE(lines.size() == 1 + 2 * 3);  // two windows x three modalities

    std::vector<std::string> expect_arch{"lstm_early", "lstm_engagement", "lstm_activity"};
    int n_selected = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto f = fields_of(lines[i]);
        REQUIRE(f.size() == 6);
        REQUIRE(f[0] == (i <= 3 ? "3" : "7"));
        REQUIRE(f[1] == expect_arch[(i - 1) % 3]);
        REQUIRE(std::stod(f[2]) > 0.0);
        REQUIRE(std::stod(f[3]) > 0.0);
        if (f[4] == "1") {
            ++n_selected;
            REQUIRE(std::stoi(f[0]) == run.outcome.selected_window);
        }
        REQUIRE(f[5].empty());
    }
    REQUIRE(n_selected == 3);  // the whole selected-window row group is flagged

    nlohmann::json raw = nlohmann::json::parse(read_file(run.outcome.out_dir / "raw_results.json"));
    REQUIRE(raw.at("selected_window").get<int>() == run.outcome.selected_window);
    REQUIRE(raw.at("dataset").get<std::string>() == "tiny");
    for (const char* key : {"summary", "sweep", "baselines", "classification", "percentiles", "per_user", "outcomes"})
        REQUIRE(raw.contains(key));
}

TEST_CASE("baseline report lists all eight architectures with early-fusion margins") {
    const PipelineRun& run = main_run();
    auto lines = lines_of(read_file(run.outcome.out_dir / "baseline_comparison_tiny.csv"));

    REQUIRE(lines.at(0) == "architecture,mae,rmse,nrmse,m,margin_vs_multimodal_pct,error");
    REQUIRE(lines.size() == 1 + baseline_columns().size());
    for (std::size_t i = 0; i < baseline_columns().size(); ++i) {
        auto f = fields_of(lines[i + 1]);
        REQUIRE(f.size() == 7);
        REQUIRE(f[0] == to_string(baseline_columns()[i]));
        REQUIRE(std::stod(f[1]) > 0.0);
        REQUIRE(std::stod(f[2]) >= std::stod(f[1]));  // rmse >= mae always
        REQUIRE(std::stoi(f[4]) > 0);
        REQUIRE(f[6].empty());
    }
    // Early fusion against itself is a zero margin by definition.
    REQUIRE(fields_of(lines.at(1))[5] == "0");
}

TEST_CASE("classification report covers thresholds x LSTM modalities") {
    const PipelineRun& run = main_run();
    auto lines = lines_of(read_file(run.outcome.out_dir / "goal_classification_tiny.csv"));

    REQUIRE(lines.at(0) == "threshold,architecture,accuracy,f1,m,error");
    REQUIRE(lines.size() == 1 + 1 * 3);  // one threshold x three modalities
    std::vector<std::string> expect_arch{"lstm_early", "lstm_engagement", "lstm_activity"};
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto f = fields_of(lines[i]);
        REQUIRE(f[0] == "6000");
        REQUIRE(f[1] == expect_arch[i - 1]);
        double acc = std::stod(f[2]), f1 = std::stod(f[3]);
        REQUIRE((acc >= 0.0 && acc <= 1.0));
        REQUIRE((f1 >= 0.0 && f1 <= 1.0));
        REQUIRE(std::stoi(f[4]) > 0);
    }
}

TEST_CASE("percentile-0 cohort is definitionally the baseline cohort") {
    const PipelineRun& run = main_run();
    auto pct = lines_of(read_file(run.outcome.out_dir / "percentile_cohorts_tiny.csv"));
    auto base = lines_of(read_file(run.outcome.out_dir / "baseline_comparison_tiny.csv"));

    REQUIRE(pct.at(0) == "percentile,users,architecture,test_mae,note");
    REQUIRE(pct.size() == 1 + 2 * 3);  // {0, 50} x three modalities
    for (std::size_t i = 1; i <= 3; ++i) {
        auto f = fields_of(pct[i]);
        REQUIRE(f[0] == "0");
        REQUIRE(f[1] == "14");  // everyone qualifies at the 0th percentile
    }
    for (std::size_t i = 4; i <= 6; ++i) {
        auto f = fields_of(pct[i]);
        REQUIRE(f[0] == "50");
        REQUIRE(f[1] == "7");
    }
    // Same cell cache entry, so the rendered MAE strings match exactly.
    REQUIRE(fields_of(pct.at(1))[3] == fields_of(base.at(1))[1]);
}

TEST_CASE("per-user MAEs pool back to the cohort MAE") {
    const PipelineRun& run = main_run();
    auto per_user = lines_of(read_file(run.outcome.out_dir / "per_user_tiny.csv"));
    auto base = lines_of(read_file(run.outcome.out_dir / "baseline_comparison_tiny.csv"));
    auto summary = lines_of(read_file(run.outcome.out_dir / "cohort_summary_tiny.csv"));

    REQUIRE(per_user.at(0) == "user_id,m,early_fusion_mae,late_fusion_mae");
    int n_users = std::stoi(fields_of(summary.at(1))[1]);
    int n_test = std::max(1, static_cast<int>(std::lround(n_users * run.cfg.test_fraction)));
    REQUIRE(static_cast<int>(per_user.size()) - 1 == n_test);

    long m_total = 0;
    double early_weighted = 0.0, late_weighted = 0.0;
    std::set<std::string> users;
    for (std::size_t i = 1; i < per_user.size(); ++i) {
        auto f = fields_of(per_user[i]);
        users.insert(f[0]);
        int m = std::stoi(f[1]);
        REQUIRE(m > 0);
        m_total += m;
        early_weighted += m * std::stod(f[2]);
        late_weighted += m * std::stod(f[3]);
    }
    REQUIRE(users.size() == per_user.size() - 1);  // one row per test user

    auto early_row = fields_of(base.at(1));
    auto late_row = fields_of(base.at(2));
    REQUIRE(early_row[0] == "lstm_early");
    REQUIRE(late_row[0] == "lstm_late");
    REQUIRE(m_total == std::stoi(early_row[4]));
    REQUIRE(early_weighted / m_total == Catch::Approx(std::stod(early_row[1])).margin(1e-4));
    REQUIRE(late_weighted / m_total == Catch::Approx(std::stod(late_row[1])).margin(1e-4));
}

TEST_CASE("additional outcomes report covers the three extra targets") {
    const PipelineRun& run = main_run();
    auto lines = lines_of(read_file(run.outcome.out_dir / "additional_outcomes_tiny.csv"));
    auto base = lines_of(read_file(run.outcome.out_dir / "baseline_comparison_tiny.csv"));

    REQUIRE(lines.at(0) == "outcome,mae,nrmse,mean_actual,m,error");
    REQUIRE(lines.size() == 4);
    std::vector<std::string> expect{"sed_minutes", "wear_time", "lpa_minutes"};
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto f = fields_of(lines[i]);
        REQUIRE(f[0] == expect[i - 1]);
        REQUIRE(std::stod(f[1]) > 0.0);
        REQUIRE(std::stod(f[3]) > 0.0);
        // Same split and window as the baselines, so the same example count.
        REQUIRE(f[4] == fields_of(base.at(1))[4]);
        REQUIRE(f[5].empty());
    }
}

TEST_CASE("cohort summary reports the post-filter cohort") {
    const PipelineRun& run = main_run();
    auto lines = lines_of(read_file(run.outcome.out_dir / "cohort_summary_tiny.csv"));

    REQUIRE(lines.at(0) == "metric,value");
    REQUIRE(lines.size() == 7);
    REQUIRE(fields_of(lines.at(1))[0] == "users");
    REQUIRE(fields_of(lines.at(1))[1] == "14");
    double wear_hours = std::stod(fields_of(lines.at(4))[1]);
    REQUIRE((wear_hours >= 10.0 && wear_hours <= 16.5));  // valid-day wear clamp
    REQUIRE(std::isfinite(std::stod(fields_of(lines.at(6))[1])));
}

TEST_CASE("rerunning the same config reproduces every artifact byte for byte") {
    const PipelineRun& run = main_run();
    ExperimentConfig cfg = tiny_config("run_b");
    std::ostringstream log;
    cli::RunOutcome second = cli::run_pipeline(cfg, log);
    REQUIRE(second.exit_code == cli::kExitOk);
    REQUIRE(second.selected_window == run.outcome.selected_window);

    std::set<fs::path> rel_a, rel_b;
    for (const auto& e : fs::recursive_directory_iterator(run.outcome.out_dir))
        if (e.is_regular_file()) rel_a.insert(fs::relative(e.path(), run.outcome.out_dir));
    for (const auto& e : fs::recursive_directory_iterator(second.out_dir))
        if (e.is_regular_file()) rel_b.insert(fs::relative(e.path(), second.out_dir));
    REQUIRE(rel_a == rel_b);
    REQUIRE(rel_a.size() >= 16);  // 7 csv + 7 txt + raw results + manifest (+ checkpoints)
    for (const auto& rel : rel_a) REQUIRE(read_file(run.outcome.out_dir / rel) == read_file(second.out_dir / rel));
}

TEST_CASE("stage subsets run only what was requested") {
    ExperimentConfig cfg = tiny_config("run_c");
    cfg.stages = {"ingest", "baselines"};
    cfg.model.window = 3;  // no sweep, so the configured window is used as-is
    std::ostringstream log;
    cli::RunOutcome out = cli::run_pipeline(cfg, log);

    REQUIRE(out.exit_code == cli::kExitOk);
    REQUIRE(out.selected_window == 3);
    REQUIRE(out.stages.size() == all_stage_names().size());
    for (const auto& rec : out.stages) {
        bool wanted = rec.name == "ingest" || rec.name == "baselines";
        REQUIRE(rec.requested == wanted);
        REQUIRE(rec.ok == wanted);
    }
    REQUIRE(fs::exists(out.out_dir / "cohort_summary_tiny.csv"));
    REQUIRE(fs::exists(out.out_dir / "baseline_comparison_tiny.csv"));
    REQUIRE(fs::exists(out.out_dir / "checkpoints/checkpoint_lstm_early_w3.json"));
    REQUIRE_FALSE(fs::exists(out.out_dir / "window_sweep_tiny.csv"));
    REQUIRE_FALSE(fs::exists(out.out_dir / "goal_classification_tiny.csv"));
    REQUIRE_FALSE(fs::exists(out.out_dir / "per_user_tiny.csv"));

    nlohmann::json manifest = nlohmann::json::parse(read_file(out.out_dir / "manifest.json"));
    for (const auto& stage : manifest.at("stages")) {
        bool wanted = stage.at("name") == "ingest" || stage.at("name") == "baselines";
        REQUIRE(stage.at("requested").get<bool>() == wanted);
    }
}

TEST_CASE("synth then predict round-trips through a saved checkpoint") {
    const PipelineRun& run = main_run();
    int w = run.outcome.selected_window;
    fs::path ckpt = run.outcome.out_dir / ("checkpoints/checkpoint_lstm_early_w" + std::to_string(w) + ".json");

    ExperimentConfig synth_cfg = tiny_config("synth_a");
    std::ostringstream log;
    cli::run_synth(synth_cfg, log);
    fs::path synth_dir = synth_cfg.out_dir;
    for (const char* name : {"activity.csv", "engagement.csv", "ground_truth.csv", "daily_features.csv"})
        REQUIRE(fs::exists(synth_dir / name));

    cli::PredictArgs args;
    args.checkpoint_path = ckpt.string();
    args.features_csv = (synth_dir / "daily_features.csv").string();
    args.out_csv = (test_root() / "predictions.csv").string();
    cli::run_predict(args, log);

    auto lines = lines_of(read_file(args.out_csv));
    REQUIRE(lines.at(0) == "user_id,window_end,target_date,prediction");
    REQUIRE(lines.size() == 1 + 14);  // one forecast per user
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto f = fields_of(lines[i]);
        REQUIRE(f.size() == 4);
        REQUIRE(Date::parse(f[2]) == Date::parse(f[1]).plus_days(1));
        double pred = std::stod(f[3]);
        REQUIRE(std::isfinite(pred));
        REQUIRE(pred >= 0.0);  // step forecasts are clamped at zero
    }

    SECTION("a user with fewer days than the window is rejected, naming both sizes") {
        auto rows = read_daily_features_csv(args.features_csv);
        std::vector<DailyFeatures> shorted;
        for (const auto& d : rows)
            if (d.user_id == rows.front().user_id && static_cast<int>(shorted.size()) < w - 1) shorted.push_back(d);
        REQUIRE(static_cast<int>(shorted.size()) == w - 1);
        fs::path short_csv = test_root() / "short_features.csv";
        write_daily_features_csv(short_csv.string(), shorted);

        cli::PredictArgs bad = args;
        bad.features_csv = short_csv.string();
        REQUIRE_THROWS_MATCHES(cli::run_predict(bad, log), ShapeError,
                               Catch::Matchers::MessageMatches(
                                   Catch::Matchers::ContainsSubstring("has " + std::to_string(w - 1)) &&
                                   Catch::Matchers::ContainsSubstring("needs " + std::to_string(w))));
    }

    SECTION("a tampered checkpoint is refused before any prediction") {
        nlohmann::json j = nlohmann::json::parse(read_file(ckpt));
        auto& tensors = j.at("tensors");
        auto it = tensors.begin();
        it.value().at("data")[0] = it.value().at("data")[0].get<double>() + 1.0;
        fs::path tampered = test_root() / "tampered_checkpoint.json";
        {
            std::ofstream out(tampered);
            out << j.dump(2) << "\n";
        }
        cli::PredictArgs bad = args;
        bad.checkpoint_path = tampered.string();
        REQUIRE_THROWS_MATCHES(
            cli::run_predict(bad, log), StateError,
            Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("digest mismatch")));
    }

    SECTION("missing arguments are a config error") {
        REQUIRE_THROWS_AS(cli::run_predict(cli::PredictArgs{}, log), ConfigError);
    }
}

TEST_CASE("report re-renders every table from raw results without recomputing") {
    const PipelineRun& run = main_run();
    fs::path dir = test_root() / "rerender";
    fs::create_directories(dir);
    fs::copy_file(run.outcome.out_dir / "raw_results.json", dir / "raw_results.json",
                  fs::copy_options::overwrite_existing);

    std::ostringstream log;
    cli::run_report(dir.string(), log);
    for (const std::string& name : report_names()) {
        for (const char* ext : {".csv", ".txt"}) {
            fs::path rendered = dir / (name + "_tiny" + ext);
            REQUIRE(fs::exists(rendered));
            REQUIRE(read_file(rendered) == read_file(run.outcome.out_dir / (name + "_tiny" + ext)));
        }
    }

    SECTION("garbage raw results fail as a parse error") {
        fs::path bad = test_root() / "rerender_bad";
        fs::create_directories(bad);
        std::ofstream(bad / "raw_results.json") << "this is not json{{";
        REQUIRE_THROWS_AS(cli::run_report(bad.string(), log), ParseError);
    }

    SECTION("valid JSON with missing fields fails as a schema error") {
        fs::path bad = test_root() / "rerender_empty";
        fs::create_directories(bad);
        std::ofstream(bad / "raw_results.json") << "{}";
        REQUIRE_THROWS_AS(cli::run_report(bad.string(), log), SchemaError);
    }
}

TEST_CASE("percentile cohorts smaller than three users are reported, not trained") {
    synth::CohortSpec spec;
    spec.n_users = 4;
    spec.n_days = 30;
    spec.seed = 5;
    ExperimentContext ctx;
    ctx.users = synth::generate_daily_cohort(spec).users;
    ctx.master_seed = 1;
    ctx.percentiles = {75};

    PercentileReport report = run_percentile_cohorts(ctx, 3);
    REQUIRE(report.rows.size() == 3);
    for (const auto& row : report.rows) {
        REQUIRE(row.percentile == 75);
        REQUIRE(row.n_users < 3);
        REQUIRE_FALSE(row.available);
        REQUIRE(row.note == "cohort too small");
    }
    std::string csv = to_csv(report);
    REQUIRE(csv.find("cohort too small") != std::string::npos);
    REQUIRE(csv.find("n/a") != std::string::npos);
}

TEST_CASE("pipeline failures map to documented exit codes") {
    SECTION("a missing seed is rejected before anything runs") {
        ExperimentConfig cfg = tiny_config("run_noseed");
        cfg.seed.reset();
        std::ostringstream log;
        REQUIRE_THROWS_AS(cli::run_pipeline(cfg, log), ConfigError);
    }

    SECTION("unreadable input data fails every stage but still writes a manifest") {
        ExperimentConfig cfg = tiny_config("run_fail");
        cfg.activity_csv = (test_root() / "no_such_activity.csv").string();
        cfg.engagement_csv = (test_root() / "no_such_engagement.csv").string();
        std::ostringstream log;
        cli::RunOutcome out = cli::run_pipeline(cfg, log);
        REQUIRE(out.exit_code == cli::kExitData);
        for (const auto& rec : out.stages) {
            REQUIRE(rec.requested);
            REQUIRE_FALSE(rec.ok);
            REQUIRE(rec.error.find("data preparation failed") != std::string::npos);
        }
        REQUIRE(fs::exists(out.out_dir / "manifest.json"));
        REQUIRE_FALSE(fs::exists(out.out_dir / "cohort_summary_tiny.csv"));
    }
}

TEST_CASE("cohort seed derives from the master seed unless pinned") {
    ExperimentConfig cfg = tiny_config("unused");
    cfg.synth_seed_pinned = false;
    synth::CohortSpec derived = cli::detail::resolve_synth_spec(cfg);
    REQUIRE(derived.seed == derive_seed(4242, "cohort"));

    cfg.synth_seed_pinned = true;
    REQUIRE(cli::detail::resolve_synth_spec(cfg).seed == 909);
}
