#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stepcast/dataset.hpp"
#include "stepcast/forecasters.hpp"
#include "stepcast/metrics.hpp"
#include "stepcast/synthcohort.hpp"

namespace stepcast {

/// One trained-and-tested model cell. Failed cells carry the error instead
/// of aborting the experiment that requested them.
struct CellResult {
    std::string key;
    Architecture architecture = Architecture::lstm_early;
    int window = 0;
    Head head = Head::regression;
    double threshold = 0.0;
    std::string outcome = "steps";
    bool ok = false;
    std::string error;
    std::vector<std::string> warnings;
    int m = 0;
    double test_mae = 0.0;
    double test_rmse = 0.0;
    double test_nrmse = 0.0;
    double val_mae = std::numeric_limits<double>::quiet_NaN();
    double accuracy = std::numeric_limits<double>::quiet_NaN();
    double f1 = std::numeric_limits<double>::quiet_NaN();
    double mean_actual = 0.0;
    std::vector<PerUserMetric> per_user;
    std::shared_ptr<TrainedForecaster> model;
};

/// Shared state for one experiment run: the preprocessed cohort, the master
/// seed all cell/split seeds derive from, and the cell cache that makes
/// repeated cells (e.g. the percentile-0 cohort) definitionally identical.
struct ExperimentContext {
    std::map<std::string, std::vector<DailyFeatures>> users;
    std::uint64_t master_seed = 1;
    ModelConfig base;
    double test_fraction = 0.2;
    double val_fraction = 0.1;
    std::vector<int> windows{3, 7, 14, 21};
    std::vector<double> goal_thresholds{6000.0, 8000.0};
    std::vector<int> percentiles{0, 25, 50, 75};
    int arima_min_days = 20;
    bool audit_splits = true;  // verify train/val never overlap test
    std::map<std::string, CellResult> cache;
    std::map<std::string, SplitAssignment> split_cache;
};

namespace detail {

inline std::string cohort_tag(int percentile) {
    return percentile == 0 ? std::string("all") : "p" + std::to_string(percentile);
}

inline std::string make_cell_key(const std::string& tag, Architecture arch, int w, Head head, double threshold,
                                 const std::string& outcome) {
    std::string key = "cell/" + tag + "/" + to_string(arch) + "/w" + std::to_string(w) + "/" + to_string(head) + "/" +
                      outcome;
    if (head == Head::classification) key += "/thr" + fmt_g(threshold);
    return key;
}

inline const SplitAssignment& cohort_split(ExperimentContext& ctx, const std::string& tag,
                                           const std::vector<std::string>& cohort_users) {
    auto it = ctx.split_cache.find(tag);
    if (it == ctx.split_cache.end()) {
        SplitAssignment split = split_participants(cohort_users, ctx.test_fraction, ctx.val_fraction,
                                                   derive_seed(ctx.master_seed, "split/" + tag));
        it = ctx.split_cache.emplace(tag, std::move(split)).first;
    }
    return it->second;
}

struct SplitExamples {
    std::vector<WindowedExample> train, val, test;
};

inline SplitExamples gather_examples(const ExperimentContext& ctx, const SplitAssignment& split,
                                     const std::vector<std::string>& cohort_users, int w) {
    SplitExamples out;
    for (const auto& user : cohort_users) {
        auto wins = build_windows(ctx.users.at(user), w);
        if (wins.empty()) continue;
        std::vector<WindowedExample>* dst = nullptr;
        if (split.train_users.count(user)) dst = &out.train;
        else if (split.val_users.count(user)) dst = &out.val;
        else if (split.test_users.count(user)) dst = &out.test;
        if (!dst) throw SplitError("user '" + user + "' missing from split assignment");
        dst->insert(dst->end(), std::make_move_iterator(wins.begin()), std::make_move_iterator(wins.end()));
    }
    return out;
}

inline void audit_disjoint(const SplitAssignment& split) {
    for (const auto& u : split.test_users)
        if (split.train_users.count(u) || split.val_users.count(u))
            throw SplitError("audit: test user '" + u + "' leaks into a training-side split");
}

/// Pooled + per-user regression metrics over (prediction, actual) pairs
/// ordered by user.
inline void fill_regression_metrics(CellResult& cell, const std::vector<WindowedExample>& test,
                                    const TrainedForecaster& model) {
    std::vector<double> preds, actuals;
    preds.reserve(test.size());
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_user;
    for (const auto& ex : test) {
        double p = predict(model, ex);
        double a = ex.target.at(cell.outcome);
        preds.push_back(p);
        actuals.push_back(a);
        by_user[ex.user_id].first.push_back(p);
        by_user[ex.user_id].second.push_back(a);
    }
    cell.m = static_cast<int>(preds.size());
    cell.test_mae = mae(preds, actuals);
    cell.test_rmse = rmse(preds, actuals);
    cell.test_nrmse = nrmse(preds, actuals);
    double mean = 0.0;
    for (double a : actuals) mean += a;
    cell.mean_actual = mean / static_cast<double>(actuals.size());
    for (const auto& [user, pa] : by_user)
        cell.per_user.push_back({user, static_cast<int>(pa.first.size()), mae(pa.first, pa.second)});
}

inline void eval_arima_cell(ExperimentContext& ctx, CellResult& cell, const SplitAssignment& split,
                            const ModelConfig& cfg) {
    std::vector<arima::UserSeries> series;
    for (const auto& user : split.test_users) {
        arima::UserSeries s;
        s.user_id = user;
        for (const auto& d : ctx.users.at(user)) s.values.push_back(d.total_steps());
        series.push_back(std::move(s));
    }
    auto result = arima::evaluate_arima_protocol(series, cfg.arima_order, ctx.arima_min_days);
    cell.warnings = result.warnings;
    if (result.abs_errors.empty()) throw MetricError("arima: no evaluable test users");

    double sum = 0.0, sum_sq = 0.0;
    for (double e : result.abs_errors) {
        sum += e;
        sum_sq += e * e;
    }
    cell.m = static_cast<int>(result.abs_errors.size());
    cell.test_mae = sum / cell.m;
    cell.test_rmse = std::sqrt(sum_sq / cell.m);
    double actual_sum = 0.0;
    long long actual_n = 0;
    std::map<std::string, std::vector<double>> fit_series;
    for (const auto& ur : result.per_user) {
        const auto* us = &series.front();
        for (const auto& s : series)
            if (s.user_id == ur.user_id) us = &s;
        for (int t = ur.n_fit; t < ur.n_fit + ur.n_eval; ++t) {
            actual_sum += us->values[static_cast<std::size_t>(t)];
            ++actual_n;
        }
        fit_series.emplace(ur.user_id,
                           std::vector<double>(us->values.begin(), us->values.begin() + ur.n_fit));
        cell.per_user.push_back({ur.user_id, ur.n_eval, ur.mae});
    }
    cell.mean_actual = actual_sum / static_cast<double>(actual_n);
    if (!(cell.mean_actual > 0.0)) throw MetricError("arima: non-positive mean of actuals");
    cell.test_nrmse = cell.test_rmse / cell.mean_actual;
    cell.model = std::make_shared<TrainedForecaster>(train_arima(cfg, fit_series, NormalizationStats{}));
}

/// Trains and tests one cell, or returns it from the cache. Every seed in
/// the cell derives from (master seed, cell key), so two requests for the
/// same cell are identical by construction.
inline const CellResult& eval_cell(ExperimentContext& ctx, const std::string& tag,
                                   const std::vector<std::string>& cohort_users, Architecture arch, int w, Head head,
                                   double threshold, const std::string& outcome) {
    std::string key = make_cell_key(tag, arch, w, head, threshold, outcome);
    auto it = ctx.cache.find(key);
    if (it != ctx.cache.end()) return it->second;

    CellResult cell;
    cell.key = key;
    cell.architecture = arch;
    cell.window = w;
    cell.head = head;
    cell.threshold = threshold;
    cell.outcome = outcome;
    try {
        const SplitAssignment& split = cohort_split(ctx, tag, cohort_users);
        if (ctx.audit_splits) audit_disjoint(split);

        ModelConfig cfg = ctx.base;
        cfg.architecture = arch;
        cfg.window = w;
        cfg.head = head;
        cfg.goal_threshold = head == Head::classification ? threshold : cfg.goal_threshold;
        cfg.outcome = outcome;
        cfg.seed = derive_seed(ctx.master_seed, key);

        if (arch == Architecture::arima) {
            eval_arima_cell(ctx, cell, split, cfg);
        } else {
            SplitExamples ex = gather_examples(ctx, split, cohort_users, w);
            if (ex.test.empty()) throw ConfigError("cell has no test examples");
            NormalizationStats stats = fit_normalization(ex.train);
            TrainedForecaster model = is_lstm(arch) ? train_lstm(cfg, ex.train, ex.val, stats)
                                                    : train_linreg(cfg, ex.train, stats);
            if (head == Head::classification) {
                std::vector<int> pred_labels, true_labels;
                for (const auto& e : ex.test) {
                    pred_labels.push_back(predict(model, e) > 0.5 ? 1 : 0);
                    true_labels.push_back(label_goal(e, threshold));
                }
                ClassificationScore score = accuracy_f1(pred_labels, true_labels);
                cell.m = static_cast<int>(pred_labels.size());
                cell.accuracy = score.accuracy;
                cell.f1 = score.f1;
            } else {
                fill_regression_metrics(cell, ex.test, model);
                if (!ex.val.empty()) {
                    std::vector<double> vp, va;
                    for (const auto& e : ex.val) {
                        vp.push_back(predict(model, e));
                        va.push_back(e.target.at(outcome));
                    }
                    cell.val_mae = mae(vp, va);
                }
            }
            cell.model = std::make_shared<TrainedForecaster>(std::move(model));
        }
        cell.ok = true;
    } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
    }
    return ctx.cache.emplace(key, std::move(cell)).first->second;
}

inline std::string fmt_metric(double v) { return std::isfinite(v) ? fmt_fixed(v, 6) : std::string("n/a"); }

/// Fixed-width plain-text table; first row is the header.
inline std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& row : rows) {
        if (width.size() < row.size()) width.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::string line;
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            std::string cell = rows[r][c];
            cell.resize(width[c], ' ');
            line += c ? "  " + cell : cell;
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
        if (r == 0) {
            std::string rule;
            for (std::size_t c = 0; c < width.size(); ++c) rule += (c ? std::string("  ") : std::string()) + std::string(width[c], '-');
            out += rule + "\n";
        }
    }
    return out;
}

inline std::string csv_join(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) line += (i ? "," : "") + fields[i];
    return line + "\n";
}

}  // namespace detail

inline std::vector<Architecture> sweep_modalities() {
    return {Architecture::lstm_early, Architecture::lstm_engagement, Architecture::lstm_activity};
}

// ---------------------------------------------------------------------------
// Window sweep
// ---------------------------------------------------------------------------

struct WindowSweepReport {
    struct Cell {
        int window = 0;
        Architecture architecture = Architecture::lstm_early;
        bool ok = false;
        double test_mae = 0.0;
        double val_mae = std::numeric_limits<double>::quiet_NaN();
        std::string error;
    };
    std::vector<Cell> cells;  // window-major, |windows| x 3
    int selected_window = 0;
};

/// Trains one regression model per (window, modality) on the full cohort and
/// selects the window with the lowest mean test MAE across modalities.
inline WindowSweepReport run_window_sweep(ExperimentContext& ctx) {
    WindowSweepReport report;
    std::vector<std::string> cohort = select_engaged_cohort(ctx.users, 0);
    double best = std::numeric_limits<double>::infinity();
    for (int w : ctx.windows) {
        double sum = 0.0;
        int n_ok = 0;
        for (Architecture arch : sweep_modalities()) {
            const CellResult& cell =
                detail::eval_cell(ctx, "all", cohort, arch, w, Head::regression, 0.0, "steps");
            WindowSweepReport::Cell c;
            c.window = w;
            c.architecture = arch;
            c.ok = cell.ok;
            c.test_mae = cell.test_mae;
            c.val_mae = cell.val_mae;
            c.error = cell.error;
            report.cells.push_back(std::move(c));
            if (cell.ok) {
                sum += cell.test_mae;
                ++n_ok;
            }
        }
        if (n_ok == static_cast<int>(sweep_modalities().size()) && sum / n_ok < best) {
            best = sum / n_ok;
            report.selected_window = w;
        }
    }
    if (report.selected_window == 0)
        throw StateError("window sweep: every window had at least one failed cell, nothing to select");
    return report;
}

inline std::string to_csv(const WindowSweepReport& r) {
    std::string out = "window,architecture,test_mae,val_mae,selected,error\n";
    for (const auto& c : r.cells)
        out += detail::csv_join({std::to_string(c.window), to_string(c.architecture),
                                 c.ok ? fmt_fixed(c.test_mae, 6) : "n/a", c.ok ? detail::fmt_metric(c.val_mae) : "n/a",
                                 c.window == r.selected_window ? "1" : "0", c.error});
    return out;
}

inline std::string to_text(const WindowSweepReport& r) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"window"};
    for (Architecture a : sweep_modalities()) header.push_back(to_string(a));
    header.push_back("");
    rows.push_back(header);
    for (std::size_t i = 0; i < r.cells.size(); i += 3) {
        int w = r.cells[i].window;
        std::vector<std::string> row{std::to_string(w)};
        for (std::size_t j = 0; j < 3; ++j) {
            const auto& c = r.cells[i + j];
            row.push_back(c.ok ? fmt_fixed(c.test_mae, 2) : "error");
        }
        row.push_back(w == r.selected_window ? "<- selected" : "");
        rows.push_back(std::move(row));
    }
    return "Test MAE by window size and modality\n" + detail::render_table(rows);
}

// ---------------------------------------------------------------------------
// Baseline comparison
// ---------------------------------------------------------------------------

inline std::vector<Architecture> baseline_columns() {
    return {Architecture::lstm_early,        Architecture::lstm_late,
            Architecture::lstm_engagement,   Architecture::lstm_activity,
            Architecture::linreg_multimodal, Architecture::linreg_engagement,
            Architecture::linreg_activity,   Architecture::arima};
}

struct BaselineReport {
    struct Column {
        Architecture architecture = Architecture::lstm_early;
        bool ok = false;
        double mae = 0.0, rmse = 0.0, nrmse = 0.0;
        int m = 0;
        bool has_margin = false;
        long margin_pct = 0;  // (multimodal - this) / this, percent
        std::string error;
    };
    int window = 0;
    std::vector<Column> columns;
};

/// All eight model columns at the chosen window, with the early-fusion
/// model's signed relative margin against every column.
inline BaselineReport run_baseline_comparison(ExperimentContext& ctx, int w) {
    BaselineReport report;
    report.window = w;
    std::vector<std::string> cohort = select_engaged_cohort(ctx.users, 0);
    const CellResult* early = nullptr;
    for (Architecture arch : baseline_columns()) {
        const CellResult& cell = detail::eval_cell(ctx, "all", cohort, arch, w, Head::regression, 0.0, "steps");
        if (arch == Architecture::lstm_early) early = &cell;
        BaselineReport::Column col;
        col.architecture = arch;
        col.ok = cell.ok;
        col.mae = cell.test_mae;
        col.rmse = cell.test_rmse;
        col.nrmse = cell.test_nrmse;
        col.m = cell.m;
        col.error = cell.error;
        report.columns.push_back(std::move(col));
    }
    if (early && early->ok) {
        for (auto& col : report.columns) {
            if (!col.ok) continue;
            col.margin_pct = margin_percent(early->test_mae, col.mae);
            col.has_margin = true;
        }
    }
    return report;
}

inline std::string to_csv(const BaselineReport& r) {
    std::string out = "architecture,mae,rmse,nrmse,m,margin_vs_multimodal_pct,error\n";
    for (const auto& c : r.columns)
        out += detail::csv_join({to_string(c.architecture), c.ok ? fmt_fixed(c.mae, 6) : "n/a",
                                 c.ok ? fmt_fixed(c.rmse, 6) : "n/a", c.ok ? fmt_fixed(c.nrmse, 6) : "n/a",
                                 std::to_string(c.m), c.has_margin ? std::to_string(c.margin_pct) : "n/a", c.error});
    return out;
}

inline std::string to_text(const BaselineReport& r) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"architecture", "MAE", "RMSE", "NRMSE", "m", "margin"});
    for (const auto& c : r.columns) {
        std::string margin = "n/a";
        if (c.has_margin) margin = (c.margin_pct >= 0 ? "+" : "") + std::to_string(c.margin_pct) + "%";
        rows.push_back({to_string(c.architecture), c.ok ? fmt_fixed(c.mae, 2) : "error",
                        c.ok ? fmt_fixed(c.rmse, 2) : "error", c.ok ? fmt_fixed(c.nrmse, 4) : "error",
                        std::to_string(c.m), margin});
    }
    return "Baseline comparison at w=" + std::to_string(r.window) +
           " (margin: early-fusion MAE vs column, negative = early fusion lower)\n" + detail::render_table(rows);
}

// ---------------------------------------------------------------------------
// Goal classification
// ---------------------------------------------------------------------------

struct ClassificationReport {
    struct Row {
        double threshold = 0.0;
        Architecture architecture = Architecture::lstm_early;
        bool ok = false;
        double accuracy = 0.0, f1 = 0.0;
        int m = 0;
        std::string error;
    };
    int window = 0;
    std::vector<Row> rows;
};

/// Accuracy/F1 for each goal threshold and LSTM modality.
inline ClassificationReport run_goal_classification(ExperimentContext& ctx, int w) {
    ClassificationReport report;
    report.window = w;
    std::vector<std::string> cohort = select_engaged_cohort(ctx.users, 0);
    for (double threshold : ctx.goal_thresholds) {
        for (Architecture arch : sweep_modalities()) {
            const CellResult& cell =
                detail::eval_cell(ctx, "all", cohort, arch, w, Head::classification, threshold, "steps");
            ClassificationReport::Row row;
            row.threshold = threshold;
            row.architecture = arch;
            row.ok = cell.ok;
            row.accuracy = cell.accuracy;
            row.f1 = cell.f1;
            row.m = cell.m;
            row.error = cell.error;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

inline std::string to_csv(const ClassificationReport& r) {
    std::string out = "threshold,architecture,accuracy,f1,m,error\n";
    for (const auto& row : r.rows)
        out += detail::csv_join({fmt_g(row.threshold), to_string(row.architecture),
                                 row.ok ? fmt_fixed(row.accuracy, 6) : "n/a", row.ok ? fmt_fixed(row.f1, 6) : "n/a",
                                 std::to_string(row.m), row.error});
    return out;
}

inline std::string to_text(const ClassificationReport& r) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"threshold", "architecture", "accuracy", "F1", "m"});
    for (const auto& row : r.rows)
        rows.push_back({fmt_g(row.threshold), to_string(row.architecture),
                        row.ok ? fmt_fixed(row.accuracy, 4) : "error", row.ok ? fmt_fixed(row.f1, 4) : "error",
                        std::to_string(row.m)});
    return "Goal classification at w=" + std::to_string(r.window) + "\n" + detail::render_table(rows);
}

// ---------------------------------------------------------------------------
// Percentile cohorts and per-user breakdown
// ---------------------------------------------------------------------------

struct PercentileReport {
    struct Row {
        int percentile = 0;
        int n_users = 0;
        Architecture architecture = Architecture::lstm_early;
        bool available = false;
        double test_mae = 0.0;
        std::string note;
    };
    int window = 0;
    std::vector<Row> rows;
};

/// Re-splits and retrains on each engagement-percentile cohort. Cohorts
/// smaller than 3 users are reported unavailable.
inline PercentileReport run_percentile_cohorts(ExperimentContext& ctx, int w) {
    PercentileReport report;
    report.window = w;
    for (int p : ctx.percentiles) {
        std::vector<std::string> cohort = select_engaged_cohort(ctx.users, p);
        std::string tag = detail::cohort_tag(p);
        for (Architecture arch : sweep_modalities()) {
            PercentileReport::Row row;
            row.percentile = p;
            row.n_users = static_cast<int>(cohort.size());
            row.architecture = arch;
            if (cohort.size() < 3) {
                row.note = "cohort too small";
            } else {
                const CellResult& cell = detail::eval_cell(ctx, tag, cohort, arch, w, Head::regression, 0.0, "steps");
                row.available = cell.ok;
                row.test_mae = cell.test_mae;
                row.note = cell.error;
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

inline std::string to_csv(const PercentileReport& r) {
    std::string out = "percentile,users,architecture,test_mae,note\n";
    for (const auto& row : r.rows)
        out += detail::csv_join({std::to_string(row.percentile), std::to_string(row.n_users),
                                 to_string(row.architecture), row.available ? fmt_fixed(row.test_mae, 6) : "n/a",
                                 row.note});
    return out;
}

inline std::string to_text(const PercentileReport& r) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"percentile", "users", "architecture", "test MAE"});
    for (const auto& row : r.rows)
        rows.push_back({std::to_string(row.percentile), std::to_string(row.n_users), to_string(row.architecture),
                        row.available ? fmt_fixed(row.test_mae, 2) : "n/a"});
    return "Engagement-percentile cohorts at w=" + std::to_string(r.window) + "\n" + detail::render_table(rows);
}

struct PerUserReport {
    struct Row {
        std::string user_id;
        int m = 0;
        double early_mae = std::numeric_limits<double>::quiet_NaN();
        double late_mae = std::numeric_limits<double>::quiet_NaN();
    };
    int window = 0;
    std::vector<Row> rows;  // one per test user
};

/// Per-test-user MAE under the two fusion models (same split, same window).
inline PerUserReport run_per_user_report(ExperimentContext& ctx, int w) {
    PerUserReport report;
    report.window = w;
    std::vector<std::string> cohort = select_engaged_cohort(ctx.users, 0);
    const CellResult& early =
        detail::eval_cell(ctx, "all", cohort, Architecture::lstm_early, w, Head::regression, 0.0, "steps");
    const CellResult& late =
        detail::eval_cell(ctx, "all", cohort, Architecture::lstm_late, w, Head::regression, 0.0, "steps");
    if (!early.ok) throw StateError("per-user report: early-fusion cell failed: " + early.error);
    if (!late.ok) throw StateError("per-user report: late-fusion cell failed: " + late.error);

    std::map<std::string, PerUserReport::Row> rows;
    for (const auto& pu : early.per_user) {
        auto& row = rows[pu.user_id];
        row.user_id = pu.user_id;
        row.m = pu.m;
        row.early_mae = pu.mae;
    }
    for (const auto& pu : late.per_user) {
        auto& row = rows[pu.user_id];
        row.user_id = pu.user_id;
        row.m = pu.m;
        row.late_mae = pu.mae;
    }
    for (auto& [user, row] : rows) report.rows.push_back(row);
    return report;
}

inline std::string to_csv(const PerUserReport& r) {
    std::string out = "user_id,m,early_fusion_mae,late_fusion_mae\n";
    for (const auto& row : r.rows)
        out += detail::csv_join({row.user_id, std::to_string(row.m), detail::fmt_metric(row.early_mae),
                                 detail::fmt_metric(row.late_mae)});
    return out;
}

inline std::string to_text(const PerUserReport& r) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"user", "m", "early fusion MAE", "late fusion MAE", "better"});
    for (const auto& row : r.rows) {
        std::string better = "=";
        if (row.early_mae < row.late_mae) better = "early";
        else if (row.late_mae < row.early_mae) better = "late";
        rows.push_back({row.user_id, std::to_string(row.m), detail::fmt_metric(row.early_mae),
                        detail::fmt_metric(row.late_mae), better});
    }
    return "Per-test-user fusion comparison at w=" + std::to_string(r.window) + "\n" + detail::render_table(rows);
}

struct CohortAndUserReports {
    PercentileReport percentiles;
    PerUserReport per_user;
};

inline CohortAndUserReports run_cohort_and_user_reports(ExperimentContext& ctx, int w) {
    return {run_percentile_cohorts(ctx, w), run_per_user_report(ctx, w)};
}

// ---------------------------------------------------------------------------
// Additional outcomes
// ---------------------------------------------------------------------------

struct OutcomesReport {
    struct Row {
        std::string outcome;
        bool ok = false;
        double mae = 0.0, nrmse = 0.0, mean_actual = 0.0;
        int m = 0;
        std::string error;
    };
    int window = 0;
    std::vector<Row> rows;
};

/// Early-fusion regression for each additional daily outcome.
inline OutcomesReport run_additional_outcomes(ExperimentContext& ctx, int w) {
    OutcomesReport report;
    report.window = w;
    std::vector<std::string> cohort = select_engaged_cohort(ctx.users, 0);
    for (const std::string outcome : {"sed_minutes", "wear_time", "lpa_minutes"}) {
        const CellResult& cell =
            detail::eval_cell(ctx, "all", cohort, Architecture::lstm_early, w, Head::regression, 0.0, outcome);
        OutcomesReport::Row row;
        row.outcome = outcome;
        row.ok = cell.ok;
        row.mae = cell.test_mae;
        row.nrmse = cell.test_nrmse;
        row.mean_actual = cell.mean_actual;
        row.m = cell.m;
        row.error = cell.error;
        report.rows.push_back(std::move(row));
    }
    return report;
}

inline std::string to_csv(const OutcomesReport& r) {
    std::string out = "outcome,mae,nrmse,mean_actual,m,error\n";
    for (const auto& row : r.rows)
        out += detail::csv_join({row.outcome, row.ok ? fmt_fixed(row.mae, 6) : "n/a",
                                 row.ok ? fmt_fixed(row.nrmse, 6) : "n/a",
                                 row.ok ? fmt_fixed(row.mean_actual, 6) : "n/a", std::to_string(row.m), row.error});
    return out;
}

inline std::string to_text(const OutcomesReport& r) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"outcome", "MAE", "NRMSE", "mean actual", "m"});
    for (const auto& row : r.rows)
        rows.push_back({row.outcome, row.ok ? fmt_fixed(row.mae, 2) : "error",
                        row.ok ? fmt_fixed(row.nrmse, 4) : "error", row.ok ? fmt_fixed(row.mean_actual, 2) : "error",
                        std::to_string(row.m)});
    return "Additional outcomes (early fusion) at w=" + std::to_string(r.window) + "\n" + detail::render_table(rows);
}

// ---------------------------------------------------------------------------
// Cohort summary
// ---------------------------------------------------------------------------

struct CohortSummary {
    int n_users = 0;
    double mean_valid_days = 0.0;
    double mean_daily_steps = 0.0;
    double mean_wear_hours = 0.0;
    double mean_app_minutes = 0.0;
    double lagged_correlation = 0.0;
};

inline CohortSummary summarize_cohort(const std::map<std::string, std::vector<DailyFeatures>>& users) {
    CohortSummary s;
    s.n_users = static_cast<int>(users.size());
    long long day_count = 0;
    for (const auto& [user, days] : users) {
        for (const auto& d : days) {
            s.mean_daily_steps += d.total_steps();
            s.mean_wear_hours += d.wear_minutes() / 60.0;
            s.mean_app_minutes += d.minutes_used();
            ++day_count;
        }
    }
    if (day_count > 0) {
        s.mean_daily_steps /= static_cast<double>(day_count);
        s.mean_wear_hours /= static_cast<double>(day_count);
        s.mean_app_minutes /= static_cast<double>(day_count);
        s.mean_valid_days = static_cast<double>(day_count) / std::max(1, s.n_users);
    }
    s.lagged_correlation = synth::measure_lagged_correlation(users);
    return s;
}

inline std::string to_csv(const CohortSummary& s) {
    std::string out = "metric,value\n";
    out += detail::csv_join({"users", std::to_string(s.n_users)});
    out += detail::csv_join({"mean_valid_days", fmt_fixed(s.mean_valid_days, 6)});
    out += detail::csv_join({"mean_daily_steps", fmt_fixed(s.mean_daily_steps, 6)});
    out += detail::csv_join({"mean_wear_hours", fmt_fixed(s.mean_wear_hours, 6)});
    out += detail::csv_join({"mean_app_minutes", fmt_fixed(s.mean_app_minutes, 6)});
    out += detail::csv_join({"lagged_correlation", fmt_fixed(s.lagged_correlation, 6)});
    return out;
}

inline std::string to_text(const CohortSummary& s) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"metric", "value"});
    rows.push_back({"users", std::to_string(s.n_users)});
    rows.push_back({"mean valid days", fmt_fixed(s.mean_valid_days, 2)});
    rows.push_back({"mean daily steps", fmt_fixed(s.mean_daily_steps, 2)});
    rows.push_back({"mean wear hours", fmt_fixed(s.mean_wear_hours, 2)});
    rows.push_back({"mean app minutes", fmt_fixed(s.mean_app_minutes, 2)});
    rows.push_back({"lagged engagement->steps correlation", fmt_fixed(s.lagged_correlation, 4)});
    return "Cohort summary (post-filter)\n" + detail::render_table(rows);
}

}  // namespace stepcast
