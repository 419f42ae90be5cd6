#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "stepcast/arima.hpp"
#include "stepcast/autodiff.hpp"
#include "stepcast/dataset.hpp"

namespace stepcast {

enum class Architecture {
    lstm_early,
    lstm_late,
    lstm_engagement,
    lstm_activity,
    linreg_multimodal,
    linreg_engagement,
    linreg_activity,
    arima
};

enum class Head { regression, classification };

inline const char* to_string(Architecture a) {
    switch (a) {
        case Architecture::lstm_early: return "lstm_early";
        case Architecture::lstm_late: return "lstm_late";
        case Architecture::lstm_engagement: return "lstm_engagement";
        case Architecture::lstm_activity: return "lstm_activity";
        case Architecture::linreg_multimodal: return "linreg_multimodal";
        case Architecture::linreg_engagement: return "linreg_engagement";
        case Architecture::linreg_activity: return "linreg_activity";
        case Architecture::arima: return "arima";
    }
    return "?";
}

inline Architecture architecture_from_string(const std::string& s) {
    if (s == "lstm_early") return Architecture::lstm_early;
    if (s == "lstm_late") return Architecture::lstm_late;
    if (s == "lstm_engagement") return Architecture::lstm_engagement;
    if (s == "lstm_activity") return Architecture::lstm_activity;
    if (s == "linreg_multimodal") return Architecture::linreg_multimodal;
    if (s == "linreg_engagement") return Architecture::linreg_engagement;
    if (s == "linreg_activity") return Architecture::linreg_activity;
    if (s == "arima") return Architecture::arima;
    throw ConfigError("unknown architecture '" + s + "'");
}

inline const char* to_string(Head h) { return h == Head::regression ? "regression" : "classification"; }

inline Head head_from_string(const std::string& s) {
    if (s == "regression") return Head::regression;
    if (s == "classification") return Head::classification;
    throw ConfigError("unknown head '" + s + "'");
}

inline bool is_lstm(Architecture a) {
    return a == Architecture::lstm_early || a == Architecture::lstm_late || a == Architecture::lstm_engagement ||
           a == Architecture::lstm_activity;
}

inline bool is_linreg(Architecture a) {
    return a == Architecture::linreg_multimodal || a == Architecture::linreg_engagement ||
           a == Architecture::linreg_activity;
}

struct ModelConfig {
    Architecture architecture = Architecture::lstm_early;
    int window = 7;
    int hidden = 64;       // single-LSTM hidden width
    int late_hidden = 32;  // per-branch hidden width (late fusion)
    int late_temp = 16;    // temporary-decision layer width (late fusion)
    Head head = Head::regression;
    double goal_threshold = 8000.0;  // classification only
    std::string outcome = "steps";
    double learning_rate = 1e-3;
    int max_epochs = 200;
    int batch_size = 32;
    int patience = 10;
    std::uint64_t seed = 1;
    arima::ArimaOrder arima_order{1, 1, 1};
};

inline void validate_config(const ModelConfig& cfg) {
    if (cfg.window != 3 && cfg.window != 7 && cfg.window != 14 && cfg.window != 21)
        throw ConfigError("window size must be one of {3,7,14,21}, got " + std::to_string(cfg.window));
    if (cfg.hidden <= 0 || cfg.late_hidden <= 0 || cfg.late_temp <= 0) throw ConfigError("hidden sizes must be positive");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (cfg.max_epochs <= 0 || cfg.batch_size <= 0 || cfg.patience <= 0)
        throw ConfigError("epochs, batch size and patience must be positive");
    outcome_activity_index(cfg.outcome);  // throws on unknown outcome
    if (cfg.head == Head::classification) {
        if (cfg.outcome != "steps") throw ConfigError("classification head requires the steps outcome");
        if (!(cfg.goal_threshold > 0.0)) throw ConfigError("goal threshold must be positive");
        if (!is_lstm(cfg.architecture)) throw ConfigError("classification head requires an LSTM architecture");
    }
}

/// Feature-level fusion: per day t the row is [u_t | v_t].
inline RowMatrix fuse_early(const RowMatrix& u, const RowMatrix& v) {
    if (u.rows != v.rows)
        throw ShapeError("fuse_early: window lengths differ (" + std::to_string(u.rows) + " vs " +
                         std::to_string(v.rows) + ")");
    RowMatrix out(u.rows, u.cols + v.cols);
    for (int t = 0; t < u.rows; ++t) {
        for (int c = 0; c < u.cols; ++c) out.at(t, c) = u.at(t, c);
        for (int c = 0; c < v.cols; ++c) out.at(t, u.cols + c) = v.at(t, c);
    }
    return out;
}

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

/// A fitted model of any architecture. LSTM weights and OLS coefficients
/// live in `params`; per-user fits in `user_fits` for the arima
/// architecture. (config.seed, training data) fully determine the contents.
struct TrainedForecaster {
    ModelConfig config;
    ad::ParameterSet params;
    std::map<std::string, arima::ArimaModel> user_fits;
    NormalizationStats stats;
    std::vector<EpochLog> log;
};

namespace detail {

inline int single_stream_dim(Architecture a) {
    switch (a) {
        case Architecture::lstm_early:
        case Architecture::linreg_multimodal: return kInputDim;
        case Architecture::lstm_engagement:
        case Architecture::linreg_engagement: return kEngagementDim;
        case Architecture::lstm_activity:
        case Architecture::linreg_activity: return kActivityDim;
        default: throw ConfigError("architecture has no single input stream");
    }
}

/// Per-example feature matrices plus the training target (z-scored outcome
/// for regression, 0/1 goal label for classification). Late fusion keeps the
/// two modality streams separate; every other architecture uses `primary`.
struct PreparedSet {
    std::vector<RowMatrix> primary;
    std::vector<RowMatrix> secondary;  // late fusion only
    std::vector<double> targets;

    std::size_t size() const { return primary.size(); }
};

inline PreparedSet prepare_set(const ModelConfig& cfg, const std::vector<WindowedExample>& raw,
                               const NormalizationStats& stats) {
    PreparedSet set;
    set.primary.reserve(raw.size());
    set.targets.reserve(raw.size());
    for (const auto& ex : raw) {
        if (ex.window_size() != cfg.window)
            throw ShapeError("example window has " + std::to_string(ex.window_size()) + " rows, model expects " +
                             std::to_string(cfg.window));
        // Labels come from the raw step count; normalization happens after.
        double target;
        if (cfg.head == Head::classification) {
            target = static_cast<double>(label_goal(ex, cfg.goal_threshold));
        } else {
            if (!ex.target.count(cfg.outcome))
                throw ConfigError("example is missing the '" + cfg.outcome + "' target");
            target = stats.normalize_target(cfg.outcome, ex.target.at(cfg.outcome));
        }
        WindowedExample norm = apply_normalization(ex, stats);
        switch (cfg.architecture) {
            case Architecture::lstm_early:
            case Architecture::linreg_multimodal: set.primary.push_back(fuse_early(norm.u_window, norm.v_window)); break;
            case Architecture::lstm_engagement:
            case Architecture::linreg_engagement: set.primary.push_back(norm.u_window); break;
            case Architecture::lstm_activity:
            case Architecture::linreg_activity: set.primary.push_back(norm.v_window); break;
            case Architecture::lstm_late:
                set.primary.push_back(norm.u_window);
                set.secondary.push_back(norm.v_window);
                break;
            case Architecture::arima: throw ConfigError("prepare_set: arima does not use windowed features");
        }
        set.targets.push_back(target);
    }
    return set;
}

/// Stacks row t of each selected example into a batch matrix per time step.
inline std::vector<ad::Tensor> batch_steps(const std::vector<RowMatrix>& mats, const std::vector<int>& idx) {
    int batch = static_cast<int>(idx.size());
    int w = mats[static_cast<std::size_t>(idx[0])].rows;
    int d = mats[static_cast<std::size_t>(idx[0])].cols;
    std::vector<ad::Tensor> steps;
    steps.reserve(static_cast<std::size_t>(w));
    for (int t = 0; t < w; ++t) {
        ad::Tensor m({batch, d});
        for (int b = 0; b < batch; ++b) {
            const RowMatrix& src = mats[static_cast<std::size_t>(idx[static_cast<std::size_t>(b)])];
            for (int c = 0; c < d; ++c) m.at(b, c) = src.at(t, c);
        }
        steps.push_back(std::move(m));
    }
    return steps;
}

struct GraphParams {
    std::map<std::string, ad::Tape::NodeId> ids;
};

inline ad::Tape::NodeId param_node(ad::Tape& tape, const ad::ParameterSet& params, GraphParams& gp,
                                   const std::string& name, bool trainable) {
    ad::Tensor copy = params.value(name);
    ad::Tape::NodeId id = trainable ? tape.leaf(std::move(copy)) : tape.constant(std::move(copy));
    gp.ids.emplace(name, id);
    return id;
}

/// Unrolls the cell over the step tensors and returns the final hidden
/// state (B x h). Gate blocks are [input | forget | output | candidate].
inline ad::Tape::NodeId unroll_lstm(ad::Tape& tape, const std::vector<ad::Tape::NodeId>& steps,
                                    ad::Tape::NodeId w_in, ad::Tape::NodeId w_rec, ad::Tape::NodeId bias, int batch,
                                    int hidden) {
    ad::Tape::NodeId h = tape.constant(ad::Tensor({batch, hidden}));
    ad::Tape::NodeId c = tape.constant(ad::Tensor({batch, hidden}));
    for (ad::Tape::NodeId x : steps) {
        ad::Tape::NodeId pre = tape.add(tape.linear(x, w_in, bias), tape.linear(h, w_rec));
        ad::Tape::NodeId ig = tape.sigmoid_op(tape.slice_cols(pre, 0, hidden));
        ad::Tape::NodeId fg = tape.sigmoid_op(tape.slice_cols(pre, hidden, 2 * hidden));
        ad::Tape::NodeId og = tape.sigmoid_op(tape.slice_cols(pre, 2 * hidden, 3 * hidden));
        ad::Tape::NodeId gg = tape.tanh_op(tape.slice_cols(pre, 3 * hidden, 4 * hidden));
        c = tape.add(tape.mul(fg, c), tape.mul(ig, gg));
        h = tape.mul(og, tape.tanh_op(c));
    }
    return h;
}

/// Builds the forward graph for a batch and returns the head output
/// (regression: raw score, classification: probability), B x 1.
inline ad::Tape::NodeId build_output(ad::Tape& tape, const ModelConfig& cfg, const ad::ParameterSet& params,
                                     const PreparedSet& set, const std::vector<int>& idx, bool trainable,
                                     GraphParams& gp) {
    int batch = static_cast<int>(idx.size());
    ad::Tape::NodeId out;
    if (cfg.architecture == Architecture::lstm_late) {
        auto u_steps_t = batch_steps(set.primary, idx);
        auto v_steps_t = batch_steps(set.secondary, idx);
        std::vector<ad::Tape::NodeId> u_steps, v_steps;
        for (auto& m : u_steps_t) u_steps.push_back(tape.constant(std::move(m)));
        for (auto& m : v_steps_t) v_steps.push_back(tape.constant(std::move(m)));
        ad::Tape::NodeId hu =
            unroll_lstm(tape, u_steps, param_node(tape, params, gp, "lstm_u.w_in", trainable),
                        param_node(tape, params, gp, "lstm_u.w_rec", trainable),
                        param_node(tape, params, gp, "lstm_u.bias", trainable), batch, cfg.late_hidden);
        ad::Tape::NodeId hv =
            unroll_lstm(tape, v_steps, param_node(tape, params, gp, "lstm_v.w_in", trainable),
                        param_node(tape, params, gp, "lstm_v.w_rec", trainable),
                        param_node(tape, params, gp, "lstm_v.bias", trainable), batch, cfg.late_hidden);
        ad::Tape::NodeId tu = tape.tanh_op(tape.linear(hu, param_node(tape, params, gp, "temp_u.w", trainable),
                                                       param_node(tape, params, gp, "temp_u.b", trainable)));
        ad::Tape::NodeId tv = tape.tanh_op(tape.linear(hv, param_node(tape, params, gp, "temp_v.w", trainable),
                                                       param_node(tape, params, gp, "temp_v.b", trainable)));
        ad::Tape::NodeId cat = tape.concat_cols(tu, tv);
        out = tape.linear(cat, param_node(tape, params, gp, "head.w", trainable),
                          param_node(tape, params, gp, "head.b", trainable));
    } else {
        auto steps_t = batch_steps(set.primary, idx);
        std::vector<ad::Tape::NodeId> steps;
        for (auto& m : steps_t) steps.push_back(tape.constant(std::move(m)));
        ad::Tape::NodeId h =
            unroll_lstm(tape, steps, param_node(tape, params, gp, "lstm.w_in", trainable),
                        param_node(tape, params, gp, "lstm.w_rec", trainable),
                        param_node(tape, params, gp, "lstm.bias", trainable), batch, cfg.hidden);
        out = tape.linear(h, param_node(tape, params, gp, "head.w", trainable),
                          param_node(tape, params, gp, "head.b", trainable));
    }
    if (cfg.head == Head::classification) out = tape.sigmoid_op(out);
    return out;
}

inline ad::Tape::NodeId build_loss(ad::Tape& tape, const ModelConfig& cfg, const ad::ParameterSet& params,
                                   const PreparedSet& set, const std::vector<int>& idx, bool trainable,
                                   GraphParams& gp) {
    ad::Tape::NodeId out = build_output(tape, cfg, params, set, idx, trainable, gp);
    ad::Tensor targets({static_cast<int>(idx.size()), 1});
    for (std::size_t b = 0; b < idx.size(); ++b)
        targets.data[b] = set.targets[static_cast<std::size_t>(idx[b])];
    ad::Tape::NodeId t = tape.constant(std::move(targets));
    return cfg.head == Head::classification ? tape.bce(out, t) : tape.mse(out, t);
}

/// Mean loss over the whole set, computed batch-wise without gradients.
inline double dataset_loss(const ModelConfig& cfg, const ad::ParameterSet& params, const PreparedSet& set) {
    if (set.size() == 0) return 0.0;
    double total = 0.0;
    int n = static_cast<int>(set.size());
    for (int start = 0; start < n; start += cfg.batch_size) {
        int stop = std::min(n, start + cfg.batch_size);
        std::vector<int> idx(static_cast<std::size_t>(stop - start));
        for (int i = start; i < stop; ++i) idx[static_cast<std::size_t>(i - start)] = i;
        ad::Tape tape;
        GraphParams gp;
        total += tape.value(build_loss(tape, cfg, params, set, idx, false, gp)).data[0] * (stop - start);
    }
    return total / n;
}

inline ad::ParameterSet init_params(const ModelConfig& cfg) {
    std::mt19937_64 rng(derive_seed(cfg.seed, "init"));
    ad::ParameterSet p;
    int head_in;
    if (cfg.architecture == Architecture::lstm_late) {
        ad::LSTMCellParams cu = ad::make_lstm_params(kEngagementDim, cfg.late_hidden, rng);
        ad::LSTMCellParams cv = ad::make_lstm_params(kActivityDim, cfg.late_hidden, rng);
        p.add("lstm_u.w_in", std::move(cu.w_in));
        p.add("lstm_u.w_rec", std::move(cu.w_rec));
        p.add("lstm_u.bias", std::move(cu.bias));
        p.add("lstm_v.w_in", std::move(cv.w_in));
        p.add("lstm_v.w_rec", std::move(cv.w_rec));
        p.add("lstm_v.bias", std::move(cv.bias));
        p.add("temp_u.w",
              ad::uniform_init({cfg.late_temp, cfg.late_hidden}, ad::glorot_limit(cfg.late_hidden, cfg.late_temp), rng));
        p.add("temp_u.b", ad::Tensor({cfg.late_temp}));
        p.add("temp_v.w",
              ad::uniform_init({cfg.late_temp, cfg.late_hidden}, ad::glorot_limit(cfg.late_hidden, cfg.late_temp), rng));
        p.add("temp_v.b", ad::Tensor({cfg.late_temp}));
        head_in = 2 * cfg.late_temp;
    } else {
        int d = single_stream_dim(cfg.architecture);
        ad::LSTMCellParams cell = ad::make_lstm_params(d, cfg.hidden, rng);
        p.add("lstm.w_in", std::move(cell.w_in));
        p.add("lstm.w_rec", std::move(cell.w_rec));
        p.add("lstm.bias", std::move(cell.bias));
        head_in = cfg.hidden;
    }
    p.add("head.w", ad::uniform_init({1, head_in}, ad::glorot_limit(head_in, 1), rng));
    p.add("head.b", ad::Tensor({1}));
    return p;
}

inline ad::LSTMCellParams cell_view(const ad::ParameterSet& params, const std::string& prefix) {
    ad::LSTMCellParams cell;
    cell.w_in = params.value(prefix + ".w_in");
    cell.w_rec = params.value(prefix + ".w_rec");
    cell.bias = params.value(prefix + ".bias");
    cell.hidden = cell.w_rec.cols();
    cell.input = cell.w_in.cols();
    return cell;
}

inline ad::Tensor to_tensor(const RowMatrix& m) {
    ad::Tensor t({m.rows, m.cols});
    t.data = m.data;
    return t;
}

inline std::vector<double> flatten(const RowMatrix& m) { return m.data; }

}  // namespace detail

constexpr double kGradClipNorm = 5.0;

/// Mini-batch gradient training with early stopping on validation loss.
/// The returned parameters are the best-validation-epoch snapshot. With an
/// empty validation set the training loss drives early stopping instead.
inline TrainedForecaster train_lstm(const ModelConfig& cfg, const std::vector<WindowedExample>& train,
                                    const std::vector<WindowedExample>& val, const NormalizationStats& stats) {
    validate_config(cfg);
    if (!is_lstm(cfg.architecture))
        throw ConfigError(std::string("train_lstm: architecture ") + to_string(cfg.architecture) + " is not an LSTM");
    if (train.empty()) throw ConfigError("train_lstm: empty training set");

    detail::PreparedSet train_set = detail::prepare_set(cfg, train, stats);
    detail::PreparedSet val_set = detail::prepare_set(cfg, val, stats);

    TrainedForecaster model;
    model.config = cfg;
    model.stats = stats;
    model.params = detail::init_params(cfg);

    ad::AdamState adam;
    ad::AdamConfig adam_cfg;
    adam_cfg.lr = cfg.learning_rate;

    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    int n = static_cast<int>(train_set.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    double best_val = std::numeric_limits<double>::infinity();
    std::map<std::string, ad::Tensor> best_params = model.params.values;
    int stale = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i) {
            int j = static_cast<int>(shuffle_rng() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            int stop = std::min(n, start + cfg.batch_size);
            std::vector<int> idx(order.begin() + start, order.begin() + stop);
            ad::Tape tape;
            detail::GraphParams gp;
            ad::Tape::NodeId loss = detail::build_loss(tape, cfg, model.params, train_set, idx, true, gp);
            double loss_value = tape.value(loss).data[0];
            if (!std::isfinite(loss_value))
                throw NumericalError("train_lstm: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(start / cfg.batch_size) + " (" + to_string(cfg.architecture) + ")");
            epoch_loss += loss_value * (stop - start);
            tape.backward(loss);
            for (const auto& [name, id] : gp.ids) model.params.grad(name).data = tape.grad(id).data;
            ad::clip_global_norm(model.params, kGradClipNorm);
            ad::adam_step(model.params, adam, adam_cfg);
        }
        epoch_loss /= n;
        double val_loss = val_set.size() ? detail::dataset_loss(cfg, model.params, val_set) : epoch_loss;
        model.log.push_back({epoch, epoch_loss, val_loss});
        if (val_loss < best_val - 1e-12) {
            best_val = val_loss;
            best_params = model.params.values;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    model.params.values = std::move(best_params);
    return model;
}

/// Ordinary least squares on the flattened window with ridge damping
/// lambda = 1e-6 for conditioning. The normal equations are solved with a
/// Cholesky factorization; the intercept is the last augmented column.
inline TrainedForecaster train_linreg(const ModelConfig& cfg, const std::vector<WindowedExample>& train,
                                      const NormalizationStats& stats) {
    validate_config(cfg);
    if (!is_linreg(cfg.architecture))
        throw ConfigError(std::string("train_linreg: architecture ") + to_string(cfg.architecture) +
                          " is not a linear regression");
    if (train.empty()) throw ConfigError("train_linreg: empty training set");

    detail::PreparedSet set = detail::prepare_set(cfg, train, stats);
    int m = static_cast<int>(set.size());
    int f = cfg.window * detail::single_stream_dim(cfg.architecture);
    int k = f + 1;  // +intercept

    ad::EMat x(m, k);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
        const std::vector<double>& flat = set.primary[static_cast<std::size_t>(i)].data;
        for (int j = 0; j < f; ++j) x(i, j) = flat[static_cast<std::size_t>(j)];
        x(i, f) = 1.0;
        y(i) = set.targets[static_cast<std::size_t>(i)];
    }

    ad::EMat xtx = x.transpose() * x;
    Eigen::VectorXd xty = x.transpose() * y;
    constexpr double kRidge = 1e-6;
    std::vector<double> a(static_cast<std::size_t>(k) * k);
    std::vector<double> b(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) a[static_cast<std::size_t>(i) * k + j] = xtx(i, j);
        a[static_cast<std::size_t>(i) * k + i] += kRidge;
        b[static_cast<std::size_t>(i)] = xty(i);
    }

    // In-place Cholesky A = L L^T, then two triangular solves.
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[static_cast<std::size_t>(i) * k + j];
            for (int q = 0; q < j; ++q) s -= a[static_cast<std::size_t>(i) * k + q] * a[static_cast<std::size_t>(j) * k + q];
            if (i == j) {
                if (s <= 0.0) throw NumericalError("train_linreg: normal equations not positive definite");
                a[static_cast<std::size_t>(i) * k + i] = std::sqrt(s);
            } else {
                a[static_cast<std::size_t>(i) * k + j] = s / a[static_cast<std::size_t>(j) * k + j];
            }
        }
    }
    for (int i = 0; i < k; ++i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int q = 0; q < i; ++q) s -= a[static_cast<std::size_t>(i) * k + q] * b[static_cast<std::size_t>(q)];
        b[static_cast<std::size_t>(i)] = s / a[static_cast<std::size_t>(i) * k + i];
    }
    for (int i = k - 1; i >= 0; --i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int q = i + 1; q < k; ++q) s -= a[static_cast<std::size_t>(q) * k + i] * b[static_cast<std::size_t>(q)];
        b[static_cast<std::size_t>(i)] = s / a[static_cast<std::size_t>(i) * k + i];
    }

    TrainedForecaster model;
    model.config = cfg;
    model.stats = stats;
    ad::Tensor coef({f});
    for (int j = 0; j < f; ++j) coef.data[static_cast<std::size_t>(j)] = b[static_cast<std::size_t>(j)];
    model.params.add("coef", std::move(coef));
    model.params.add("intercept", ad::Tensor::scalar(b[static_cast<std::size_t>(f)]));

    Eigen::VectorXd beta(k);
    for (int j = 0; j < k; ++j) beta(j) = b[static_cast<std::size_t>(j)];
    double train_mse = (x * beta - y).squaredNorm() / m;
    model.log.push_back({0, train_mse, train_mse});
    return model;
}

/// One ARIMA fit per training/validation user over their chronological
/// daily outcome values. Predict-time lookups are by user id.
inline TrainedForecaster train_arima(const ModelConfig& cfg,
                                     const std::map<std::string, std::vector<double>>& user_series,
                                     const NormalizationStats& stats) {
    if (cfg.architecture != Architecture::arima) throw ConfigError("train_arima: architecture must be arima");
    TrainedForecaster model;
    model.config = cfg;
    model.stats = stats;
    for (const auto& [user, series] : user_series) {
        try {
            model.user_fits.emplace(user, arima::fit_arima(series, cfg.arima_order));
        } catch (const ConfigError&) {
            arima::ArimaModel fallback;
            fallback.order = arima::ArimaOrder{0, 1, 0};
            fallback.fell_back = true;
            model.user_fits.emplace(user, fallback);
        }
    }
    return model;
}

/// Mean raw training target — the constant predictor baseline.
inline double training_mean(const std::vector<WindowedExample>& train, const std::string& outcome) {
    if (train.empty()) throw ConfigError("training_mean: empty training set");
    double s = 0.0;
    for (const auto& ex : train) {
        auto it = ex.target.find(outcome);
        if (it == ex.target.end()) throw ConfigError("training_mean: example is missing '" + outcome + "'");
        s += it->second;
    }
    return s / static_cast<double>(train.size());
}

/// Deterministic single-example forecast. Regression outputs are
/// de-normalized to raw units and clamped at 0; classification outputs the
/// goal probability.
inline double predict(const TrainedForecaster& model, const WindowedExample& ex) {
    const ModelConfig& cfg = model.config;
    if (cfg.architecture == Architecture::arima) {
        auto it = model.user_fits.find(ex.user_id);
        if (it == model.user_fits.end())
            throw StateError("predict: no per-user arima fit for '" + ex.user_id + "'");
        std::vector<double> history(static_cast<std::size_t>(ex.v_window.rows));
        for (int t = 0; t < ex.v_window.rows; ++t) history[static_cast<std::size_t>(t)] = ex.v_window.at(t, kActTotalSteps);
        return std::max(0.0, arima::forecast_one(it->second, history));
    }

    if (ex.window_size() != cfg.window)
        throw ShapeError("predict: window has " + std::to_string(ex.window_size()) + " rows, model expects " +
                         std::to_string(cfg.window));
    WindowedExample norm = apply_normalization(ex, model.stats);

    double z;
    if (is_linreg(cfg.architecture)) {
        const RowMatrix* m = nullptr;
        RowMatrix fused;
        switch (cfg.architecture) {
            case Architecture::linreg_multimodal:
                fused = fuse_early(norm.u_window, norm.v_window);
                m = &fused;
                break;
            case Architecture::linreg_engagement: m = &norm.u_window; break;
            default: m = &norm.v_window; break;
        }
        const ad::Tensor& coef = model.params.value("coef");
        if (coef.numel() != m->data.size())
            throw ShapeError("predict: coefficient count " + std::to_string(coef.numel()) +
                             " does not match feature count " + std::to_string(m->data.size()));
        double acc = model.params.value("intercept").data[0];
        for (std::size_t i = 0; i < m->data.size(); ++i) acc += coef.data[i] * m->data[i];
        z = acc;
    } else if (cfg.architecture == Architecture::lstm_late) {
        ad::LSTMCellParams cu = detail::cell_view(model.params, "lstm_u");
        ad::LSTMCellParams cv = detail::cell_view(model.params, "lstm_v");
        auto ru = ad::lstm_forward(detail::to_tensor(norm.u_window), cu);
        auto rv = ad::lstm_forward(detail::to_tensor(norm.v_window), cv);
        std::vector<double> tu = ad::dense_forward(ru.h_final, model.params.value("temp_u.w"),
                                                   model.params.value("temp_u.b").data, ad::Activation::tanh);
        std::vector<double> tv = ad::dense_forward(rv.h_final, model.params.value("temp_v.w"),
                                                   model.params.value("temp_v.b").data, ad::Activation::tanh);
        std::vector<double> cat = tu;
        cat.insert(cat.end(), tv.begin(), tv.end());
        z = ad::dense_forward(cat, model.params.value("head.w"), model.params.value("head.b").data,
                              ad::Activation::identity)[0];
    } else {
        RowMatrix seq;
        switch (cfg.architecture) {
            case Architecture::lstm_early: seq = fuse_early(norm.u_window, norm.v_window); break;
            case Architecture::lstm_engagement: seq = norm.u_window; break;
            default: seq = norm.v_window; break;
        }
        ad::LSTMCellParams cell = detail::cell_view(model.params, "lstm");
        auto r = ad::lstm_forward(detail::to_tensor(seq), cell);
        z = ad::dense_forward(r.h_final, model.params.value("head.w"), model.params.value("head.b").data,
                              ad::Activation::identity)[0];
    }

    if (cfg.head == Head::classification) return ad::sigmoid(z);
    return std::max(0.0, model.stats.denormalize_target(cfg.outcome, z));
}

/// Finite-difference check of the full training gradient on a small random
/// problem for the configured architecture and head.
inline ad::GradCheckReport grad_check_model(const ModelConfig& cfg, int n_examples, std::uint64_t seed,
                                            int entries_per_tensor = 48) {
    std::mt19937_64 rng(derive_seed(seed, "gradcheck-data"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    detail::PreparedSet set;
    bool late = cfg.architecture == Architecture::lstm_late;
    int d = late ? kEngagementDim : detail::single_stream_dim(cfg.architecture);
    for (int i = 0; i < n_examples; ++i) {
        RowMatrix primary(cfg.window, d);
        for (double& v : primary.data) v = gauss(rng);
        set.primary.push_back(std::move(primary));
        if (late) {
            RowMatrix secondary(cfg.window, kActivityDim);
            for (double& v : secondary.data) v = gauss(rng);
            set.secondary.push_back(std::move(secondary));
        }
        if (cfg.head == Head::classification)
            set.targets.push_back(rng() % 2 ? 1.0 : 0.0);
        else
            set.targets.push_back(gauss(rng));
    }
    std::vector<int> idx(static_cast<std::size_t>(n_examples));
    for (int i = 0; i < n_examples; ++i) idx[static_cast<std::size_t>(i)] = i;

    ad::ParameterSet params = detail::init_params(cfg);
    auto loss_fn = [&]() {
        ad::Tape tape;
        detail::GraphParams gp;
        return tape.value(detail::build_loss(tape, cfg, params, set, idx, false, gp)).data[0];
    };
    auto grad_fn = [&]() {
        ad::Tape tape;
        detail::GraphParams gp;
        ad::Tape::NodeId loss = detail::build_loss(tape, cfg, params, set, idx, true, gp);
        tape.backward(loss);
        for (const auto& [name, id] : gp.ids) params.grad(name).data = tape.grad(id).data;
        return tape.value(loss).data[0];
    };
    return ad::grad_check(params, loss_fn, grad_fn, 1e-5, entries_per_tensor, derive_seed(seed, "gradcheck-sample"));
}

}  // namespace stepcast
