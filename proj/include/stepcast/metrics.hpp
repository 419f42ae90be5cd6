#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "stepcast/common.hpp"

namespace stepcast {

inline void require_paired(const std::vector<double>& a, const std::vector<double>& b, const char* what) {
    if (a.empty() || a.size() != b.size())
        throw MetricError(std::string(what) + ": needs equal nonempty lengths, got " + std::to_string(a.size()) +
                          " and " + std::to_string(b.size()));
}

inline double mae(const std::vector<double>& predictions, const std::vector<double>& actuals) {
    require_paired(predictions, actuals, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) s += std::fabs(actuals[i] - predictions[i]);
    return s / static_cast<double>(predictions.size());
}

inline double rmse(const std::vector<double>& predictions, const std::vector<double>& actuals) {
    require_paired(predictions, actuals, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double d = actuals[i] - predictions[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(predictions.size()));
}

/// RMSE divided by the mean of the actual values; undefined when that mean
/// is not positive.
inline double nrmse(const std::vector<double>& predictions, const std::vector<double>& actuals) {
    require_paired(predictions, actuals, "nrmse");
    double mean = 0.0;
    for (double v : actuals) mean += v;
    mean /= static_cast<double>(actuals.size());
    if (!(mean > 0.0)) throw MetricError("nrmse: mean of actuals is " + fmt_g(mean) + ", normalizer must be > 0");
    return rmse(predictions, actuals) / mean;
}

struct ClassificationScore {
    double accuracy = 0.0;
    double f1 = 0.0;
    long long tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Accuracy and positive-class F1. F1 is 0 when precision + recall is 0
/// (degenerate classifier convention).
inline ClassificationScore accuracy_f1(const std::vector<int>& predicted, const std::vector<int>& actual) {
    if (predicted.empty() || predicted.size() != actual.size())
        throw MetricError("accuracy_f1: needs equal nonempty lengths");
    ClassificationScore s;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        int p = predicted[i], a = actual[i];
        if ((p != 0 && p != 1) || (a != 0 && a != 1)) throw MetricError("accuracy_f1: labels must be 0/1");
        if (p == 1 && a == 1) ++s.tp;
        else if (p == 1 && a == 0) ++s.fp;
        else if (p == 0 && a == 1) ++s.fn;
        else ++s.tn;
    }
    double m = static_cast<double>(predicted.size());
    s.accuracy = static_cast<double>(s.tp + s.tn) / m;
    double precision = s.tp + s.fp > 0 ? static_cast<double>(s.tp) / (s.tp + s.fp) : 0.0;
    double recall = s.tp + s.fn > 0 ? static_cast<double>(s.tp) / (s.tp + s.fn) : 0.0;
    s.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return s;
}

/// Signed relative margin in percent: negative means the model's error is
/// lower than the baseline's. Rounded to the nearest integer percent.
inline long margin_percent(double model_mae, double baseline_mae) {
    if (!(baseline_mae > 0.0)) throw MetricError("margin_percent: baseline MAE must be > 0");
    return std::lround(100.0 * (model_mae - baseline_mae) / baseline_mae);
}

struct PerUserMetric {
    std::string user_id;
    int m = 0;  // test examples contributed by this user
    double mae = 0.0;
};

struct MetricsReport {
    std::string experiment_id;
    int m = 0;  // total test examples
    double mae = 0.0;
    double rmse = 0.0;
    double nrmse = 0.0;
    std::optional<double> accuracy;  // classification runs only
    std::optional<double> f1;
    std::vector<PerUserMetric> per_user;
};

}  // namespace stepcast
