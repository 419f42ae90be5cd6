#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "stepcast/ingest.hpp"

namespace stepcast {

/// Dense row-major matrix, the window container.
struct RowMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    RowMatrix() = default;
    RowMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

inline const std::vector<std::string>& all_outcomes() {
    static const std::vector<std::string> names{"steps", "sed_minutes", "wear_time", "lpa_minutes"};
    return names;
}

inline int outcome_activity_index(const std::string& outcome) {
    if (outcome == "steps") return kActTotalSteps;
    if (outcome == "sed_minutes") return kActSedMinutes;
    if (outcome == "wear_time") return kActWearMinutes;
    if (outcome == "lpa_minutes") return kActLpaMinutes;
    throw ConfigError("unknown outcome '" + outcome + "'");
}

/// A w-day multimodal input window plus the next retained day's outcomes.
struct WindowedExample {
    std::string user_id;
    Date target_date;
    RowMatrix u_window;  // w x 57 engagement
    RowMatrix v_window;  // w x 8 activity
    std::map<std::string, double> target;

    int window_size() const { return u_window.rows; }
};

/// Slides a w-day window over one user's retained valid days. Windows span
/// positions in the retained sequence; calendar gaps are tolerated unless
/// require_contiguous_days is set, in which case the w input days plus the
/// target day must be consecutive calendar dates.
inline std::vector<WindowedExample> build_windows(const std::vector<DailyFeatures>& days, int w,
                                                  const std::vector<std::string>& outcomes = all_outcomes(),
                                                  bool require_contiguous_days = false) {
    if (w <= 0) throw ConfigError("window size must be positive, got " + std::to_string(w));
    std::vector<WindowedExample> out;
    int n = static_cast<int>(days.size());
    if (n <= w) return out;
    for (int j = w; j < n; ++j) {
        if (require_contiguous_days && days[j].date.serial() - days[j - w].date.serial() != w) continue;
        WindowedExample ex;
        ex.user_id = days[j].user_id;
        ex.target_date = days[j].date;
        ex.u_window = RowMatrix(w, kEngagementDim);
        ex.v_window = RowMatrix(w, kActivityDim);
        for (int t = 0; t < w; ++t) {
            const DailyFeatures& d = days[j - w + t];
            for (int c = 0; c < kEngagementDim; ++c) ex.u_window.at(t, c) = d.engagement[c];
            for (int c = 0; c < kActivityDim; ++c) ex.v_window.at(t, c) = d.activity[c];
        }
        for (const auto& name : outcomes) ex.target[name] = days[j].activity[outcome_activity_index(name)];
        out.push_back(std::move(ex));
    }
    return out;
}

/// Participant-level split. Deterministic for a given seed.
struct SplitAssignment {
    std::set<std::string> train_users, val_users, test_users;
    std::uint64_t seed = 0;
};

inline SplitAssignment split_participants(const std::vector<std::string>& users, double test_fraction,
                                          double val_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw SplitError("test_fraction must be in (0,1)");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0 - test_fraction))
        throw SplitError("val_fraction must be in [0, 1 - test_fraction)");
    std::vector<std::string> ids(users.begin(), users.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    int n = static_cast<int>(ids.size());
    if (n < 3) throw SplitError("need at least 3 users to split, got " + std::to_string(n));

    // Fisher-Yates with explicit draws so the assignment is stable across
    // standard library implementations.
    std::mt19937_64 rng(seed);
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(ids[i], ids[j]);
    }

    int n_test = std::max(1, static_cast<int>(std::lround(n * test_fraction)));
    int n_val = static_cast<int>(std::lround(n * val_fraction));
    if (n_test + n_val >= n) n_val = std::max(0, n - n_test - 1);
    if (n_test + n_val >= n) throw SplitError("split leaves no training users");

    SplitAssignment split;
    split.seed = seed;
    for (int i = 0; i < n_test; ++i) split.test_users.insert(ids[i]);
    for (int i = n_test; i < n_test + n_val; ++i) split.val_users.insert(ids[i]);
    for (int i = n_test + n_val; i < n; ++i) split.train_users.insert(ids[i]);
    return split;
}

/// Z-score statistics fitted on training examples only. Input features are
/// indexed engagement 0..56 then activity 57..64.
struct NormalizationStats {
    std::vector<double> input_mean;  // 65
    std::vector<double> input_std;   // 65, floored at 1e-8
    std::map<std::string, double> target_mean;
    std::map<std::string, double> target_std;

    static constexpr double kStdFloor = 1e-8;

    double normalize_target(const std::string& outcome, double raw) const {
        return (raw - target_mean.at(outcome)) / target_std.at(outcome);
    }
    double denormalize_target(const std::string& outcome, double z) const {
        return z * target_std.at(outcome) + target_mean.at(outcome);
    }
};

inline constexpr int kInputDim = kEngagementDim + kActivityDim;  // 65

namespace detail {

struct Welford {
    long long n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void add(double x) {
        ++n;
        double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double variance() const { return n > 0 ? m2 / static_cast<double>(n) : 0.0; }
};

}  // namespace detail

/// Population mean/std per input feature over every window row of the
/// training examples, plus per-outcome target statistics.
inline NormalizationStats fit_normalization(const std::vector<WindowedExample>& train_examples) {
    if (train_examples.empty()) throw ConfigError("fit_normalization: empty training set");
    std::vector<detail::Welford> acc(kInputDim);
    std::map<std::string, detail::Welford> target_acc;
    for (const auto& ex : train_examples) {
        for (int t = 0; t < ex.u_window.rows; ++t) {
            for (int c = 0; c < kEngagementDim; ++c) acc[c].add(ex.u_window.at(t, c));
            for (int c = 0; c < kActivityDim; ++c) acc[kEngagementDim + c].add(ex.v_window.at(t, c));
        }
        for (const auto& [name, v] : ex.target) target_acc[name].add(v);
    }
    NormalizationStats stats;
    stats.input_mean.resize(kInputDim);
    stats.input_std.resize(kInputDim);
    for (int i = 0; i < kInputDim; ++i) {
        stats.input_mean[i] = acc[i].mean;
        stats.input_std[i] = std::max(std::sqrt(acc[i].variance()), NormalizationStats::kStdFloor);
    }
    for (const auto& [name, a] : target_acc) {
        stats.target_mean[name] = a.mean;
        stats.target_std[name] = std::max(std::sqrt(a.variance()), NormalizationStats::kStdFloor);
    }
    return stats;
}

inline WindowedExample apply_normalization(const WindowedExample& ex, const NormalizationStats& stats) {
    WindowedExample out = ex;
    for (int t = 0; t < out.u_window.rows; ++t) {
        for (int c = 0; c < kEngagementDim; ++c)
            out.u_window.at(t, c) = (out.u_window.at(t, c) - stats.input_mean[c]) / stats.input_std[c];
        for (int c = 0; c < kActivityDim; ++c)
            out.v_window.at(t, c) =
                (out.v_window.at(t, c) - stats.input_mean[kEngagementDim + c]) / stats.input_std[kEngagementDim + c];
    }
    for (auto& [name, v] : out.target) v = stats.normalize_target(name, v);
    return out;
}

inline WindowedExample invert_normalization(const WindowedExample& ex, const NormalizationStats& stats) {
    WindowedExample out = ex;
    for (int t = 0; t < out.u_window.rows; ++t) {
        for (int c = 0; c < kEngagementDim; ++c)
            out.u_window.at(t, c) = out.u_window.at(t, c) * stats.input_std[c] + stats.input_mean[c];
        for (int c = 0; c < kActivityDim; ++c)
            out.v_window.at(t, c) =
                out.v_window.at(t, c) * stats.input_std[kEngagementDim + c] + stats.input_mean[kEngagementDim + c];
    }
    for (auto& [name, v] : out.target) v = stats.denormalize_target(name, v);
    return out;
}

/// Goal label: 1 iff next-day steps are strictly over the threshold.
inline int label_goal(const WindowedExample& ex, double threshold) {
    auto it = ex.target.find("steps");
    if (it == ex.target.end()) throw ConfigError("label_goal: example has no steps target");
    return it->second > threshold ? 1 : 0;
}

/// Users at or above the given percentile of the mean-daily-app-minutes
/// ranking. Percentile 0 returns everyone. Ties break on user id so nested
/// percentiles select nested user sets.
inline std::vector<std::string> select_engaged_cohort(const std::map<std::string, std::vector<DailyFeatures>>& users,
                                                      int percentile) {
    if (percentile < 0 || percentile > 100) throw ConfigError("percentile must be in [0,100]");
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [user, days] : users) {
        double mean = 0.0;
        if (!days.empty()) {
            for (const auto& d : days) mean += d.minutes_used();
            mean /= static_cast<double>(days.size());
        }
        ranked.emplace_back(mean, user);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    int n = static_cast<int>(ranked.size());
    int keep = n - static_cast<int>(std::floor(n * percentile / 100.0));
    std::vector<std::string> out;
    for (int i = 0; i < keep; ++i) out.push_back(ranked[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace stepcast
