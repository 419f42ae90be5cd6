#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stepcast/csv.hpp"
#include "stepcast/date.hpp"

namespace stepcast {

enum class Intensity { nonwear, sedentary, light, mvpa };

inline const char* to_string(Intensity i) {
    switch (i) {
        case Intensity::nonwear: return "nonwear";
        case Intensity::sedentary: return "sedentary";
        case Intensity::light: return "light";
        case Intensity::mvpa: return "mvpa";
    }
    return "?";
}

inline std::optional<Intensity> intensity_from_string(const std::string& s) {
    if (s == "nonwear") return Intensity::nonwear;
    if (s == "sedentary") return Intensity::sedentary;
    if (s == "light") return Intensity::light;
    if (s == "mvpa") return Intensity::mvpa;
    return std::nullopt;
}

/// One wearable minute. At most one record per (user, date, minute).
struct MinuteActivityRecord {
    std::string user_id;
    Date date;
    int minute_of_day = 0;  // 0..1439
    long steps = 0;
    Intensity intensity = Intensity::nonwear;
};

/// One app-usage minute. foreground_minutes is the fraction of the minute the
/// app was in foreground; opens counts app-open events starting in the minute.
struct EngagementMinuteRecord {
    std::string user_id;
    Date date;
    int minute_of_day = 0;
    double foreground_minutes = 0.0;  // in [0,1]
    long opens = 0;
};

// Feature vector layouts. Engagement: [0] minutes used, [1] times opened,
// [2..8] day-of-week one-hot (0 = Monday), [9..32] minutes used per hour,
// [33..56] times opened per hour. Activity: [0] total steps, [1] sedentary
// minutes, [2] LPA minutes, [3] MVPA minutes, [4] wear time minutes,
// [5..7] sedentary/LPA/MVPA ratios.
inline constexpr int kEngagementDim = 57;
inline constexpr int kActivityDim = 8;

inline constexpr int kEngMinutesUsed = 0;
inline constexpr int kEngTimesOpened = 1;
inline constexpr int kEngDowOneHot = 2;
inline constexpr int kEngHourlyMinutes = 9;
inline constexpr int kEngHourlyOpens = 33;

inline constexpr int kActTotalSteps = 0;
inline constexpr int kActSedMinutes = 1;
inline constexpr int kActLpaMinutes = 2;
inline constexpr int kActMvpaMinutes = 3;
inline constexpr int kActWearMinutes = 4;
inline constexpr int kActSedRatio = 5;
inline constexpr int kActLpaRatio = 6;
inline constexpr int kActMvpaRatio = 7;

/// One user-day after aggregation.
struct DailyFeatures {
    std::string user_id;
    Date date;
    int day_of_week = 0;  // 0 = Monday
    std::array<double, kEngagementDim> engagement{};
    std::array<double, kActivityDim> activity{};

    double wear_minutes() const { return activity[kActWearMinutes]; }
    double total_steps() const { return activity[kActTotalSteps]; }
    double minutes_used() const { return engagement[kEngMinutesUsed]; }
};

inline constexpr const char* kActivityCsvHeader = "user_id,date,minute_of_day,steps,intensity";
inline constexpr const char* kEngagementCsvHeader = "user_id,date,minute_of_day,foreground_minutes,opens";

namespace detail {

struct RecordKey {
    std::string user;
    int date_serial;
    int minute;
    friend auto operator<=>(const RecordKey&, const RecordKey&) = default;
};

}  // namespace detail

/// Parses the activity CSV. Rows may arrive in any order; the result is
/// sorted by (user, date, minute). Duplicates and malformed rows throw.
inline std::vector<MinuteActivityRecord> parse_activity_csv(const std::string& path) {
    std::vector<MinuteActivityRecord> records;
    std::map<detail::RecordKey, int> seen;  // key -> first line
    for_each_csv_row(path, kActivityCsvHeader, [&](const std::vector<std::string>& f, int line_no) {
        if (f.size() != 5) throw ParseError(path + ":" + std::to_string(line_no) + ": expected 5 fields");
        MinuteActivityRecord r;
        r.user_id = f[0];
        if (r.user_id.empty()) throw ParseError(path + ":" + std::to_string(line_no) + ": empty user_id");
        try {
            r.date = Date::parse(f[1]);
        } catch (const ParseError& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        r.minute_of_day = static_cast<int>(parse_long_field(f[2], path, line_no, "minute_of_day"));
        if (r.minute_of_day < 0 || r.minute_of_day > 1439)
            throw ParseError(path + ":" + std::to_string(line_no) + ": minute_of_day out of range");
        r.steps = parse_long_field(f[3], path, line_no, "steps");
        if (r.steps < 0) throw ParseError(path + ":" + std::to_string(line_no) + ": negative steps");
        auto intensity = intensity_from_string(f[4]);
        if (!intensity) throw ParseError(path + ":" + std::to_string(line_no) + ": unknown intensity '" + f[4] + "'");
        r.intensity = *intensity;
        if (r.intensity == Intensity::nonwear && r.steps != 0)
            throw ParseError(path + ":" + std::to_string(line_no) + ": nonwear minute with nonzero steps");
        detail::RecordKey key{r.user_id, r.date.serial(), r.minute_of_day};
        auto [it, inserted] = seen.emplace(key, line_no);
        if (!inserted)
            throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate record for (" + r.user_id + "," +
                             r.date.to_string() + "," + std::to_string(r.minute_of_day) + "), first at line " +
                             std::to_string(it->second));
        records.push_back(std::move(r));
    });
    std::sort(records.begin(), records.end(), [](const MinuteActivityRecord& a, const MinuteActivityRecord& b) {
        return std::tie(a.user_id, a.date, a.minute_of_day) < std::tie(b.user_id, b.date, b.minute_of_day);
    });
    return records;
}

inline std::vector<EngagementMinuteRecord> parse_engagement_csv(const std::string& path) {
    std::vector<EngagementMinuteRecord> records;
    std::map<detail::RecordKey, int> seen;
    for_each_csv_row(path, kEngagementCsvHeader, [&](const std::vector<std::string>& f, int line_no) {
        if (f.size() != 5) throw ParseError(path + ":" + std::to_string(line_no) + ": expected 5 fields");
        EngagementMinuteRecord r;
        r.user_id = f[0];
        if (r.user_id.empty()) throw ParseError(path + ":" + std::to_string(line_no) + ": empty user_id");
        try {
            r.date = Date::parse(f[1]);
        } catch (const ParseError& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        r.minute_of_day = static_cast<int>(parse_long_field(f[2], path, line_no, "minute_of_day"));
        if (r.minute_of_day < 0 || r.minute_of_day > 1439)
            throw ParseError(path + ":" + std::to_string(line_no) + ": minute_of_day out of range");
        r.foreground_minutes = parse_double_field(f[3], path, line_no, "foreground_minutes");
        if (r.foreground_minutes < 0.0 || r.foreground_minutes > 1.0)
            throw ParseError(path + ":" + std::to_string(line_no) + ": foreground_minutes outside [0,1]");
        r.opens = parse_long_field(f[4], path, line_no, "opens");
        if (r.opens < 0) throw ParseError(path + ":" + std::to_string(line_no) + ": negative opens");
        detail::RecordKey key{r.user_id, r.date.serial(), r.minute_of_day};
        auto [it, inserted] = seen.emplace(key, line_no);
        if (!inserted)
            throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate record for (" + r.user_id + "," +
                             r.date.to_string() + "," + std::to_string(r.minute_of_day) + "), first at line " +
                             std::to_string(it->second));
        records.push_back(std::move(r));
    });
    std::sort(records.begin(), records.end(), [](const EngagementMinuteRecord& a, const EngagementMinuteRecord& b) {
        return std::tie(a.user_id, a.date, a.minute_of_day) < std::tie(b.user_id, b.date, b.minute_of_day);
    });
    return records;
}

inline std::pair<std::vector<MinuteActivityRecord>, std::vector<EngagementMinuteRecord>> parse_streams(
    const std::string& activity_file, const std::string& engagement_file) {
    return {parse_activity_csv(activity_file), parse_engagement_csv(engagement_file)};
}

inline void write_activity_csv(const std::string& path, const std::vector<MinuteActivityRecord>& records) {
    CsvWriter w(path);
    w.raw_line(kActivityCsvHeader);
    for (const auto& r : records)
        w.row({r.user_id, r.date.to_string(), std::to_string(r.minute_of_day), std::to_string(r.steps),
               to_string(r.intensity)});
}

inline void write_engagement_csv(const std::string& path, const std::vector<EngagementMinuteRecord>& records) {
    CsvWriter w(path);
    w.raw_line(kEngagementCsvHeader);
    for (const auto& r : records)
        w.row({r.user_id, r.date.to_string(), std::to_string(r.minute_of_day), fmt_g(r.foreground_minutes),
               std::to_string(r.opens)});
}

/// Aggregates the minute records of one user-day into the daily feature
/// vectors. Minutes without a record count as nonwear with zero engagement.
inline DailyFeatures aggregate_day(const std::vector<MinuteActivityRecord>& activity_minutes,
                                   const std::vector<EngagementMinuteRecord>& engagement_minutes) {
    if (activity_minutes.empty() && engagement_minutes.empty())
        throw AggregationError("aggregate_day: no records to identify the user-day");

    std::string user = activity_minutes.empty() ? engagement_minutes.front().user_id : activity_minutes.front().user_id;
    Date date = activity_minutes.empty() ? engagement_minutes.front().date : activity_minutes.front().date;
    for (const auto& r : activity_minutes)
        if (r.user_id != user || r.date != date)
            throw AggregationError("aggregate_day: activity records mix users or dates");
    for (const auto& r : engagement_minutes)
        if (r.user_id != user || r.date != date)
            throw AggregationError("aggregate_day: engagement records mix users or dates");

    DailyFeatures day;
    day.user_id = user;
    day.date = date;
    day.day_of_week = date.day_of_week();
    day.engagement.fill(0.0);
    day.activity.fill(0.0);
    day.engagement[kEngDowOneHot + day.day_of_week] = 1.0;

    for (const auto& r : activity_minutes) {
        day.activity[kActTotalSteps] += static_cast<double>(r.steps);
        switch (r.intensity) {
            case Intensity::nonwear: break;
            case Intensity::sedentary: day.activity[kActSedMinutes] += 1.0; break;
            case Intensity::light: day.activity[kActLpaMinutes] += 1.0; break;
            case Intensity::mvpa: day.activity[kActMvpaMinutes] += 1.0; break;
        }
    }
    day.activity[kActWearMinutes] =
        day.activity[kActSedMinutes] + day.activity[kActLpaMinutes] + day.activity[kActMvpaMinutes];
    double wear = day.activity[kActWearMinutes];
    if (wear > 0.0) {
        day.activity[kActSedRatio] = day.activity[kActSedMinutes] / wear;
        day.activity[kActLpaRatio] = day.activity[kActLpaMinutes] / wear;
        day.activity[kActMvpaRatio] = day.activity[kActMvpaMinutes] / wear;
    }

    for (const auto& r : engagement_minutes) {
        int hour = r.minute_of_day / 60;
        day.engagement[kEngMinutesUsed] += r.foreground_minutes;
        day.engagement[kEngTimesOpened] += static_cast<double>(r.opens);
        day.engagement[kEngHourlyMinutes + hour] += r.foreground_minutes;
        day.engagement[kEngHourlyOpens + hour] += static_cast<double>(r.opens);
    }
    return day;
}

/// Wear-time validity filter: keeps days with >= 600 wear minutes.
inline std::vector<DailyFeatures> filter_valid_days(const std::vector<DailyFeatures>& days) {
    std::vector<DailyFeatures> out;
    out.reserve(days.size());
    for (const auto& d : days)
        if (d.wear_minutes() >= 600.0) out.push_back(d);
    return out;
}

/// Keeps users that still have at least 10 valid days.
inline std::map<std::string, std::vector<DailyFeatures>> filter_valid_users(
    const std::map<std::string, std::vector<DailyFeatures>>& users) {
    std::map<std::string, std::vector<DailyFeatures>> out;
    for (const auto& [user, days] : users)
        if (days.size() >= 10) out.emplace(user, days);
    return out;
}

/// Groups parsed minute streams into per-user chronological day sequences and
/// aggregates each user-day. No validity filtering is applied here.
inline std::map<std::string, std::vector<DailyFeatures>> aggregate_cohort(
    const std::vector<MinuteActivityRecord>& activity, const std::vector<EngagementMinuteRecord>& engagement) {
    using DayKey = std::pair<std::string, int>;  // (user, date serial)
    std::map<DayKey, std::pair<std::vector<MinuteActivityRecord>, std::vector<EngagementMinuteRecord>>> groups;
    for (const auto& r : activity) groups[{r.user_id, r.date.serial()}].first.push_back(r);
    for (const auto& r : engagement) groups[{r.user_id, r.date.serial()}].second.push_back(r);

    std::map<std::string, std::vector<DailyFeatures>> out;
    for (auto& [key, recs] : groups) out[key.first].push_back(aggregate_day(recs.first, recs.second));
    for (auto& [user, days] : out)
        std::sort(days.begin(), days.end(), [](const DailyFeatures& a, const DailyFeatures& b) { return a.date < b.date; });
    return out;
}

/// Full preprocessing: aggregate, drop short-wear days, drop short users.
inline std::map<std::string, std::vector<DailyFeatures>> preprocess_cohort(
    const std::vector<MinuteActivityRecord>& activity, const std::vector<EngagementMinuteRecord>& engagement) {
    auto users = aggregate_cohort(activity, engagement);
    std::map<std::string, std::vector<DailyFeatures>> filtered;
    for (auto& [user, days] : users) {
        auto valid = filter_valid_days(days);
        if (!valid.empty()) filtered.emplace(user, std::move(valid));
    }
    return filter_valid_users(filtered);
}

// Daily feature CSV (one row per user-day), used by `predict` window files
// and as a debugging artifact. Columns: user_id,date,e0..e56,a0..a7.
inline std::string daily_features_csv_header() {
    std::string h = "user_id,date";
    for (int i = 0; i < kEngagementDim; ++i) h += ",e" + std::to_string(i);
    for (int i = 0; i < kActivityDim; ++i) h += ",a" + std::to_string(i);
    return h;
}

inline void write_daily_features_csv(const std::string& path, const std::vector<DailyFeatures>& days) {
    CsvWriter w(path);
    w.raw_line(daily_features_csv_header());
    for (const auto& d : days) {
        std::vector<std::string> fields{d.user_id, d.date.to_string()};
        for (double v : d.engagement) fields.push_back(fmt_g(v));
        for (double v : d.activity) fields.push_back(fmt_g(v));
        w.row(fields);
    }
}

inline std::vector<DailyFeatures> read_daily_features_csv(const std::string& path) {
    std::vector<DailyFeatures> out;
    for_each_csv_row(path, daily_features_csv_header(), [&](const std::vector<std::string>& f, int line_no) {
        if (f.size() != 2u + kEngagementDim + kActivityDim)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(2 + kEngagementDim + kActivityDim) + " fields");
        DailyFeatures d;
        d.user_id = f[0];
        d.date = Date::parse(f[1]);
        d.day_of_week = d.date.day_of_week();
        for (int i = 0; i < kEngagementDim; ++i) d.engagement[i] = parse_double_field(f[2 + i], path, line_no, "feature");
        for (int i = 0; i < kActivityDim; ++i)
            d.activity[i] = parse_double_field(f[2 + kEngagementDim + i], path, line_no, "feature");
        out.push_back(std::move(d));
    });
    return out;
}

}  // namespace stepcast
