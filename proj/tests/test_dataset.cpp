#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "stepcast/dataset.hpp"

using namespace stepcast;

namespace {

// One valid day with recognizable, index-dependent values.
DailyFeatures make_day(const std::string& user, const char* start, int offset, double steps, double app_minutes) {
    DailyFeatures d;
    d.user_id = user;
    d.date = Date::parse(start).plus_days(offset);
    d.day_of_week = d.date.day_of_week();
    d.engagement.fill(0.0);
    d.activity.fill(0.0);
    d.engagement[kEngMinutesUsed] = app_minutes;
    d.engagement[kEngTimesOpened] = app_minutes / 2.0;
    d.engagement[kEngDowOneHot + d.day_of_week] = 1.0;
    d.engagement[kEngHourlyMinutes + 10] = app_minutes;
    d.engagement[kEngHourlyOpens + 10] = app_minutes / 2.0;
    d.activity[kActTotalSteps] = steps;
    d.activity[kActSedMinutes] = 400.0;
    d.activity[kActLpaMinutes] = 200.0 + offset;
    d.activity[kActMvpaMinutes] = 30.0;
    d.activity[kActWearMinutes] = 630.0 + offset;
    d.activity[kActSedRatio] = 400.0 / d.activity[kActWearMinutes];
    d.activity[kActLpaRatio] = (200.0 + offset) / d.activity[kActWearMinutes];
    d.activity[kActMvpaRatio] = 30.0 / d.activity[kActWearMinutes];
    return d;
}

std::vector<DailyFeatures> make_days(const std::string& user, int n) {
    std::vector<DailyFeatures> days;
    for (int i = 0; i < n; ++i) days.push_back(make_day(user, "2023-03-06", i, 5000.0 + 100.0 * i, 20.0 + i));
    return days;
}

}  // namespace

TEST_CASE("build_windows yields n-w chronological examples with the right contents") {
    auto days = make_days("u1", 12);
    int w = 7;
    auto ex = build_windows(days, w);
    REQUIRE(ex.size() == days.size() - w);
    for (std::size_t k = 0; k < ex.size(); ++k) {
        REQUIRE(ex[k].user_id == "u1");
        REQUIRE(ex[k].window_size() == w);
        REQUIRE(ex[k].target_date == days[w + k].date);
        // Window rows are the w days immediately before the target.
        for (int t = 0; t < w; ++t) {
            REQUIRE(ex[k].u_window.at(t, kEngMinutesUsed) == days[k + t].engagement[kEngMinutesUsed]);
            REQUIRE(ex[k].v_window.at(t, kActTotalSteps) == days[k + t].activity[kActTotalSteps]);
        }
        REQUIRE(ex[k].target.at("steps") == days[w + k].activity[kActTotalSteps]);
        REQUIRE(ex[k].target.at("sed_minutes") == days[w + k].activity[kActSedMinutes]);
        REQUIRE(ex[k].target.at("wear_time") == days[w + k].activity[kActWearMinutes]);
        REQUIRE(ex[k].target.at("lpa_minutes") == days[w + k].activity[kActLpaMinutes]);
    }
    REQUIRE(build_windows(make_days("u1", 7), 7).empty());  // need w+1 days for one example
    REQUIRE_THROWS_AS(build_windows(days, 0), ConfigError);
}

TEST_CASE("build_windows can demand contiguous calendar dates") {
    auto days = make_days("u1", 10);
    days.erase(days.begin() + 4);  // puncture the calendar
    auto loose = build_windows(days, 3);
    auto strict = build_windows(days, 3, all_outcomes(), true);
    REQUIRE(loose.size() == 6);
    REQUIRE(strict.size() < loose.size());
    for (const auto& e : strict) {
        // Every retained window must span exactly w+1 consecutive dates.
        REQUIRE(e.target_date.serial() - Date::parse("2023-03-06").serial() >= 0);
    }
}

TEST_CASE("split_participants partitions deterministically") {
    std::vector<std::string> users;
    for (int i = 0; i < 55; ++i) users.push_back("u" + std::to_string(100 + i));

    auto s1 = split_participants(users, 0.2, 0.1, 42);
    auto s2 = split_participants(users, 0.2, 0.1, 42);
    REQUIRE(s1.train_users == s2.train_users);
    REQUIRE(s1.val_users == s2.val_users);
    REQUIRE(s1.test_users == s2.test_users);

    REQUIRE(s1.test_users.size() == 11);  // lround(55 * 0.2)
    REQUIRE(s1.val_users.size() == 6);    // lround(55 * 0.1)
    REQUIRE(s1.train_users.size() == 38);

    // Disjoint and exhaustive.
    std::set<std::string> all;
    for (const auto& u : s1.train_users) all.insert(u);
    for (const auto& u : s1.val_users) REQUIRE(all.insert(u).second);
    for (const auto& u : s1.test_users) REQUIRE(all.insert(u).second);
    REQUIRE(all.size() == users.size());

    auto s3 = split_participants(users, 0.2, 0.1, 43);
    REQUIRE(s3.test_users != s1.test_users);  // seed matters

    REQUIRE_THROWS_AS(split_participants(users, 0.0, 0.1, 1), SplitError);
    REQUIRE_THROWS_AS(split_participants(users, 0.5, 0.5, 1), SplitError);
    REQUIRE_THROWS_AS(split_participants({"a", "b"}, 0.2, 0.0, 1), SplitError);
}

TEST_CASE("normalization fits on train and round-trips") {
    auto days = make_days("u1", 20);
    auto ex = build_windows(days, 5);
    auto stats = fit_normalization(ex);
    REQUIRE(stats.input_mean.size() == static_cast<std::size_t>(kInputDim));
    REQUIRE(stats.input_std.size() == static_cast<std::size_t>(kInputDim));

    // Constant features hit the std floor instead of dividing by zero.
    REQUIRE(stats.input_std[kEngagementDim + kActSedMinutes] == NormalizationStats::kStdFloor);

    // Hand-check the steps target stats against the definition.
    double mean = 0.0;
    for (const auto& e : ex) mean += e.target.at("steps");
    mean /= static_cast<double>(ex.size());
    REQUIRE(stats.target_mean.at("steps") == Catch::Approx(mean));

    WindowedExample z = apply_normalization(ex[3], stats);
    WindowedExample back = invert_normalization(z, stats);
    for (int t = 0; t < 5; ++t)
        for (int c = 0; c < kEngagementDim; ++c)
            REQUIRE(back.u_window.at(t, c) == Catch::Approx(ex[3].u_window.at(t, c)).margin(1e-9));
    REQUIRE(back.target.at("steps") == Catch::Approx(ex[3].target.at("steps")));
    REQUIRE(stats.denormalize_target("steps", stats.normalize_target("steps", 7777.0)) == Catch::Approx(7777.0));

    // Normalized training targets have mean ~0, std ~1.
    double zm = 0.0, zs = 0.0;
    for (const auto& e : ex) zm += stats.normalize_target("steps", e.target.at("steps"));
    zm /= static_cast<double>(ex.size());
    for (const auto& e : ex) {
        double v = stats.normalize_target("steps", e.target.at("steps")) - zm;
        zs += v * v;
    }
    REQUIRE(zm == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(std::sqrt(zs / static_cast<double>(ex.size())) == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("goal labels are strict-greater on raw steps") {
    WindowedExample ex;
    ex.target["steps"] = 8000.0;
    REQUIRE(label_goal(ex, 8000.0) == 0);  // exactly at threshold -> not met
    ex.target["steps"] = 8000.0000001;
    REQUIRE(label_goal(ex, 8000.0) == 1);
    ex.target["steps"] = 7999.0;
    REQUIRE(label_goal(ex, 8000.0) == 0);
    ex.target.clear();
    REQUIRE_THROWS_AS(label_goal(ex, 8000.0), ConfigError);
}

TEST_CASE("engaged-cohort selection ranks by mean app minutes") {
    std::map<std::string, std::vector<DailyFeatures>> users;
    // Mean app minutes: u_a=40, u_b=30, u_c=20, u_d=10.
    double minutes = 40.0;
    for (const std::string& u : {"u_a", "u_b", "u_c", "u_d"}) {
        for (int i = 0; i < 3; ++i) users[u].push_back(make_day(u, "2023-03-06", i, 5000.0, minutes));
        minutes -= 10.0;
    }
    auto all = select_engaged_cohort(users, 0);
    REQUIRE(all.size() == 4);
    auto top_half = select_engaged_cohort(users, 50);
    REQUIRE(top_half == std::vector<std::string>{"u_a", "u_b"});
    auto top_quarter = select_engaged_cohort(users, 75);
    REQUIRE(top_quarter == std::vector<std::string>{"u_a"});

    // Nested: each higher percentile set is a subset of the lower.
    std::set<std::string> half_set(top_half.begin(), top_half.end());
    for (const auto& u : top_quarter) REQUIRE(half_set.count(u) == 1);

    REQUIRE_THROWS_AS(select_engaged_cohort(users, -1), ConfigError);
    REQUIRE_THROWS_AS(select_engaged_cohort(users, 101), ConfigError);
}
