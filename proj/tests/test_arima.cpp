#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "stepcast/arima.hpp"

using namespace stepcast;
using arima::ArimaModel;
using arima::ArimaOrder;

namespace {

std::vector<double> gen_ar1(double c, double phi, double sigma, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    std::vector<double> x(1, c / (1.0 - phi));
    for (int t = 1; t < n; ++t) x.push_back(c + phi * x.back() + noise(rng));
    return x;
}

std::vector<double> gen_random_walk(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> x(1, 100.0);
    for (int t = 1; t < n; ++t) x.push_back(x.back() + noise(rng));
    return x;
}

}  // namespace

TEST_CASE("residual recursion matches a hand computation") {
    // w = {1,2,4,7}, c = 0.5, phi = {0.3}, theta = {0.2}; eps_0 pre-sample.
    auto eps = arima::detail::residuals({1, 2, 4, 7}, 0.5, {0.3}, {0.2});
    REQUIRE(eps.size() == 4);
    REQUIRE(eps[0] == 0.0);
    REQUIRE(eps[1] == Catch::Approx(1.2));
    REQUIRE(eps[2] == Catch::Approx(2.66));
    REQUIRE(eps[3] == Catch::Approx(4.768));
}

TEST_CASE("companion radius matches the polynomial roots") {
    // x - 0.5: root 0.5.
    REQUIRE(arima::detail::companion_radius({-0.5}) == Catch::Approx(0.5));
    // x^2 - 0.5x - 0.3: roots (0.5 +- sqrt(1.45)) / 2.
    double big = (0.5 + std::sqrt(1.45)) / 2.0;
    REQUIRE(arima::detail::companion_radius({-0.5, -0.3}) == Catch::Approx(big));
    REQUIRE(arima::detail::companion_radius({}) == 0.0);

    REQUIRE(arima::detail::stationary_and_invertible({0.99}, {}));
    REQUIRE_FALSE(arima::detail::stationary_and_invertible({1.0}, {}));
    REQUIRE_FALSE(arima::detail::stationary_and_invertible({}, {1.2}));
    REQUIRE(arima::detail::stationary_and_invertible({0.5, 0.3}, {0.4}));
}

TEST_CASE("AR(1) coefficients are recovered from simulated data") {
    std::vector<double> phis, intercepts;
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        auto x = gen_ar1(1.0, 0.6, 1.0, 1000, seed);
        ArimaModel m = arima::fit_arima(x, ArimaOrder{1, 0, 0});
        REQUIRE_FALSE(m.fell_back);
        phis.push_back(m.ar[0]);
        intercepts.push_back(m.intercept);
    }
    std::sort(phis.begin(), phis.end());
    std::sort(intercepts.begin(), intercepts.end());
    REQUIRE(phis[2] > 0.5);
    REQUIRE(phis[2] < 0.7);
    REQUIRE(intercepts[2] > 0.7);
    REQUIRE(intercepts[2] < 1.3);
}

TEST_CASE("driftless random walk forecasts the last observation exactly") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto x = gen_random_walk(60, seed);
        ArimaModel m = arima::fit_arima(x, ArimaOrder{0, 1, 0});
        REQUIRE(m.intercept == 0.0);  // d > 0 forces the driftless convention
        REQUIRE(m.ar.empty());
        REQUIRE(m.ma.empty());
        REQUIRE(arima::forecast_one(m, x) == x.back());

        // CSS of (0,1,0) is the mean squared increment.
        double s = 0.0;
        for (std::size_t i = 1; i < x.size(); ++i) s += (x[i] - x[i - 1]) * (x[i] - x[i - 1]);
        REQUIRE(m.css == Catch::Approx(s / static_cast<double>(x.size() - 1)));
    }
}

TEST_CASE("pure intercept model forecasts the series mean") {
    std::vector<double> x;
    for (int i = 0; i < 30; ++i) x.push_back(10.0 + (i % 3));
    ArimaModel m = arima::fit_arima(x, ArimaOrder{0, 0, 0});
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    REQUIRE(m.intercept == Catch::Approx(mean));
    REQUIRE(arima::forecast_one(m, x) == Catch::Approx(mean));
}

TEST_CASE("an explosive series degrades to the random-walk fallback") {
    std::vector<double> x;
    double v = 1.0;
    for (int i = 0; i < 40; ++i) {
        x.push_back(v);
        v *= 2.0;  // CSS optimum phi = 2: non-stationary
    }
    ArimaModel m = arima::fit_arima(x, ArimaOrder{1, 0, 0});
    REQUIRE(m.fell_back);
    REQUIRE(m.order.p == 0);
    REQUIRE(m.order.d == 1);
    REQUIRE(m.order.q == 0);
    REQUIRE(arima::forecast_one(m, x) == x.back());
}

TEST_CASE("fit and forecast guard their preconditions") {
    std::vector<double> shorty(13, 1.0);
    REQUIRE_THROWS_AS(arima::fit_arima(shorty, ArimaOrder{1, 1, 1}), ConfigError);
    REQUIRE_THROWS_AS(arima::fit_arima(shorty, ArimaOrder{-1, 0, 0}), ConfigError);

    auto x = gen_random_walk(60, 3);
    ArimaModel m = arima::fit_arima(x, ArimaOrder{1, 1, 1});
    REQUIRE_THROWS_AS(arima::forecast_one(m, {1.0, 2.0}), ConfigError);  // needs d + p + 1 = 3
    REQUIRE(std::isfinite(arima::forecast_one(m, {1.0, 2.0, 3.0})));
}

TEST_CASE("order selection stays on the grid and is usable") {
    auto x = gen_random_walk(120, 9);
    ArimaOrder order = arima::select_order_by_aic(x, 2, 2);
    REQUIRE(order.p >= 0);
    REQUIRE(order.p <= 2);
    REQUIRE(order.q >= 0);
    REQUIRE(order.q <= 2);
    REQUIRE((order.d == 0 || order.d == 1));
    ArimaModel m = arima::fit_arima(x, order);
    REQUIRE(std::isfinite(arima::forecast_one(m, x)));
    // Deterministic: same series, same pick.
    ArimaOrder again = arima::select_order_by_aic(x, 2, 2);
    REQUIRE(again.p == order.p);
    REQUIRE(again.d == order.d);
    REQUIRE(again.q == order.q);
}

TEST_CASE("per-user protocol fits on 70 percent and pools the rest") {
    std::vector<arima::UserSeries> users;
    users.push_back({"a", gen_random_walk(30, 10)});
    users.push_back({"b", gen_random_walk(19, 11)});  // under the 20-day floor
    users.push_back({"c", gen_random_walk(50, 12)});

    auto res = arima::evaluate_arima_protocol(users, ArimaOrder{0, 1, 0}, 20);
    REQUIRE(res.per_user.size() == 2);
    REQUIRE(res.warnings.size() == 1);
    REQUIRE(res.warnings[0].find("b") != std::string::npos);
    REQUIRE(res.warnings[0].find("19") != std::string::npos);

    const auto& a = res.per_user[0];
    const auto& c = res.per_user[1];
    REQUIRE(a.user_id == "a");
    REQUIRE(a.n_fit == 21);  // floor(0.7 * 30)
    REQUIRE(a.n_eval == 9);
    REQUIRE(c.n_fit == 35);
    REQUIRE(c.n_eval == 15);
    REQUIRE(res.abs_errors.size() == 24);  // pooled = per-user concatenation

    // With (0,1,0) each rolling forecast is the previous observation, so the
    // pooled errors are exactly the absolute increments over the eval span.
    const auto& xa = users[0].values;
    for (int t = 21; t < 30; ++t)
        REQUIRE(res.abs_errors[static_cast<std::size_t>(t - 21)] == Catch::Approx(std::fabs(xa[t] - xa[t - 1])));

    // Per-user MAE is the mean of that user's pooled block.
    double sum = 0.0;
    for (int i = 0; i < 9; ++i) sum += res.abs_errors[static_cast<std::size_t>(i)];
    REQUIRE(a.mae == Catch::Approx(sum / 9.0));
}
