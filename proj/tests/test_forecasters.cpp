#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "stepcast/forecasters.hpp"

using namespace stepcast;

namespace {

WindowedExample rand_example(std::mt19937_64& rng, int w, const std::string& user, int idx) {
    std::normal_distribution<double> g(0.0, 1.0);
    WindowedExample ex;
    ex.user_id = user;
    ex.target_date = Date::parse("2023-05-01").plus_days(idx);
    ex.u_window = RowMatrix(w, kEngagementDim);
    ex.v_window = RowMatrix(w, kActivityDim);
    for (auto& v : ex.u_window.data) v = 20.0 + 5.0 * g(rng);
    for (auto& v : ex.v_window.data) v = 500.0 + 100.0 * g(rng);
    ex.target["steps"] = std::max(0.0, 6000.0 + 1500.0 * g(rng));
    return ex;
}

std::vector<WindowedExample> rand_examples(std::uint64_t seed, int n, int w) {
    std::mt19937_64 rng(seed);
    std::vector<WindowedExample> out;
    for (int i = 0; i < n; ++i) out.push_back(rand_example(rng, w, "u" + std::to_string(i % 6), i));
    return out;
}

ModelConfig tiny_lstm(Architecture arch, std::uint64_t seed) {
    ModelConfig cfg;
    cfg.architecture = arch;
    cfg.window = 3;
    cfg.hidden = 6;
    cfg.late_hidden = 4;
    cfg.late_temp = 3;
    cfg.max_epochs = 3;
    cfg.batch_size = 16;
    cfg.patience = 10;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("config validation rejects out-of-contract settings") {
    ModelConfig cfg;
    REQUIRE_NOTHROW(validate_config(cfg));
    cfg.window = 5;
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
    cfg.window = 7;
    cfg.learning_rate = 0.0;
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
    cfg.learning_rate = 1e-3;
    cfg.outcome = "calories";
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
    cfg.outcome = "steps";
    cfg.head = Head::classification;
    cfg.architecture = Architecture::linreg_multimodal;
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);  // classification needs an LSTM
    cfg.architecture = Architecture::lstm_early;
    cfg.goal_threshold = 0.0;
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
    cfg.goal_threshold = 8000.0;
    cfg.outcome = "wear_time";
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);  // classification is steps-only
    cfg.outcome = "steps";
    cfg.patience = 0;
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("architecture and head names round-trip") {
    for (auto a : {Architecture::lstm_early, Architecture::lstm_late, Architecture::lstm_engagement,
                   Architecture::lstm_activity, Architecture::linreg_multimodal, Architecture::linreg_engagement,
                   Architecture::linreg_activity, Architecture::arima})
        REQUIRE(architecture_from_string(to_string(a)) == a);
    REQUIRE_THROWS_AS(architecture_from_string("gru"), ConfigError);
    REQUIRE(head_from_string("regression") == Head::regression);
    REQUIRE(head_from_string("classification") == Head::classification);
    REQUIRE_THROWS_AS(head_from_string("ranking"), ConfigError);
}

TEST_CASE("closed-form linear regression agrees with an independent least-squares solve") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Architecture arch = seed % 3 == 0   ? Architecture::linreg_multimodal
                            : seed % 3 == 1 ? Architecture::linreg_engagement
                                            : Architecture::linreg_activity;
        auto train = rand_examples(seed, 250, 3);
        auto stats = fit_normalization(train);

        ModelConfig cfg;
        cfg.architecture = arch;
        cfg.window = 3;
        cfg.seed = seed;
        TrainedForecaster model = train_linreg(cfg, train, stats);

        // Rebuild the normalized design matrix and solve it with Eigen.
        int f = 3 * detail::single_stream_dim(arch);
        int m = static_cast<int>(train.size());
        Eigen::MatrixXd x(m, f + 1);
        Eigen::VectorXd y(m);
        for (int i = 0; i < m; ++i) {
            WindowedExample norm = apply_normalization(train[static_cast<std::size_t>(i)], stats);
            const RowMatrix* mat = nullptr;
            RowMatrix fused;
            if (arch == Architecture::linreg_multimodal) {
                fused = fuse_early(norm.u_window, norm.v_window);
                mat = &fused;
            } else if (arch == Architecture::linreg_engagement) {
                mat = &norm.u_window;
            } else {
                mat = &norm.v_window;
            }
            for (int j = 0; j < f; ++j) x(i, j) = mat->data[static_cast<std::size_t>(j)];
            x(i, f) = 1.0;
            y(i) = stats.normalize_target("steps", train[static_cast<std::size_t>(i)].target.at("steps"));
        }
        Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);

        const ad::Tensor& coef = model.params.value("coef");
        double worst = 0.0;
        for (int j = 0; j < f; ++j) worst = std::max(worst, std::fabs(coef.data[static_cast<std::size_t>(j)] - beta(j)));
        worst = std::max(worst, std::fabs(model.params.value("intercept").data[0] - beta(f)));
        INFO("seed " << seed << " arch " << to_string(arch) << " worst coefficient gap " << worst);
        REQUIRE(worst < 1e-6);
    }
}

TEST_CASE("unimodal models are blind to the other modality") {
    auto train = rand_examples(77, 60, 3);
    auto val = rand_examples(78, 12, 3);
    auto stats = fit_normalization(train);
    WindowedExample probe = rand_examples(79, 1, 3)[0];

    auto mutate_u = [](WindowedExample ex) {
        ex.u_window.at(1, 5) += 123.0;
        return ex;
    };
    auto mutate_v = [](WindowedExample ex) {
        ex.v_window.at(1, 2) += 123.0;
        return ex;
    };

    TrainedForecaster act = train_lstm(tiny_lstm(Architecture::lstm_activity, 5), train, val, stats);
    REQUIRE(predict(act, mutate_u(probe)) == predict(act, probe));  // engagement ignored entirely
    REQUIRE(predict(act, mutate_v(probe)) != predict(act, probe));

    TrainedForecaster eng = train_lstm(tiny_lstm(Architecture::lstm_engagement, 5), train, val, stats);
    REQUIRE(predict(eng, mutate_v(probe)) == predict(eng, probe));
    REQUIRE(predict(eng, mutate_u(probe)) != predict(eng, probe));

    TrainedForecaster both = train_lstm(tiny_lstm(Architecture::lstm_early, 5), train, val, stats);
    REQUIRE(predict(both, mutate_u(probe)) != predict(both, probe));
    REQUIRE(predict(both, mutate_v(probe)) != predict(both, probe));

    ModelConfig lin;
    lin.architecture = Architecture::linreg_engagement;
    lin.window = 3;
    TrainedForecaster lin_eng = train_linreg(lin, train, stats);
    REQUIRE(predict(lin_eng, mutate_v(probe)) == predict(lin_eng, probe));
    REQUIRE(predict(lin_eng, mutate_u(probe)) != predict(lin_eng, probe));
}

TEST_CASE("early fusion wiring commutes with a feature permutation") {
    // Swapping two engagement columns everywhere they appear — in the
    // example, the normalization stats and the trained input weights — must
    // leave the prediction unchanged. Catches off-by-one wiring between the
    // fused feature order and the weight columns.
    auto train = rand_examples(41, 60, 3);
    auto val = rand_examples(42, 12, 3);
    auto stats = fit_normalization(train);
    TrainedForecaster model = train_lstm(tiny_lstm(Architecture::lstm_early, 9), train, val, stats);
    WindowedExample probe = rand_examples(43, 1, 3)[0];
    double base = predict(model, probe);

    const int c1 = 4, c2 = 30;  // two engagement feature indices
    TrainedForecaster permuted = model;
    ad::Tensor& w_in = permuted.params.value("lstm.w_in");
    for (int r = 0; r < w_in.rows(); ++r) std::swap(w_in.at(r, c1), w_in.at(r, c2));
    std::swap(permuted.stats.input_mean[c1], permuted.stats.input_mean[c2]);
    std::swap(permuted.stats.input_std[c1], permuted.stats.input_std[c2]);
    WindowedExample swapped = probe;
    for (int t = 0; t < swapped.u_window.rows; ++t) std::swap(swapped.u_window.at(t, c1), swapped.u_window.at(t, c2));

    REQUIRE(predict(permuted, swapped) == Catch::Approx(base).margin(1e-9));
}

TEST_CASE("training is bit-deterministic in the seed") {
    auto train = rand_examples(88, 60, 3);
    auto val = rand_examples(89, 12, 3);
    auto stats = fit_normalization(train);
    WindowedExample probe = rand_examples(90, 1, 3)[0];

    TrainedForecaster a = train_lstm(tiny_lstm(Architecture::lstm_late, 7), train, val, stats);
    TrainedForecaster b = train_lstm(tiny_lstm(Architecture::lstm_late, 7), train, val, stats);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        REQUIRE(a.log[i].train_loss == b.log[i].train_loss);
        REQUIRE(a.log[i].val_loss == b.log[i].val_loss);
    }
    REQUIRE(predict(a, probe) == predict(b, probe));

    TrainedForecaster c = train_lstm(tiny_lstm(Architecture::lstm_late, 8), train, val, stats);
    REQUIRE(predict(c, probe) != predict(a, probe));
}

TEST_CASE("validation patience stops training early on noise") {
    auto train = rand_examples(21, 48, 3);
    auto val = rand_examples(22, 16, 3);
    auto stats = fit_normalization(train);
    ModelConfig cfg = tiny_lstm(Architecture::lstm_engagement, 3);
    cfg.max_epochs = 60;
    cfg.patience = 2;
    TrainedForecaster model = train_lstm(cfg, train, val, stats);
    REQUIRE(model.log.size() >= 3);
    REQUIRE(model.log.size() < 60);  // noise targets cannot improve for 60 epochs
    for (std::size_t i = 0; i < model.log.size(); ++i) {
        REQUIRE(model.log[i].epoch == static_cast<int>(i) + 1);
        REQUIRE(std::isfinite(model.log[i].train_loss));
        REQUIRE(std::isfinite(model.log[i].val_loss));
    }
}

TEST_CASE("regression predictions are de-normalized and floored at zero") {
    auto train = rand_examples(31, 80, 3);
    auto stats = fit_normalization(train);
    ModelConfig cfg;
    cfg.architecture = Architecture::linreg_activity;
    cfg.window = 3;
    TrainedForecaster model = train_linreg(cfg, train, stats);

    // Ordinary probes land in raw step units.
    double p = predict(model, train[0]);
    REQUIRE(p >= 0.0);
    REQUIRE(p < 50000.0);

    // An absurd input drives the linear score far out in one direction or the
    // other (coefficient signs are data-dependent); the floor holds either way.
    WindowedExample lo = train[0], hi = train[0];
    for (auto& v : lo.v_window.data) v = -1e7;
    for (auto& v : hi.v_window.data) v = 1e7;
    double p_lo = predict(model, lo);
    double p_hi = predict(model, hi);
    REQUIRE(p_lo >= 0.0);
    REQUIRE(p_hi >= 0.0);
    REQUIRE(std::min(p_lo, p_hi) == 0.0);
}

TEST_CASE("prediction rejects a window of the wrong length") {
    auto train = rand_examples(51, 40, 3);
    auto val = rand_examples(52, 8, 3);
    auto stats = fit_normalization(train);
    TrainedForecaster model = train_lstm(tiny_lstm(Architecture::lstm_early, 2), train, val, stats);
    WindowedExample wide = rand_examples(53, 1, 7)[0];
    try {
        predict(model, wide);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        REQUIRE(msg.find('7') != std::string::npos);  // names both sizes
        REQUIRE(msg.find('3') != std::string::npos);
    }
}

TEST_CASE("per-user arima forecaster predicts from the window tail") {
    std::map<std::string, std::vector<double>> series;
    std::mt19937_64 rng(61);
    std::normal_distribution<double> g(0.0, 50.0);
    for (const std::string& u : {"u0", "u1"}) {
        std::vector<double> x(1, 5000.0);
        for (int t = 1; t < 40; ++t) x.push_back(std::max(0.0, x.back() + g(rng)));
        series[u] = x;
    }
    ModelConfig cfg;
    cfg.architecture = Architecture::arima;
    cfg.arima_order = {0, 1, 0};
    NormalizationStats stats;
    TrainedForecaster model = train_arima(cfg, series, stats);
    REQUIRE(model.user_fits.size() == 2);

    WindowedExample ex = rand_examples(62, 1, 7)[0];
    ex.user_id = "u0";
    // With a (0,1,0) fit the forecast is the last observed window value.
    REQUIRE(predict(model, ex) == ex.v_window.at(6, kActTotalSteps));

    ex.user_id = "nobody";
    REQUIRE_THROWS_AS(predict(model, ex), StateError);
}

TEST_CASE("classification head emits probabilities") {
    auto train = rand_examples(71, 60, 3);
    auto val = rand_examples(72, 12, 3);
    auto stats = fit_normalization(train);
    ModelConfig cfg = tiny_lstm(Architecture::lstm_early, 4);
    cfg.head = Head::classification;
    cfg.goal_threshold = 6000.0;
    TrainedForecaster model = train_lstm(cfg, train, val, stats);
    for (int i = 0; i < 12; ++i) {
        double p = predict(model, val[static_cast<std::size_t>(i)]);
        REQUIRE(p >= 0.0);
        REQUIRE(p <= 1.0);
    }
}

TEST_CASE("training mean is the raw-outcome average") {
    auto train = rand_examples(81, 10, 3);
    double mean = 0.0;
    for (const auto& ex : train) mean += ex.target.at("steps");
    mean /= 10.0;
    REQUIRE(training_mean(train, "steps") == Catch::Approx(mean));
    REQUIRE_THROWS_AS(training_mean({}, "steps"), ConfigError);
    REQUIRE_THROWS_AS(training_mean(train, "nope"), ConfigError);
}

TEST_CASE("spot gradient checks pass for representative architectures") {
    // The acceptance gate sweeps every architecture/head pair; here two
    // cheap spot checks keep the unit suite fast but honest.
    ModelConfig cfg = tiny_lstm(Architecture::lstm_late, 13);
    auto rep = grad_check_model(cfg, 3, 13, 16);
    INFO("late-fusion regression overall " << rep.overall);
    REQUIRE(rep.passed(1e-4));

    cfg = tiny_lstm(Architecture::lstm_early, 14);
    cfg.head = Head::classification;
    auto rep2 = grad_check_model(cfg, 3, 14, 16);
    INFO("early-fusion classification overall " << rep2.overall);
    REQUIRE(rep2.passed(1e-4));
}
