#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "stepcast/common.hpp"

namespace stepcast::arima {

struct ArimaOrder {
    int p = 1;
    int d = 1;
    int q = 1;

    std::string to_string() const {
        return "(" + std::to_string(p) + "," + std::to_string(d) + "," + std::to_string(q) + ")";
    }
};

struct ArimaModel {
    ArimaOrder order;
    double intercept = 0.0;
    std::vector<double> ar;  // phi_1..phi_p
    std::vector<double> ma;  // theta_1..theta_q
    double css = 0.0;        // mean squared one-step residual at the optimum
    bool fell_back = false;  // fit degraded to (0,1,0)
};

namespace detail {

inline std::vector<double> difference(std::vector<double> series, int d) {
    for (int k = 0; k < d; ++k) {
        if (series.size() < 2) throw ConfigError("arima: series too short to difference");
        std::vector<double> out(series.size() - 1);
        for (std::size_t i = 1; i < series.size(); ++i) out[i - 1] = series[i] - series[i - 1];
        series = std::move(out);
    }
    return series;
}

/// Residuals of the conditional model: eps_t = w_t - c - sum phi_i w_{t-i}
/// - sum theta_j eps_{t-j}, with eps_t = 0 for t < p (pre-sample).
inline std::vector<double> residuals(const std::vector<double>& w, double c, const std::vector<double>& phi,
                                     const std::vector<double>& theta) {
    int m = static_cast<int>(w.size());
    int p = static_cast<int>(phi.size());
    int q = static_cast<int>(theta.size());
    std::vector<double> eps(m, 0.0);
    for (int t = p; t < m; ++t) {
        double e = w[t] - c;
        for (int i = 0; i < p; ++i) e -= phi[i] * w[t - 1 - i];
        for (int j = 0; j < q; ++j) {
            int s = t - 1 - j;
            if (s >= 0) e -= theta[j] * eps[s];
        }
        eps[t] = e;
    }
    return eps;
}

/// Spectral radius of the companion matrix of x^n + a_1 x^{n-1} + ... + a_n.
/// Stationarity of phi (a_i = -phi_i) and invertibility of theta (a_i =
/// theta_i) both reduce to this radius being < 1.
inline double companion_radius(const std::vector<double>& a) {
    int n = static_cast<int>(a.size());
    while (n > 0 && a[static_cast<std::size_t>(n) - 1] == 0.0) --n;
    if (n == 0) return 0.0;
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j) comp(0, j) = -a[static_cast<std::size_t>(j)];
    for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
    return comp.eigenvalues().cwiseAbs().maxCoeff();
}

inline bool stationary_and_invertible(const std::vector<double>& phi, const std::vector<double>& theta) {
    std::vector<double> a_ar(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) a_ar[i] = -phi[i];
    if (!phi.empty() && companion_radius(a_ar) >= 1.0 - 1e-9) return false;
    if (!theta.empty() && companion_radius(theta) >= 1.0 - 1e-9) return false;
    return true;
}

}  // namespace detail

/// Conditional-sum-of-squares fit of ARIMA(p,d,q) with intercept, by
/// adaptive-moment gradient descent on the one-step residuals. Gradients use
/// the exact residual-derivative recursions (the MA terms feed back into
/// d(eps_t)/d(param) through past residual derivatives). A non-finite or
/// non-stationary/non-invertible optimum falls back to a driftless (0,1,0)
/// random walk.
inline ArimaModel fit_arima(const std::vector<double>& series, ArimaOrder order) {
    if (order.p < 0 || order.d < 0 || order.q < 0) throw ConfigError("arima: negative order");
    int n = static_cast<int>(series.size());
    if (n <= order.p + order.d + order.q + 10)
        throw ConfigError("arima: series of length " + std::to_string(n) + " too short for order " +
                          order.to_string() + " (needs > " + std::to_string(order.p + order.d + order.q + 10) + ")");

    ArimaModel model;
    model.order = order;
    model.ar.assign(static_cast<std::size_t>(order.p), 0.0);
    model.ma.assign(static_cast<std::size_t>(order.q), 0.0);

    std::vector<double> w = detail::difference(series, order.d);
    int m = static_cast<int>(w.size());
    int p = order.p, q = order.q;

    if (p == 0 && q == 0) {
        // Pure I(d): the CSS minimizer is the mean of the differenced series,
        // but with d > 0 the conventional model is the driftless random walk.
        double mean = 0.0;
        for (double v : w) mean += v;
        mean /= static_cast<double>(m);
        model.intercept = order.d > 0 ? 0.0 : mean;
        std::vector<double> eps = detail::residuals(w, model.intercept, model.ar, model.ma);
        double s = 0.0;
        for (int t = 0; t < m; ++t) s += eps[t] * eps[t];
        model.css = s / static_cast<double>(m);
        return model;
    }

    int n_params = 1 + p + q;  // c, phi, theta
    std::vector<double> params(static_cast<std::size_t>(n_params), 0.0);
    {
        double mean = 0.0;
        for (double v : w) mean += v;
        params[0] = mean / static_cast<double>(m);
    }

    std::vector<double> eps(static_cast<std::size_t>(m));
    // deps[t][k] = d(eps_t)/d(param_k); only the last q rows are needed, kept
    // as a ring over the full history for simplicity (m is day-scale).
    std::vector<std::vector<double>> deps(static_cast<std::size_t>(m),
                                          std::vector<double>(static_cast<std::size_t>(n_params), 0.0));
    std::vector<double> grad(static_cast<std::size_t>(n_params), 0.0);
    std::vector<double> adam_m(static_cast<std::size_t>(n_params), 0.0);
    std::vector<double> adam_v(static_cast<std::size_t>(n_params), 0.0);
    const double lr = 0.02, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    double denom = static_cast<double>(m - p);
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best_params = params;
    int stale = 0;
    const int max_iters = 4000, patience = 200;

    for (int iter = 1; iter <= max_iters; ++iter) {
        double c = params[0];
        double loss = 0.0;
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int t = 0; t < m; ++t) {
            std::fill(deps[static_cast<std::size_t>(t)].begin(), deps[static_cast<std::size_t>(t)].end(), 0.0);
            if (t < p) {
                eps[static_cast<std::size_t>(t)] = 0.0;
                continue;
            }
            double e = w[t] - c;
            auto& dt = deps[static_cast<std::size_t>(t)];
            dt[0] = -1.0;
            for (int i = 0; i < p; ++i) {
                e -= params[static_cast<std::size_t>(1 + i)] * w[t - 1 - i];
                dt[static_cast<std::size_t>(1 + i)] = -w[t - 1 - i];
            }
            for (int j = 0; j < q; ++j) {
                int s = t - 1 - j;
                if (s < 0) continue;
                double theta_j = params[static_cast<std::size_t>(1 + p + j)];
                e -= theta_j * eps[static_cast<std::size_t>(s)];
                dt[static_cast<std::size_t>(1 + p + j)] -= eps[static_cast<std::size_t>(s)];
                const auto& ds = deps[static_cast<std::size_t>(s)];
                for (int k = 0; k < n_params; ++k) dt[static_cast<std::size_t>(k)] -= theta_j * ds[static_cast<std::size_t>(k)];
            }
            eps[static_cast<std::size_t>(t)] = e;
            loss += e * e;
            for (int k = 0; k < n_params; ++k) grad[static_cast<std::size_t>(k)] += 2.0 * e * dt[static_cast<std::size_t>(k)];
        }
        loss /= denom;
        for (double& g : grad) g /= denom;

        if (!std::isfinite(loss)) {
            best_loss = std::numeric_limits<double>::infinity();
            break;
        }
        if (loss < best_loss - 1e-12) {
            best_loss = loss;
            best_params = params;
            stale = 0;
        } else if (++stale >= patience) {
            break;
        }

        double gmax = 0.0;
        for (double g : grad) gmax = std::max(gmax, std::fabs(g));
        if (gmax < 1e-9) break;

        double bc1 = 1.0 - std::pow(beta1, iter);
        double bc2 = 1.0 - std::pow(beta2, iter);
        for (int k = 0; k < n_params; ++k) {
            double g = grad[static_cast<std::size_t>(k)];
            adam_m[static_cast<std::size_t>(k)] = beta1 * adam_m[static_cast<std::size_t>(k)] + (1.0 - beta1) * g;
            adam_v[static_cast<std::size_t>(k)] = beta2 * adam_v[static_cast<std::size_t>(k)] + (1.0 - beta2) * g * g;
            params[static_cast<std::size_t>(k)] -=
                lr * (adam_m[static_cast<std::size_t>(k)] / bc1) / (std::sqrt(adam_v[static_cast<std::size_t>(k)] / bc2) + adam_eps);
        }
    }

    model.intercept = best_params[0];
    for (int i = 0; i < p; ++i) model.ar[static_cast<std::size_t>(i)] = best_params[static_cast<std::size_t>(1 + i)];
    for (int j = 0; j < q; ++j) model.ma[static_cast<std::size_t>(j)] = best_params[static_cast<std::size_t>(1 + p + j)];
    model.css = best_loss;

    if (!std::isfinite(best_loss) || !detail::stationary_and_invertible(model.ar, model.ma)) {
        ArimaModel fallback;
        fallback.order = ArimaOrder{0, 1, 0};
        fallback.fell_back = true;
        std::vector<double> wd = detail::difference(series, 1);
        double s = 0.0;
        for (double v : wd) s += v * v;
        fallback.css = s / static_cast<double>(wd.size());
        return fallback;
    }
    return model;
}

/// One-step-ahead forecast given the full (undifferenced) history. Residuals
/// are rebuilt over the history with the fitted coefficients, so extending
/// the history with observed values rolls the forecast forward without
/// refitting.
inline double forecast_one(const ArimaModel& model, const std::vector<double>& history) {
    int d = model.order.d;
    if (static_cast<int>(history.size()) < d + model.order.p + 1)
        throw ConfigError("arima: history of length " + std::to_string(history.size()) +
                          " too short to forecast with order " + model.order.to_string());
    std::vector<double> w = detail::difference(history, d);
    std::vector<double> eps = detail::residuals(w, model.intercept, model.ar, model.ma);
    int m = static_cast<int>(w.size());

    double next = model.intercept;
    for (int i = 0; i < model.order.p; ++i) next += model.ar[static_cast<std::size_t>(i)] * w[m - 1 - i];
    for (int j = 0; j < model.order.q; ++j) {
        int s = m - 1 - j;
        if (s >= 0) next += model.ma[static_cast<std::size_t>(j)] * eps[static_cast<std::size_t>(s)];
    }

    // Undo the differencing: the forecast at level k is the last observed
    // value at level k plus the forecast at level k+1.
    std::vector<double> level = history;
    std::vector<double> lasts;
    for (int k = 0; k < d; ++k) {
        lasts.push_back(level.back());
        level = detail::difference(level, 1);
    }
    double f = next;
    for (int k = d - 1; k >= 0; --k) f = lasts[static_cast<std::size_t>(k)] + f;
    return f;
}

/// AIC over a small order grid; ties break toward the simpler model (fewer
/// parameters, then lower d) because the grid is scanned in that order.
inline ArimaOrder select_order_by_aic(const std::vector<double>& series, int max_p = 3, int max_q = 3) {
    double best_aic = std::numeric_limits<double>::infinity();
    ArimaOrder best{0, 1, 0};
    bool found = false;
    for (int k = 0; k <= max_p + max_q; ++k) {
        for (int d = 0; d <= 1; ++d) {
            for (int p = 0; p <= max_p; ++p) {
                int q = k - p;
                if (q < 0 || q > max_q) continue;
                ArimaOrder order{p, d, q};
                ArimaModel fit;
                try {
                    fit = fit_arima(series, order);
                } catch (const ConfigError&) {
                    continue;
                }
                if (fit.fell_back || !(fit.css > 0.0) || !std::isfinite(fit.css)) continue;
                int m_eff = static_cast<int>(series.size()) - d - p;
                if (m_eff <= 0) continue;
                double aic = m_eff * std::log(fit.css) + 2.0 * (p + q + 2);
                if (aic < best_aic - 1e-12) {
                    best_aic = aic;
                    best = order;
                    found = true;
                }
            }
        }
    }
    if (!found) return ArimaOrder{0, 1, 0};
    return best;
}

struct UserSeries {
    std::string user_id;
    std::vector<double> values;  // chronological daily outcome over valid days
};

struct ArimaUserResult {
    std::string user_id;
    int n_fit = 0;
    int n_eval = 0;
    double mae = 0.0;
};

struct ArimaProtocolResult {
    std::vector<double> abs_errors;  // pooled across users
    std::vector<ArimaUserResult> per_user;
    std::vector<std::string> warnings;  // excluded users
};

/// Per-user protocol: fit on the first 70% of the user's series, then roll
/// one-step-ahead forecasts over the remainder, extending the history with
/// each observed value (no refitting). Users shorter than min_days — or too
/// short for the requested order — are excluded with a warning.
inline ArimaProtocolResult evaluate_arima_protocol(const std::vector<UserSeries>& users, ArimaOrder order,
                                                   int min_days = 20) {
    ArimaProtocolResult result;
    for (const auto& user : users) {
        int n = static_cast<int>(user.values.size());
        if (n < min_days) {
            result.warnings.push_back("arima: user " + user.user_id + " has " + std::to_string(n) +
                                      " valid days (< " + std::to_string(min_days) + "), excluded");
            continue;
        }
        int n_fit = static_cast<int>(std::floor(0.7 * n));
        std::vector<double> history(user.values.begin(), user.values.begin() + n_fit);
        ArimaModel model;
        try {
            model = fit_arima(history, order);
        } catch (const ConfigError& e) {
            result.warnings.push_back("arima: user " + user.user_id + " excluded: " + e.what());
            continue;
        }
        ArimaUserResult ur;
        ur.user_id = user.user_id;
        ur.n_fit = n_fit;
        double sum_abs = 0.0;
        for (int t = n_fit; t < n; ++t) {
            double f = forecast_one(model, history);
            double err = std::fabs(user.values[static_cast<std::size_t>(t)] - f);
            result.abs_errors.push_back(err);
            sum_abs += err;
            history.push_back(user.values[static_cast<std::size_t>(t)]);
        }
        ur.n_eval = n - n_fit;
        ur.mae = ur.n_eval > 0 ? sum_abs / ur.n_eval : 0.0;
        result.per_user.push_back(std::move(ur));
    }
    return result;
}

}  // namespace stepcast::arima
