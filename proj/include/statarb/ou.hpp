#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "factor_models.hpp"
#include "linalg.hpp"

namespace statarb {

// Discretized OU fit: X_{n+1} = a + b X_n + zeta on the cumulative residual
// path. Derived fields are meaningful only when mean_reverting (0 < b < 1).
struct OUParams {
    double a = 0.0;
    double b = 0.0;
    double var_zeta = 0.0;
    double r2 = 0.0;
    double k = 0.0;        // 1/year
    double m = 0.0;
    double sigma_eq = 0.0;
    double sigma = 0.0;    // 1/sqrt(year)
    double x_last = 0.0;   // final cumulative residual of the window
    bool mean_reverting = false;
};

inline constexpr Index kOUWindow = 60;

// Continuous-time quantities implied by AR(1) coefficients, dt = 1/252.
inline OUParams ou_from_ar1(double a, double b, double var_zeta) {
    OUParams p;
    p.a = a;
    p.b = b;
    p.var_zeta = var_zeta;
    p.mean_reverting = b > 0.0 && b < 1.0 && var_zeta > 0.0;
    if (p.mean_reverting) {
        p.k = -std::log(b) * kTradingDaysPerYear;
        p.m = a / (1.0 - b);
        p.sigma_eq = std::sqrt(var_zeta / (1.0 - b * b));
        p.sigma = p.sigma_eq * std::sqrt(2.0 * p.k);
    }
    return p;
}

// X = cumulative sum of the window's residuals; AR(1) by OLS with intercept.
// var_zeta uses divisor n-2 (two fitted coefficients).
inline OUParams estimate_ou(std::span<const double> residuals, Index min_length = kOUWindow) {
    const Index n = static_cast<Index>(residuals.size());
    if (n < min_length || n < 4) {
        throw InsufficientDataError("estimate_ou: need " + std::to_string(min_length) + " residuals, got " +
                                    std::to_string(n));
    }
    Vector x(n);
    double run = 0.0;
    for (Index t = 0; t < n; ++t) {
        run += residuals[static_cast<std::size_t>(t)];
        x(t) = run;
    }
    OLSFit fit = ols_fit(x.head(n - 1), x.tail(n - 1), true);
    OUParams p = ou_from_ar1(fit.alpha, fit.beta(0), fit.residuals.squaredNorm() / static_cast<double>(n - 1 - 2));
    p.r2 = fit.r2;
    p.x_last = x(n - 1);
    return p;
}

// (X_t - m) / sigma_eq; nullopt for a non-mean-reverting fit.
inline std::optional<double> s_score(const OUParams& p, double x_t) {
    if (!p.mean_reverting) return std::nullopt;
    return (x_t - p.m) / p.sigma_eq;
}

inline std::optional<double> s_score(const OUParams& p) { return s_score(p, p.x_last); }

enum class PositionState { flat, long_, short_ };

inline const char* to_string(PositionState s) {
    switch (s) {
    case PositionState::flat: return "flat";
    case PositionState::long_: return "long";
    case PositionState::short_: return "short";
    }
    return "?";
}

struct ThresholdRules {
    double open_long = -1.25;
    double open_short = 1.25;
    double close_long = -0.5;
    double close_short = 0.75;
    double min_r2 = 0.25;
};

struct SignalStep {
    PositionState state = PositionState::flat;
    int phi = 0;
};

inline int position_sign(PositionState s) {
    return s == PositionState::long_ ? 1 : s == PositionState::short_ ? -1 : 0;
}

inline SignalStep ou_signal_step(PositionState state, std::optional<double> s, double r2,
                                 const ThresholdRules& rules = {}) {
    if (!s || !std::isfinite(*s) || r2 < rules.min_r2) return {PositionState::flat, 0};
    PositionState next = state;
    switch (state) {
    case PositionState::flat:
        if (*s < rules.open_long) next = PositionState::long_;
        else if (*s > rules.open_short) next = PositionState::short_;
        break;
    case PositionState::long_:
        if (*s > rules.close_long) next = PositionState::flat;
        break;
    case PositionState::short_:
        if (*s < rules.close_short) next = PositionState::flat;
        break;
    }
    return {next, position_sign(next)};
}

// Per-date signal values; NaN where the stock had no signal that day.
struct SignalPanel {
    std::vector<Date> dates;
    std::vector<std::string> tickers;
    Matrix values;
    std::vector<std::vector<PositionState>> states; // empty for real-valued signals

    static SignalPanel empty_like(const std::vector<Date>& dates, const std::vector<std::string>& tickers,
                                  bool with_states) {
        SignalPanel s;
        s.dates = dates;
        s.tickers = tickers;
        s.values = Matrix::Constant(static_cast<Index>(dates.size()), static_cast<Index>(tickers.size()), kNaN);
        if (with_states) {
            s.states.assign(dates.size(), std::vector<PositionState>(tickers.size(), PositionState::flat));
        }
        return s;
    }
};

inline void write_signals_csv(std::ostream& out, const SignalPanel& s) {
    out << "date,ticker,signal,state\n";
    out.precision(17);
    for (Index t = 0; t < s.values.rows(); ++t) {
        for (Index i = 0; i < s.values.cols(); ++i) {
            if (std::isnan(s.values(t, i))) continue;
            out << s.dates[static_cast<std::size_t>(t)].str() << ',' << s.tickers[static_cast<std::size_t>(i)] << ','
                << s.values(t, i) << ',';
            if (!s.states.empty()) out << to_string(s.states[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]);
            out << '\n';
        }
    }
}

// OU fit on the `window` residuals ending at row t, or nullopt when any is missing.
inline std::optional<OUParams> ou_fit_at(const ResidualPanel& res, Index i, Index t, Index window = kOUWindow) {
    if (t - window + 1 < 0) return std::nullopt;
    std::vector<double> w(static_cast<std::size_t>(window));
    for (Index k = 0; k < window; ++k) {
        const double v = res.values(t - window + 1 + k, i);
        if (std::isnan(v)) return std::nullopt;
        w[static_cast<std::size_t>(k)] = v;
    }
    return estimate_ou(w, window);
}

// First row on which a residual panel can feed a full OU window.
inline Index first_full_residual_window(const ResidualPanel& res, Index window = kOUWindow) {
    for (Index t = 0; t < res.values.rows(); ++t) {
        if (res.values.row(t).array().isNaN().all()) continue;
        return t + window - 1;
    }
    return res.values.rows();
}

// Threshold strategy over a residual panel. Position state carries across
// days; a day without a valid fit forces the stock flat.
inline SignalPanel ou_threshold_signals(const ResidualPanel& res, Index first_row, const ThresholdRules& rules = {},
                                        Index window = kOUWindow) {
    SignalPanel out = SignalPanel::empty_like(res.dates, res.tickers, true);
    const Index N = res.values.cols();
    std::vector<PositionState> state(static_cast<std::size_t>(N), PositionState::flat);
    for (Index t = first_row; t < res.values.rows(); ++t) {
        for (Index i = 0; i < N; ++i) {
            auto fit = ou_fit_at(res, i, t, window);
            SignalStep step = fit ? ou_signal_step(state[static_cast<std::size_t>(i)], s_score(*fit), fit->r2, rules)
                                  : SignalStep{};
            state[static_cast<std::size_t>(i)] = step.state;
            out.values(t, i) = step.phi;
            out.states[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] = step.state;
        }
    }
    return out;
}

} // namespace statarb
