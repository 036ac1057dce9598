#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "market_data.hpp"

namespace statarb {

// Planted factor + OU-residual market. Daily return
//   r_{i,t} = sum_j B_ij f_{j,t} + (X_{i,t} - X_{i,t-1})
// with Gaussian factors and X_i an exactly discretized OU path.
struct SyntheticSpec {
    Index stocks = 10;
    Index factors = 1;
    Index days = 504;
    Matrix loadings;   // stocks x factors
    Vector factor_vol; // daily
    Vector kappa;      // mean-reversion speed, 1/year
    Vector level;      // OU level m
    Vector sigma;      // OU diffusion, 1/sqrt(year)
    std::uint64_t seed = 1;
    Date start{2000, 1, 3};

    // Filter knobs; defaults sit far above the universe thresholds.
    Vector initial_close;
    Vector mktcap;
    Vector dollar_volume;

    void validate() const {
        if (stocks < 1 || factors < 0 || days < 2) throw ConfigError("synthetic spec: bad dimensions");
        if (loadings.rows() != stocks || loadings.cols() != factors) throw ConfigError("synthetic spec: loadings shape");
        if (factor_vol.size() != factors) throw ConfigError("synthetic spec: factor_vol size");
        for (const Vector* v : {&kappa, &level, &sigma, &initial_close, &mktcap, &dollar_volume}) {
            if (v->size() != stocks) throw ConfigError("synthetic spec: per-stock vector size");
        }
        if ((kappa.array() <= 0.0).any()) throw ConfigError("synthetic spec: kappa must be positive");
        if ((sigma.array() < 0.0).any()) throw ConfigError("synthetic spec: sigma must be non-negative");
        if ((factor_vol.array() < 0.0).any()) throw ConfigError("synthetic spec: factor vol must be non-negative");
        if ((initial_close.array() <= 0.0).any()) throw ConfigError("synthetic spec: initial close must be positive");
    }
};

struct SyntheticTruth {
    Matrix factors;              // days x factors
    Matrix residual_path;        // X, days x stocks
    Matrix residual_increments;  // dX, days x stocks
};

struct SyntheticMarket {
    ReturnsPanel panel;
    SyntheticTruth truth;

    // Ground-truth factor series in the exogenous-factor file layout (rf = 0).
    FactorReturns factor_returns() const {
        FactorReturns fr;
        fr.dates = panel.dates;
        for (Index j = 0; j < truth.factors.cols(); ++j) fr.names.push_back("factor_" + std::to_string(j + 1));
        fr.values = truth.factors;
        fr.rf = Vector::Zero(truth.factors.rows());
        return fr;
    }
};

// Uniform defaults for every per-stock field; loadings drawn from `seed`:
// first factor ~ U(0.5, 1.5) (market-like), others ~ N(0, 0.5^2).
inline SyntheticSpec make_synthetic_spec(Index stocks, Index factors, Index days, double kappa, double sigma_eq,
                                         std::uint64_t seed, double factor_vol = 0.01) {
    SyntheticSpec s;
    s.stocks = stocks;
    s.factors = factors;
    s.days = days;
    s.seed = seed;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> market(0.5, 1.5);
    std::normal_distribution<double> other(0.0, 0.5);
    s.loadings.resize(stocks, factors);
    for (Index i = 0; i < stocks; ++i) {
        for (Index j = 0; j < factors; ++j) s.loadings(i, j) = j == 0 ? market(rng) : other(rng);
    }
    s.factor_vol = Vector::Constant(factors, factor_vol);
    s.kappa = Vector::Constant(stocks, kappa);
    s.level = Vector::Zero(stocks);
    s.sigma = Vector::Constant(stocks, sigma_eq * std::sqrt(2.0 * kappa));
    s.initial_close = Vector::Constant(stocks, 100.0);
    s.mktcap = Vector::Constant(stocks, 1e10);
    s.dollar_volume = Vector::Constant(stocks, 1e8);
    return s;
}

inline SyntheticMarket generate_synthetic_panel(const SyntheticSpec& spec) {
    spec.validate();
    const Index T = spec.days, N = spec.stocks, K = spec.factors;
    const double dt = 1.0 / kTradingDaysPerYear;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SyntheticMarket m;
    m.truth.factors.resize(T, K);
    m.truth.residual_path.resize(T, N);
    m.truth.residual_increments.resize(T, N);

    Vector decay(N), step_sd(N), x_prev(N);
    for (Index i = 0; i < N; ++i) {
        const double k = spec.kappa(i);
        decay(i) = std::exp(-k * dt);
        step_sd(i) = spec.sigma(i) * std::sqrt((1.0 - std::exp(-2.0 * k * dt)) / (2.0 * k));
        const double sigma_eq = spec.sigma(i) / std::sqrt(2.0 * k);
        x_prev(i) = spec.level(i) + sigma_eq * gauss(rng);
    }
    for (Index t = 0; t < T; ++t) {
        for (Index j = 0; j < K; ++j) m.truth.factors(t, j) = spec.factor_vol(j) * gauss(rng);
        for (Index i = 0; i < N; ++i) {
            const double x = spec.level(i) + (x_prev(i) - spec.level(i)) * decay(i) + step_sd(i) * gauss(rng);
            m.truth.residual_path(t, i) = x;
            m.truth.residual_increments(t, i) = x - x_prev(i);
            x_prev(i) = x;
        }
    }

    ReturnsPanel& p = m.panel;
    Date d = spec.start.is_weekend() ? spec.start.next_business_day() : spec.start;
    for (Index t = 0; t < T; ++t) {
        p.dates.push_back(d);
        d = d.next_business_day();
    }
    const int width = N < 10 ? 1 : static_cast<int>(std::to_string(N - 1).size());
    for (Index i = 0; i < N; ++i) {
        std::string num = std::to_string(i);
        p.tickers.push_back("S" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num);
    }
    p.returns = m.truth.factors * spec.loadings.transpose() + m.truth.residual_increments;
    if ((p.returns.array() <= -1.0).any()) throw ConfigError("synthetic spec produces returns <= -1");
    p.close.resize(T, N);
    p.mktcap.resize(T, N);
    p.dollar_volume.resize(T, N);
    for (Index i = 0; i < N; ++i) {
        double price = spec.initial_close(i);
        for (Index t = 0; t < T; ++t) {
            price *= 1.0 + p.returns(t, i);
            p.close(t, i) = price;
            p.mktcap(t, i) = spec.mktcap(i);
            p.dollar_volume(t, i) = spec.dollar_volume(i);
        }
    }
    p.missing = BoolMatrix::Constant(T, N, false);
    return m;
}

// Panel around a given returns matrix: business-day dates from `start`,
// tickers S0.., prices compounded from 100, liquidity far above the filters.
inline ReturnsPanel panel_from_returns(const Matrix& returns, Date start = Date{2000, 1, 3}) {
    const Index T = returns.rows(), N = returns.cols();
    ReturnsPanel p;
    Date d = start.is_weekend() ? start.next_business_day() : start;
    for (Index t = 0; t < T; ++t) {
        p.dates.push_back(d);
        d = d.next_business_day();
    }
    const int width = N < 10 ? 1 : static_cast<int>(std::to_string(N - 1).size());
    for (Index i = 0; i < N; ++i) {
        std::string num = std::to_string(i);
        p.tickers.push_back("S" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num);
    }
    p.returns = returns;
    p.close.resize(T, N);
    for (Index i = 0; i < N; ++i) {
        double price = 100.0;
        for (Index t = 0; t < T; ++t) {
            price *= 1.0 + returns(t, i);
            p.close(t, i) = price;
        }
    }
    p.mktcap = Matrix::Constant(T, N, 1e10);
    p.dollar_volume = Matrix::Constant(T, N, 1e8);
    p.missing = returns.array().isNaN();
    p.validate();
    return p;
}

} // namespace statarb
