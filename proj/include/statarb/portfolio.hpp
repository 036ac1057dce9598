#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "market_data.hpp"

namespace statarb {

// w = phi / ||phi||_1; an all-zero signal maps to all-zero weights.
inline Vector normalize_weights(const Eigen::Ref<const Vector>& phi) {
    if (!phi.allFinite()) throw NumericError("normalize_weights: non-finite signal");
    const double l1 = phi.lpNorm<1>();
    if (!(l1 > 0.0)) return Vector::Zero(phi.size());
    return phi / l1;
}

// Pull an upstream gradient on normalized weights back through w/||w||_1:
//   dL/dw_j = g_j / s - sign(w_j) (g . w) / s^2.
// Zero rows (no-trade) have no gradient.
inline Vector l1_normalize_backward(const Eigen::Ref<const Vector>& raw, const Eigen::Ref<const Vector>& upstream) {
    const double s = raw.lpNorm<1>();
    if (!(s > 0.0)) return Vector::Zero(raw.size());
    Vector sign = raw.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    return upstream / s - sign * (upstream.dot(raw) / (s * s));
}

// sum_i w_i r_i over stocks with a realized return; a missing return (the
// stock dropped out) contributes nothing. NaN weights count as no position.
inline double portfolio_return(const Eigen::Ref<const Vector>& weights, const Eigen::Ref<const Vector>& next_returns) {
    if (weights.size() != next_returns.size()) throw DimensionError("portfolio_return: weights and returns misaligned");
    double total = 0.0;
    for (Index i = 0; i < weights.size(); ++i) {
        const double w = weights(i);
        if (w == 0.0 || std::isnan(w)) continue;
        const double r = next_returns(i);
        if (std::isnan(r)) continue;
        total += w * r;
    }
    return total;
}

struct PerformanceMetrics {
    double sharpe = 0.0; // annualized, mu / sigma
    double mu = 0.0;     // 252 * mean daily return
    double sigma = 0.0;  // sqrt(252) * sd (divisor T-1)
    bool degenerate = false;
    Vector curve; // compounded: prod(1 + r) - 1
};

inline PerformanceMetrics performance_metrics(const Eigen::Ref<const Vector>& daily) {
    const Index T = daily.size();
    if (T < 2) throw InsufficientDataError("performance_metrics needs at least 2 returns");
    PerformanceMetrics m;
    const double mean = daily.mean();
    const double sd = std::sqrt((daily.array() - mean).square().sum() / static_cast<double>(T - 1));
    m.mu = kTradingDaysPerYear * mean;
    m.sigma = std::sqrt(kTradingDaysPerYear) * sd;
    m.degenerate = !(sd > 1e-12 * std::max(std::abs(mean), std::numeric_limits<double>::min()));
    m.sharpe = m.degenerate ? kNaN : m.mu / m.sigma;
    m.curve.resize(T);
    double growth = 1.0;
    for (Index t = 0; t < T; ++t) {
        growth *= 1.0 + daily(t);
        m.curve(t) = growth - 1.0;
    }
    return m;
}

} // namespace statarb
