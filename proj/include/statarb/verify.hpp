#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "backtest.hpp"
#include "linalg.hpp"
#include "synthetic.hpp"

// Property suites behind `statarb verify <suite>`. Each check reports the
// observed value next to its tolerance; failures are report content.
namespace statarb::verify {

struct Check {
    std::string name;
    double observed = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct SuiteReport {
    std::string suite;
    std::vector<Check> checks;

    bool passed() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return !checks.empty();
    }

    void add(std::string name, double observed, double tolerance) {
        checks.push_back({std::move(name), observed, tolerance, std::isfinite(observed) && observed <= tolerance});
    }

    void add_flag(std::string name, bool ok) { checks.push_back({std::move(name), ok ? 0.0 : 1.0, 0.0, ok}); }
};

inline void print(std::ostream& os, const SuiteReport& r) {
    char buf[256];
    for (const auto& c : r.checks) {
        std::snprintf(buf, sizeof buf, "[%s] %-56s observed %.3e  tol %.1e\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                      c.observed, c.tolerance);
        os << buf;
    }
    os << r.suite << ": " << (r.passed() ? "PASS" : "FAIL") << '\n';
}

namespace detail {

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> g(0.0, sd);
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = g(rng);
    return m;
}

// Smallest |pre-activation| over relu layers; finite differences are only
// meaningful when this is well above the step size.
inline double relu_margin(const nn::Network& net, const nn::Trace& tr) {
    double m = INFINITY;
    for (std::size_t k = 0; k < net.depth(); ++k) {
        if (net.layers()[k].spec.activation == nn::Activation::relu) m = std::min(m, tr.layers[k].pre.cwiseAbs().minCoeff());
    }
    return m;
}

inline constexpr double kKinkMargin = 1e-3;

} // namespace detail

// Autoencoder variant at N=8, latent 3, MSE loss, dropout masks frozen.
inline nn::GradientCheck autoencoder_gradient_check(int variant, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::Network net = make_autoencoder(8, ae_variant(variant), 3);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        net.init_uniform(rng);
        Matrix x = detail::gaussian(6, 8, rng);
        net.set_mode(nn::Mode::train);
        nn::Trace tr = nn::forward(net, x, rng());
        net.set_mode(nn::Mode::eval);
        if (detail::relu_margin(net, tr) < detail::kKinkMargin) continue;
        return nn::finite_difference_check(
            net, x, [&](const Matrix& out) { return nn::mse_loss(x, out); }, 1e-5, tr.masks());
    }
    throw NumericError("no off-kink draw found");
}

inline nn::GradientCheck ffn_gradient_check(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::Network net = make_ou_ffn(0.25);
    FFNBatch batch;
    batch.day_offsets = {0, 4, 8, 12};
    for (int attempt = 0; attempt < 1000; ++attempt) {
        net.init_uniform(rng);
        batch.features = detail::gaussian(12, kOUFeatures, rng);
        batch.next_returns = detail::gaussian(12, 1, rng, 0.02).col(0);
        net.set_mode(nn::Mode::train);
        nn::Trace tr = nn::forward(net, batch.features, rng());
        net.set_mode(nn::Mode::eval);
        if (detail::relu_margin(net, tr) < detail::kKinkMargin) continue;
        if ((tr.output.array().abs() < detail::kKinkMargin).any()) continue; // |.| kink of the L1 norm
        return nn::finite_difference_check(
            net, batch.features, [&](const Matrix& out) { return ffn_output_loss(out, batch); }, 1e-5, tr.masks());
    }
    throw NumericError("no off-kink draw found");
}

// Full composite policy loss on N=4, latent 2, T=6 toys.
inline nn::GradientCheck policy_gradient_check(std::uint64_t seed, double lambda = 0.5, Index stocks = 4,
                                               Index latent = 2, Index rows = 6) {
    std::mt19937_64 rng(seed);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        PolicyNet net = build_policy_net(stocks, latent, rng());
        Matrix z = detail::gaussian(rows, stocks, rng);
        Matrix next = detail::gaussian(rows, stocks, rng, 0.02);
        nn::Trace tr = nn::forward_with_masks(net.autoencoder, z, {});
        if (detail::relu_margin(net.autoencoder, tr) < detail::kKinkMargin) continue;
        Matrix raw = nn::predict(net.head, Matrix(tr.output - z));
        if ((raw.array().abs() < detail::kKinkMargin).any()) continue;

        PolicyLoss l = policy_loss(net, z, next, lambda);
        PolicyNet probe = net;
        Vector numeric = nn::numeric_gradient(
            [&](const Vector& theta) {
                probe.set_parameters(theta);
                return policy_loss(probe, z, next, lambda).value;
            },
            net.parameters(), 1e-5);
        nn::GradientCheck out;
        out.parameters = l.grad.size();
        out.max_relative_error = nn::max_relative_error(l.grad, numeric);
        out.max_absolute_error = (l.grad - numeric).cwiseAbs().maxCoeff();
        return out;
    }
    throw NumericError("no off-kink draw found");
}

inline SuiteReport gradients(std::uint64_t seed = 7) {
    SuiteReport r{"gradients", {}};
    for (int v = 0; v <= 9; ++v) {
        r.add("autoencoder variant " + std::to_string(v) + " (N=8, latent 3) max rel err",
              autoencoder_gradient_check(v, mix_seed(seed, static_cast<std::uint64_t>(v))).max_relative_error, 1e-4);
    }
    r.add("OU FFN 5-5-5-5-1 Sharpe loss max rel err", ffn_gradient_check(mix_seed(seed, 100)).max_relative_error, 1e-4);
    r.add("policy net (N=4, latent 2) composite loss max rel err",
          policy_gradient_check(mix_seed(seed, 200)).max_relative_error, 1e-4);
    return r;
}

// Correlation matrix of a random standardized panel, eigendecomposed the
// same way the PCA factor model does it.
inline SuiteReport pca(int seeds = 50, std::uint64_t seed = 11) {
    SuiteReport r{"pca", {}};
    double resid = 0.0, ortho = 0.0, trace = 0.0;
    for (int s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(s)));
        // a few common factors so the spectrum is not flat
        Matrix f = detail::gaussian(252, 3, rng, 0.01);
        Matrix b = detail::gaussian(20, 3, rng);
        Matrix ret = f * b.transpose() + detail::gaussian(252, 20, rng, 0.01);
        ReturnsPanel panel = panel_from_returns(ret);
        PCAFactorModel m = pca_factors(panel, 251, 252, 20);
        SymmetricEigen eig = jacobi_eigen(m.correlation);
        const Matrix& C = m.correlation;
        resid = std::max(resid, (C * eig.vectors - eig.vectors * eig.values.asDiagonal()).cwiseAbs().maxCoeff());
        ortho = std::max(ortho, (eig.vectors.transpose() * eig.vectors - Matrix::Identity(20, 20)).cwiseAbs().maxCoeff());
        trace = std::max(trace, std::abs(eig.values.sum() - 20.0));
    }
    r.add("max |Cv - lambda v| over " + std::to_string(seeds) + " seeds", resid, 1e-8);
    r.add("max |V'V - I|", ortho, 1e-8);
    r.add("max |sum(lambda) - N|", trace, 1e-6);

    double closed = 0.0;
    for (double rho : {-0.9, -0.3, 0.0, 0.25, 0.7, 0.99}) {
        Matrix C(2, 2);
        C << 1.0, rho, rho, 1.0;
        SymmetricEigen e = jacobi_eigen(C);
        closed = std::max({closed, std::abs(e.values(0) - (1.0 + std::abs(rho))), std::abs(e.values(1) - (1.0 - std::abs(rho)))});
    }
    r.add("2x2 eigenvalues vs 1 +/- rho", closed, 1e-12);
    return r;
}

// Exact discretization X_{t+1} = m + (X_t - m) e^{-k dt} + noise, started
// from the stationary law; returned as increments whose running sum is X.
inline Vector simulate_ou_increments(double kappa, double sigma_eq, double level, Index steps, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    const double decay = std::exp(-kappa / kTradingDaysPerYear);
    const double step_sd = sigma_eq * std::sqrt(1.0 - decay * decay);
    Vector inc(steps);
    double x = level + sigma_eq * g(rng), prev = 0.0;
    for (Index t = 0; t < steps; ++t) {
        if (t > 0) x = level + (x - level) * decay + step_sd * g(rng);
        inc(t) = x - prev;
        prev = x;
    }
    return inc;
}

// Largest violation of the algebraic links among the fitted fields.
inline double ou_identity_error(const OUParams& p) {
    if (!p.mean_reverting) return 0.0;
    const double k = -std::log(p.b) * kTradingDaysPerYear;
    const double m = p.a / (1.0 - p.b);
    const double se = std::sqrt(p.var_zeta / (1.0 - p.b * p.b));
    const double sg = se * std::sqrt(2.0 * k);
    auto rel = [](double x, double y) { return std::abs(x - y) / std::max(1.0, std::abs(y)); };
    return std::max({rel(p.k, k), rel(p.m, m), rel(p.sigma_eq, se), rel(p.sigma, sg),
                     rel(p.sigma_eq, p.sigma / std::sqrt(2.0 * p.k))});
}

inline SuiteReport ou(std::uint64_t seed = 5) {
    SuiteReport r{"ou", {}};
    const double kappa = 5.0, sigma_eq = 0.02, level = 0.01;
    Vector inc = simulate_ou_increments(kappa, sigma_eq, level, 10000, seed);
    OUParams p = estimate_ou(std::span<const double>(inc.data(), static_cast<std::size_t>(inc.size())), 10000);
    r.add_flag("long path is mean reverting", p.mean_reverting);
    r.add("k relative error (k_true = 5/yr)", std::abs(p.k - kappa) / kappa, 0.10);
    r.add("sigma_eq relative error (0.02)", std::abs(p.sigma_eq - sigma_eq) / sigma_eq, 0.10);
    r.add("|m - m_true| / sigma_eq", std::abs(p.m - level) / sigma_eq, 0.05);

    double ident = ou_identity_error(p);
    std::mt19937_64 rng(mix_seed(seed, 1));
    for (int w = 0; w < 200; ++w) {
        Vector win = simulate_ou_increments(8.0 + w % 20, 0.03, 0.0, kOUWindow, rng());
        OUParams q = estimate_ou(std::span<const double>(win.data(), static_cast<std::size_t>(win.size())));
        ident = std::max(ident, ou_identity_error(q));
    }
    r.add("OU identities over 201 fits", ident, 1e-10);
    return r;
}

inline SuiteReport invariants(std::uint64_t seed = 3) {
    SuiteReport r{"invariants", {}};
    std::mt19937_64 rng(seed);

    double l1 = 0.0;
    for (int k = 0; k < 200; ++k) {
        Vector phi = detail::gaussian(25, 1, rng).col(0);
        l1 = std::max(l1, std::abs(normalize_weights(phi).lpNorm<1>() - 1.0));
    }
    r.add("normalized weights |  ||w||_1 - 1 |", l1, 1e-12);

    double dot = 0.0;
    for (int k = 0; k < 200; ++k) {
        Vector w = detail::gaussian(13, 1, rng).col(0), ret = detail::gaussian(13, 1, rng, 0.02).col(0);
        double naive = 0.0;
        for (Index i = 0; i < 13; ++i) naive += w(i) * ret(i);
        dot = std::max(dot, std::abs(portfolio_return(w, ret) - naive));
    }
    r.add("portfolio return vs loop sum", dot, 1e-12);

    double sr = 0.0;
    for (int k = 0; k < 50; ++k) {
        Vector d = detail::gaussian(300, 1, rng, 0.01).col(0).array() + 0.0005;
        PerformanceMetrics m = performance_metrics(d);
        sr = std::max(sr, std::abs(m.sharpe - m.mu / m.sigma));
    }
    r.add("SR - mu/sigma", sr, 1e-12);

    // s paths replayed through the state machine twice give the same positions
    bool replay = true, hysteresis = true;
    std::uniform_real_distribution<double> u(-2.5, 2.5);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> s(200);
        for (auto& v : s) v = u(rng);
        PositionState a = PositionState::flat, b = PositionState::flat;
        for (double v : s) {
            PositionState before = a;
            a = ou_signal_step(a, v, 0.5).state;
            b = ou_signal_step(b, v, 0.5).state;
            replay = replay && a == b;
            if (before == PositionState::flat && a == PositionState::long_) hysteresis = hysteresis && v < -1.25;
            if (before == PositionState::flat && a == PositionState::short_) hysteresis = hysteresis && v > 1.25;
            if (before == PositionState::long_ && a == PositionState::flat) hysteresis = hysteresis && v > -0.5;
            if (before == PositionState::short_ && a == PositionState::flat) hysteresis = hysteresis && v < 0.75;
        }
    }
    r.add_flag("threshold replay determinism", replay);
    r.add_flag("positions open/close only across thresholds", hysteresis);

    SyntheticSpec spec = make_synthetic_spec(6, 2, 300, 8.0, 0.05, seed);
    SyntheticMarket m1 = generate_synthetic_panel(spec), m2 = generate_synthetic_panel(spec);
    r.add_flag("synthetic panel reproducible bit-for-bit",
               m1.panel.returns.cwiseEqual(m2.panel.returns).all() && m1.panel.dates == m2.panel.dates);

    PolicyNet net = build_policy_net(10, 3, seed);
    r.add_flag("policy net N=10, latent 3 has 173 parameters", net.parameter_count() == 173);
    double pw = 0.0;
    for (int k = 0; k < 50; ++k) {
        PolicyOutput o = policy_forward(net, detail::gaussian(10, 1, rng).col(0));
        if (!o.zero_signal) pw = std::max(pw, std::abs(o.weights.lpNorm<1>() - 1.0));
    }
    r.add("policy weights |  ||w||_1 - 1 |", pw, 1e-12);
    return r;
}

inline const char* const kSuites[] = {"gradients", "pca", "ou", "invariants"};

inline SuiteReport run(const std::string& suite) {
    if (suite == "gradients") return gradients();
    if (suite == "pca") return pca();
    if (suite == "ou") return ou();
    if (suite == "invariants") return invariants();
    throw ConfigError("unknown suite '" + suite + "' (gradients, pca, ou, invariants)");
}

} // namespace statarb::verify
