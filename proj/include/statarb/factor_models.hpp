#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "linalg.hpp"
#include "market_data.hpp"
#include "nn.hpp"

namespace statarb {

// Out-of-sample residuals, one row per panel date. NaN where the stock was
// not modelable that day.
struct ResidualPanel {
    std::vector<Date> dates;
    std::vector<std::string> tickers;
    Matrix values;
    BoolMatrix rank_deficient; // min-norm regression was used for that stock-day
    std::string model;
    std::string variant;
    std::vector<std::string> notes; // skipped days and why

    static ResidualPanel empty_like(const ReturnsPanel& p, std::string model, std::string variant) {
        ResidualPanel r;
        r.dates = p.dates;
        r.tickers = p.tickers;
        r.values = Matrix::Constant(p.days(), p.stocks(), kNaN);
        r.rank_deficient = BoolMatrix::Constant(p.days(), p.stocks(), false);
        r.model = std::move(model);
        r.variant = std::move(variant);
        return r;
    }

    bool has(Index t, Index i) const { return !std::isnan(values(t, i)); }
};

inline void write_residuals_csv(std::ostream& out, const ResidualPanel& r) {
    out << "date,ticker,residual,model,variant\n";
    out.precision(17);
    for (Index t = 0; t < r.values.rows(); ++t) {
        for (Index i = 0; i < r.values.cols(); ++i) {
            if (!r.has(t, i)) continue;
            out << r.dates[static_cast<std::size_t>(t)].str() << ',' << r.tickers[static_cast<std::size_t>(i)] << ','
                << r.values(t, i) << ',' << r.model << ',' << r.variant << '\n';
        }
    }
}

namespace detail {

// Regress a stock's returns on factor history (intercept fit, not projected)
// and return r_next - beta' f_next.
inline double next_day_residual(const Eigen::Ref<const Matrix>& factor_hist, const Eigen::Ref<const Vector>& r_hist,
                                const Eigen::Ref<const Vector>& factor_next, double r_next, bool* rank_deficient,
                                Vector* beta_out = nullptr) {
    OLSFit fit = ols_fit(factor_hist, r_hist, true);
    if (rank_deficient) *rank_deficient = fit.rank_deficient;
    if (beta_out) *beta_out = fit.beta;
    return r_next - fit.project(factor_next);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Exogenous factors

// For each day s and stock i: fit beta on rows [s-window, s-1] of (r_i, F),
// then eps_{i,s} = r_{i,s} - beta' F_s. `factors` is aligned to panel rows.
inline ResidualPanel exogenous_residuals(const ReturnsPanel& panel, const UniverseMask& universe,
                                         const Matrix& factors, Index window = 60, std::string variant = "") {
    if (factors.rows() != panel.days()) throw Error("factor returns not aligned to panel dates");
    ResidualPanel out = ResidualPanel::empty_like(panel, "FF", std::move(variant));
    for (Index s = window; s < panel.days(); ++s) {
        auto stocks = modelable_stocks(panel, universe, s, s - window, s);
        Matrix F = factors.middleRows(s - window, window);
        Vector f_next = factors.row(s).transpose();
        for (Index i : stocks) {
            bool rd = false;
            out.values(s, i) = detail::next_day_residual(F, panel.returns.col(i).segment(s - window, window), f_next,
                                                         panel.returns(s, i), &rd);
            out.rank_deficient(s, i) = rd;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// PCA eigenportfolios

struct PCAFactorModel {
    std::vector<Index> stocks;
    Index first_row = 0;
    Index last_row = 0;
    Matrix correlation;
    Vector eigenvalues;  // all, descending
    Matrix eigenvectors; // top k, columns
    Vector mean;
    Vector sd;
    Matrix weights;        // eigenportfolio weights v_i / sd_i, stocks x k
    Matrix factor_returns; // window rows x k, from raw returns

    Vector factor_return(const ReturnsPanel& panel, Index row) const {
        Vector r(static_cast<Index>(stocks.size()));
        for (std::size_t c = 0; c < stocks.size(); ++c) r(static_cast<Index>(c)) = panel.returns(row, stocks[c]);
        return weights.transpose() * r;
    }
};

// Correlation of unclipped standardized returns over [t-window+1, t],
// Jacobi eigendecomposition, top-k eigenportfolios.
inline PCAFactorModel pca_factors(const ReturnsPanel& panel, Index t, Index window, Index k,
                                  std::span<const Index> candidates) {
    StandardizedWindow z = standardize_window(panel, t, window, candidates);
    const Index n = static_cast<Index>(z.stocks.size());
    if (k < 1 || k > n) {
        throw ConfigError("pca: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "] valid stocks");
    }
    PCAFactorModel m;
    m.stocks = z.stocks;
    m.first_row = z.first_row;
    m.last_row = z.last_row;
    m.mean = z.mean;
    m.sd = z.sd;
    m.correlation = (z.values.transpose() * z.values) / static_cast<double>(window - 1);
    SymmetricEigen eig = jacobi_eigen(m.correlation);
    m.eigenvalues = eig.values;
    m.eigenvectors = eig.vectors.leftCols(k);
    m.weights = m.eigenvectors.array().colwise() / m.sd.array();
    Matrix R(window, n);
    for (Index c = 0; c < n; ++c) R.col(c) = panel.returns.col(m.stocks[static_cast<std::size_t>(c)]).segment(z.first_row, window);
    m.factor_returns = R * m.weights;
    return m;
}

inline PCAFactorModel pca_factors(const ReturnsPanel& panel, Index t, Index window, Index k) {
    auto all = panel.all_stocks();
    return pca_factors(panel, t, window, k, all);
}

struct PCAResidualDay {
    std::vector<Index> stocks;
    Matrix betas; // stocks x k
    Vector residuals;
    std::vector<bool> rank_deficient;
};

// Residuals for day s from a PCA fit on [s-window, s-1] and loadings from the
// last `regression_window` rows of that window. Row s enters only through
// eps = r_s - beta' F_s.
inline PCAResidualDay pca_residual_day(const ReturnsPanel& panel, const UniverseMask& universe, Index s, Index k,
                                       Index window = 252, Index regression_window = 60) {
    auto candidates = modelable_stocks(panel, universe, s, s - window, s);
    PCAFactorModel m = pca_factors(panel, s - 1, window, k, candidates);
    const Index n = static_cast<Index>(m.stocks.size());
    Matrix F = m.factor_returns.bottomRows(regression_window);
    Vector f_next = m.factor_return(panel, s);
    PCAResidualDay day;
    day.stocks = m.stocks;
    day.betas.resize(n, k);
    day.residuals.resize(n);
    day.rank_deficient.assign(static_cast<std::size_t>(n), false);
    for (Index c = 0; c < n; ++c) {
        const Index i = m.stocks[static_cast<std::size_t>(c)];
        bool rd = false;
        Vector beta;
        day.residuals(c) = detail::next_day_residual(F, panel.returns.col(i).segment(s - regression_window, regression_window),
                                                     f_next, panel.returns(s, i), &rd, &beta);
        day.betas.row(c) = beta.transpose();
        day.rank_deficient[static_cast<std::size_t>(c)] = rd;
    }
    return day;
}

inline ResidualPanel pca_residuals(const ReturnsPanel& panel, const UniverseMask& universe, Index k,
                                   Index window = 252, Index regression_window = 60) {
    ResidualPanel out = ResidualPanel::empty_like(panel, "PCA", "PCA " + std::to_string(k));
    for (Index s = window; s < panel.days(); ++s) {
        auto candidates = modelable_stocks(panel, universe, s, s - window, s);
        if (static_cast<Index>(candidates.size()) < k) {
            out.notes.push_back(panel.dates[static_cast<std::size_t>(s)].str() + ": fewer valid stocks than k");
            continue;
        }
        PCAResidualDay day;
        try {
            day = pca_residual_day(panel, universe, s, k, window, regression_window);
        } catch (const DegenerateError& e) {
            out.notes.push_back(panel.dates[static_cast<std::size_t>(s)].str() + ": " + e.what());
            continue;
        }
        for (std::size_t c = 0; c < day.stocks.size(); ++c) {
            out.values(s, day.stocks[c]) = day.residuals(static_cast<Index>(c));
            out.rank_deficient(s, day.stocks[c]) = day.rank_deficient[c];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Autoencoders

struct AEVariant {
    int id = 0;
    nn::Activation activation = nn::Activation::tanh;
    bool bias = true;
    double dropout = 0.0;
    int encoder_layers = 1;
};

// Architecture table for residual-generation autoencoders (variants 0-9).
inline AEVariant ae_variant(int id) {
    using nn::Activation;
    static const AEVariant table[] = {
        {0, Activation::tanh, true, 0.25, 1}, {1, Activation::tanh, true, 0.25, 3},
        {2, Activation::tanh, true, 0.0, 1},  {3, Activation::tanh, false, 0.0, 1},
        {4, Activation::tanh, false, 0.0, 3}, {5, Activation::relu, true, 0.25, 1},
        {6, Activation::relu, true, 0.25, 3}, {7, Activation::relu, true, 0.0, 1},
        {8, Activation::relu, false, 0.0, 1}, {9, Activation::relu, false, 0.0, 3},
    };
    if (id < 0 || id > 9) throw ConfigError("autoencoder variant must be 0-9, got " + std::to_string(id));
    return table[id];
}

inline constexpr Index kAELatent = 20;

// Encoder per variant (N->latent, or N->64->32->latent), tanh decoder back to N.
inline nn::Network make_autoencoder(Index inputs, const AEVariant& v, Index latent = kAELatent) {
    std::vector<nn::LayerSpec> specs;
    std::vector<Index> widths{inputs};
    if (v.encoder_layers == 3) {
        widths.push_back(64);
        widths.push_back(32);
    } else if (v.encoder_layers != 1) {
        throw ConfigError("encoder must have 1 or 3 layers");
    }
    widths.push_back(latent);
    for (std::size_t k = 1; k < widths.size(); ++k) {
        specs.push_back({widths[k - 1], widths[k], v.activation, v.bias, v.dropout});
    }
    specs.push_back({latent, inputs, nn::Activation::tanh, v.bias, 0.0});
    return nn::Network(std::move(specs));
}

// Forward through every layer but the last (the latent code), eval mode.
inline Matrix encode(const nn::Network& net, const Matrix& x) {
    if (net.depth() < 2) throw DimensionError("encode: network has no decoder layer");
    nn::Trace tr = nn::forward_with_masks(net, x, {});
    return tr.layers[net.depth() - 2].post;
}

struct TrainOptions {
    int epochs = 10;
    Index batch_size = 32; // >= rows means one full-batch step per epoch, rows kept in order
    double learning_rate = 1e-3;
};

struct TrainedNetwork {
    nn::Network net;
    std::vector<double> epoch_loss; // eval-mode full-data MSE: [0] before training, then after each epoch
};

// MSE reconstruction training with Adam. Deterministic under `seed`:
// the same generator drives init, row shuffling and dropout masks.
inline TrainedNetwork train_reconstruction(nn::Network net, const Matrix& z, std::uint64_t seed,
                                           const TrainOptions& opt = {}) {
    std::mt19937_64 rng(seed);
    net.init_uniform(rng);
    nn::AdamState adam(net.parameter_count(), opt.learning_rate);
    TrainedNetwork out;
    auto full_loss = [&] { return nn::mse_loss(z, nn::predict(net, z)).value; };
    out.epoch_loss.push_back(full_loss());

    const Index rows = z.rows();
    std::vector<Index> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), Index{0});
    const bool full_batch = opt.batch_size >= rows;
    for (int e = 0; e < opt.epochs; ++e) {
        if (!full_batch) std::shuffle(order.begin(), order.end(), rng);
        for (Index start = 0; start < rows; start += opt.batch_size) {
            const Index len = std::min(opt.batch_size, rows - start);
            Matrix batch(len, z.cols());
            for (Index r = 0; r < len; ++r) batch.row(r) = z.row(order[static_cast<std::size_t>(start + r)]);
            net.set_mode(nn::Mode::train);
            nn::Trace tr = nn::forward(net, batch, rng());
            nn::LossValue lv = nn::mse_loss(batch, tr.output);
            nn::Gradients g = nn::backward(net, tr, lv.grad);
            nn::adam_step(net, g, adam);
        }
        net.set_mode(nn::Mode::eval);
        out.epoch_loss.push_back(full_loss());
    }
    net.set_mode(nn::Mode::eval);
    out.net = std::move(net);
    return out;
}

inline TrainedNetwork train_autoencoder(const Matrix& z, const AEVariant& variant, std::uint64_t seed,
                                        const TrainOptions& opt = {}, Index latent = kAELatent) {
    if (z.cols() < latent) {
        throw InsufficientDataError("autoencoder: " + std::to_string(z.cols()) + " stocks below latent width " +
                                    std::to_string(latent));
    }
    return train_reconstruction(make_autoencoder(z.cols(), variant, latent), z, seed, opt);
}

enum class ResidualOption { reconstruction = 1, latent_regression = 2, scaled_latent_regression = 3 };

// A day's trained autoencoder plus the standardized window it was fit on.
struct AEDayModel {
    nn::Network net;
    StandardizedWindow window; // rows [s - T_tau, s - 1]
    double cap = 3.0;
};

struct AEResidualConfig {
    AEVariant variant = ae_variant(0);
    ResidualOption option = ResidualOption::latent_regression;
    Index window = 252;
    Index regression_window = 60;
    Index vol_lookback = 252;
    double cap = 3.0;
    Index latent = kAELatent;
    TrainOptions train{};
    std::uint64_t seed = 1;
};

struct AEResidualDay {
    std::vector<Index> stocks;
    Vector residuals;
    std::vector<bool> rank_deficient;
};

// Residuals for day s from a net trained on the window ending s-1.
inline AEResidualDay ae_residuals(const AEDayModel& model, const ReturnsPanel& panel, Index s, ResidualOption option,
                                  Index regression_window = 60, Index vol_lookback = 252) {
    const auto& w = model.window;
    if (w.last_row != s - 1) throw Error("ae_residuals: model window must end the day before s");
    const Index n = static_cast<Index>(w.stocks.size());
    AEResidualDay day;
    day.stocks = w.stocks;
    day.residuals.resize(n);
    day.rank_deficient.assign(static_cast<std::size_t>(n), false);

    Vector z_next(n);
    for (Index c = 0; c < n; ++c) {
        const double z = (panel.returns(s, w.stocks[static_cast<std::size_t>(c)]) - w.mean(c)) / w.sd(c);
        z_next(c) = std::clamp(z, -model.cap, model.cap);
    }

    if (option == ResidualOption::reconstruction) {
        Matrix zn = z_next.transpose();
        day.residuals = (zn - nn::predict(model.net, zn)).row(0).transpose();
        return day;
    }

    Matrix codes_hist, code_next;
    if (option == ResidualOption::latent_regression) {
        Matrix hist = w.values.bottomRows(regression_window);
        codes_hist = encode(model.net, hist);
        code_next = encode(model.net, Matrix(z_next.transpose()));
    } else {
        ScaledWindow sw = volatility_scale_window(panel, s, regression_window + 1, w.stocks, vol_lookback);
        if (sw.stocks.size() != w.stocks.size()) throw Error("ae_residuals: scaled window lost stocks");
        codes_hist = encode(model.net, sw.values.topRows(regression_window));
        code_next = encode(model.net, sw.values.bottomRows(1));
    }
    Vector f_next = code_next.row(0).transpose();
    for (Index c = 0; c < n; ++c) {
        const Index i = w.stocks[static_cast<std::size_t>(c)];
        bool rd = false;
        day.residuals(c) = detail::next_day_residual(codes_hist, panel.returns.col(i).segment(s - regression_window, regression_window),
                                                     f_next, panel.returns(s, i), &rd);
        day.rank_deficient[static_cast<std::size_t>(c)] = rd;
    }
    return day;
}

// splitmix64 finalizer, used to derive per-day seeds from a run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Index ae_first_residual_row(const AEResidualConfig& cfg) {
    Index need = cfg.window;
    if (cfg.option == ResidualOption::scaled_latent_regression) need = std::max(need, cfg.regression_window + cfg.vol_lookback);
    return need;
}

inline AEDayModel fit_ae_day(const ReturnsPanel& panel, const UniverseMask& universe, Index s,
                             const AEResidualConfig& cfg) {
    Index first = s - cfg.window;
    if (cfg.option == ResidualOption::scaled_latent_regression) {
        first = std::min(first, s - cfg.regression_window - cfg.vol_lookback);
    }
    auto candidates = modelable_stocks(panel, universe, s, first, s);
    AEDayModel m;
    m.cap = cfg.cap;
    m.window = standardize_window(panel, s - 1, cfg.window, candidates, cfg.cap);
    m.net = train_autoencoder(m.window.values, cfg.variant, mix_seed(cfg.seed, static_cast<std::uint64_t>(s)), cfg.train,
                              cfg.latent)
                .net;
    return m;
}

inline ResidualPanel ae_residual_panel(const ReturnsPanel& panel, const UniverseMask& universe,
                                       const AEResidualConfig& cfg) {
    ResidualPanel out = ResidualPanel::empty_like(panel, "AE" + std::to_string(static_cast<int>(cfg.option)),
                                                  "Variant " + std::to_string(cfg.variant.id));
    for (Index s = ae_first_residual_row(cfg); s < panel.days(); ++s) {
        AEDayModel m;
        try {
            m = fit_ae_day(panel, universe, s, cfg);
        } catch (const InsufficientDataError& e) {
            out.notes.push_back(panel.dates[static_cast<std::size_t>(s)].str() + ": " + e.what());
            continue;
        } catch (const DegenerateError& e) {
            out.notes.push_back(panel.dates[static_cast<std::size_t>(s)].str() + ": " + e.what());
            continue;
        }
        AEResidualDay day = ae_residuals(m, panel, s, cfg.option, cfg.regression_window, cfg.vol_lookback);
        for (std::size_t c = 0; c < day.stocks.size(); ++c) {
            out.values(s, day.stocks[c]) = day.residuals(static_cast<Index>(c));
            out.rank_deficient(s, day.stocks[c]) = day.rank_deficient[c];
        }
    }
    return out;
}

} // namespace statarb
