#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "factor_models.hpp"
#include "nn.hpp"
#include "portfolio.hpp"

// End-to-end autoencoder trading policy.
//
//   F     = relu(W0 z + b0)           encoder, l units
//   zhat  = tanh(W1 F + b1)           decoder, N units
//   w     = tanh(W2 (zhat - z))       policy head, no bias
//   w_n   = w / ||w||_1
//
// Trained on  lambda * MSE(z, zhat) + (1 - lambda) * (-Sharpe)  where the
// Sharpe ratio is taken over the daily returns w_n,t . r_{t+1} of the window.
namespace statarb {

struct PolicyNet {
    nn::Network autoencoder; // encoder + decoder
    nn::Network head;        // N -> N, tanh, no bias

    Index stocks() const { return autoencoder.input_dim(); }
    Index latent() const { return autoencoder.layers().front().spec.out_dim; }
    Index parameter_count() const { return autoencoder.parameter_count() + head.parameter_count(); }

    Vector parameters() const {
        Vector out(parameter_count());
        out << autoencoder.parameters(), head.parameters();
        return out;
    }

    void set_parameters(const Eigen::Ref<const Vector>& theta) {
        const Index n = autoencoder.parameter_count();
        autoencoder.set_parameters(theta.head(n));
        head.set_parameters(theta.tail(theta.size() - n));
    }
};

inline nn::Network make_policy_autoencoder(Index stocks, Index latent) {
    using nn::Activation;
    return nn::Network({{stocks, latent, Activation::relu, true, 0.0}, {latent, stocks, Activation::tanh, true, 0.0}});
}

// The autoencoder is initialized first from the seeded stream, so it starts
// from the same point as a plain reconstruction net built with the same seed.
inline PolicyNet build_policy_net(Index stocks, Index latent, std::uint64_t seed) {
    if (latent < 1 || latent >= stocks) {
        throw ConfigError("policy net needs 1 <= latent < stocks (latent=" + std::to_string(latent) +
                          ", stocks=" + std::to_string(stocks) + ")");
    }
    PolicyNet net{make_policy_autoencoder(stocks, latent), nn::Network({{stocks, stocks, nn::Activation::tanh, false, 0.0}})};
    std::mt19937_64 rng(seed);
    net.autoencoder.init_uniform(rng);
    net.head.init_uniform(rng);
    return net;
}

struct PolicyOutput {
    Vector reconstruction;
    Vector residual; // reconstruction - input
    Vector raw;      // tanh head output
    Vector weights;  // L1-normalized raw, zero on a zero-signal day
    bool zero_signal = false;
};

inline PolicyOutput policy_forward(const PolicyNet& net, const Eigen::Ref<const Vector>& z) {
    if (z.size() != net.stocks()) throw DimensionError("policy_forward: input length != stocks");
    Matrix x = z.transpose();
    PolicyOutput out;
    out.reconstruction = nn::predict(net.autoencoder, x).row(0).transpose();
    out.residual = out.reconstruction - z;
    out.raw = nn::predict(net.head, Matrix(out.residual.transpose())).row(0).transpose();
    out.zero_signal = !(out.raw.lpNorm<1>() > 0.0);
    out.weights = normalize_weights(out.raw);
    return out;
}

struct PolicyLoss {
    double value = 0.0;
    double mse = 0.0;
    double sharpe = 0.0;
    Vector daily_returns;
    Vector grad; // flat, matches PolicyNet::parameters()
    bool degenerate = false; // Sharpe variance vanished; gradient is the MSE term only
};

// `z` holds standardized inputs for days t, `next_returns` the realized
// returns of day t+1 for the same stocks (row-aligned).
inline PolicyLoss policy_loss(const PolicyNet& net, const Matrix& z, const Matrix& next_returns, double lambda) {
    if (z.rows() != next_returns.rows() || z.cols() != next_returns.cols()) {
        throw DimensionError("policy_loss: inputs and next-day returns misaligned");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
    const Index T = z.rows();
    PolicyLoss out;

    nn::Trace ae_tr = nn::forward_with_masks(net.autoencoder, z, {});
    nn::LossValue mse = nn::mse_loss(z, ae_tr.output);
    out.mse = mse.value;
    Matrix d_recon = lambda * mse.grad;
    Vector head_grad = Vector::Zero(net.head.parameter_count());

    if (lambda < 1.0) {
        Matrix residual = ae_tr.output - z;
        nn::Trace head_tr = nn::forward_with_masks(net.head, residual, {});
        const Matrix& raw = head_tr.output;
        out.daily_returns.resize(T);
        for (Index t = 0; t < T; ++t) {
            out.daily_returns(t) = normalize_weights(raw.row(t).transpose()).dot(next_returns.row(t).transpose());
        }
        try {
            nn::SharpeValue sv = nn::sharpe_loss(out.daily_returns);
            out.sharpe = sv.sharpe;
            Matrix d_raw(T, raw.cols());
            for (Index t = 0; t < T; ++t) {
                Vector upstream = (1.0 - lambda) * sv.grad(t) * next_returns.row(t).transpose();
                d_raw.row(t) = l1_normalize_backward(raw.row(t).transpose(), upstream).transpose();
            }
            nn::Gradients hg = nn::backward(net.head, head_tr, d_raw);
            head_grad = hg.flatten();
            d_recon += hg.input; // residual = recon - z; z is data, so only recon receives it
        } catch (const DegenerateError&) {
            out.degenerate = true;
        }
    }
    out.value = lambda * out.mse + (out.degenerate ? 0.0 : (1.0 - lambda) * -out.sharpe);
    nn::Gradients ag = nn::backward(net.autoencoder, ae_tr, d_recon);
    out.grad.resize(net.parameter_count());
    out.grad << ag.flatten(), head_grad;
    return out;
}

struct PolicyConfig {
    Index latent = 10;
    double lambda = 0.5;
    int epochs = 10;
    double learning_rate = 1e-3;
    Index window = 252;
    double cap = 3.0;
    std::uint64_t seed = 1;
};

struct TrainedPolicy {
    PolicyNet net;
    std::vector<double> loss; // per epoch, before that epoch's update
    int degenerate_epochs = 0;
};

// One full-window Adam step per epoch, fresh net from `seed`.
inline TrainedPolicy train_policy(const Matrix& z, const Matrix& next_returns, const PolicyConfig& cfg,
                                  std::uint64_t seed) {
    TrainedPolicy out{build_policy_net(z.cols(), cfg.latent, seed), {}, 0};
    nn::AdamState adam(out.net.parameter_count(), cfg.learning_rate);
    for (int e = 0; e < cfg.epochs; ++e) {
        PolicyLoss l = policy_loss(out.net, z, next_returns, cfg.lambda);
        out.loss.push_back(l.value);
        if (l.degenerate) ++out.degenerate_epochs;
        Vector theta = out.net.parameters();
        nn::adam_step(theta, l.grad, adam);
        out.net.set_parameters(theta);
    }
    return out;
}

struct PolicyDay {
    std::vector<Index> stocks; // panel columns traded
    Vector weights;            // full panel width; zero outside `stocks`
    bool skipped = false;      // too few stocks to build the net
    bool zero_signal = false;
    int degenerate_epochs = 0;
    std::vector<double> loss;
    std::string note;
};

// Trains on the standardized window ending at t (pairs (z_d, r_{d+1}) with
// d+1 <= t) and emits weights for day t+1. Rows after t are never read.
inline PolicyDay train_policy_day(const ReturnsPanel& panel, const UniverseMask& universe, Index t,
                                  const PolicyConfig& cfg) {
    PolicyDay day;
    day.weights = Vector::Zero(panel.stocks());
    const Index first = t - cfg.window + 1;
    if (first < 0) throw InsufficientDataError("policy: window starts before the panel");
    auto candidates = modelable_stocks(panel, universe, t, first, t);
    if (static_cast<Index>(candidates.size()) <= cfg.latent) {
        day.skipped = day.zero_signal = true;
        day.note = std::to_string(candidates.size()) + " stocks, latent " + std::to_string(cfg.latent);
        return day;
    }
    StandardizedWindow w = standardize_window(panel, t, cfg.window, candidates, cfg.cap);
    const Index n = static_cast<Index>(w.stocks.size());
    Matrix z = w.values.topRows(cfg.window - 1);
    Matrix next(cfg.window - 1, n);
    for (Index c = 0; c < n; ++c) next.col(c) = panel.returns.col(w.stocks[static_cast<std::size_t>(c)]).segment(first + 1, cfg.window - 1);

    TrainedPolicy tp = train_policy(z, next, cfg, mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    PolicyOutput o = policy_forward(tp.net, w.values.row(cfg.window - 1).transpose());
    day.stocks = w.stocks;
    day.zero_signal = o.zero_signal;
    day.degenerate_epochs = tp.degenerate_epochs;
    day.loss = std::move(tp.loss);
    for (Index c = 0; c < n; ++c) day.weights(w.stocks[static_cast<std::size_t>(c)]) = o.weights(c);
    return day;
}

} // namespace statarb
