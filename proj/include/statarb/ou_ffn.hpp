#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "nn.hpp"
#include "ou.hpp"
#include "portfolio.hpp"

// OU+FFN signal extraction: a small relu net maps each stock's OU summary
// (a, b, var_zeta, R^2, s-score) to a real-valued position, trained on the
// Sharpe ratio of the day-by-day L1-normalized portfolios it implies.
namespace statarb {

inline constexpr Index kOUFeatures = 5;

inline std::array<double, kOUFeatures> ou_features(const OUParams& p) {
    return {p.a, p.b, p.var_zeta, p.r2, *s_score(p)};
}

// T x N x 5 feature history; a cell is valid only for mean-reverting fits.
struct OUFeaturePanel {
    std::vector<Matrix> features; // one T x N matrix per feature, NaN when invalid
    BoolMatrix valid;

    Index days() const { return valid.rows(); }
    Index stocks() const { return valid.cols(); }

    Eigen::RowVectorXd row(Index t, Index i) const {
        Eigen::RowVectorXd x(kOUFeatures);
        for (Index f = 0; f < kOUFeatures; ++f) x(f) = features[static_cast<std::size_t>(f)](t, i);
        return x;
    }
};

inline OUFeaturePanel ou_feature_panel(const ResidualPanel& res, Index first_row, Index window = kOUWindow) {
    const Index T = res.values.rows(), N = res.values.cols();
    OUFeaturePanel fp;
    fp.features.assign(kOUFeatures, Matrix::Constant(T, N, kNaN));
    fp.valid = BoolMatrix::Constant(T, N, false);
    for (Index t = std::max<Index>(first_row, 0); t < T; ++t) {
        for (Index i = 0; i < N; ++i) {
            auto fit = ou_fit_at(res, i, t, window);
            if (!fit || !fit->mean_reverting) continue;
            auto f = ou_features(*fit);
            for (Index k = 0; k < kOUFeatures; ++k) fp.features[static_cast<std::size_t>(k)](t, i) = f[static_cast<std::size_t>(k)];
            fp.valid(t, i) = true;
        }
    }
    return fp;
}

// 5 -> 5 -> 5 -> 5 -> 1: three relu layers with dropout, linear output.
inline nn::Network make_ou_ffn(double dropout = 0.25) {
    using nn::Activation;
    return nn::Network({{kOUFeatures, 5, Activation::relu, true, dropout},
                        {5, 5, Activation::relu, true, dropout},
                        {5, 5, Activation::relu, true, dropout},
                        {5, 1, Activation::identity, true, 0.0}});
}

// Samples ordered by day; day_offsets[d]..day_offsets[d+1] are day d's rows.
struct FFNBatch {
    Matrix features;     // samples x 5
    Vector next_returns; // realized next-day stock return per sample
    std::vector<Index> day_offsets;

    Index days() const { return static_cast<Index>(day_offsets.size()) - 1; }
};

struct FFNLoss {
    double value = 0.0; // -Sharpe
    double sharpe = 0.0;
    Vector daily_returns;
    nn::Gradients grads;
    bool degenerate = false;
};

// Net outputs -> per-day L1 normalization -> daily portfolio return -> -Sharpe.
// The gradient is with respect to the raw outputs. Throws DegenerateError
// when the daily series has no variance.
inline nn::LossValue ffn_output_loss(const Matrix& output, const FFNBatch& batch, Vector* daily = nullptr,
                                     double* sharpe = nullptr) {
    const Index D = batch.days();
    const Vector phi = output.col(0);
    auto span = [&](Index d) {
        const Index a = batch.day_offsets[static_cast<std::size_t>(d)];
        return std::pair{a, batch.day_offsets[static_cast<std::size_t>(d + 1)] - a};
    };
    Vector r(D);
    for (Index d = 0; d < D; ++d) {
        auto [a, n] = span(d);
        r(d) = normalize_weights(phi.segment(a, n)).dot(batch.next_returns.segment(a, n));
    }
    if (daily) *daily = r;
    nn::SharpeValue sv = nn::sharpe_loss(r);
    if (sharpe) *sharpe = sv.sharpe;
    nn::LossValue out{sv.value, Matrix(phi.size(), 1)};
    for (Index d = 0; d < D; ++d) {
        auto [a, n] = span(d);
        Vector upstream = sv.grad(d) * batch.next_returns.segment(a, n);
        out.grad.col(0).segment(a, n) = l1_normalize_backward(phi.segment(a, n), upstream);
    }
    return out;
}

inline FFNLoss ffn_portfolio_loss(const nn::Network& net, const FFNBatch& batch, const nn::Trace& trace) {
    FFNLoss out;
    try {
        nn::LossValue lv = ffn_output_loss(trace.output, batch, &out.daily_returns, &out.sharpe);
        out.value = lv.value;
        out.grads = nn::backward(net, trace, lv.grad);
    } catch (const DegenerateError&) {
        out.degenerate = true;
    }
    return out;
}

struct FeatureScaler {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(kOUFeatures);
    Eigen::RowVectorXd sd = Eigen::RowVectorXd::Ones(kOUFeatures);

    static FeatureScaler fit(const Matrix& x) {
        FeatureScaler s;
        if (x.rows() < 2) return s;
        s.mean = x.colwise().mean();
        for (Index f = 0; f < x.cols(); ++f) {
            const double sd = std::sqrt((x.col(f).array() - s.mean(f)).square().sum() / static_cast<double>(x.rows() - 1));
            s.sd(f) = sd > 0.0 ? sd : 1.0;
        }
        return s;
    }

    Matrix apply(const Matrix& x) const {
        return ((x.rowwise() - mean).array().rowwise() / sd.array()).matrix();
    }
};

struct FFNTrainOptions {
    int epochs = 5;
    Index batch_samples = 1000;
    double learning_rate = 1e-3;
    double dropout = 0.25;
};

struct TrainedFFN {
    nn::Network net;
    FeatureScaler scaler;
    int batches = 0;
    int flagged_batches = 0; // degenerate-variance batches, skipped
};

// Features on days [first, last] with the realized return of the following
// day; stocks without a valid fit or next-day return are left out.
inline FFNBatch collect_samples(const OUFeaturePanel& fp, const ReturnsPanel& panel, Index first, Index last) {
    FFNBatch b;
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rets;
    b.day_offsets.push_back(0);
    for (Index t = first; t <= last; ++t) {
        if (t + 1 >= panel.days()) break;
        Index count = 0;
        for (Index i = 0; i < fp.stocks(); ++i) {
            if (!fp.valid(t, i) || panel.missing(t + 1, i)) continue;
            rows.push_back(fp.row(t, i));
            rets.push_back(panel.returns(t + 1, i));
            ++count;
        }
        if (count > 0) b.day_offsets.push_back(b.day_offsets.back() + count);
    }
    b.features.resize(static_cast<Index>(rows.size()), kOUFeatures);
    b.next_returns.resize(static_cast<Index>(rets.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        b.features.row(static_cast<Index>(k)) = rows[k];
        b.next_returns(static_cast<Index>(k)) = rets[k];
    }
    return b;
}

// Splits whole days into consecutive batches of at least `target` samples.
inline std::vector<FFNBatch> split_batches(const FFNBatch& all, Index target) {
    std::vector<FFNBatch> out;
    std::size_t day = 0;
    const std::size_t days = all.day_offsets.size() - 1;
    while (day < days) {
        std::size_t end = day;
        while (end < days && all.day_offsets[end] - all.day_offsets[day] < target) ++end;
        FFNBatch b;
        const Index a = all.day_offsets[day], n = all.day_offsets[end] - a;
        b.features = all.features.middleRows(a, n);
        b.next_returns = all.next_returns.segment(a, n);
        for (std::size_t d = day; d <= end; ++d) b.day_offsets.push_back(all.day_offsets[d] - a);
        if (b.days() >= 2) out.push_back(std::move(b));
        day = end;
    }
    return out;
}

inline TrainedFFN train_ou_ffn(const FFNBatch& history, Index history_days, std::uint64_t seed,
                               const FFNTrainOptions& opt = {}, Index required_days = 1000) {
    if (history_days < required_days) {
        throw InsufficientDataError("OU+FFN needs " + std::to_string(required_days) + " days of OU history, got " +
                                    std::to_string(history_days));
    }
    TrainedFFN out;
    out.scaler = FeatureScaler::fit(history.features);
    FFNBatch scaled = history;
    scaled.features = out.scaler.apply(history.features);
    auto batches = split_batches(scaled, opt.batch_samples);

    std::mt19937_64 rng(seed);
    out.net = make_ou_ffn(opt.dropout);
    out.net.init_uniform(rng);
    nn::AdamState adam(out.net.parameter_count(), opt.learning_rate);
    std::vector<std::size_t> order(batches.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int e = 0; e < opt.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t k : order) {
            out.net.set_mode(nn::Mode::train);
            nn::Trace tr = nn::forward(out.net, batches[k].features, rng());
            FFNLoss loss = ffn_portfolio_loss(out.net, batches[k], tr);
            ++out.batches;
            if (loss.degenerate) {
                ++out.flagged_batches;
                continue;
            }
            nn::adam_step(out.net, loss.grads, adam);
        }
    }
    out.net.set_mode(nn::Mode::eval);
    return out;
}

inline double ffn_signal(const TrainedFFN& model, const Eigen::Ref<const Eigen::RowVectorXd>& params) {
    if (params.size() != kOUFeatures) throw DimensionError("ffn_signal expects 5 inputs");
    if (!params.allFinite()) throw NumericError("ffn_signal: non-finite input");
    Matrix x = model.scaler.apply(Matrix(params));
    return nn::predict(model.net, x)(0, 0);
}

struct OUFFNProtocol {
    Index train_days = 1000;
    Index test_days = 125;
    FFNTrainOptions train{};
    std::uint64_t seed = 1;
};

struct OUFFNRun {
    SignalPanel signals;
    Index first_prediction_row = 0;
    int folds = 0;
    int flagged_batches = 0;
};

// Walk-forward: train on the `train_days` feature days before p (targets up
// to row p), predict rows [p, p + test_days), roll by test_days.
inline OUFFNRun ou_ffn_signals(const OUFeaturePanel& fp, const ReturnsPanel& panel, Index first_feature_row,
                               const OUFFNProtocol& proto) {
    OUFFNRun run;
    run.signals = SignalPanel::empty_like(panel.dates, panel.tickers, false);
    run.first_prediction_row = first_feature_row + proto.train_days;
    if (run.first_prediction_row >= panel.days()) {
        throw InsufficientDataError("OU+FFN needs " + std::to_string(proto.train_days) +
                                    " days of OU parameter history before the first prediction");
    }
    for (Index p = run.first_prediction_row; p < panel.days(); p += proto.test_days) {
        FFNBatch hist = collect_samples(fp, panel, p - proto.train_days, p - 1);
        TrainedFFN model = train_ou_ffn(hist, proto.train_days, mix_seed(proto.seed, static_cast<std::uint64_t>(p)),
                                        proto.train, proto.train_days);
        ++run.folds;
        run.flagged_batches += model.flagged_batches;
        const Index end = std::min(p + proto.test_days, panel.days());
        for (Index t = p; t < end; ++t) {
            for (Index i = 0; i < panel.stocks(); ++i) {
                run.signals.values(t, i) = fp.valid(t, i) ? ffn_signal(model, fp.row(t, i)) : 0.0;
            }
        }
    }
    return run;
}

} // namespace statarb
