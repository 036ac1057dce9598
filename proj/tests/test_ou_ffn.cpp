#include <gtest/gtest.h>

#include "statarb/backtest.hpp"
#include "statarb/synthetic.hpp"
#include "statarb/verify.hpp"

using namespace statarb;

namespace {

ResidualPanel planted_residuals(Index days, Index stocks, std::uint64_t seed) {
    SyntheticMarket m = generate_synthetic_panel(make_synthetic_spec(stocks, 1, days, 20.0, 0.05, seed));
    ResidualPanel r = ResidualPanel::empty_like(m.panel, "truth", "");
    r.values = m.truth.residual_increments;
    return r;
}

} // namespace

TEST(OUFFN, FeaturesAreFitSummaries) {
    ResidualPanel res = planted_residuals(120, 3, 1);
    OUFeaturePanel fp = ou_feature_panel(res, 59);
    for (Index t = 0; t < 59; ++t) EXPECT_FALSE(fp.valid.row(t).any());
    for (Index i = 0; i < 3; ++i) {
        auto fit = ou_fit_at(res, i, 100);
        ASSERT_TRUE(fit);
        if (!fit->mean_reverting) {
            EXPECT_FALSE(fp.valid(100, i));
            continue;
        }
        auto row = fp.row(100, i);
        EXPECT_DOUBLE_EQ(row(0), fit->a);
        EXPECT_DOUBLE_EQ(row(1), fit->b);
        EXPECT_DOUBLE_EQ(row(2), fit->var_zeta);
        EXPECT_DOUBLE_EQ(row(3), fit->r2);
        EXPECT_DOUBLE_EQ(row(4), *s_score(*fit));
    }
}

TEST(OUFFN, ArchitectureAndZeroNet) {
    nn::Network net = make_ou_ffn();
    EXPECT_EQ(net.depth(), 4u);
    EXPECT_EQ(net.parameter_count(), 3 * (5 * 5 + 5) + 5 + 1);
    TrainedFFN model;
    model.net = net; // all-zero parameters
    Eigen::RowVectorXd x(5);
    x << 0.1, 0.9, 1e-4, 0.4, -1.3;
    EXPECT_EQ(ffn_signal(model, x), 0.0);
    x(2) = NAN;
    EXPECT_THROW(ffn_signal(model, x), NumericError);
}

TEST(OUFFN, EvalSignalIsDeterministic) {
    TrainedFFN model;
    model.net = make_ou_ffn();
    std::mt19937_64 rng(4);
    model.net.init_uniform(rng);
    Eigen::RowVectorXd x(5);
    x << 0.0, 0.95, 2e-4, 0.5, 1.1;
    EXPECT_EQ(ffn_signal(model, x), ffn_signal(model, x));
}

TEST(OUFFN, SharpeLossGradient) {
    EXPECT_LE(verify::ffn_gradient_check(9).max_relative_error, 1e-4);
}

TEST(OUFFN, BatchesKeepWholeDays) {
    FFNBatch all;
    all.day_offsets = {0, 3, 7, 9, 14, 15};
    all.features = Matrix::Random(15, 5);
    all.next_returns = Vector::Random(15);
    auto batches = split_batches(all, 5);
    Index samples = 0;
    for (const auto& b : batches) {
        EXPECT_EQ(b.day_offsets.front(), 0);
        EXPECT_EQ(b.day_offsets.back(), b.features.rows());
        EXPECT_GE(b.days(), 2);
        samples += b.features.rows();
    }
    EXPECT_EQ(batches.front().day_offsets, (std::vector<Index>{0, 3, 7}));
    EXPECT_LE(samples, 15);
}

TEST(OUFFN, CollectUsesOnlyNextDayTarget) {
    ResidualPanel res = planted_residuals(100, 4, 2);
    SyntheticMarket m = generate_synthetic_panel(make_synthetic_spec(4, 1, 100, 20.0, 0.05, 2));
    OUFeaturePanel fp = ou_feature_panel(res, 59);
    FFNBatch b = collect_samples(fp, m.panel, 60, 70);
    Index k = 0;
    for (Index t = 60; t <= 70; ++t)
        for (Index i = 0; i < 4; ++i)
            if (fp.valid(t, i)) {
                EXPECT_EQ(b.next_returns(k++), m.panel.returns(t + 1, i));
            }
    EXPECT_EQ(k, b.features.rows());
}

TEST(OUFFN, ShortHistoryIsInsufficient) {
    FFNBatch empty;
    empty.day_offsets = {0};
    empty.features.resize(0, 5);
    EXPECT_THROW(train_ou_ffn(empty, 500, 1), InsufficientDataError);
}

TEST(OUFFN, ScalerIsPerColumn) {
    Matrix x(4, 5);
    x.setZero();
    x.col(0) << 1, 2, 3, 4;
    FeatureScaler s = FeatureScaler::fit(x);
    Matrix y = s.apply(x);
    EXPECT_NEAR(y.col(0).mean(), 0.0, 1e-15);
    EXPECT_NEAR(y.col(0).squaredNorm() / 3.0, 1.0, 1e-12);
    EXPECT_TRUE(y.col(1).isZero(0.0)); // constant column left centred, sd 1
}

// Antisymmetry baseline: flipping the sign of the output layer flips every
// position, so on planted mean reversion a well-trained net should beat its
// mirror. Five epochs of 1000-sample batches is only ~100 Adam steps, too few
// to move a random init here, so this uses a longer schedule.
TEST(OUFFN, TrainedNetBeatsSignFlippedNet) {
    SyntheticSpec spec = make_synthetic_spec(20, 1, 1300, 20.0, 0.05, 31);
    SyntheticMarket m = generate_synthetic_panel(spec);
    ResidualPanel res = ResidualPanel::empty_like(m.panel, "truth", "");
    res.values = m.truth.residual_increments;
    OUFeaturePanel fp = ou_feature_panel(res, 59);
    const Index p = 59 + 1000;
    FFNBatch hist = collect_samples(fp, m.panel, p - 1000, p - 1);
    FFNTrainOptions opt;
    opt.epochs = 100;
    TrainedFFN model = train_ou_ffn(hist, 1000, 5, opt);
    TrainedFFN flipped = model;
    auto& last = flipped.net.mutable_layer(flipped.net.depth() - 1);
    last.weight = -last.weight;
    last.bias = -last.bias;

    auto oos = [&](const TrainedFFN& mdl) {
        Vector daily(125);
        for (Index t = p; t < p + 125; ++t) {
            Vector phi = Vector::Zero(20);
            for (Index i = 0; i < 20; ++i)
                if (fp.valid(t, i)) phi(i) = ffn_signal(mdl, fp.row(t, i));
            daily(t - p) = portfolio_return(normalize_weights(phi), m.panel.returns.row(t + 1).transpose());
        }
        return performance_metrics(daily).sharpe;
    };
    EXPECT_GT(oos(model) - oos(flipped), 0.0);
}

// The default schedule should still move in-sample Sharpe up from the init.
TEST(OUFFN, DefaultScheduleImprovesInSampleSharpe) {
    SyntheticMarket m = generate_synthetic_panel(make_synthetic_spec(20, 1, 1300, 20.0, 0.05, 31));
    ResidualPanel res = ResidualPanel::empty_like(m.panel, "truth", "");
    res.values = m.truth.residual_increments;
    OUFeaturePanel fp = ou_feature_panel(res, 59);
    FFNBatch hist = collect_samples(fp, m.panel, 59, 59 + 999);
    auto in_sample = [&](int epochs) {
        FFNTrainOptions opt;
        opt.epochs = epochs;
        TrainedFFN model = train_ou_ffn(hist, 1000, 5, opt);
        double sr = 0.0;
        ffn_output_loss(nn::predict(model.net, model.scaler.apply(hist.features)), hist, nullptr, &sr);
        return sr;
    };
    EXPECT_GT(in_sample(5), in_sample(0));
}
