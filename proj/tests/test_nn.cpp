#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "statarb/nn.hpp"
#include "statarb/verify.hpp"

using namespace statarb;
using namespace statarb::nn;

namespace {

Matrix gaussian(Index r, Index c, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    return verify::detail::gaussian(r, c, rng, sd);
}

} // namespace

TEST(Network, ShapesAndParameterLayout) {
    Network net({{3, 2, Activation::tanh, true, 0.0}, {2, 1, Activation::identity, false, 0.0}});
    EXPECT_EQ(net.parameter_count(), 3 * 2 + 2 + 2);
    Vector theta = Vector::LinSpaced(net.parameter_count(), 1, 10);
    net.set_parameters(theta);
    // column-major weight first: W(1,0) is the second entry
    EXPECT_DOUBLE_EQ(net.layers()[0].weight(1, 0), 2.0);
    EXPECT_DOUBLE_EQ(net.layers()[0].bias(1), 8.0);
    EXPECT_TRUE(net.parameters().isApprox(theta));
    EXPECT_THROW(Network({{3, 2}, {3, 1}}), DimensionError);
}

TEST(Network, ForwardMatchesHandComputation) {
    Network net({{2, 1, Activation::tanh, true, 0.0}});
    net.mutable_layer(0).weight << 0.5, -1.0;
    net.mutable_layer(0).bias << 0.1;
    Matrix x(1, 2);
    x << 2.0, 0.3;
    EXPECT_NEAR(predict(net, x)(0, 0), std::tanh(0.5 * 2.0 - 0.3 + 0.1), 1e-15);
}

TEST(Network, InitIsSeededAndBounded) {
    Network a({{10, 20, Activation::relu, true, 0.0}}), b = a;
    std::mt19937_64 r1(4), r2(4);
    a.init_uniform(r1);
    b.init_uniform(r2);
    EXPECT_TRUE(a.parameters().cwiseEqual(b.parameters()).all());
    EXPECT_LE(a.layers()[0].weight.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 30.0));
    EXPECT_TRUE(a.layers()[0].bias.isZero(0.0));
}

TEST(Network, StaleTraceRejected) {
    Network net({{2, 2, Activation::tanh, true, 0.0}});
    Trace tr = forward(net, Matrix::Ones(1, 2));
    net.mutable_layer(0).weight(0, 0) = 1.0;
    EXPECT_THROW(backward(net, tr, Matrix::Ones(1, 2)), Error);
}

TEST(Dropout, InvertedMasksPreserveExpectation) {
    Network net({{4, 4, Activation::identity, false, 0.25}});
    std::mt19937_64 rng(1);
    net.init_uniform(rng);
    net.set_mode(Mode::train);
    Matrix x = gaussian(1, 4, 2);
    Matrix mean = Matrix::Zero(1, 4);
    const int draws = 20000;
    for (int s = 0; s < draws; ++s) {
        Trace tr = forward(net, x, static_cast<std::uint64_t>(s));
        for (Index k = 0; k < 4; ++k) {
            const double m = tr.layers[0].mask(0, k);
            ASSERT_TRUE(m == 0.0 || std::abs(m - 4.0 / 3.0) < 1e-15);
        }
        mean += tr.output;
    }
    mean /= draws;
    net.set_mode(Mode::eval);
    Matrix expected = predict(net, x);
    // sd of one draw is sqrt(p/(1-p)) |y| ~ 0.58 |y|; 20000 draws -> ~0.004 |y|
    for (Index k = 0; k < 4; ++k) EXPECT_NEAR(mean(0, k), expected(0, k), 0.02 * std::abs(expected(0, k)) + 1e-3);
}

TEST(Dropout, EvalModeIsDeterministic) {
    Network net({{3, 3, Activation::tanh, true, 0.5}});
    std::mt19937_64 rng(1);
    net.init_uniform(rng);
    Matrix x = gaussian(2, 3, 3);
    EXPECT_TRUE(forward(net, x, 1).output.cwiseEqual(forward(net, x, 2).output).all());
}

TEST(Gradients, TanhNetworkMatchesFiniteDifferences) {
    Network net({{5, 4, Activation::tanh, true, 0.0}, {4, 3, Activation::identity, true, 0.0}});
    std::mt19937_64 rng(8);
    net.init_uniform(rng);
    Matrix x = gaussian(7, 5, 9), y = gaussian(7, 3, 10);
    GradientCheck c = finite_difference_check(net, x, [&](const Matrix& out) { return mse_loss(y, out); });
    EXPECT_LE(c.max_relative_error, 1e-6);
    EXPECT_EQ(c.parameters, net.parameter_count());
}

TEST(Gradients, InputGradientMatchesFiniteDifferences) {
    Network net({{3, 3, Activation::tanh, true, 0.0}, {3, 2, Activation::tanh, false, 0.0}});
    std::mt19937_64 rng(5);
    net.init_uniform(rng);
    Matrix x = gaussian(2, 3, 6), y = gaussian(2, 2, 7);
    Trace tr = forward(net, x);
    Gradients g = backward(net, tr, mse_loss(y, tr.output).grad);
    Vector flat_x = Eigen::Map<const Vector>(x.data(), x.size());
    Vector numeric = numeric_gradient(
        [&](const Vector& v) {
            Matrix xx = Eigen::Map<const Matrix>(v.data(), 2, 3);
            return mse_loss(y, predict(net, xx)).value;
        },
        flat_x);
    Vector analytic = Eigen::Map<const Vector>(g.input.data(), g.input.size());
    EXPECT_LE(max_relative_error(analytic, numeric), 1e-6);
}

TEST(Gradients, EveryAutoencoderVariant) {
    for (int v = 0; v <= 9; ++v) {
        EXPECT_LE(verify::autoencoder_gradient_check(v, 100 + static_cast<std::uint64_t>(v)).max_relative_error, 1e-4)
            << "variant " << v;
    }
}

TEST(Adam, TwoStepsByHand) {
    Vector theta(1);
    theta << 1.0;
    AdamState st(1, 0.1);
    Vector g(1);
    g << 0.5;
    adam_step(theta, g, st);
    // step 1: m_hat = g, v_hat = g^2 -> update lr * g / (|g| + eps)
    EXPECT_NEAR(theta(0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);

    g << -0.2;
    const double m = 0.9 * 0.05 + 0.1 * -0.2;
    const double v = 0.999 * 0.00025 + 0.001 * 0.04;
    const double expected = theta(0) - 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
    adam_step(theta, g, st);
    EXPECT_NEAR(theta(0), expected, 1e-14);
    EXPECT_EQ(st.step, 2);
}

TEST(Adam, RejectsNonFiniteGradient) {
    Vector theta = Vector::Ones(3);
    AdamState st(3, 0.1);
    Vector g = Vector::Ones(3);
    g(1) = NAN;
    EXPECT_THROW(adam_step(theta, g, st), NumericError);
    EXPECT_EQ(st.step, 0);
    EXPECT_TRUE(theta.isOnes());
}

TEST(Adam, MinimizesQuadratic) {
    Vector theta = Vector::Constant(2, 3.0);
    AdamState st(2, 0.05);
    for (int k = 0; k < 2000; ++k) {
        Vector g = 2.0 * (theta - Vector::Constant(2, -1.0));
        adam_step(theta, g, st);
    }
    EXPECT_NEAR(theta(0), -1.0, 1e-3);
}

TEST(Sharpe, HandValue) {
    Vector r(3);
    r << 0.01, 0.02, 0.03;
    SharpeValue s = sharpe_loss(r);
    // mean 0.02, population sd 0.01*sqrt(2/3)
    const double expected = std::sqrt(252.0) * 0.02 / (0.01 * std::sqrt(2.0 / 3.0));
    EXPECT_NEAR(s.sharpe, expected, 1e-10);
    EXPECT_NEAR(s.sharpe, 38.88, 0.01);
    EXPECT_DOUBLE_EQ(s.value, -s.sharpe);
}

TEST(Sharpe, GradientMatchesFiniteDifferences) {
    Vector r = gaussian(20, 1, 3, 0.01).col(0).array() + 0.002;
    SharpeValue s = sharpe_loss(r);
    Vector numeric = numeric_gradient([](const Vector& v) { return sharpe_loss(v).value; }, r, 1e-7);
    EXPECT_LE(max_relative_error(s.grad, numeric), 1e-5);
}

TEST(Sharpe, ConstantSeriesIsDegenerate) {
    EXPECT_THROW(sharpe_loss(Vector::Constant(5, 0.01)), DegenerateError);
    EXPECT_THROW(sharpe_loss(Vector::Zero(5)), DegenerateError);
}

TEST(Mse, ValueAndGradient) {
    Matrix t(1, 2), p(1, 2);
    t << 1, 2;
    p << 1.5, 1;
    LossValue l = mse_loss(t, p);
    EXPECT_DOUBLE_EQ(l.value, (0.25 + 1.0) / 2.0);
    EXPECT_DOUBLE_EQ(l.grad(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(l.grad(0, 1), -1.0);
}
