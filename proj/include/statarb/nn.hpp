#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "market_data.hpp"

// Dense feed-forward nets with hand-written backprop. Batches are row-major
// in the data sense: one sample per row, so a layer computes
//   pre = X W^T + 1 b^T,  post = act(pre),  out = post .* mask.
namespace statarb::nn {

enum class Activation { identity, tanh, relu };

inline const char* to_string(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    }
    return "?";
}

struct LayerSpec {
    Index in_dim = 1;
    Index out_dim = 1;
    Activation activation = Activation::identity;
    bool has_bias = true;
    double dropout_p = 0.0;

    void validate() const {
        if (in_dim < 1 || out_dim < 1) throw DimensionError("layer dims must be >= 1");
        if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    }
};

struct Layer {
    LayerSpec spec;
    Matrix weight; // out x in
    Vector bias;   // out, empty without bias
};

enum class Mode { train, eval };

namespace detail {
inline std::uint64_t next_version() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}
} // namespace detail

class Network {
public:
    Network() = default;

    explicit Network(std::vector<LayerSpec> specs) {
        if (specs.empty()) throw DimensionError("network needs at least one layer");
        for (std::size_t k = 0; k < specs.size(); ++k) {
            specs[k].validate();
            if (k > 0 && specs[k].in_dim != specs[k - 1].out_dim) throw DimensionError("layer dims do not chain");
            Layer l;
            l.spec = specs[k];
            l.weight = Matrix::Zero(specs[k].out_dim, specs[k].in_dim);
            if (specs[k].has_bias) l.bias = Vector::Zero(specs[k].out_dim);
            layers_.push_back(std::move(l));
        }
    }

    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t depth() const { return layers_.size(); }

    // Mutable access invalidates any outstanding forward trace.
    Layer& mutable_layer(std::size_t k) {
        touch();
        return layers_.at(k);
    }

    Index input_dim() const { return layers_.front().spec.in_dim; }
    Index output_dim() const { return layers_.back().spec.out_dim; }

    Index parameter_count() const {
        Index n = 0;
        for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
        return n;
    }

    // Flat layout: per layer, weight (column-major) then bias.
    Vector parameters() const {
        Vector out(parameter_count());
        Index at = 0;
        for (const auto& l : layers_) {
            out.segment(at, l.weight.size()) = Eigen::Map<const Vector>(l.weight.data(), l.weight.size());
            at += l.weight.size();
            out.segment(at, l.bias.size()) = l.bias;
            at += l.bias.size();
        }
        return out;
    }

    void set_parameters(const Eigen::Ref<const Vector>& theta) {
        if (theta.size() != parameter_count()) throw DimensionError("parameter vector has wrong length");
        Index at = 0;
        for (auto& l : layers_) {
            Eigen::Map<Vector>(l.weight.data(), l.weight.size()) = theta.segment(at, l.weight.size());
            at += l.weight.size();
            l.bias = theta.segment(at, l.bias.size());
            at += l.bias.size();
        }
        touch();
    }

    // Symmetric fan-based uniform init, +-sqrt(6/(in+out)); biases start at zero.
    void init_uniform(std::mt19937_64& rng) {
        for (auto& l : layers_) {
            const double limit = std::sqrt(6.0 / static_cast<double>(l.spec.in_dim + l.spec.out_dim));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (Index c = 0; c < l.weight.cols(); ++c)
                for (Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = u(rng);
            if (l.spec.has_bias) l.bias.setZero();
        }
        touch();
    }

    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    std::uint64_t version() const { return version_; }

private:
    void touch() { version_ = detail::next_version(); }

    std::vector<Layer> layers_;
    Mode mode_ = Mode::eval;
    std::uint64_t version_ = detail::next_version();
};

struct LayerTrace {
    Matrix input;
    Matrix pre;
    Matrix post; // activation output, before dropout
    Matrix mask; // empty when the layer applied no dropout
};

struct Trace {
    std::vector<LayerTrace> layers;
    Matrix output;
    std::uint64_t version = 0;

    std::vector<Matrix> masks() const {
        std::vector<Matrix> out;
        for (const auto& l : layers) out.push_back(l.mask);
        return out;
    }
};

inline Matrix activate(Activation a, const Matrix& pre) {
    switch (a) {
    case Activation::identity: return pre;
    case Activation::tanh: return pre.array().tanh().matrix();
    case Activation::relu: return pre.cwiseMax(0.0);
    }
    return pre;
}

// d post / d pre, elementwise. relu'(0) = 0.
inline Matrix activation_slope(Activation a, const Matrix& pre, const Matrix& post) {
    switch (a) {
    case Activation::identity: return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::tanh: return (1.0 - post.array().square()).matrix();
    case Activation::relu: return (pre.array() > 0.0).cast<double>().matrix();
    }
    return Matrix::Ones(pre.rows(), pre.cols());
}

namespace detail {

inline void check_input(const Network& net, const Matrix& x) {
    if (net.depth() == 0) throw DimensionError("empty network");
    if (x.cols() != net.input_dim()) {
        throw DimensionError("input width " + std::to_string(x.cols()) + " != network input " +
                             std::to_string(net.input_dim()));
    }
    if (!x.allFinite()) throw NumericError("non-finite network input");
}

template <class MaskSource>
Trace run_forward(const Network& net, const Matrix& x, MaskSource&& mask_for) {
    check_input(net, x);
    Trace tr;
    tr.version = net.version();
    Matrix h = x;
    for (std::size_t k = 0; k < net.depth(); ++k) {
        const Layer& l = net.layers()[k];
        LayerTrace lt;
        lt.input = h;
        lt.pre = h * l.weight.transpose();
        if (l.spec.has_bias) lt.pre.rowwise() += l.bias.transpose();
        lt.post = activate(l.spec.activation, lt.pre);
        lt.mask = mask_for(k, l, lt.post.rows(), lt.post.cols());
        h = lt.mask.size() ? Matrix(lt.post.cwiseProduct(lt.mask)) : lt.post;
        tr.layers.push_back(std::move(lt));
    }
    tr.output = std::move(h);
    return tr;
}

} // namespace detail

// Train mode draws inverted-dropout masks (keep -> 1/(1-p)) from `seed`;
// eval mode is the plain affine/activation chain.
inline Trace forward(const Network& net, const Matrix& x, std::uint64_t seed = 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const bool train = net.mode() == Mode::train;
    return detail::run_forward(net, x, [&](std::size_t, const Layer& l, Index rows, Index cols) -> Matrix {
        if (!train || l.spec.dropout_p <= 0.0) return Matrix();
        const double p = l.spec.dropout_p, keep = 1.0 / (1.0 - p);
        Matrix m(rows, cols);
        for (Index c = 0; c < cols; ++c)
            for (Index r = 0; r < rows; ++r) m(r, c) = u(rng) < p ? 0.0 : keep;
        return m;
    });
}

// Replays recorded masks (empty entries mean no dropout on that layer).
inline Trace forward_with_masks(const Network& net, const Matrix& x, const std::vector<Matrix>& masks) {
    if (!masks.empty() && masks.size() != net.depth()) throw DimensionError("mask count != layer count");
    return detail::run_forward(net, x, [&](std::size_t k, const Layer&, Index rows, Index cols) -> Matrix {
        if (masks.empty() || masks[k].size() == 0) return Matrix();
        if (masks[k].rows() != rows || masks[k].cols() != cols) throw DimensionError("mask shape mismatch");
        return masks[k];
    });
}

inline Matrix predict(const Network& net, const Matrix& x) {
    return forward_with_masks(net, x, {}).output;
}

struct Gradients {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;
    Matrix input; // dLoss/dx, same shape as the forward input

    Vector flatten() const {
        Index n = 0;
        for (std::size_t k = 0; k < weight.size(); ++k) n += weight[k].size() + bias[k].size();
        Vector out(n);
        Index at = 0;
        for (std::size_t k = 0; k < weight.size(); ++k) {
            out.segment(at, weight[k].size()) = Eigen::Map<const Vector>(weight[k].data(), weight[k].size());
            at += weight[k].size();
            out.segment(at, bias[k].size()) = bias[k];
            at += bias[k].size();
        }
        return out;
    }
};

inline Gradients backward(const Network& net, const Trace& trace, const Matrix& d_output) {
    if (trace.version != net.version()) throw Error("stale trace: network changed since forward");
    if (trace.layers.size() != net.depth()) throw DimensionError("trace does not match network");
    if (d_output.rows() != trace.output.rows() || d_output.cols() != trace.output.cols()) {
        throw DimensionError("upstream gradient shape mismatch");
    }
    Gradients g;
    g.weight.resize(net.depth());
    g.bias.resize(net.depth());
    Matrix up = d_output;
    for (std::size_t k = net.depth(); k-- > 0;) {
        const Layer& l = net.layers()[k];
        const LayerTrace& lt = trace.layers[k];
        if (lt.mask.size()) up = up.cwiseProduct(lt.mask);
        Matrix d_pre = up.cwiseProduct(activation_slope(l.spec.activation, lt.pre, lt.post));
        g.weight[k] = d_pre.transpose() * lt.input;
        g.bias[k] = l.spec.has_bias ? Vector(d_pre.colwise().sum().transpose()) : Vector();
        up = d_pre * l.weight;
    }
    g.input = std::move(up);
    return g;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    Vector m;
    Vector v;
    std::int64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(Index parameters, double learning_rate)
        : m(Vector::Zero(parameters)), v(Vector::Zero(parameters)), lr(learning_rate) {}
};

// Bias-corrected Adam on a flat parameter vector. A non-finite gradient
// leaves theta and the state untouched.
inline void adam_step(Vector& theta, const Vector& grad, AdamState& st) {
    if (grad.size() != theta.size() || st.m.size() != theta.size()) throw DimensionError("adam: shape mismatch");
    if (!grad.allFinite()) {
        Index bad = 0, count = 0;
        for (Index k = grad.size(); k-- > 0;) {
            if (!std::isfinite(grad(k))) {
                bad = k;
                ++count;
            }
        }
        throw NumericError("adam: " + std::to_string(count) + " non-finite gradient entries (first at " +
                           std::to_string(bad) + "), update rejected");
    }
    ++st.step;
    st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
    st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    theta.array() -= st.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

inline void adam_step(Network& net, const Gradients& g, AdamState& st) {
    Vector theta = net.parameters();
    adam_step(theta, g.flatten(), st);
    net.set_parameters(theta);
}

// ---------------------------------------------------------------------------
// Losses

struct LossValue {
    double value = 0.0;
    Matrix grad; // d value / d prediction
};

// Mean over every entry of (target - prediction)^2.
inline LossValue mse_loss(const Matrix& target, const Matrix& prediction) {
    if (target.rows() != prediction.rows() || target.cols() != prediction.cols()) {
        throw DimensionError("mse_loss: shape mismatch");
    }
    const double n = static_cast<double>(target.size());
    Matrix diff = prediction - target;
    return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

struct SharpeValue {
    double value = 0.0;  // -Sharpe
    double sharpe = 0.0; // annualized
    Vector grad;         // d(-Sharpe)/d r_t
};

// Annualized sqrt(252) * mean / sd with the population (divisor T) sd; the
// loss is its negative. Training-side convention only; reported metrics use
// divisor T-1.
inline SharpeValue sharpe_loss(const Eigen::Ref<const Vector>& r) {
    const Index T = r.size();
    if (T < 2) throw InsufficientDataError("sharpe_loss needs at least 2 returns");
    if (!r.allFinite()) throw NumericError("sharpe_loss: non-finite return");
    const double n = static_cast<double>(T);
    const double mu = r.mean();
    Vector centered = r.array() - mu;
    const double sd = std::sqrt(centered.squaredNorm() / n);
    if (!(sd > 1e-12 * std::max(std::abs(mu), std::numeric_limits<double>::min()))) {
        throw DegenerateError("sharpe_loss: zero return variance");
    }
    const double root = std::sqrt(kTradingDaysPerYear);
    SharpeValue out;
    out.sharpe = root * mu / sd;
    out.value = -out.sharpe;
    // dS/dr_t = sqrt(252) * (1/(T sd) - mu (r_t - mu) / (T sd^3))
    out.grad = -root * ((1.0 / (n * sd)) - (mu / (n * sd * sd * sd)) * centered.array()).matrix();
    return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero gradients from
// turning rounding noise into huge ratios.
inline double relative_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(const Vector& analytic, const Vector& numeric, double floor = 1e-6) {
    if (analytic.size() != numeric.size()) throw DimensionError("gradient length mismatch");
    double worst = 0.0;
    for (Index k = 0; k < analytic.size(); ++k) worst = std::max(worst, relative_error(analytic(k), numeric(k), floor));
    return worst;
}

// Central differences of a scalar function of a flat parameter vector.
template <class F>
Vector numeric_gradient(F&& f, Vector theta, double h = 1e-5) {
    Vector g(theta.size());
    for (Index k = 0; k < theta.size(); ++k) {
        const double keep = theta(k);
        theta(k) = keep + h;
        const double up = f(theta);
        theta(k) = keep - h;
        const double down = f(theta);
        theta(k) = keep;
        g(k) = (up - down) / (2.0 * h);
    }
    return g;
}

struct GradientCheck {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    Index parameters = 0;
};

// Compares backward() with central differences over every parameter. `loss`
// maps the network output to a LossValue. Dropout masks are frozen to
// `masks` (empty: no dropout).
template <class LossFn>
GradientCheck finite_difference_check(const Network& net, const Matrix& x, LossFn&& loss, double h = 1e-5,
                                      const std::vector<Matrix>& masks = {}) {
    Trace tr = forward_with_masks(net, x, masks);
    LossValue lv = loss(tr.output);
    Vector analytic = backward(net, tr, lv.grad).flatten();

    Network probe = net;
    auto f = [&](const Vector& theta) {
        probe.set_parameters(theta);
        return loss(forward_with_masks(probe, x, masks).output).value;
    };
    Vector numeric = numeric_gradient(f, net.parameters(), h);
    GradientCheck out;
    out.parameters = analytic.size();
    out.max_relative_error = max_relative_error(analytic, numeric);
    out.max_absolute_error = (analytic - numeric).cwiseAbs().maxCoeff();
    return out;
}

} // namespace statarb::nn
