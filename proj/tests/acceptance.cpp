// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "statarb/experiment.hpp"
#include "statarb/verify.hpp"

using namespace statarb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string suite_detail(const verify::SuiteReport& r) {
    std::string worst;
    for (const auto& c : r.checks)
        if (!c.pass) worst += fmt("%s: %.4g > %.1e; ", c.name.c_str(), c.observed, c.tolerance);
    return worst.empty() ? fmt("%zu checks within tolerance", r.checks.size()) : worst;
}

// --- 1 ---------------------------------------------------------------------
Outcome gradients() {
    auto t0 = std::chrono::steady_clock::now();
    verify::SuiteReport r = verify::gradients();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double worst = 0.0;
    for (const auto& c : r.checks) worst = std::max(worst, c.observed);
    const bool fast = secs < 60.0;
    return {r.passed() && fast, fmt("%zu nets, worst rel err %.2e (tol 1e-4), %.2fs (limit 60s)", r.checks.size(),
                                    worst, secs)};
}

// --- 2 ---------------------------------------------------------------------
Outcome pca() {
    verify::SuiteReport r = verify::pca();
    return {r.passed(), suite_detail(r)};
}

// --- 3 ---------------------------------------------------------------------
// Identity-activation, bias-free 12 -> 3 -> 12 net on a fixed low-rank window.
Outcome linear_autoencoder() {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    const Index T = 252, N = 12;
    Matrix f(T, 3), b(3, N), e(T, N);
    for (Index c = 0; c < 3; ++c)
        for (Index t = 0; t < T; ++t) f(t, c) = g(rng) * (3 - c);
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
    for (Index i = 0; i < e.size(); ++i) e.data()[i] = 0.3 * g(rng);
    Matrix z = f * b + e;
    nn::Network lin({{N, 3, nn::Activation::identity, false, 0.0}, {3, N, nn::Activation::identity, false, 0.0}});
    TrainedNetwork trained = train_reconstruction(lin, z, 4, {3000, T, 1e-2});

    Eigen::SelfAdjointEigenSolver<Matrix> eig(z.transpose() * z);
    Matrix top = eig.eigenvectors().rightCols(3);
    Matrix q = Eigen::HouseholderQR<Matrix>(trained.net.layers()[1].weight).householderQ() * Matrix::Identity(N, 3);
    Eigen::JacobiSVD<Matrix> svd(top.transpose() * q);
    const double angle = std::acos(std::min(1.0, svd.singularValues().minCoeff())) * 180.0 / M_PI;
    return {angle <= 5.0, fmt("largest principal angle %.3f deg (limit 5), final mse %.4g", angle,
                              trained.epoch_loss.back())};
}

// --- 4 ---------------------------------------------------------------------
Outcome ou_recovery() {
    verify::SuiteReport r = verify::ou();
    std::string d;
    for (const auto& c : r.checks) d += fmt("%s%s=%.3g; ", c.pass ? "" : "FAILED ", c.name.c_str(), c.observed);
    return {r.passed(), d};
}

// --- 5 ---------------------------------------------------------------------
Outcome thresholds() {
    using S = PositionState;
    const double grid[] = {-2, -1.3, -1.0, -0.6, -0.4, 0, 0.6, 0.8, 1.3, 2};
    // open long below -1.25, short above 1.25; close long above -0.5, short below 0.75
    const S from_flat[] = {S::long_, S::long_, S::flat, S::flat, S::flat, S::flat, S::flat, S::flat, S::short_, S::short_};
    const S from_long[] = {S::long_, S::long_, S::long_, S::long_, S::flat, S::flat, S::flat, S::flat, S::flat, S::flat};
    const S from_short[] = {S::flat, S::flat, S::flat, S::flat, S::flat, S::flat, S::flat, S::short_, S::short_, S::short_};
    int cases = 0, agree = 0;
    for (double r2 : {0.1, 0.5}) {
        for (int k = 0; k < 10; ++k) {
            const S* table[] = {from_flat, from_long, from_short};
            const S states[] = {S::flat, S::long_, S::short_};
            for (int s = 0; s < 3; ++s) {
                const S expected = r2 < 0.25 ? S::flat : table[s][k];
                SignalStep step = ou_signal_step(states[s], grid[k], r2);
                ++cases;
                agree += step.state == expected && step.phi == position_sign(expected);
            }
        }
    }
    return {agree == cases, fmt("%d/%d transitions agree", agree, cases)};
}

// --- 6, 7 ------------------------------------------------------------------
std::vector<StrategySpec> all_families() {
    std::vector<StrategySpec> out;
    for (StrategyModel m : kAllModels) {
        StrategySpec s;
        s.id = model_name(m);
        s.model = m;
        s.factors = 2;
        s.ae.latent = 3;
        s.policy.latent = 3;
        s.seed = 17;
        out.push_back(s);
    }
    return out;
}

struct FamilyPanel {
    SyntheticMarket market;
    UniverseMask universe;
};

// 10 stocks, long enough for the 1000-day FFN history behind the AE residuals.
const FamilyPanel& family_panel() {
    static const FamilyPanel fp = [] {
        FamilyPanel p{generate_synthetic_panel(make_synthetic_spec(10, 2, 1460, 8.0, 0.05, 41)), {}};
        p.universe = build_universe(p.market.panel);
        return p;
    }();
    return fp;
}

std::vector<BacktestResult>& family_runs() {
    static std::vector<BacktestResult> runs = [] {
        std::vector<BacktestResult> out;
        const FamilyPanel& p = family_panel();
        for (const auto& s : all_families())
            out.push_back(run_walk_forward(s, p.market.panel, p.universe, &p.market.truth.factors));
        return out;
    }();
    return runs;
}

Outcome no_lookahead() {
    const FamilyPanel& p = family_panel();
    const Index t = p.market.panel.days() - 80;
    ReturnsPanel changed = p.market.panel;
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.0, 0.04);
    std::uniform_real_distribution<double> u(0.2, 5.0);
    for (Index r = t + 1; r < changed.days(); ++r) {
        for (Index i = 0; i < changed.stocks(); ++i) {
            changed.returns(r, i) = g(rng);
            changed.close(r, i) *= u(rng);
            changed.mktcap(r, i) *= u(rng);
            changed.dollar_volume(r, i) *= u(rng);
        }
    }
    changed.missing(t + 3, 1) = true;
    changed.returns(t + 3, 1) = kNaN;
    changed.validate();
    Matrix factors = p.market.truth.factors;
    for (Index r = t + 1; r < factors.rows(); ++r) factors.row(r).setConstant(0.02);
    UniverseMask universe = build_universe(changed);

    int ok = 0, total = 0;
    std::string bad;
    const auto& base = family_runs();
    auto specs = all_families();
    for (std::size_t k = 0; k < specs.size(); ++k) {
        BacktestResult b = run_walk_forward(specs[k], changed, universe, &factors);
        const BacktestResult& a = base[k];
        ++total;
        const Index upto = t - a.rows.front();
        const bool same = upto >= 0 && b.rows.front() == a.rows.front() &&
                          a.weights.topRows(upto + 1).cwiseEqual(b.weights.topRows(upto + 1)).all();
        const bool traded = upto >= 0 && a.weights.topRows(upto + 1).cwiseAbs().sum() > 0.0;
        if (same && traded) ++ok;
        else bad += specs[k].id + " ";
    }
    return {ok == total, fmt("%d/%d families bit-identical through row %ld%s%s", ok, total, static_cast<long>(t),
                             bad.empty() ? "" : "; differ or never traded: ", bad.c_str())};
}

Outcome leverage() {
    int days = 0, traded = 0, flagged = 0, violations = 0;
    double worst = 0.0;
    for (const auto& r : family_runs()) {
        for (Index d = 0; d < r.weights.rows(); ++d) {
            ++days;
            const double l1 = r.weights.row(d).lpNorm<1>();
            if (r.no_trade[static_cast<std::size_t>(d)] && l1 == 0.0) {
                ++flagged;
                continue;
            }
            ++traded;
            worst = std::max(worst, std::abs(l1 - 1.0));
            if (std::abs(l1 - 1.0) > 1e-9) ++violations;
        }
    }
    return {violations == 0 && traded > 0, fmt("%d days over 7 families: %d traded (max |l1-1| %.1e), %d flagged no-trade, "
                                               "%d violations",
                                               days, traded, worst, flagged, violations)};
}

// --- 8 ---------------------------------------------------------------------
Vector scaled_series(double mu_ann, double sigma_ann, Index T, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Vector x(T);
    for (Index t = 0; t < T; ++t) x(t) = g(rng);
    x.array() -= x.mean();
    x /= std::sqrt(x.squaredNorm() / static_cast<double>(T - 1));
    return (x.array() * sigma_ann / std::sqrt(kTradingDaysPerYear) + mu_ann / kTradingDaysPerYear).matrix();
}

Outcome metrics() {
    const double a = performance_metrics(scaled_series(0.0455, 0.0474, 2520, 8)).sharpe;
    const double b = performance_metrics(scaled_series(0.0624, 0.0346, 2520, 9)).sharpe;
    return {std::abs(a - 0.96) <= 0.01 && std::abs(b - 1.80) <= 0.02,
            fmt("SR %.4f (0.96 +/- 0.01), SR %.4f (1.80 +/- 0.02)", a, b)};
}

// --- 9 ---------------------------------------------------------------------
double realized_sharpe(const Matrix& weights, const ReturnsPanel& panel, const std::vector<Index>& rows) {
    Vector daily(weights.rows());
    for (Index d = 0; d < weights.rows(); ++d)
        daily(d) = portfolio_return(weights.row(d).transpose(), panel.returns.row(rows[static_cast<std::size_t>(d)] + 1).transpose());
    return performance_metrics(daily).sharpe;
}

// Stationary bootstrap of paired days; p = share of resamples where the
// strategy's Sharpe fails to exceed the baseline's.
double stationary_bootstrap_p(const Vector& a, const Vector& b, int reps, double mean_block, std::uint64_t seed) {
    const Index T = a.size();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> start(0, T - 1);
    std::bernoulli_distribution restart(1.0 / mean_block);
    int not_better = 0;
    Vector ra(T), rb(T);
    for (int k = 0; k < reps; ++k) {
        Index j = start(rng);
        for (Index t = 0; t < T; ++t) {
            if (t > 0) j = restart(rng) ? start(rng) : (j + 1) % T;
            ra(t) = a(j);
            rb(t) = b(j);
        }
        const double sa = performance_metrics(ra).sharpe, sb = performance_metrics(rb).sharpe;
        if (!(sa > sb)) ++not_better;
    }
    return (1.0 + not_better) / (1.0 + reps);
}

Outcome planted_signal() {
    SyntheticMarket m = generate_synthetic_panel(make_synthetic_spec(20, 3, 756, 8.0, 0.05, 2024));
    UniverseMask universe = build_universe(m.panel);

    StrategySpec pca;
    pca.id = "pca";
    pca.model = StrategyModel::pca_ou;
    pca.factors = 3;
    BacktestResult pr = run_walk_forward(pca, m.panel, universe);
    const double sr = pr.metrics.sharpe;

    // control: same weight rows, dates shuffled against the realized returns
    std::mt19937_64 rng(7);
    std::vector<Index> perm(static_cast<std::size_t>(pr.weights.rows()));
    std::iota(perm.begin(), perm.end(), Index{0});
    const int permutations = 200;
    double control = 0.0;
    for (int k = 0; k < permutations; ++k) {
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix shuffled(pr.weights.rows(), pr.weights.cols());
        for (Index d = 0; d < shuffled.rows(); ++d) shuffled.row(d) = pr.weights.row(perm[static_cast<std::size_t>(d)]);
        control += realized_sharpe(shuffled, m.panel, pr.rows);
    }
    control /= permutations;

    StrategySpec pol;
    pol.id = "policy";
    pol.model = StrategyModel::ae_policy;
    pol.policy.latent = 10;
    pol.seed = 3;
    BacktestResult ar = run_walk_forward(pol, m.panel, universe);
    Matrix random_w = Matrix::Zero(ar.weights.rows(), ar.weights.cols());
    std::mt19937_64 brng(11);
    std::normal_distribution<double> g;
    for (Index d = 0; d < random_w.rows(); ++d) {
        const Index t = ar.rows[static_cast<std::size_t>(d)];
        BoolVector ok = universe.eligible_at(t);
        Vector phi = Vector::Zero(random_w.cols());
        for (Index i = 0; i < phi.size(); ++i)
            if (ok(i) && m.panel.present(t, i)) phi(i) = g(brng);
        random_w.row(d) = normalize_weights(phi).transpose();
    }
    Vector base(random_w.rows());
    for (Index d = 0; d < base.size(); ++d)
        base(d) = portfolio_return(random_w.row(d).transpose(), m.panel.returns.row(ar.rows[static_cast<std::size_t>(d)] + 1).transpose());
    const double base_sr = performance_metrics(base).sharpe;
    const double p = stationary_bootstrap_p(ar.daily, base, 2000, 10.0, 5);

    const bool pass = sr > 1.0 && std::abs(control) < 0.5 && p < 0.05;
    return {pass, fmt("PCA-OU SR %.3f (> 1) over %ld days, permuted control mean SR %.3f (|.| < 0.5); AE-Policy SR %.3f "
                      "vs random %.3f, bootstrap p %.4f (< 0.05)",
                      sr, static_cast<long>(pr.daily.size()), control, ar.metrics.sharpe, base_sr, p)};
}

// --- 10 --------------------------------------------------------------------
std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const char* text = R"(
seed: 8
parallelism: 4
data:
  synthetic: {stocks: 12, factors: 2, days: 420, kappa: 8}
strategies:
  - {id: ff, model: FF-OU, factors: 2}
  - {id: pca, model: PCA-OU, k: 2}
  - {id: ae, model: AE-OU, variant: 5, ae_latent: 4}
  - {id: pol, model: AE-Policy, latent: 4}
)";
    std::string why;
    bool same = true;
    std::vector<std::string> first;
    for (int run = 0; run < 2; ++run) {
        RunConfig c = parse_config_text(text);
        const fs::path dir = fs::temp_directory_path() / ("statarb_acceptance_det" + std::to_string(run));
        fs::remove_all(dir);
        c.output_dir = dir.string();
        if (run_experiment(c).exit_status() != 0) return {false, "experiment run failed"};
        int k = 0;
        for (const char* f : {"metrics.csv", "weights.csv", "equity_curve.csv"}) {
            std::string bytes = read_bytes(dir / f);
            if (bytes.empty()) {
                same = false;
                why += std::string(f) + " empty; ";
            }
            if (run == 0) first.push_back(bytes);
            else if (bytes != first[static_cast<std::size_t>(k)]) {
                same = false;
                why += std::string(f) + " differs; ";
            }
            ++k;
        }
        fs::remove_all(dir);
    }
    return {same, same ? fmt("metrics.csv, weights.csv, equity_curve.csv identical (%zu, %zu, %zu bytes)", first[0].size(),
                             first[1].size(), first[2].size())
                       : why};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"1 gradient exactness", gradients},
        {"2 PCA self-consistency", pca},
        {"3 linear autoencoder spans PCA subspace", linear_autoencoder},
        {"4 OU estimator recovery", ou_recovery},
        {"5 threshold state machine", thresholds},
        {"6 no lookahead", no_lookahead},
        {"7 leverage invariant", leverage},
        {"8 metric conventions", metrics},
        {"9 planted-signal profitability", planted_signal},
        {"10 determinism", determinism},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  -- " << o.detail << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
    return failed ? 1 : 0;
}
