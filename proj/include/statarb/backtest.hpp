#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "factor_models.hpp"
#include "ou.hpp"
#include "ou_ffn.hpp"
#include "policy.hpp"
#include "portfolio.hpp"

namespace statarb {

enum class StrategyModel { ff_ou, pca_ou, ae_ou, ff_ou_ffn, pca_ou_ffn, ae_ou_ffn, ae_policy };

inline constexpr StrategyModel kAllModels[] = {StrategyModel::ff_ou,      StrategyModel::pca_ou,
                                               StrategyModel::ae_ou,      StrategyModel::ff_ou_ffn,
                                               StrategyModel::pca_ou_ffn, StrategyModel::ae_ou_ffn,
                                               StrategyModel::ae_policy};

inline const char* model_name(StrategyModel m) {
    switch (m) {
    case StrategyModel::ff_ou: return "FF-OU";
    case StrategyModel::pca_ou: return "PCA-OU";
    case StrategyModel::ae_ou: return "AE-OU";
    case StrategyModel::ff_ou_ffn: return "FF-OU+FFN";
    case StrategyModel::pca_ou_ffn: return "PCA-OU+FFN";
    case StrategyModel::ae_ou_ffn: return "AE-OU+FFN";
    case StrategyModel::ae_policy: return "AE-Policy";
    }
    return "?";
}

inline std::optional<StrategyModel> parse_model(std::string_view name) {
    for (StrategyModel m : kAllModels) {
        if (name == model_name(m)) return m;
    }
    return std::nullopt;
}

enum class ResidualSource { exogenous, pca, autoencoder, none };

inline ResidualSource residual_source(StrategyModel m) {
    switch (m) {
    case StrategyModel::ff_ou:
    case StrategyModel::ff_ou_ffn: return ResidualSource::exogenous;
    case StrategyModel::pca_ou:
    case StrategyModel::pca_ou_ffn: return ResidualSource::pca;
    case StrategyModel::ae_ou:
    case StrategyModel::ae_ou_ffn: return ResidualSource::autoencoder;
    case StrategyModel::ae_policy: return ResidualSource::none;
    }
    return ResidualSource::none;
}

inline bool uses_ffn(StrategyModel m) {
    return m == StrategyModel::ff_ou_ffn || m == StrategyModel::pca_ou_ffn || m == StrategyModel::ae_ou_ffn;
}

struct StrategySpec {
    std::string id; // unique within a run, used for the output folder
    StrategyModel model = StrategyModel::pca_ou;
    Index factors = 3;         // FF: leading factor columns used (-1 = all); PCA: k
    Index factor_window = 60;  // FF loading regression
    Index pca_window = 252;
    Index regression_window = 60;
    AEResidualConfig ae{};
    PolicyConfig policy{};
    ThresholdRules thresholds{};
    OUFFNProtocol ffn{};
    std::optional<Date> start; // first weight date (defaults to the end of warm-up)
    std::optional<Date> end;   // last weight date
    std::uint64_t seed = 1;

    std::string variant() const {
        switch (residual_source(model)) {
        case ResidualSource::exogenous: return factors < 0 ? "FF all" : "FF " + std::to_string(factors);
        case ResidualSource::pca: return "PCA " + std::to_string(factors);
        case ResidualSource::autoencoder:
            return "Variant " + std::to_string(ae.variant.id) + " option " + std::to_string(static_cast<int>(ae.option));
        case ResidualSource::none: break;
        }
        return "latent " + std::to_string(policy.latent);
    }

    void validate() const {
        const auto src = residual_source(model);
        if (src == ResidualSource::pca && factors < 1) throw ConfigError(id + ": PCA needs k >= 1");
        if (src == ResidualSource::exogenous && (factors == 0 || factors < -1)) {
            throw ConfigError(id + ": factor count must be positive or -1");
        }
        if (model == StrategyModel::ae_policy) {
            if (!(policy.lambda >= 0.0 && policy.lambda <= 1.0)) throw ConfigError(id + ": lambda must lie in [0, 1]");
            if (policy.latent < 1) throw ConfigError(id + ": latent must be >= 1");
            if (policy.epochs < 0 || policy.window < 3) throw ConfigError(id + ": bad policy training window");
        }
        if (uses_ffn(model) && (ffn.train_days < 2 || ffn.test_days < 1)) throw ConfigError(id + ": bad FFN protocol");
        if (start && end && *end < *start) throw ConfigError(id + ": end precedes start");
    }
};

// First panel row whose weight can be formed from a full set of windows.
inline Index warmup_rows(const StrategySpec& s) {
    Index residual_first = 0;
    switch (residual_source(s.model)) {
    case ResidualSource::exogenous: residual_first = s.factor_window; break;
    case ResidualSource::pca: residual_first = s.pca_window; break;
    case ResidualSource::autoencoder: residual_first = ae_first_residual_row(s.ae); break;
    case ResidualSource::none: return s.policy.window - 1;
    }
    Index first = residual_first + kOUWindow - 1;
    if (uses_ffn(s.model)) first += s.ffn.train_days;
    return first;
}

struct PolicyDiagnostics {
    Date date;
    bool skipped = false;
    bool zero_signal = false;
    int epochs = 0;
    int degenerate_epochs = 0;
    double final_loss = kNaN;
    std::string note;
};

struct BacktestResult {
    std::string id;
    std::string model;
    std::string variant;
    std::vector<Index> rows;        // weight rows t; returns realize on t+1
    std::vector<Date> dates;        // date of each t
    std::vector<std::string> tickers;
    Matrix weights;                 // rows.size() x N
    Vector daily;                   // r_{p,t+1}
    std::vector<bool> no_trade;
    PerformanceMetrics metrics;
    std::optional<ResidualPanel> residuals;
    std::optional<SignalPanel> signals;
    std::vector<PolicyDiagnostics> policy_days;
    std::vector<std::string> notes;
};

namespace detail {

inline Index first_row_on_or_after(const ReturnsPanel& p, const Date& d) {
    return static_cast<Index>(std::lower_bound(p.dates.begin(), p.dates.end(), d) - p.dates.begin());
}

inline Index last_row_on_or_before(const ReturnsPanel& p, const Date& d) {
    return static_cast<Index>(std::upper_bound(p.dates.begin(), p.dates.end(), d) - p.dates.begin()) - 1;
}

inline ResidualPanel residuals_for(const StrategySpec& s, const ReturnsPanel& panel, const UniverseMask& universe,
                                   const Matrix* factors) {
    switch (residual_source(s.model)) {
    case ResidualSource::exogenous: {
        if (!factors) throw ConfigError(s.id + ": exogenous model needs factor returns");
        Matrix f = s.factors < 0 ? *factors : factors->leftCols(std::min<Index>(s.factors, factors->cols()));
        if (s.factors > factors->cols()) throw ConfigError(s.id + ": more factors requested than supplied");
        return exogenous_residuals(panel, universe, f, s.factor_window, s.variant());
    }
    case ResidualSource::pca: return pca_residuals(panel, universe, s.factors, s.pca_window, s.regression_window);
    case ResidualSource::autoencoder: {
        AEResidualConfig cfg = s.ae;
        cfg.seed = s.seed;
        return ae_residual_panel(panel, universe, cfg);
    }
    case ResidualSource::none: break;
    }
    throw Error("no residual model for " + std::string(model_name(s.model)));
}

} // namespace detail

// Walk-forward run: signals at t from rows <= t, L1-normalized, realized
// against r_{t+1}. Warm-up rows emit nothing.
inline BacktestResult run_walk_forward(const StrategySpec& spec, const ReturnsPanel& panel,
                                       const UniverseMask& universe, const Matrix* factors = nullptr) {
    spec.validate();
    const Index warm = warmup_rows(spec);
    Index first = warm;
    if (spec.start) {
        first = detail::first_row_on_or_after(panel, *spec.start);
        if (first < warm) {
            throw InsufficientDataError(spec.id + ": insufficient history, start " + spec.start->str() + " is row " +
                                        std::to_string(first) + " but warm-up needs " + std::to_string(warm) +
                                        " rows");
        }
    }
    Index last = panel.days() - 2;
    if (spec.end) last = std::min(last, detail::last_row_on_or_before(panel, *spec.end));
    if (last - first + 1 < 2) {
        throw InsufficientDataError(spec.id + ": insufficient history, " + std::to_string(panel.days()) +
                                    " days leave fewer than 2 trading days after a " + std::to_string(warm) +
                                    "-row warm-up");
    }

    BacktestResult out;
    out.id = spec.id;
    out.model = model_name(spec.model);
    out.variant = spec.variant();
    out.tickers = panel.tickers;

    Matrix phi = Matrix::Zero(panel.days(), panel.stocks());
    if (spec.model == StrategyModel::ae_policy) {
        PolicyConfig cfg = spec.policy;
        cfg.seed = spec.seed;
        for (Index t = first; t <= last; ++t) {
            PolicyDay day = train_policy_day(panel, universe, t, cfg);
            phi.row(t) = day.weights.transpose();
            PolicyDiagnostics d;
            d.date = panel.dates[static_cast<std::size_t>(t)];
            d.skipped = day.skipped;
            d.zero_signal = day.zero_signal;
            d.epochs = static_cast<int>(day.loss.size());
            d.degenerate_epochs = day.degenerate_epochs;
            if (!day.loss.empty()) d.final_loss = day.loss.back();
            d.note = day.note;
            out.policy_days.push_back(std::move(d));
        }
    } else {
        ResidualPanel res = detail::residuals_for(spec, panel, universe, factors);
        const Index ou_first = warm - (uses_ffn(spec.model) ? spec.ffn.train_days : 0);
        if (uses_ffn(spec.model)) {
            OUFeaturePanel fp = ou_feature_panel(res, ou_first);
            OUFFNProtocol proto = spec.ffn;
            proto.seed = spec.seed;
            OUFFNRun run = ou_ffn_signals(fp, panel, ou_first, proto);
            out.signals = std::move(run.signals);
            if (run.flagged_batches > 0) {
                out.notes.push_back(std::to_string(run.flagged_batches) + " degenerate FFN batches skipped");
            }
        } else {
            out.signals = ou_threshold_signals(res, ou_first, spec.thresholds);
        }
        phi = out.signals->values.unaryExpr([](double v) { return std::isnan(v) ? 0.0 : v; });
        out.notes.insert(out.notes.end(), res.notes.begin(), res.notes.end());
        out.residuals = std::move(res);
    }

    const Index D = last - first + 1;
    out.weights.resize(D, panel.stocks());
    out.daily.resize(D);
    for (Index d = 0; d < D; ++d) {
        const Index t = first + d;
        Vector w = normalize_weights(phi.row(t).transpose());
        out.rows.push_back(t);
        out.dates.push_back(panel.dates[static_cast<std::size_t>(t)]);
        out.weights.row(d) = w.transpose();
        out.daily(d) = portfolio_return(w, panel.returns.row(t + 1).transpose());
        out.no_trade.push_back(w.lpNorm<1>() == 0.0);
    }
    out.metrics = performance_metrics(out.daily);
    return out;
}

} // namespace statarb
