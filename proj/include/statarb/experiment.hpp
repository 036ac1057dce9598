#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "backtest.hpp"
#include "config.hpp"
#include "synthetic.hpp"

namespace statarb {

struct LoadedData {
    ReturnsPanel panel;
    std::optional<Matrix> factors; // aligned to panel rows
    std::vector<std::string> factor_names;
    nlohmann::json inputs;         // name -> hash, for the manifest
};

namespace detail {

// FNV-1a, enough to tell input files apart in a manifest.
inline std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out << text;
}

} // namespace detail

inline LoadedData load_data(const RunConfig& cfg) {
    LoadedData d;
    if (cfg.data.synthetic) {
        SyntheticMarket m = generate_synthetic_panel(cfg.data.synthetic->spec());
        std::ostringstream ss;
        write_returns_panel(ss, m.panel);
        d.inputs["synthetic_panel"] = detail::fnv1a_hex(ss.str());
        FactorReturns fr = m.factor_returns();
        d.factor_names = fr.names;
        d.factors = align_factors(fr, m.panel);
        d.panel = std::move(m.panel);
    } else {
        const std::string text = detail::slurp(cfg.data.returns_csv);
        d.inputs[cfg.data.returns_csv] = detail::fnv1a_hex(text);
        std::istringstream in(text);
        d.panel = load_returns_panel(in);
    }
    if (!cfg.data.factors_csv.empty()) {
        const std::string text = detail::slurp(cfg.data.factors_csv);
        d.inputs[cfg.data.factors_csv] = detail::fnv1a_hex(text);
        std::istringstream in(text);
        FactorReturns fr = load_factor_returns(in);
        d.factor_names = fr.names;
        d.factors = align_factors(fr, d.panel);
    }
    return d;
}

struct StrategyOutcome {
    StrategySpec spec;
    std::optional<BacktestResult> result;
    std::string error;
};

struct ExperimentReport {
    std::filesystem::path output_dir;
    std::vector<StrategyOutcome> outcomes;
    int failures = 0;
    int exit_status() const { return failures == 0 ? 0 : 1; }
};

// Strategies run on up to cfg.parallelism threads; a failing strategy is
// recorded and the rest still complete. Output order never depends on timing.
inline std::vector<StrategyOutcome> run_strategies(const RunConfig& cfg, const LoadedData& data) {
    UniverseMask universe = build_universe(data.panel, cfg.universe);
    std::vector<StrategyOutcome> out(cfg.strategies.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < out.size();) {
            out[k].spec = cfg.strategies[k];
            try {
                out[k].result = run_walk_forward(cfg.strategies[k], data.panel, universe,
                                                 data.factors ? &*data.factors : nullptr);
            } catch (const std::exception& e) {
                out[k].error = e.what();
            }
        }
    };
    const int threads = std::max(1, std::min<int>(cfg.parallelism, static_cast<int>(out.size())));
    std::vector<std::thread> pool;
    for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return out;
}

inline nlohmann::json policy_diagnostics_json(const BacktestResult& r) {
    nlohmann::json days = nlohmann::json::array();
    for (const auto& d : r.policy_days) {
        nlohmann::json j{{"date", d.date.str()},
                         {"epochs", d.epochs},
                         {"zero_signal", d.zero_signal},
                         {"skipped", d.skipped},
                         {"degenerate_epochs", d.degenerate_epochs}};
        j["final_loss"] = std::isnan(d.final_loss) ? nlohmann::json(nullptr) : nlohmann::json(d.final_loss);
        if (!d.note.empty()) j["note"] = d.note;
        days.push_back(std::move(j));
    }
    return days;
}

inline void write_strategy_outputs(const std::filesystem::path& dir, const BacktestResult& r) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ostringstream w;
    w << "date,ticker,weight\n";
    for (std::size_t d = 0; d < r.dates.size(); ++d) {
        for (Index i = 0; i < r.weights.cols(); ++i) {
            const double v = r.weights(static_cast<Index>(d), i);
            if (v != 0.0) w << r.dates[d].str() << ',' << r.tickers[static_cast<std::size_t>(i)] << ',' << detail::num(v) << '\n';
        }
    }
    detail::write_file(dir / "weights.csv", w.str());
    if (r.signals) {
        std::ostringstream s;
        write_signals_csv(s, *r.signals);
        detail::write_file(dir / "signals.csv", s.str());
    }
    if (r.residuals) {
        std::ostringstream s;
        write_residuals_csv(s, *r.residuals);
        detail::write_file(dir / "residuals.csv", s.str());
    }
    nlohmann::json diag{{"id", r.id},
                        {"model", r.model},
                        {"variant", r.variant},
                        {"trading_days", r.dates.size()},
                        {"no_trade_days", std::count(r.no_trade.begin(), r.no_trade.end(), true)},
                        {"degenerate_metrics", r.metrics.degenerate},
                        {"notes", r.notes}};
    if (!r.policy_days.empty()) diag["policy_days"] = policy_diagnostics_json(r);
    detail::write_file(dir / "diagnostics.json", diag.dump(2) + "\n");
}

inline ExperimentReport write_experiment(const RunConfig& cfg, const LoadedData& data,
                                         std::vector<StrategyOutcome> outcomes) {
    namespace fs = std::filesystem;
    ExperimentReport rep;
    rep.output_dir = cfg.output_dir;
    fs::create_directories(rep.output_dir);

    std::vector<const StrategyOutcome*> ok;
    for (const auto& o : outcomes) {
        if (o.result) ok.push_back(&o);
        else ++rep.failures;
    }
    std::sort(ok.begin(), ok.end(), [](const StrategyOutcome* a, const StrategyOutcome* b) {
        return std::tie(a->result->model, a->result->variant, a->result->id) <
               std::tie(b->result->model, b->result->variant, b->result->id);
    });

    std::ostringstream metrics, daily, weights, curve;
    metrics << "model,variant,SR,mu,sigma,id\n";
    daily << "id,date,return\n";
    weights << "id,date,ticker,weight\n";
    curve << "id,date,equity\n";
    for (const StrategyOutcome* o : ok) {
        const BacktestResult& r = *o->result;
        metrics << r.model << ',' << r.variant << ',' << detail::num(r.metrics.sharpe) << ',' << detail::num(r.metrics.mu)
                << ',' << detail::num(r.metrics.sigma) << ',' << r.id << '\n';
        for (std::size_t d = 0; d < r.rows.size(); ++d) {
            const std::string realized = data.panel.dates[static_cast<std::size_t>(r.rows[d] + 1)].str();
            daily << r.id << ',' << realized << ',' << detail::num(r.daily(static_cast<Index>(d))) << '\n';
            curve << r.id << ',' << realized << ',' << detail::num(r.metrics.curve(static_cast<Index>(d))) << '\n';
            for (Index i = 0; i < r.weights.cols(); ++i) {
                const double v = r.weights(static_cast<Index>(d), i);
                if (v != 0.0) {
                    weights << r.id << ',' << r.dates[d].str() << ',' << r.tickers[static_cast<std::size_t>(i)] << ','
                            << detail::num(v) << '\n';
                }
            }
        }
        write_strategy_outputs(rep.output_dir / "strategies" / r.id, r);
    }
    detail::write_file(rep.output_dir / "metrics.csv", metrics.str());
    detail::write_file(rep.output_dir / "daily_returns.csv", daily.str());
    detail::write_file(rep.output_dir / "weights.csv", weights.str());
    detail::write_file(rep.output_dir / "equity_curve.csv", curve.str());

    nlohmann::json manifest;
    manifest["config"] = cfg.source_text;
    manifest["seed"] = cfg.seed;
    manifest["inputs"] = data.inputs;
    manifest["panel"] = {{"days", data.panel.days()},
                         {"stocks", data.panel.stocks()},
                         {"first_date", data.panel.dates.empty() ? "" : data.panel.dates.front().str()},
                         {"last_date", data.panel.dates.empty() ? "" : data.panel.dates.back().str()}};
    nlohmann::json strategies = nlohmann::json::array();
    for (const auto& o : outcomes) {
        nlohmann::json s{{"id", o.spec.id}, {"model", model_name(o.spec.model)}, {"variant", o.spec.variant()},
                         {"seed", o.spec.seed}, {"status", o.result ? "ok" : "failed"}};
        if (!o.result) s["error"] = o.error;
        strategies.push_back(std::move(s));
    }
    manifest["strategies"] = std::move(strategies);
    detail::write_file(rep.output_dir / "manifest.json", manifest.dump(2) + "\n");
    rep.outcomes = std::move(outcomes);
    return rep;
}

inline ExperimentReport run_experiment(const RunConfig& cfg) {
    LoadedData data = load_data(cfg);
    return write_experiment(cfg, data, run_strategies(cfg, data));
}

} // namespace statarb
