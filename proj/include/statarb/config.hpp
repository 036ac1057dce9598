#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "backtest.hpp"
#include "synthetic.hpp"

// YAML run configuration. Top-level sections: seed, parallelism, data,
// universe, strategies (list), output. Unknown keys are rejected by name and
// every violation is reported, not just the first.
namespace statarb {

struct SyntheticSource {
    Index stocks = 10;
    Index factors = 1;
    Index days = 504;
    double kappa = 8.0;
    double sigma_eq = 0.05;
    double factor_vol = 0.01;
    std::uint64_t seed = 1;

    SyntheticSpec spec() const { return make_synthetic_spec(stocks, factors, days, kappa, sigma_eq, seed, factor_vol); }
};

struct DataSource {
    std::optional<SyntheticSource> synthetic;
    std::string returns_csv;
    std::string factors_csv; // optional; synthetic runs use the planted factors
};

struct RunConfig {
    DataSource data;
    UniverseRules universe{};
    std::vector<StrategySpec> strategies;
    std::string output_dir = "results";
    std::uint64_t seed = 1;
    int parallelism = 1;
    std::string source_text; // the config as read, kept for the manifest
};

struct ConfigCheck {
    std::optional<RunConfig> config;
    std::vector<std::string> errors;
};

namespace detail {

class ConfigReader {
public:
    std::vector<std::string> errors;

    void allow(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> keys) {
        if (!node.IsMap()) {
            errors.push_back(where + ": expected a mapping");
            return;
        }
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            if (!ok.count(key)) errors.push_back(where + ": unknown key '" + key + "'");
        }
    }

    template <class T>
    void read(const YAML::Node& node, const char* key, const std::string& where, T& out) {
        if (!node.IsMap() || !node[key]) return;
        try {
            out = node[key].as<T>();
        } catch (const YAML::Exception&) {
            errors.push_back(where + "." + key + ": cannot read '" + YAML::Dump(node[key]) + "'");
        }
    }

    void read_date(const YAML::Node& node, const char* key, const std::string& where, std::optional<Date>& out) {
        std::string text;
        if (!node.IsMap() || !node[key]) return;
        read(node, key, where, text);
        if (auto d = Date::parse(text)) out = *d;
        else errors.push_back(where + "." + key + ": not a YYYY-MM-DD date: '" + text + "'");
    }

    void require(bool ok, const std::string& message) {
        if (!ok) errors.push_back(message);
    }
};

inline StrategySpec read_strategy(ConfigReader& r, const YAML::Node& node, std::size_t index, std::uint64_t seed) {
    StrategySpec s;
    s.seed = seed;
    const std::string where = "strategies[" + std::to_string(index) + "]";
    r.allow(node, where,
            {"id", "model", "factors", "k", "factor_window", "pca_window", "regression_window", "variant", "option",
             "ae_latent", "ae_epochs", "ae_batch_size", "latent", "lambda", "epochs", "learning_rate", "window", "cap",
             "train_days", "test_days", "ffn_epochs", "ffn_batch_samples", "ffn_dropout", "start", "end", "seed"});
    if (!node.IsMap()) return s;

    std::string model;
    r.read(node, "model", where, model);
    if (model.empty()) {
        r.errors.push_back(where + ": missing required key 'model'");
    } else if (auto m = parse_model(model)) {
        s.model = *m;
    } else {
        r.errors.push_back(where + ".model: unknown model '" + model + "'");
    }
    r.read(node, "id", where, s.id);
    r.read(node, "seed", where, s.seed);
    r.read(node, "factors", where, s.factors);
    r.read(node, "k", where, s.factors);
    r.read(node, "factor_window", where, s.factor_window);
    r.read(node, "pca_window", where, s.pca_window);
    r.read(node, "regression_window", where, s.regression_window);
    s.ae.regression_window = s.regression_window;

    int variant = 0, option = 2;
    r.read(node, "variant", where, variant);
    r.read(node, "option", where, option);
    if (variant < 0 || variant > 9) r.errors.push_back(where + ".variant: must be 0-9");
    else s.ae.variant = ae_variant(variant);
    if (option < 1 || option > 3) r.errors.push_back(where + ".option: must be 1, 2 or 3");
    else s.ae.option = static_cast<ResidualOption>(option);
    r.read(node, "ae_latent", where, s.ae.latent);
    r.read(node, "ae_epochs", where, s.ae.train.epochs);
    r.read(node, "ae_batch_size", where, s.ae.train.batch_size);

    r.read(node, "latent", where, s.policy.latent);
    r.read(node, "lambda", where, s.policy.lambda);
    r.read(node, "epochs", where, s.policy.epochs);
    r.read(node, "learning_rate", where, s.policy.learning_rate);
    r.read(node, "window", where, s.policy.window);
    r.read(node, "cap", where, s.policy.cap);
    s.ae.cap = s.policy.cap;

    r.read(node, "train_days", where, s.ffn.train_days);
    r.read(node, "test_days", where, s.ffn.test_days);
    r.read(node, "ffn_epochs", where, s.ffn.train.epochs);
    r.read(node, "ffn_batch_samples", where, s.ffn.train.batch_samples);
    r.read(node, "ffn_dropout", where, s.ffn.train.dropout);
    r.read_date(node, "start", where, s.start);
    r.read_date(node, "end", where, s.end);

    if (s.id.empty()) s.id = "s" + std::to_string(index);
    try {
        s.validate();
    } catch (const ConfigError& e) {
        r.errors.push_back(where + ": " + e.what());
    }
    if (!(s.ffn.train.dropout >= 0.0 && s.ffn.train.dropout < 1.0)) r.errors.push_back(where + ".ffn_dropout: must lie in [0, 1)");
    if (s.ae.latent < 1) r.errors.push_back(where + ".ae_latent: must be >= 1");
    return s;
}

} // namespace detail

inline ConfigCheck check_config(const std::string& text) {
    ConfigCheck out;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        out.errors.push_back(std::string("config is not valid YAML: ") + e.what());
        return out;
    }
    detail::ConfigReader r;
    RunConfig cfg;
    cfg.source_text = text;
    r.allow(root, "config", {"seed", "parallelism", "data", "universe", "strategies", "output"});
    if (!root.IsMap()) {
        out.errors = r.errors;
        return out;
    }
    r.read(root, "seed", "config", cfg.seed);
    r.read(root, "parallelism", "config", cfg.parallelism);
    r.require(cfg.parallelism >= 1, "config.parallelism: must be >= 1");

    const YAML::Node data = root["data"];
    if (!data) {
        r.errors.push_back("config: missing required section 'data'");
    } else {
        r.allow(data, "data", {"synthetic", "returns_csv", "factors_csv"});
        r.read(data, "returns_csv", "data", cfg.data.returns_csv);
        r.read(data, "factors_csv", "data", cfg.data.factors_csv);
        if (data.IsMap() && data["synthetic"]) {
            const YAML::Node sn = data["synthetic"];
            SyntheticSource src;
            src.seed = cfg.seed;
            r.allow(sn, "data.synthetic", {"stocks", "factors", "days", "kappa", "sigma_eq", "factor_vol", "seed"});
            r.read(sn, "stocks", "data.synthetic", src.stocks);
            r.read(sn, "factors", "data.synthetic", src.factors);
            r.read(sn, "days", "data.synthetic", src.days);
            r.read(sn, "kappa", "data.synthetic", src.kappa);
            r.read(sn, "sigma_eq", "data.synthetic", src.sigma_eq);
            r.read(sn, "factor_vol", "data.synthetic", src.factor_vol);
            r.read(sn, "seed", "data.synthetic", src.seed);
            r.require(src.stocks >= 1 && src.factors >= 0 && src.days >= 2, "data.synthetic: bad dimensions");
            r.require(src.kappa > 0.0, "data.synthetic.kappa: must be positive");
            r.require(src.sigma_eq >= 0.0 && src.factor_vol >= 0.0, "data.synthetic: volatilities must be non-negative");
            cfg.data.synthetic = src;
        }
        const bool csv = !cfg.data.returns_csv.empty();
        r.require(csv != cfg.data.synthetic.has_value(), "data: give exactly one of 'synthetic' or 'returns_csv'");
    }

    if (const YAML::Node u = root["universe"]) {
        r.allow(u, "universe", {"min_close", "min_mktcap", "min_dollar_volume", "median_window"});
        r.read(u, "min_close", "universe", cfg.universe.min_close);
        r.read(u, "min_mktcap", "universe", cfg.universe.min_mktcap);
        r.read(u, "min_dollar_volume", "universe", cfg.universe.min_dollar_volume);
        r.read(u, "median_window", "universe", cfg.universe.median_window);
        r.require(cfg.universe.median_window >= 1, "universe.median_window: must be >= 1");
    }

    const YAML::Node strategies = root["strategies"];
    if (!strategies || !strategies.IsSequence() || strategies.size() == 0) {
        r.errors.push_back("config: 'strategies' must be a non-empty list");
    } else {
        std::set<std::string> ids;
        for (std::size_t i = 0; i < strategies.size(); ++i) {
            StrategySpec s = detail::read_strategy(r, strategies[i], i, cfg.seed);
            if (!ids.insert(s.id).second) r.errors.push_back("strategies[" + std::to_string(i) + "]: duplicate id '" + s.id + "'");
            cfg.strategies.push_back(std::move(s));
        }
    }

    if (const YAML::Node o = root["output"]) {
        r.allow(o, "output", {"dir"});
        r.read(o, "dir", "output", cfg.output_dir);
    }
    r.require(!cfg.output_dir.empty(), "output.dir: must not be empty");

    out.errors = std::move(r.errors);
    if (out.errors.empty()) out.config = std::move(cfg);
    return out;
}

inline RunConfig parse_config_text(const std::string& text) {
    ConfigCheck c = check_config(text);
    if (!c.config) {
        std::string msg = "invalid configuration:";
        for (const auto& e : c.errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return std::move(*c.config);
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace statarb
