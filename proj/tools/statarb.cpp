#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "statarb/experiment.hpp"
#include "statarb/verify.hpp"

namespace fs = std::filesystem;
using namespace statarb;

namespace {

// STATARB_OUTPUT_DIR wins over the config file; nothing else is read from the environment.
void apply_output_override(RunConfig& cfg) {
    if (const char* dir = std::getenv("STATARB_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
}

int cmd_run(const std::string& path) {
    RunConfig cfg = parse_config(path);
    apply_output_override(cfg);
    ExperimentReport rep = run_experiment(cfg);
    for (const auto& o : rep.outcomes) {
        if (o.result) {
            const auto& m = o.result->metrics;
            std::printf("%-12s %-10s %-22s SR %7.3f  mu %8.4f  sigma %8.4f  days %zu\n", o.spec.id.c_str(),
                        o.result->model.c_str(), o.result->variant.c_str(), m.sharpe, m.mu, m.sigma,
                        o.result->dates.size());
        } else {
            std::fprintf(stderr, "%s (%s) failed: %s\n", o.spec.id.c_str(), model_name(o.spec.model), o.error.c_str());
        }
    }
    std::printf("results in %s\n", rep.output_dir.string().c_str());
    return rep.exit_status();
}

int cmd_synth(const std::string& path) {
    RunConfig cfg = parse_config(path);
    apply_output_override(cfg);
    if (!cfg.data.synthetic) throw ConfigError("synth needs a data.synthetic section");
    SyntheticMarket m = generate_synthetic_panel(cfg.data.synthetic->spec());
    fs::create_directories(cfg.output_dir);
    const fs::path returns = fs::path(cfg.output_dir) / "synthetic_returns.csv";
    const fs::path factors = fs::path(cfg.output_dir) / "synthetic_factors.csv";
    std::ofstream r(returns, std::ios::binary), f(factors, std::ios::binary);
    if (!r || !f) throw Error("cannot write to " + cfg.output_dir);
    write_returns_panel(r, m.panel);
    write_factor_returns(f, m.factor_returns());
    std::printf("wrote %s and %s (%ld days x %ld stocks)\n", returns.string().c_str(), factors.string().c_str(),
                static_cast<long>(m.panel.days()), static_cast<long>(m.panel.stocks()));
    return 0;
}

int cmd_verify(const std::string& suite) {
    std::vector<std::string> suites;
    if (suite == "all") suites.assign(std::begin(verify::kSuites), std::end(verify::kSuites));
    else suites.push_back(suite);
    bool ok = true;
    for (const auto& s : suites) {
        verify::SuiteReport rep = verify::run(s);
        verify::print(std::cout, rep);
        ok = ok && rep.passed();
    }
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"walk-forward statistical arbitrage backtester"};
    app.require_subcommand(1);

    std::string run_config, synth_config, suite;
    auto* run = app.add_subcommand("run", "run every strategy in a config and write the results directory");
    run->add_option("-c,--config", run_config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    auto* synth = app.add_subcommand("synth", "write the config's synthetic panel and factors as CSV");
    synth->add_option("-c,--config", synth_config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    auto* ver = app.add_subcommand("verify", "run a property suite");
    ver->add_option("suite", suite, "gradients | pca | ou | invariants | all")
        ->required()
        ->check(CLI::IsMember({"gradients", "pca", "ou", "invariants", "all"}));

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(run_config);
        if (*synth) return cmd_synth(synth_config);
        if (*ver) return cmd_verify(suite);
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
