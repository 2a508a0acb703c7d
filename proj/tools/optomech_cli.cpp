#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "optomech/scenario.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<double> dm, ed, delta;
    std::optional<unsigned long long> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> runs;
    std::optional<unsigned> workers;
    bool dump = false;
};

optomech::ScenarioConfig resolve(optomech::ScenarioKind kind, const Overrides& o) {
    using namespace optomech;
    ScenarioConfig cfg = o.config.empty() ? default_config(kind) : load_config(o.config);
    if (cfg.scenario != kind) {
        throw ConfigError("config describes scenario '" + std::string(to_string(cfg.scenario)) +
                          "' but the verb runs '" + std::string(to_string(kind)) + "'");
    }
    if (o.dm) {
        if (cfg.sweep) {
            cfg.sweep = SweepSpec{SweepVariable::NoiseStrength, SweepMode::List, {*o.dm}};
        } else {
            cfg.noise.d_m = *o.dm;
        }
    }
    if (o.ed) cfg.system.e_d = *o.ed;
    if (o.delta) cfg.system.delta = *o.delta;
    if (o.seed) cfg.noise.seed = *o.seed;
    if (o.out) cfg.output_dir = *o.out;
    if (o.runs) cfg.n_runs = *o.runs;
    if (o.workers) cfg.workers = *o.workers;
    validate(cfg);
    return cfg;
}

int run(optomech::ScenarioKind kind, const Overrides& o) {
    using namespace optomech;
    ScenarioConfig cfg;
    try {
        cfg = resolve(kind, o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    if (o.dump) {
        std::cout << to_json(cfg).dump(2) << '\n';
        return 0;
    }
    try {
        ArtifactWriter out(cfg.output_dir);
        const std::size_t failed = run_scenario(cfg, out);
        if (failed > 0) {
            std::cerr << failed << " sweep point(s) failed; see " << (out.dir() / "run.log").string() << '\n';
            return 3;
        }
        std::cerr << "wrote " << out.dir().string() << '\n';
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const DiscriminatorError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    using optomech::ScenarioKind;
    CLI::App app{"Noise-driven dynamics of a driven optomechanical cavity"};
    app.require_subcommand(1);

    struct Verb {
        const char* name;
        const char* help;
        ScenarioKind kind;
    };
    const Verb verbs[] = {
        {"phase-diagram", "Classify the (E_d, delta) plane and locate Hopf crossings", ScenarioKind::PhaseDiagram},
        {"cr", "Noise sweep of spectral peak metrics below the Hopf point", ScenarioKind::CoherenceResonance},
        {"switching", "Noise-induced switching between the two branches", ScenarioKind::Switching},
        {"sr", "Signal-to-noise ratio sweep under a weak periodic force", ScenarioKind::StochasticResonance},
        {"single", "One trajectory with its spectrum", ScenarioKind::SingleRun},
    };

    Overrides o;
    std::optional<ScenarioKind> chosen;
    for (const auto& v : verbs) {
        CLI::App* sub = app.add_subcommand(v.name, v.help);
        sub->add_option("--config", o.config, "Scenario config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--dm", o.dm, "Noise strength D_m (replaces the sweep for cr/sr)");
        sub->add_option("--ed", o.ed, "Drive amplitude E_d");
        sub->add_option("--delta", o.delta, "Detuning");
        sub->add_option("--seed", o.seed, "Master seed");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--runs", o.runs, "Ensemble size per sweep point");
        sub->add_option("--workers", o.workers, "Worker threads (0: all cores)");
        sub->add_flag("--dump-config", o.dump, "Print the resolved config and exit");
        const ScenarioKind kind = v.kind;
        sub->callback([&chosen, kind] { chosen = kind; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return run(*chosen, o);
}
