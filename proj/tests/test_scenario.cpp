#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "optomech/scenario.hpp"

using namespace optomech;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("optomech_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string config_error_of(const std::string& text) {
    try {
        (void)parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

Spectrum flat_spectrum(Real res, std::size_t bins, Real level) {
    Spectrum s;
    s.resolution = res;
    s.n_segments = 1;
    for (std::size_t k = 0; k < bins; ++k) {
        s.freq.push_back(static_cast<Real>(k) * res);
        s.psd.push_back(level);
    }
    return s;
}

}  // namespace

TEST_CASE("config: defaults survive a JSON round trip") {
    for (auto kind : {ScenarioKind::PhaseDiagram, ScenarioKind::CoherenceResonance, ScenarioKind::Switching,
                      ScenarioKind::StochasticResonance, ScenarioKind::SingleRun}) {
        const ScenarioConfig c = default_config(kind);
        CHECK_NOTHROW(validate(c));
        CHECK(parse_config(to_json(c)) == c);
        CHECK(scenario_from_string(to_string(kind)) == kind);
    }
}

TEST_CASE("config: edited fields round trip") {
    ScenarioConfig c = default_config(ScenarioKind::StochasticResonance);
    c.system.delta = -1.2;
    c.noise.seed = 77;
    c.sweep = SweepSpec{SweepVariable::NoiseStrength, SweepMode::List, {0.1, 0.4, 3.0}};
    c.sr.optimal = 0.4;
    c.integration.scheme = Scheme::HeunDriftOnly;
    c.spectrum.window = Window::Rectangular;
    const ScenarioConfig back = parse_config(to_json(c));
    CHECK(back == c);
    CHECK(back.sr.optimal.value() == 0.4);
}

TEST_CASE("config: missing keys take the scenario defaults") {
    const auto c = parse_config_text(R"({"schema_version": 1, "scenario": "switching"})");
    CHECK(c == default_config(ScenarioKind::Switching));
    CHECK(c.system.e_d == 3.11);
    CHECK(c.noise.d_m == 0.55);
}

TEST_CASE("config: strict keys, types and schema") {
    CHECK(config_error_of(R"({"schema_version": 1, "scenario": "single", "system": {"gg": 1}})") ==
          "system.gg: unknown key");
    CHECK(config_error_of(R"({"schema_version": 1, "scenario": "single", "colour": 1})") == "colour: unknown key");
    CHECK(config_error_of(R"({"schema_version": 1, "scenario": "single", "noise": {"d_m": "x"}})") ==
          "noise.d_m: expected a number");
    CHECK(config_error_of(R"({"schema_version": 2, "scenario": "single"})").find("unsupported version") !=
          std::string::npos);
    CHECK(config_error_of(R"({"scenario": "single"})") == "schema_version: missing");
    CHECK(config_error_of(R"({"schema_version": 1})") == "scenario: missing");
    CHECK(config_error_of(R"({"schema_version": 1, "scenario": "chaos"})").find("unknown value") !=
          std::string::npos);
    CHECK(config_error_of("{not json").find("malformed JSON") != std::string::npos);
}

TEST_CASE("config: validation rejects unrunnable settings") {
    ScenarioConfig c = default_config(ScenarioKind::CoherenceResonance);
    c.sweep.reset();
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = default_config(ScenarioKind::SingleRun);
    c.sweep = SweepSpec{};
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = default_config(ScenarioKind::CoherenceResonance);
    c.sweep = SweepSpec{SweepVariable::NoiseStrength, SweepMode::List, {0.1, 0.0}};
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = default_config(ScenarioKind::Switching);
    c.integration.t_total = 100.0;
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = default_config(ScenarioKind::Switching);
    c.switching.threshold_low = 0.8;
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = default_config(ScenarioKind::StochasticResonance);
    c.signal.f_s = 0.0;
    CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("sweep: log grid endpoints and spacing") {
    const SweepSpec s{SweepVariable::NoiseStrength, SweepMode::Log, {}, 1e-3, 1.0, 10, 0};
    const auto v = s.expand();
    REQUIRE(v.size() == 31);
    CHECK(v.front() == 1e-3);
    CHECK(v.back() == 1.0);
    for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] / v[i - 1] == doctest::Approx(std::pow(10.0, 0.1)));

    const SweepSpec off{SweepVariable::NoiseStrength, SweepMode::Log, {}, 1e-3, 2.0, 20, 0};
    const auto w = off.expand();
    CHECK(w.size() == 68);
    CHECK(w.back() == 2.0);
    CHECK(w[w.size() - 2] < 2.0);

    const SweepSpec lin{SweepVariable::DriveAmplitude, SweepMode::Linear, {}, 1.0, 2.0, 20, 5};
    const auto l = lin.expand();
    REQUIRE(l.size() == 5);
    for (std::size_t i = 0; i < l.size(); ++i) CHECK(l[i] == doctest::Approx(1.0 + 0.25 * static_cast<Real>(i)));
    CHECK(l.back() == 2.0);
}

TEST_CASE("dwell_statistics: square wave between two levels") {
    const Real dt = 0.1;
    const std::size_t block = 2000;
    std::vector<Real> x;
    for (int b = 0; b < 10; ++b) x.insert(x.end(), block, (b % 2 == 0) ? 0.0 : 10.0);
    const auto d = dwell_statistics(x, dt, 0.0, 10.0, SwitchingSettings{});
    CHECK(d.transitions == 9);
    CHECK(d.states_visited == 2);
    CHECK(d.threshold_low == doctest::Approx(3.0));
    CHECK(d.threshold_high == doctest::Approx(7.0));
    CHECK(d.dwell_low.size() + d.dwell_high.size() == 8);
    for (Real w : d.dwell_low) CHECK(w == doctest::Approx(block * dt));
    for (Real w : d.dwell_high) CHECK(w == doctest::Approx(block * dt));
    CHECK(d.occupancy_low == doctest::Approx(0.5).epsilon(0.02));
    CHECK(d.occupancy_high == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("dwell_statistics: hysteresis ignores excursions that stay between thresholds") {
    std::vector<Real> x(20000, 0.0);
    for (std::size_t i = 5000; i < 15000; ++i) x[i] = 5.0;  // window mean peaks at 5 < 7
    const auto d = dwell_statistics(x, 0.1, 0.0, 10.0, SwitchingSettings{});
    CHECK(d.transitions == 0);
    CHECK(d.states_visited == 1);
    CHECK(d.occupancy_low == 1.0);
}

TEST_CASE("dwell_statistics: fast oscillation averages out") {
    std::vector<Real> x(30000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 7.0 + 2.0 * std::sin(0.1 * static_cast<Real>(i));
    const auto d = dwell_statistics(x, 0.1, 0.0, 7.0, SwitchingSettings{});
    CHECK(d.transitions == 0);
    CHECK(d.occupancy_high == 1.0);
}

TEST_CASE("dwell_statistics: inseparable levels") {
    const std::vector<Real> x(1000, 1.0);
    CHECK_THROWS_AS((void)dwell_statistics(x, 0.1, 2.0, 2.0, SwitchingSettings{}), DiscriminatorError);
    CHECK_THROWS_AS((void)dwell_statistics(x, 0.1, 3.0, 2.0, SwitchingSettings{}), DiscriminatorError);
    const std::vector<Real> shorter(10, 1.0);
    CHECK_THROWS_AS((void)dwell_statistics(shorter, 0.1, 0.0, 2.0, SwitchingSettings{}), DiscriminatorError);
}

TEST_CASE("harmonic_content: ratio and visibility on a synthetic spectrum") {
    Spectrum s = flat_spectrum(1e-3, 1001, 1.0);
    s.psd[150] = 1000.0;
    s.psd[300] = 10.0;
    const auto h = harmonic_content(s, 0.05, 0.25);
    CHECK(h.nu_fundamental == doctest::Approx(0.15));
    CHECK(h.nu_second == doctest::Approx(0.3));
    CHECK(h.ratio_db == doctest::Approx(-20.0));
    CHECK(h.second_above_bg_db == doctest::Approx(10.0));

    s.psd[300] = 1.0;
    const auto flat = harmonic_content(s, 0.05, 0.25);
    CHECK(flat.ratio_db == doctest::Approx(-30.0));
    CHECK(flat.second_above_bg_db == doctest::Approx(0.0));
}

TEST_CASE("phase diagram: single-cell grid writes one CSV row") {
    ScenarioConfig c = default_config(ScenarioKind::PhaseDiagram);
    c.phase_diagram.grid = GridSpec{2.85, 2.85, 1, -1.38, -1.38, 1};
    c.output_dir = scratch_dir("pd").string();
    validate(c);
    ArtifactWriter out(c.output_dir);
    const auto r = run_phase_diagram(c, out);
    REQUIRE(r.scan.cells.size() == 1);
    CHECK(r.scan.cells[0].region == RegionClass::Bistable);
    REQUIRE(r.cuts.size() == 1);
    REQUIRE(r.cuts[0].crossing.has_value());
    CHECK(r.cuts[0].crossing->mu == doctest::Approx(3.0).epsilon(0.1 / 3.0));

    std::istringstream csv(slurp(out.dir() / "regions.csv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == 2);
    const auto summary = nlohmann::json::parse(slurp(out.dir() / "summary.json"));
    CHECK(summary["regions"]["bistable"] == 1);
    CHECK(summary["overlap_equals_intersection"] == true);
    fs::remove_all(out.dir());
}

TEST_CASE("single run: fixed seed gives byte-identical artifacts") {
    ScenarioConfig c = default_config(ScenarioKind::SingleRun);
    c.system.e_d = 2.85;
    c.noise = NoiseParams{0.05, 123};
    c.integration.t_total = 200.0;
    c.integration.t_transient = 10.0;

    std::string trace[2], bin[2], hash[2];
    for (int i = 0; i < 2; ++i) {
        c.output_dir = scratch_dir("single" + std::to_string(i)).string();
        ArtifactWriter out(c.output_dir);
        const auto r = run_single(c, out);
        CHECK_FALSE(r.spectrum.has_value());
        trace[i] = slurp(out.dir() / "trace.csv");
        bin[i] = slurp(out.dir() / "trajectory.bin");
        hash[i] = nlohmann::json::parse(slurp(out.dir() / "metrics.json"))["meta_hash"];
        fs::remove_all(out.dir());
    }
    CHECK(!trace[0].empty());
    CHECK(trace[0] == trace[1]);
    CHECK(bin[0] == bin[1]);
    CHECK(hash[0] == hash[1]);

    c.noise.seed = 124;
    c.output_dir = scratch_dir("single_other").string();
    ArtifactWriter out(c.output_dir);
    (void)run_single(c, out);
    CHECK(slurp(out.dir() / "trace.csv") != trace[0]);
    fs::remove_all(out.dir());
}

TEST_CASE("single run: divergence raises a numeric failure") {
    ScenarioConfig c = default_config(ScenarioKind::SingleRun);
    c.noise = NoiseParams{50.0, 1};
    c.integration.t_total = 100.0;
    c.integration.t_transient = 0.0;
    c.integration.divergence_bound = 5.0;
    c.output_dir = scratch_dir("diverge").string();
    ArtifactWriter out(c.output_dir);
    CHECK_THROWS_AS((void)run_single(c, out), NumericFailure);
    CHECK(fs::exists(out.dir() / "metrics.json"));
    fs::remove_all(out.dir());
}

TEST_CASE("initial state follows the configured branch") {
    ScenarioConfig c = default_config(ScenarioKind::SingleRun);
    c.system.e_d = 2.85;
    c.initial_branch = InitialBranch::Lowest;
    CHECK(initial_state(c, c.system).x == doctest::Approx(1.0794939835919325).epsilon(1e-9));
    c.initial_branch = InitialBranch::Highest;
    c.initial_kick = 0.0;
    CHECK(initial_state(c, c.system).x == doctest::Approx(6.7739099276765710).epsilon(1e-9));
}
