#pragma once

// Scenario configuration and runners behind the command-line tool. Each
// runner computes its result, writes artifacts into the configured output
// directory and returns the result for programmatic checks.

#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "optomech/model.hpp"
#include "optomech/sde.hpp"
#include "optomech/spectral.hpp"
#include "optomech/stability.hpp"

namespace optomech {

inline constexpr int kSchemaVersion = 1;

enum class ScenarioKind { PhaseDiagram, CoherenceResonance, Switching, StochasticResonance, SingleRun };

[[nodiscard]] std::string_view to_string(ScenarioKind k);
[[nodiscard]] ScenarioKind scenario_from_string(std::string_view s);

/// Malformed or inconsistent configuration. Maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A diverged trajectory or failed cell. Maps to exit code 3.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SweepVariable { NoiseStrength, DriveAmplitude, Detuning };
enum class SweepMode { List, Log, Linear };

struct SweepSpec {
    SweepVariable variable = SweepVariable::NoiseStrength;
    SweepMode mode = SweepMode::Log;
    std::vector<Real> values;     // List mode
    Real start = 1e-3;            // Log and Linear modes, inclusive
    Real stop = 2.0;              // inclusive
    Real points_per_decade = 20;  // Log mode
    std::size_t count = 10;       // Linear mode

    bool operator==(const SweepSpec&) const = default;

    /// Sweep values in the order given. Log mode places points at
    /// start * 10^(k / points_per_decade) and appends stop when the last
    /// point falls short of it.
    [[nodiscard]] std::vector<Real> expand() const;
};

struct HopfCut {
    BifurcationParameter parameter = BifurcationParameter::DriveAmplitude;
    Real fixed = -1.38;  // value of the other axis
    Real lo = 2.5;
    Real hi = 3.5;

    bool operator==(const HopfCut&) const = default;
};

struct PhaseDiagramSettings {
    GridSpec grid;
    std::vector<HopfCut> cuts{HopfCut{}};

    bool operator==(const PhaseDiagramSettings&) const = default;
};

struct CrSettings {
    Real nu_lo = 0.05;
    Real nu_hi = 0.5;
    std::vector<Real> trace_d_m{0.005, 0.08, 0.5};

    bool operator==(const CrSettings&) const = default;
};

struct SwitchingSettings {
    Real window_periods = 2.0;
    Real threshold_low = 0.3;
    Real threshold_high = 0.7;

    bool operator==(const SwitchingSettings&) const = default;
};

struct SrSettings {
    Real low = 0.3;
    std::optional<Real> optimal;  // empty: the sweep point with the highest SNR
    Real high = 10.0;
    Real narrow_lo = 0.002;  // band searched for the signal-locked peak
    Real narrow_hi = 0.05;
    Real broad_lo = 0.05;  // band searched for the limit-cycle peak
    Real broad_hi = 0.3;

    bool operator==(const SrSettings&) const = default;
};

enum class InitialBranch { Lowest, Highest };

struct ScenarioConfig {
    int schema_version = kSchemaVersion;
    ScenarioKind scenario = ScenarioKind::SingleRun;
    SystemParams system;
    SignalParams signal;
    NoiseParams noise;
    IntegrationConfig integration;
    WelchConfig spectrum;
    InitialBranch initial_branch = InitialBranch::Lowest;
    Real initial_kick = 1e-2;  // x displacement added on the highest branch
    std::optional<SweepSpec> sweep;
    std::size_t n_runs = 16;
    unsigned workers = 0;  // 0: all hardware threads
    std::string output_dir = "out";
    PhaseDiagramSettings phase_diagram;
    CrSettings cr;
    SwitchingSettings switching;
    SrSettings sr;

    bool operator==(const ScenarioConfig&) const = default;
};

/// Scenario defaults at the working points of the corresponding experiment.
[[nodiscard]] ScenarioConfig default_config(ScenarioKind kind);

/// Throws ConfigError on unknown keys, wrong types, a schema mismatch, or
/// values that fail validation. Missing keys take the scenario defaults.
[[nodiscard]] ScenarioConfig parse_config(const nlohmann::ordered_json& j);
[[nodiscard]] ScenarioConfig parse_config_text(const std::string& text);
[[nodiscard]] ScenarioConfig load_config(const std::filesystem::path& path);
[[nodiscard]] nlohmann::ordered_json to_json(const ScenarioConfig& cfg);

/// Throws ConfigError when the configuration is not runnable.
void validate(const ScenarioConfig& cfg);

/// Serialised writes into one output directory, plus a plain-text run log.
class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path dir);

    void write_text(const std::string& name, const std::string& content);
    void write_json(const std::string& name, const nlohmann::ordered_json& j);
    void log(const std::string& line);

    [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::mutex mutex_;
    std::string log_;
};

// ---- results --------------------------------------------------------------

struct CutResult {
    HopfCut cut;
    std::optional<HopfPoint> crossing;
};

struct PhaseDiagramResult {
    PlaneScan scan;
    std::vector<CutResult> cuts;
};

struct CrRow {
    Real d_m = 0.0;
    PeakMetrics averaged;  // from the ensemble-averaged spectrum
    Real h_mean = 0.0, h_std = 0.0;
    Real width_mean = 0.0, width_std = 0.0;
    Real beta_mean = 0.0, beta_std = 0.0;
    std::size_t diverged = 0;
};

struct CrResult {
    std::vector<CrRow> rows;
    std::size_t failed = 0;
};

struct DwellStats {
    Real level_low = 0.0;   // sliding-mean level of the lower state
    Real level_high = 0.0;  // sliding-mean level of the upper state
    Real threshold_low = 0.0;
    Real threshold_high = 0.0;
    std::size_t transitions = 0;
    Real occupancy_low = 0.0;
    Real occupancy_high = 0.0;
    std::size_t states_visited = 0;
    std::vector<Real> dwell_low;   // completed dwells only
    std::vector<Real> dwell_high;
};

/// Discriminator failure: the two reference levels do not separate.
class DiscriminatorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Hysteretic two-state classification of x by its sliding mean over
/// `window_periods` mechanical periods. Thresholds sit at the given fractions
/// of the way from level_low to level_high.
[[nodiscard]] DwellStats dwell_statistics(std::span<const Real> x, Real dt_sample, Real level_low,
                                          Real level_high, const SwitchingSettings& s);

struct HarmonicContent {
    Real nu_fundamental = 0.0;
    Real p_fundamental = 0.0;
    Real nu_second = 0.0;
    Real p_second = 0.0;
    Real ratio_db = 0.0;         // second harmonic over fundamental
    Real second_above_bg_db = 0.0;  // second harmonic over the median background
};

/// Fundamental = highest PSD in [nu_lo, nu_hi]; second harmonic = highest PSD
/// within 15% of twice that frequency.
[[nodiscard]] HarmonicContent harmonic_content(const Spectrum& spec, Real nu_lo, Real nu_hi);

struct SwitchingResult {
    Trajectory noise_free;
    Spectrum noise_free_spectrum;
    HarmonicContent noise_free_harmonics;
    DwellStats noise_free_dwell;
    std::vector<DwellStats> noisy_dwell;  // one per run
    Spectrum noisy_spectrum;              // ensemble average
    HarmonicContent noisy_harmonics;
    std::size_t failed = 0;
};

struct SrRow {
    Real d_m = 0.0;
    SnrResult averaged;
    Real snr_mean = 0.0, snr_std = 0.0;
    BandMax broad;
    Real upper_occupancy = 0.0;
    std::size_t diverged = 0;
};

struct TaggedSpectrum {
    std::string label;
    Real d_m = 0.0;
    Spectrum spectrum;
    BandMax narrow;
    SnrResult narrow_snr;
    BandMax broad;
};

struct SrResult {
    std::vector<SrRow> rows;
    SnrResult noise_free_snr;
    Real noise_free_min_x = 0.0;
    bool noise_free_switched = false;
    std::vector<TaggedSpectrum> tagged;
    std::size_t failed = 0;
};

struct SingleResult {
    Trajectory trajectory;
    std::optional<Spectrum> spectrum;  // absent when the run is too short
};

[[nodiscard]] PhaseDiagramResult run_phase_diagram(const ScenarioConfig& cfg, ArtifactWriter& out);
[[nodiscard]] CrResult run_cr(const ScenarioConfig& cfg, ArtifactWriter& out);
[[nodiscard]] SwitchingResult run_switching(const ScenarioConfig& cfg, ArtifactWriter& out);
[[nodiscard]] SrResult run_sr(const ScenarioConfig& cfg, ArtifactWriter& out);
[[nodiscard]] SingleResult run_single(const ScenarioConfig& cfg, ArtifactWriter& out);

/// Dispatches on cfg.scenario. Returns the number of failed cells.
std::size_t run_scenario(const ScenarioConfig& cfg, ArtifactWriter& out);

/// Initial state selected by cfg.initial_branch and cfg.initial_kick.
[[nodiscard]] DynamicalState initial_state(const ScenarioConfig& cfg, const SystemParams& sys);

}  // namespace optomech
