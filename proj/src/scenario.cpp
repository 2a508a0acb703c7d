#include "optomech/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "optomech/format.hpp"
#include "optomech/parallel.hpp"

namespace optomech {

using json = nlohmann::ordered_json;

namespace {

constexpr Real kTwoPi = 2.0 * std::numbers::pi;

// ---- enum names -----------------------------------------------------------

template <class E>
struct EnumName {
    E value;
    std::string_view name;
};

constexpr EnumName<ScenarioKind> kScenarioNames[] = {
    {ScenarioKind::PhaseDiagram, "phase_diagram"},
    {ScenarioKind::CoherenceResonance, "coherence_resonance"},
    {ScenarioKind::Switching, "switching"},
    {ScenarioKind::StochasticResonance, "stochastic_resonance"},
    {ScenarioKind::SingleRun, "single"},
};
constexpr EnumName<SweepVariable> kSweepVariableNames[] = {
    {SweepVariable::NoiseStrength, "d_m"},
    {SweepVariable::DriveAmplitude, "e_d"},
    {SweepVariable::Detuning, "delta"},
};
constexpr EnumName<SweepMode> kSweepModeNames[] = {
    {SweepMode::List, "list"},
    {SweepMode::Log, "log"},
    {SweepMode::Linear, "linear"},
};
constexpr EnumName<InitialBranch> kBranchNames[] = {
    {InitialBranch::Lowest, "lowest"},
    {InitialBranch::Highest, "highest"},
};
constexpr EnumName<BifurcationParameter> kParameterNames[] = {
    {BifurcationParameter::DriveAmplitude, "e_d"},
    {BifurcationParameter::Detuning, "delta"},
};

template <class E, std::size_t N>
std::string_view name_of(const EnumName<E> (&table)[N], E v) {
    for (const auto& e : table) {
        if (e.value == v) return e.name;
    }
    return "?";
}

template <class E, std::size_t N>
E value_of(const EnumName<E> (&table)[N], std::string_view s, const std::string& where) {
    for (const auto& e : table) {
        if (e.name == s) return e.value;
    }
    std::string allowed;
    for (const auto& e : table) allowed += (allowed.empty() ? "" : ", ") + std::string(e.name);
    throw ConfigError(where + ": unknown value '" + std::string(s) + "' (expected one of " + allowed + ")");
}

// ---- strict JSON reading --------------------------------------------------

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
    }

    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

    void real(const std::string& key, Real& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) throw ConfigError(where(key) + ": expected a number");
            out = v->get<Real>();
        }
    }

    template <class Int>
    void integer(const std::string& key, Int& out) {
        if (const json* v = find(key)) {
            if (!(v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0))) {
                throw ConfigError(where(key) + ": expected a non-negative integer");
            }
            const auto u = v->get<unsigned long long>();
            if (u > static_cast<unsigned long long>(std::numeric_limits<Int>::max())) {
                throw ConfigError(where(key) + ": value out of range");
            }
            out = static_cast<Int>(u);
        }
    }

    void text(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(where(key) + ": expected a string");
            out = v->get<std::string>();
        }
    }

    void reals(const std::string& key, std::vector<Real>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(where(key) + ": expected an array of numbers");
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number()) throw ConfigError(where(key) + ": expected an array of numbers");
                out.push_back(e.get<Real>());
            }
        }
    }

    template <class E, std::size_t N>
    void enumeration(const std::string& key, const EnumName<E> (&table)[N], E& out) {
        std::string s;
        text(key, s);
        if (has(key)) out = value_of(table, s, where(key));
    }

    /// Child object, or nullptr when absent.
    const json* object(const std::string& key) { return find(key); }

    [[nodiscard]] std::string where(const std::string& key) const {
        if (key.empty()) return path_.empty() ? "config" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    /// Throws on keys that were never requested.
    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(where(k) + ": unknown key");
        }
    }

private:
    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_system(Reader& r, SystemParams& s) {
    r.real("g", s.g);
    r.real("kappa", s.kappa);
    r.real("gamma_m", s.gamma_m);
    r.real("delta", s.delta);
    r.real("e_d", s.e_d);
    r.finish();
}

void read_integration(Reader& r, IntegrationConfig& c) {
    r.real("dt", c.dt);
    r.real("t_total", c.t_total);
    r.real("t_transient", c.t_transient);
    r.integer("sample_stride", c.sample_stride);
    std::string scheme;
    r.text("scheme", scheme);
    if (r.has("scheme")) {
        try {
            c.scheme = scheme_from_string(scheme);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(r.where("scheme") + ": " + e.what());
        }
    }
    bool full = c.record_full_state;
    if (const json* v = r.object("record_full_state")) {
        if (!v->is_boolean()) throw ConfigError(r.where("record_full_state") + ": expected true or false");
        full = v->get<bool>();
    }
    c.record_full_state = full;
    r.real("divergence_bound", c.divergence_bound);
    r.finish();
}

void read_spectrum(Reader& r, WelchConfig& w) {
    r.integer("segment_len", w.segment_len);
    r.real("overlap", w.overlap);
    std::string window;
    r.text("window", window);
    if (r.has("window")) {
        try {
            w.window = window_from_string(window);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(r.where("window") + ": " + e.what());
        }
    }
    r.finish();
}

void read_sweep(Reader& r, SweepSpec& s) {
    r.enumeration("variable", kSweepVariableNames, s.variable);
    r.enumeration("mode", kSweepModeNames, s.mode);
    r.reals("values", s.values);
    r.real("start", s.start);
    r.real("stop", s.stop);
    r.real("points_per_decade", s.points_per_decade);
    r.integer("count", s.count);
    r.finish();
}

void read_grid(Reader& r, GridSpec& g) {
    r.real("e_d_min", g.e_d_min);
    r.real("e_d_max", g.e_d_max);
    r.integer("e_d_steps", g.e_d_steps);
    r.real("delta_min", g.delta_min);
    r.real("delta_max", g.delta_max);
    r.integer("delta_steps", g.delta_steps);
    r.finish();
}

void read_phase_diagram(Reader& r, PhaseDiagramSettings& p) {
    if (const json* g = r.object("grid")) {
        Reader gr(*g, r.where("grid"));
        read_grid(gr, p.grid);
    }
    if (const json* cuts = r.object("cuts")) {
        if (!cuts->is_array()) throw ConfigError(r.where("cuts") + ": expected an array");
        p.cuts.clear();
        for (std::size_t i = 0; i < cuts->size(); ++i) {
            Reader cr((*cuts)[i], r.where("cuts") + "[" + std::to_string(i) + "]");
            HopfCut c;
            cr.enumeration("parameter", kParameterNames, c.parameter);
            cr.real("fixed", c.fixed);
            cr.real("lo", c.lo);
            cr.real("hi", c.hi);
            cr.finish();
            p.cuts.push_back(c);
        }
    }
    r.finish();
}

json to_json(const SweepSpec& s) {
    return {{"variable", name_of(kSweepVariableNames, s.variable)},
            {"mode", name_of(kSweepModeNames, s.mode)},
            {"values", s.values},
            {"start", s.start},
            {"stop", s.stop},
            {"points_per_decade", s.points_per_decade},
            {"count", s.count}};
}

// ---- numerics shared by the runners ---------------------------------------

Real mean(std::span<const Real> v) {
    if (v.empty()) return std::numeric_limits<Real>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<Real>(v.size());
}

Real stdev(std::span<const Real> v) {
    if (v.size() < 2) return 0.0;
    const Real m = mean(v);
    Real s = 0.0;
    for (Real e : v) s += (e - m) * (e - m);
    return std::sqrt(s / static_cast<Real>(v.size() - 1));
}

template <class T, class F>
std::vector<Real> project(const std::vector<T>& v, F&& f) {
    std::vector<Real> out;
    out.reserve(v.size());
    for (const auto& e : v) out.push_back(f(e));
    return out;
}

/// Integrates n_runs members (stream ids 0..n-1) and reduces each with fn
/// inside its worker, so full trajectories never accumulate in memory.
template <class Fn>
auto ensemble_map(const SystemParams& sys, const SignalParams& sig, const NoiseParams& noise,
                  const DynamicalState& init, const IntegrationConfig& cfg, std::size_t n_runs,
                  unsigned workers, Fn&& fn) {
    using R = std::invoke_result_t<Fn&, Trajectory&&>;
    std::vector<R> out(n_runs);
    parallel_for(n_runs, workers, [&](std::size_t i) {
        out[i] = fn(integrate(sys, sig, noise, init, cfg, static_cast<std::uint64_t>(i)));
    });
    return out;
}

std::string csv_name(const std::string& stem, Real v) { return stem + "_" + format_real(v) + ".csv"; }

std::string to_csv(const Trajectory& t) {
    std::ostringstream os;
    write_trajectory_csv(os, t);
    return os.str();
}

std::string to_csv(const Spectrum& s) {
    std::ostringstream os;
    write_spectrum_csv(os, s);
    return os.str();
}

json provenance(const ScenarioConfig& cfg, const std::vector<std::uint64_t>& hashes) {
    // One combined tag over all member trajectories.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::uint64_t v : hashes) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    }
    std::uint64_t c = 0xcbf29ce484222325ull;
    for (unsigned char ch : to_json(cfg).dump()) {
        c ^= ch;
        c *= 0x100000001b3ull;
    }
    return {{"schema_version", kSchemaVersion},
            {"scenario", to_string(cfg.scenario)},
            {"seed", cfg.noise.seed},
            {"config_hash", hex64(c)},
            {"n_trajectories", hashes.size()},
            {"trajectory_hash", hex64(h)}};
}

json to_json(const HarmonicContent& h) {
    return {{"nu_fundamental", h.nu_fundamental}, {"p_fundamental", h.p_fundamental},
            {"nu_second", h.nu_second},           {"p_second", h.p_second},
            {"ratio_db", h.ratio_db},             {"second_above_background_db", h.second_above_bg_db}};
}

json to_json(const DwellStats& d) {
    return {{"level_low", d.level_low},
            {"level_high", d.level_high},
            {"threshold_low", d.threshold_low},
            {"threshold_high", d.threshold_high},
            {"transitions", d.transitions},
            {"occupancy_low", d.occupancy_low},
            {"occupancy_high", d.occupancy_high},
            {"states_visited", d.states_visited},
            {"mean_dwell_low", d.dwell_low.empty() ? json(nullptr) : json(mean(d.dwell_low))},
            {"mean_dwell_high", d.dwell_high.empty() ? json(nullptr) : json(mean(d.dwell_high))}};
}

json number_or_null(Real v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void begin(const ScenarioConfig& cfg, ArtifactWriter& out) {
    validate(cfg);
    out.write_json("config.json", to_json(cfg));
    out.log("scenario " + std::string(to_string(cfg.scenario)) + ", seed " +
            std::to_string(cfg.noise.seed) + ", n_runs " + std::to_string(cfg.n_runs));
}

NoiseParams with_noise(const NoiseParams& base, Real d_m) {
    NoiseParams n = base;
    n.d_m = d_m;
    return n;
}

/// Lowest fixed point and the noise-free limit-cycle mean: the two reference
/// levels for the dwell discriminator.
std::pair<Real, Real> reference_levels(const SystemParams& sys, const Trajectory& noise_free) {
    return {steady_states(sys).front().x_s, mean(noise_free.x)};
}

}  // namespace

// ---- names ----------------------------------------------------------------

std::string_view to_string(ScenarioKind k) { return name_of(kScenarioNames, k); }

ScenarioKind scenario_from_string(std::string_view s) { return value_of(kScenarioNames, s, "scenario"); }

// ---- sweep ----------------------------------------------------------------

std::vector<Real> SweepSpec::expand() const {
    switch (mode) {
    case SweepMode::List:
        return values;
    case SweepMode::Linear: {
        std::vector<Real> out;
        for (std::size_t i = 0; i < count; ++i) out.push_back(axis_value(start, stop, count, i));
        if (count > 1) out.back() = stop;
        return out;
    }
    case SweepMode::Log: {
        std::vector<Real> out;
        const Real decades = std::log10(stop / start);
        const auto n = static_cast<std::size_t>(std::floor(decades * points_per_decade + 1e-9));
        for (std::size_t k = 0; k <= n; ++k) {
            out.push_back(start * std::pow(10.0, static_cast<Real>(k) / points_per_decade));
        }
        if (std::abs(out.back() - stop) > 1e-9 * stop) {
            out.push_back(stop);
        } else {
            out.back() = stop;
        }
        return out;
    }
    }
    return {};
}

// ---- configuration --------------------------------------------------------

ScenarioConfig default_config(ScenarioKind kind) {
    ScenarioConfig c;
    c.scenario = kind;
    switch (kind) {
    case ScenarioKind::PhaseDiagram:
        break;
    case ScenarioKind::CoherenceResonance:
        c.system.e_d = 2.85;
        c.initial_branch = InitialBranch::Highest;
        c.sweep = SweepSpec{SweepVariable::NoiseStrength, SweepMode::Log, {}, 1e-3, 2.0, 20, 10};
        c.output_dir = "out/cr";
        break;
    case ScenarioKind::Switching:
        c.system.e_d = 3.11;
        c.noise.d_m = 0.55;
        c.initial_branch = InitialBranch::Highest;
        c.output_dir = "out/switching";
        break;
    case ScenarioKind::StochasticResonance:
        c.system.e_d = 3.11;
        c.signal = SignalParams{1.5, 0.05};
        c.initial_branch = InitialBranch::Highest;
        c.sweep = SweepSpec{SweepVariable::NoiseStrength, SweepMode::Log, {}, 0.05, 20.0, 20, 10};
        c.output_dir = "out/sr";
        break;
    case ScenarioKind::SingleRun:
        c.n_runs = 1;
        c.output_dir = "out/single";
        break;
    }
    if (kind == ScenarioKind::PhaseDiagram) c.output_dir = "out/phase_diagram";
    return c;
}

ScenarioConfig parse_config(const json& j) {
    Reader top(j, "");
    int version = 0;
    top.integer("schema_version", version);
    if (!top.has("schema_version")) throw ConfigError("schema_version: missing");
    if (version != kSchemaVersion) {
        throw ConfigError("schema_version: unsupported version " + std::to_string(version) +
                          " (expected " + std::to_string(kSchemaVersion) + ")");
    }
    ScenarioKind kind{};
    if (!top.has("scenario")) throw ConfigError("scenario: missing");
    top.enumeration("scenario", kScenarioNames, kind);

    ScenarioConfig c = default_config(kind);
    if (const json* v = top.object("system")) {
        Reader r(*v, "system");
        read_system(r, c.system);
    }
    if (const json* v = top.object("signal")) {
        Reader r(*v, "signal");
        r.real("f_s", c.signal.f_s);
        r.real("omega_f", c.signal.omega_f);
        r.finish();
    }
    if (const json* v = top.object("noise")) {
        Reader r(*v, "noise");
        r.real("d_m", c.noise.d_m);
        r.integer("seed", c.noise.seed);
        r.finish();
    }
    if (const json* v = top.object("integration")) {
        Reader r(*v, "integration");
        read_integration(r, c.integration);
    }
    if (const json* v = top.object("spectrum")) {
        Reader r(*v, "spectrum");
        read_spectrum(r, c.spectrum);
    }
    top.enumeration("initial_branch", kBranchNames, c.initial_branch);
    top.real("initial_kick", c.initial_kick);
    if (const json* v = top.object("sweep")) {
        if (v->is_null()) {
            c.sweep.reset();
        } else {
            SweepSpec s = c.sweep.value_or(SweepSpec{});
            Reader r(*v, "sweep");
            read_sweep(r, s);
            c.sweep = s;
        }
    }
    top.integer("n_runs", c.n_runs);
    top.integer("workers", c.workers);
    top.text("output_dir", c.output_dir);
    if (const json* v = top.object("phase_diagram")) {
        Reader r(*v, "phase_diagram");
        read_phase_diagram(r, c.phase_diagram);
    }
    if (const json* v = top.object("cr")) {
        Reader r(*v, "cr");
        r.real("nu_lo", c.cr.nu_lo);
        r.real("nu_hi", c.cr.nu_hi);
        r.reals("trace_d_m", c.cr.trace_d_m);
        r.finish();
    }
    if (const json* v = top.object("switching")) {
        Reader r(*v, "switching");
        r.real("window_periods", c.switching.window_periods);
        r.real("threshold_low", c.switching.threshold_low);
        r.real("threshold_high", c.switching.threshold_high);
        r.finish();
    }
    if (const json* v = top.object("sr")) {
        Reader r(*v, "sr");
        r.real("low", c.sr.low);
        if (const json* o = r.object("optimal")) {
            if (o->is_null()) {
                c.sr.optimal.reset();
            } else if (o->is_number()) {
                c.sr.optimal = o->get<Real>();
            } else {
                throw ConfigError("sr.optimal: expected a number or null");
            }
        }
        r.real("high", c.sr.high);
        r.real("narrow_lo", c.sr.narrow_lo);
        r.real("narrow_hi", c.sr.narrow_hi);
        r.real("broad_lo", c.sr.broad_lo);
        r.real("broad_hi", c.sr.broad_hi);
        r.finish();
    }
    top.finish();
    validate(c);
    return c;
}

ScenarioConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

json to_json(const ScenarioConfig& c) {
    const auto& s = c.system;
    const auto& ic = c.integration;
    json cuts = json::array();
    for (const auto& cut : c.phase_diagram.cuts) {
        cuts.push_back({{"parameter", name_of(kParameterNames, cut.parameter)},
                        {"fixed", cut.fixed},
                        {"lo", cut.lo},
                        {"hi", cut.hi}});
    }
    const auto& g = c.phase_diagram.grid;
    return {
        {"schema_version", c.schema_version},
        {"scenario", to_string(c.scenario)},
        {"system", {{"g", s.g}, {"kappa", s.kappa}, {"gamma_m", s.gamma_m}, {"delta", s.delta}, {"e_d", s.e_d}}},
        {"signal", {{"f_s", c.signal.f_s}, {"omega_f", c.signal.omega_f}}},
        {"noise", {{"d_m", c.noise.d_m}, {"seed", c.noise.seed}}},
        {"integration",
         {{"dt", ic.dt},
          {"t_total", ic.t_total},
          {"t_transient", ic.t_transient},
          {"sample_stride", ic.sample_stride},
          {"scheme", to_string(ic.scheme)},
          {"record_full_state", ic.record_full_state},
          {"divergence_bound", ic.divergence_bound}}},
        {"spectrum",
         {{"segment_len", c.spectrum.segment_len},
          {"overlap", c.spectrum.overlap},
          {"window", to_string(c.spectrum.window)}}},
        {"initial_branch", name_of(kBranchNames, c.initial_branch)},
        {"initial_kick", c.initial_kick},
        {"sweep", c.sweep ? to_json(*c.sweep) : json(nullptr)},
        {"n_runs", c.n_runs},
        {"workers", c.workers},
        {"output_dir", c.output_dir},
        {"phase_diagram",
         {{"grid",
           {{"e_d_min", g.e_d_min},
            {"e_d_max", g.e_d_max},
            {"e_d_steps", g.e_d_steps},
            {"delta_min", g.delta_min},
            {"delta_max", g.delta_max},
            {"delta_steps", g.delta_steps}}},
          {"cuts", cuts}}},
        {"cr", {{"nu_lo", c.cr.nu_lo}, {"nu_hi", c.cr.nu_hi}, {"trace_d_m", c.cr.trace_d_m}}},
        {"switching",
         {{"window_periods", c.switching.window_periods},
          {"threshold_low", c.switching.threshold_low},
          {"threshold_high", c.switching.threshold_high}}},
        {"sr",
         {{"low", c.sr.low},
          {"optimal", c.sr.optimal ? json(*c.sr.optimal) : json(nullptr)},
          {"high", c.sr.high},
          {"narrow_lo", c.sr.narrow_lo},
          {"narrow_hi", c.sr.narrow_hi},
          {"broad_lo", c.sr.broad_lo},
          {"broad_hi", c.sr.broad_hi}}},
    };
}

void validate(const ScenarioConfig& c) {
    const auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    try {
        validate(c.system);
        validate(c.signal);
        validate(c.noise);
        validate(c.integration);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    require(c.schema_version == kSchemaVersion, "schema_version: unsupported");
    require(c.n_runs >= 1, "n_runs must be >= 1");
    require(c.spectrum.segment_len >= 8, "spectrum.segment_len must be >= 8");
    require(c.spectrum.overlap >= 0.0 && c.spectrum.overlap < 1.0, "spectrum.overlap must be in [0, 1)");
    require(std::isfinite(c.initial_kick), "initial_kick must be finite");
    require(!c.output_dir.empty(), "output_dir must not be empty");

    const bool needs_sweep = c.scenario == ScenarioKind::CoherenceResonance ||
                             c.scenario == ScenarioKind::StochasticResonance;
    if (needs_sweep) {
        require(c.sweep.has_value(), "sweep is required for this scenario");
        require(c.sweep->variable == SweepVariable::NoiseStrength, "sweep.variable must be d_m for this scenario");
    } else {
        require(!c.sweep.has_value(), "sweep is not allowed for this scenario");
    }
    if (c.sweep) {
        const SweepSpec& s = *c.sweep;
        switch (s.mode) {
        case SweepMode::List:
            require(!s.values.empty(), "sweep.values must not be empty");
            break;
        case SweepMode::Log:
            require(std::isfinite(s.start) && std::isfinite(s.stop) && s.start > 0.0 && s.stop > s.start,
                    "sweep: log range needs 0 < start < stop");
            require(s.points_per_decade > 0.0 && std::isfinite(s.points_per_decade),
                    "sweep.points_per_decade must be > 0");
            break;
        case SweepMode::Linear:
            require(std::isfinite(s.start) && std::isfinite(s.stop) && s.count >= 1,
                    "sweep: linear range needs finite start, stop and count >= 1");
            break;
        }
        for (Real v : s.expand()) {
            require(std::isfinite(v), "sweep values must be finite");
            if (s.variable == SweepVariable::NoiseStrength) require(v > 0.0, "sweep values for d_m must be > 0");
        }
    }

    const bool needs_spectrum = c.scenario != ScenarioKind::PhaseDiagram && c.scenario != ScenarioKind::SingleRun;
    if (needs_spectrum) {
        require(c.integration.sample_count() >= 2 * c.spectrum.segment_len,
                "integration.t_total too short: need at least two spectrum segments");
    }

    switch (c.scenario) {
    case ScenarioKind::PhaseDiagram: {
        const auto& g = c.phase_diagram.grid;
        require(g.e_d_steps >= 1 && g.delta_steps >= 1, "phase_diagram.grid needs at least one step per axis");
        for (const auto& cut : c.phase_diagram.cuts) {
            require(std::isfinite(cut.lo) && std::isfinite(cut.hi) && cut.lo < cut.hi,
                    "phase_diagram.cuts: need lo < hi");
        }
        break;
    }
    case ScenarioKind::CoherenceResonance:
        require(c.cr.nu_lo > 0.0 && c.cr.nu_lo < c.cr.nu_hi, "cr: need 0 < nu_lo < nu_hi");
        for (Real v : c.cr.trace_d_m) require(v >= 0.0 && std::isfinite(v), "cr.trace_d_m values must be >= 0");
        break;
    case ScenarioKind::Switching:
        require(c.switching.window_periods > 0.0, "switching.window_periods must be > 0");
        require(c.switching.threshold_low > 0.0 && c.switching.threshold_low < c.switching.threshold_high &&
                    c.switching.threshold_high < 1.0,
                "switching: need 0 < threshold_low < threshold_high < 1");
        break;
    case ScenarioKind::StochasticResonance:
        require(c.signal.f_s > 0.0, "signal.f_s must be > 0 for stochastic resonance");
        require(c.sr.low > 0.0 && c.sr.high > 0.0 && (!c.sr.optimal || *c.sr.optimal > 0.0),
                "sr: tagged noise strengths must be > 0");
        require(c.sr.narrow_lo > 0.0 && c.sr.narrow_lo < c.sr.narrow_hi, "sr: need 0 < narrow_lo < narrow_hi");
        require(c.sr.broad_lo > 0.0 && c.sr.broad_lo < c.sr.broad_hi, "sr: need 0 < broad_lo < broad_hi");
        break;
    case ScenarioKind::SingleRun:
        break;
    }
}

// ---- artifact writer ------------------------------------------------------

ArtifactWriter::ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir_.string() + ": " + ec.message());
    std::ofstream(dir_ / "run.log", std::ios::binary | std::ios::trunc);
}

void ArtifactWriter::write_text(const std::string& name, const std::string& content) {
    std::lock_guard lock(mutex_);
    const auto path = dir_ / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("failed to write " + path.string());
}

void ArtifactWriter::write_json(const std::string& name, const json& j) { write_text(name, j.dump(2) + "\n"); }

void ArtifactWriter::log(const std::string& line) {
    std::lock_guard lock(mutex_);
    log_ += line + "\n";
    std::ofstream f(dir_ / "run.log", std::ios::binary | std::ios::app);
    f << line << '\n';
}

// ---- analysis helpers -----------------------------------------------------

DwellStats dwell_statistics(std::span<const Real> x, Real dt_sample, Real level_low, Real level_high,
                            const SwitchingSettings& s) {
    if (!(std::isfinite(level_low) && std::isfinite(level_high) && level_high - level_low > 1e-9)) {
        throw DiscriminatorError("dwell discriminator: upper level " + format_real(level_high) +
                                 " does not lie above lower level " + format_real(level_low));
    }
    const auto w = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(s.window_periods * kTwoPi / kOmegaM / dt_sample)));
    if (x.size() < w) throw DiscriminatorError("dwell discriminator: trace shorter than one window");

    DwellStats d;
    d.level_low = level_low;
    d.level_high = level_high;
    d.threshold_low = level_low + s.threshold_low * (level_high - level_low);
    d.threshold_high = level_low + s.threshold_high * (level_high - level_low);

    enum class State { Unknown, Low, High };
    State state = State::Unknown;
    std::size_t n_low = 0, n_high = 0;
    std::size_t last_switch = 0;
    bool have_switch = false;
    bool seen_low = false, seen_high = false;

    Real sum = 0.0;
    for (std::size_t i = 0; i < w; ++i) sum += x[i];
    const Real inv_w = 1.0 / static_cast<Real>(w);
    const std::size_t n = x.size() - w + 1;
    for (std::size_t k = 0; k < n; ++k) {
        if (k > 0) sum += x[k + w - 1] - x[k - 1];
        const Real m = sum * inv_w;
        State next = state;
        if (m >= d.threshold_high) {
            next = State::High;
        } else if (m <= d.threshold_low) {
            next = State::Low;
        }
        if (next != state) {
            if (state != State::Unknown) {
                ++d.transitions;
                if (have_switch) {
                    const Real dwell = static_cast<Real>(k - last_switch) * dt_sample;
                    (state == State::Low ? d.dwell_low : d.dwell_high).push_back(dwell);
                }
                last_switch = k;
                have_switch = true;
            }
            state = next;
        }
        if (state == State::Low) {
            ++n_low;
            seen_low = true;
        } else if (state == State::High) {
            ++n_high;
            seen_high = true;
        }
    }
    d.occupancy_low = static_cast<Real>(n_low) / static_cast<Real>(n);
    d.occupancy_high = static_cast<Real>(n_high) / static_cast<Real>(n);
    d.states_visited = static_cast<std::size_t>(seen_low) + static_cast<std::size_t>(seen_high);
    return d;
}

HarmonicContent harmonic_content(const Spectrum& spec, Real nu_lo, Real nu_hi) {
    HarmonicContent h;
    const BandMax f = band_max(spec, nu_lo, nu_hi);
    h.nu_fundamental = f.nu;
    h.p_fundamental = f.power;
    const BandMax s = band_max(spec, 1.85 * f.nu, std::min(2.15 * f.nu, spec.freq.back()));
    h.nu_second = s.nu;
    h.p_second = s.power;
    h.ratio_db = 10.0 * std::log10(s.power / f.power);
    const Real bg = band_median(spec, 1.5 * f.nu, std::min(2.5 * f.nu, spec.freq.back()));
    h.second_above_bg_db = 10.0 * std::log10(s.power / bg);
    return h;
}

DynamicalState initial_state(const ScenarioConfig& cfg, const SystemParams& sys) {
    return cfg.initial_branch == InitialBranch::Lowest ? lower_branch_state(sys)
                                                       : upper_branch_state(sys, cfg.initial_kick);
}

// ---- runners --------------------------------------------------------------

PhaseDiagramResult run_phase_diagram(const ScenarioConfig& cfg, ArtifactWriter& out) {
    begin(cfg, out);
    PhaseDiagramResult res;
    res.scan = scan_plane(cfg.system, cfg.phase_diagram.grid, cfg.workers);
    {
        std::ostringstream os;
        write_region_csv(os, res.scan);
        out.write_text("regions.csv", os.str());
    }

    std::size_t counts[5] = {0, 0, 0, 0, 0};
    std::size_t three = 0, hopf = 0, both = 0;
    bool overlap_is_intersection = true;
    for (const auto& cell : res.scan.cells) {
        ++counts[region_code(cell.region)];
        const bool t = cell.n_roots == 3;
        three += t;
        hopf += cell.hopf_unstable;
        both += t && cell.hopf_unstable;
        if ((t && cell.hopf_unstable) != (cell.region == RegionClass::Overlap)) overlap_is_intersection = false;
    }

    json cuts = json::array();
    std::size_t failed = 0;
    for (const auto& cut : cfg.phase_diagram.cuts) {
        SystemParams sys = cfg.system;
        if (cut.parameter == BifurcationParameter::DriveAmplitude) {
            sys.delta = cut.fixed;
        } else {
            sys.e_d = cut.fixed;
        }
        json entry{{"parameter", name_of(kParameterNames, cut.parameter)},
                   {"fixed", cut.fixed},
                   {"lo", cut.lo},
                   {"hi", cut.hi}};
        CutResult cr{cut, std::nullopt};
        try {
            cr.crossing = locate_hopf(sys, cut.parameter, cut.lo, cut.hi);
            entry["found"] = cr.crossing.has_value();
            if (cr.crossing) {
                const auto& rep = cr.crossing->report;
                entry["crossing"] = cr.crossing->mu;
                entry["x_s"] = cr.crossing->steady.x_s;
                entry["d3"] = rep.d[2];
                entry["frequency"] = std::abs(rep.eigenvalues[0].imag()) / kTwoPi;
            }
            out.log("Hopf cut " + std::string(name_of(kParameterNames, cut.parameter)) + " in [" +
                    format_real(cut.lo) + ", " + format_real(cut.hi) + "]: " +
                    (cr.crossing ? "crossing at " + format_real(cr.crossing->mu) : "no crossing"));
        } catch (const std::exception& e) {
            ++failed;
            entry["found"] = false;
            entry["error"] = e.what();
            out.log(std::string("Hopf cut failed: ") + e.what());
        }
        cuts.push_back(entry);
        res.cuts.push_back(cr);
    }

    json regions = json::object();
    for (std::uint8_t k = 0; k < 5; ++k) {
        regions[std::string(to_string(static_cast<RegionClass>(k)))] = counts[k];
    }
    const json summary{{"regions", regions},
                       {"three_root_cells", three},
                       {"hopf_unstable_cells", hopf},
                       {"three_root_and_hopf_unstable_cells", both},
                       {"overlap_equals_intersection", overlap_is_intersection},
                       {"hopf_cuts", cuts},
                       {"failed", failed},
                       {"provenance", provenance(cfg, {})}};
    out.write_json("summary.json", summary);
    if (failed > 0) throw NumericFailure(std::to_string(failed) + " Hopf cut(s) failed");
    return res;
}

CrResult run_cr(const ScenarioConfig& cfg, ArtifactWriter& out) {
    begin(cfg, out);
    const SystemParams& sys = cfg.system;
    const DynamicalState init = initial_state(cfg, sys);

    struct RunOut {
        PeakMetrics metrics;
        Spectrum spec;
        std::uint64_t hash = 0;
        bool diverged = false;
    };

    CrResult res;
    std::vector<std::uint64_t> hashes;
    std::ostringstream csv;
    csv << "d_m,nu_peak,h_omega,delta_omega,beta,h_mean,h_std,delta_omega_mean,delta_omega_std,beta_mean,"
           "beta_std,diverged\n";
    for (Real d_m : cfg.sweep->expand()) {
        const auto runs = ensemble_map(sys, cfg.signal, with_noise(cfg.noise, d_m), init, cfg.integration,
                                       cfg.n_runs, cfg.workers, [&](Trajectory&& t) {
                                           RunOut r;
                                           r.hash = meta_hash(t.meta);
                                           r.diverged = t.meta.diverged;
                                           if (r.diverged) return r;
                                           r.spec = psd(t, cfg.spectrum);
                                           r.metrics = peak_metrics(r.spec, cfg.cr.nu_lo, cfg.cr.nu_hi);
                                           return r;
                                       });
        CrRow row;
        row.d_m = d_m;
        std::vector<Spectrum> spectra;
        std::vector<PeakMetrics> per_run;
        for (const auto& r : runs) {
            hashes.push_back(r.hash);
            if (r.diverged) {
                ++row.diverged;
                continue;
            }
            spectra.push_back(r.spec);
            per_run.push_back(r.metrics);
        }
        if (row.diverged > 0) {
            ++res.failed;
            const Real nan = std::numeric_limits<Real>::quiet_NaN();
            row.averaged = PeakMetrics{nan, nan, nan, nan, nan, false};
            row.h_mean = row.h_std = row.width_mean = row.width_std = row.beta_mean = row.beta_std = nan;
            out.log("d_m " + format_real(d_m) + ": " + std::to_string(row.diverged) + " diverged run(s)");
        } else {
            row.averaged = peak_metrics(average_spectra(spectra), cfg.cr.nu_lo, cfg.cr.nu_hi);
            const auto h = project(per_run, [](const PeakMetrics& m) { return m.h_omega; });
            const auto w = project(per_run, [](const PeakMetrics& m) { return m.delta_omega; });
            const auto b = project(per_run, [](const PeakMetrics& m) { return m.beta; });
            row.h_mean = mean(h);
            row.h_std = stdev(h);
            row.width_mean = mean(w);
            row.width_std = stdev(w);
            row.beta_mean = mean(b);
            row.beta_std = stdev(b);
        }
        csv << format_real(row.d_m) << ',' << format_real(row.averaged.nu_peak) << ','
            << format_real(row.averaged.h_omega) << ',' << format_real(row.averaged.delta_omega) << ','
            << format_real(row.averaged.beta) << ',' << format_real(row.h_mean) << ',' << format_real(row.h_std)
            << ',' << format_real(row.width_mean) << ',' << format_real(row.width_std) << ','
            << format_real(row.beta_mean) << ',' << format_real(row.beta_std) << ',' << row.diverged << '\n';
        out.log("d_m " + format_real(d_m) + ": beta " + format_real(row.averaged.beta) + ", width " +
                format_real(row.averaged.delta_omega));
        res.rows.push_back(row);
    }
    out.write_text("cr.csv", csv.str());

    for (Real d_m : cfg.cr.trace_d_m) {
        const auto t = integrate(sys, cfg.signal, with_noise(cfg.noise, d_m), init, cfg.integration, 0);
        out.write_text(csv_name("trace_dm", d_m), to_csv(t));
        if (!t.meta.diverged) out.write_text(csv_name("spectrum_dm", d_m), to_csv(psd(t, cfg.spectrum)));
    }

    json rows = json::array();
    const CrRow* best = nullptr;
    for (const auto& row : res.rows) {
        rows.push_back({{"d_m", row.d_m},
                        {"averaged", to_json(row.averaged)},
                        {"beta_mean", number_or_null(row.beta_mean)},
                        {"beta_std", number_or_null(row.beta_std)},
                        {"diverged", row.diverged}});
        if (row.diverged == 0 && (!best || row.averaged.beta > best->averaged.beta)) best = &row;
    }
    json summary{{"rows", rows}, {"failed", res.failed}, {"provenance", provenance(cfg, hashes)}};
    if (best) summary["beta_max"] = {{"d_m", best->d_m}, {"beta", best->averaged.beta}};
    out.write_json("metrics.json", summary);
    return res;
}

SwitchingResult run_switching(const ScenarioConfig& cfg, ArtifactWriter& out) {
    begin(cfg, out);
    const SystemParams& sys = cfg.system;
    const DynamicalState init = initial_state(cfg, sys);
    const Real lc_lo = 0.05, lc_hi = 0.3;

    SwitchingResult res;
    res.noise_free = integrate(sys, cfg.signal, with_noise(cfg.noise, 0.0), init, cfg.integration, 0);
    if (res.noise_free.meta.diverged) throw NumericFailure("noise-free reference run diverged");
    res.noise_free_spectrum = psd(res.noise_free, cfg.spectrum);
    res.noise_free_harmonics = harmonic_content(res.noise_free_spectrum, lc_lo, lc_hi);
    const auto [level_low, level_high] = reference_levels(sys, res.noise_free);
    const Real dts = res.noise_free.dt_sample;
    res.noise_free_dwell = dwell_statistics(res.noise_free.x, dts, level_low, level_high, cfg.switching);

    struct RunOut {
        DwellStats dwell;
        Spectrum spec;
        std::uint64_t hash = 0;
        bool diverged = false;
    };
    const auto runs = ensemble_map(sys, cfg.signal, cfg.noise, init, cfg.integration, cfg.n_runs, cfg.workers,
                                   [&](Trajectory&& t) {
                                       RunOut r;
                                       r.hash = meta_hash(t.meta);
                                       r.diverged = t.meta.diverged;
                                       if (r.diverged) return r;
                                       r.spec = psd(t, cfg.spectrum);
                                       r.dwell = dwell_statistics(t.x, t.dt_sample, level_low, level_high,
                                                                  cfg.switching);
                                       return r;
                                   });
    std::vector<Spectrum> spectra;
    std::vector<std::uint64_t> hashes{meta_hash(res.noise_free.meta)};
    std::ostringstream dwell_csv;
    dwell_csv << "run,state,dwell\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        hashes.push_back(runs[i].hash);
        if (runs[i].diverged) {
            ++res.failed;
            continue;
        }
        spectra.push_back(runs[i].spec);
        res.noisy_dwell.push_back(runs[i].dwell);
        for (Real d : runs[i].dwell.dwell_low) dwell_csv << i << ",low," << format_real(d) << '\n';
        for (Real d : runs[i].dwell.dwell_high) dwell_csv << i << ",high," << format_real(d) << '\n';
    }
    if (spectra.empty()) throw NumericFailure("every noisy run diverged");
    res.noisy_spectrum = average_spectra(spectra);
    res.noisy_harmonics = harmonic_content(res.noisy_spectrum, lc_lo, lc_hi);

    out.write_text("noise_free_trace.csv", to_csv(res.noise_free));
    out.write_text("noise_free_spectrum.csv", to_csv(res.noise_free_spectrum));
    out.write_text("noisy_trace.csv",
                   to_csv(integrate(sys, cfg.signal, cfg.noise, init, cfg.integration, 0)));
    out.write_text("noisy_spectrum.csv", to_csv(res.noisy_spectrum));
    out.write_text("dwell_times.csv", dwell_csv.str());

    json per_run = json::array();
    for (const auto& d : res.noisy_dwell) per_run.push_back(to_json(d));
    out.write_json("metrics.json", {{"noise_free", {{"harmonics", to_json(res.noise_free_harmonics)},
                                                    {"dwell", to_json(res.noise_free_dwell)}}},
                                    {"noisy", {{"d_m", cfg.noise.d_m},
                                               {"harmonics", to_json(res.noisy_harmonics)},
                                               {"dwell", per_run}}},
                                    {"harmonic_suppression_db",
                                     res.noise_free_harmonics.ratio_db - res.noisy_harmonics.ratio_db},
                                    {"failed", res.failed},
                                    {"provenance", provenance(cfg, hashes)}});
    out.log("noise-free harmonic ratio " + format_real(res.noise_free_harmonics.ratio_db) + " dB, noisy " +
            format_real(res.noisy_harmonics.ratio_db) + " dB");
    if (!res.noisy_dwell.empty()) {
        out.log("run 0: " + std::to_string(res.noisy_dwell.front().transitions) + " transitions");
    }
    return res;
}

SrResult run_sr(const ScenarioConfig& cfg, ArtifactWriter& out) {
    begin(cfg, out);
    const SystemParams& sys = cfg.system;
    const DynamicalState init = initial_state(cfg, sys);
    const Real nu_s = cfg.signal.omega_f / kTwoPi;

    SrResult res;
    const auto reference = integrate(sys, cfg.signal, with_noise(cfg.noise, 0.0), init, cfg.integration, 0);
    if (reference.meta.diverged) throw NumericFailure("noise-free reference run diverged");
    const Spectrum reference_spec = psd(reference, cfg.spectrum);
    res.noise_free_snr = snr_db(reference_spec, nu_s);
    res.noise_free_min_x = *std::min_element(reference.x.begin(), reference.x.end());
    // Without a limit cycle to compare against, the upper level comes from
    // the unforced system.
    const auto unforced = integrate(sys, SignalParams{}, with_noise(cfg.noise, 0.0), init, cfg.integration, 0);
    const auto [level_low, level_high] = reference_levels(sys, unforced);
    const DwellStats ref_dwell = dwell_statistics(reference.x, reference.dt_sample, level_low, level_high,
                                                  cfg.switching);
    res.noise_free_switched = ref_dwell.occupancy_low > 0.0;
    out.write_text("trace_noise_free.csv", to_csv(reference));
    out.write_text("spectrum_noise_free.csv", to_csv(reference_spec));

    struct RunOut {
        Spectrum spec;
        Real upper = 0.0;
        std::uint64_t hash = 0;
        bool diverged = false;
    };
    std::vector<std::uint64_t> hashes{meta_hash(reference.meta)};
    const auto run_point = [&](Real d_m, std::vector<RunOut>& runs) {
        runs = ensemble_map(sys, cfg.signal, with_noise(cfg.noise, d_m), init, cfg.integration, cfg.n_runs,
                            cfg.workers, [&](Trajectory&& t) {
                                RunOut r;
                                r.hash = meta_hash(t.meta);
                                r.diverged = t.meta.diverged;
                                if (r.diverged) return r;
                                r.spec = psd(t, cfg.spectrum);
                                r.upper = dwell_statistics(t.x, t.dt_sample, level_low, level_high,
                                                           cfg.switching)
                                              .occupancy_high;
                                return r;
                            });
    };

    std::vector<std::pair<Real, Spectrum>> averaged;
    std::ostringstream csv;
    csv << "d_m,snr_db,snr_mean_db,snr_std_db,broad_nu,upper_occupancy,diverged\n";
    for (Real d_m : cfg.sweep->expand()) {
        std::vector<RunOut> runs;
        run_point(d_m, runs);
        SrRow row;
        row.d_m = d_m;
        std::vector<Spectrum> spectra;
        std::vector<Real> snrs, upper;
        for (const auto& r : runs) {
            hashes.push_back(r.hash);
            if (r.diverged) {
                ++row.diverged;
                continue;
            }
            spectra.push_back(r.spec);
            snrs.push_back(snr_db(r.spec, nu_s).snr_db);
            upper.push_back(r.upper);
        }
        if (row.diverged > 0) {
            ++res.failed;
            const Real nan = std::numeric_limits<Real>::quiet_NaN();
            row.averaged = SnrResult{nu_s, nan, nan, nan};
            row.snr_mean = row.snr_std = row.upper_occupancy = nan;
            row.broad = BandMax{nan, nan};
        } else {
            const Spectrum avg = average_spectra(spectra);
            row.averaged = snr_db(avg, nu_s);
            row.snr_mean = mean(snrs);
            row.snr_std = stdev(snrs);
            row.broad = band_max(avg, cfg.sr.broad_lo, cfg.sr.broad_hi);
            row.upper_occupancy = mean(upper);
            averaged.emplace_back(d_m, avg);
        }
        csv << format_real(d_m) << ',' << format_real(row.averaged.snr_db) << ',' << format_real(row.snr_mean)
            << ',' << format_real(row.snr_std) << ',' << format_real(row.broad.nu) << ','
            << format_real(row.upper_occupancy) << ',' << row.diverged << '\n';
        out.log("d_m " + format_real(d_m) + ": SNR " + format_real(row.averaged.snr_db) + " dB");
        res.rows.push_back(row);
    }
    out.write_text("snr.csv", csv.str());

    Real optimal = cfg.sr.optimal.value_or(std::numeric_limits<Real>::quiet_NaN());
    if (!cfg.sr.optimal) {
        const SrRow* best = nullptr;
        for (const auto& row : res.rows) {
            if (row.diverged == 0 && (!best || row.averaged.snr_db > best->averaged.snr_db)) best = &row;
        }
        if (!best) throw NumericFailure("no sweep point completed");
        optimal = best->d_m;
    }

    json tagged = json::array();
    for (const auto& [label, d_m] : {std::pair<std::string, Real>{"low", cfg.sr.low}, {"optimal", optimal},
                                     {"high", cfg.sr.high}}) {
        TaggedSpectrum ts;
        ts.label = label;
        ts.d_m = d_m;
        const auto hit = std::find_if(averaged.begin(), averaged.end(), [&](const auto& p) { return p.first == d_m; });
        if (hit != averaged.end()) {
            ts.spectrum = hit->second;
        } else {
            std::vector<RunOut> runs;
            run_point(d_m, runs);
            std::vector<Spectrum> spectra;
            for (const auto& r : runs) {
                hashes.push_back(r.hash);
                if (!r.diverged) spectra.push_back(r.spec);
            }
            if (spectra.size() != runs.size()) ++res.failed;
            if (spectra.empty()) continue;
            ts.spectrum = average_spectra(spectra);
        }
        ts.narrow = band_max(ts.spectrum, cfg.sr.narrow_lo, cfg.sr.narrow_hi);
        ts.narrow_snr = snr_db(ts.spectrum, ts.narrow.nu);
        ts.broad = band_max(ts.spectrum, cfg.sr.broad_lo, cfg.sr.broad_hi);
        out.write_text("spectrum_" + label + ".csv", to_csv(ts.spectrum));
        out.write_text("trace_" + label + ".csv",
                       to_csv(integrate(sys, cfg.signal, with_noise(cfg.noise, d_m), init, cfg.integration, 0)));
        tagged.push_back({{"label", label},
                          {"d_m", d_m},
                          {"narrow_nu", ts.narrow.nu},
                          {"narrow_snr_db", ts.narrow_snr.snr_db},
                          {"broad_nu", ts.broad.nu},
                          {"broad_power", ts.broad.power}});
        res.tagged.push_back(std::move(ts));
    }

    json rows = json::array();
    for (const auto& row : res.rows) {
        rows.push_back({{"d_m", row.d_m},
                        {"snr", to_json(row.averaged)},
                        {"snr_mean_db", number_or_null(row.snr_mean)},
                        {"snr_std_db", number_or_null(row.snr_std)},
                        {"upper_occupancy", number_or_null(row.upper_occupancy)}});
    }
    out.write_json("metrics.json", {{"nu_signal", nu_s},
                                    {"noise_free", {{"snr", to_json(res.noise_free_snr)},
                                                    {"min_x", res.noise_free_min_x},
                                                    {"switched", res.noise_free_switched}}},
                                    {"rows", rows},
                                    {"tagged", tagged},
                                    {"failed", res.failed},
                                    {"provenance", provenance(cfg, hashes)}});
    return res;
}

SingleResult run_single(const ScenarioConfig& cfg, ArtifactWriter& out) {
    begin(cfg, out);
    SingleResult res;
    res.trajectory = integrate(cfg.system, cfg.signal, cfg.noise, initial_state(cfg, cfg.system),
                               cfg.integration, 0);
    out.write_text("trace.csv", to_csv(res.trajectory));
    {
        std::ostringstream os(std::ios::binary);
        write_trajectory_binary(os, res.trajectory);
        out.write_text("trajectory.bin", os.str());
    }
    json metrics{{"meta_hash", hex64(meta_hash(res.trajectory.meta))},
                 {"samples", res.trajectory.size()},
                 {"diverged", res.trajectory.meta.diverged}};
    if (res.trajectory.meta.diverged) metrics["divergence_time"] = res.trajectory.meta.divergence_time;
    if (!res.trajectory.meta.diverged && res.trajectory.size() >= 2 * cfg.spectrum.segment_len) {
        res.spectrum = psd(res.trajectory, cfg.spectrum);
        out.write_text("spectrum.csv", to_csv(*res.spectrum));
        metrics["peak"] = to_json(peak_metrics(*res.spectrum, cfg.cr.nu_lo, cfg.cr.nu_hi));
    } else if (!res.trajectory.meta.diverged) {
        out.log("trace shorter than two spectrum segments; spectrum skipped");
    }
    metrics["provenance"] = provenance(cfg, {meta_hash(res.trajectory.meta)});
    out.write_json("metrics.json", metrics);
    if (res.trajectory.meta.diverged) {
        throw NumericFailure("trajectory diverged at t = " + format_real(res.trajectory.meta.divergence_time));
    }
    return res;
}

std::size_t run_scenario(const ScenarioConfig& cfg, ArtifactWriter& out) {
    switch (cfg.scenario) {
    case ScenarioKind::PhaseDiagram:
        (void)run_phase_diagram(cfg, out);
        return 0;
    case ScenarioKind::CoherenceResonance:
        return run_cr(cfg, out).failed;
    case ScenarioKind::Switching:
        return run_switching(cfg, out).failed;
    case ScenarioKind::StochasticResonance:
        return run_sr(cfg, out).failed;
    case ScenarioKind::SingleRun:
        (void)run_single(cfg, out);
        return 0;
    }
    return 0;
}

}  // namespace optomech
