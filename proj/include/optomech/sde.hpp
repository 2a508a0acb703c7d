#pragma once

// Stochastic integration of the mean-field equations with additive thermal
// noise on the mechanical momentum.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "optomech/model.hpp"
#include "optomech/stability.hpp"

namespace optomech {

enum class Scheme {
    EulerMaruyama,
    /// Heun predictor-corrector on the drift; the noise increment is shared by
    /// both stages (additive noise, so no Ito/Stratonovich correction).
    HeunDriftOnly,
};

[[nodiscard]] std::string_view to_string(Scheme s);
[[nodiscard]] Scheme scheme_from_string(std::string_view s);

struct IntegrationConfig {
    Real dt = 1e-3;
    Real t_total = 2e4;      // recorded span
    Real t_transient = 2e3;  // discarded span before recording
    std::uint32_t sample_stride = 100;
    Scheme scheme = Scheme::EulerMaruyama;
    bool record_full_state = false;
    Real divergence_bound = 1e6;

    bool operator==(const IntegrationConfig&) const = default;

    [[nodiscard]] Real dt_sample() const { return dt * static_cast<Real>(sample_stride); }
    [[nodiscard]] std::uint64_t transient_steps() const;
    [[nodiscard]] std::uint64_t recorded_steps() const;
    [[nodiscard]] std::uint64_t sample_count() const { return recorded_steps() / sample_stride; }
};

/// Throws std::invalid_argument on non-positive steps, spans that are not
/// whole multiples of dt, fewer than 1000 total steps, or no samples.
void validate(const IntegrationConfig& cfg);

/// Deterministic standard-normal stream keyed by (master seed, stream id).
/// mt19937_64 seeded through std::seed_seq (both fully specified by the
/// standard) feeding a Marsaglia polar transform, so the sequence does not
/// depend on the standard library vendor.
class GaussianStream {
public:
    GaussianStream(std::uint64_t master_seed, std::uint64_t stream_id);

    Real operator()();

private:
    Real uniform_pm1();

    std::mt19937_64 engine_;
    Real spare_ = 0.0;
    bool has_spare_ = false;
};

[[nodiscard]] GaussianStream rng_stream(std::uint64_t master_seed, std::uint64_t stream_id);

struct TrajectoryMeta {
    SystemParams sys;
    SignalParams sig;
    NoiseParams noise;
    IntegrationConfig cfg;
    DynamicalState init;
    std::uint64_t stream_id = 0;
    bool diverged = false;
    Real divergence_time = 0.0;
};

struct Trajectory {
    Real t0 = 0.0;
    Real dt_sample = 0.0;
    std::vector<Real> x;
    std::vector<Real> p, re_a, im_a;  // empty unless full-state recording
    TrajectoryMeta meta;

    [[nodiscard]] std::size_t size() const { return x.size(); }
    [[nodiscard]] Real time(std::size_t k) const { return t0 + static_cast<Real>(k) * dt_sample; }
    [[nodiscard]] bool full_state() const { return !p.empty(); }
};

/// Integrates from init, discards the transient, then records every
/// sample_stride-th state. Sample 0 is the state at t = t_transient. A
/// divergence (non-finite state, |x| or |a| above the bound) stops the run
/// and leaves a truncated trajectory with meta.diverged set.
[[nodiscard]] Trajectory integrate(const SystemParams& sys, const SignalParams& sig,
                                   const NoiseParams& noise, const DynamicalState& init,
                                   const IntegrationConfig& cfg, std::uint64_t stream_id = 0);

/// n_runs trajectories with stream ids 0..n_runs-1, returned in stream order.
[[nodiscard]] std::vector<Trajectory> ensemble(const SystemParams& sys, const SignalParams& sig,
                                               const NoiseParams& noise,
                                               const DynamicalState& init,
                                               const IntegrationConfig& cfg, std::size_t n_runs,
                                               unsigned workers = 0);

/// Fixed point with p = 0 and the matching optical amplitude.
[[nodiscard]] DynamicalState state_at(const SteadyState& ss);
/// Lowest fixed point (the equilibrium branch).
[[nodiscard]] DynamicalState lower_branch_state(const SystemParams& sys);
/// Highest fixed point displaced by `kick` in x, so that an unstable focus
/// relaxes onto the limit cycle instead of sitting on the fixed point.
[[nodiscard]] DynamicalState upper_branch_state(const SystemParams& sys, Real kick = 1e-2);

/// `key = value` lines describing everything needed to regenerate the run.
[[nodiscard]] std::string describe(const TrajectoryMeta& meta);
/// FNV-1a hash of describe(meta), used to identify a run.
[[nodiscard]] std::uint64_t meta_hash(const TrajectoryMeta& meta);
[[nodiscard]] std::string hex64(std::uint64_t v);

/// CSV `t,x` or `t,x,p,re_a,im_a`.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

/// Binary container: "OMTRAJ01", u64 header length, header text (describe()
/// plus t0/dt_sample/channels), f64 t0, f64 dt_sample, u64 sample count,
/// u64 channel count, then channel-major samples. All numbers little-endian,
/// doubles as IEEE-754.
void write_trajectory_binary(std::ostream& os, const Trajectory& traj);

/// Reads the sample payload back. Metadata is returned as raw header text;
/// only t0, dt_sample and the arrays are restored.
struct BinaryTrajectory {
    std::string header;
    Real t0 = 0.0;
    Real dt_sample = 0.0;
    std::vector<std::vector<Real>> channels;
};
[[nodiscard]] BinaryTrajectory read_trajectory_binary(std::istream& is);

}  // namespace optomech
