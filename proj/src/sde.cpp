#include "optomech/sde.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "optomech/format.hpp"
#include "optomech/parallel.hpp"

namespace optomech {

namespace {

std::uint64_t whole_steps(Real span, Real dt, const char* what) {
    const Real ratio = span / dt;
    const Real rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-6 * std::max<Real>(1.0, rounded)) {
        throw std::invalid_argument(std::string(what) + " must be a whole multiple of dt");
    }
    return static_cast<std::uint64_t>(rounded);
}

}  // namespace

std::string_view to_string(Scheme s) {
    return s == Scheme::EulerMaruyama ? "euler_maruyama" : "heun_drift_only";
}

Scheme scheme_from_string(std::string_view s) {
    if (s == "euler_maruyama") return Scheme::EulerMaruyama;
    if (s == "heun_drift_only") return Scheme::HeunDriftOnly;
    throw std::invalid_argument("unknown integration scheme '" + std::string(s) + "'");
}

std::uint64_t IntegrationConfig::transient_steps() const {
    return whole_steps(t_transient, dt, "t_transient");
}

std::uint64_t IntegrationConfig::recorded_steps() const {
    return whole_steps(t_total, dt, "t_total");
}

void validate(const IntegrationConfig& cfg) {
    if (!(std::isfinite(cfg.dt) && cfg.dt > 0.0)) throw std::invalid_argument("dt must be > 0");
    if (!(std::isfinite(cfg.t_total) && cfg.t_total > 0.0)) {
        throw std::invalid_argument("t_total must be > 0");
    }
    if (!(std::isfinite(cfg.t_transient) && cfg.t_transient >= 0.0)) {
        throw std::invalid_argument("t_transient must be >= 0");
    }
    if (cfg.sample_stride < 1) throw std::invalid_argument("sample_stride must be >= 1");
    if (!(cfg.divergence_bound > 0.0)) throw std::invalid_argument("divergence_bound must be > 0");
    if (cfg.transient_steps() + cfg.recorded_steps() < 1000) {
        throw std::invalid_argument("t_transient + t_total must span at least 1000 steps");
    }
    if (cfg.sample_count() < 1) {
        throw std::invalid_argument("t_total shorter than one sampling interval");
    }
}

GaussianStream::GaussianStream(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(master_seed),
        static_cast<std::uint32_t>(master_seed >> 32),
        static_cast<std::uint32_t>(stream_id),
        static_cast<std::uint32_t>(stream_id >> 32),
        0x6f6d7369u,  // domain tag
    };
    engine_.seed(seq);
}

Real GaussianStream::uniform_pm1() {
    // 53 random bits -> [0, 1) -> [-1, 1)
    const Real u = static_cast<Real>(engine_() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
}

Real GaussianStream::operator()() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    Real u, v, s;
    do {
        u = uniform_pm1();
        v = uniform_pm1();
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const Real m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

GaussianStream rng_stream(std::uint64_t master_seed, std::uint64_t stream_id) {
    return GaussianStream(master_seed, stream_id);
}

Trajectory integrate(const SystemParams& sys, const SignalParams& sig, const NoiseParams& noise,
                     const DynamicalState& init, const IntegrationConfig& cfg,
                     std::uint64_t stream_id) {
    validate(sys);
    validate(sig);
    validate(noise);
    validate(cfg);
    if (!is_finite(init)) throw std::invalid_argument("initial state must be finite");

    Trajectory traj;
    traj.meta = TrajectoryMeta{sys, sig, noise, cfg, init, stream_id, false, 0.0};
    traj.t0 = cfg.t_transient;
    traj.dt_sample = cfg.dt_sample();

    const std::uint64_t n_transient = cfg.transient_steps();
    const std::uint64_t n_samples = cfg.sample_count();
    const std::uint64_t n_steps = n_transient + (n_samples - 1) * cfg.sample_stride;
    traj.x.reserve(n_samples);
    if (cfg.record_full_state) {
        traj.p.reserve(n_samples);
        traj.re_a.reserve(n_samples);
        traj.im_a.reserve(n_samples);
    }

    const Real dt = cfg.dt;
    const Real noise_scale = diffusion(noise).p * std::sqrt(dt);
    const bool noisy = noise_scale != 0.0;
    const Real bound = cfg.divergence_bound;
    const Real bound2 = bound * bound;
    GaussianStream gauss(noise.seed, stream_id);

    DynamicalState s = init;
    std::uint64_t next_record = n_transient;
    for (std::uint64_t step = 0;; ++step) {
        if (step == next_record) {
            traj.x.push_back(s.x);
            if (cfg.record_full_state) {
                traj.p.push_back(s.p);
                traj.re_a.push_back(s.a.real());
                traj.im_a.push_back(s.a.imag());
            }
            next_record += cfg.sample_stride;
        }
        if (step == n_steps) break;

        const Real t = static_cast<Real>(step) * dt;
        const StateDerivative f = drift(s, t, sys, sig);
        const Real kick = noisy ? noise_scale * gauss() : 0.0;
        if (cfg.scheme == Scheme::EulerMaruyama) {
            s.a += f.da * dt;
            s.x += f.dx * dt;
            s.p += f.dp * dt + kick;
        } else {
            DynamicalState pred = s;
            pred.a += f.da * dt;
            pred.x += f.dx * dt;
            pred.p += f.dp * dt + kick;
            const StateDerivative f2 = drift(pred, t + dt, sys, sig);
            s.a += 0.5 * (f.da + f2.da) * dt;
            s.x += 0.5 * (f.dx + f2.dx) * dt;
            s.p += 0.5 * (f.dp + f2.dp) * dt + kick;
        }

        if (!(std::abs(s.x) <= bound) || !(std::norm(s.a) <= bound2) || !std::isfinite(s.p)) {
            traj.meta.diverged = true;
            traj.meta.divergence_time = static_cast<Real>(step + 1) * dt;
            break;
        }
    }
    return traj;
}

std::vector<Trajectory> ensemble(const SystemParams& sys, const SignalParams& sig,
                                 const NoiseParams& noise, const DynamicalState& init,
                                 const IntegrationConfig& cfg, std::size_t n_runs,
                                 unsigned workers) {
    if (n_runs < 1) throw std::invalid_argument("n_runs must be >= 1");
    std::vector<Trajectory> runs(n_runs);
    parallel_for(n_runs, workers, [&](std::size_t i) {
        runs[i] = integrate(sys, sig, noise, init, cfg, static_cast<std::uint64_t>(i));
    });
    return runs;
}

DynamicalState state_at(const SteadyState& ss) { return DynamicalState{ss.alpha_s, ss.x_s, 0.0}; }

DynamicalState lower_branch_state(const SystemParams& sys) {
    return state_at(steady_states(sys).front());
}

DynamicalState upper_branch_state(const SystemParams& sys, Real kick) {
    DynamicalState s = state_at(steady_states(sys).back());
    s.x += kick;
    return s;
}

std::string describe(const TrajectoryMeta& m) {
    std::ostringstream os;
    const auto kv = [&](const char* key, Real v) { os << key << " = " << format_real(v) << '\n'; };
    kv("g", m.sys.g);
    kv("kappa", m.sys.kappa);
    kv("gamma_m", m.sys.gamma_m);
    kv("delta", m.sys.delta);
    kv("e_d", m.sys.e_d);
    kv("f_s", m.sig.f_s);
    kv("omega_f", m.sig.omega_f);
    kv("d_m", m.noise.d_m);
    os << "seed = " << m.noise.seed << '\n';
    os << "stream_id = " << m.stream_id << '\n';
    kv("dt", m.cfg.dt);
    kv("t_total", m.cfg.t_total);
    kv("t_transient", m.cfg.t_transient);
    os << "sample_stride = " << m.cfg.sample_stride << '\n';
    os << "scheme = " << to_string(m.cfg.scheme) << '\n';
    kv("divergence_bound", m.cfg.divergence_bound);
    kv("init_re_a", m.init.a.real());
    kv("init_im_a", m.init.a.imag());
    kv("init_x", m.init.x);
    kv("init_p", m.init.p);
    os << "diverged = " << (m.diverged ? "true" : "false") << '\n';
    if (m.diverged) kv("divergence_time", m.divergence_time);
    return os.str();
}

std::uint64_t meta_hash(const TrajectoryMeta& meta) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : describe(meta)) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    const bool full = traj.full_state();
    os << (full ? "t,x,p,re_a,im_a\n" : "t,x\n");
    for (std::size_t k = 0; k < traj.size(); ++k) {
        os << format_real(traj.time(k)) << ',' << format_real(traj.x[k]);
        if (full) {
            os << ',' << format_real(traj.p[k]) << ',' << format_real(traj.re_a[k]) << ','
               << format_real(traj.im_a[k]);
        }
        os << '\n';
    }
}

namespace {

constexpr char kMagic[8] = {'O', 'M', 'T', 'R', 'A', 'J', '0', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8)) {
        throw std::runtime_error("truncated trajectory container");
    }
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
    return v;
}

void put_real(std::ostream& os, Real r) { put_u64(os, std::bit_cast<std::uint64_t>(r)); }
Real get_real(std::istream& is) { return std::bit_cast<Real>(get_u64(is)); }

}  // namespace

void write_trajectory_binary(std::ostream& os, const Trajectory& traj) {
    std::vector<const std::vector<Real>*> channels{&traj.x};
    std::string names = "x";
    if (traj.full_state()) {
        channels.insert(channels.end(), {&traj.p, &traj.re_a, &traj.im_a});
        names += ",p,re_a,im_a";
    }

    std::string header = describe(traj.meta);
    header += "t0 = " + format_real(traj.t0) + '\n';
    header += "dt_sample = " + format_real(traj.dt_sample) + '\n';
    header += "channels = " + names + '\n';

    os.write(kMagic, sizeof kMagic);
    put_u64(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    put_real(os, traj.t0);
    put_real(os, traj.dt_sample);
    put_u64(os, traj.size());
    put_u64(os, channels.size());
    for (const auto* ch : channels) {
        for (Real v : *ch) put_real(os, v);
    }
}

BinaryTrajectory read_trajectory_binary(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("not a trajectory container");
    }
    BinaryTrajectory out;
    const std::uint64_t header_len = get_u64(is);
    out.header.resize(header_len);
    if (!is.read(out.header.data(), static_cast<std::streamsize>(header_len))) {
        throw std::runtime_error("truncated trajectory header");
    }
    out.t0 = get_real(is);
    out.dt_sample = get_real(is);
    const std::uint64_t n = get_u64(is);
    const std::uint64_t n_channels = get_u64(is);
    if (n_channels == 0 || n_channels > 4) throw std::runtime_error("bad channel count");
    out.channels.assign(n_channels, std::vector<Real>(n));
    for (auto& ch : out.channels) {
        for (auto& v : ch) v = get_real(is);
    }
    return out;
}

}  // namespace optomech
