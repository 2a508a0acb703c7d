#include "optomech/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <fftw3.h>

#include "optomech/format.hpp"

namespace optomech {

namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
public:
    explicit RealFft(std::size_t n)
        : n_(n),
          in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
          out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
        if (!in_ || !out_) throw std::bad_alloc();
        std::lock_guard lock(fftw_planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE);
        if (!plan_) throw std::runtime_error("FFTW planning failed");
    }
    ~RealFft() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() { return in_.get(); }
    void execute() { fftw_execute(plan_); }
    [[nodiscard]] double power(std::size_t k) const {
        return out_.get()[k][0] * out_.get()[k][0] + out_.get()[k][1] * out_.get()[k][1];
    }

private:
    std::size_t n_;
    std::unique_ptr<double, FftwFree> in_;
    std::unique_ptr<fftw_complex, FftwFree> out_;
    fftw_plan plan_ = nullptr;
};

std::vector<Real> make_window(Window w, std::size_t n) {
    std::vector<Real> out(n, 1.0);
    if (w == Window::Hann) {
        // Periodic Hann, the usual choice for spectral estimation.
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<Real>(i) /
                                          static_cast<Real>(n));
        }
    }
    return out;
}

Real median(std::vector<Real> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const Real upper = *mid;
    const Real lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

struct BinRange {
    std::size_t lo;
    std::size_t hi;  // inclusive
};

BinRange band_bins(const Spectrum& spec, Real nu_lo, Real nu_hi) {
    if (spec.freq.empty()) throw std::invalid_argument("empty spectrum");
    if (!(nu_lo < nu_hi)) throw std::invalid_argument("band must satisfy nu_lo < nu_hi");
    const auto first = std::lower_bound(spec.freq.begin(), spec.freq.end(), nu_lo);
    const auto last = std::upper_bound(spec.freq.begin(), spec.freq.end(), nu_hi);
    if (first == spec.freq.end() || last == spec.freq.begin() || first >= last) {
        throw std::invalid_argument("band lies outside the spectrum");
    }
    return {static_cast<std::size_t>(first - spec.freq.begin()),
            static_cast<std::size_t>(last - spec.freq.begin()) - 1};
}

}  // namespace

std::string_view to_string(Window w) { return w == Window::Hann ? "hann" : "rectangular"; }

Window window_from_string(std::string_view s) {
    if (s == "hann") return Window::Hann;
    if (s == "rectangular") return Window::Rectangular;
    throw std::invalid_argument("unknown window '" + std::string(s) + "'");
}

Spectrum psd(std::span<const Real> x, Real dt_sample, const WelchConfig& cfg) {
    const std::size_t n = cfg.segment_len;
    if (n < 8) throw std::invalid_argument("segment_len must be >= 8");
    if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0)) {
        throw std::invalid_argument("overlap must be in [0, 1)");
    }
    if (!(dt_sample > 0.0)) throw std::invalid_argument("dt_sample must be > 0");
    if (x.size() < 2 * n) {
        throw std::invalid_argument("trajectory too short for Welch estimate: need at least " +
                                    std::to_string(2 * n) + " samples, have " +
                                    std::to_string(x.size()));
    }
    if (!std::all_of(x.begin(), x.end(), [](Real v) { return std::isfinite(v); })) {
        throw std::invalid_argument("trajectory contains non-finite samples");
    }

    const auto hop = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<Real>(n) * (1.0 - cfg.overlap))));
    const std::vector<Real> w = make_window(cfg.window, n);
    Real w2 = 0.0;
    for (Real v : w) w2 += v * v;
    const Real fs = 1.0 / dt_sample;

    Spectrum spec;
    const std::size_t bins = n / 2 + 1;
    spec.freq.resize(bins);
    spec.psd.assign(bins, 0.0);
    spec.resolution = fs / static_cast<Real>(n);
    for (std::size_t k = 0; k < bins; ++k) spec.freq[k] = static_cast<Real>(k) * spec.resolution;

    RealFft fft(n);
    Real weighted_var = 0.0;
    for (std::size_t start = 0; start + n <= x.size(); start += hop) {
        Real mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x[start + i];
        mean /= static_cast<Real>(n);
        double* in = fft.input();
        Real seg_var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            in[i] = w[i] * (x[start + i] - mean);
            seg_var += in[i] * in[i];
        }
        weighted_var += seg_var / w2;
        fft.execute();
        for (std::size_t k = 0; k < bins; ++k) spec.psd[k] += fft.power(k);
        ++spec.n_segments;
    }

    const Real scale = 1.0 / (fs * w2 * static_cast<Real>(spec.n_segments));
    for (std::size_t k = 0; k < bins; ++k) {
        const bool edge = k == 0 || (n % 2 == 0 && k == bins - 1);
        spec.psd[k] *= edge ? scale : 2.0 * scale;
    }
    spec.windowed_variance = weighted_var / static_cast<Real>(spec.n_segments);
    return spec;
}

Spectrum psd(const Trajectory& traj, const WelchConfig& cfg) {
    return psd(std::span<const Real>(traj.x), traj.dt_sample, cfg);
}

Spectrum average_spectra(std::span<const Spectrum> spectra) {
    if (spectra.empty()) throw std::invalid_argument("no spectra to average");
    Spectrum out = spectra.front();
    for (std::size_t s = 1; s < spectra.size(); ++s) {
        const Spectrum& other = spectra[s];
        if (other.freq.size() != out.freq.size() || other.resolution != out.resolution) {
            throw std::invalid_argument("spectra have different frequency grids");
        }
        for (std::size_t k = 0; k < out.psd.size(); ++k) out.psd[k] += other.psd[k];
        out.n_segments += other.n_segments;
        out.windowed_variance += other.windowed_variance;
    }
    const Real inv = 1.0 / static_cast<Real>(spectra.size());
    for (Real& v : out.psd) v *= inv;
    out.windowed_variance *= inv;
    return out;
}

PeakMetrics peak_metrics(const Spectrum& spec, Real nu_lo, Real nu_hi) {
    const BinRange band = band_bins(spec, nu_lo, nu_hi);
    if (band.hi - band.lo + 1 <= 5) {
        throw std::invalid_argument("peak search band must span more than 5 bins");
    }

    std::size_t peak = band.lo;
    for (std::size_t k = band.lo; k <= band.hi; ++k) {
        if (spec.psd[k] > spec.psd[peak]) peak = k;
    }

    std::vector<Real> rest;
    for (std::size_t k = band.lo; k <= band.hi; ++k) {
        const std::size_t dist = k > peak ? k - peak : peak - k;
        if (dist > 3) rest.push_back(spec.psd[k]);
    }

    PeakMetrics m;
    m.nu_peak = spec.freq[peak];
    m.background = median(std::move(rest));
    m.h_omega = spec.psd[peak] - m.background;
    if (!(m.h_omega > 0.0)) {
        m.below_background = true;
        m.h_omega = std::max<Real>(m.h_omega, 0.0);
        m.delta_omega = spec.resolution;
        m.beta = 0.0;
        return m;
    }

    const Real half = m.background + 0.5 * m.h_omega;
    const auto crossing = [&](std::size_t inside, std::size_t outside) {
        const Real a = spec.psd[inside];
        const Real b = spec.psd[outside];
        const Real frac = (a - half) / (a - b);
        return spec.freq[inside] + frac * (spec.freq[outside] - spec.freq[inside]);
    };

    std::size_t l = peak;
    while (l > 0 && spec.psd[l - 1] >= half) --l;
    const Real left = l > 0 ? crossing(l, l - 1) : spec.freq.front();

    std::size_t r = peak;
    while (r + 1 < spec.psd.size() && spec.psd[r + 1] >= half) ++r;
    const Real right = r + 1 < spec.psd.size() ? crossing(r, r + 1) : spec.freq.back();

    m.delta_omega = std::max(right - left, spec.resolution);
    m.beta = m.nu_peak * m.h_omega / m.delta_omega;
    return m;
}

SnrResult snr_db(const Spectrum& spec, Real nu_signal) {
    if (spec.freq.size() < 2) throw std::invalid_argument("spectrum too short");
    if (!(nu_signal >= spec.freq[1] && nu_signal <= spec.freq.back())) {
        throw std::invalid_argument("signal frequency outside (first bin, Nyquist]");
    }
    const auto last = static_cast<std::ptrdiff_t>(spec.psd.size()) - 1;
    const auto centre = static_cast<std::ptrdiff_t>(std::llround(nu_signal / spec.resolution));

    SnrResult r;
    r.nu_signal = nu_signal;
    r.peak_power = 0.0;
    std::vector<Real> background;
    for (std::ptrdiff_t k = centre - 10; k <= centre + 10; ++k) {
        if (k < 1 || k > last) continue;
        const std::ptrdiff_t dist = k > centre ? k - centre : centre - k;
        if (dist <= 2) {
            r.peak_power = std::max(r.peak_power, spec.psd[static_cast<std::size_t>(k)]);
        } else {
            background.push_back(spec.psd[static_cast<std::size_t>(k)]);
        }
    }
    r.background_power = median(std::move(background));
    r.snr_db = r.background_power > 0.0
                   ? 10.0 * std::log10(r.peak_power / r.background_power)
                   : std::numeric_limits<Real>::infinity();
    return r;
}

BandMax band_max(const Spectrum& spec, Real nu_lo, Real nu_hi) {
    const BinRange band = band_bins(spec, nu_lo, nu_hi);
    BandMax out{spec.freq[band.lo], spec.psd[band.lo]};
    for (std::size_t k = band.lo + 1; k <= band.hi; ++k) {
        if (spec.psd[k] > out.power) out = {spec.freq[k], spec.psd[k]};
    }
    return out;
}

Real band_median(const Spectrum& spec, Real nu_lo, Real nu_hi) {
    const BinRange band = band_bins(spec, nu_lo, nu_hi);
    return median(std::vector<Real>(spec.psd.begin() + static_cast<std::ptrdiff_t>(band.lo),
                                    spec.psd.begin() + static_cast<std::ptrdiff_t>(band.hi) + 1));
}

void write_spectrum_csv(std::ostream& os, const Spectrum& spec) {
    os << "nu,psd\n";
    for (std::size_t k = 0; k < spec.freq.size(); ++k) {
        os << format_real(spec.freq[k]) << ',' << format_real(spec.psd[k]) << '\n';
    }
}

nlohmann::ordered_json to_json(const PeakMetrics& m) {
    return {{"nu_peak", m.nu_peak},          {"h_omega", m.h_omega},
            {"delta_omega", m.delta_omega},  {"beta", m.beta},
            {"background", m.background},    {"below_background", m.below_background}};
}

nlohmann::ordered_json to_json(const SnrResult& r) {
    return {{"nu_signal", r.nu_signal},
            {"snr_db", r.snr_db},
            {"peak_power", r.peak_power},
            {"background_power", r.background_power}};
}

}  // namespace optomech
