#pragma once

// Power spectra of mechanical-position traces and the resonance metrics
// derived from them. Frequencies are ordinary frequencies nu = omega / (2 pi)
// in cycles per unit time.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "optomech/model.hpp"
#include "optomech/sde.hpp"

namespace optomech {

enum class Window { Hann, Rectangular };

[[nodiscard]] std::string_view to_string(Window w);
[[nodiscard]] Window window_from_string(std::string_view s);

struct WelchConfig {
    std::size_t segment_len = 16384;
    Real overlap = 0.5;  // fraction of segment_len shared by neighbours
    Window window = Window::Hann;

    bool operator==(const WelchConfig&) const = default;
};

struct Spectrum {
    std::vector<Real> freq;  // 0 .. Nyquist
    std::vector<Real> psd;   // one-sided density
    Real resolution = 0.0;
    std::size_t n_segments = 0;
    /// Window-weighted variance of the detrended segments; equals
    /// sum(psd) * resolution (Parseval).
    Real windowed_variance = 0.0;
};

/// Welch-averaged one-sided PSD. Each segment has its mean removed before
/// windowing. Throws std::invalid_argument when the series is shorter than
/// two segments or contains non-finite values.
[[nodiscard]] Spectrum psd(std::span<const Real> x, Real dt_sample, const WelchConfig& cfg = {});
[[nodiscard]] Spectrum psd(const Trajectory& traj, const WelchConfig& cfg = {});

/// Bin-wise mean of spectra sharing one frequency grid.
[[nodiscard]] Spectrum average_spectra(std::span<const Spectrum> spectra);

struct PeakMetrics {
    Real nu_peak = 0.0;
    Real h_omega = 0.0;      // height above the local background
    Real delta_omega = 0.0;  // full width at half height above background
    Real beta = 0.0;         // nu_peak * h_omega / delta_omega
    Real background = 0.0;
    bool below_background = false;
};

/// Peak in [nu_lo, nu_hi]: argmax of the PSD, background = median of the
/// band with +/-3 bins around the peak excluded, width from linearly
/// interpolated half-height crossings (never less than one bin). A peak
/// that does not rise above the background yields beta = 0 and sets
/// below_background.
[[nodiscard]] PeakMetrics peak_metrics(const Spectrum& spec, Real nu_lo, Real nu_hi);

struct SnrResult {
    Real nu_signal = 0.0;
    Real snr_db = 0.0;
    Real peak_power = 0.0;
    Real background_power = 0.0;
};

/// Peak = max PSD within +/-2 bins of nu_signal; background = median over a
/// 20-bin window around it with the +/-2 core (and DC) excluded.
[[nodiscard]] SnrResult snr_db(const Spectrum& spec, Real nu_signal);

/// Highest PSD value in [nu_lo, nu_hi] and its frequency.
struct BandMax {
    Real nu = 0.0;
    Real power = 0.0;
};
[[nodiscard]] BandMax band_max(const Spectrum& spec, Real nu_lo, Real nu_hi);

/// Median PSD over [nu_lo, nu_hi].
[[nodiscard]] Real band_median(const Spectrum& spec, Real nu_lo, Real nu_hi);

/// CSV `nu,psd`.
void write_spectrum_csv(std::ostream& os, const Spectrum& spec);

[[nodiscard]] nlohmann::ordered_json to_json(const PeakMetrics& m);
[[nodiscard]] nlohmann::ordered_json to_json(const SnrResult& r);

}  // namespace optomech
