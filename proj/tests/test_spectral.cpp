#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "optomech/spectral.hpp"

using namespace optomech;

namespace {

constexpr Real kTwoPi = 2.0 * std::numbers::pi;

std::vector<Real> white_noise(std::size_t n, Real sigma, std::uint64_t seed) {
    GaussianStream g(seed, 0);
    std::vector<Real> v(n);
    for (auto& e : v) e = sigma * g();
    return v;
}

Spectrum lorentzian_spectrum(Real nu0, Real fwhm, Real height, Real floor, Real res,
                             std::size_t bins) {
    Spectrum s;
    s.resolution = res;
    s.n_segments = 1;
    for (std::size_t k = 0; k < bins; ++k) {
        const Real nu = static_cast<Real>(k) * res;
        const Real u = (nu - nu0) / (0.5 * fwhm);
        s.freq.push_back(nu);
        s.psd.push_back(floor + height / (1.0 + u * u));
    }
    return s;
}

}  // namespace

TEST_CASE("psd: frequency grid") {
    const auto x = white_noise(4096, 1.0, 1);
    const auto s = psd(x, 0.1, WelchConfig{1024, 0.5, Window::Hann});
    CHECK(s.freq.size() == 513);
    CHECK(s.freq.front() == 0.0);
    CHECK(s.freq.back() == doctest::Approx(5.0));  // Nyquist of dt = 0.1
    CHECK(s.resolution == doctest::Approx(10.0 / 1024.0));
    CHECK(s.n_segments == 7);
}

TEST_CASE("psd: white noise level is 2 sigma^2 dt") {
    const Real sigma = 0.7, dt = 0.05;
    const auto x = white_noise(1 << 18, sigma, 9);
    for (Window w : {Window::Hann, Window::Rectangular}) {
        const auto s = psd(x, dt, WelchConfig{1024, 0.5, w});
        const Real mean = std::accumulate(s.psd.begin() + 1, s.psd.end() - 1, 0.0) /
                          static_cast<Real>(s.psd.size() - 2);
        CHECK(mean == doctest::Approx(2.0 * sigma * sigma * dt).epsilon(0.02));
    }
}

TEST_CASE("psd: Parseval holds for the window-weighted variance") {
    const auto x = white_noise(50000, 1.3, 4);
    for (Window w : {Window::Hann, Window::Rectangular}) {
        const auto s = psd(x, 0.2, WelchConfig{2048, 0.25, w});
        const Real area = std::accumulate(s.psd.begin(), s.psd.end(), 0.0) * s.resolution;
        CHECK(area == doctest::Approx(s.windowed_variance).epsilon(1e-10));
        CHECK(s.windowed_variance == doctest::Approx(1.69).epsilon(0.05));
    }
}

TEST_CASE("psd: sinusoid on a bin carries power A^2/2 at its frequency") {
    const std::size_t seg = 4096;
    const Real dt = 0.1;
    const Real res = 1.0 / (dt * static_cast<Real>(seg));
    const Real nu = 200.0 * res;
    const Real amp = 1.7;
    std::vector<Real> x(seg * 8);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp * std::sin(kTwoPi * nu * dt * static_cast<Real>(i)) + 3.0;

    const auto s = psd(x, dt, WelchConfig{seg, 0.5, Window::Hann});
    const auto peak = band_max(s, 0.5 * nu, 1.5 * nu);
    CHECK(peak.nu == doctest::Approx(nu));
    Real power = 0.0;
    for (std::size_t k = 198; k <= 202; ++k) power += s.psd[k] * s.resolution;
    CHECK(power == doctest::Approx(0.5 * amp * amp).epsilon(1e-6));
    CHECK(s.psd[0] < 1e-20);  // mean removed
}

TEST_CASE("psd: amplitude scaling is quadratic") {
    const auto x = white_noise(20000, 1.0, 2);
    std::vector<Real> y(x);
    for (auto& v : y) v *= 3.0;
    const auto a = psd(x, 0.1, WelchConfig{2048, 0.5, Window::Hann});
    const auto b = psd(y, 0.1, WelchConfig{2048, 0.5, Window::Hann});
    for (std::size_t k = 0; k < a.psd.size(); ++k) CHECK(b.psd[k] == doctest::Approx(9.0 * a.psd[k]));
}

TEST_CASE("psd: input validation") {
    const auto x = white_noise(1000, 1.0, 3);
    CHECK_THROWS_AS((void)psd(x, 0.1, WelchConfig{512, 0.5, Window::Hann}), std::invalid_argument);
    std::vector<Real> bad(x);
    bad[10] = std::nan("");
    CHECK_THROWS_AS((void)psd(bad, 0.1, WelchConfig{256, 0.5, Window::Hann}), std::invalid_argument);
    CHECK_THROWS_AS((void)psd(x, 0.1, WelchConfig{256, 1.0, Window::Hann}), std::invalid_argument);
    CHECK_THROWS_AS((void)window_from_string("hamming"), std::invalid_argument);
}

TEST_CASE("average_spectra: bin-wise mean and grid check") {
    const auto a = psd(white_noise(8192, 1.0, 5), 0.1, WelchConfig{1024, 0.5, Window::Hann});
    const auto b = psd(white_noise(8192, 2.0, 6), 0.1, WelchConfig{1024, 0.5, Window::Hann});
    const std::vector<Spectrum> both{a, b};
    const auto m = average_spectra(both);
    for (std::size_t k = 0; k < m.psd.size(); ++k) CHECK(m.psd[k] == doctest::Approx(0.5 * (a.psd[k] + b.psd[k])));
    const auto c = psd(white_noise(8192, 1.0, 7), 0.1, WelchConfig{2048, 0.5, Window::Hann});
    const std::vector<Spectrum> mixed{a, c};
    CHECK_THROWS_AS((void)average_spectra(mixed), std::invalid_argument);
}

TEST_CASE("peak_metrics: recovers a Lorentzian within 2%") {
    const Real res = 1e-4;
    const Real nu0 = 1500 * res;
    const Real fwhm = 0.01, height = 40.0, floor = 0.5;
    const auto s = lorentzian_spectrum(nu0, fwhm, height, floor, res, 5001);
    const auto m = peak_metrics(s, 0.05, 0.5);
    CHECK(m.nu_peak == doctest::Approx(nu0));
    // the median sits on the Lorentzian tail, so it overestimates the floor
    CHECK(m.background >= floor);
    CHECK(m.background < floor + height * std::pow(0.5 * fwhm / 0.1, 2));
    CHECK(m.h_omega == doctest::Approx(height).epsilon(0.02));
    CHECK(m.delta_omega == doctest::Approx(fwhm).epsilon(0.02));
    CHECK(m.beta == doctest::Approx(nu0 * height / fwhm).epsilon(0.02));
    CHECK_FALSE(m.below_background);
}

TEST_CASE("peak_metrics: height and beta scale with the spectrum, width does not") {
    const auto s = lorentzian_spectrum(0.2, 0.02, 10.0, 1.0, 1e-3, 501);
    auto scaled = s;
    for (auto& v : scaled.psd) v *= 7.5;
    const auto a = peak_metrics(s, 0.05, 0.45);
    const auto b = peak_metrics(scaled, 0.05, 0.45);
    CHECK(b.nu_peak == a.nu_peak);
    CHECK(b.delta_omega == doctest::Approx(a.delta_omega));
    CHECK(b.h_omega == doctest::Approx(7.5 * a.h_omega));
    CHECK(b.beta == doctest::Approx(7.5 * a.beta));
}

TEST_CASE("peak_metrics: width never drops below one bin") {
    Spectrum s = lorentzian_spectrum(0.2, 1e-6, 0.0, 1.0, 1e-2, 51);
    s.psd[20] = 100.0;
    const auto m = peak_metrics(s, 0.05, 0.45);
    CHECK(m.delta_omega >= s.resolution);
    CHECK(m.nu_peak == doctest::Approx(0.2));
}

TEST_CASE("peak_metrics: flat spectrum is flagged below background") {
    const auto s = lorentzian_spectrum(0.2, 0.01, 0.0, 2.0, 1e-3, 501);
    const auto m = peak_metrics(s, 0.05, 0.45);
    CHECK(m.below_background);
    CHECK(m.beta == 0.0);
    CHECK_THROWS_AS((void)peak_metrics(s, 0.1, 0.103), std::invalid_argument);
    CHECK_THROWS_AS((void)peak_metrics(s, 0.3, 0.2), std::invalid_argument);
}

TEST_CASE("snr_db: synthetic line over a flat floor") {
    auto s = lorentzian_spectrum(0.0, 1.0, 0.0, 2.0, 1e-3, 501);
    s.psd[80] = 200.0;
    const auto r = snr_db(s, 0.08);
    CHECK(r.snr_db == doctest::Approx(20.0));
    CHECK(r.peak_power == 200.0);
    CHECK(r.background_power == 2.0);
    CHECK_THROWS_AS((void)snr_db(s, 0.0), std::invalid_argument);
}

TEST_CASE("snr_db: noise alone sits near 0 dB") {
    const auto x = white_noise(1 << 18, 1.0, 12);
    const auto s = psd(x, 0.1, WelchConfig{4096, 0.5, Window::Hann});
    for (Real nu : {0.05 / kTwoPi, 0.5, 1.7, 3.3}) {
        const auto r = snr_db(s, nu);
        CHECK(std::abs(r.snr_db) < 1.5);
    }
}

TEST_CASE("snr_db: forcing at omega_f shows up at omega_f / (2 pi)") {
    // Undriven cavity, so x is a forced linear oscillator.
    SystemParams sys;
    sys.e_d = 0.0;
    const SignalParams sig{1.0, 0.05};
    IntegrationConfig cfg;
    cfg.dt = 1e-2;
    cfg.sample_stride = 10;
    cfg.t_transient = 200.0;
    cfg.t_total = 3400.0;
    const auto tr = integrate(sys, sig, NoiseParams{0.01, 3}, DynamicalState{}, cfg);
    const auto s = psd(tr, WelchConfig{16384, 0.5, Window::Hann});
    const auto peak = band_max(s, 0.002, 0.05);
    CHECK(std::abs(peak.nu - 0.05 / kTwoPi) <= s.resolution);
    CHECK(snr_db(s, 0.05 / kTwoPi).snr_db > 20.0);
}

TEST_CASE("band helpers and CSV") {
    auto s = lorentzian_spectrum(0.0, 1.0, 0.0, 1.0, 0.1, 11);
    s.psd[3] = 5.0;
    const auto bm = band_max(s, 0.15, 0.55);
    CHECK(bm.nu == doctest::Approx(0.3));
    CHECK(bm.power == 5.0);
    CHECK(band_median(s, 0.15, 0.55) == 1.0);
    std::ostringstream os;
    write_spectrum_csv(os, s);
    CHECK(os.str().rfind("nu,psd\n0,1\n0.1,1\n0.2,1\n0.30000000000000004,5\n", 0) == 0);
    const auto j = to_json(peak_metrics(lorentzian_spectrum(0.2, 0.02, 10.0, 1.0, 1e-3, 501), 0.05, 0.45));
    CHECK(j.contains("beta"));
    CHECK(j.begin().key() == "nu_peak");
}
