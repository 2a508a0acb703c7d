#pragma once

// Mean-field equations of motion for a driven optomechanical cavity.
//
// All quantities are dimensionless: rates are in units of the mechanical
// frequency omega_m (fixed to 1) and time in units of 1/omega_m.

#include <cmath>
#include <complex>

namespace optomech {

using Real = double;
using Complex = std::complex<Real>;

/// Mechanical frequency. Every rate in the library is expressed in this unit.
inline constexpr Real kOmegaM = 1.0;

struct SystemParams {
    Real g = 0.21;        // optomechanical coupling
    Real kappa = 1.0;     // optical decay rate
    Real gamma_m = 0.25;  // mechanical decay rate
    Real delta = -1.38;   // detuning omega_c - omega_d (signed)
    Real e_d = 2.85;      // drive amplitude, real and non-negative

    bool operator==(const SystemParams&) const = default;
};

/// Periodic force F_s cos(omega_f t) on the mechanics. f_s == 0 means no signal.
struct SignalParams {
    Real f_s = 0.0;
    Real omega_f = 0.05;

    bool operator==(const SignalParams&) const = default;
};

/// Thermal noise on the mechanical momentum, <xi(t) xi(t')> = 2 d_m delta(t - t').
struct NoiseParams {
    Real d_m = 0.0;
    unsigned long long seed = 0;

    bool operator==(const NoiseParams&) const = default;
};

struct DynamicalState {
    Complex a{0.0, 0.0};  // optical amplitude
    Real x = 0.0;         // mechanical position
    Real p = 0.0;         // mechanical momentum

    bool operator==(const DynamicalState&) const = default;
};

/// Time derivative of a DynamicalState; same layout.
struct StateDerivative {
    Complex da{0.0, 0.0};
    Real dx = 0.0;
    Real dp = 0.0;
};

/// Additive noise amplitudes per component: a Wiener increment dW adds
/// amplitude * dW to that component.
struct NoiseAmplitude {
    Real a = 0.0;
    Real x = 0.0;
    Real p = 0.0;
};

/// Throws std::invalid_argument when g < 0, kappa <= 0, gamma_m < 0,
/// e_d < 0 or any field is non-finite.
void validate(const SystemParams& sys);
void validate(const SignalParams& sig);
void validate(const NoiseParams& noise);

[[nodiscard]] bool is_finite(const DynamicalState& s);

/// Deterministic vector field:
///   da/dt = -(-i delta + kappa/2 - i g x) a - e_d
///   dx/dt = omega_m p
///   dp/dt = -gamma_m p - omega_m x + g |a|^2 - f_s cos(omega_f t)
/// The conjugate amplitude equation is implied and never evaluated.
[[nodiscard]] inline StateDerivative drift(const DynamicalState& s, Real t,
                                           const SystemParams& sys, const SignalParams& sig) {
    // Real arithmetic; this sits in the integrator's inner loop.
    const Real ar = s.a.real();
    const Real ai = s.a.imag();
    const Real eff = sys.delta + sys.g * s.x;
    const Real half_kappa = 0.5 * sys.kappa;

    StateDerivative d;
    d.da = Complex{-half_kappa * ar - eff * ai - sys.e_d, eff * ar - half_kappa * ai};
    d.dx = kOmegaM * s.p;
    d.dp = -sys.gamma_m * s.p - kOmegaM * s.x + sys.g * (ar * ar + ai * ai);
    if (sig.f_s != 0.0) {
        d.dp -= sig.f_s * std::cos(sig.omega_f * t);
    }
    return d;
}

[[nodiscard]] NoiseAmplitude diffusion(const NoiseParams& noise);

}  // namespace optomech
