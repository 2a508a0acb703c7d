#include "optomech/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace optomech {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw std::invalid_argument(what);
    }
}

}  // namespace

void validate(const SystemParams& sys) {
    require(std::isfinite(sys.g) && sys.g >= 0.0, "g must be finite and >= 0");
    require(std::isfinite(sys.kappa) && sys.kappa > 0.0, "kappa must be finite and > 0");
    require(std::isfinite(sys.gamma_m) && sys.gamma_m >= 0.0, "gamma_m must be finite and >= 0");
    require(std::isfinite(sys.delta), "delta must be finite");
    require(std::isfinite(sys.e_d) && sys.e_d >= 0.0, "e_d must be finite and >= 0");
}

void validate(const SignalParams& sig) {
    require(std::isfinite(sig.f_s) && sig.f_s >= 0.0, "f_s must be finite and >= 0");
    require(std::isfinite(sig.omega_f) && sig.omega_f > 0.0, "omega_f must be finite and > 0");
}

void validate(const NoiseParams& noise) {
    require(std::isfinite(noise.d_m) && noise.d_m >= 0.0, "d_m must be finite and >= 0");
}

bool is_finite(const DynamicalState& s) {
    return std::isfinite(s.a.real()) && std::isfinite(s.a.imag()) && std::isfinite(s.x) &&
           std::isfinite(s.p);
}

NoiseAmplitude diffusion(const NoiseParams& noise) {
    return NoiseAmplitude{0.0, 0.0, std::sqrt(2.0 * noise.d_m)};
}

}  // namespace optomech
