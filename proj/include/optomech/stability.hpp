#pragma once

// Fixed points, Routh-Hurwitz analysis and Hopf detection for the
// signal-free, noise-free optomechanical system.
//
// The steady mechanical position solves the cubic
//     omega_m (kappa^2/4 + (delta + g x)^2) x - g e_d^2 = 0,
// linearization around a fixed point gives a 4x4 Jacobian whose
// characteristic polynomial lambda^4 + c1 lambda^3 + c2 lambda^2 + c3 lambda + c4
// has closed-form coefficients. Stability follows from the signs of the
// Hurwitz determinants D1..D4.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "optomech/model.hpp"
#include "optomech/polynomial.hpp"

namespace optomech {

/// Eigenvalues with |Re lambda| below this are treated as marginal: neither
/// verdict is trusted there.
inline constexpr Real kMarginBand = 1e-8;

struct SteadyState {
    Real x_s = 0.0;
    Complex alpha_s{0.0, 0.0};
    Real p_s = 0.0;
    /// Part of a coincident pair at a fold (saddle-node) point.
    bool degenerate = false;
};

using CharCoeffs = std::array<Real, 4>;
using HurwitzDeterminants = std::array<Real, 4>;

enum class Verdict { Stable, Unstable };

struct StabilityReport {
    SteadyState steady;
    CharCoeffs c{};
    HurwitzDeterminants d{};
    std::array<Complex, 4> eigenvalues{};  // sorted by descending real part
    Verdict verdict = Verdict::Stable;
    /// max Re(lambda) over the quartic's roots.
    Real max_real_part = 0.0;
    /// |max_real_part| < kMarginBand; the verdict is then a boundary call.
    bool marginal = false;
};

/// Region labels of the (e_d, delta) stability diagram. Ambiguous marks cells
/// that fit none of the four shapes (boundary bands, folds, saddle-type
/// instability of a lone root) instead of guessing.
enum class RegionClass : std::uint8_t {
    MonostableFixed = 0,
    Bistable = 1,
    ParametricInstability = 2,
    Overlap = 3,
    Ambiguous = 4,
};

[[nodiscard]] std::string_view to_string(RegionClass r);
[[nodiscard]] int region_code(RegionClass r);

enum class BifurcationParameter { DriveAmplitude, Detuning };

/// Which fixed point a branch-following computation follows.
enum class Branch { Lowest, Highest };

struct HopfCheck {
    Real d3 = 0.0;
    Real dd3_dmu = 0.0;  // transversality derivative along the branch
    bool d1_positive = false;
    bool d2_positive = false;
    bool c4_positive = false;
    bool d3_vanishes = false;
    bool satisfied = false;
};

struct HopfPoint {
    Real mu = 0.0;  // value of the bifurcation parameter at the crossing
    SystemParams sys;
    SteadyState steady;
    StabilityReport report;
};

/// Hurwitz verdict and eigenvalue verdict disagree outside the margin band.
class InconsistencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The followed fixed point vanished (or jumped) under a small parameter
/// perturbation, typically near a fold.
class BranchTrackingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Value of the steady-state cubic at x (zero at a fixed point).
[[nodiscard]] Real steady_state_residual(const SystemParams& sys, Real x);

[[nodiscard]] Complex steady_amplitude(const SystemParams& sys, Real x_s);

/// All real fixed points, ascending in x_s. Roots come from the companion
/// matrix of the monic cubic followed by one Newton step each.
[[nodiscard]] std::vector<SteadyState> steady_states(const SystemParams& sys);

/// Jacobian in the basis (da, da*, dp, dx).
[[nodiscard]] Matrix4c jacobian(const SystemParams& sys, const SteadyState& ss);

/// Closed-form characteristic coefficients c1..c4.
[[nodiscard]] CharCoeffs char_coeffs(const SystemParams& sys, const SteadyState& ss);

[[nodiscard]] HurwitzDeterminants hurwitz(const CharCoeffs& c);

/// Roots of lambda^4 + c1 lambda^3 + ... + c4, sorted by descending real part.
[[nodiscard]] std::array<Complex, 4> quartic_eigenvalues(const CharCoeffs& c);

/// Throws InconsistencyError when the two verdicts disagree outside the band.
[[nodiscard]] StabilityReport classify_fixed_point(const SystemParams& sys, const SteadyState& ss);

[[nodiscard]] Real parameter_value(const SystemParams& sys, BifurcationParameter which);
[[nodiscard]] SystemParams with_parameter(SystemParams sys, BifurcationParameter which, Real value);

/// Liu's conditions at ss: D3 = 0 (within d3_tolerance), D1 > 0, D2 > 0,
/// c4 > 0 and a non-zero dD3/dmu along the fixed-point branch through ss.
/// Throws BranchTrackingError when the branch cannot be followed.
[[nodiscard]] HopfCheck hopf_condition(const SystemParams& sys, const SteadyState& ss,
                                       BifurcationParameter which, Real d3_tolerance = 1e-9);

/// D3 of the selected branch as the bifurcation parameter is set to mu.
[[nodiscard]] Real branch_d3(const SystemParams& sys, BifurcationParameter which, Real mu,
                             Branch branch);

/// Bisection on D3 of the selected branch over [lo, hi]. Returns nullopt when
/// D3 has the same sign at both ends. Stops once |D3| < 1e-10 or the bracket
/// is exhausted; throws std::runtime_error if the sign change turns out to be
/// a discontinuity (branch switch) rather than a zero.
[[nodiscard]] std::optional<HopfPoint> locate_hopf(const SystemParams& sys,
                                                   BifurcationParameter which, Real lo, Real hi,
                                                   Branch branch = Branch::Highest);

/// Highest fixed point loses stability through D3 <= 0 while D1, D2, c4 > 0.
[[nodiscard]] bool is_hopf_unstable(const StabilityReport& r);

[[nodiscard]] RegionClass classify_region(const SystemParams& sys);

struct GridSpec {
    Real e_d_min = 0.0;
    Real e_d_max = 5.0;
    std::size_t e_d_steps = 200;
    Real delta_min = -3.0;
    Real delta_max = 0.0;
    std::size_t delta_steps = 200;

    bool operator==(const GridSpec&) const = default;
};

/// Node value i of a uniform axis with n points over [lo, hi]; a single
/// point sits at lo.
[[nodiscard]] Real axis_value(Real lo, Real hi, std::size_t n, std::size_t i);

struct ScanCell {
    Real delta = 0.0;
    Real e_d = 0.0;
    RegionClass region = RegionClass::Ambiguous;
    int n_roots = 0;
    std::array<std::optional<Real>, 3> roots;  // low, mid, high
    bool hopf_unstable = false;                // highest root Hopf-unstable
};

/// Row-major: row index over delta, column index over e_d.
struct PlaneScan {
    GridSpec grid;
    std::vector<ScanCell> cells;

    [[nodiscard]] const ScanCell& at(std::size_t delta_index, std::size_t e_d_index) const {
        return cells[delta_index * grid.e_d_steps + e_d_index];
    }
};

/// Classifies every grid node; cells are independent and land in fixed slots,
/// so the result is identical for any worker count. Per-cell failures become
/// Ambiguous cells.
[[nodiscard]] PlaneScan scan_plane(const SystemParams& base, const GridSpec& grid,
                                   unsigned workers = 0);

/// CSV with header `delta,e_d,region_code,n_roots,x_s_low,x_s_mid,x_s_high`.
void write_region_csv(std::ostream& os, const PlaneScan& scan);

}  // namespace optomech
