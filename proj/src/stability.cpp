#include "optomech/stability.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Core>

#include "optomech/format.hpp"
#include "optomech/parallel.hpp"

namespace optomech {

namespace {

constexpr Real kRealRootTolerance = 1e-8;   // relative imaginary part cutoff
constexpr Real kDegenerateTolerance = 1e-6;  // relative root separation
constexpr Real kHopfTargetD3 = 1e-10;

Real cubic_derivative(const SystemParams& sys, Real x) {
    const Real g = sys.g;
    const Real d = sys.delta;
    return kOmegaM * (3.0 * g * g * x * x + 4.0 * d * g * x + 0.25 * sys.kappa * sys.kappa + d * d);
}

Real newton_polish(const SystemParams& sys, Real x) {
    // One Newton step, repeated only while it keeps shrinking the residual.
    Real best = x;
    Real best_res = std::abs(steady_state_residual(sys, x));
    for (int it = 0; it < 4 && best_res > 0.0; ++it) {
        const Real slope = cubic_derivative(sys, best);
        if (slope == 0.0 || !std::isfinite(slope)) break;
        const Real candidate = best - steady_state_residual(sys, best) / slope;
        const Real res = std::abs(steady_state_residual(sys, candidate));
        if (!(res < best_res)) break;
        best = candidate;
        best_res = res;
    }
    return best;
}

}  // namespace

std::string_view to_string(RegionClass r) {
    switch (r) {
        case RegionClass::MonostableFixed: return "monostable";
        case RegionClass::Bistable: return "bistable";
        case RegionClass::ParametricInstability: return "parametric_instability";
        case RegionClass::Overlap: return "overlap";
        case RegionClass::Ambiguous: return "ambiguous";
    }
    return "ambiguous";
}

int region_code(RegionClass r) { return static_cast<int>(r); }

Real steady_state_residual(const SystemParams& sys, Real x) {
    const Real eff = sys.delta + sys.g * x;
    return kOmegaM * (0.25 * sys.kappa * sys.kappa + eff * eff) * x - sys.g * sys.e_d * sys.e_d;
}

Complex steady_amplitude(const SystemParams& sys, Real x_s) {
    // alpha_s = -e_d / (-i (delta + g x_s) + kappa/2)
    const Complex denom{0.5 * sys.kappa, -(sys.delta + sys.g * x_s)};
    return -sys.e_d / denom;
}

std::vector<SteadyState> steady_states(const SystemParams& sys) {
    if (sys.e_d == 0.0 || sys.g == 0.0) {
        // no radiation-pressure displacement: the cubic collapses to x = 0
        return {SteadyState{0.0, steady_amplitude(sys, 0.0), 0.0, false}};
    }

    // g^2 x^3 + 2 delta g x^2 + (kappa^2/4 + delta^2) x - g e_d^2 = 0, made monic.
    const Real g2 = sys.g * sys.g;
    const std::array<Real, 3> monic{
        2.0 * sys.delta / sys.g,
        (0.25 * sys.kappa * sys.kappa + sys.delta * sys.delta) / g2,
        -sys.e_d * sys.e_d / sys.g,
    };

    std::vector<Real> xs;
    for (const Complex& z : monic_roots(monic)) {
        if (std::abs(z.imag()) < kRealRootTolerance * std::max<Real>(1.0, std::abs(z))) {
            xs.push_back(newton_polish(sys, z.real()));
        }
    }
    std::sort(xs.begin(), xs.end());

    std::vector<SteadyState> out;
    out.reserve(xs.size());
    for (Real x : xs) {
        out.push_back(SteadyState{x, steady_amplitude(sys, x), 0.0, false});
    }
    for (std::size_t i = 1; i < out.size(); ++i) {
        const Real scale = std::max<Real>(1.0, std::abs(out[i].x_s));
        if (std::abs(out[i].x_s - out[i - 1].x_s) < kDegenerateTolerance * scale) {
            out[i].degenerate = true;
            out[i - 1].degenerate = true;
        }
    }
    return out;
}

Matrix4c jacobian(const SystemParams& sys, const SteadyState& ss) {
    const Real eff = sys.delta + sys.g * ss.x_s;
    const Real hk = 0.5 * sys.kappa;
    const Complex i{0.0, 1.0};
    const Complex a = ss.alpha_s;
    const Complex ac = std::conj(a);

    Matrix4c j = Matrix4c::Zero();
    j(0, 0) = i * eff - hk;
    j(0, 3) = i * sys.g * a;
    j(1, 1) = -i * eff - hk;
    j(1, 3) = -i * sys.g * ac;
    j(2, 0) = sys.g * ac;
    j(2, 1) = sys.g * a;
    j(2, 2) = -sys.gamma_m;
    j(2, 3) = -kOmegaM;
    j(3, 2) = kOmegaM;
    return j;
}

CharCoeffs char_coeffs(const SystemParams& sys, const SteadyState& ss) {
    const Real g = sys.g;
    const Real k = sys.kappa;
    const Real gm = sys.gamma_m;
    const Real w2 = kOmegaM * kOmegaM;
    const Real x = ss.x_s;
    const Real eff = g * x + sys.delta;
    const Real eff2 = eff * eff;
    return {
        gm + k,
        eff2 + 0.25 * k * k + gm * k + w2,
        gm * eff2 + 0.25 * gm * k * k + k * w2,
        (eff2 + 2.0 * g * x * eff + 0.25 * k * k) * w2,
    };
}

HurwitzDeterminants hurwitz(const CharCoeffs& c) {
    const Real d1 = c[0];
    const Real d2 = c[0] * c[1] - c[2];
    const Real d3 = c[2] * d2 - c[0] * c[0] * c[3];
    return {d1, d2, d3, c[3] * d3};
}

std::array<Complex, 4> quartic_eigenvalues(const CharCoeffs& c) {
    const auto roots = monic_roots(c);
    std::array<Complex, 4> out{};
    std::copy(roots.begin(), roots.end(), out.begin());
    std::sort(out.begin(), out.end(), [](const Complex& a, const Complex& b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return out;
}

StabilityReport classify_fixed_point(const SystemParams& sys, const SteadyState& ss) {
    StabilityReport r;
    r.steady = ss;
    r.c = char_coeffs(sys, ss);
    r.d = hurwitz(r.c);
    r.eigenvalues = quartic_eigenvalues(r.c);
    r.max_real_part = r.eigenvalues[0].real();
    r.marginal = std::abs(r.max_real_part) < kMarginBand;

    const bool hurwitz_stable = std::all_of(r.d.begin(), r.d.end(), [](Real v) { return v > 0.0; });
    const bool spectral_stable = r.max_real_part < 0.0;
    if (!r.marginal && hurwitz_stable != spectral_stable) {
        throw InconsistencyError("Hurwitz verdict disagrees with eigenvalue signs at x_s = " +
                                 format_real(ss.x_s) + " (max Re lambda = " +
                                 format_real(r.max_real_part) + ")");
    }
    r.verdict = hurwitz_stable ? Verdict::Stable : Verdict::Unstable;
    return r;
}

Real parameter_value(const SystemParams& sys, BifurcationParameter which) {
    return which == BifurcationParameter::DriveAmplitude ? sys.e_d : sys.delta;
}

SystemParams with_parameter(SystemParams sys, BifurcationParameter which, Real value) {
    if (which == BifurcationParameter::DriveAmplitude) {
        sys.e_d = value;
    } else {
        sys.delta = value;
    }
    return sys;
}

namespace {

Real tracked_d3(const SystemParams& sys, Real x_ref) {
    const auto roots = steady_states(sys);
    if (roots.empty()) {
        throw BranchTrackingError("no fixed point after perturbation");
    }
    const auto nearest = std::min_element(roots.begin(), roots.end(), [&](const auto& a, const auto& b) {
        return std::abs(a.x_s - x_ref) < std::abs(b.x_s - x_ref);
    });
    if (std::abs(nearest->x_s - x_ref) > 1e-3 * std::max<Real>(1.0, std::abs(x_ref))) {
        throw BranchTrackingError("fixed point near x_s = " + format_real(x_ref) +
                                  " disappears under parameter perturbation");
    }
    return hurwitz(char_coeffs(sys, *nearest))[2];
}

}  // namespace

HopfCheck hopf_condition(const SystemParams& sys, const SteadyState& ss, BifurcationParameter which,
                         Real d3_tolerance) {
    const CharCoeffs c = char_coeffs(sys, ss);
    const HurwitzDeterminants d = hurwitz(c);

    HopfCheck h;
    h.d3 = d[2];
    h.d1_positive = d[0] > 0.0;
    h.d2_positive = d[1] > 0.0;
    h.c4_positive = c[3] > 0.0;
    h.d3_vanishes = std::abs(d[2]) <= d3_tolerance;

    const Real mu = parameter_value(sys, which);
    const Real step = 1e-6 * (mu != 0.0 ? std::abs(mu) : 1.0);
    const Real up = tracked_d3(with_parameter(sys, which, mu + step), ss.x_s);
    const Real down = tracked_d3(with_parameter(sys, which, mu - step), ss.x_s);
    h.dd3_dmu = (up - down) / (2.0 * step);

    // The sign of dD3/dmu only encodes the sweep direction; a crossing needs it non-zero.
    const bool transversal = std::isfinite(h.dd3_dmu) && std::abs(h.dd3_dmu) > 1e-9;
    h.satisfied = h.d3_vanishes && h.d1_positive && h.d2_positive && h.c4_positive && transversal;
    return h;
}

Real branch_d3(const SystemParams& sys, BifurcationParameter which, Real mu, Branch branch) {
    const auto roots = steady_states(with_parameter(sys, which, mu));
    const SteadyState& ss = branch == Branch::Lowest ? roots.front() : roots.back();
    return hurwitz(char_coeffs(with_parameter(sys, which, mu), ss))[2];
}

std::optional<HopfPoint> locate_hopf(const SystemParams& sys, BifurcationParameter which, Real lo,
                                     Real hi, Branch branch) {
    Real f_lo = branch_d3(sys, which, lo, branch);
    const Real f_hi = branch_d3(sys, which, hi, branch);
    if (f_lo == 0.0) hi = lo;
    else if (f_hi == 0.0) lo = hi;
    else if ((f_lo > 0.0) == (f_hi > 0.0)) return std::nullopt;

    Real mid = 0.5 * (lo + hi);
    Real f_mid = branch_d3(sys, which, mid, branch);
    for (int it = 0; it < 200 && std::abs(f_mid) >= kHopfTargetD3; ++it) {
        if ((f_mid > 0.0) == (f_lo > 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        const Real next = 0.5 * (lo + hi);
        if (next == lo || next == hi) break;
        mid = next;
        f_mid = branch_d3(sys, which, mid, branch);
    }
    if (std::abs(f_mid) >= kHopfTargetD3) {
        throw std::runtime_error("D3 changes sign discontinuously near " + format_real(mid) +
                                 " (branch switch, not a Hopf crossing)");
    }

    HopfPoint hp;
    hp.mu = mid;
    hp.sys = with_parameter(sys, which, mid);
    const auto roots = steady_states(hp.sys);
    hp.steady = branch == Branch::Lowest ? roots.front() : roots.back();
    hp.report = classify_fixed_point(hp.sys, hp.steady);
    return hp;
}

bool is_hopf_unstable(const StabilityReport& r) {
    return r.verdict == Verdict::Unstable && r.d[0] > 0.0 && r.d[1] > 0.0 && r.c[3] > 0.0 &&
           r.d[2] <= 0.0;
}

RegionClass classify_region(const SystemParams& sys) {
    const auto roots = steady_states(sys);
    std::vector<StabilityReport> reports;
    reports.reserve(roots.size());
    for (const auto& ss : roots) {
        reports.push_back(classify_fixed_point(sys, ss));
        if (reports.back().marginal || ss.degenerate) {
            return RegionClass::Ambiguous;
        }
    }

    const auto stable = [](const StabilityReport& r) { return r.verdict == Verdict::Stable; };
    if (reports.size() == 1) {
        if (stable(reports[0])) return RegionClass::MonostableFixed;
        if (is_hopf_unstable(reports[0])) return RegionClass::ParametricInstability;
        return RegionClass::Ambiguous;
    }
    if (reports.size() == 3 && stable(reports[0]) && !stable(reports[1])) {
        if (stable(reports[2])) return RegionClass::Bistable;
        if (is_hopf_unstable(reports[2])) return RegionClass::Overlap;
    }
    return RegionClass::Ambiguous;
}

Real axis_value(Real lo, Real hi, std::size_t n, std::size_t i) {
    if (n <= 1) return lo;
    return lo + (hi - lo) * static_cast<Real>(i) / static_cast<Real>(n - 1);
}

PlaneScan scan_plane(const SystemParams& base, const GridSpec& grid, unsigned workers) {
    if (grid.e_d_steps == 0 || grid.delta_steps == 0) {
        throw std::invalid_argument("scan resolutions must be positive");
    }
    if (!std::isfinite(grid.e_d_min) || !std::isfinite(grid.e_d_max) ||
        !std::isfinite(grid.delta_min) || !std::isfinite(grid.delta_max)) {
        throw std::invalid_argument("scan ranges must be finite");
    }

    PlaneScan scan;
    scan.grid = grid;
    scan.cells.resize(grid.e_d_steps * grid.delta_steps);

    parallel_for(scan.cells.size(), workers, [&](std::size_t idx) {
        const std::size_t row = idx / grid.e_d_steps;
        const std::size_t col = idx % grid.e_d_steps;
        ScanCell& cell = scan.cells[idx];
        cell.delta = axis_value(grid.delta_min, grid.delta_max, grid.delta_steps, row);
        cell.e_d = axis_value(grid.e_d_min, grid.e_d_max, grid.e_d_steps, col);

        SystemParams sys = base;
        sys.delta = cell.delta;
        sys.e_d = cell.e_d;
        try {
            validate(sys);
            const auto roots = steady_states(sys);
            cell.n_roots = static_cast<int>(roots.size());
            if (roots.size() == 1) {
                cell.roots[0] = roots[0].x_s;
            } else {
                for (std::size_t k = 0; k < roots.size() && k < 3; ++k) cell.roots[k] = roots[k].x_s;
            }
            if (!roots.empty()) {
                cell.hopf_unstable = is_hopf_unstable(classify_fixed_point(sys, roots.back()));
            }
            cell.region = classify_region(sys);
        } catch (const std::exception&) {
            cell.region = RegionClass::Ambiguous;
        }
    });
    return scan;
}

void write_region_csv(std::ostream& os, const PlaneScan& scan) {
    os << "delta,e_d,region_code,n_roots,x_s_low,x_s_mid,x_s_high\n";
    for (const auto& cell : scan.cells) {
        os << format_real(cell.delta) << ',' << format_real(cell.e_d) << ','
           << region_code(cell.region) << ',' << cell.n_roots;
        for (const auto& root : cell.roots) {
            os << ',';
            if (root) os << format_real(*root);
        }
        os << '\n';
    }
}

}  // namespace optomech
