#pragma once

// Small dense polynomial helpers shared by the stability engine.

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "optomech/model.hpp"

namespace optomech {

using Matrix4c = Eigen::Matrix<Complex, 4, 4>;

/// Roots of the monic polynomial z^n + c[0] z^(n-1) + ... + c[n-1], computed
/// as eigenvalues of its companion matrix. Order is unspecified.
[[nodiscard]] std::vector<Complex> monic_roots(std::span<const Real> c);

/// Coefficients (c1, c2, c3, c4) of det(lambda I - m) = lambda^4 + c1 lambda^3 + ...
/// by the Faddeev-LeVerrier recursion. Uses only matrix products and traces.
[[nodiscard]] std::array<Complex, 4> characteristic_coefficients(const Matrix4c& m);

}  // namespace optomech
