#include "optomech/polynomial.hpp"

#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace optomech {

std::vector<Complex> monic_roots(std::span<const Real> c) {
    const auto n = static_cast<Eigen::Index>(c.size());
    if (n == 0) return {};
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        companion(0, j) = -c[static_cast<std::size_t>(j)];
    }
    for (Eigen::Index i = 1; i < n; ++i) {
        companion(i, i - 1) = 1.0;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("companion eigenvalue iteration did not converge");
    }
    std::vector<Complex> roots(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        roots[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
    }
    return roots;
}

std::array<Complex, 4> characteristic_coefficients(const Matrix4c& m) {
    // M_1 = A, c_1 = -tr(A); M_k = A (M_{k-1} + c_{k-1} I), c_k = -tr(M_k)/k.
    // With det(lambda I - A) = lambda^4 + c_1 lambda^3 + ... + c_4.
    std::array<Complex, 4> out{};
    Matrix4c mk = m;
    out[0] = -mk.trace();
    for (int k = 2; k <= 4; ++k) {
        mk = m * (mk + out[static_cast<std::size_t>(k - 2)] * Matrix4c::Identity());
        out[static_cast<std::size_t>(k - 1)] = -mk.trace() / static_cast<Real>(k);
    }
    return out;
}

}  // namespace optomech
