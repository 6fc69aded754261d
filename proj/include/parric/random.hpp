// Deterministic generator of random stable LTI test problems.
#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

#include "parric/problem.hpp"

namespace parric {
namespace detail {

// 53-bit draw mapped to [-1, 1). Derived from the raw engine output so the
// stream does not depend on the standard library's distribution
// implementation.
inline double uniform_pm1(std::mt19937_64& rng) {
  return 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
}

inline Matrix random_pm1(std::mt19937_64& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = uniform_pm1(rng);
  return m;
}

inline double spectral_radius(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Random time-invariant problem with spectral radius 0.9 dynamics and cost
/// blocks built as M'M plus a small diagonal shift on the input block, so
/// the joint stage cost is PSD and the input cost strictly PD. The same
/// (nx, nu, N, seed) always produces bit-identical output.
inline MpcProblem generate_random_stable(int nx, int nu, int N,
                                         std::uint64_t seed) {
  if (nx < 1) throw std::invalid_argument("nx must be at least 1");
  if (nu < 0) throw std::invalid_argument("nu must be nonnegative");
  if (N < 1) throw std::invalid_argument("N must be at least 1");

  std::mt19937_64 rng(seed);

  Matrix A = detail::random_pm1(rng, nx, nx);
  const double rho = detail::spectral_radius(A);
  if (rho > 1e-12) A *= 0.9 / rho;

  Matrix B = detail::random_pm1(rng, nx, nu);

  const Matrix M = detail::random_pm1(rng, nx + nu, nx + nu);
  Matrix joint = M.transpose() * M;
  StageData stage;
  stage.A = A;
  stage.B = B;
  stage.Qx = joint.topLeftCorner(nx, nx);
  stage.Qxu = joint.topRightCorner(nx, nu);
  stage.Qu = joint.bottomRightCorner(nu, nu) + 1e-3 * Matrix::Identity(nu, nu);

  const Matrix Mn = detail::random_pm1(rng, nx, nx);

  MpcProblem p;
  p.stages.assign(static_cast<std::size_t>(N), stage);
  p.QxN = Mn.transpose() * Mn;
  p.x0 = detail::random_pm1(rng, nx, 1);
  return p;
}

}  // namespace parric
