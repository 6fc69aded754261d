// Backward cost-to-go factorization and forward recursions for the
// equality-constrained problem, plus the composed serial solver.
//
// Backward pass, t = N-1,...,0, starting from a given terminal P:
//   F = Qx + A' P+ A
//   G = Qu + B' P+ B          (factored and stored)
//   H = Qxu + A' P+ B
//   solve G K = -H'
//   P = F - K' G K            (symmetrized)
//
// Forward pass from x0:
//   u_t = K_{t+1} x_t,  x_{t+1} = A_t x_t + B_t u_t,  lambda_t = P_t x_t.
//
// Reduced problems produced by batch condensation can carry singular input
// costs; GFactorPolicy::AllowSingular switches the G solve to a min-norm
// eigendecomposition pseudo-inverse for that case.
#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "parric/problem.hpp"

namespace parric {

enum class GFactorPolicy {
  RequirePositiveDefinite,  // Cholesky; throws NotPositiveDefinite on failure
  AllowSingular,            // eigendecomposition pseudo-inverse, min-norm K
};

/// Stored factorization of one G block, reusable for any number of
/// right-hand sides.
class GFactor {
 public:
  GFactor() = default;

  GFactor(const Matrix& g, GFactorPolicy policy, int stage)
      : n_(static_cast<int>(g.rows())) {
    if (g.cols() != n_) throw DimensionMismatch("G must be square");
    if (n_ == 0) return;  // zero controls: nothing to factor
    if (policy == GFactorPolicy::RequirePositiveDefinite) {
      cholesky_ = true;
      llt_.compute(g);
      const bool pivots_ok =
          llt_.info() == Eigen::Success &&
          (llt_.matrixLLT().diagonal().array() > 0.0).all() &&
          llt_.matrixLLT().diagonal().allFinite();
      if (!pivots_ok) throw NotPositiveDefinite(stage);
      rank_ = n_;
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> es(detail::symmetrize(g));
      vecs_ = es.eigenvectors();
      const Vector& vals = es.eigenvalues();
      const double scale = vals.cwiseAbs().maxCoeff();
      const double threshold = kRankTol * scale;
      inv_vals_ = Vector::Zero(n_);
      for (int i = 0; i < n_; ++i) {
        if (vals[i] > threshold && scale > 0.0) {
          inv_vals_[i] = 1.0 / vals[i];
          ++rank_;
        }
      }
    }
  }

  /// Solves G X = rhs. With AllowSingular this is the min-norm solution;
  /// right-hand sides are assumed to lie in the range of G.
  Matrix solve(const Matrix& rhs) const {
    if (rhs.rows() != n_) throw DimensionMismatch("G solve: rhs rows");
    if (n_ == 0) return Matrix(0, rhs.cols());
    if (cholesky_) return llt_.solve(rhs);
    return vecs_ * (inv_vals_.asDiagonal() * (vecs_.transpose() * rhs));
  }

  int rank() const { return rank_; }
  int size() const { return n_; }

 private:
  static constexpr double kRankTol = 1e-10;

  Eigen::LLT<Matrix> llt_;
  Matrix vecs_;
  Vector inv_vals_;
  int n_ = 0;
  int rank_ = 0;
  bool cholesky_ = false;
};

/// Output of the backward pass. Entry t of K, G, H and Gfact belongs to
/// stage t (the recursion's index t+1); P has one extra entry for the
/// terminal matrix.
struct RiccatiFactorization {
  std::vector<Matrix> P;        // 0..N, symmetric PSD
  std::vector<Matrix> K;        // 0..N-1, feedback gains
  std::vector<Matrix> G;        // 0..N-1
  std::vector<Matrix> H;        // 0..N-1, kept for diagnostics
  std::vector<GFactor> Gfact;   // 0..N-1
};

struct Trajectory {
  std::vector<Vector> x;       // 0..N
  std::vector<Vector> u;       // 0..N-1
  std::vector<Vector> lambda;  // 0..N, dynamics multipliers
};

/// Multipliers of the bound constraints held active, one vector per stage
/// with an entry per fixed control index.
struct DualMultipliers {
  std::vector<Vector> mu;
};

struct Solution {
  std::vector<Vector> x;
  std::vector<Vector> u;
  std::vector<Vector> lambda;
  std::vector<Vector> mu;  // empty unless produced by the bound-constrained solver
  double objective = 0.0;
};

inline RiccatiFactorization riccati_factorize(
    std::span<const StageData> stages, const Matrix& P_terminal,
    GFactorPolicy policy = GFactorPolicy::RequirePositiveDefinite) {
  const int N = static_cast<int>(stages.size());
  const int nx = N > 0 ? stages[0].nx() : static_cast<int>(P_terminal.rows());
  if (P_terminal.rows() != nx || P_terminal.cols() != nx)
    throw DimensionMismatch("terminal cost must be nx x nx");

  RiccatiFactorization f;
  f.P.resize(static_cast<std::size_t>(N) + 1);
  f.K.resize(static_cast<std::size_t>(N));
  f.G.resize(static_cast<std::size_t>(N));
  f.H.resize(static_cast<std::size_t>(N));
  f.Gfact.resize(static_cast<std::size_t>(N));

  f.P[static_cast<std::size_t>(N)] = detail::symmetrize(P_terminal);
  for (int t = N - 1; t >= 0; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const StageData& s = stages[ti];
    const Matrix& Pn = f.P[ti + 1];
    const Matrix AtP = s.A.transpose() * Pn;
    const Matrix F = s.Qx + AtP * s.A;
    f.G[ti] = detail::symmetrize(s.Qu + s.B.transpose() * Pn * s.B);
    f.H[ti] = s.Qxu + AtP * s.B;
    f.Gfact[ti] = GFactor(f.G[ti], policy, t);
    f.K[ti] = f.Gfact[ti].solve(-f.H[ti].transpose());
    f.P[ti] =
        detail::symmetrize(F - f.K[ti].transpose() * f.G[ti] * f.K[ti]);
  }
  return f;
}

inline RiccatiFactorization riccati_factorize(
    const MpcProblem& p, const Matrix& P_terminal,
    GFactorPolicy policy = GFactorPolicy::RequirePositiveDefinite) {
  check_dimensions(p);
  return riccati_factorize(std::span<const StageData>(p.stages), P_terminal,
                           policy);
}

inline Trajectory forward_recursion(std::span<const StageData> stages,
                                    const RiccatiFactorization& f,
                                    const Vector& x0) {
  const int N = static_cast<int>(stages.size());
  if (f.K.size() != stages.size() || f.P.size() != stages.size() + 1)
    throw DimensionMismatch("factorization does not match stage count");
  if (N > 0 && x0.size() != stages[0].nx())
    throw DimensionMismatch("x0 has wrong dimension");

  Trajectory traj;
  traj.x.resize(static_cast<std::size_t>(N) + 1);
  traj.u.resize(static_cast<std::size_t>(N));
  traj.lambda.resize(static_cast<std::size_t>(N) + 1);

  traj.x[0] = x0;
  for (int t = 0; t < N; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const StageData& s = stages[ti];
    traj.u[ti] = f.K[ti] * traj.x[ti];
    traj.x[ti + 1] = s.A * traj.x[ti] + s.B * traj.u[ti];
    traj.lambda[ti] = f.P[ti] * traj.x[ti];
  }
  traj.lambda[static_cast<std::size_t>(N)] =
      f.P[static_cast<std::size_t>(N)] * traj.x[static_cast<std::size_t>(N)];
  return traj;
}

inline Trajectory forward_recursion(const MpcProblem& p,
                                    const RiccatiFactorization& f,
                                    const Vector& x0) {
  return forward_recursion(std::span<const StageData>(p.stages), f, x0);
}

inline double objective_value(std::span<const StageData> stages,
                              const Matrix& QxN,
                              const std::vector<Vector>& x,
                              const std::vector<Vector>& u) {
  const std::size_t N = stages.size();
  if (x.size() != N + 1 || u.size() != N)
    throw DimensionMismatch("trajectory length does not match horizon");
  double value = 0.0;
  for (std::size_t t = 0; t < N; ++t) {
    const StageData& s = stages[t];
    value += 0.5 * (x[t].dot(s.Qx * x[t]) + u[t].dot(s.Qu * u[t])) +
             x[t].dot(s.Qxu * u[t]);
  }
  value += 0.5 * x[N].dot(QxN * x[N]);
  return value;
}

inline double objective_value(const MpcProblem& p, const Trajectory& traj) {
  return objective_value(std::span<const StageData>(p.stages), p.QxN, traj.x,
                         traj.u);
}

/// Factorizes with the problem's own terminal cost and rolls the solution
/// forward from the problem's initial state.
inline Solution solve_serial(const MpcProblem& p) {
  const RiccatiFactorization f = riccati_factorize(p, p.QxN);
  Trajectory traj = forward_recursion(p, f, p.x0);
  Solution sol;
  sol.objective = objective_value(p, traj);
  sol.x = std::move(traj.x);
  sol.u = std::move(traj.u);
  sol.lambda = std::move(traj.lambda);
  return sol;
}

namespace detail {

// Complement of `fixed` in 0..nu-1. `fixed` must be sorted, unique and in
// range, otherwise IndexError.
inline std::vector<int> free_indices(const std::vector<int>& fixed, int nu,
                                     int stage) {
  std::vector<int> free;
  free.reserve(static_cast<std::size_t>(nu));
  std::size_t k = 0;
  for (int j = 0; j < nu; ++j) {
    if (k < fixed.size() && fixed[k] == j) {
      ++k;
    } else {
      free.push_back(j);
    }
  }
  if (k != fixed.size())
    throw IndexError("fixed control indices out of range or unsorted at stage " +
                     std::to_string(stage));
  return free;
}

}  // namespace detail

/// Multipliers of the fixed control bounds, evaluated along a trajectory
/// that solves the problem with those controls removed:
///   mu_t = Qxu_v' x_t + B_v' lambda_{t+1} + Qu_{free,v}' u_t
/// where the v subscript selects the fixed columns of the original stage
/// matrices and u_t holds the retained (free) controls.
inline DualMultipliers dual_recursion(
    const BoundConstrainedProblem& q,
    const std::vector<std::vector<int>>& fixed, const Trajectory& traj) {
  const int N = q.base.N();
  if (static_cast<int>(fixed.size()) != N)
    throw IndexError("fixed index sets must cover every stage");
  if (traj.x.size() != static_cast<std::size_t>(N) + 1 ||
      traj.lambda.size() != static_cast<std::size_t>(N) + 1 ||
      traj.u.size() != static_cast<std::size_t>(N))
    throw DimensionMismatch("trajectory length does not match horizon");

  DualMultipliers duals;
  duals.mu.resize(static_cast<std::size_t>(N));
  for (int t = 0; t < N; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const StageData& s = q.base.stages[ti];
    const std::vector<int>& v = fixed[ti];
    const std::vector<int> free = detail::free_indices(v, s.nu(), t);
    if (traj.u[ti].size() != static_cast<Eigen::Index>(free.size()))
      throw DimensionMismatch("free control count mismatch at stage " +
                              std::to_string(t));
    const Matrix Bv = s.B(Eigen::all, v);
    const Matrix Qxv = s.Qxu(Eigen::all, v);
    const Matrix Quv = s.Qu(free, v);
    duals.mu[ti] = Qxv.transpose() * traj.x[ti] +
                   Bv.transpose() * traj.lambda[ti + 1] +
                   Quv.transpose() * traj.u[ti];
  }
  return duals;
}

// ---------------------------------------------------------------------------
// Solution comparison helpers

namespace detail {

inline double max_abs(const Vector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

inline double rel_diff(const std::vector<Vector>& a,
                       const std::vector<Vector>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size())
      return std::numeric_limits<double>::infinity();
    num = std::max(num, max_abs(a[i] - b[i]));
    den = std::max(den, max_abs(b[i]));
  }
  return num / (1.0 + den);
}

}  // namespace detail

/// Largest relative deviation between two solutions over x, u and lambda.
inline double solution_rel_diff(const Solution& a, const Solution& b) {
  double d = detail::rel_diff(a.x, b.x);
  d = std::max(d, detail::rel_diff(a.u, b.u));
  d = std::max(d, detail::rel_diff(a.lambda, b.lambda));
  return d;
}

}  // namespace parric
