// Dense reference machinery: explicit KKT assembly and solve, residual
// checks, and the stacked closed-loop batch matrices used to verify the
// condensation identities. Everything here exists for correctness checking,
// not speed, and deliberately shares no code path with the recursive
// solvers.
//
// Multiplier convention: lambda_N = QxN x_N and, for t < N,
//   Qx x_t + Qxu u_t + A' lambda_{t+1} - lambda_t = 0
//   Qxu' x_t + Qu u_t + B' lambda_{t+1} = 0,
// matching the forward recursion's lambda_t = P_t x_t. The assembled
// symmetric system stores nu = -lambda in its dual block.
#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "parric/condense.hpp"
#include "parric/riccati.hpp"

namespace parric {

struct KktSystem {
  Matrix lhs;            // symmetric indefinite, block banded
  Vector rhs;
  std::vector<int> x_offset;    // 0..N
  std::vector<int> u_offset;    // 0..N-1
  std::vector<int> dual_offset; // 0..N, block for nu = -lambda
  int n_primal = 0;
  int n_total = 0;
};

inline KktSystem assemble_kkt(const MpcProblem& p) {
  check_dimensions(p);
  const int N = p.N();
  const int nx = p.nx();

  KktSystem sys;
  sys.x_offset.resize(static_cast<std::size_t>(N) + 1);
  sys.u_offset.resize(static_cast<std::size_t>(N));
  sys.dual_offset.resize(static_cast<std::size_t>(N) + 1);

  int off = 0;
  for (int t = 0; t < N; ++t) {
    sys.x_offset[static_cast<std::size_t>(t)] = off;
    off += nx;
    sys.u_offset[static_cast<std::size_t>(t)] = off;
    off += p.stages[static_cast<std::size_t>(t)].nu();
  }
  sys.x_offset[static_cast<std::size_t>(N)] = off;
  off += nx;
  sys.n_primal = off;
  for (int t = 0; t <= N; ++t) {
    sys.dual_offset[static_cast<std::size_t>(t)] = off;
    off += nx;
  }
  sys.n_total = off;

  sys.lhs = Matrix::Zero(sys.n_total, sys.n_total);
  sys.rhs = Vector::Zero(sys.n_total);

  // Cost Hessian blocks.
  for (int t = 0; t < N; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const StageData& s = p.stages[ti];
    const int xo = sys.x_offset[ti];
    const int uo = sys.u_offset[ti];
    const int nu = s.nu();
    sys.lhs.block(xo, xo, nx, nx) = s.Qx;
    sys.lhs.block(xo, uo, nx, nu) = s.Qxu;
    sys.lhs.block(uo, xo, nu, nx) = s.Qxu.transpose();
    sys.lhs.block(uo, uo, nu, nu) = s.Qu;
  }
  sys.lhs.block(sys.x_offset.back(), sys.x_offset.back(), nx, nx) = p.QxN;

  // Constraint rows: x_0 = x0 and x_{t+1} - A x_t - B u_t = 0, mirrored
  // into the corresponding columns.
  auto place = [&](int row, int col, const Matrix& blockval) {
    sys.lhs.block(row, col, blockval.rows(), blockval.cols()) = blockval;
    sys.lhs.block(col, row, blockval.cols(), blockval.rows()) =
        blockval.transpose();
  };
  place(sys.dual_offset[0], sys.x_offset[0], Matrix::Identity(nx, nx));
  sys.rhs.segment(sys.dual_offset[0], nx) = p.x0;
  for (int t = 0; t < N; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const StageData& s = p.stages[ti];
    const int row = sys.dual_offset[ti + 1];
    place(row, sys.x_offset[ti], -s.A);
    place(row, sys.u_offset[ti], -s.B);
    place(row, sys.x_offset[ti + 1], Matrix::Identity(nx, nx));
  }
  return sys;
}

/// Dense factorization of the full KKT system. Restricted to modest sizes;
/// this is the correctness oracle, not a production path.
inline Solution solve_kkt_dense(const MpcProblem& p) {
  check_dimensions(p);
  const int N = p.N();
  const int nx = p.nx();
  int max_nu = 0;
  for (const StageData& s : p.stages) max_nu = std::max(max_nu, s.nu());
  if (static_cast<long>(N) * (nx + max_nu) > 5000)
    throw std::invalid_argument("problem too large for the dense solver");

  const KktSystem sys = assemble_kkt(p);
  Eigen::PartialPivLU<Matrix> lu(sys.lhs);
  const Vector z = lu.solve(sys.rhs);
  const double residual = (sys.lhs * z - sys.rhs).cwiseAbs().maxCoeff();
  if (!z.allFinite() ||
      residual > 1e-6 * (1.0 + sys.rhs.cwiseAbs().maxCoeff()))
    throw SingularKkt("KKT matrix is singular or severely ill conditioned");

  Solution sol;
  sol.x.resize(static_cast<std::size_t>(N) + 1);
  sol.u.resize(static_cast<std::size_t>(N));
  sol.lambda.resize(static_cast<std::size_t>(N) + 1);
  for (int t = 0; t <= N; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    sol.x[ti] = z.segment(sys.x_offset[ti], nx);
    sol.lambda[ti] = -z.segment(sys.dual_offset[ti], nx);
  }
  for (int t = 0; t < N; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    sol.u[ti] = z.segment(sys.u_offset[ti],
                          p.stages[ti].nu());
  }
  sol.objective =
      objective_value(std::span<const StageData>(p.stages), p.QxN, sol.x,
                      sol.u);
  return sol;
}

struct ResidualReport {
  double stationarity = 0.0;       // max-norm over all stationarity rows
  double feasibility = 0.0;        // max-norm over dynamics/initial rows
  std::vector<double> stage_worst; // worst row magnitude per stage, 0..N
};

/// Evaluates the first-order conditions at a candidate solution.
inline ResidualReport kkt_residual(const MpcProblem& p, const Solution& s) {
  check_dimensions(p);
  const int N = p.N();
  if (s.x.size() != static_cast<std::size_t>(N) + 1 ||
      s.u.size() != static_cast<std::size_t>(N) ||
      s.lambda.size() != static_cast<std::size_t>(N) + 1)
    throw DimensionMismatch("candidate has wrong trajectory lengths");

  ResidualReport report;
  report.stage_worst.assign(static_cast<std::size_t>(N) + 1, 0.0);
  auto account = [&](int stage, double value, bool stationary) {
    if (stationary)
      report.stationarity = std::max(report.stationarity, value);
    else
      report.feasibility = std::max(report.feasibility, value);
    auto& worst = report.stage_worst[static_cast<std::size_t>(stage)];
    worst = std::max(worst, value);
  };

  account(0, detail::max_abs(s.x[0] - p.x0), false);
  for (int t = 0; t < N; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const StageData& st = p.stages[ti];
    const Vector stat_x = st.Qx * s.x[ti] + st.Qxu * s.u[ti] +
                          st.A.transpose() * s.lambda[ti + 1] - s.lambda[ti];
    const Vector stat_u = st.Qxu.transpose() * s.x[ti] + st.Qu * s.u[ti] +
                          st.B.transpose() * s.lambda[ti + 1];
    const Vector dyn = s.x[ti + 1] - st.A * s.x[ti] - st.B * s.u[ti];
    account(t, detail::max_abs(stat_x), true);
    account(t, detail::max_abs(stat_u), true);
    account(t, detail::max_abs(dyn), false);
  }
  const auto Ni = static_cast<std::size_t>(N);
  account(N, detail::max_abs(p.QxN * s.x[Ni] - s.lambda[Ni]), true);
  return report;
}

// ---------------------------------------------------------------------------
// Stacked batch matrices

/// Explicit closed-loop data of one preliminary-terminal batch:
///   x_stack = Abar x_0 + Bbar ubar, S = last block row of Bbar,
///   Qbar = blkdiag(G_1, ..., G_N).
/// Abar's first block is the identity and Bbar's first block row is zero.
struct StackedBatchMatrices {
  Matrix Abar;       // (N+1) nx x nx
  Matrix Bbar;       // (N+1) nx x sum(nu)
  Matrix S;          // nx x sum(nu)
  Matrix Qbar_ubar;  // sum(nu) x sum(nu), block diagonal, PD
};

inline StackedBatchMatrices stacked_batch_matrices(
    const Batch& b, const RiccatiFactorization& prelim) {
  const int N = b.length();
  const int nx = b.nx();
  if (prelim.K.size() != static_cast<std::size_t>(N))
    throw DimensionMismatch("factorization does not match batch length");

  int total_nu = 0;
  std::vector<int> u_off(static_cast<std::size_t>(N));
  for (int t = 0; t < N; ++t) {
    u_off[static_cast<std::size_t>(t)] = total_nu;
    total_nu += b.stages[static_cast<std::size_t>(t)].nu();
  }

  StackedBatchMatrices m;
  m.Abar = Matrix::Zero((N + 1) * nx, nx);
  m.Bbar = Matrix::Zero((N + 1) * nx, total_nu);
  m.Qbar_ubar = Matrix::Zero(total_nu, total_nu);

  m.Abar.topRows(nx) = Matrix::Identity(nx, nx);
  for (int t = 0; t < N; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const StageData& s = b.stages[ti];
    const Matrix closed = s.A + s.B * prelim.K[ti];
    m.Abar.middleRows((t + 1) * nx, nx) =
        closed * m.Abar.middleRows(t * nx, nx);
    m.Bbar.middleRows((t + 1) * nx, nx) =
        closed * m.Bbar.middleRows(t * nx, nx);
    m.Bbar.block((t + 1) * nx, u_off[ti], nx, s.nu()) = s.B;
    m.Qbar_ubar.block(u_off[ti], u_off[ti], s.nu(), s.nu()) = prelim.G[ti];
  }
  m.S = m.Bbar.bottomRows(nx);
  return m;
}

/// Residuals of the condensation identities for one batch, all relative
/// max-norms: B_hat against S Qbar^-1 S', A_hat against the last block row
/// of Abar, Qx_hat against P_0 of the preliminary factorization.
struct ReductionIdentityReport {
  double b_hat_residual = 0.0;
  double a_hat_residual = 0.0;
  double qx_hat_residual = 0.0;
  int rank_Qu = 0;
  int nx = 0;
};

namespace detail {

inline double rel_matrix_diff(const Matrix& a, const Matrix& b) {
  const double den = b.size() == 0 ? 0.0 : b.cwiseAbs().maxCoeff();
  const double num = a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
  return num / (1.0 + den);
}

}  // namespace detail

inline ReductionIdentityReport check_reduction_identities(const Batch& b) {
  Batch prelim_batch = b;
  prelim_batch.known_terminal.reset();
  const CondensedBatch c = condense_batch(prelim_batch);
  const StackedBatchMatrices m =
      stacked_batch_matrices(prelim_batch, c.prelim);

  ReductionIdentityReport report;
  report.nx = b.nx();
  report.rank_Qu = c.rank_Qu();
  if (m.Qbar_ubar.rows() > 0) {
    const Matrix dense_B =
        m.S * Eigen::LLT<Matrix>(m.Qbar_ubar).solve(m.S.transpose());
    report.b_hat_residual = detail::rel_matrix_diff(c.B_hat, dense_B);
  } else {
    report.b_hat_residual =
        detail::rel_matrix_diff(c.B_hat, Matrix::Zero(report.nx, report.nx));
  }
  report.a_hat_residual =
      detail::rel_matrix_diff(c.A_hat, m.Abar.bottomRows(report.nx));
  report.qx_hat_residual = detail::rel_matrix_diff(c.Qx_hat, c.prelim.P[0]);
  return report;
}

}  // namespace parric
