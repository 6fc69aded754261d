// Condensation of one horizon batch into a single reduced stage.
//
// A batch with unknown terminal cost is factored with a preliminary terminal
// P = 0 while accumulating, per stage,
//   solve G M = -B' V+        (same stored G factorization as the K solve)
//   V  = (A' + K' B') V+
//   Qu_hat += M' G M
// which yields the reduced stage
//   Qx_hat = P_0,  Qu_hat,  A_hat = V_0',  B_hat = Qu_hat.
// The reduced input cost has rank at most nx, so downstream solves of these
// stages must tolerate singular G blocks.
//
// A batch whose terminal cost is already known needs no reduced stage: the
// plain backward pass gives Qx_hat = P_0 and the stage part stays absent.
#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "parric/riccati.hpp"

namespace parric {

/// Contiguous slice of a horizon. `known_terminal` empty means the terminal
/// cost is not yet available and the preliminary (zero) terminal is used.
struct Batch {
  std::vector<StageData> stages;
  std::optional<Matrix> known_terminal;

  int length() const { return static_cast<int>(stages.size()); }
  int nx() const {
    return stages.empty() ? static_cast<int>(known_terminal->rows())
                          : stages[0].nx();
  }
};

inline Batch make_batch(const MpcProblem& p, int begin, int end) {
  if (begin < 0 || end > p.N() || begin > end)
    throw IndexError("batch range out of bounds");
  Batch b;
  b.stages.assign(p.stages.begin() + begin, p.stages.begin() + end);
  return b;
}

struct CondensedBatch {
  Matrix Qx_hat;             // P_0 of the batch factorization
  Matrix Qu_hat;             // nx x nx, PSD, possibly singular
  Matrix A_hat;              // nx x nx
  Matrix B_hat;              // equal to Qu_hat by construction
  bool has_stage_part = false;  // false when the terminal cost was known
  RiccatiFactorization prelim;  // the batch factorization used above
  std::vector<Matrix> V;     // 0..N, V[N] = I
  std::vector<Matrix> M;     // 0..N-1

  /// Rank of Qu_hat at the same relative threshold as the singular G solves.
  int rank_Qu(double tol = 1e-10) const {
    if (Qu_hat.size() == 0) return 0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(Qu_hat, Eigen::EigenvaluesOnly);
    const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0;
    return static_cast<int>(
        (es.eigenvalues().array() > tol * scale).count());
  }
};

inline CondensedBatch condense_batch(
    const Batch& b,
    GFactorPolicy policy = GFactorPolicy::RequirePositiveDefinite) {
  const int nx = b.nx();
  const int N = b.length();
  const std::span<const StageData> stages(b.stages);

  CondensedBatch out;
  if (b.known_terminal) {
    if (b.known_terminal->rows() != nx || b.known_terminal->cols() != nx)
      throw DimensionMismatch("known terminal cost must be nx x nx");
    out.prelim = riccati_factorize(stages, *b.known_terminal, policy);
    out.Qx_hat = out.prelim.P[0];
    out.has_stage_part = false;
    return out;
  }

  out.prelim = riccati_factorize(stages, Matrix::Zero(nx, nx), policy);
  out.V.resize(static_cast<std::size_t>(N) + 1);
  out.M.resize(static_cast<std::size_t>(N));
  out.V[static_cast<std::size_t>(N)] = Matrix::Identity(nx, nx);
  Matrix Qu_hat = Matrix::Zero(nx, nx);
  for (int t = N - 1; t >= 0; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const StageData& s = b.stages[ti];
    const Matrix& Vn = out.V[ti + 1];
    out.M[ti] = out.prelim.Gfact[ti].solve(-s.B.transpose() * Vn);
    out.V[ti] = (s.A.transpose() +
                 out.prelim.K[ti].transpose() * s.B.transpose()) *
                Vn;
    Qu_hat = detail::symmetrize(
        Qu_hat + out.M[ti].transpose() * out.prelim.G[ti] * out.M[ti]);
  }
  out.Qx_hat = out.prelim.P[0];
  out.Qu_hat = Qu_hat;
  out.A_hat = out.V[0].transpose();
  out.B_hat = Qu_hat;
  out.has_stage_part = true;
  return out;
}

/// Query for the closed-form remaining cost from state x at stage t_bar,
/// under the perturbed feedback u_t = K_{t+1} x_t + ubar_t.
struct CostToGoQuery {
  int t_bar = 0;
  Vector x;
  std::vector<Vector> ubar;  // one entry per stage t_bar..N-1
};

/// Remaining cost of the preliminary-terminal batch in closed form:
///   1/2 x' P_{t_bar} x + 1/2 sum ubar_t' G_{t+1} ubar_t.
inline double cost_to_go(const Batch& b, const CostToGoQuery& q) {
  if (b.known_terminal)
    throw std::invalid_argument(
        "cost_to_go requires a preliminary-terminal batch");
  const int N = b.length();
  if (q.t_bar < 0 || q.t_bar > N) throw IndexError("t_bar out of range");
  if (static_cast<int>(q.ubar.size()) != N - q.t_bar)
    throw DimensionMismatch("ubar must cover stages t_bar..N-1");

  const RiccatiFactorization f = riccati_factorize(
      std::span<const StageData>(b.stages), Matrix::Zero(b.nx(), b.nx()));
  double value = 0.5 * q.x.dot(f.P[static_cast<std::size_t>(q.t_bar)] * q.x);
  for (int t = q.t_bar; t < N; ++t) {
    const Vector& ub = q.ubar[static_cast<std::size_t>(t - q.t_bar)];
    value += 0.5 * ub.dot(f.G[static_cast<std::size_t>(t)] * ub);
  }
  return value;
}

/// Independent side of the cost-to-go identity: simulate
/// u_t = K_{t+1} x_t + ubar_t from x0 and accumulate the stage costs with a
/// zero terminal cost.
inline double closed_loop_cost(const Batch& b, const Vector& x0,
                               const std::vector<Vector>& ubar) {
  if (b.known_terminal)
    throw std::invalid_argument(
        "closed_loop_cost requires a preliminary-terminal batch");
  const int N = b.length();
  if (static_cast<int>(ubar.size()) != N)
    throw DimensionMismatch("ubar must have one entry per stage");

  const RiccatiFactorization f = riccati_factorize(
      std::span<const StageData>(b.stages), Matrix::Zero(b.nx(), b.nx()));
  Vector x = x0;
  double value = 0.0;
  for (int t = 0; t < N; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const StageData& s = b.stages[ti];
    const Vector u = f.K[ti] * x + ubar[ti];
    value += 0.5 * (x.dot(s.Qx * x) + u.dot(s.Qu * u)) + x.dot(s.Qxu * u);
    x = s.A * x + s.B * u;
  }
  return value;
}

}  // namespace parric
