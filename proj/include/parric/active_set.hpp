// Primal active-set loop for lower-bounded controls. Controls held at their
// bound are removed from the stage data, the remaining equality-constrained
// problem is solved with the serial or the tree backend, and the bound
// multipliers decide which constraint to release. All tie-breaks are
// deterministic so the two backends walk identical working-set sequences.
#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "parric/riccati.hpp"
#include "parric/tree.hpp"

namespace parric {

/// Control indices currently held at zero, one sorted set per stage.
struct WorkingSet {
  std::vector<std::vector<int>> fixed;

  bool operator==(const WorkingSet&) const = default;
};

struct AsIterate {
  WorkingSet working_set;
  Solution solution;           // embedded in the original control coordinates
  std::vector<Vector> mu;      // one entry per fixed index per stage
  int iterations = 0;
};

enum class Backend { Serial, Parallel };

namespace detail {

inline void check_bound_sets(const BoundConstrainedProblem& q) {
  if (q.bounded.size() != static_cast<std::size_t>(q.base.N()))
    throw IndexError("bounded index sets must cover every stage");
  for (int t = 0; t < q.base.N(); ++t) {
    const auto& idx = q.bounded[static_cast<std::size_t>(t)];
    const int nu = q.base.stages[static_cast<std::size_t>(t)].nu();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= nu ||
          (k > 0 && idx[k] <= idx[k - 1]))
        throw IndexError("bounded indices must be sorted, unique and in "
                         "range at stage " + std::to_string(t));
    }
  }
}

/// Stage data with the fixed control columns removed.
inline MpcProblem remove_fixed_controls(
    const MpcProblem& base, const std::vector<std::vector<int>>& fixed) {
  MpcProblem reduced = base;
  for (int t = 0; t < base.N(); ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const StageData& s = base.stages[ti];
    const std::vector<int> free = free_indices(fixed[ti], s.nu(), t);
    StageData& r = reduced.stages[ti];
    r.B = s.B(Eigen::all, free);
    r.Qxu = s.Qxu(Eigen::all, free);
    r.Qu = s.Qu(free, free);
  }
  return reduced;
}

}  // namespace detail

/// Classic primal active-set iteration started from the always-feasible
/// all-fixed working set (u = 0). Terminates when the equality-constrained
/// step is accepted in full and every bound multiplier is nonnegative
/// (within 1e-9). `trace`, when given, records the working set before each
/// subproblem solve.
inline AsIterate solve_bound_constrained(
    const BoundConstrainedProblem& q, Backend backend, int max_iter,
    const ParallelConfig& cfg = {},
    std::vector<WorkingSet>* trace = nullptr) {
  check_dimensions(q.base);
  detail::check_bound_sets(q);

  constexpr double kDualTol = 1e-9;
  constexpr double kStepTieTol = 1e-12;

  const int N = q.base.N();
  WorkingSet ws{q.bounded};

  // Current feasible iterate in full control coordinates.
  std::vector<Vector> u_cur(static_cast<std::size_t>(N));
  for (int t = 0; t < N; ++t)
    u_cur[static_cast<std::size_t>(t)] =
        Vector::Zero(q.base.stages[static_cast<std::size_t>(t)].nu());

  auto solve_eqp = [&](const MpcProblem& reduced) {
    if (backend == Backend::Serial) return solve_serial(reduced);
    return solve_parallel(reduced, cfg).first;
  };

  for (int iter = 1; iter <= max_iter; ++iter) {
    if (trace) trace->push_back(ws);
    const MpcProblem reduced =
        detail::remove_fixed_controls(q.base, ws.fixed);
    const Solution sol = solve_eqp(reduced);

    // Candidate controls embedded into the full coordinates.
    std::vector<Vector> u_star(static_cast<std::size_t>(N));
    for (int t = 0; t < N; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      const int nu = q.base.stages[ti].nu();
      const std::vector<int> free =
          detail::free_indices(ws.fixed[ti], nu, t);
      u_star[ti] = Vector::Zero(nu);
      for (std::size_t k = 0; k < free.size(); ++k)
        u_star[ti][free[static_cast<std::size_t>(k)]] =
            sol.u[ti][static_cast<Eigen::Index>(k)];
    }

    // Longest feasible step toward the candidate over the bounded free
    // indices; ties resolved toward the smallest (stage, index).
    double alpha = 1.0;
    int block_t = -1, block_j = -1;
    for (int t = 0; t < N; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      for (int j : q.bounded[ti]) {
        if (std::binary_search(ws.fixed[ti].begin(), ws.fixed[ti].end(), j))
          continue;
        const double d = u_star[ti][j] - u_cur[ti][j];
        if (d >= -kStepTieTol) continue;  // not moving toward the bound
        const double step = u_cur[ti][j] / (-d);
        if (step < alpha - kStepTieTol) {
          alpha = step;
          block_t = t;
          block_j = j;
        }
      }
    }

    if (block_t >= 0) {
      for (int t = 0; t < N; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        u_cur[ti] += alpha * (u_star[ti] - u_cur[ti]);
      }
      u_cur[static_cast<std::size_t>(block_t)][block_j] = 0.0;
      auto& fixed_t = ws.fixed[static_cast<std::size_t>(block_t)];
      fixed_t.insert(
          std::upper_bound(fixed_t.begin(), fixed_t.end(), block_j),
          block_j);
      continue;
    }

    // Full step accepted: we are at the subproblem optimum for this
    // working set. Price the fixed bounds.
    u_cur = u_star;
    Trajectory traj;
    traj.x = sol.x;
    traj.u = sol.u;
    traj.lambda = sol.lambda;
    const DualMultipliers duals = dual_recursion(q, ws.fixed, traj);

    double worst = 0.0;
    int drop_t = -1, drop_k = -1;
    for (int t = 0; t < N; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      for (Eigen::Index k = 0; k < duals.mu[ti].size(); ++k) {
        const double value = duals.mu[ti][k];
        if (value < worst) {
          worst = value;
          drop_t = t;
          drop_k = static_cast<int>(k);
        }
      }
    }

    if (worst >= -kDualTol || drop_t < 0) {
      AsIterate result;
      result.working_set = ws;
      result.solution.x = sol.x;
      result.solution.lambda = sol.lambda;
      result.solution.u = u_star;
      result.solution.mu = duals.mu;
      result.solution.objective = sol.objective;
      result.mu = duals.mu;
      result.iterations = iter;
      return result;
    }
    auto& fixed_t = ws.fixed[static_cast<std::size_t>(drop_t)];
    fixed_t.erase(fixed_t.begin() + drop_k);
  }
  throw MaxIterExceeded("active-set loop did not converge within " +
                        std::to_string(max_iter) + " iterations");
}

}  // namespace parric
