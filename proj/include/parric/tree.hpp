// Reduction-tree solver.
//
// Build (bottom up): split the horizon into batches of Ns stages, condense
// every batch concurrently into a single reduced stage, and assemble the
// condensed stages into a problem of horizon ceil(N/Ns) with the terminal
// cost carried through unchanged. Repeat until the horizon is at most
// p_min. The reduced stages have block-diagonal cost (zero cross term) and
// possibly singular input cost, so every level above the original data uses
// the singular-tolerant G solve.
//
// Propagate (top down): solve the top problem with the serial recursion,
// then hand each batch its initial state x0 = x_hat_i and terminal cost
// P = P_hat_{i+1} from its parent's solution; the batches then factor and
// roll forward independently. The bottom level yields the same trajectory
// and multipliers as a serial solve of the original problem.
#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parric/condense.hpp"
#include "parric/riccati.hpp"
#include "parric/thread_pool.hpp"

namespace parric {

/// Strictly increasing batch boundaries 0 = b_0 < ... < b_q = N. All
/// batches have Ns stages except a shorter final one when Ns does not
/// divide N.
struct HorizonSplit {
  std::vector<int> boundaries;

  int batch_count() const {
    return static_cast<int>(boundaries.size()) - 1;
  }
};

inline HorizonSplit split_horizon(int N, int Ns) {
  if (N < 1) throw std::invalid_argument("horizon must be at least 1");
  if (Ns < 2) throw std::invalid_argument("batch length must be at least 2");
  HorizonSplit split;
  for (int b = 0; b < N; b += Ns) split.boundaries.push_back(b);
  split.boundaries.push_back(N);
  return split;
}

struct TreeNode {
  int level = 0;
  int index = 0;
  int begin = 0;  // stage range [begin, end) within the level's problem
  int end = 0;
  CondensedBatch condensed;
  // Filled during propagation.
  Vector x0;
  Matrix P_terminal;
  bool assigned = false;
};

struct TreeLevel {
  MpcProblem problem;  // the problem this level splits and condenses
  HorizonSplit split;
  std::vector<TreeNode> nodes;
};

struct ReductionTree {
  std::vector<TreeLevel> levels;  // bottom (original) first
  MpcProblem top;                 // horizon <= p_min

  int depth() const { return static_cast<int>(levels.size()); }
};

/// Wall times of every parallel step of a tree solve, in schedule order:
/// the build levels bottom-up, the top solve (a single node), then the
/// propagation levels top-down. One entry per node per step.
struct LevelTimings {
  std::vector<std::vector<double>> levels;
  std::vector<std::string> labels;

  double serial_total() const {
    double total = 0.0;
    for (const auto& level : levels)
      for (double t : level) total += t;
    return total;
  }
};

/// The ideal-parallel-machine model: the sum over steps of the slowest node
/// in each step.
inline double simulated_parallel_time(const LevelTimings& t) {
  if (t.levels.empty()) throw EmptyTimings("no recorded levels");
  double total = 0.0;
  for (const auto& level : t.levels) {
    double worst = 0.0;
    for (double v : level) worst = std::max(worst, v);
    total += worst;
  }
  return total;
}

namespace detail {

inline double seconds_since(
    std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

inline void
run_nodes(WorkerPool* pool, int n, const std::function<void(int)>& fn) {
  if (pool) {
    pool->run(n, fn);
  } else {
    for (int i = 0; i < n; ++i) fn(i);
  }
}

inline std::vector<double>* push_step(LevelTimings* timings,
                                      const std::string& label, int nodes) {
  if (!timings) return nullptr;
  timings->levels.emplace_back(static_cast<std::size_t>(nodes), 0.0);
  timings->labels.push_back(label);
  return &timings->levels.back();
}

}  // namespace detail

inline ReductionTree build_tree(const MpcProblem& p, int Ns, int p_min,
                                WorkerPool* pool = nullptr,
                                LevelTimings* timings = nullptr) {
  check_dimensions(p);
  if (Ns < 2) throw std::invalid_argument("batch length must be at least 2");
  if (p_min < 1) throw std::invalid_argument("p_min must be at least 1");

  ReductionTree tree;
  MpcProblem current = p;
  int level = 0;
  while (current.N() > p_min) {
    TreeLevel lvl;
    lvl.problem = std::move(current);
    lvl.split = split_horizon(lvl.problem.N(), Ns);
    const int q = lvl.split.batch_count();
    lvl.nodes.resize(static_cast<std::size_t>(q));
    for (int i = 0; i < q; ++i) {
      TreeNode& node = lvl.nodes[static_cast<std::size_t>(i)];
      node.level = level;
      node.index = i;
      node.begin = lvl.split.boundaries[static_cast<std::size_t>(i)];
      node.end = lvl.split.boundaries[static_cast<std::size_t>(i) + 1];
    }
    // The original data has strictly convex input costs; the reduced
    // levels above it may not.
    const GFactorPolicy policy = level == 0
                                     ? GFactorPolicy::RequirePositiveDefinite
                                     : GFactorPolicy::AllowSingular;
    std::vector<double>* step = detail::push_step(
        timings, "build L" + std::to_string(level), q);
    detail::run_nodes(pool, q, [&](int i) {
      const auto start = std::chrono::steady_clock::now();
      TreeNode& node = lvl.nodes[static_cast<std::size_t>(i)];
      node.condensed =
          condense_batch(make_batch(lvl.problem, node.begin, node.end),
                         policy);
      if (step) (*step)[static_cast<std::size_t>(i)] =
          detail::seconds_since(start);
    });

    MpcProblem reduced;
    const int nx = lvl.problem.nx();
    reduced.stages.resize(static_cast<std::size_t>(q));
    for (int i = 0; i < q; ++i) {
      const CondensedBatch& c = lvl.nodes[static_cast<std::size_t>(i)].condensed;
      StageData& s = reduced.stages[static_cast<std::size_t>(i)];
      s.A = c.A_hat;
      s.B = c.B_hat;
      s.Qx = c.Qx_hat;
      s.Qxu = Matrix::Zero(nx, nx);
      s.Qu = c.Qu_hat;
    }
    reduced.QxN = lvl.problem.QxN;
    reduced.x0 = lvl.problem.x0;

    tree.levels.push_back(std::move(lvl));
    current = std::move(reduced);
    ++level;
  }
  tree.top = std::move(current);
  return tree;
}

inline Solution propagate_solution(ReductionTree& tree,
                                   WorkerPool* pool = nullptr,
                                   LevelTimings* timings = nullptr) {
  constexpr double kBoundaryTol = 1e-8;

  // Solve the top problem serially. Its stages come from condensation when
  // the tree has any levels, so they may carry singular input costs.
  const GFactorPolicy top_policy = tree.depth() > 0
                                       ? GFactorPolicy::AllowSingular
                                       : GFactorPolicy::RequirePositiveDefinite;
  std::vector<double>* top_step = detail::push_step(timings, "top", 1);
  const auto top_start = std::chrono::steady_clock::now();
  RiccatiFactorization top_fact =
      riccati_factorize(tree.top, tree.top.QxN, top_policy);
  Trajectory top_traj = forward_recursion(tree.top, top_fact, tree.top.x0);
  if (top_step) (*top_step)[0] = detail::seconds_since(top_start);

  std::vector<Vector> parent_x = std::move(top_traj.x);
  std::vector<Matrix> parent_P = std::move(top_fact.P);

  std::vector<Vector> bottom_u;
  std::vector<Vector> bottom_lambda;

  for (int k = tree.depth() - 1; k >= 0; --k) {
    TreeLevel& lvl = tree.levels[static_cast<std::size_t>(k)];
    const int q = lvl.split.batch_count();
    const int H = lvl.problem.N();
    const GFactorPolicy policy = k == 0
                                     ? GFactorPolicy::RequirePositiveDefinite
                                     : GFactorPolicy::AllowSingular;

    for (int i = 0; i < q; ++i) {
      TreeNode& node = lvl.nodes[static_cast<std::size_t>(i)];
      node.x0 = parent_x[static_cast<std::size_t>(i)];
      node.P_terminal = parent_P[static_cast<std::size_t>(i) + 1];
      node.assigned = true;
    }

    std::vector<RiccatiFactorization> facts(static_cast<std::size_t>(q));
    std::vector<Trajectory> trajs(static_cast<std::size_t>(q));
    std::vector<double>* step = detail::push_step(
        timings, "prop L" + std::to_string(k), q);
    detail::run_nodes(pool, q, [&](int i) {
      const auto start = std::chrono::steady_clock::now();
      const auto ii = static_cast<std::size_t>(i);
      const TreeNode& node = lvl.nodes[ii];
      const std::span<const StageData> stages(
          lvl.problem.stages.data() + node.begin,
          static_cast<std::size_t>(node.end - node.begin));
      facts[ii] = riccati_factorize(stages, node.P_terminal, policy);
      trajs[ii] = forward_recursion(stages, facts[ii], node.x0);
      if (step) (*step)[ii] = detail::seconds_since(start);
    });

    // Stitch the batch solutions into full sequences for this level after
    // checking that adjacent batches agree at the split points.
    for (int i = 1; i < q; ++i) {
      const Vector& left_end =
          trajs[static_cast<std::size_t>(i) - 1].x.back();
      const Vector& right_start = parent_x[static_cast<std::size_t>(i)];
      const double diff = detail::max_abs(left_end - right_start) /
                          (1.0 + detail::max_abs(right_start));
      if (diff > kBoundaryTol)
        throw StitchError("batch boundary mismatch at level " +
                          std::to_string(k) + ", split " + std::to_string(i) +
                          ": " + std::to_string(diff));
    }

    std::vector<Vector> level_x(static_cast<std::size_t>(H) + 1);
    std::vector<Matrix> level_P(static_cast<std::size_t>(H) + 1);
    std::vector<Vector> level_u(static_cast<std::size_t>(H));
    std::vector<Vector> level_lambda(static_cast<std::size_t>(H) + 1);
    for (int i = 0; i < q; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      const TreeNode& node = lvl.nodes[ii];
      const int len = node.end - node.begin;
      for (int t = 0; t < len; ++t) {
        const auto gt = static_cast<std::size_t>(node.begin + t);
        const auto lt = static_cast<std::size_t>(t);
        level_x[gt] = trajs[ii].x[lt];
        level_P[gt] = facts[ii].P[lt];
        level_u[gt] = trajs[ii].u[lt];
        level_lambda[gt] = trajs[ii].lambda[lt];
      }
    }
    level_x[static_cast<std::size_t>(H)] = trajs.back().x.back();
    level_P[static_cast<std::size_t>(H)] = facts.back().P.back();
    level_lambda[static_cast<std::size_t>(H)] = trajs.back().lambda.back();

    parent_x = std::move(level_x);
    parent_P = std::move(level_P);
    if (k == 0) {
      bottom_u = std::move(level_u);
      bottom_lambda = std::move(level_lambda);
    }
  }

  const MpcProblem& original =
      tree.depth() > 0 ? tree.levels.front().problem : tree.top;
  Solution sol;
  if (tree.depth() == 0) {
    sol.u = std::move(top_traj.u);
    sol.lambda = std::move(top_traj.lambda);
  } else {
    sol.u = std::move(bottom_u);
    sol.lambda = std::move(bottom_lambda);
  }
  sol.x = std::move(parent_x);
  sol.objective = objective_value(
      std::span<const StageData>(original.stages), original.QxN, sol.x,
      sol.u);
  return sol;
}

struct ParallelConfig {
  int Ns = 2;
  int p_min = 1;
  int workers = 1;
};

/// Builds the tree, solves the top problem and propagates back down,
/// recording per-node wall times. The solution does not depend on the
/// worker count.
inline std::pair<Solution, LevelTimings> solve_parallel(
    const MpcProblem& p, const ParallelConfig& cfg) {
  if (cfg.workers < 1)
    throw std::invalid_argument("worker count must be at least 1");
  LevelTimings timings;
  std::optional<WorkerPool> pool;
  if (cfg.workers > 1) pool.emplace(cfg.workers);
  WorkerPool* pool_ptr = pool ? &*pool : nullptr;
  ReductionTree tree =
      build_tree(p, cfg.Ns, cfg.p_min, pool_ptr, &timings);
  Solution sol = propagate_solution(tree, pool_ptr, &timings);
  return {std::move(sol), std::move(timings)};
}

}  // namespace parric
