#include <gtest/gtest.h>

#include "parric/active_set.hpp"
#include "parric/random.hpp"
#include "test_helpers.hpp"

using namespace parric;
using testutil::vec1;

namespace {

BoundConstrainedProblem bound_all(const MpcProblem& base) {
  BoundConstrainedProblem q;
  q.base = base;
  q.bounded.resize(static_cast<std::size_t>(base.N()));
  for (int t = 0; t < base.N(); ++t)
    for (int j = 0; j < base.stages[static_cast<std::size_t>(t)].nu(); ++j)
      q.bounded[static_cast<std::size_t>(t)].push_back(j);
  return q;
}

}  // namespace

TEST(ActiveSet, InactiveBoundsReproduceUnconstrainedSolution) {
  // Negative initial state pushes the optimal controls positive.
  MpcProblem base = testutil::canonical_scalar_problem();
  base.x0 = vec1(-1.0);
  const BoundConstrainedProblem q = bound_all(base);
  const AsIterate it = solve_bound_constrained(q, Backend::Serial, 50);
  for (const auto& fixed : it.working_set.fixed) EXPECT_TRUE(fixed.empty());
  const Solution unconstrained = solve_serial(base);
  EXPECT_LE(solution_rel_diff(it.solution, unconstrained), 1e-12);
  EXPECT_NEAR(it.solution.u[0][0], 0.6, 1e-12);
  EXPECT_NEAR(it.solution.u[1][0], 0.2, 1e-12);
}

TEST(ActiveSet, BothBoundsActiveOnCanonicalInstance) {
  const BoundConstrainedProblem q =
      bound_all(testutil::canonical_scalar_problem());
  const AsIterate it = solve_bound_constrained(q, Backend::Serial, 50);
  ASSERT_EQ(it.working_set.fixed[0], std::vector<int>{0});
  ASSERT_EQ(it.working_set.fixed[1], std::vector<int>{0});
  EXPECT_NEAR(it.solution.u[0][0], 0.0, 0.0);
  EXPECT_NEAR(it.solution.u[1][0], 0.0, 0.0);
  EXPECT_NEAR(it.solution.x[1][0], 1.0, 1e-12);
  EXPECT_NEAR(it.solution.x[2][0], 1.0, 1e-12);
  // Bound multipliers from the autonomous adjoint: mu = (2, 1).
  EXPECT_NEAR(it.mu[0][0], 2.0, 1e-12);
  EXPECT_NEAR(it.mu[1][0], 1.0, 1e-12);
  EXPECT_NEAR(it.solution.objective, 1.5, 1e-12);

  const testutil::EnumerationResult oracle =
      testutil::enumerate_best_working_set(q);
  ASSERT_TRUE(oracle.found);
  EXPECT_NEAR(it.solution.objective, oracle.objective, 1e-10);
}

TEST(ActiveSet, DegenerateBoundaryOptimum) {
  // x0 = 0 makes the unconstrained optimum exactly u = 0: the loop must
  // terminate with zero multipliers and the oracle objective.
  MpcProblem base = testutil::canonical_scalar_problem();
  base.x0 = vec1(0.0);
  const BoundConstrainedProblem q = bound_all(base);
  const AsIterate it = solve_bound_constrained(q, Backend::Serial, 50);
  EXPECT_NEAR(it.solution.objective, 0.0, 1e-14);
  for (const Vector& mu : it.mu)
    for (Eigen::Index k = 0; k < mu.size(); ++k)
      EXPECT_GE(mu[k], -1e-9);
}

TEST(ActiveSet, MatchesEnumerationOnRandomInstances) {
  std::mt19937_64 rng(7);
  int multi_iteration_runs = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int nx = 1 + static_cast<int>(rng() % 2);
    const int nu = 1 + static_cast<int>(rng() % 2);
    const int N = 1 + static_cast<int>(rng() % 3);
    BoundConstrainedProblem q =
        bound_all(generate_random_stable(nx, nu, N, rng()));
    // Exercise partial bound sets on half the trials.
    if (trial % 2 == 1)
      for (auto& idx : q.bounded)
        if (!idx.empty() && rng() % 2 == 0) idx.pop_back();

    const AsIterate it = solve_bound_constrained(q, Backend::Serial, 200);
    if (it.iterations > 1) ++multi_iteration_runs;

    for (int t = 0; t < q.base.N(); ++t) {
      const auto ti = static_cast<std::size_t>(t);
      for (int j : q.bounded[ti])
        EXPECT_GE(it.solution.u[ti][j], -1e-9) << "trial " << trial;
      for (Eigen::Index k = 0; k < it.mu[ti].size(); ++k)
        EXPECT_GE(it.mu[ti][k], -1e-9) << "trial " << trial;
    }

    const testutil::EnumerationResult oracle =
        testutil::enumerate_best_working_set(q);
    ASSERT_TRUE(oracle.found) << "trial " << trial;
    EXPECT_LE(std::abs(it.solution.objective - oracle.objective),
              1e-8 * (1.0 + std::abs(oracle.objective)))
        << "trial " << trial;
  }
  EXPECT_GT(multi_iteration_runs, 0);
}

TEST(ActiveSet, BackendsWalkTheSameWorkingSets) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const BoundConstrainedProblem q =
        bound_all(generate_random_stable(2, 2, 3, rng()));
    std::vector<WorkingSet> serial_trace, parallel_trace;
    const AsIterate a =
        solve_bound_constrained(q, Backend::Serial, 200, {}, &serial_trace);
    ParallelConfig cfg;
    cfg.workers = 2;
    const AsIterate b = solve_bound_constrained(q, Backend::Parallel, 200,
                                                cfg, &parallel_trace);
    EXPECT_EQ(serial_trace.size(), parallel_trace.size()) << "trial " << trial;
    for (std::size_t i = 0;
         i < std::min(serial_trace.size(), parallel_trace.size()); ++i)
      EXPECT_TRUE(serial_trace[i] == parallel_trace[i])
          << "trial " << trial << " iteration " << i;
    EXPECT_LE(solution_rel_diff(a.solution, b.solution), 1e-10);
  }
}

TEST(ActiveSet, ThrowsWhenIterationBudgetExhausted) {
  // The all-fixed start is not optimal here, so one iteration cannot finish.
  MpcProblem base = testutil::canonical_scalar_problem();
  base.x0 = vec1(-1.0);
  const BoundConstrainedProblem q = bound_all(base);
  EXPECT_THROW(solve_bound_constrained(q, Backend::Serial, 1),
               MaxIterExceeded);
}
