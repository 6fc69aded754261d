#include <gtest/gtest.h>

#include "parric/condense.hpp"
#include "parric/random.hpp"
#include "test_helpers.hpp"

using namespace parric;
using testutil::scalar;
using testutil::vec1;

namespace {

Batch canonical_batch() {
  return make_batch(testutil::canonical_scalar_problem(), 0, 2);
}

}  // namespace

TEST(Condense, CanonicalBatchReduction) {
  const CondensedBatch c = condense_batch(canonical_batch());
  ASSERT_TRUE(c.has_stage_part);
  EXPECT_NEAR(c.Qx_hat(0, 0), 1.5, 1e-12);
  EXPECT_NEAR(c.Qu_hat(0, 0), 1.5, 1e-12);
  EXPECT_NEAR(c.B_hat(0, 0), 1.5, 1e-12);
  EXPECT_NEAR(c.A_hat(0, 0), 0.5, 1e-12);
  // Recursion internals of the same trace.
  EXPECT_NEAR(c.M[1](0, 0), -1.0, 1e-12);
  EXPECT_NEAR(c.V[1](0, 0), 1.0, 1e-12);
  EXPECT_NEAR(c.M[0](0, 0), -0.5, 1e-12);
  EXPECT_NEAR(c.V[0](0, 0), 0.5, 1e-12);
}

TEST(Condense, BhatIsQuhatBitwise) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const CondensedBatch c =
        condense_batch(testutil::random_batch(4, 2, 5, seed));
    EXPECT_TRUE(exact_equal(c.B_hat, c.Qu_hat));
  }
}

TEST(Condense, ZeroInputMapAccumulatesNothing) {
  Batch b = testutil::random_batch(3, 2, 4, 21);
  for (auto& s : b.stages) {
    s.B.setZero();
    s.Qxu.setZero();
  }
  const CondensedBatch c = condense_batch(b);
  EXPECT_EQ(c.Qu_hat.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(c.B_hat.cwiseAbs().maxCoeff(), 0.0);

  Matrix prod = Matrix::Identity(3, 3);
  Matrix accum = Matrix::Zero(3, 3);
  for (int t = b.length() - 1; t >= 0; --t) {
    const StageData& s = b.stages[static_cast<std::size_t>(t)];
    accum = s.Qx + s.A.transpose() * accum * s.A;
  }
  for (const auto& s : b.stages) prod = s.A * prod;
  EXPECT_LE((c.A_hat - prod).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((c.Qx_hat - accum).cwiseAbs().maxCoeff(),
            1e-10 * (1.0 + accum.cwiseAbs().maxCoeff()));
}

TEST(Condense, SingleStageClosedForm) {
  Batch b = testutil::random_batch(3, 2, 1, 33);
  b.stages[0].Qxu.setZero();
  const CondensedBatch c = condense_batch(b);
  const StageData& s = b.stages[0];
  const Matrix expected =
      s.B * Eigen::LLT<Matrix>(s.Qu).solve(s.B.transpose());
  EXPECT_LE((c.A_hat - s.A).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((c.B_hat - expected).cwiseAbs().maxCoeff(),
            1e-12 * (1.0 + expected.cwiseAbs().maxCoeff()));
  EXPECT_LE((c.Qx_hat - s.Qx).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Condense, KnownTerminalHasNoStagePart) {
  Batch b = testutil::random_batch(3, 2, 4, 5);
  b.known_terminal = Matrix::Identity(3, 3);
  const CondensedBatch c = condense_batch(b);
  EXPECT_FALSE(c.has_stage_part);
  // Qx_hat must match a plain backward pass with that terminal cost.
  const RiccatiFactorization f = riccati_factorize(
      std::span<const StageData>(b.stages), Matrix::Identity(3, 3));
  EXPECT_TRUE(exact_equal(c.Qx_hat, f.P[0]));
}

TEST(Condense, ZeroLengthKnownTerminalPassesThrough) {
  Batch b;
  b.known_terminal = 2.0 * Matrix::Identity(2, 2);
  const CondensedBatch c = condense_batch(b);
  EXPECT_FALSE(c.has_stage_part);
  EXPECT_TRUE(exact_equal(c.Qx_hat, *b.known_terminal));
}

TEST(Condense, RankBoundedByStateDimension) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const CondensedBatch c =
        condense_batch(testutil::random_batch(3, 5, 4, 60 + seed));
    EXPECT_LE(c.rank_Qu(), 3);
  }
  // Deficient input maps keep the bound and lose rank.
  const CondensedBatch c =
      condense_batch(testutil::rank_deficient_batch(4, 1, 1, 70, 0));
  EXPECT_LE(c.rank_Qu(), 1);
}

TEST(Condense, ThrowsOnNonPdInputCost) {
  // With the preliminary zero terminal, G at the last stage is exactly Qu.
  Batch b = canonical_batch();
  b.stages[1].Qu = scalar(0.0);
  try {
    condense_batch(b);
    FAIL() << "expected NotPositiveDefinite";
  } catch (const NotPositiveDefinite& e) {
    EXPECT_EQ(e.stage, 1);
  }
}

TEST(CostToGo, CanonicalValues) {
  const Batch b = canonical_batch();
  CostToGoQuery q;
  q.t_bar = 0;
  q.x = vec1(1.0);
  q.ubar = {vec1(0.0), vec1(0.0)};
  EXPECT_NEAR(cost_to_go(b, q), 0.75, 1e-12);
  q.ubar = {vec1(1.0), vec1(0.0)};
  EXPECT_NEAR(cost_to_go(b, q), 1.75, 1e-12);
}

TEST(CostToGo, ZeroQueryCostsNothing) {
  const Batch b = testutil::random_batch(3, 2, 4, 9);
  CostToGoQuery q;
  q.t_bar = 0;
  q.x = Vector::Zero(3);
  q.ubar.assign(4, Vector::Zero(2));
  EXPECT_EQ(cost_to_go(b, q), 0.0);
}

TEST(CostToGo, RejectsBadStartIndex) {
  const Batch b = canonical_batch();
  CostToGoQuery q;
  q.t_bar = 3;
  q.x = vec1(1.0);
  EXPECT_THROW(cost_to_go(b, q), IndexError);
}

TEST(ClosedLoopCost, CanonicalValues) {
  const Batch b = canonical_batch();
  EXPECT_NEAR(closed_loop_cost(b, vec1(1.0), {vec1(0.0), vec1(0.0)}), 0.75,
              1e-12);
  EXPECT_NEAR(closed_loop_cost(b, vec1(1.0), {vec1(1.0), vec1(0.0)}), 1.75,
              1e-12);
  EXPECT_EQ(closed_loop_cost(b, vec1(0.0), {vec1(0.0), vec1(0.0)}), 0.0);
}

TEST(CostToGo, AgreesWithClosedLoopSimulation) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const int nx = 1 + static_cast<int>(rng() % 4);
    const int nu = static_cast<int>(rng() % 4);
    const int len = 1 + static_cast<int>(rng() % 5);
    const Batch b = testutil::random_batch(nx, nu, len, rng());

    Vector x0(nx);
    for (int i = 0; i < nx; ++i) x0[i] = detail::uniform_pm1(rng);
    std::vector<Vector> ubar(static_cast<std::size_t>(len));
    for (auto& u : ubar) {
      u = Vector(nu);
      for (int i = 0; i < nu; ++i) u[i] = detail::uniform_pm1(rng);
    }

    CostToGoQuery q{0, x0, ubar};
    const double closed_form = cost_to_go(b, q);
    const double simulated = closed_loop_cost(b, x0, ubar);
    EXPECT_LE(std::abs(closed_form - simulated),
              1e-10 * (1.0 + std::abs(simulated)))
        << "trial " << trial;
  }
}

TEST(CostToGo, HoldsFromEveryStartIndex) {
  // The closed form applies from any tail of the batch; simulate the tail
  // as its own batch.
  const Batch b = testutil::random_batch(3, 2, 5, 77);
  std::mt19937_64 rng(5);
  for (int t_bar = 0; t_bar <= b.length(); ++t_bar) {
    Vector x0(3);
    for (int i = 0; i < 3; ++i) x0[i] = detail::uniform_pm1(rng);
    std::vector<Vector> ubar(static_cast<std::size_t>(b.length() - t_bar));
    for (auto& u : ubar) {
      u = Vector(2);
      for (int i = 0; i < 2; ++i) u[i] = detail::uniform_pm1(rng);
    }
    const double closed_form = cost_to_go(b, {t_bar, x0, ubar});
    Batch tail;
    tail.stages.assign(b.stages.begin() + t_bar, b.stages.end());
    const double simulated =
        tail.length() == 0 ? 0.0 : closed_loop_cost(tail, x0, ubar);
    EXPECT_LE(std::abs(closed_form - simulated),
              1e-10 * (1.0 + std::abs(simulated)))
        << "t_bar " << t_bar;
  }
}
