#include <array>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "seqoc/svdd.hpp"

using namespace seqoc;
using namespace seqoc::svdd;

namespace {

std::vector<Vector> random_embeddings(int n, Index m, std::mt19937_64& rng) {
  std::vector<Vector> h;
  for (int i = 0; i < n; ++i) h.push_back(oracle::gaussian(m, 1, rng).col(0));
  return h;
}

}  // namespace

TEST(Sphere, PsiAndScore) {
  const SphereModel model{Vector::Zero(2), 1.0};
  EXPECT_DOUBLE_EQ(psi((Vector(2) << 2.0, 0.0).finished(), model), 3.0);
  EXPECT_EQ(score_sphere(model, Vector::Zero(2)), Sign::positive);
  EXPECT_EQ(score_sphere(model, (Vector(2) << 2.0, 0.0).finished()), Sign::negative);
  EXPECT_THROW(psi(Vector::Zero(3), model), DimensionError);
}

TEST(Sphere, InitialSphere) {
  const std::vector<Vector> h{Vector::Constant(1, 0.0), Vector::Constant(1, 1.0), Vector::Constant(1, 5.0)};
  const auto s = initial_sphere(h);
  EXPECT_DOUBLE_EQ(s.center(0), 2.0);
  EXPECT_DOUBLE_EQ(s.r_squared, 4.0);
}

TEST(Sphere, ObjectiveGapWithinBound) {
  std::mt19937_64 rng(1);
  const SmoothingConfig cfg{10.0, 0.5};
  for (int t = 0; t < 20; ++t) {
    const auto h = random_embeddings(6, 3, rng);
    const SphereModel model{oracle::gaussian(3, 1, rng).col(0), std::abs(oracle::gaussian(1, 1, rng)(0, 0))};
    const double gap = primal_objective(model, h, cfg) - exact_objective(model, h, cfg);
    EXPECT_GE(gap, 0.0);
    EXPECT_LE(gap, std::log(2.0) / (cfg.lambda * cfg.tau) + 1e-10);
  }
}

TEST(Sphere, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  const SmoothingConfig cfg{10.0, 0.5};
  for (int t = 0; t < 10; ++t) {
    auto h = random_embeddings(5, 3, rng);
    const SphereModel model{oracle::gaussian(3, 1, rng).col(0), 1.5};
    const auto g = primal_gradients(model, h, cfg);
    Vector x(4);
    x << model.center, model.r_squared;
    auto f = [&](const Vector& v) { return primal_objective(SphereModel{v.head(3), v(3)}, h, cfg); };
    Vector analytic(4);
    analytic << g.grad_center, g.grad_r_squared;
    EXPECT_LE(oracle::max_relative_error(analytic, oracle::central_difference(f, x)), 1e-6);
    for (std::size_t i = 0; i < h.size(); ++i) {
      auto fi = [&](const Vector& v) {
        auto hh = h;
        hh[i] = v;
        return primal_objective(model, hh, cfg);
      };
      EXPECT_LE(oracle::max_relative_error(g.upstream[i], oracle::central_difference(fi, h[i])), 1e-6);
    }
  }
}

TEST(SvddDual, SweepIsMonotoneAndFeasible) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Index n = 2 + t % 6;
    const Matrix k = oracle::random_psd(n, 3, rng);
    smo_solve(k, DualSolution::uniform(n, 0.4), 1e-14, 50, [&](Index, Index, double before, double after, const Vector& a) {
      EXPECT_LE(after, before + 1e-15);
      EXPECT_LE((DualSolution{a, 0.4}).infeasibility(), 1e-10);
    });
  }
}

TEST(SvddDual, PairTargetIsExactPairMinimizer) {
  // Unconstrained minimizer of the objective along alpha_b = t, alpha_a = s - t,
  // located by ternary search.
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix k = oracle::random_psd(4, 3, rng);
    Vector alpha = Vector::Constant(4, 0.25);
    auto f = [&](double t) {
      Vector a = alpha;
      a(1) = t;
      a(0) = 0.5 - t;
      return a.dot(k * a) - a.dot(k.diagonal());
    };
    double lo = -50, hi = 50;
    for (int it = 0; it < 300; ++it) {
      const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
      if (f(m1) < f(m2)) {
        hi = m2;
      } else {
        lo = m1;
      }
    }
    const double ma = k(0, 2) * 0.25 + k(0, 3) * 0.25;
    const double mb = k(1, 2) * 0.25 + k(1, 3) * 0.25;
    const double denom = k(0, 0) + k(1, 1) - 2 * k(0, 1);
    const double target = PairRule::pair_target(0.5, k(0, 0), k(1, 1), k(0, 1), ma, mb, denom);
    EXPECT_NEAR(target, 0.5 * (lo + hi), 1e-6);
  }
}

TEST(SvddDual, MatchesGridOracle) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 12; ++t) {
    const Index n = 2 + t % 3;
    const double lambda = std::array<double, 3>{0.3, 0.5, 1.0}[static_cast<std::size_t>(t / 3 % 3)];
    const Matrix k = oracle::random_psd(n, 3, rng);
    const auto res = smo_solve(k, DualSolution::uniform(n, lambda));
    EXPECT_TRUE(res.converged);
    const double grid = oracle::grid_minimum(k, -k.diagonal(), 2.0, res.solution.upper(), 200);
    EXPECT_LE(dual_objective(res.solution, k), grid + 1e-12);
    EXPECT_GE(dual_objective(res.solution, k), grid - 0.02);
  }
}

TEST(SvddDual, PrimalAndDualScoresAgree) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const auto h = random_embeddings(4, 3, rng);
    const Matrix k = dual::gram_matrix(h);
    const auto sol = smo_solve(k, DualSolution::uniform(4, 0.3)).solution;
    const double r2 = recover_r_squared_or_midpoint(sol, k);
    const SphereModel primal{center_from_dual(sol, h), r2};
    for (const auto& v : h) {
      EXPECT_NEAR(dual_decision_value(sol, r2, k, dual::gram_row(h, v), v.squaredNorm()), primal.decision_value(v),
                  1e-12);
    }
  }
}

TEST(SvddDual, CenterDistancesMatchPrimal) {
  std::mt19937_64 rng(6);
  const auto h = random_embeddings(5, 2, rng);
  const Matrix k = dual::gram_matrix(h);
  const auto sol = smo_solve(k, DualSolution::uniform(5, 0.5)).solution;
  const Vector c = center_from_dual(sol, h);
  const Vector d = center_distances(sol, k);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(d(static_cast<Index>(i)), (h[i] - c).squaredNorm(), 1e-12);
}

TEST(SvddDual, InteriorRadiusIsDistanceOfMarginVectors) {
  // Three collinear points with lambda = 1/2: the middle point gets no weight.
  const std::vector<Vector> h{Vector::Constant(1, -1.0), Vector::Constant(1, 0.0), Vector::Constant(1, 1.0)};
  const Matrix k = dual::gram_matrix(h);
  const auto sol = smo_solve(k, DualSolution::uniform(3, 0.5)).solution;
  EXPECT_NEAR(center_from_dual(sol, h)(0), 0.0, 1e-9);
  EXPECT_NEAR(recover_r_squared(sol, k), 1.0, 1e-9);
}
