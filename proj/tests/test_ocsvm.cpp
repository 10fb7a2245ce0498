#include <array>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "seqoc/ocsvm.hpp"

using namespace seqoc;
using namespace seqoc::ocsvm;

namespace {

std::vector<Vector> random_embeddings(int n, Index m, std::mt19937_64& rng) {
  std::vector<Vector> h;
  for (int i = 0; i < n; ++i) h.push_back(oracle::gaussian(m, 1, rng).col(0));
  return h;
}

}  // namespace

TEST(SmoothHinge, ValueAtZero) {
  for (double tau : {1.0, 10.0, 100.0}) EXPECT_NEAR(smooth_hinge(0.0, tau), std::log(2.0) / tau, 1e-15);
}

TEST(SmoothHinge, NoOverflowForLargeArguments) {
  EXPECT_NEAR(smooth_hinge(50.0, 100.0), 50.0, 1e-12);
  EXPECT_NEAR(smooth_hinge(-50.0, 100.0), 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(smooth_hinge(1e6, 100.0)));
}

TEST(SmoothHinge, GapBound) {
  for (double tau : {1.0, 10.0, 100.0}) {
    for (double w = -5.0; w <= 5.0; w += 0.01) {
      const double gap = smooth_hinge(w, tau) - hinge(w);
      EXPECT_GE(gap, 0.0);
      EXPECT_LE(gap, std::log(2.0) / tau + 1e-12);
    }
  }
}

TEST(SmoothHinge, SlopeIsDerivative) {
  for (double w : {-1.0, -0.1, 0.0, 0.3, 2.0}) {
    const double fd = (smooth_hinge(w + 1e-6, 10.0) - smooth_hinge(w - 1e-6, 10.0)) / 2e-6;
    EXPECT_NEAR(smooth_hinge_slope(w, 10.0), fd, 1e-7);
  }
}

TEST(SmoothHinge, RejectsNonPositiveTau) { EXPECT_THROW(smooth_hinge(0.0, 0.0), ConfigError); }

TEST(Hyperplane, ScoreSigns) {
  HyperplaneModel model{(Vector(2) << 1.0, 0.0).finished(), 0.5};
  EXPECT_EQ(score_hyperplane(model, (Vector(2) << 1.0, 0.0).finished()), Sign::positive);
  EXPECT_EQ(score_hyperplane(model, (Vector(2) << 0.0, 1.0).finished()), Sign::negative);
}

TEST(Hyperplane, ObjectiveGapWithinBound) {
  std::mt19937_64 rng(1);
  const SmoothingConfig cfg{10.0, 0.5};
  for (int t = 0; t < 20; ++t) {
    const auto h = random_embeddings(6, 3, rng);
    const HyperplaneModel model{oracle::gaussian(3, 1, rng).col(0), oracle::gaussian(1, 1, rng)(0, 0)};
    const double gap = primal_objective(model, h, cfg) - exact_objective(model, h, cfg);
    EXPECT_GE(gap, 0.0);
    EXPECT_LE(gap, std::log(2.0) / (cfg.lambda * cfg.tau) + 1e-10);
  }
}

TEST(Hyperplane, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  const SmoothingConfig cfg{10.0, 0.5};
  for (int t = 0; t < 10; ++t) {
    auto h = random_embeddings(5, 3, rng);
    const HyperplaneModel model{oracle::gaussian(3, 1, rng).col(0), 0.3};
    const auto g = primal_gradients(model, h, cfg);
    Vector x(4);
    x << model.w, model.rho;
    auto f = [&](const Vector& v) { return primal_objective(HyperplaneModel{v.head(3), v(3)}, h, cfg); };
    Vector analytic(4);
    analytic << g.grad_w, g.grad_rho;
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

TEST(Hyperplane, DimensionMismatch) {
  const HyperplaneModel model{Vector::Zero(2), 0.0};
  EXPECT_THROW(primal_objective(model, {Vector::Zero(3)}, {}), DimensionError);
  EXPECT_THROW(primal_objective(model, {}, {}), EmptyInputError);
}

TEST(OcsvmDual, UniformStartFeasible) {
  const auto sol = DualSolution::uniform(4, 0.5);
  EXPECT_LE(sol.infeasibility(), 1e-15);
  EXPECT_THROW(DualSolution::uniform(4, 1.5), ConfigError);
}

TEST(OcsvmDual, SweepIsMonotoneAndFeasible) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Index n = 2 + t % 6;
    const Matrix k = oracle::random_psd(n, 3, rng);
    double last = dual_objective(DualSolution::uniform(n, 0.4), k);
    smo_solve(k, DualSolution::uniform(n, 0.4), 1e-14, 50, [&](Index, Index, double before, double after, const Vector& a) {
      EXPECT_LE(after, before + 1e-15);
      EXPECT_LE(after, last + 1e-15);
      last = after;
      EXPECT_LE((DualSolution{a, 0.4}).infeasibility(), 1e-10);
    });
  }
}

TEST(OcsvmDual, MatchesGridOracle) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 12; ++t) {
    const Index n = 2 + t % 3;
    const double lambda = std::array<double, 3>{0.3, 0.5, 1.0}[static_cast<std::size_t>(t / 3 % 3)];
    const Matrix k = oracle::random_psd(n, 3, rng);
    const auto res = smo_solve(k, DualSolution::uniform(n, lambda));
    EXPECT_TRUE(res.converged);
    const double grid = oracle::grid_minimum(k, Vector::Zero(n), 1.0, res.solution.upper(), 200);
    EXPECT_LE(dual_objective(res.solution, k), grid + 1e-12);
    EXPECT_GE(dual_objective(res.solution, k), grid - 0.02);
  }
}

TEST(OcsvmDual, TwoPointClosedForm) {
  // Orthogonal unit embeddings: optimum splits the mass evenly.
  const Matrix k = Matrix::Identity(2, 2);
  const auto res = smo_solve(k, DualSolution{(Vector(2) << 1.0, 0.0).finished(), 0.5});
  EXPECT_NEAR(res.solution.alpha(0), 0.5, 1e-12);
  EXPECT_NEAR(dual_objective(res.solution, k), 0.25, 1e-12);
}

TEST(OcsvmDual, PrimalAndDualScoresAgree) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const auto h = random_embeddings(4, 3, rng);
    const Matrix k = dual::gram_matrix(h);
    const auto sol = smo_solve(k, DualSolution::uniform(4, 0.3)).solution;
    const double rho = recover_rho_or_midpoint(sol, k);
    const HyperplaneModel primal{primal_from_dual(sol, h), rho};
    for (const auto& v : h) {
      EXPECT_NEAR(dual_decision_value(sol, rho, dual::gram_row(h, v)), primal.decision_value(v), 1e-12);
    }
  }
}

TEST(OcsvmDual, NoInteriorMultiplierFallsBackToMidpoint) {
  // lambda = 1 puts the upper bound at 1/n; the uniform point is then the only
  // feasible point and every multiplier sits on the upper edge.
  const Matrix k = (Matrix(2, 2) << 1.0, 0.2, 0.2, 2.0).finished();
  const auto sol = DualSolution::uniform(2, 1.0);
  EXPECT_THROW(recover_rho(sol, k), NoMarginVectorError);
  const Vector ka = k * sol.alpha;
  EXPECT_NEAR(recover_rho_or_midpoint(sol, k), ka.maxCoeff(), 1e-15);
}

TEST(OcsvmDual, AsymmetricGramRejected) {
  Matrix k = Matrix::Identity(2, 2);
  k(0, 1) = 0.5;
  EXPECT_THROW(dual_objective(DualSolution::uniform(2, 0.5), k), ValidationError);
}

TEST(OcsvmDual, SingleItemRejected) {
  EXPECT_THROW(smo_solve(Matrix::Identity(1, 1), DualSolution::uniform(1, 1.0)), ShapeError);
}
