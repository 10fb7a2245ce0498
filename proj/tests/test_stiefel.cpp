#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "seqoc/stiefel.hpp"

using namespace seqoc;
using namespace seqoc::stiefel;

namespace {

Matrix gaussian(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

TEST(Stiefel, InitSquareIsOrthogonal) {
  EXPECT_LE(orthogonality_error(init_orthogonal(3, 3, 1).value()), 1e-12);
}

TEST(Stiefel, InitColumnIsUnitVector) {
  const auto w = init_orthogonal(4, 1, 2).value();
  EXPECT_NEAR(w.norm(), 1.0, 1e-12);
}

TEST(Stiefel, InitIsDeterministic) {
  EXPECT_EQ(init_orthogonal(5, 3, 7).value(), init_orthogonal(5, 3, 7).value());
  EXPECT_NE(init_orthogonal(5, 3, 7).value(), init_orthogonal(5, 3, 8).value());
}

TEST(Stiefel, InitWideRejected) { EXPECT_THROW(init_orthogonal(2, 3, 0), ShapeError); }

TEST(Stiefel, ZeroGradientIsIdentity) {
  const auto w = init_orthogonal(4, 2, 3);
  EXPECT_EQ(cayley_step(w, Matrix::Zero(4, 2), 0.5).value(), w.value());
}

TEST(Stiefel, RandomStepStaysOnManifold) {
  std::mt19937_64 rng(4);
  const auto w = init_orthogonal(5, 3, 4);
  EXPECT_LE(orthogonality_error(cayley_step(w, gaussian(5, 3, rng), 0.05).value()), 1e-10);
}

TEST(Stiefel, TwoByTwoAgainstExplicitInverse) {
  Matrix g(2, 2);
  g << 0, 1, -1, 0;
  const Matrix a = 2 * g;  // G I^T - I G^T for skew G
  const Matrix lhs = Matrix::Identity(2, 2) + a;  // mu = 2
  const Matrix rhs = Matrix::Identity(2, 2) - a;
  // [[1, 2], [-2, 1]]^{-1} = [[1, -2], [2, 1]] / 5
  Matrix inv(2, 2);
  inv << 1, -2, 2, 1;
  inv /= 5.0;
  ASSERT_LE((lhs * inv - Matrix::Identity(2, 2)).norm(), 1e-15);
  const Matrix expected = inv * rhs;
  const Matrix got = cayley_step(ManifoldPoint(Matrix::Identity(2, 2)), g, 2.0).value();
  EXPECT_LE((got - expected).norm(), 1e-14);
}

TEST(Stiefel, OrthogonalityErrorValues) {
  EXPECT_EQ(orthogonality_error(Matrix::Identity(3, 3)), 0.0);
  EXPECT_NEAR(orthogonality_error(2 * Matrix::Identity(2, 2)), 3 * std::sqrt(2.0), 1e-12);
}

TEST(Stiefel, CayleyFactorIsOrthogonalForSkew) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const Matrix b = gaussian(5, 5, rng);
    const Matrix a = b - b.transpose();
    const Matrix q = (Matrix::Identity(5, 5) + 0.3 * a).inverse() * (Matrix::Identity(5, 5) - 0.3 * a);
    EXPECT_LE(orthogonality_error(q), 1e-12);
  }
}

TEST(Stiefel, ChainedStepsKeepDriftSmall) {
  std::mt19937_64 rng(8);
  for (Index cols : {5, 3, 1}) {
    auto w = init_orthogonal(5, cols, 10 + static_cast<std::uint64_t>(cols));
    for (int k = 0; k < 1000; ++k) w = cayley_step(w, gaussian(5, cols, rng), 0.1);
    EXPECT_LE(orthogonality_error(w.value()), 1e-8);
  }
}

TEST(Stiefel, SmallStepDecreasesQuadratic) {
  // f(W) = ||W - T||_F^2 / 2 with gradient W - T.
  std::mt19937_64 rng(9);
  const Matrix target = gaussian(4, 2, rng);
  const auto w = init_orthogonal(4, 2, 9);
  auto f = [&](const Matrix& x) { return 0.5 * (x - target).squaredNorm(); };
  const Matrix g = w.value() - target;
  EXPECT_LT(f(cayley_step(w, g, 1e-3).value()), f(w.value()));
}

TEST(Stiefel, WideBlocksUseTranspose) {
  std::mt19937_64 rng(10);
  const Matrix w = init_block(2, 5, 3);
  EXPECT_LE(orthogonality_error(w.transpose()), 1e-12);
  const Matrix next = step_block(w, gaussian(2, 5, rng), 0.1);
  EXPECT_LE(block_error(next), 1e-10);
}

TEST(Stiefel, OffManifoldPointRejected) {
  EXPECT_THROW(ManifoldPoint(2 * Matrix::Identity(2, 2)), ValidationError);
}
