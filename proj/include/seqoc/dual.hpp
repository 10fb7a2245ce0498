#pragma once

// Shared machinery for the one-class duals: feasible multiplier vectors,
// gram matrices, and a pairwise SMO engine parameterized by the pair rule.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "seqoc/common.hpp"
#include "seqoc/error.hpp"

namespace seqoc::dual {

inline constexpr double feasibility_tolerance = 1e-10;
inline constexpr double interior_margin = 1e-8;

/// Multipliers on the simplex-box {sum alpha = 1, 0 <= alpha_i <= 1/(n lambda)}.
struct DualSolution {
  Vector alpha;
  double lambda = 0.5;

  double upper() const { return 1.0 / (static_cast<double>(alpha.size()) * lambda); }

  static DualSolution uniform(Index n, double lambda) {
    if (n < 1) throw ShapeError("dual solution needs at least one multiplier");
    if (!(lambda > 0.0) || lambda > 1.0) {
      throw ConfigError("lambda must lie in (0, 1] for the dual to be feasible, got " +
                        std::to_string(lambda));
    }
    return {Vector::Constant(n, 1.0 / static_cast<double>(n)), lambda};
  }

  /// Largest violation of the equality and box constraints.
  double infeasibility() const {
    const double u = upper();
    double worst = std::abs(alpha.sum() - 1.0);
    for (Index i = 0; i < alpha.size(); ++i) {
      worst = std::max({worst, -alpha(i), alpha(i) - u});
    }
    return worst;
  }

  void validate(double tol = feasibility_tolerance) const {
    if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
    if (!(infeasibility() <= tol)) {
      throw ValidationError("multipliers violate the simplex-box constraints by " +
                            std::to_string(infeasibility()));
    }
  }
};

inline Matrix gram_matrix(const std::vector<Vector>& embeddings) {
  const auto n = static_cast<Index>(embeddings.size());
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j <= i; ++j) {
      k(i, j) = k(j, i) = embeddings[static_cast<std::size_t>(i)].dot(
          embeddings[static_cast<std::size_t>(j)]);
    }
  }
  return k;
}

/// Row of inner products between a query and every training embedding.
inline Vector gram_row(const std::vector<Vector>& embeddings, const Vector& query) {
  Vector row(static_cast<Index>(embeddings.size()));
  for (std::size_t j = 0; j < embeddings.size(); ++j) row(static_cast<Index>(j)) = embeddings[j].dot(query);
  return row;
}

inline void check_gram(const Matrix& gram, Index n) {
  if (gram.rows() != gram.cols()) throw ValidationError("gram matrix is not square");
  if (gram.rows() != n) throw ValidationError("gram matrix size does not match the multipliers");
  const double scale = std::max(1.0, gram.cwiseAbs().maxCoeff());
  if (!((gram - gram.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale)) {
    throw ValidationError("gram matrix is not symmetric");
  }
}

/// Pair order for one sweep: adjacent pairs from even starts, adjacent pairs
/// from odd starts, then every wider offset so that all pairs are visited.
inline std::vector<std::pair<Index, Index>> sweep_order(Index n) {
  std::vector<std::pair<Index, Index>> pairs;
  for (Index a = 0; a + 1 < n; a += 2) pairs.emplace_back(a, a + 1);
  for (Index a = 1; a + 1 < n; a += 2) pairs.emplace_back(a, a + 1);
  for (Index off = 2; off < n; ++off) {
    for (Index a = 0; a + off < n; ++a) pairs.emplace_back(a, a + off);
  }
  return pairs;
}

/// Observes every accepted pair update: (a, b, objective before, objective after, alpha).
using PairObserver = std::function<void(Index, Index, double, double, const Vector&)>;

struct SmoResult {
  DualSolution solution;
  int sweeps = 0;
  bool converged = false;
};

/// Pairwise minimizer for objectives of the form
///   f(alpha) = (q/2) alpha^T K alpha + l^T alpha
/// Rule supplies q, the linear term, and the closed-form pair target.
template <class Rule>
class SmoEngine {
 public:
  SmoEngine(const Matrix& gram, DualSolution start)
      : k_(gram), sol_(std::move(start)), linear_(Rule::linear(gram)) {
    if (sol_.alpha.size() < 2) throw ShapeError("SMO needs at least two multipliers");
    check_gram(k_, sol_.alpha.size());
    sol_.validate(1e-9);
    ka_ = k_ * sol_.alpha;
  }

  double objective() const { return 0.5 * Rule::q * sol_.alpha.dot(ka_) + linear_.dot(sol_.alpha); }

  const DualSolution& solution() const noexcept { return sol_; }

  /// One sweep over all pairs; returns the objective decrease.
  double sweep(const PairObserver& observer = {}) {
    const double before = objective();
    for (const auto& [a, b] : sweep_order(sol_.alpha.size())) update_pair(a, b, observer);
    return before - objective();
  }

 private:
  void update_pair(Index a, Index b, const PairObserver& observer) {
    const double denom = k_(a, a) + k_(b, b) - 2.0 * k_(a, b);
    const double scale = std::max({1.0, std::abs(k_(a, a)), std::abs(k_(b, b))});
    if (!(denom > 1e-14 * scale)) return;
    const double s = sol_.alpha(a) + sol_.alpha(b);
    const double u = sol_.upper();
    // Contributions of the remaining multipliers.
    const double ma = ka_(a) - sol_.alpha(a) * k_(a, a) - sol_.alpha(b) * k_(a, b);
    const double mb = ka_(b) - sol_.alpha(a) * k_(a, b) - sol_.alpha(b) * k_(b, b);
    double target = Rule::pair_target(s, k_(a, a), k_(b, b), k_(a, b), ma, mb, denom);
    target = std::clamp(target, std::max(0.0, s - u), std::min(u, s));
    const double delta = target - sol_.alpha(b);
    if (delta == 0.0) return;
    // Exact change of f along alpha_b += delta, alpha_a -= delta.
    const double change = Rule::q * (delta * (ka_(b) - ka_(a)) + 0.5 * delta * delta * denom) +
                          delta * (linear_(b) - linear_(a));
    if (!(change < 0.0)) return;
    // The update is kept only if the objective as evaluated also does not
    // rise; near the optimum rounding in K alpha can otherwise add an ulp.
    const double before = objective();
    const double old_a = sol_.alpha(a), old_b = sol_.alpha(b);
    saved_ka_ = ka_;
    sol_.alpha(b) = target;
    sol_.alpha(a) = s - target;
    ka_ += delta * (k_.col(b) - k_.col(a));
    const double after = objective();
    if (!(after <= before)) {
      sol_.alpha(a) = old_a;
      sol_.alpha(b) = old_b;
      ka_.swap(saved_ka_);
      return;
    }
    if (observer) observer(a, b, before, after, sol_.alpha);
  }

  const Matrix& k_;
  DualSolution sol_;
  Vector linear_;
  Vector ka_;
  Vector saved_ka_;
};

/// Runs sweeps until the per-sweep decrease drops below tolerance.
template <class Rule>
SmoResult smo_solve(const Matrix& gram, DualSolution start, double tolerance = 1e-12,
                    int max_sweeps = 1000, const PairObserver& observer = {}) {
  SmoEngine<Rule> engine(gram, std::move(start));
  SmoResult result{engine.solution(), 0, false};
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    const double decrease = engine.sweep(observer);
    result.sweeps = sweep;
    if (decrease < tolerance) {
      result.converged = true;
      break;
    }
  }
  result.solution = engine.solution();
  return result;
}

inline std::vector<Index> interior_indices(const DualSolution& sol) {
  std::vector<Index> idx;
  const double u = sol.upper();
  for (Index i = 0; i < sol.alpha.size(); ++i) {
    if (sol.alpha(i) > interior_margin && sol.alpha(i) < u - interior_margin) idx.push_back(i);
  }
  return idx;
}

/// Midpoint of the offset interval allowed by the optimality conditions when
/// every multiplier sits on a box edge. `zero_bounds_above` says whether items
/// with alpha_i = 0 cap the offset from above (hyperplane) or below (sphere).
inline double bound_midpoint(const Vector& values, const DualSolution& sol, bool zero_bounds_above) {
  const double u = sol.upper();
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < values.size(); ++i) {
    const bool at_zero = sol.alpha(i) <= interior_margin;
    const bool at_upper = sol.alpha(i) >= u - interior_margin;
    if (!at_zero && !at_upper) continue;
    if (at_zero == zero_bounds_above) {
      hi = std::min(hi, values(i));
    } else {
      lo = std::max(lo, values(i));
    }
  }
  if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
  if (std::isfinite(lo)) return lo;
  if (std::isfinite(hi)) return hi;
  throw NoMarginVectorError("no multipliers to bound the offset");
}

}  // namespace seqoc::dual
