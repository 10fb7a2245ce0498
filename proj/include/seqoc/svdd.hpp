#pragma once

// Hypersphere head: smoothed primal objective and gradients, the dual with its
// SMO solver, radius recovery, and scoring.

#include <algorithm>
#include <vector>

#include "seqoc/common.hpp"
#include "seqoc/dual.hpp"
#include "seqoc/error.hpp"
#include "seqoc/ocsvm.hpp"

namespace seqoc::svdd {

using dual::DualSolution;
using ocsvm::hinge;
using ocsvm::smooth_hinge;
using ocsvm::smooth_hinge_slope;
using ocsvm::SmoothingConfig;

struct SphereModel {
  Vector center;
  double r_squared = 0.0;

  /// R^2 - ||h - c||^2; positive inside the sphere.
  double decision_value(const Vector& h_bar) const { return r_squared - (h_bar - center).squaredNorm(); }
};

/// ||h - c||^2 - R^2.
inline double psi(const Vector& h_bar, const SphereModel& model) {
  if (h_bar.size() != model.center.size()) throw DimensionError("embedding width does not match the center");
  return -model.decision_value(h_bar);
}

inline Sign score_sphere(const SphereModel& model, const Vector& h_bar) {
  return sign_of(-psi(h_bar, model));
}

/// Center at the mean embedding, R^2 at the median squared distance to it.
inline SphereModel initial_sphere(const std::vector<Vector>& embeddings) {
  if (embeddings.empty()) throw EmptyInputError("cannot initialize a sphere from no embeddings");
  Vector c = Vector::Zero(embeddings.front().size());
  for (const auto& h : embeddings) c += h;
  c /= static_cast<double>(embeddings.size());
  std::vector<double> d;
  d.reserve(embeddings.size());
  for (const auto& h : embeddings) d.push_back((h - c).squaredNorm());
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  const double median = n % 2 == 1 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  return {c, median};
}

namespace detail {
inline void check_embeddings(const std::vector<Vector>& embeddings, Index m) {
  if (embeddings.empty()) throw EmptyInputError("objective needs at least one embedding");
  for (const auto& h : embeddings) {
    if (h.size() != m) throw DimensionError("embedding width does not match the center");
  }
}
}  // namespace detail

/// R^2 + (1/(n lambda)) sum S_tau(psi_i).
inline double primal_objective(const SphereModel& model, const std::vector<Vector>& embeddings,
                               const SmoothingConfig& cfg) {
  cfg.validate();
  detail::check_embeddings(embeddings, model.center.size());
  double slack = 0.0;
  for (const auto& h : embeddings) slack += smooth_hinge(psi(h, model), cfg.tau);
  return model.r_squared + slack / (static_cast<double>(embeddings.size()) * cfg.lambda);
}

inline double exact_objective(const SphereModel& model, const std::vector<Vector>& embeddings,
                              const SmoothingConfig& cfg) {
  cfg.validate();
  detail::check_embeddings(embeddings, model.center.size());
  double slack = 0.0;
  for (const auto& h : embeddings) slack += hinge(psi(h, model));
  return model.r_squared + slack / (static_cast<double>(embeddings.size()) * cfg.lambda);
}

struct PrimalGradients {
  Vector grad_center;
  double grad_r_squared = 0.0;
  std::vector<Vector> upstream;
};

inline PrimalGradients primal_gradients(const SphereModel& model, const std::vector<Vector>& embeddings,
                                        const SmoothingConfig& cfg) {
  cfg.validate();
  detail::check_embeddings(embeddings, model.center.size());
  const double scale = 1.0 / (static_cast<double>(embeddings.size()) * cfg.lambda);
  PrimalGradients g{Vector::Zero(model.center.size()), 1.0, {}};
  g.upstream.reserve(embeddings.size());
  for (const auto& h : embeddings) {
    const double s = smooth_hinge_slope(psi(h, model), cfg.tau);
    const Vector diff = h - model.center;
    g.grad_center -= 2.0 * scale * s * diff;
    g.grad_r_squared -= scale * s;
    g.upstream.push_back(2.0 * scale * s * diff);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Dual

/// Pair rule for alpha^T K alpha - sum alpha_i K_ii.
struct PairRule {
  static constexpr double q = 2.0;
  static Vector linear(const Matrix& gram) { return -gram.diagonal(); }
  static double pair_target(double s, double kaa, double kbb, double kab, double ma, double mb,
                            double denom) {
    return (2.0 * s * (kaa - kab) + kbb - kaa + 2.0 * (ma - mb)) / (2.0 * denom);
  }
};

inline double dual_objective(const DualSolution& sol, const Matrix& gram) {
  dual::check_gram(gram, sol.alpha.size());
  return sol.alpha.dot(gram * sol.alpha) - sol.alpha.dot(gram.diagonal());
}

inline DualSolution smo_sweep(const DualSolution& sol, const Matrix& gram,
                              const dual::PairObserver& observer = {}) {
  dual::SmoEngine<PairRule> engine(gram, sol);
  engine.sweep(observer);
  return engine.solution();
}

inline dual::SmoResult smo_solve(const Matrix& gram, const DualSolution& start,
                                 double tolerance = 1e-12, int max_sweeps = 1000,
                                 const dual::PairObserver& observer = {}) {
  return dual::smo_solve<PairRule>(gram, start, tolerance, max_sweeps, observer);
}

/// Squared distance of every training item to the dual center.
inline Vector center_distances(const DualSolution& sol, const Matrix& gram) {
  const Vector ka = gram * sol.alpha;
  const double aka = sol.alpha.dot(ka);
  return (gram.diagonal() - 2.0 * ka).array() + aka;
}

inline double recover_r_squared(const DualSolution& sol, const Matrix& gram) {
  dual::check_gram(gram, sol.alpha.size());
  const auto idx = dual::interior_indices(sol);
  if (idx.empty()) throw NoMarginVectorError("no multiplier lies strictly inside the box");
  const Vector d = center_distances(sol, gram);
  double sum = 0.0;
  for (const Index i : idx) sum += d(i);
  return sum / static_cast<double>(idx.size());
}

inline double recover_r_squared_or_midpoint(const DualSolution& sol, const Matrix& gram) {
  try {
    return recover_r_squared(sol, gram);
  } catch (const NoMarginVectorError&) {
    return std::max(0.0, dual::bound_midpoint(center_distances(sol, gram), sol, false));
  }
}

/// R^2 - alpha^T K alpha + 2 alpha^T row - self_k.
inline double dual_decision_value(const DualSolution& sol, double r_squared, const Matrix& gram,
                                  const Vector& row, double self_k) {
  if (row.size() != sol.alpha.size()) throw DimensionError("gram row length does not match alpha");
  return r_squared - sol.alpha.dot(gram * sol.alpha) + 2.0 * sol.alpha.dot(row) - self_k;
}

inline Sign score_dual(const DualSolution& sol, double r_squared, const Matrix& gram,
                       const Vector& row, double self_k) {
  return sign_of(dual_decision_value(sol, r_squared, gram, row, self_k));
}

/// c = sum alpha_i h_i.
inline Vector center_from_dual(const DualSolution& sol, const std::vector<Vector>& embeddings) {
  return ocsvm::primal_from_dual(sol, embeddings);
}

}  // namespace seqoc::svdd
