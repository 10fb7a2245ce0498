#pragma once

// Linear one-class SVM head: smoothed primal objective and gradients, the
// dual with its SMO solver, offset recovery, and scoring.

#include <cmath>
#include <string>
#include <vector>

#include "seqoc/common.hpp"
#include "seqoc/dual.hpp"
#include "seqoc/error.hpp"

namespace seqoc::ocsvm {

using dual::DualSolution;

struct SmoothingConfig {
  double tau = 10.0;
  double lambda = 0.5;

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  }
};

inline double hinge(double omega) noexcept { return omega > 0.0 ? omega : 0.0; }

/// (1/tau) log(1 + e^{tau omega}).
inline double smooth_hinge(double omega, double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  // hinge + log1p(e^{-tau |omega|}) / tau keeps the result >= hinge in floating point.
  return hinge(omega) + std::log1p(std::exp(-tau * std::abs(omega))) / tau;
}

/// d/d omega of smooth_hinge.
inline double smooth_hinge_slope(double omega, double tau) noexcept { return sigmoid(tau * omega); }

struct HyperplaneModel {
  Vector w;
  double rho = 0.0;

  /// w^T h - rho; positive on the nominal side.
  double decision_value(const Vector& h_bar) const { return w.dot(h_bar) - rho; }
};

inline Sign score_hyperplane(const HyperplaneModel& model, const Vector& h_bar) {
  return sign_of(model.decision_value(h_bar));
}

namespace detail {
inline void check_embeddings(const std::vector<Vector>& embeddings, Index m) {
  if (embeddings.empty()) throw EmptyInputError("objective needs at least one embedding");
  for (const auto& h : embeddings) {
    if (h.size() != m) throw DimensionError("embedding width does not match the model");
  }
}
}  // namespace detail

/// ||w||^2/2 + (1/(n lambda)) sum S_tau(rho - w^T h_i) - rho.
inline double primal_objective(const HyperplaneModel& model, const std::vector<Vector>& embeddings,
                               const SmoothingConfig& cfg) {
  cfg.validate();
  detail::check_embeddings(embeddings, model.w.size());
  double slack = 0.0;
  for (const auto& h : embeddings) slack += smooth_hinge(-model.decision_value(h), cfg.tau);
  const double n = static_cast<double>(embeddings.size());
  return 0.5 * model.w.squaredNorm() + slack / (n * cfg.lambda) - model.rho;
}

/// Same objective with the exact hinge.
inline double exact_objective(const HyperplaneModel& model, const std::vector<Vector>& embeddings,
                              const SmoothingConfig& cfg) {
  cfg.validate();
  detail::check_embeddings(embeddings, model.w.size());
  double slack = 0.0;
  for (const auto& h : embeddings) slack += hinge(-model.decision_value(h));
  const double n = static_cast<double>(embeddings.size());
  return 0.5 * model.w.squaredNorm() + slack / (n * cfg.lambda) - model.rho;
}

struct PrimalGradients {
  Vector grad_w;
  double grad_rho = 0.0;
  /// d objective / d h_i, to be pushed back through the encoder.
  std::vector<Vector> upstream;
};

inline PrimalGradients primal_gradients(const HyperplaneModel& model,
                                        const std::vector<Vector>& embeddings,
                                        const SmoothingConfig& cfg) {
  cfg.validate();
  detail::check_embeddings(embeddings, model.w.size());
  const double scale = 1.0 / (static_cast<double>(embeddings.size()) * cfg.lambda);
  PrimalGradients g{model.w, -1.0, {}};
  g.upstream.reserve(embeddings.size());
  for (const auto& h : embeddings) {
    const double s = smooth_hinge_slope(-model.decision_value(h), cfg.tau);
    g.grad_w -= scale * s * h;
    g.grad_rho += scale * s;
    g.upstream.push_back(-scale * s * model.w);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Dual

/// Pair rule for (1/2) alpha^T K alpha.
struct PairRule {
  static constexpr double q = 1.0;
  static Vector linear(const Matrix& gram) { return Vector::Zero(gram.rows()); }
  static double pair_target(double s, double kaa, double /*kbb*/, double kab, double ma, double mb,
                            double denom) {
    return (s * (kaa - kab) + ma - mb) / denom;
  }
};

inline double dual_objective(const DualSolution& sol, const Matrix& gram) {
  dual::check_gram(gram, sol.alpha.size());
  return 0.5 * sol.alpha.dot(gram * sol.alpha);
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

/// Offset from the margin multipliers, averaged over all interior indices.
inline double recover_rho(const DualSolution& sol, const Matrix& gram) {
  dual::check_gram(gram, sol.alpha.size());
  const auto idx = dual::interior_indices(sol);
  if (idx.empty()) throw NoMarginVectorError("no multiplier lies strictly inside the box");
  const Vector ka = gram * sol.alpha;
  double sum = 0.0;
  for (const Index i : idx) sum += ka(i);
  return sum / static_cast<double>(idx.size());
}

/// recover_rho, falling back to the midpoint of the feasible offset interval.
inline double recover_rho_or_midpoint(const DualSolution& sol, const Matrix& gram) {
  try {
    return recover_rho(sol, gram);
  } catch (const NoMarginVectorError&) {
    return dual::bound_midpoint(gram * sol.alpha, sol, true);
  }
}

/// sum_j alpha_j K(j, i) - rho for a test row.
inline double dual_decision_value(const DualSolution& sol, double rho, const Vector& row) {
  if (row.size() != sol.alpha.size()) throw DimensionError("gram row length does not match alpha");
  return sol.alpha.dot(row) - rho;
}

inline Sign score_dual(const DualSolution& sol, double rho, const Vector& row) {
  return sign_of(dual_decision_value(sol, rho, row));
}

/// w = sum alpha_i h_i.
inline Vector primal_from_dual(const DualSolution& sol, const std::vector<Vector>& embeddings) {
  if (static_cast<Index>(embeddings.size()) != sol.alpha.size() || embeddings.empty()) {
    throw DimensionError("embedding count does not match alpha");
  }
  Vector w = Vector::Zero(embeddings.front().size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) w += sol.alpha(static_cast<Index>(i)) * embeddings[i];
  return w;
}

}  // namespace seqoc::ocsvm
