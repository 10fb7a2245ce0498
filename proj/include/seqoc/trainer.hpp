#pragma once

// Joint training of the recurrent encoder and a one-class head, either by
// smoothed-primal gradient descent or by alternating SMO with Cayley steps on
// the dual objective. Also the semi- and fully supervised gradient variants.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "seqoc/common.hpp"
#include "seqoc/data.hpp"
#include "seqoc/dual.hpp"
#include "seqoc/error.hpp"
#include "seqoc/ocsvm.hpp"
#include "seqoc/rnn.hpp"
#include "seqoc/stiefel.hpp"
#include "seqoc/svdd.hpp"

namespace seqoc::trainer {

enum class Head { hyperplane, sphere };
enum class Method { gradient, qp };
enum class Supervision { unsupervised, semi, full };

struct TrainConfig {
  double mu = 0.05;
  double lambda = 0.5;
  double tau = 10.0;
  double epsilon = 1e-8;
  int max_outer_iters = 200;
  rnn::CellKind cell = rnn::CellKind::lstm;
  Index width = 4;
  rnn::Pooling pooling = rnn::Pooling::mean;
  Head head = Head::hyperplane;
  Method method = Method::gradient;
  Supervision supervision = Supervision::unsupervised;
  // Hyperplane trade-off for the supervised variants.
  double c = 1.0;
  // Sphere trade-offs for the supervised variants: margin, unlabeled, labeled.
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  /// When false only the head is fitted and the encoder stays at initialization.
  bool train_encoder = true;
  int max_step_halvings = 8;
  double smo_tolerance = 1e-12;
  int smo_max_sweeps = 1000;
  std::uint64_t seed = 0;

  ocsvm::SmoothingConfig smoothing() const { return {tau, lambda}; }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
    };
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw ConfigError("mu must be non-negative");
    positive(lambda, "lambda");
    positive(tau, "tau");
    positive(epsilon, "epsilon");
    positive(c, "c");
    positive(c1, "c1");
    positive(c2, "c2");
    positive(c3, "c3");
    positive(smo_tolerance, "smo_tolerance");
    if (max_outer_iters < 1) throw ConfigError("max_outer_iters must be at least 1");
    if (width < 1) throw ConfigError("width must be at least 1");
    if (max_step_halvings < 0) throw ConfigError("max_step_halvings must be non-negative");
    if (smo_max_sweeps < 1) throw ConfigError("smo_max_sweeps must be at least 1");
    if (method == Method::qp) {
      if (supervision != Supervision::unsupervised) {
        throw ConfigError("the qp method only supports unsupervised training");
      }
      if (lambda > 1.0) throw ConfigError("the qp method needs lambda <= 1");
    }
  }
};

inline const char* to_string(Head h) noexcept { return h == Head::hyperplane ? "hyperplane" : "sphere"; }
inline const char* to_string(Method m) noexcept { return m == Method::gradient ? "gradient" : "qp"; }
inline const char* to_string(Supervision s) noexcept {
  switch (s) {
    case Supervision::unsupervised: return "unsupervised";
    case Supervision::semi: return "semi";
    case Supervision::full: return "full";
  }
  return "unsupervised";
}

inline Head head_from_string(const std::string& s) {
  if (s == "hyperplane" || s == "svm") return Head::hyperplane;
  if (s == "sphere" || s == "svdd") return Head::sphere;
  throw ConfigError("unknown head '" + s + "' (expected hyperplane or sphere)");
}

inline Method method_from_string(const std::string& s) {
  if (s == "gradient") return Method::gradient;
  if (s == "qp") return Method::qp;
  throw ConfigError("unknown method '" + s + "' (expected gradient or qp)");
}

inline Supervision supervision_from_string(const std::string& s) {
  if (s == "unsupervised") return Supervision::unsupervised;
  if (s == "semi") return Supervision::semi;
  if (s == "full") return Supervision::full;
  throw ConfigError("unknown supervision '" + s + "' (expected unsupervised, semi or full)");
}

/// -(1/tau) log(e^{-tau a} + e^{-tau b}).
inline double smooth_min(double a, double b, double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  const double lo = std::min(a, b);
  return lo - log1pexp(-tau * std::abs(a - b)) / tau;
}

/// Weights of a and b in the derivative of smooth_min.
inline std::pair<double, double> smooth_min_weights(double a, double b, double tau) {
  const double wa = sigmoid(tau * (b - a));
  return {wa, 1.0 - wa};
}

// ---------------------------------------------------------------------------
// Encoder helpers

/// Orthonormal gate blocks and unit-norm biases drawn from the seed.
inline rnn::RnnParams init_params(rnn::CellKind cell, Index width, Index input_dim, std::uint64_t seed) {
  auto params = rnn::RnnParams::zeros(cell, width, input_dim);
  std::mt19937_64 rng(derive_seed(seed, "init"));
  for (auto& g : params.gates) {
    g.input = stiefel::init_block(width, input_dim, rng());
    g.recurrent = stiefel::init_orthogonal(width, width, rng()).value();
    if (params.has_bias()) g.bias = stiefel::init_orthogonal(width, 1, rng()).value().col(0);
  }
  return params;
}

inline std::vector<Vector> embed_all(const data::SequenceBatch& batch, const rnn::RnnParams& params,
                                     rnn::Pooling pooling) {
  std::vector<Vector> out;
  out.reserve(batch.size());
  for (const auto& item : batch) out.push_back(rnn::embed_sequence(item.values, params, pooling).h_bar);
  return out;
}

/// Sum over items of the encoder gradient for the given per-item upstreams.
inline rnn::RnnGradient encoder_gradient(const data::SequenceBatch& batch, const rnn::RnnParams& params,
                                         rnn::Pooling pooling, const std::vector<Vector>& upstream) {
  auto total = rnn::RnnGradient::zeros_like(params);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    total += rnn::embed_gradients(batch[i].values, params, pooling, upstream[i]);
  }
  return total;
}

/// Cayley step on every block using gradients taken at `params`.
inline rnn::RnnParams step_encoder(const rnn::RnnParams& params, const rnn::RnnGradient& grad, double mu) {
  rnn::RnnParams next = params;
  for (std::size_t g = 0; g < params.gates.size(); ++g) {
    const auto& cur = params.gates[g];
    const auto& dg = grad.gates[g];
    next.gates[g].input = stiefel::step_block(cur.input, dg.input, mu);
    next.gates[g].recurrent = stiefel::step_block(cur.recurrent, dg.recurrent, mu);
    if (params.has_bias()) {
      next.gates[g].bias = stiefel::step_block(Matrix(cur.bias), Matrix(dg.bias), mu).col(0);
    }
  }
  return next;
}

/// Largest orthogonality error over all encoder blocks.
inline double encoder_constraint_error(const rnn::RnnParams& params) {
  double worst = 0.0;
  for (const auto& g : params.gates) {
    worst = std::max({worst, stiefel::block_error(g.input), stiefel::block_error(g.recurrent)});
    if (g.bias.size() != 0) worst = std::max(worst, std::abs(g.bias.squaredNorm() - 1.0));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Objectives over flat head parameters

struct HeadEvaluation {
  double value = 0.0;
  Vector grad;
  std::vector<Vector> upstream;
};

/// Smoothed hyperplane objective, head = [w; rho].
struct HyperplaneObjective {
  ocsvm::SmoothingConfig cfg;

  static ocsvm::HyperplaneModel unpack(const Vector& head) {
    return {head.head(head.size() - 1), head(head.size() - 1)};
  }
  double value(const std::vector<Vector>& h, const Vector& head) const {
    return ocsvm::primal_objective(unpack(head), h, cfg);
  }
  HeadEvaluation evaluate(const std::vector<Vector>& h, const Vector& head) const {
    const auto model = unpack(head);
    auto g = ocsvm::primal_gradients(model, h, cfg);
    Vector grad(head.size());
    grad << g.grad_w, g.grad_rho;
    return {ocsvm::primal_objective(model, h, cfg), std::move(grad), std::move(g.upstream)};
  }
  void project(Vector&) const {}
};

/// Smoothed sphere objective, head = [c; R^2].
struct SphereObjective {
  ocsvm::SmoothingConfig cfg;

  static svdd::SphereModel unpack(const Vector& head) {
    return {head.head(head.size() - 1), head(head.size() - 1)};
  }
  double value(const std::vector<Vector>& h, const Vector& head) const {
    return svdd::primal_objective(unpack(head), h, cfg);
  }
  HeadEvaluation evaluate(const std::vector<Vector>& h, const Vector& head) const {
    const auto model = unpack(head);
    auto g = svdd::primal_gradients(model, h, cfg);
    Vector grad(head.size());
    grad << g.grad_center, g.grad_r_squared;
    return {svdd::primal_objective(model, h, cfg), std::move(grad), std::move(g.upstream)};
  }
  void project(Vector& head) const { head(head.size() - 1) = std::max(0.0, head(head.size() - 1)); }
};

/// Labels per item for the supervised objectives; nullopt marks unlabeled.
using PartialLabels = std::vector<std::optional<Sign>>;

/// Supervised hyperplane objective, head = [w; rho]:
///   ||w|| + C (sum_lab S(1 - y(w^T h + rho)) + sum_unlab smin(S(1 - (w^T h - rho)), S(1 + w^T h - rho)))
struct SupervisedHyperplaneObjective {
  double tau = 10.0;
  double c = 1.0;
  PartialLabels labels;

  HeadEvaluation evaluate(const std::vector<Vector>& h, const Vector& head) const {
    const Index m = head.size() - 1;
    const Vector w = head.head(m);
    const double rho = head(m);
    const double norm = w.norm();
    HeadEvaluation out{norm, Vector::Zero(head.size()), {}};
    if (norm > 0.0) out.grad.head(m) = w / norm;
    out.upstream.reserve(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double f = w.dot(h[i]);
      if (labels[i]) {
        const double y = to_double(*labels[i]);
        const double arg = 1.0 - y * (f + rho);
        out.value += c * ocsvm::smooth_hinge(arg, tau);
        const double d = -c * y * ocsvm::smooth_hinge_slope(arg, tau);
        out.grad.head(m) += d * h[i];
        out.grad(m) += d;
        out.upstream.push_back(d * w);
      } else {
        const double a1 = 1.0 - (f - rho);
        const double a2 = 1.0 + (f - rho);
        const double s1 = ocsvm::smooth_hinge(a1, tau);
        const double s2 = ocsvm::smooth_hinge(a2, tau);
        out.value += c * smooth_min(s1, s2, tau);
        const auto [w1, w2] = smooth_min_weights(s1, s2, tau);
        // d/d(f - rho) of the smoothed minimum.
        const double d = c * (-w1 * ocsvm::smooth_hinge_slope(a1, tau) + w2 * ocsvm::smooth_hinge_slope(a2, tau));
        out.grad.head(m) += d * h[i];
        out.grad(m) -= d;
        out.upstream.push_back(d * w);
      }
    }
    return out;
  }
  double value(const std::vector<Vector>& h, const Vector& head) const { return evaluate(h, head).value; }
  void project(Vector&) const {}
};

/// Supervised sphere objective, head = [c; R^2; g] with margin gamma = softplus(g):
///   R^2 - C1 gamma + C2 sum_unlab S(psi_i) + C3 sum_lab S(y_j psi_j + gamma)
struct SupervisedSphereObjective {
  double tau = 10.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  PartialLabels labels;

  HeadEvaluation evaluate(const std::vector<Vector>& h, const Vector& head) const {
    const Index m = head.size() - 2;
    const Vector center = head.head(m);
    const double r2 = head(m);
    const double g = head(m + 1);
    const double gamma = log1pexp(g);
    const double dgamma = sigmoid(g);
    HeadEvaluation out{r2 - c1 * gamma, Vector::Zero(head.size()), {}};
    out.grad(m) = 1.0;
    out.grad(m + 1) = -c1 * dgamma;
    out.upstream.reserve(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      const Vector diff = h[i] - center;
      const double psi = diff.squaredNorm() - r2;
      double dpsi = 0.0;
      if (labels[i]) {
        const double y = to_double(*labels[i]);
        const double arg = y * psi + gamma;
        out.value += c3 * ocsvm::smooth_hinge(arg, tau);
        const double s = c3 * ocsvm::smooth_hinge_slope(arg, tau);
        dpsi = s * y;
        out.grad(m + 1) += s * dgamma;
      } else {
        out.value += c2 * ocsvm::smooth_hinge(psi, tau);
        dpsi = c2 * ocsvm::smooth_hinge_slope(psi, tau);
      }
      out.grad.head(m) -= 2.0 * dpsi * diff;
      out.grad(m) -= dpsi;
      out.upstream.push_back(2.0 * dpsi * diff);
    }
    return out;
  }
  double value(const std::vector<Vector>& h, const Vector& head) const { return evaluate(h, head).value; }
  void project(Vector& head) const { head(head.size() - 2) = std::max(0.0, head(head.size() - 2)); }
};

// ---------------------------------------------------------------------------
// Trained detector

/// Dual-form head kept from the qp method. Scores use inner products with the
/// stored training embeddings.
struct DualHead {
  Head kind = Head::hyperplane;
  dual::DualSolution solution;
  /// rho for the hyperplane, R^2 for the sphere.
  double offset = 0.0;
  std::vector<Vector> support;
  Matrix gram;

  double decision_value(const Vector& h_bar) const {
    const Vector row = dual::gram_row(support, h_bar);
    if (kind == Head::hyperplane) return ocsvm::dual_decision_value(solution, offset, row);
    return svdd::dual_decision_value(solution, offset, gram, row, h_bar.squaredNorm());
  }
};

/// Supervised hyperplane; nominal side is w^T h + rho >= 0.
struct SupervisedHyperplane {
  Vector w;
  double rho = 0.0;
  double decision_value(const Vector& h_bar) const { return w.dot(h_bar) + rho; }
};

struct SupervisedSphere {
  svdd::SphereModel sphere;
  double gamma = 0.0;
  double decision_value(const Vector& h_bar) const { return sphere.decision_value(h_bar); }
};

using HeadModel =
    std::variant<ocsvm::HyperplaneModel, svdd::SphereModel, DualHead, SupervisedHyperplane, SupervisedSphere>;

struct TrainedDetector {
  rnn::RnnParams params;
  HeadModel head;
  TrainConfig config;
  /// Objective after initialization and after every outer iteration.
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  /// False if any inner SMO solve hit its sweep cap.
  bool smo_converged = true;

  Vector embed(const Matrix& sequence) const {
    return rnn::embed_sequence(sequence, params, config.pooling).h_bar;
  }

  /// Real-valued margin; larger is more nominal.
  double decision_value_embedded(const Vector& h_bar) const {
    return std::visit([&](const auto& m) { return m.decision_value(h_bar); }, head);
  }

  double decision_value(const Matrix& sequence) const { return decision_value_embedded(embed(sequence)); }

  Sign predict(const Matrix& sequence) const { return sign_of(decision_value(sequence)); }

  std::vector<double> decision_values(const data::SequenceBatch& batch) const {
    if (!batch.empty() && batch.dim() != params.input_dim) {
      throw DimensionError("data has dimension " + std::to_string(batch.dim()) + ", model expects " +
                           std::to_string(params.input_dim));
    }
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& item : batch) out.push_back(decision_value(item.values));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Loops

namespace detail {

inline bool accept(double candidate, double current) {
  return std::isfinite(candidate) && candidate <= current + 1e-12 * std::max(1.0, std::abs(current));
}

struct GradientLoopResult {
  rnn::RnnParams params;
  Vector head;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
};

/// Joint descent: Cayley steps on the encoder, plain steps on the head, both
/// from gradients at the iteration start, with step halving on increase.
template <class Objective>
GradientLoopResult gradient_loop(const data::SequenceBatch& batch, const TrainConfig& cfg,
                                 const Objective& objective, rnn::RnnParams params, Vector head) {
  GradientLoopResult res{std::move(params), std::move(head), {}, 0, false};
  auto h = embed_all(batch, res.params, cfg.pooling);
  double f = objective.value(h, res.head);
  if (!std::isfinite(f)) throw DivergenceError(0, "initial objective is not finite");
  res.trace.push_back(f);

  for (int iter = 1; iter <= cfg.max_outer_iters; ++iter) {
    const auto eval = objective.evaluate(h, res.head);
    rnn::RnnGradient enc_grad;
    if (cfg.train_encoder) enc_grad = encoder_gradient(batch, res.params, cfg.pooling, eval.upstream);

    double step = cfg.mu;
    bool accepted = false;
    for (int halving = 0; halving <= cfg.max_step_halvings && !accepted; ++halving, step *= 0.5) {
      rnn::RnnParams cand_params = res.params;
      if (cfg.train_encoder) {
        try {
          cand_params = step_encoder(res.params, enc_grad, step);
        } catch (const StepFailure&) {
          continue;
        }
      }
      Vector cand_head = res.head - step * eval.grad;
      objective.project(cand_head);
      auto cand_h = embed_all(batch, cand_params, cfg.pooling);
      const double cand_f = objective.value(cand_h, cand_head);
      if (accept(cand_f, f)) {
        accepted = true;
        res.params = std::move(cand_params);
        res.head = std::move(cand_head);
        h = std::move(cand_h);
        const double change = cand_f - f;
        f = cand_f;
        res.trace.push_back(f);
        res.iterations = iter;
        if (change * change <= cfg.epsilon) res.converged = true;
      }
    }
    if (!accepted) {
      throw DivergenceError(iter, "objective did not decrease after " +
                                      std::to_string(cfg.max_step_halvings) + " step halvings");
    }
    if (res.converged) break;
  }
  return res;
}

inline Vector mean_of(const std::vector<Vector>& h) {
  Vector m = Vector::Zero(h.front().size());
  for (const auto& v : h) m += v;
  return m / static_cast<double>(h.size());
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// w at the mean embedding, rho at the median projection onto it.
inline ocsvm::HyperplaneModel initial_hyperplane(const std::vector<Vector>& h) {
  const Vector w = mean_of(h);
  std::vector<double> proj;
  proj.reserve(h.size());
  for (const auto& v : h) proj.push_back(w.dot(v));
  return {w, median_of(std::move(proj))};
}

struct HeadDescentResult {
  Vector head;
  std::vector<double> trace;
  bool converged = false;
};

/// Head-only descent on fixed embeddings with backtracking (halve until the
/// objective decreases).
template <class Objective>
HeadDescentResult head_descent(const Objective& objective, const std::vector<Vector>& h, Vector head,
                               const TrainConfig& cfg) {
  HeadDescentResult res{std::move(head), {}, false};
  double f = objective.value(h, res.head);
  res.trace.push_back(f);
  for (int iter = 1; iter <= cfg.max_outer_iters; ++iter) {
    const auto eval = objective.evaluate(h, res.head);
    double step = cfg.mu;
    bool accepted = false;
    for (int halving = 0; halving <= cfg.max_step_halvings && !accepted; ++halving, step *= 0.5) {
      Vector cand = res.head - step * eval.grad;
      objective.project(cand);
      const double cand_f = objective.value(h, cand);
      if (accept(cand_f, f)) {
        accepted = true;
        const double change = cand_f - f;
        res.head = std::move(cand);
        f = cand_f;
        res.trace.push_back(f);
        if (change * change <= cfg.epsilon) res.converged = true;
      }
    }
    if (!accepted) throw DivergenceError(iter, "head objective did not decrease");
    if (res.converged) break;
  }
  return res;
}

inline void check_batch(const data::SequenceBatch& batch) {
  if (batch.empty()) throw EmptyInputError("training batch is empty");
}

}  // namespace detail

/// Fits an unsupervised head to fixed feature vectors (no encoder), e.g. raw
/// per-sequence means.
inline HeadModel fit_head(const std::vector<Vector>& features, const TrainConfig& cfg) {
  cfg.validate();
  if (features.empty()) throw EmptyInputError("no feature vectors to fit");
  if (cfg.head == Head::hyperplane) {
    const auto init = detail::initial_hyperplane(features);
    Vector head(init.w.size() + 1);
    head << init.w, init.rho;
    auto res = detail::head_descent(HyperplaneObjective{cfg.smoothing()}, features, head, cfg);
    return HyperplaneObjective::unpack(res.head);
  }
  const auto init = svdd::initial_sphere(features);
  Vector head(init.center.size() + 1);
  head << init.center, init.r_squared;
  auto res = detail::head_descent(SphereObjective{cfg.smoothing()}, features, head, cfg);
  return SphereObjective::unpack(res.head);
}

/// Unsupervised smoothed-primal training for either head.
inline TrainedDetector train_gradient(const data::SequenceBatch& batch, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.method != Method::gradient) throw ConfigError("train_gradient needs method = gradient");
  detail::check_batch(batch);
  auto params = init_params(cfg.cell, cfg.width, batch.dim(), cfg.seed);
  const auto h0 = embed_all(batch, params, cfg.pooling);
  TrainedDetector out{{}, {}, cfg, {}, 0, false, true};
  if (cfg.head == Head::hyperplane) {
    const auto init = detail::initial_hyperplane(h0);
    Vector head(init.w.size() + 1);
    head << init.w, init.rho;
    auto res = detail::gradient_loop(batch, cfg, HyperplaneObjective{cfg.smoothing()}, std::move(params), head);
    out.params = std::move(res.params);
    out.head = HyperplaneObjective::unpack(res.head);
    out.trace = std::move(res.trace);
    out.iterations = res.iterations;
    out.converged = res.converged;
  } else {
    const auto init = svdd::initial_sphere(h0);
    Vector head(init.center.size() + 1);
    head << init.center, init.r_squared;
    auto res = detail::gradient_loop(batch, cfg, SphereObjective{cfg.smoothing()}, std::move(params), head);
    out.params = std::move(res.params);
    out.head = SphereObjective::unpack(res.head);
    out.trace = std::move(res.trace);
    out.iterations = res.iterations;
    out.converged = res.converged;
  }
  return out;
}

namespace detail {

/// Dual objective for fixed multipliers: kappa for the hyperplane, pi for the sphere.
inline double dual_value(Head kind, const dual::DualSolution& sol, const Matrix& gram) {
  return kind == Head::hyperplane ? ocsvm::dual_objective(sol, gram) : svdd::dual_objective(sol, gram);
}

inline dual::SmoResult dual_solve(Head kind, const Matrix& gram, const dual::DualSolution& start,
                                  const TrainConfig& cfg) {
  return kind == Head::hyperplane ? ocsvm::smo_solve(gram, start, cfg.smo_tolerance, cfg.smo_max_sweeps)
                                  : svdd::smo_solve(gram, start, cfg.smo_tolerance, cfg.smo_max_sweeps);
}

/// d(dual objective)/d h_i with the multipliers held fixed.
inline std::vector<Vector> dual_upstream(Head kind, const dual::DualSolution& sol, const std::vector<Vector>& h) {
  const Vector v = ocsvm::primal_from_dual(sol, h);
  std::vector<Vector> up;
  up.reserve(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double a = sol.alpha(static_cast<Index>(i));
    up.push_back(kind == Head::hyperplane ? Vector(a * v) : Vector(2.0 * a * (v - h[i])));
  }
  return up;
}

}  // namespace detail

/// Alternates an SMO solve for the multipliers with one Cayley pass over the
/// encoder that decreases the dual objective at those multipliers.
inline TrainedDetector train_qp(const data::SequenceBatch& batch, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.method != Method::qp) throw ConfigError("train_qp needs method = qp");
  detail::check_batch(batch);
  if (batch.size() < 2) throw InsufficientDataError("the qp method needs at least two sequences");
  const Head kind = cfg.head;
  TrainedDetector out{init_params(cfg.cell, cfg.width, batch.dim(), cfg.seed), {}, cfg, {}, 0, false, true};

  auto h = embed_all(batch, out.params, cfg.pooling);
  Matrix gram = dual::gram_matrix(h);
  auto smo = detail::dual_solve(kind, gram, dual::DualSolution::uniform(static_cast<Index>(h.size()), cfg.lambda), cfg);
  out.smo_converged = smo.converged;
  dual::DualSolution sol = smo.solution;
  double value = detail::dual_value(kind, sol, gram);
  out.trace.push_back(value);

  for (int iter = 1; iter <= cfg.max_outer_iters; ++iter) {
    if (cfg.train_encoder && cfg.mu > 0.0) {
      const auto up = detail::dual_upstream(kind, sol, h);
      const auto grad = encoder_gradient(batch, out.params, cfg.pooling, up);
      double step = cfg.mu;
      bool accepted = false;
      for (int halving = 0; halving <= cfg.max_step_halvings && !accepted; ++halving, step *= 0.5) {
        rnn::RnnParams cand;
        try {
          cand = step_encoder(out.params, grad, step);
        } catch (const StepFailure&) {
          continue;
        }
        auto cand_h = embed_all(batch, cand, cfg.pooling);
        Matrix cand_gram = dual::gram_matrix(cand_h);
        if (detail::accept(detail::dual_value(kind, sol, cand_gram), value)) {
          accepted = true;
          out.params = std::move(cand);
          h = std::move(cand_h);
          gram = std::move(cand_gram);
        }
      }
      if (!accepted) {
        throw DivergenceError(iter, "dual objective did not decrease after " +
                                        std::to_string(cfg.max_step_halvings) + " step halvings");
      }
    }
    smo = detail::dual_solve(kind, gram, sol, cfg);
    out.smo_converged = out.smo_converged && smo.converged;
    sol = smo.solution;
    const double next = detail::dual_value(kind, sol, gram);
    if (!std::isfinite(next)) throw DivergenceError(iter, "dual objective is not finite");
    const double change = next - value;
    value = next;
    out.trace.push_back(value);
    out.iterations = iter;
    if (change * change <= cfg.epsilon) {
      out.converged = true;
      break;
    }
  }

  DualHead head{kind, sol, 0.0, h, gram};
  head.offset = kind == Head::hyperplane ? ocsvm::recover_rho_or_midpoint(sol, gram)
                                         : svdd::recover_r_squared_or_midpoint(sol, gram);
  out.head = std::move(head);
  return out;
}

/// Semi-supervised (labeled and unlabeled items) or fully supervised gradient training.
inline TrainedDetector train_semisupervised_gradient(const data::SequenceBatch& batch, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.method != Method::gradient) throw ConfigError("supervised training needs method = gradient");
  detail::check_batch(batch);
  PartialLabels labels;
  std::size_t labeled = 0;
  for (const auto& item : batch) {
    labels.push_back(item.label);
    if (item.label) ++labeled;
  }
  const std::size_t unlabeled = batch.size() - labeled;
  if (cfg.supervision == Supervision::semi && (labeled == 0 || unlabeled == 0)) {
    throw ConfigError("semi-supervised training needs both labeled and unlabeled sequences (" +
                      std::to_string(labeled) + " labeled, " + std::to_string(unlabeled) + " unlabeled)");
  }
  if (cfg.supervision == Supervision::full && unlabeled != 0) {
    throw ConfigError("fully supervised training needs every sequence labeled (" + std::to_string(unlabeled) +
                      " unlabeled)");
  }
  if (cfg.supervision == Supervision::unsupervised) {
    throw ConfigError("supervised training called with supervision = unsupervised");
  }

  auto params = init_params(cfg.cell, cfg.width, batch.dim(), cfg.seed);
  const auto h0 = embed_all(batch, params, cfg.pooling);
  TrainedDetector out{{}, {}, cfg, {}, 0, false, true};
  if (cfg.head == Head::hyperplane) {
    const auto init = detail::initial_hyperplane(h0);
    Vector head(init.w.size() + 1);
    head << init.w, -init.rho;
    SupervisedHyperplaneObjective obj{cfg.tau, cfg.c, labels};
    auto res = detail::gradient_loop(batch, cfg, obj, std::move(params), head);
    const Index m = res.head.size() - 1;
    out.params = std::move(res.params);
    out.head = SupervisedHyperplane{res.head.head(m), res.head(m)};
    out.trace = std::move(res.trace);
    out.iterations = res.iterations;
    out.converged = res.converged;
  } else {
    const auto init = svdd::initial_sphere(h0);
    Vector head(init.center.size() + 2);
    head << init.center, init.r_squared, -4.0;
    SupervisedSphereObjective obj{cfg.tau, cfg.c1, cfg.c2, cfg.c3, labels};
    auto res = detail::gradient_loop(batch, cfg, obj, std::move(params), head);
    const Index m = res.head.size() - 2;
    out.params = std::move(res.params);
    out.head = SupervisedSphere{{res.head.head(m), res.head(m)}, log1pexp(res.head(m + 1))};
    out.trace = std::move(res.trace);
    out.iterations = res.iterations;
    out.converged = res.converged;
  }
  return out;
}

/// Dispatches on method and supervision.
inline TrainedDetector train(const data::SequenceBatch& batch, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.supervision != Supervision::unsupervised) return train_semisupervised_gradient(batch, cfg);
  return cfg.method == Method::gradient ? train_gradient(batch, cfg) : train_qp(batch, cfg);
}

}  // namespace seqoc::trainer
