#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "seqoc/model_io.hpp"
#include "seqoc/trainer.hpp"

using namespace seqoc;
using namespace seqoc::trainer;

namespace {

data::SequenceBatch random_batch(int n, Index p, std::mt19937_64& rng) {
  data::SequenceBatch b(p);
  std::uniform_int_distribution<Index> len(2, 6);
  for (int i = 0; i < n; ++i) {
    b.push_back({std::to_string(i), oracle::gaussian(p, len(rng), rng, 0.7), std::nullopt});
  }
  return b;
}

data::SequenceBatch task(std::uint64_t seed, std::size_t normal = 40, std::size_t anomalous = 0) {
  data::GeneratorSpec spec{2, 5, 10, {0.5, 0.75, 0.0}, {0.5, 7.5, 0.0}};
  return data::fit_and_normalize(data::synth_generate(spec, normal, anomalous, seed)).first;
}

/// Copy of b with the labels of every `stride`-th item removed.
data::SequenceBatch drop_labels(const data::SequenceBatch& b, std::size_t stride) {
  data::SequenceBatch out(b.dim());
  for (std::size_t i = 0; i < b.size(); ++i) {
    auto item = b[i];
    if (i % stride == 0) item.label.reset();
    out.push_back(item);
  }
  return out;
}

TrainConfig small_config(Head head, Method method) {
  TrainConfig c;
  c.width = 3;
  c.head = head;
  c.method = method;
  c.mu = 0.1;
  c.epsilon = 1e-14;
  c.max_outer_iters = 15;
  return c;
}

/// Total objective for a flat encoder vector and head.
template <class Objective>
double total(const Objective& obj, const data::SequenceBatch& b, const rnn::RnnParams& shape,
             rnn::Pooling pooling, const Vector& theta, const Vector& head) {
  return obj.value(embed_all(b, rnn::unflatten(shape, theta), pooling), head);
}

template <class Objective>
void check_total_gradient(const Objective& obj, const data::SequenceBatch& b, const rnn::RnnParams& params,
                          rnn::Pooling pooling, const Vector& head) {
  const auto h = embed_all(b, params, pooling);
  const auto eval = obj.evaluate(h, head);
  const Vector analytic = rnn::flatten(encoder_gradient(b, params, pooling, eval.upstream));
  const Vector theta = rnn::flatten(params);
  const Vector fd = oracle::central_difference(
      [&](const Vector& t) { return total(obj, b, params, pooling, t, head); }, theta);
  EXPECT_LE(oracle::max_relative_error(analytic, fd), 1e-4);
  const Vector fd_head = oracle::central_difference([&](const Vector& v) { return obj.value(h, v); }, head);
  EXPECT_LE(oracle::max_relative_error(eval.grad, fd_head), 1e-4);
}

}  // namespace

TEST(SmoothMin, Examples) {
  EXPECT_NEAR(smooth_min(0, 0, 1), -std::log(2.0), 1e-15);
  EXPECT_NEAR(smooth_min(1, 3, 1), 1 - std::log1p(std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(smooth_min(1, 3, 100), 1.0, 1e-10);
  EXPECT_LE(smooth_min(2, 5, 3), 2.0);
  EXPECT_TRUE(std::isfinite(smooth_min(1e5, -1e5, 100)));
}

TEST(SmoothMin, WeightsAreDerivative) {
  const double a = 0.3, b = 0.5, tau = 4;
  const auto [wa, wb] = smooth_min_weights(a, b, tau);
  EXPECT_NEAR(wa, (smooth_min(a + 1e-6, b, tau) - smooth_min(a - 1e-6, b, tau)) / 2e-6, 1e-8);
  EXPECT_NEAR(wb, (smooth_min(a, b + 1e-6, tau) - smooth_min(a, b - 1e-6, tau)) / 2e-6, 1e-8);
}

TEST(Config, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tau = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.method = Method::qp;
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.method = Method::qp;
  c.supervision = Supervision::semi;
  EXPECT_THROW(c.validate(), ConfigError);
}

class TotalGradient : public ::testing::TestWithParam<std::tuple<rnn::CellKind, rnn::Pooling>> {};

TEST_P(TotalGradient, AllObjectives) {
  const auto [cell, pooling] = GetParam();
  std::mt19937_64 rng(31 + static_cast<int>(cell) * 5 + static_cast<int>(pooling));
  const auto b = random_batch(5, 2, rng);
  const auto params = init_params(cell, 3, 2, rng());
  const Vector hp = oracle::gaussian(4, 1, rng).col(0);
  const Vector sp = (Vector(4) << oracle::gaussian(3, 1, rng, 0.3).col(0), 0.4).finished();
  check_total_gradient(HyperplaneObjective{{10.0, 0.5}}, b, params, pooling, hp);
  check_total_gradient(SphereObjective{{10.0, 0.5}}, b, params, pooling, sp);

  PartialLabels labels{Sign::positive, std::nullopt, Sign::negative, std::nullopt, Sign::positive};
  check_total_gradient(SupervisedHyperplaneObjective{10.0, 1.0, labels}, b, params, pooling, hp);
  const Vector ssp = (Vector(5) << sp, -0.5).finished();
  check_total_gradient(SupervisedSphereObjective{10.0, 1.0, 1.0, 1.0, labels}, b, params, pooling, ssp);
}

INSTANTIATE_TEST_SUITE_P(CellsAndPoolings, TotalGradient,
                         ::testing::Combine(::testing::Values(rnn::CellKind::lstm, rnn::CellKind::gru),
                                            ::testing::Values(rnn::Pooling::mean, rnn::Pooling::last,
                                                              rnn::Pooling::max)));

class Loops : public ::testing::TestWithParam<std::tuple<Head, Method>> {};

TEST_P(Loops, TraceDescendsAndConstraintsHold) {
  const auto [head, method] = GetParam();
  const auto b = task(3);
  const auto det = train(b, small_config(head, method));
  ASSERT_GE(det.trace.size(), 2u);
  for (std::size_t k = 1; k < det.trace.size(); ++k) {
    EXPECT_LE(det.trace[k], det.trace[k - 1] + 1e-12 * std::max(1.0, std::abs(det.trace[k - 1])));
  }
  EXPECT_LE(encoder_constraint_error(det.params), 1e-8);
  EXPECT_TRUE(det.smo_converged);
}

TEST_P(Loops, Deterministic) {
  const auto [head, method] = GetParam();
  const auto b = task(4);
  const auto cfg = small_config(head, method);
  const auto a = train(b, cfg);
  const auto c = train(b, cfg);
  EXPECT_EQ(rnn::flatten(a.params), rnn::flatten(c.params));
  EXPECT_EQ(a.trace, c.trace);
  EXPECT_EQ(a.decision_values(b), c.decision_values(b));
}

TEST_P(Loops, ModelJsonRoundTrip) {
  const auto [head, method] = GetParam();
  const auto b = task(5);
  const auto det = train(b, small_config(head, method));
  const auto back = model_io::from_json(nlohmann::json::parse(model_io::to_json({det, std::nullopt}).dump()));
  EXPECT_EQ(back.detector.decision_values(b), det.decision_values(b));
}

INSTANTIATE_TEST_SUITE_P(HeadsAndMethods, Loops,
                         ::testing::Combine(::testing::Values(Head::hyperplane, Head::sphere),
                                            ::testing::Values(Method::gradient, Method::qp)));

TEST(Train, FrozenEncoderKeepsInitialization) {
  auto cfg = small_config(Head::sphere, Method::gradient);
  cfg.train_encoder = false;
  const auto det = train(task(6), cfg);
  EXPECT_EQ(rnn::flatten(det.params), rnn::flatten(init_params(cfg.cell, cfg.width, 2, cfg.seed)));
}

TEST(Train, HugeStepDivergesOrDescends) {
  auto cfg = small_config(Head::hyperplane, Method::gradient);
  cfg.mu = 1e9;
  cfg.max_step_halvings = 0;
  try {
    const auto det = train(task(7), cfg);
    for (std::size_t k = 1; k < det.trace.size(); ++k) EXPECT_LE(det.trace[k], det.trace[k - 1] + 1e-9);
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.iteration(), 1);
  }
}

TEST(Train, EmptyBatchRejected) {
  EXPECT_THROW(train(data::SequenceBatch(2), small_config(Head::sphere, Method::gradient)), EmptyInputError);
}

TEST(Train, QpDualHeadMatchesPrimalCenter) {
  const auto b = task(8, 12);
  const auto det = train(b, small_config(Head::sphere, Method::qp));
  const auto& head = std::get<DualHead>(det.head);
  const Vector c = svdd::center_from_dual(head.solution, head.support);
  for (const auto& item : b) {
    const Vector h = det.embed(item.values);
    EXPECT_NEAR(det.decision_value_embedded(h), head.offset - (h - c).squaredNorm(), 1e-10);
  }
}

TEST(Semi, FullySupervisedSeparable) {
  // Two labeled clusters along +x and -x.
  data::SequenceBatch b(1);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 0.05);
  for (int i = 0; i < 20; ++i) {
    const double center = i % 2 == 0 ? 0.8 : -0.8;
    Matrix x(1, 4);
    for (Index j = 0; j < 4; ++j) x(0, j) = center + g(rng);
    b.push_back({std::to_string(i), x, i % 2 == 0 ? Sign::positive : Sign::negative});
  }
  auto cfg = small_config(Head::hyperplane, Method::gradient);
  cfg.supervision = Supervision::full;
  cfg.train_encoder = false;
  cfg.max_outer_iters = 300;
  const auto det = train(b, cfg);
  for (const auto& item : b) EXPECT_EQ(det.predict(item.values), *item.label);
}

TEST(Semi, ModeLabelMismatch) {
  const auto b = task(10, 6);
  auto cfg = small_config(Head::hyperplane, Method::gradient);
  cfg.supervision = Supervision::semi;
  EXPECT_THROW(train(b, cfg), ConfigError);
  cfg.supervision = Supervision::full;
  EXPECT_THROW(train(drop_labels(b, 1), cfg), ConfigError);
}

TEST(Semi, SurrogateBoundsExactObjective) {
  // Each slack is an S_tau term, so surrogate minus exact lies within
  // [-C log2/tau, C log2/tau] per term (the smoothed minimum subtracts up to log2/tau).
  std::mt19937_64 rng(11);
  const double tau = 10, c = 1;
  for (int t = 0; t < 50; ++t) {
    std::vector<Vector> h;
    PartialLabels labels;
    for (int i = 0; i < 6; ++i) {
      h.push_back(oracle::gaussian(3, 1, rng).col(0));
      labels.push_back(i % 3 == 0 ? std::nullopt : std::optional<Sign>(i % 2 ? Sign::positive : Sign::negative));
    }
    const Vector w = oracle::gaussian(3, 1, rng).col(0);
    const double rho = oracle::gaussian(1, 1, rng)(0, 0);
    Vector head(4);
    head << w, rho;
    const double surrogate = SupervisedHyperplaneObjective{tau, c, labels}.value(h, head);
    double exact = w.norm();
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double f = w.dot(h[i]);
      if (labels[i]) {
        exact += c * ocsvm::hinge(1 - to_double(*labels[i]) * (f + rho));
      } else {
        exact += c * std::min(ocsvm::hinge(1 - (f - rho)), ocsvm::hinge(1 + (f - rho)));
      }
    }
    EXPECT_GE(surrogate, exact - 6 * c * std::log(2.0) / tau - 1e-12);
    EXPECT_LE(surrogate, exact + 6 * c * std::log(2.0) / tau + 1e-12);
  }
}

TEST(Semi, SphereTrainsWithMixedLabels) {
  const auto b = drop_labels(task(12, 30, 6), 2);
  auto cfg = small_config(Head::sphere, Method::gradient);
  cfg.supervision = Supervision::semi;
  const auto det = train(b, cfg);
  EXPECT_GE(std::get<SupervisedSphere>(det.head).gamma, 0.0);
  EXPECT_LE(encoder_constraint_error(det.params), 1e-8);
}

TEST(FitHead, BaselineOnFeatures) {
  std::vector<Vector> f;
  std::mt19937_64 rng(13);
  for (int i = 0; i < 30; ++i) f.push_back(oracle::gaussian(2, 1, rng, 0.2).col(0).array() + 1.0);
  TrainConfig cfg;
  const auto model = std::get<ocsvm::HyperplaneModel>(fit_head(f, cfg));
  int inside = 0;
  for (const auto& v : f) inside += model.decision_value(v) >= 0;
  EXPECT_GE(inside, 10);
}
