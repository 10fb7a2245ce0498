#pragma once

// Versioned JSON document holding a trained detector: encoder, head,
// normalization stats, config echo, and training trace.

#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "seqoc/data.hpp"
#include "seqoc/error.hpp"
#include "seqoc/rnn.hpp"
#include "seqoc/trainer.hpp"

namespace seqoc::model_io {

inline constexpr int format_version = 1;

inline nlohmann::json config_to_json(const trainer::TrainConfig& c) {
  return {{"mu", c.mu},
          {"lambda", c.lambda},
          {"tau", c.tau},
          {"epsilon", c.epsilon},
          {"max_outer_iters", c.max_outer_iters},
          {"cell", rnn::to_string(c.cell)},
          {"width", c.width},
          {"pooling", rnn::to_string(c.pooling)},
          {"head", trainer::to_string(c.head)},
          {"method", trainer::to_string(c.method)},
          {"supervision", trainer::to_string(c.supervision)},
          {"c", c.c},
          {"c1", c.c1},
          {"c2", c.c2},
          {"c3", c.c3},
          {"train_encoder", c.train_encoder},
          {"max_step_halvings", c.max_step_halvings},
          {"smo_tolerance", c.smo_tolerance},
          {"smo_max_sweeps", c.smo_max_sweeps},
          {"seed", c.seed}};
}

inline trainer::TrainConfig config_from_json(const nlohmann::json& j) {
  trainer::TrainConfig c;
  c.mu = j.at("mu").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.tau = j.at("tau").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.max_outer_iters = j.at("max_outer_iters").get<int>();
  c.cell = rnn::cell_from_string(j.at("cell").get<std::string>());
  c.width = j.at("width").get<Index>();
  c.pooling = rnn::pooling_from_string(j.at("pooling").get<std::string>());
  c.head = trainer::head_from_string(j.at("head").get<std::string>());
  c.method = trainer::method_from_string(j.at("method").get<std::string>());
  c.supervision = trainer::supervision_from_string(j.at("supervision").get<std::string>());
  c.c = j.at("c").get<double>();
  c.c1 = j.at("c1").get<double>();
  c.c2 = j.at("c2").get<double>();
  c.c3 = j.at("c3").get<double>();
  c.train_encoder = j.at("train_encoder").get<bool>();
  c.max_step_halvings = j.at("max_step_halvings").get<int>();
  c.smo_tolerance = j.at("smo_tolerance").get<double>();
  c.smo_max_sweeps = j.at("smo_max_sweeps").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace detail {

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

struct HeadWriter {
  nlohmann::json operator()(const ocsvm::HyperplaneModel& m) const {
    return {{"type", "hyperplane"}, {"w", to_std(m.w)}, {"rho", m.rho}};
  }
  nlohmann::json operator()(const svdd::SphereModel& m) const {
    return {{"type", "sphere"}, {"center", to_std(m.center)}, {"r_squared", m.r_squared}};
  }
  nlohmann::json operator()(const trainer::DualHead& m) const {
    nlohmann::json support = nlohmann::json::array();
    for (const auto& h : m.support) support.push_back(to_std(h));
    return {{"type", m.kind == trainer::Head::hyperplane ? "dual_hyperplane" : "dual_sphere"},
            {"alpha", to_std(m.solution.alpha)},
            {"lambda", m.solution.lambda},
            {"offset", m.offset},
            {"support", std::move(support)}};
  }
  nlohmann::json operator()(const trainer::SupervisedHyperplane& m) const {
    return {{"type", "supervised_hyperplane"}, {"w", to_std(m.w)}, {"rho", m.rho}};
  }
  nlohmann::json operator()(const trainer::SupervisedSphere& m) const {
    return {{"type", "supervised_sphere"},
            {"center", to_std(m.sphere.center)},
            {"r_squared", m.sphere.r_squared},
            {"gamma", m.gamma}};
  }
};

inline Vector vec(const nlohmann::json& j, Index expected) {
  Vector v = rnn::vector_from_json(j);
  if (v.size() != expected) throw DataError("model vector has length " + std::to_string(v.size()) +
                                            ", expected " + std::to_string(expected));
  return v;
}

inline trainer::HeadModel read_head(const nlohmann::json& j, Index m) {
  const auto type = j.at("type").get<std::string>();
  if (type == "hyperplane") return ocsvm::HyperplaneModel{vec(j.at("w"), m), j.at("rho").get<double>()};
  if (type == "sphere") return svdd::SphereModel{vec(j.at("center"), m), j.at("r_squared").get<double>()};
  if (type == "supervised_hyperplane") {
    return trainer::SupervisedHyperplane{vec(j.at("w"), m), j.at("rho").get<double>()};
  }
  if (type == "supervised_sphere") {
    return trainer::SupervisedSphere{{vec(j.at("center"), m), j.at("r_squared").get<double>()},
                                     j.at("gamma").get<double>()};
  }
  if (type == "dual_hyperplane" || type == "dual_sphere") {
    trainer::DualHead head;
    head.kind = type == "dual_hyperplane" ? trainer::Head::hyperplane : trainer::Head::sphere;
    head.solution.alpha = rnn::vector_from_json(j.at("alpha"));
    head.solution.lambda = j.at("lambda").get<double>();
    head.offset = j.at("offset").get<double>();
    for (const auto& h : j.at("support")) head.support.push_back(vec(h, m));
    if (static_cast<Index>(head.support.size()) != head.solution.alpha.size()) {
      throw DataError("dual head has " + std::to_string(head.support.size()) + " support vectors for " +
                      std::to_string(head.solution.alpha.size()) + " multipliers");
    }
    head.gram = dual::gram_matrix(head.support);
    return head;
  }
  throw DataError("unknown head type '" + type + "'");
}

}  // namespace detail

/// A detector plus the normalization applied to its inputs.
struct ModelDocument {
  trainer::TrainedDetector detector;
  std::optional<data::NormalizationStats> normalization;
};

inline nlohmann::json to_json(const ModelDocument& doc) {
  const auto& d = doc.detector;
  nlohmann::json j = {{"format", "seqoc-model"},
                      {"version", format_version},
                      {"encoder", rnn::params_to_json(d.params)},
                      {"pooling", rnn::to_string(d.config.pooling)},
                      {"head", std::visit(detail::HeadWriter{}, d.head)},
                      {"config", config_to_json(d.config)},
                      {"trace", d.trace},
                      {"iterations", d.iterations},
                      {"converged", d.converged},
                      {"smo_converged", d.smo_converged}};
  j["normalization"] = doc.normalization ? data::stats_to_json(*doc.normalization) : nlohmann::json(nullptr);
  return j;
}

inline ModelDocument from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "seqoc-model") throw DataError("not a seqoc model document");
    if (j.value("version", 0) != format_version) {
      throw DataError("unsupported model version " + std::to_string(j.value("version", 0)));
    }
    ModelDocument doc;
    auto& d = doc.detector;
    d.params = rnn::params_from_json(j.at("encoder"));
    d.config = config_from_json(j.at("config"));
    d.config.pooling = rnn::pooling_from_string(j.at("pooling").get<std::string>());
    d.head = detail::read_head(j.at("head"), d.params.width);
    d.trace = j.at("trace").get<std::vector<double>>();
    d.iterations = j.at("iterations").get<int>();
    d.converged = j.at("converged").get<bool>();
    d.smo_converged = j.at("smo_converged").get<bool>();
    if (!j.at("normalization").is_null()) {
      doc.normalization = data::stats_from_json(j.at("normalization"));
      if (doc.normalization->dim() != d.params.input_dim) {
        throw DataError("normalization dimension does not match the encoder input dimension");
      }
    }
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  }
}

inline ModelDocument load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

}  // namespace seqoc::model_io
