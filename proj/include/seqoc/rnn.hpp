#pragma once

// LSTM (no peepholes) and GRU cells, pooled sequence embeddings, and exact
// reverse-mode gradients of a pooled embedding with respect to every cell
// parameter.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqoc/common.hpp"
#include "seqoc/error.hpp"

namespace seqoc::rnn {

enum class CellKind { lstm, gru };
enum class Pooling { mean, last, max };

/// Gate order for LSTM blocks: candidate z, input s, forget f, output o.
enum LstmGate : std::size_t { lstm_candidate = 0, lstm_input = 1, lstm_forget = 2, lstm_output = 3 };
/// Gate order for GRU blocks: update z~, reset r, candidate h~.
enum GruGate : std::size_t { gru_update = 0, gru_reset = 1, gru_candidate = 2 };

inline std::size_t gate_count(CellKind cell) noexcept { return cell == CellKind::lstm ? 4 : 3; }

/// One affine gate: W (m x p) on the input, R (m x m) on the previous output,
/// and a bias b (m). GRU gates carry an empty bias.
struct GateBlock {
  Matrix input;
  Matrix recurrent;
  Vector bias;
};

struct RnnParams {
  CellKind cell = CellKind::lstm;
  Index width = 0;      // m
  Index input_dim = 0;  // p
  std::vector<GateBlock> gates;

  static RnnParams zeros(CellKind cell, Index width, Index input_dim) {
    if (width < 1 || input_dim < 1) {
      throw ShapeError("embedding width and input dimension must be positive");
    }
    RnnParams params{cell, width, input_dim, {}};
    for (std::size_t g = 0; g < gate_count(cell); ++g) {
      params.gates.push_back({Matrix::Zero(width, input_dim), Matrix::Zero(width, width),
                              cell == CellKind::lstm ? Vector::Zero(width) : Vector()});
    }
    return params;
  }

  bool has_bias() const noexcept { return cell == CellKind::lstm; }

  /// 4m(m+p+1) for LSTM, 3m(m+p) for GRU.
  Index parameter_count() const noexcept {
    const Index per_gate = width * input_dim + width * width + (has_bias() ? width : 0);
    return static_cast<Index>(gate_count(cell)) * per_gate;
  }

  void validate() const {
    if (gates.size() != gate_count(cell)) {
      throw ShapeError(std::string(cell == CellKind::lstm ? "LSTM" : "GRU") + " needs " +
                       std::to_string(gate_count(cell)) + " gate blocks");
    }
    for (const auto& g : gates) {
      if (g.input.rows() != width || g.input.cols() != input_dim ||
          g.recurrent.rows() != width || g.recurrent.cols() != width ||
          g.bias.size() != (has_bias() ? width : 0)) {
        throw ShapeError("gate block shapes disagree with width " + std::to_string(width) +
                         " and input dimension " + std::to_string(input_dim));
      }
    }
  }
};

/// Gradient with the same block layout as RnnParams.
struct RnnGradient {
  std::vector<GateBlock> gates;

  static RnnGradient zeros_like(const RnnParams& params) {
    RnnGradient grad;
    for (const auto& g : params.gates) {
      grad.gates.push_back({Matrix::Zero(g.input.rows(), g.input.cols()),
                            Matrix::Zero(g.recurrent.rows(), g.recurrent.cols()),
                            Vector::Zero(g.bias.size())});
    }
    return grad;
  }

  RnnGradient& operator+=(const RnnGradient& other) {
    for (std::size_t i = 0; i < gates.size(); ++i) {
      gates[i].input += other.gates[i].input;
      gates[i].recurrent += other.gates[i].recurrent;
      gates[i].bias += other.gates[i].bias;
    }
    return *this;
  }
};

/// Packs every block (W, R, b per gate, column-major) into one vector.
template <class Blocks>
Vector flatten(const Blocks& blocks) {
  Index total = 0;
  for (const auto& g : blocks.gates) total += g.input.size() + g.recurrent.size() + g.bias.size();
  Vector out(total);
  Index at = 0;
  for (const auto& g : blocks.gates) {
    for (const auto* part : {&g.input, &g.recurrent}) {
      out.segment(at, part->size()) = Eigen::Map<const Vector>(part->data(), part->size());
      at += part->size();
    }
    out.segment(at, g.bias.size()) = g.bias;
    at += g.bias.size();
  }
  return out;
}

/// Inverse of flatten, using `like` for the block layout.
inline RnnParams unflatten(const RnnParams& like, const Vector& flat) {
  RnnParams out = like;
  Index at = 0;
  for (auto& g : out.gates) {
    for (auto* part : {&g.input, &g.recurrent}) {
      Eigen::Map<Vector>(part->data(), part->size()) = flat.segment(at, part->size());
      at += part->size();
    }
    g.bias = flat.segment(at, g.bias.size());
    at += g.bias.size();
  }
  if (at != flat.size()) {
    throw ShapeError("flat parameter vector has the wrong length");
  }
  return out;
}

struct LstmState {
  Vector h;
  Vector c;
};

/// Pooled sequence representation. c_bar is only produced by LSTM cells.
struct Embedding {
  Vector h_bar;
  std::optional<Vector> c_bar;
};

namespace detail {

inline void check_step_dims(const Vector& x, const Vector& h_prev, const RnnParams& params) {
  if (x.size() != params.input_dim) {
    throw DimensionError("input has dimension " + std::to_string(x.size()) + ", cell expects " +
                         std::to_string(params.input_dim));
  }
  if (h_prev.size() != params.width) {
    throw DimensionError("previous output has width " + std::to_string(h_prev.size()) +
                         ", cell expects " + std::to_string(params.width));
  }
}

inline Vector affine(const GateBlock& g, const Vector& x, const Vector& h_prev) {
  Vector a = g.input * x + g.recurrent * h_prev;
  if (g.bias.size() != 0) a += g.bias;
  return a;
}

inline Vector logistic(const Vector& a) { return a.unaryExpr([](double v) { return sigmoid(v); }); }

inline Vector tanh(const Vector& a) { return a.array().tanh().matrix(); }

/// Per-step intermediates kept for the backward pass.
struct LstmCache {
  Vector x, h_prev, c_prev, z, s, f, o, c, tanh_c, h;
};

struct GruCache {
  Vector x, h_prev, update, reset, recurrent_candidate, candidate, h;
};

inline LstmCache lstm_forward(const Vector& x, const Vector& h_prev, const Vector& c_prev,
                              const RnnParams& p) {
  LstmCache k;
  k.x = x;
  k.h_prev = h_prev;
  k.c_prev = c_prev;
  k.z = tanh(affine(p.gates[lstm_candidate], x, h_prev));
  k.s = logistic(affine(p.gates[lstm_input], x, h_prev));
  k.f = logistic(affine(p.gates[lstm_forget], x, h_prev));
  k.o = logistic(affine(p.gates[lstm_output], x, h_prev));
  k.c = k.s.cwiseProduct(k.z) + k.f.cwiseProduct(c_prev);
  k.tanh_c = tanh(k.c);
  k.h = k.o.cwiseProduct(k.tanh_c);
  return k;
}

inline GruCache gru_forward(const Vector& x, const Vector& h_prev, const RnnParams& p) {
  GruCache k;
  k.x = x;
  k.h_prev = h_prev;
  k.update = logistic(affine(p.gates[gru_update], x, h_prev));
  k.reset = logistic(affine(p.gates[gru_reset], x, h_prev));
  k.recurrent_candidate = p.gates[gru_candidate].recurrent * h_prev;
  k.candidate = tanh(p.gates[gru_candidate].input * x + k.reset.cwiseProduct(k.recurrent_candidate));
  k.h = k.candidate.cwiseProduct(k.update) + h_prev.cwiseProduct(Vector::Ones(h_prev.size()) - k.update);
  return k;
}

inline void accumulate(GateBlock& grad, const Vector& da, const Vector& x, const Vector& h_prev) {
  grad.input.noalias() += da * x.transpose();
  grad.recurrent.noalias() += da * h_prev.transpose();
  if (grad.bias.size() != 0) grad.bias += da;
}

/// Per-step upstream on h_j induced by pooling. For max pooling each
/// coordinate feeds the earliest step attaining the maximum.
inline std::vector<Vector> pooling_upstream(const std::vector<Vector>& outputs, Pooling pooling,
                                            const Vector& upstream) {
  const auto d = outputs.size();
  const Index m = upstream.size();
  std::vector<Vector> g(d, Vector::Zero(m));
  switch (pooling) {
    case Pooling::mean:
      for (auto& gj : g) gj = upstream / static_cast<double>(d);
      break;
    case Pooling::last:
      g.back() = upstream;
      break;
    case Pooling::max:
      for (Index k = 0; k < m; ++k) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < d; ++j) {
          if (outputs[j](k) > outputs[best](k)) best = j;
        }
        g[best](k) = upstream(k);
      }
      break;
  }
  return g;
}

inline Vector pool(const std::vector<Vector>& steps, Pooling pooling) {
  switch (pooling) {
    case Pooling::mean: {
      Vector acc = Vector::Zero(steps.front().size());
      for (const auto& s : steps) acc += s;
      return acc / static_cast<double>(steps.size());
    }
    case Pooling::last:
      return steps.back();
    case Pooling::max: {
      Vector acc = steps.front();
      for (const auto& s : steps) acc = acc.cwiseMax(s);
      return acc;
    }
  }
  return {};
}

inline void check_sequence(const Matrix& X, const RnnParams& params) {
  if (X.cols() < 1) {
    throw EmptyInputError("cannot embed an empty sequence");
  }
  if (X.rows() != params.input_dim) {
    throw DimensionError("sequence has dimension " + std::to_string(X.rows()) +
                         ", cell expects " + std::to_string(params.input_dim));
  }
}

}  // namespace detail

inline LstmState lstm_step(const Vector& x, const Vector& h_prev, const Vector& c_prev,
                           const RnnParams& params) {
  if (params.cell != CellKind::lstm) {
    throw ShapeError("lstm_step called with GRU parameters");
  }
  detail::check_step_dims(x, h_prev, params);
  if (c_prev.size() != params.width) {
    throw DimensionError("previous state has the wrong width");
  }
  auto k = detail::lstm_forward(x, h_prev, c_prev, params);
  return {std::move(k.h), std::move(k.c)};
}

inline Vector gru_step(const Vector& x, const Vector& h_prev, const RnnParams& params) {
  if (params.cell != CellKind::gru) {
    throw ShapeError("gru_step called with LSTM parameters");
  }
  detail::check_step_dims(x, h_prev, params);
  return detail::gru_forward(x, h_prev, params).h;
}

/// Runs the cell over the columns of X from zero initial state and pools the outputs.
inline Embedding embed_sequence(const Matrix& X, const RnnParams& params, Pooling pooling) {
  detail::check_sequence(X, params);
  const Index m = params.width;
  std::vector<Vector> hs;
  hs.reserve(static_cast<std::size_t>(X.cols()));
  Vector h = Vector::Zero(m);
  if (params.cell == CellKind::lstm) {
    std::vector<Vector> cs;
    Vector c = Vector::Zero(m);
    for (Index j = 0; j < X.cols(); ++j) {
      auto k = detail::lstm_forward(X.col(j), h, c, params);
      h = k.h;
      c = k.c;
      hs.push_back(h);
      cs.push_back(c);
    }
    return {detail::pool(hs, pooling), detail::pool(cs, pooling)};
  }
  for (Index j = 0; j < X.cols(); ++j) {
    h = detail::gru_forward(X.col(j), h, params).h;
    hs.push_back(h);
  }
  return {detail::pool(hs, pooling), std::nullopt};
}

/// Gradient of <upstream, h_bar> with respect to every parameter block,
/// accumulated backwards through the full unrolled recursion.
inline RnnGradient embed_gradients(const Matrix& X, const RnnParams& params, Pooling pooling,
                                   const Vector& upstream) {
  detail::check_sequence(X, params);
  if (upstream.size() != params.width) {
    throw DimensionError("upstream gradient has the wrong width");
  }
  const Index m = params.width;
  const auto d = static_cast<std::size_t>(X.cols());
  RnnGradient grad = RnnGradient::zeros_like(params);

  if (params.cell == CellKind::lstm) {
    std::vector<detail::LstmCache> cache;
    cache.reserve(d);
    Vector h = Vector::Zero(m), c = Vector::Zero(m);
    std::vector<Vector> outputs;
    for (std::size_t j = 0; j < d; ++j) {
      cache.push_back(detail::lstm_forward(X.col(static_cast<Index>(j)), h, c, params));
      h = cache.back().h;
      c = cache.back().c;
      outputs.push_back(h);
    }
    const auto g = detail::pooling_upstream(outputs, pooling, upstream);
    Vector dh_next = Vector::Zero(m), dc_next = Vector::Zero(m);
    for (std::size_t jj = d; jj-- > 0;) {
      const auto& k = cache[jj];
      const Vector dh = g[jj] + dh_next;
      const Vector dc = dh.cwiseProduct(k.o).cwiseProduct(
                            (1.0 - k.tanh_c.array().square()).matrix()) + dc_next;
      const Vector da_o = dh.cwiseProduct(k.tanh_c).cwiseProduct(
          (k.o.array() * (1.0 - k.o.array())).matrix());
      const Vector da_s = dc.cwiseProduct(k.z).cwiseProduct(
          (k.s.array() * (1.0 - k.s.array())).matrix());
      const Vector da_f = dc.cwiseProduct(k.c_prev).cwiseProduct(
          (k.f.array() * (1.0 - k.f.array())).matrix());
      const Vector da_z = dc.cwiseProduct(k.s).cwiseProduct(
          (1.0 - k.z.array().square()).matrix());
      detail::accumulate(grad.gates[lstm_candidate], da_z, k.x, k.h_prev);
      detail::accumulate(grad.gates[lstm_input], da_s, k.x, k.h_prev);
      detail::accumulate(grad.gates[lstm_forget], da_f, k.x, k.h_prev);
      detail::accumulate(grad.gates[lstm_output], da_o, k.x, k.h_prev);
      dc_next = dc.cwiseProduct(k.f);
      dh_next = params.gates[lstm_candidate].recurrent.transpose() * da_z +
                params.gates[lstm_input].recurrent.transpose() * da_s +
                params.gates[lstm_forget].recurrent.transpose() * da_f +
                params.gates[lstm_output].recurrent.transpose() * da_o;
    }
    return grad;
  }

  std::vector<detail::GruCache> cache;
  cache.reserve(d);
  Vector h = Vector::Zero(m);
  std::vector<Vector> outputs;
  for (std::size_t j = 0; j < d; ++j) {
    cache.push_back(detail::gru_forward(X.col(static_cast<Index>(j)), h, params));
    h = cache.back().h;
    outputs.push_back(h);
  }
  const auto g = detail::pooling_upstream(outputs, pooling, upstream);
  Vector dh_next = Vector::Zero(m);
  for (std::size_t jj = d; jj-- > 0;) {
    const auto& k = cache[jj];
    const Vector dh = g[jj] + dh_next;
    const Vector d_candidate = dh.cwiseProduct(k.update);
    const Vector d_update = dh.cwiseProduct(k.candidate - k.h_prev);
    Vector dh_prev = dh.cwiseProduct((1.0 - k.update.array()).matrix());

    const Vector da_cand = d_candidate.cwiseProduct((1.0 - k.candidate.array().square()).matrix());
    const Vector d_reset = da_cand.cwiseProduct(k.recurrent_candidate);
    const Vector d_rec_cand = da_cand.cwiseProduct(k.reset);
    auto& gc = grad.gates[gru_candidate];
    gc.input.noalias() += da_cand * k.x.transpose();
    gc.recurrent.noalias() += d_rec_cand * k.h_prev.transpose();
    dh_prev += params.gates[gru_candidate].recurrent.transpose() * d_rec_cand;

    const Vector da_reset = d_reset.cwiseProduct((k.reset.array() * (1.0 - k.reset.array())).matrix());
    detail::accumulate(grad.gates[gru_reset], da_reset, k.x, k.h_prev);
    dh_prev += params.gates[gru_reset].recurrent.transpose() * da_reset;

    const Vector da_update =
        d_update.cwiseProduct((k.update.array() * (1.0 - k.update.array())).matrix());
    detail::accumulate(grad.gates[gru_update], da_update, k.x, k.h_prev);
    dh_prev += params.gates[gru_update].recurrent.transpose() * da_update;

    dh_next = dh_prev;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Serialization

inline const char* to_string(CellKind cell) noexcept { return cell == CellKind::lstm ? "lstm" : "gru"; }

inline CellKind cell_from_string(const std::string& s) {
  if (s == "lstm") return CellKind::lstm;
  if (s == "gru") return CellKind::gru;
  throw ConfigError("unknown cell kind '" + s + "' (expected lstm or gru)");
}

inline const char* to_string(Pooling pooling) noexcept {
  switch (pooling) {
    case Pooling::mean: return "mean";
    case Pooling::last: return "last";
    case Pooling::max: return "max";
  }
  return "mean";
}

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "mean") return Pooling::mean;
  if (s == "last") return Pooling::last;
  if (s == "max") return Pooling::max;
  throw ConfigError("unknown pooling '" + s + "' (expected mean, last or max)");
}

inline nlohmann::json matrix_to_json(const Matrix& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < a.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(a.cols()));
    for (Index j = 0; j < a.cols(); ++j) row[static_cast<std::size_t>(j)] = a(i, j);
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Index rows, Index cols) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) {
    throw DataError("matrix has the wrong number of rows");
  }
  Matrix a(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto row = j[static_cast<std::size_t>(i)].get<std::vector<double>>();
    if (static_cast<Index>(row.size()) != cols) {
      throw DataError("matrix row has the wrong number of columns");
    }
    for (Index c = 0; c < cols; ++c) a(i, c) = row[static_cast<std::size_t>(c)];
  }
  return a;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline const std::vector<std::string>& gate_names(CellKind cell) {
  static const std::vector<std::string> lstm{"z", "s", "f", "o"};
  static const std::vector<std::string> gru{"z", "r", "h"};
  return cell == CellKind::lstm ? lstm : gru;
}

inline nlohmann::json params_to_json(const RnnParams& params) {
  nlohmann::json gates = nlohmann::json::array();
  const auto& names = gate_names(params.cell);
  for (std::size_t g = 0; g < params.gates.size(); ++g) {
    nlohmann::json block = {{"name", names[g]},
                            {"W", matrix_to_json(params.gates[g].input)},
                            {"R", matrix_to_json(params.gates[g].recurrent)}};
    if (params.has_bias()) block["b"] = vector_to_json(params.gates[g].bias);
    gates.push_back(std::move(block));
  }
  return {{"format", "seqoc-rnn"},
          {"version", 1},
          {"cell", to_string(params.cell)},
          {"m", params.width},
          {"p", params.input_dim},
          {"gates", std::move(gates)}};
}

inline RnnParams params_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "seqoc-rnn" || j.value("version", 0) != 1) {
    throw DataError("not a version-1 RNN parameter document");
  }
  RnnParams params = RnnParams::zeros(cell_from_string(j.at("cell").get<std::string>()),
                                      j.at("m").get<Index>(), j.at("p").get<Index>());
  const auto& gates = j.at("gates");
  if (gates.size() != params.gates.size()) {
    throw DataError("RNN document has the wrong number of gate blocks");
  }
  for (std::size_t g = 0; g < params.gates.size(); ++g) {
    auto& block = params.gates[g];
    block.input = matrix_from_json(gates[g].at("W"), params.width, params.input_dim);
    block.recurrent = matrix_from_json(gates[g].at("R"), params.width, params.width);
    if (params.has_bias()) {
      block.bias = vector_from_json(gates[g].at("b"));
      if (block.bias.size() != params.width) throw DataError("bias has the wrong length");
    }
  }
  return params;
}

}  // namespace seqoc::rnn
