#pragma once

// Variable-length sequence datasets: ingestion, min-max normalization,
// train/test splitting, Gaussian anomaly injection and synthetic generators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/tokenizer.hpp>
#include <nlohmann/json.hpp>

#include "seqoc/common.hpp"
#include "seqoc/error.hpp"

namespace seqoc::data {

struct SequenceItem {
  std::string id;
  /// p x d, one column per time step.
  Matrix values;
  std::optional<Sign> label;

  Index length() const noexcept { return values.cols(); }
};

/// Ordered collection of sequences sharing the input dimension p.
class SequenceBatch {
 public:
  SequenceBatch() = default;
  explicit SequenceBatch(Index dim) : dim_(dim) {}

  /// Appends an item. The first item fixes p when the batch was created without one.
  void push_back(SequenceItem item) {
    if (item.values.cols() < 1) {
      throw DataError("sequence '" + item.id + "' has no time steps");
    }
    if (dim_ == 0) {
      if (item.values.rows() < 1) {
        throw DimensionError("sequence '" + item.id + "' has zero-dimensional samples");
      }
      dim_ = item.values.rows();
    } else if (item.values.rows() != dim_) {
      throw DimensionError("sequence '" + item.id + "' has dimension " +
                           std::to_string(item.values.rows()) + ", batch has " +
                           std::to_string(dim_));
    }
    items_.push_back(std::move(item));
  }

  Index dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }

  const SequenceItem& operator[](std::size_t i) const { return items_[i]; }
  const std::vector<SequenceItem>& items() const noexcept { return items_; }

  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

  bool fully_labeled() const {
    return std::all_of(items_.begin(), items_.end(),
                       [](const SequenceItem& it) { return it.label.has_value(); });
  }

  std::vector<Sign> labels() const {
    std::vector<Sign> out;
    out.reserve(items_.size());
    for (const auto& it : items_) {
      if (!it.label) {
        throw DataError("sequence '" + it.id + "' is unlabeled");
      }
      out.push_back(*it.label);
    }
    return out;
  }

 private:
  Index dim_ = 0;
  std::vector<SequenceItem> items_;
};

// ---------------------------------------------------------------------------
// JSONL / CSV ingestion

namespace detail {

inline std::optional<Sign> parse_label(const nlohmann::json& j, std::size_t line) {
  if (j.is_null()) {
    return std::nullopt;
  }
  if (!j.is_number()) {
    throw ParseError(line, "label must be -1 or 1");
  }
  const double v = j.get<double>();
  if (v == 1.0) return Sign::positive;
  if (v == -1.0) return Sign::negative;
  throw ParseError(line, "label must be -1 or 1");
}

}  // namespace detail

/// Reads one record per non-blank line:
/// {"id": "...", "values": [[x_1..x_p], ...], "label": -1|1}.
inline SequenceBatch parse_jsonl(std::istream& in) {
  SequenceBatch batch;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line, std::string("malformed JSON: ") + e.what());
    }
    if (!record.is_object() || !record.contains("values") || !record["values"].is_array()) {
      throw ParseError(line, "record needs a 'values' array");
    }
    const auto& rows = record["values"];
    if (rows.empty()) {
      throw ParseError(line, "'values' must contain at least one time step");
    }
    if (!rows[0].is_array() || rows[0].empty()) {
      throw ParseError(line, "each time step must be a non-empty array of numbers");
    }
    const auto p = static_cast<Index>(rows[0].size());
    Matrix values(p, static_cast<Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto& row = rows[j];
      if (!row.is_array()) {
        throw ParseError(line, "each time step must be an array of numbers");
      }
      if (static_cast<Index>(row.size()) != p) {
        throw DimensionError("line " + std::to_string(line) + ": time step " +
                             std::to_string(j) + " has " + std::to_string(row.size()) +
                             " values, expected " + std::to_string(p));
      }
      for (Index k = 0; k < p; ++k) {
        const auto& v = row[static_cast<std::size_t>(k)];
        if (!v.is_number()) {
          throw ParseError(line, "non-numeric sample value");
        }
        values(k, static_cast<Index>(j)) = v.get<double>();
      }
    }

    SequenceItem item;
    if (record.contains("id")) {
      const auto& id = record["id"];
      if (id.is_string()) {
        item.id = id.get<std::string>();
      } else if (id.is_number_integer()) {
        item.id = std::to_string(id.get<long long>());
      } else {
        throw ParseError(line, "id must be a string");
      }
    } else {
      item.id = std::to_string(line);
    }
    item.label = detail::parse_label(record.value("label", nlohmann::json()), line);
    item.values = std::move(values);
    if (batch.dim() != 0 && item.values.rows() != batch.dim()) {
      throw DimensionError("line " + std::to_string(line) + ": dimension " +
                           std::to_string(item.values.rows()) + " differs from batch dimension " +
                           std::to_string(batch.dim()));
    }
    batch.push_back(std::move(item));
  }
  return batch;
}

inline SequenceBatch load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open dataset file '" + path + "'");
  }
  return parse_jsonl(in);
}

inline nlohmann::json item_to_json(const SequenceItem& item) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index j = 0; j < item.values.cols(); ++j) {
    nlohmann::json row = nlohmann::json::array();
    for (Index k = 0; k < item.values.rows(); ++k) {
      row.push_back(item.values(k, j));
    }
    rows.push_back(std::move(row));
  }
  nlohmann::json out = {{"id", item.id}, {"values", std::move(rows)}};
  if (item.label) {
    out["label"] = to_int(*item.label);
  }
  return out;
}

inline void write_jsonl(const SequenceBatch& batch, std::ostream& out) {
  for (const auto& item : batch) {
    out << item_to_json(item).dump() << '\n';
  }
}

/// Flat-file adapter. The header must name an `id` and a `time` column; an
/// optional `label` column carries -1/1 (blank for unlabeled); every other
/// column is a sample dimension, in header order. Rows are grouped by id (first
/// appearance order) and sorted by time within each sequence.
inline SequenceBatch parse_csv(std::istream& in) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  std::string text;
  if (!std::getline(in, text)) {
    return SequenceBatch{};
  }
  if (!text.empty() && text.back() == '\r') text.pop_back();

  std::vector<std::string> header;
  for (const auto& tok : Tokenizer(text)) header.push_back(tok);
  int id_col = -1, time_col = -1, label_col = -1;
  std::vector<int> value_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (header[c] == "id") id_col = c;
    else if (header[c] == "time") time_col = c;
    else if (header[c] == "label") label_col = c;
    else value_cols.push_back(c);
  }
  if (id_col < 0 || time_col < 0) {
    throw ParseError(1, "CSV header must contain 'id' and 'time' columns");
  }
  if (value_cols.empty()) {
    throw ParseError(1, "CSV header has no value columns");
  }

  struct Row {
    double time;
    std::size_t order;
    std::vector<double> values;
  };
  struct Group {
    std::vector<Row> rows;
    std::optional<Sign> label;
    bool label_seen = false;
  };
  std::vector<std::string> ids;
  std::map<std::string, Group> groups;

  std::size_t line = 1;
  std::size_t order = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    try {
      for (const auto& tok : Tokenizer(text)) cells.push_back(tok);
    } catch (const boost::escaped_list_error& e) {
      throw ParseError(line, std::string("malformed CSV: ") + e.what());
    }
    if (cells.size() != header.size()) {
      throw ParseError(line, "expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(cells.size()));
    }
    auto number = [&](const std::string& s) {
      try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw ParseError(line, "non-numeric field '" + s + "'");
      }
    };
    const std::string& id = cells[static_cast<std::size_t>(id_col)];
    auto [it, inserted] = groups.try_emplace(id);
    if (inserted) ids.push_back(id);
    Group& g = it->second;

    Row row{number(cells[static_cast<std::size_t>(time_col)]), order++, {}};
    for (int c : value_cols) row.values.push_back(number(cells[static_cast<std::size_t>(c)]));
    g.rows.push_back(std::move(row));

    if (label_col >= 0) {
      const std::string& cell = cells[static_cast<std::size_t>(label_col)];
      std::optional<Sign> label;
      if (!cell.empty()) {
        const double v = number(cell);
        if (v == 1.0) label = Sign::positive;
        else if (v == -1.0) label = Sign::negative;
        else throw ParseError(line, "label must be -1 or 1");
      }
      if (g.label_seen && g.label != label) {
        throw ParseError(line, "inconsistent label for sequence '" + id + "'");
      }
      g.label = label;
      g.label_seen = true;
    }
  }

  SequenceBatch batch;
  const auto p = static_cast<Index>(value_cols.size());
  for (const auto& id : ids) {
    Group& g = groups[id];
    std::stable_sort(g.rows.begin(), g.rows.end(),
                     [](const Row& a, const Row& b) { return a.time < b.time; });
    SequenceItem item;
    item.id = id;
    item.label = g.label;
    item.values.resize(p, static_cast<Index>(g.rows.size()));
    for (std::size_t j = 0; j < g.rows.size(); ++j) {
      for (Index k = 0; k < p; ++k) {
        item.values(k, static_cast<Index>(j)) = g.rows[j].values[static_cast<std::size_t>(k)];
      }
    }
    batch.push_back(std::move(item));
  }
  return batch;
}

inline SequenceBatch load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open dataset file '" + path + "'");
  }
  return parse_csv(in);
}

/// Dispatches on extension: `.csv` goes through the flat-file adapter, anything else is JSONL.
inline SequenceBatch load_dataset(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos && path.substr(dot) == ".csv") {
    return load_csv(path);
  }
  return load_jsonl(path);
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-dimension extrema of a training batch. Dimensions with min == max are
/// constant and normalize to 0.
struct NormalizationStats {
  Vector min;
  Vector max;

  Index dim() const noexcept { return min.size(); }
  bool is_constant(Index k) const { return !(max(k) > min(k)); }
};

inline NormalizationStats fit_normalization(const SequenceBatch& batch) {
  if (batch.empty()) {
    throw EmptyInputError("cannot fit normalization on an empty batch");
  }
  const Index p = batch.dim();
  NormalizationStats stats{Vector::Constant(p, std::numeric_limits<double>::infinity()),
                           Vector::Constant(p, -std::numeric_limits<double>::infinity())};
  for (const auto& item : batch) {
    stats.min = stats.min.cwiseMin(item.values.rowwise().minCoeff());
    stats.max = stats.max.cwiseMax(item.values.rowwise().maxCoeff());
  }
  return stats;
}

/// Applies x -> 2(x - min)/(max - min) - 1 per dimension. With `clamp`, values
/// outside the fitted range (test data) are clipped into [-1, 1].
inline SequenceBatch normalize(const SequenceBatch& batch, const NormalizationStats& stats,
                               bool clamp) {
  if (batch.dim() != stats.dim() && !batch.empty()) {
    throw DimensionError("normalization stats have dimension " + std::to_string(stats.dim()) +
                         ", data has " + std::to_string(batch.dim()));
  }
  SequenceBatch out(batch.dim());
  for (const auto& item : batch) {
    SequenceItem scaled = item;
    for (Index k = 0; k < stats.dim(); ++k) {
      if (stats.is_constant(k)) {
        scaled.values.row(k).setZero();
        continue;
      }
      const double lo = stats.min(k);
      const double span = stats.max(k) - lo;
      scaled.values.row(k) = (2.0 * (item.values.row(k).array() - lo) / span - 1.0).matrix();
      if (clamp) {
        scaled.values.row(k) = scaled.values.row(k).cwiseMax(-1.0).cwiseMin(1.0);
      }
    }
    out.push_back(std::move(scaled));
  }
  return out;
}

/// Inverse of normalize for non-constant dimensions; constant dimensions map back to min.
inline SequenceBatch denormalize(const SequenceBatch& batch, const NormalizationStats& stats) {
  SequenceBatch out(batch.dim());
  for (const auto& item : batch) {
    SequenceItem raw = item;
    for (Index k = 0; k < stats.dim(); ++k) {
      if (stats.is_constant(k)) {
        raw.values.row(k).setConstant(stats.min(k));
        continue;
      }
      const double span = stats.max(k) - stats.min(k);
      raw.values.row(k) = ((item.values.row(k).array() + 1.0) * 0.5 * span + stats.min(k)).matrix();
    }
    out.push_back(std::move(raw));
  }
  return out;
}

inline std::pair<SequenceBatch, NormalizationStats> fit_and_normalize(const SequenceBatch& batch) {
  NormalizationStats stats = fit_normalization(batch);
  SequenceBatch scaled = normalize(batch, stats, false);
  return {std::move(scaled), std::move(stats)};
}

inline nlohmann::json stats_to_json(const NormalizationStats& stats) {
  return {{"min", std::vector<double>(stats.min.data(), stats.min.data() + stats.min.size())},
          {"max", std::vector<double>(stats.max.data(), stats.max.data() + stats.max.size())}};
}

inline NormalizationStats stats_from_json(const nlohmann::json& j) {
  const auto lo = j.at("min").get<std::vector<double>>();
  const auto hi = j.at("max").get<std::vector<double>>();
  if (lo.size() != hi.size()) {
    throw DataError("normalization min/max lengths differ");
  }
  NormalizationStats stats{Eigen::Map<const Vector>(lo.data(), static_cast<Index>(lo.size())),
                           Eigen::Map<const Vector>(hi.data(), static_cast<Index>(hi.size()))};
  for (Index k = 0; k < stats.dim(); ++k) {
    if (stats.min(k) > stats.max(k)) {
      throw DataError("normalization min exceeds max in dimension " + std::to_string(k));
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Splitting

struct TrainTestSplit {
  SequenceBatch train;
  SequenceBatch test;
};

namespace detail {

inline std::size_t floor_count(double x) {
  // Absorbs representation error such as 90 / 0.9 = 99.999...
  return static_cast<std::size_t>(std::floor(x + 1e-9));
}

}  // namespace detail

/// Subsamples a labeled batch into disjoint train and test parts in which a
/// fraction `anomaly_fraction` (rounded down) of each part is anomalous. The
/// number of items used is the largest total the class pools can support at
/// that anomaly rate; `train_fraction` of it (rounded down) goes to training.
inline TrainTestSplit split_train_test(const SequenceBatch& batch, double train_fraction,
                                       double anomaly_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (!(anomaly_fraction >= 0.0 && anomaly_fraction < 1.0)) {
    throw ConfigError("anomaly_fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> normal, anomalous;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& label = batch[i].label;
    if (!label) {
      throw DataError("splitting requires labels; sequence '" + batch[i].id + "' is unlabeled");
    }
    (*label == Sign::positive ? normal : anomalous).push_back(i);
  }

  double total = static_cast<double>(normal.size()) / (1.0 - anomaly_fraction);
  if (anomaly_fraction > 0.0) {
    total = std::min(total, static_cast<double>(anomalous.size()) / anomaly_fraction);
  }
  total = std::min(total, static_cast<double>(batch.size()));
  const std::size_t n_total = detail::floor_count(total);
  const std::size_t n_train = detail::floor_count(static_cast<double>(n_total) * train_fraction);
  const std::size_t n_test = n_total - n_train;
  // Anomalies are counted over the whole split first and then shared between
  // the two sides, so per-side rounding cannot ask for more normals than exist.
  const std::size_t a_total = detail::floor_count(static_cast<double>(n_total) * anomaly_fraction);
  const std::size_t a_train = std::min(
      a_total, static_cast<std::size_t>(std::llround(static_cast<double>(a_total) * train_fraction)));
  const std::size_t a_test = a_total - a_train;
  if (n_train == 0 || n_test == 0 || a_train > n_train || a_test > n_test || a_total > anomalous.size() ||
      (n_train - a_train) + (n_test - a_test) > normal.size()) {
    throw InsufficientDataError("not enough items (" + std::to_string(normal.size()) +
                                " normal, " + std::to_string(anomalous.size()) +
                                " anomalous) for the requested split fractions");
  }

  std::mt19937_64 rng(seed);
  std::shuffle(normal.begin(), normal.end(), rng);
  std::shuffle(anomalous.begin(), anomalous.end(), rng);

  std::vector<std::size_t> train_idx(normal.begin(), normal.begin() + static_cast<long>(n_train - a_train));
  train_idx.insert(train_idx.end(), anomalous.begin(), anomalous.begin() + static_cast<long>(a_train));
  std::vector<std::size_t> test_idx(normal.begin() + static_cast<long>(n_train - a_train),
                                    normal.begin() + static_cast<long>(n_train - a_train + n_test - a_test));
  test_idx.insert(test_idx.end(), anomalous.begin() + static_cast<long>(a_train),
                  anomalous.begin() + static_cast<long>(a_train + a_test));
  std::shuffle(train_idx.begin(), train_idx.end(), rng);
  std::shuffle(test_idx.begin(), test_idx.end(), rng);

  TrainTestSplit split{SequenceBatch(batch.dim()), SequenceBatch(batch.dim())};
  for (auto i : train_idx) split.train.push_back(batch[i]);
  for (auto i : test_idx) split.test.push_back(batch[i]);
  return split;
}

// ---------------------------------------------------------------------------
// Anomaly injection and synthetic data

/// Appends `count` sequences of i.i.d. Gaussian samples with the batch's
/// per-dimension mean and ten times its per-dimension variance, labeled -1.
/// Lengths are uniform over the batch's observed length range.
inline SequenceBatch inject_gaussian_anomalies(const SequenceBatch& batch, std::size_t count,
                                               std::uint64_t seed) {
  if (batch.empty()) {
    throw EmptyInputError("cannot inject anomalies into an empty batch");
  }
  SequenceBatch out = batch;
  if (count == 0) {
    return out;
  }
  const Index p = batch.dim();
  Vector sum = Vector::Zero(p);
  Vector sq = Vector::Zero(p);
  double n = 0.0;
  Index min_len = std::numeric_limits<Index>::max();
  Index max_len = 0;
  for (const auto& item : batch) {
    sum += item.values.rowwise().sum();
    n += static_cast<double>(item.length());
    min_len = std::min(min_len, item.length());
    max_len = std::max(max_len, item.length());
  }
  const Vector mean = sum / n;
  for (const auto& item : batch) {
    sq += (item.values.colwise() - mean).array().square().rowwise().sum().matrix();
  }
  const Vector stddev = (10.0 * sq / n).cwiseSqrt();

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> length(min_len, max_len);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t c = 0; c < count; ++c) {
    SequenceItem item;
    item.id = "injected-" + std::to_string(c);
    item.label = Sign::negative;
    item.values.resize(p, length(rng));
    for (Index j = 0; j < item.values.cols(); ++j) {
      for (Index k = 0; k < p; ++k) {
        item.values(k, j) = mean(k) + stddev(k) * gauss(rng);
      }
    }
    out.push_back(std::move(item));
  }
  return out;
}

/// Stationary first-order autoregressive process, run independently per dimension:
/// x_t = mean + coefficient * (x_{t-1} - mean) + e_t, e_t ~ N(0, noise_variance).
struct ArProcess {
  double coefficient = 0.0;
  double noise_variance = 1.0;
  double mean = 0.0;

  double stationary_variance() const {
    return noise_variance / (1.0 - coefficient * coefficient);
  }
};

struct GeneratorSpec {
  Index dim = 1;
  Index min_length = 1;
  Index max_length = 1;
  ArProcess normal;
  ArProcess anomalous;

  void validate() const {
    if (dim < 1) throw ConfigError("generator dimension must be positive");
    if (min_length < 1) throw ConfigError("generator min_length must be at least 1");
    if (min_length > max_length) throw ConfigError("generator min_length exceeds max_length");
    for (const ArProcess* proc : {&normal, &anomalous}) {
      if (!(std::abs(proc->coefficient) < 1.0)) {
        throw ConfigError("autoregressive coefficient must lie in (-1, 1)");
      }
      if (!(proc->noise_variance >= 0.0)) {
        throw ConfigError("noise variance must be non-negative");
      }
    }
  }
};

namespace detail {

inline Matrix sample_ar(const ArProcess& proc, Index p, Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double noise_sd = std::sqrt(proc.noise_variance);
  const double start_sd = std::sqrt(proc.stationary_variance());
  Matrix x(p, d);
  for (Index k = 0; k < p; ++k) {
    double prev = start_sd * gauss(rng);
    x(k, 0) = proc.mean + prev;
    for (Index j = 1; j < d; ++j) {
      prev = proc.coefficient * prev + noise_sd * gauss(rng);
      x(k, j) = proc.mean + prev;
    }
  }
  return x;
}

}  // namespace detail

/// Labeled batch of `n_normal` (+1) then `n_anomalous` (-1) sequences.
inline SequenceBatch synth_generate(const GeneratorSpec& spec, std::size_t n_normal,
                                    std::size_t n_anomalous, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> length(spec.min_length, spec.max_length);
  SequenceBatch batch(spec.dim);
  for (std::size_t i = 0; i < n_normal + n_anomalous; ++i) {
    const bool anomalous = i >= n_normal;
    SequenceItem item;
    item.id = (anomalous ? "a" + std::to_string(i - n_normal) : "n" + std::to_string(i));
    item.label = anomalous ? Sign::negative : Sign::positive;
    const Index d = length(rng);
    item.values = detail::sample_ar(anomalous ? spec.anomalous : spec.normal, spec.dim, d, rng);
    batch.push_back(std::move(item));
  }
  return batch;
}

/// Per-sequence column means, the fixed-length features of a conventional detector.
inline std::vector<Vector> sequence_means(const SequenceBatch& batch) {
  std::vector<Vector> out;
  out.reserve(batch.size());
  for (const auto& item : batch) {
    out.push_back(item.values.rowwise().mean());
  }
  return out;
}

}  // namespace seqoc::data
