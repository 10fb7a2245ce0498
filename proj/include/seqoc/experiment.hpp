#pragma once

// Experiment configuration and the run/score/synth/roc commands behind the
// command-line tool.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/tokenizer.hpp>
#include <nlohmann/json.hpp>

#include "seqoc/data.hpp"
#include "seqoc/error.hpp"
#include "seqoc/eval.hpp"
#include "seqoc/model_io.hpp"
#include "seqoc/trainer.hpp"

namespace seqoc::experiment {

namespace fs = std::filesystem;

struct SynthSettings {
  data::GeneratorSpec spec;
  std::size_t n_normal = 180;
  std::size_t n_anomalous = 0;
};

struct ExperimentConfig {
  std::optional<std::string> dataset_path;
  std::optional<SynthSettings> synth;
  /// Gaussian anomalies appended to the loaded or generated data.
  std::size_t inject = 0;
  double train_fraction = 0.6;
  double anomaly_fraction = 0.1;
  trainer::TrainConfig train;
  bool crossval = false;
  std::vector<double> crossval_mu;
  std::vector<double> crossval_lambda;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string unquote(std::string v) {
  boost::algorithm::trim(v);
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    v = v.substr(1, v.size() - 2);
  }
  return v;
}

template <class T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string v = unquote(raw);
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_same_v<T, double>) {
      out = std::stod(v, &used);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.empty() && v.front() == '-') throw std::invalid_argument("negative");
      out = std::stoull(v, &used);
    } else {
      out = static_cast<T>(std::stoll(v, &used));
    }
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' has invalid numeric value '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string v = boost::algorithm::to_lower_copy(unquote(raw));
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "' has invalid boolean value '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& raw) {
  std::string v = unquote(raw);
  boost::algorithm::trim_if(v, boost::algorithm::is_any_of("[] "));
  std::vector<double> out;
  boost::char_separator<char> sep(",");
  for (const auto& tok : boost::tokenizer<boost::char_separator<char>>(v, sep)) {
    out.push_back(parse_number<double>(key, tok));
  }
  if (out.empty()) throw ConfigError("key '" + key + "' needs at least one value");
  return out;
}

}  // namespace detail

/// Parses the sectioned key-value config. Unknown sections or keys are errors.
inline ExperimentConfig parse_config(std::istream& in) {
  // '#' comments are accepted alongside ';'.
  std::ostringstream cleaned;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] == '#') line = ";";
    cleaned << line << '\n';
  }
  boost::property_tree::ptree tree;
  try {
    std::istringstream src(cleaned.str());
    boost::property_tree::ini_parser::read_ini(src, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  ExperimentConfig cfg;
  auto& t = cfg.train;
  using Handler = std::function<void(const std::string&, const std::string&)>;
  SynthSettings synth;
  bool has_synth = false;
  auto ar = [](data::ArProcess& proc, const char* field) -> Handler {
    const std::string f = field;
    return [&proc, f](const std::string& k, const std::string& v) {
      const double x = detail::parse_number<double>(k, v);
      if (f == "coefficient") proc.coefficient = x;
      if (f == "variance") proc.noise_variance = x;
      if (f == "mean") proc.mean = x;
    };
  };
  const std::map<std::string, std::map<std::string, Handler>> handlers = {
      {"data",
       {{"path", [&](auto&, auto& v) { cfg.dataset_path = detail::unquote(v); }},
        {"inject", [&](auto& k, auto& v) { cfg.inject = detail::parse_number<std::size_t>(k, v); }}}},
      {"synth",
       {{"dim", [&](auto& k, auto& v) { synth.spec.dim = detail::parse_number<Index>(k, v); }},
        {"min_length", [&](auto& k, auto& v) { synth.spec.min_length = detail::parse_number<Index>(k, v); }},
        {"max_length", [&](auto& k, auto& v) { synth.spec.max_length = detail::parse_number<Index>(k, v); }},
        {"n_normal", [&](auto& k, auto& v) { synth.n_normal = detail::parse_number<std::size_t>(k, v); }},
        {"n_anomalous", [&](auto& k, auto& v) { synth.n_anomalous = detail::parse_number<std::size_t>(k, v); }},
        {"normal_coefficient", ar(synth.spec.normal, "coefficient")},
        {"normal_variance", ar(synth.spec.normal, "variance")},
        {"normal_mean", ar(synth.spec.normal, "mean")},
        {"anomalous_coefficient", ar(synth.spec.anomalous, "coefficient")},
        {"anomalous_variance", ar(synth.spec.anomalous, "variance")},
        {"anomalous_mean", ar(synth.spec.anomalous, "mean")}}},
      {"split",
       {{"train_fraction", [&](auto& k, auto& v) { cfg.train_fraction = detail::parse_number<double>(k, v); }},
        {"anomaly_fraction", [&](auto& k, auto& v) { cfg.anomaly_fraction = detail::parse_number<double>(k, v); }}}},
      {"model",
       {{"cell", [&](auto&, auto& v) { t.cell = rnn::cell_from_string(detail::unquote(v)); }},
        {"width", [&](auto& k, auto& v) { t.width = detail::parse_number<Index>(k, v); }},
        {"pooling", [&](auto&, auto& v) { t.pooling = rnn::pooling_from_string(detail::unquote(v)); }},
        {"head", [&](auto&, auto& v) { t.head = trainer::head_from_string(detail::unquote(v)); }}}},
      {"train",
       {{"method", [&](auto&, auto& v) { t.method = trainer::method_from_string(detail::unquote(v)); }},
        {"supervision",
         [&](auto&, auto& v) { t.supervision = trainer::supervision_from_string(detail::unquote(v)); }},
        {"mu", [&](auto& k, auto& v) { t.mu = detail::parse_number<double>(k, v); }},
        {"lambda", [&](auto& k, auto& v) { t.lambda = detail::parse_number<double>(k, v); }},
        {"tau", [&](auto& k, auto& v) { t.tau = detail::parse_number<double>(k, v); }},
        {"epsilon", [&](auto& k, auto& v) { t.epsilon = detail::parse_number<double>(k, v); }},
        {"max_outer_iters", [&](auto& k, auto& v) { t.max_outer_iters = detail::parse_number<int>(k, v); }},
        {"c", [&](auto& k, auto& v) { t.c = detail::parse_number<double>(k, v); }},
        {"c1", [&](auto& k, auto& v) { t.c1 = detail::parse_number<double>(k, v); }},
        {"c2", [&](auto& k, auto& v) { t.c2 = detail::parse_number<double>(k, v); }},
        {"c3", [&](auto& k, auto& v) { t.c3 = detail::parse_number<double>(k, v); }},
        {"train_encoder", [&](auto& k, auto& v) { t.train_encoder = detail::parse_bool(k, v); }},
        {"max_step_halvings", [&](auto& k, auto& v) { t.max_step_halvings = detail::parse_number<int>(k, v); }},
        {"smo_tolerance", [&](auto& k, auto& v) { t.smo_tolerance = detail::parse_number<double>(k, v); }},
        {"smo_max_sweeps", [&](auto& k, auto& v) { t.smo_max_sweeps = detail::parse_number<int>(k, v); }}}},
      {"crossval",
       {{"enabled", [&](auto& k, auto& v) { cfg.crossval = detail::parse_bool(k, v); }},
        {"mu", [&](auto& k, auto& v) { cfg.crossval_mu = detail::parse_list(k, v); }},
        {"lambda", [&](auto& k, auto& v) { cfg.crossval_lambda = detail::parse_list(k, v); }}}},
      {"run",
       {{"seed", [&](auto& k, auto& v) { cfg.seed = detail::parse_number<std::uint64_t>(k, v); }},
        {"out", [&](auto&, auto& v) { cfg.out_dir = detail::unquote(v); }}}},
  };

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' appears outside any section");
    }
    const auto sec = handlers.find(section);
    if (sec == handlers.end()) throw ConfigError("unknown config section '[" + section + "]'");
    if (section == "synth") has_synth = true;
    for (const auto& [key, value] : body) {
      const auto h = sec->second.find(key);
      if (h == sec->second.end()) throw ConfigError("unknown config key '" + section + "." + key + "'");
      h->second(section + "." + key, value.data());
    }
  }

  if (has_synth) cfg.synth = synth;
  if (cfg.dataset_path && cfg.synth) throw ConfigError("config sets both [data] path and a [synth] section");
  if (!cfg.dataset_path && !cfg.synth) throw ConfigError("config needs either [data] path or a [synth] section");
  if (cfg.synth) cfg.synth->spec.validate();
  if (cfg.crossval && cfg.crossval_mu.empty() && cfg.crossval_lambda.empty()) {
    throw ConfigError("cross-validation enabled without a crossval.mu or crossval.lambda grid");
  }
  t.seed = cfg.seed;
  t.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  return parse_config(in);
}

/// Applies a top-level seed override to every seed-dependent field.
inline void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.train.seed = seed;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["data"] = {{"path", cfg.dataset_path ? nlohmann::json(*cfg.dataset_path) : nlohmann::json(nullptr)},
               {"inject", cfg.inject}};
  if (cfg.synth) {
    const auto& s = *cfg.synth;
    j["synth"] = {{"dim", s.spec.dim},
                  {"min_length", s.spec.min_length},
                  {"max_length", s.spec.max_length},
                  {"n_normal", s.n_normal},
                  {"n_anomalous", s.n_anomalous},
                  {"normal_coefficient", s.spec.normal.coefficient},
                  {"normal_variance", s.spec.normal.noise_variance},
                  {"normal_mean", s.spec.normal.mean},
                  {"anomalous_coefficient", s.spec.anomalous.coefficient},
                  {"anomalous_variance", s.spec.anomalous.noise_variance},
                  {"anomalous_mean", s.spec.anomalous.mean}};
  } else {
    j["synth"] = nullptr;
  }
  j["split"] = {{"train_fraction", cfg.train_fraction}, {"anomaly_fraction", cfg.anomaly_fraction}};
  j["train"] = model_io::config_to_json(cfg.train);
  j["crossval"] = {{"enabled", cfg.crossval}, {"mu", cfg.crossval_mu}, {"lambda", cfg.crossval_lambda}};
  j["run"] = {{"seed", cfg.seed}, {"out", cfg.out_dir}};
  return j;
}

// ---------------------------------------------------------------------------
// Output files

/// Tracks files written by one command; on failure everything is removed.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet() {
    if (!committed_) {
      std::error_code ec;
      for (const auto& p : written_) fs::remove(p, ec);
    }
  }

  /// Writes `content` to a temp file in the target directory and renames it into place.
  void write(const std::string& name, const std::string& content) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    const fs::path target = dir_ / name;
    const fs::path tmp = dir_ / ("." + name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw IoError("cannot write '" + tmp.string() + "'");
      out << content;
      out.close();
      if (!out) {
        fs::remove(tmp, ec);
        throw IoError("failed writing '" + tmp.string() + "'");
      }
    }
    fs::rename(tmp, target, ec);
    if (ec) {
      fs::remove(tmp, ec);
      throw IoError("cannot move output into '" + target.string() + "'");
    }
    written_.push_back(target);
  }

  void commit() noexcept { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
  bool committed_ = false;
};

/// Writes a single file atomically (temp + rename) outside of an OutputSet.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  OutputSet set(dir);
  set.write(path.filename().string(), content);
  set.commit();
}

// ---------------------------------------------------------------------------
// Pipeline

/// Loads or generates the labeled data, including injected anomalies.
inline data::SequenceBatch acquire_data(const ExperimentConfig& cfg) {
  data::SequenceBatch batch;
  if (cfg.dataset_path) {
    if (!fs::exists(*cfg.dataset_path)) throw IoError("dataset file '" + *cfg.dataset_path + "' does not exist");
    batch = data::load_dataset(*cfg.dataset_path);
  } else {
    const auto& s = *cfg.synth;
    batch = data::synth_generate(s.spec, s.n_normal, s.n_anomalous, derive_seed(cfg.seed, "synth"));
  }
  if (batch.empty()) throw EmptyInputError("dataset is empty");
  if (cfg.inject > 0) batch = data::inject_gaussian_anomalies(batch, cfg.inject, derive_seed(cfg.seed, "inject"));
  return batch;
}

inline std::vector<trainer::TrainConfig> crossval_grid(const ExperimentConfig& cfg) {
  const auto mus = cfg.crossval_mu.empty() ? std::vector<double>{cfg.train.mu} : cfg.crossval_mu;
  const auto lambdas = cfg.crossval_lambda.empty() ? std::vector<double>{cfg.train.lambda} : cfg.crossval_lambda;
  std::vector<trainer::TrainConfig> grid;
  for (const double mu : mus) {
    for (const double lambda : lambdas) {
      auto c = cfg.train;
      c.mu = mu;
      c.lambda = lambda;
      c.validate();
      grid.push_back(c);
    }
  }
  return grid;
}

struct RunResult {
  nlohmann::json summary;
  model_io::ModelDocument model;
  eval::RocCurve roc;
  double seconds = 0.0;
};

/// load -> split -> normalize (train stats, test clamped) -> optional crossval
/// -> train -> score test.
inline RunResult run_pipeline(const ExperimentConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  const auto batch = acquire_data(cfg);
  const auto split = data::split_train_test(batch, cfg.train_fraction, cfg.anomaly_fraction,
                                            derive_seed(cfg.seed, "split"));
  const auto stats = data::fit_normalization(split.train);
  auto train = data::normalize(split.train, stats, false);
  const auto test = data::normalize(split.test, stats, true);

  trainer::TrainConfig chosen = cfg.train;
  nlohmann::json cv = nullptr;
  if (cfg.crossval) {
    const auto grid = crossval_grid(cfg);
    const auto res = eval::crossval(train, grid, cfg.seed);
    chosen = grid[res.best_index];
    cv = {{"mean_auc", res.mean_auc}, {"selected_index", res.best_index},
          {"selected_mu", chosen.mu}, {"selected_lambda", chosen.lambda}};
  }

  // Unsupervised training ignores labels; the supervised modes consume them.
  const auto detector = trainer::train(train, chosen);
  const auto scores = detector.decision_values(test);
  const auto roc = eval::roc_curve(scores, test.labels());

  RunResult out;
  out.model = {detector, stats};
  out.roc = roc;
  out.summary = {{"auc", eval::auc_summary(roc)},
                 {"n_train", split.train.size()},
                 {"n_test", split.test.size()},
                 {"iterations", detector.iterations},
                 {"converged", detector.converged},
                 {"smo_converged", detector.smo_converged},
                 {"trace", detector.trace},
                 {"crossval", cv},
                 {"trained_config", model_io::config_to_json(chosen)},
                 {"config", config_to_json(cfg)}};
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

inline std::string roc_csv(const eval::RocCurve& curve) {
  std::ostringstream s;
  eval::write_roc_csv(curve, s);
  return s.str();
}

/// Runs an experiment and writes model.json, roc.csv, summary.json and timing.json.
inline nlohmann::json cmd_run(const ExperimentConfig& cfg) {
  const auto result = run_pipeline(cfg);
  OutputSet out(cfg.out_dir);
  out.write("model.json", model_io::to_json(result.model).dump(2) + "\n");
  out.write("roc.csv", roc_csv(result.roc));
  out.write("summary.json", result.summary.dump(2) + "\n");
  out.write("timing.json", nlohmann::json{{"wall_seconds", result.seconds}}.dump(2) + "\n");
  out.commit();
  return result.summary;
}

/// Scores every sequence in `data_path` with a stored model. Returns CSV text
/// `id,score,label_pred`.
inline std::string cmd_score(const std::string& model_path, const std::string& data_path) {
  const auto doc = model_io::load(model_path);
  if (!fs::exists(data_path)) throw IoError("data file '" + data_path + "' does not exist");
  auto batch = data::load_dataset(data_path);
  if (!batch.empty() && batch.dim() != doc.detector.params.input_dim) {
    throw DimensionError("data has dimension " + std::to_string(batch.dim()) + ", model expects " +
                         std::to_string(doc.detector.params.input_dim));
  }
  if (doc.normalization && !batch.empty()) batch = data::normalize(batch, *doc.normalization, true);
  std::ostringstream out;
  out << "id,score,label_pred\n";
  out.precision(17);
  for (const auto& item : batch) {
    const double s = doc.detector.decision_value(item.values);
    out << item.id << ',' << s << ',' << to_int(sign_of(s)) << '\n';
  }
  return out.str();
}

/// Generates the configured data set (with injected anomalies) as JSONL text.
inline std::string cmd_synth(const ExperimentConfig& cfg) {
  if (!cfg.synth) throw ConfigError("synth needs a [synth] section");
  std::ostringstream out;
  data::write_jsonl(acquire_data(cfg), out);
  return out.str();
}

/// Reads `score` and `label` columns (or labels looked up by `id` in a data
/// file) and returns the ROC curve.
inline eval::RocCurve cmd_roc(const std::string& scores_path, const std::optional<std::string>& data_path) {
  std::ifstream in(scores_path);
  if (!in) throw IoError("cannot open score file '" + scores_path + "'");
  std::map<std::string, Sign> id_labels;
  if (data_path) {
    for (const auto& item : data::load_dataset(*data_path)) {
      if (item.label) id_labels[item.id] = *item.label;
    }
  }
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  std::string text;
  if (!std::getline(in, text)) throw ParseError(1, "score file is empty");
  if (!text.empty() && text.back() == '\r') text.pop_back();
  std::vector<std::string> header;
  for (const auto& tok : Tokenizer(text)) header.push_back(boost::algorithm::trim_copy(tok));
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int score_col = col("score"), label_col = col("label"), id_col = col("id");
  if (score_col < 0) throw ParseError(1, "score file needs a 'score' column");
  if (label_col < 0 && (id_col < 0 || !data_path)) {
    throw ParseError(1, "score file needs a 'label' column, or an 'id' column plus --data");
  }
  std::vector<double> scores;
  std::vector<Sign> labels;
  std::size_t line = 1;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (boost::algorithm::trim_copy(text).empty()) continue;
    std::vector<std::string> cells;
    for (const auto& tok : Tokenizer(text)) cells.push_back(boost::algorithm::trim_copy(tok));
    if (cells.size() != header.size()) throw ParseError(line, "wrong number of columns");
    try {
      scores.push_back(std::stod(cells[static_cast<std::size_t>(score_col)]));
    } catch (const std::exception&) {
      throw ParseError(line, "score is not a number");
    }
    if (label_col >= 0) {
      const auto& l = cells[static_cast<std::size_t>(label_col)];
      if (l == "1" || l == "+1") {
        labels.push_back(Sign::positive);
      } else if (l == "-1") {
        labels.push_back(Sign::negative);
      } else {
        throw ParseError(line, "label must be -1 or 1");
      }
    } else {
      const auto it = id_labels.find(cells[static_cast<std::size_t>(id_col)]);
      if (it == id_labels.end()) throw ParseError(line, "no label for id '" + cells[static_cast<std::size_t>(id_col)] + "'");
      labels.push_back(it->second);
    }
  }
  return eval::roc_curve(scores, labels);
}

/// Exit status for an error category.
inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::training: return 4;
    case ErrorKind::io: return 5;
  }
  return 1;
}

}  // namespace seqoc::experiment
