#pragma once

// ROC curves, AUC, and two-fold cross-validated model selection.

#include <algorithm>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqoc/common.hpp"
#include "seqoc/data.hpp"
#include "seqoc/error.hpp"
#include "seqoc/trainer.hpp"

namespace seqoc::eval {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Nominal (+1) is the positive class. thresholds[k] is the score cutoff
/// (score >= cutoff counts as positive) that produces points[k].
struct RocCurve {
  std::vector<RocPoint> points;
  std::vector<double> thresholds;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

inline RocCurve roc_curve(const std::vector<double>& scores, const std::vector<Sign>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  RocCurve curve;
  for (const Sign s : labels) (s == Sign::positive ? curve.n_pos : curve.n_neg)++;
  if (curve.n_pos == 0 || curve.n_neg == 0) {
    throw DegenerateLabelsError("ROC needs both nominal and anomalous labels");
  }
  for (const double s : scores) {
    if (std::isnan(s)) throw DataError("score is NaN");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  curve.points.push_back({0.0, 0.0});
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double cutoff = scores[order[k]];
    while (k < order.size() && scores[order[k]] == cutoff) {
      (labels[order[k]] == Sign::positive ? tp : fp)++;
      ++k;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(curve.n_neg),
                            static_cast<double>(tp) / static_cast<double>(curve.n_pos)});
    curve.thresholds.push_back(cutoff);
  }
  return curve;
}

/// Trapezoidal area under the curve.
inline double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const auto& a = curve.points[k - 1];
    const auto& b = curve.points[k];
    area += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
  }
  return area;
}

inline double auc(const std::vector<double>& scores, const std::vector<Sign>& labels) {
  return auc(roc_curve(scores, labels));
}

inline void write_roc_csv(const RocCurve& curve, std::ostream& out) {
  out << "threshold,fpr,tpr\n";
  out.precision(17);
  for (std::size_t k = 0; k < curve.points.size(); ++k) {
    const double t = curve.thresholds[k];
    if (std::isinf(t)) {
      out << (t > 0 ? "inf" : "-inf");
    } else {
      out << t;
    }
    out << ',' << curve.points[k].fpr << ',' << curve.points[k].tpr << '\n';
  }
}

inline nlohmann::json auc_summary(const RocCurve& curve) {
  return {{"auc", auc(curve)}, {"n_pos", curve.n_pos}, {"n_neg", curve.n_neg}};
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CrossvalResult {
  std::size_t best_index = 0;
  /// Mean held-out AUC per grid entry; failed entries score 0.
  std::vector<double> mean_auc;
};

/// Two stratified folds drawn from the seed, each item assigned to fold 0 or 1.
inline std::vector<int> stratified_folds(const data::SequenceBatch& batch, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    (batch[i].label && *batch[i].label == Sign::negative ? neg : pos).push_back(i);
  }
  std::mt19937_64 rng(derive_seed(seed, "fold"));
  std::vector<int> fold(batch.size(), 0);
  for (auto* group : {&pos, &neg}) {
    std::shuffle(group->begin(), group->end(), rng);
    for (std::size_t k = 0; k < group->size(); ++k) fold[(*group)[k]] = static_cast<int>(k % 2);
  }
  return fold;
}

inline data::SequenceBatch subset(const data::SequenceBatch& batch, const std::vector<int>& fold, int which) {
  data::SequenceBatch out(batch.dim());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (fold[i] == which) out.push_back(batch[i]);
  }
  return out;
}

/// Trains every grid entry on each fold, scores AUC on the other fold, and
/// returns the entry with the highest mean (earliest index on ties). Entries
/// whose training diverges score 0 on that fold.
inline CrossvalResult crossval(const data::SequenceBatch& batch, const std::vector<trainer::TrainConfig>& grid,
                               std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("cross-validation grid is empty");
  if (!batch.fully_labeled()) throw DataError("cross-validation needs labeled data");
  const auto fold = stratified_folds(batch, seed);
  const data::SequenceBatch parts[2] = {subset(batch, fold, 0), subset(batch, fold, 1)};
  for (const auto& part : parts) {
    if (part.size() < 2) throw InsufficientDataError("a cross-validation fold has fewer than two sequences");
    const auto labels = part.labels();
    const bool both = std::count(labels.begin(), labels.end(), Sign::positive) > 0 &&
                      std::count(labels.begin(), labels.end(), Sign::negative) > 0;
    if (!both) throw InsufficientDataError("a cross-validation fold lacks one of the classes");
  }

  CrossvalResult result;
  double best = -1.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double total = 0.0;
    for (int k = 0; k < 2; ++k) {
      const auto& train_part = parts[k];
      const auto& test_part = parts[1 - k];
      try {
        const auto det = trainer::train(train_part, grid[g]);
        total += auc(det.decision_values(test_part), test_part.labels());
      } catch (const DivergenceError&) {
      } catch (const StepFailure&) {
      }
    }
    const double mean = total / 2.0;
    result.mean_auc.push_back(mean);
    if (mean > best) {
      best = mean;
      result.best_index = g;
    }
  }
  return result;
}

inline trainer::TrainConfig crossval_select(const data::SequenceBatch& batch,
                                            const std::vector<trainer::TrainConfig>& grid, std::uint64_t seed) {
  return grid[crossval(batch, grid, seed).best_index];
}

}  // namespace seqoc::eval
