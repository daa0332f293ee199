#pragma once

// ACC@K and macro precision/recall/F1 over ranked user predictions.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

namespace attntul {

struct Prediction {
  std::size_t truth = 0;
  std::vector<std::size_t> ranking;  // all users, best first
};

using PredictionSet = std::vector<Prediction>;

// Ranks users by descending logit, ties by ascending user index.
// `logits` is row-major, one row of `users` entries per trajectory.
PredictionSet rank_predictions(std::span<const double> logits, std::size_t users,
                               std::span<const std::size_t> truths);

// Fraction of predictions whose true user is among the first k ranked.
// Throws std::invalid_argument for an empty set or k == 0.
double acc_at_k(const PredictionSet& preds, std::size_t k);

struct MacroMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::size_t, double> class_precision;  // classes present in the truth
  std::map<std::size_t, double> class_recall;
  std::map<std::size_t, double> class_f1;
};

// Per-class precision and recall from the top-1 prediction, averaged over
// the classes that occur as a true label. A class never predicted has
// precision 0; F1 is 0 when P + R = 0.
MacroMetrics macro_metrics(const PredictionSet& preds);

struct MetricsReport {
  std::map<std::size_t, double> acc_at;
  double macro_p = 0.0;
  double macro_r = 0.0;
  double macro_f1 = 0.0;
  std::map<std::size_t, double> class_precision;
  std::map<std::size_t, double> class_recall;
};

MetricsReport evaluate_predictions(const PredictionSet& preds,
                                   std::span<const std::size_t> ks = std::span<const std::size_t>());

// `acc@1=0.950000` style lines: acc@K for each K, then macro_p, macro_r,
// macro_f1, six decimals.
void write_metrics(std::ostream& out, const MetricsReport& report);

}  // namespace attntul
