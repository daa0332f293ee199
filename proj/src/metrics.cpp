#include "attntul/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace attntul {

PredictionSet rank_predictions(std::span<const double> logits, std::size_t users,
                               std::span<const std::size_t> truths) {
  if (logits.size() != users * truths.size())
    throw std::invalid_argument("rank_predictions: logits do not match truths x users");
  PredictionSet preds(truths.size());
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double* row = logits.data() + i * users;
    auto& r = preds[i].ranking;
    r.resize(users);
    std::iota(r.begin(), r.end(), std::size_t{0});
    std::stable_sort(r.begin(), r.end(), [row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    preds[i].truth = truths[i];
  }
  return preds;
}

double acc_at_k(const PredictionSet& preds, std::size_t k) {
  if (preds.empty()) throw std::invalid_argument("acc_at_k: empty prediction set");
  if (k == 0) throw std::invalid_argument("acc_at_k: k must be at least 1");
  std::size_t hits = 0;
  for (const auto& p : preds) {
    auto end = p.ranking.begin() + static_cast<std::ptrdiff_t>(std::min(k, p.ranking.size()));
    if (std::find(p.ranking.begin(), end, p.truth) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

MacroMetrics macro_metrics(const PredictionSet& preds) {
  std::map<std::size_t, std::size_t> truth_count, predicted_count, correct;
  for (const auto& p : preds) {
    ++truth_count[p.truth];
    if (p.ranking.empty()) continue;
    const auto top = p.ranking.front();
    ++predicted_count[top];
    if (top == p.truth) ++correct[p.truth];
  }

  MacroMetrics m;
  if (truth_count.empty()) return m;
  for (const auto& [cls, n_true] : truth_count) {
    const double tp = static_cast<double>(correct[cls]);
    const auto n_pred = predicted_count[cls];
    const double precision = n_pred ? tp / static_cast<double>(n_pred) : 0.0;
    const double recall = tp / static_cast<double>(n_true);
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    m.class_precision[cls] = precision;
    m.class_recall[cls] = recall;
    m.class_f1[cls] = f1;
    m.precision += precision;
    m.recall += recall;
    m.f1 += f1;
  }
  const double classes = static_cast<double>(truth_count.size());
  m.precision /= classes;
  m.recall /= classes;
  m.f1 /= classes;
  return m;
}

MetricsReport evaluate_predictions(const PredictionSet& preds, std::span<const std::size_t> ks) {
  static constexpr std::size_t kDefaultKs[] = {1, 5};
  if (ks.empty()) ks = kDefaultKs;
  MetricsReport r;
  for (auto k : ks) r.acc_at[k] = acc_at_k(preds, k);
  auto m = macro_metrics(preds);
  r.macro_p = m.precision;
  r.macro_r = m.recall;
  r.macro_f1 = m.f1;
  r.class_precision = std::move(m.class_precision);
  r.class_recall = std::move(m.class_recall);
  return r;
}

void write_metrics(std::ostream& out, const MetricsReport& r) {
  char buf[64];
  auto line = [&](const std::string& key, double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    out << key << '=' << buf << '\n';
  };
  for (const auto& [k, v] : r.acc_at) line("acc@" + std::to_string(k), v);
  line("macro_p", r.macro_p);
  line("macro_r", r.macro_r);
  line("macro_f1", r.macro_f1);
}

}  // namespace attntul
