#pragma once

// Independent reference computations shared by unit and acceptance tests.

#include "support.hpp"

#include "attntul/graph.hpp"
#include "attntul/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <vector>

namespace testing {

inline std::vector<attntul::GridSequence> random_grid_sequences(std::mt19937_64& rng, std::size_t n,
                                                                std::size_t grids,
                                                                std::size_t max_len) {
  std::vector<attntul::GridSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> g(1 + rng() % max_len);
    for (auto& x : g) x = static_cast<int>(rng() % grids);
    out.push_back(sequence_of(g, std::to_string(i % 7), static_cast<std::int64_t>(i)));
  }
  return out;
}

// Simplex projection by exhaustive search over supports: every non-empty
// subset S gives the candidate p_S = z - tau on S (tau fixing the sum to
// 1); among feasible candidates (p >= 0) the closest to z is the
// projection. Extended precision throughout.
inline std::vector<double> sparsemax_oracle(const std::vector<double>& z) {
  const std::size_t n = z.size();
  long double best = std::numeric_limits<long double>::infinity();
  std::vector<double> best_p(n, 0.0);
  std::vector<long double> p(n);
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    long double sum = 0.0L;
    int k = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) {
        sum += z[i];
        ++k;
      }
    const long double tau = (sum - 1.0L) / k;
    bool feasible = true;
    long double dist = 0.0L;
    for (std::size_t i = 0; i < n && feasible; ++i) {
      p[i] = (mask >> i & 1u) ? static_cast<long double>(z[i]) - tau : 0.0L;
      if (p[i] < 0.0L) feasible = false;
      const long double diff = p[i] - z[i];
      dist += diff * diff;
    }
    if (feasible && dist < best) {
      best = dist;
      for (std::size_t i = 0; i < n; ++i) best_p[i] = static_cast<double>(p[i]);
    }
  }
  return best_p;
}

inline attntul::CsrMatrix local_graph_oracle(const std::vector<attntul::GridSequence>& seqs,
                                             std::size_t n) {
  std::vector<double> dense(n * n, 0.0);
  for (const auto& s : seqs) {
    std::set<std::pair<int, int>> pairs;
    for (std::size_t i = 1; i < s.entries.size(); ++i) {
      const int a = s.entries[i - 1].grid, b = s.entries[i].grid;
      if (a != b) pairs.insert({std::min(a, b), std::max(a, b)});
    }
    for (auto [a, b] : pairs) {
      dense[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b)] += 1;
      dense[static_cast<std::size_t>(b) * n + static_cast<std::size_t>(a)] += 1;
    }
  }
  return attntul::CsrMatrix::from_dense(n, n, dense);
}

// |grids(i) ∩ grids(j)| for every ordered pair i != j.
inline attntul::CsrMatrix shared_grid_oracle(const std::vector<attntul::GridSequence>& seqs) {
  const std::size_t t = seqs.size();
  std::vector<std::set<int>> sets(t);
  for (std::size_t i = 0; i < t; ++i)
    for (const auto& e : seqs[i].entries) sets[i].insert(e.grid);
  std::vector<double> dense(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) {
      if (i == j) continue;
      std::size_t shared = 0;
      for (int g : sets[i]) shared += sets[j].count(g);
      dense[i * t + j] = static_cast<double>(shared);
    }
  return attntul::CsrMatrix::from_dense(t, t, dense);
}

// D^-1/2 (A + I) D^-1/2 from a dense matrix in long double.
inline std::vector<long double> normalize_oracle(const std::vector<double>& a, std::size_t n) {
  std::vector<long double> deg(n, 1.0L), out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a[i * n + j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = (a[i * n + j] + (i == j ? 1.0L : 0.0L)) / std::sqrt(deg[i] * deg[j]);
  return out;
}

struct MacroOracle {
  double p = 0.0, r = 0.0, f1 = 0.0;
};

// Confusion-matrix macro metrics over the classes present in `truth`.
inline MacroOracle macro_oracle(const std::vector<std::size_t>& truth,
                                const std::vector<std::size_t>& predicted, std::size_t classes) {
  std::vector<std::vector<std::size_t>> cm(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm[truth[i]][predicted[i]];
  MacroOracle m;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t row = 0, col = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      row += cm[c][k];
      col += cm[k][c];
    }
    if (row == 0) continue;
    ++present;
    const double tp = static_cast<double>(cm[c][c]);
    const double p = col ? tp / static_cast<double>(col) : 0.0;
    const double r = tp / static_cast<double>(row);
    m.p += p;
    m.r += r;
    m.f1 += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  if (present) {
    m.p /= static_cast<double>(present);
    m.r /= static_cast<double>(present);
    m.f1 /= static_cast<double>(present);
  }
  return m;
}

// A prediction whose ranking starts with `top` and lists the rest ascending.
inline attntul::Prediction prediction_with_top(std::size_t truth, std::size_t top, std::size_t classes) {
  attntul::Prediction p{truth, {top}};
  for (std::size_t c = 0; c < classes; ++c)
    if (c != top) p.ranking.push_back(c);
  return p;
}

struct MacroSweep {
  std::size_t cases = 0;
  double worst = 0.0;  // largest |library - oracle| over P, R and F1
};

// Every truth labelling up to relabelling (labels introduced in order of
// first appearance) against every prediction assignment, for all class
// counts <= max_classes and item counts <= max_items.
inline MacroSweep macro_sweep(std::size_t max_classes, std::size_t max_items) {
  MacroSweep sweep;
  for (std::size_t classes = 1; classes <= max_classes; ++classes)
    for (std::size_t items = 1; items <= max_items; ++items) {
      std::size_t total = 1;
      for (std::size_t i = 0; i < items; ++i) total *= classes;
      std::vector<std::size_t> truth(items), pred(items);
      for (std::size_t tcode = 0; tcode < total; ++tcode) {
        std::size_t code = tcode, next = 0;
        bool canonical = true;
        for (std::size_t i = 0; i < items && canonical; ++i) {
          truth[i] = code % classes;
          code /= classes;
          if (truth[i] > next) canonical = false;
          if (truth[i] == next) ++next;
        }
        if (!canonical) continue;
        for (std::size_t pcode = 0; pcode < total; ++pcode) {
          std::size_t pc = pcode;
          attntul::PredictionSet preds;
          for (std::size_t i = 0; i < items; ++i) {
            pred[i] = pc % classes;
            pc /= classes;
            preds.push_back(prediction_with_top(truth[i], pred[i], classes));
          }
          const auto got = attntul::macro_metrics(preds);
          const auto want = macro_oracle(truth, pred, classes);
          sweep.worst = std::max({sweep.worst, std::abs(got.precision - want.p),
                                  std::abs(got.recall - want.r), std::abs(got.f1 - want.f1)});
          ++sweep.cases;
        }
      }
    }
  return sweep;
}

}  // namespace testing
