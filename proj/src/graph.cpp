#include "attntul/graph.hpp"

#include "attntul/error.hpp"
#include "attntul/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <utility>

namespace attntul {

namespace {

std::string format_weight(double w) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", w);
  return buf;
}

void write_header(std::ostream& out, const char* kind, std::size_t nodes) {
  out << "attntul-graph 1\n";
  out << "kind " << kind << "\n";
  out << "nodes " << nodes << "\n";
}

void write_adjacency(std::ostream& out, const CsrMatrix& adj) {
  out << "edges " << adj.nnz() << "\n";
  out << "max_weight " << format_weight(adj.max_value()) << "\n";
  out << "symmetric " << (adj.is_symmetric() ? 1 : 0) << "\n";
}

void write_entries(std::ostream& out, const CsrMatrix& adj) {
  out << "adjacency\n";
  for (const auto& t : adj.triplets())
    out << t.row << ' ' << t.col << ' ' << format_weight(t.value) << '\n';
}

class HeaderReader {
public:
  explicit HeaderReader(std::istream& in) : in_(in) {}

  std::string line() {
    std::string s;
    if (!std::getline(in_, s)) throw DataError("graph file truncated");
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  }

  std::string expect(const std::string& key) {
    auto s = line();
    std::istringstream is(s);
    std::string k;
    is >> k;
    if (k != key) throw DataError("graph file: expected `" + key + "`, found `" + s + "`");
    std::string rest;
    std::getline(is, rest);
    auto first = rest.find_first_not_of(' ');
    return first == std::string::npos ? std::string() : rest.substr(first);
  }

  std::size_t expect_count(const std::string& key) {
    auto v = expect(key);
    try {
      return static_cast<std::size_t>(std::stoull(v));
    } catch (const std::exception&) {
      throw DataError("graph file: bad value for `" + key + "`: " + v);
    }
  }

  CsrMatrix read_entries(std::size_t n_rows, std::size_t n_cols, std::size_t count, bool weighted) {
    std::vector<Triplet> entries;
    entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::istringstream is(line());
      Triplet t;
      std::string w;
      is >> t.row >> t.col;
      if (weighted) {
        is >> w;
        t.value = std::strtod(w.c_str(), nullptr);
      } else {
        t.value = 1.0;
      }
      if (!is) throw DataError("graph file: malformed entry line");
      entries.push_back(t);
    }
    return CsrMatrix::from_triplets(n_rows, n_cols, std::move(entries));
  }

private:
  std::istream& in_;
};

void check_kind(HeaderReader& r, const std::string& kind) {
  if (r.line() != "attntul-graph 1") throw DataError("not an attntul graph file (version 1)");
  auto k = r.expect("kind");
  if (k != kind) throw DataError("graph file holds a " + k + " graph, expected " + kind);
}

}  // namespace

LocalSpatialGraph build_local_graph(std::span<const GridSequence> sequences, std::size_t n_grids) {
  std::vector<std::vector<std::pair<GridIndex, GridIndex>>> per_traj(sequences.size());
  const auto count = static_cast<std::ptrdiff_t>(sequences.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t ti = 0; ti < count; ++ti) {
    const auto& entries = sequences[static_cast<std::size_t>(ti)].entries;
    auto& pairs = per_traj[static_cast<std::size_t>(ti)];
    for (std::size_t i = 1; i < entries.size(); ++i) {
      GridIndex a = entries[i - 1].grid, b = entries[i].grid;
      if (a == b) continue;
      pairs.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  }

  std::vector<Triplet> entries;
  for (const auto& pairs : per_traj) {
    for (auto [a, b] : pairs) {
      if (a < 0 || b < 0 || static_cast<std::size_t>(b) >= n_grids)
        throw DataError("grid index " + std::to_string(b) + " outside map of " +
                        std::to_string(n_grids) + " grids");
      entries.push_back({a, b, 1.0});
      entries.push_back({b, a, 1.0});
    }
  }
  return LocalSpatialGraph{n_grids, CsrMatrix::from_triplets(n_grids, n_grids, std::move(entries))};
}

GridIncidenceMatrix build_grid_incidence(std::span<const GridSequence> sequences,
                                         std::size_t n_grids) {
  std::vector<Triplet> entries;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    std::vector<GridIndex> grids;
    for (const auto& e : sequences[i].entries) grids.push_back(e.grid);
    std::sort(grids.begin(), grids.end());
    grids.erase(std::unique(grids.begin(), grids.end()), grids.end());
    for (auto g : grids) entries.push_back({static_cast<std::int64_t>(i), g, 1.0});
  }
  return CsrMatrix::from_triplets(sequences.size(), n_grids, std::move(entries));
}

GlobalSpatialGraph build_global_graph(const GridIncidenceMatrix& incidence,
                                      std::span<const std::optional<std::size_t>> labels,
                                      std::size_t user_count, std::vector<std::string> roster) {
  const std::size_t t = incidence.rows();
  if (labels.size() != t) {
    throw DataError("global graph: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(t) + " trajectories");
  }
  for (std::size_t i = 0; i < t; ++i) {
    if (labels[i] && *labels[i] >= user_count)
      throw DataError("global graph: trajectory " + std::to_string(i) + " labelled with unknown user " +
                      std::to_string(*labels[i]));
  }

  GlobalSpatialGraph g;
  g.trajectory_count = t;
  g.user_count = user_count;
  const std::size_t n = t + user_count;

  CsrMatrix gram = kernels::incidence_gram(incidence);
  double w_max = gram.max_value();
  g.user_edge_weight = w_max > 0.0 ? w_max : 1.0;

  std::vector<Triplet> adj = gram.triplets();
  std::vector<Triplet> feat = incidence.triplets();
  for (std::size_t i = 0; i < t; ++i) {
    if (!labels[i]) continue;
    auto u = static_cast<std::int64_t>(t + *labels[i]);
    auto ti = static_cast<std::int64_t>(i);
    adj.push_back({ti, u, g.user_edge_weight});
    adj.push_back({u, ti, g.user_edge_weight});
    for (std::size_t k = incidence.row_ptr()[i]; k < incidence.row_ptr()[i + 1]; ++k)
      feat.push_back({u, incidence.col_idx()[k], 1.0});
  }
  g.adjacency = CsrMatrix::from_triplets(n, n, std::move(adj));
  // OR, not sum: duplicate user-grid entries collapse to 1
  CsrMatrix summed = CsrMatrix::from_triplets(n, incidence.cols(), std::move(feat));
  for (auto& v : summed.mutable_values()) v = 1.0;
  g.features = std::move(summed);

  if (roster.empty()) {
    for (std::size_t i = 0; i < t; ++i) roster.push_back("traj:" + std::to_string(i));
    for (std::size_t u = 0; u < user_count; ++u) roster.push_back("user:" + std::to_string(u));
  }
  if (roster.size() != n) throw DataError("global graph: roster size does not match node count");
  g.roster = std::move(roster);
  return g;
}

CsrMatrix symmetric_normalize(const CsrMatrix& a, bool binarize) {
  if (a.rows() != a.cols())
    throw ShapeError("symmetric_normalize: adjacency is " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()));
  if (!a.is_symmetric()) throw ShapeError("symmetric_normalize: adjacency is not symmetric");
  for (double v : a.values())
    if (v < 0.0) throw ShapeError("symmetric_normalize: negative edge weight");

  const std::size_t n = a.rows();
  std::vector<Triplet> tilde;
  tilde.reserve(a.nnz() + n);
  for (const auto& e : a.triplets()) tilde.push_back({e.row, e.col, binarize ? 1.0 : e.value});
  for (std::size_t i = 0; i < n; ++i)
    tilde.push_back({static_cast<std::int64_t>(i), static_cast<std::int64_t>(i), 1.0});
  CsrMatrix m = CsrMatrix::from_triplets(n, n, std::move(tilde));

  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t k = m.row_ptr()[i]; k < m.row_ptr()[i + 1]; ++k) d += m.values()[k];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  auto& vals = m.mutable_values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = m.row_ptr()[i]; k < m.row_ptr()[i + 1]; ++k) {
      auto j = static_cast<std::size_t>(m.col_idx()[k]);
      // the scale product commutes exactly, so (i, j) and (j, i) stay bit-equal
      vals[k] = vals[k] * (inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
  }
  return m;
}

void write_local_graph(std::ostream& out, const LocalSpatialGraph& g) {
  write_header(out, "local", g.n_grids);
  out << "grids " << g.n_grids << "\n";
  write_adjacency(out, g.adjacency);
  out << "roster\n";
  for (std::size_t i = 0; i < g.n_grids; ++i) out << "grid:" << i << "\n";
  write_entries(out, g.adjacency);
}

void write_global_graph(std::ostream& out, const GlobalSpatialGraph& g) {
  write_header(out, "global", g.node_count());
  out << "trajectories " << g.trajectory_count << "\n";
  out << "users " << g.user_count << "\n";
  out << "grids " << g.features.cols() << "\n";
  write_adjacency(out, g.adjacency);
  out << "user_edge_weight " << format_weight(g.user_edge_weight) << "\n";
  out << "roster\n";
  for (const auto& r : g.roster) out << r << "\n";
  write_entries(out, g.adjacency);
  out << "features " << g.features.nnz() << "\n";
  for (const auto& t : g.features.triplets()) out << t.row << ' ' << t.col << '\n';
}

LocalSpatialGraph read_local_graph(std::istream& in) {
  HeaderReader r(in);
  check_kind(r, "local");
  auto nodes = r.expect_count("nodes");
  auto grids = r.expect_count("grids");
  if (grids != nodes) throw DataError("local graph: grid count differs from node count");
  auto edges = r.expect_count("edges");
  r.expect("max_weight");
  r.expect("symmetric");
  r.expect("roster");
  for (std::size_t i = 0; i < nodes; ++i) r.line();
  r.expect("adjacency");
  LocalSpatialGraph g;
  g.n_grids = nodes;
  g.adjacency = r.read_entries(nodes, nodes, edges, true);
  return g;
}

GlobalSpatialGraph read_global_graph(std::istream& in) {
  HeaderReader r(in);
  check_kind(r, "global");
  auto nodes = r.expect_count("nodes");
  GlobalSpatialGraph g;
  g.trajectory_count = r.expect_count("trajectories");
  g.user_count = r.expect_count("users");
  if (g.node_count() != nodes) throw DataError("global graph: node count mismatch");
  auto grids = r.expect_count("grids");
  auto edges = r.expect_count("edges");
  r.expect("max_weight");
  r.expect("symmetric");
  g.user_edge_weight = std::strtod(r.expect("user_edge_weight").c_str(), nullptr);
  r.expect("roster");
  for (std::size_t i = 0; i < nodes; ++i) g.roster.push_back(r.line());
  r.expect("adjacency");
  g.adjacency = r.read_entries(nodes, nodes, edges, true);
  auto nfeat = r.expect_count("features");
  g.features = r.read_entries(nodes, grids, nfeat, false);
  return g;
}

}  // namespace attntul
