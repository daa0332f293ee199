#pragma once

// Local grid-transition graph, trajectory/user global graph, and the
// symmetric GCN normalisation D^-1/2 (A + I) D^-1/2.

#include "attntul/mobility.hpp"
#include "attntul/sparse.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace attntul {

// Nodes are grids; features are the implicit n x n identity.
struct LocalSpatialGraph {
  std::size_t n_grids = 0;
  CsrMatrix adjacency;
};

// Rows are trajectories in roster order, columns grids, entries 1.
using GridIncidenceMatrix = CsrMatrix;

// Node roster: trajectories 0..T-1, then users T..T+U-1.
struct GlobalSpatialGraph {
  std::size_t trajectory_count = 0;
  std::size_t user_count = 0;
  std::vector<std::string> roster;  // node labels, size T + U
  CsrMatrix adjacency;              // (T+U) x (T+U)
  CsrMatrix features;               // (T+U) x n_grids, multi-hot
  double user_edge_weight = 1.0;

  std::size_t node_count() const noexcept { return trajectory_count + user_count; }
};

// Edge weight (a, b) = number of trajectories with at least one
// consecutive a->b or b->a step. Self transitions are dropped.
LocalSpatialGraph build_local_graph(std::span<const GridSequence> sequences, std::size_t n_grids);

GridIncidenceMatrix build_grid_incidence(std::span<const GridSequence> sequences,
                                         std::size_t n_grids);

// `labels[i]` is the user index of trajectory i when it is a training
// trajectory, std::nullopt otherwise. Trajectory-trajectory weights are the
// shared-grid counts from C * C^T; each labelled trajectory is joined to its
// user with the maximum trajectory-trajectory weight (1 when there is none).
GlobalSpatialGraph build_global_graph(const GridIncidenceMatrix& incidence,
                                      std::span<const std::optional<std::size_t>> labels,
                                      std::size_t user_count,
                                      std::vector<std::string> roster = {});

// Throws ShapeError for non-square or asymmetric input.
CsrMatrix symmetric_normalize(const CsrMatrix& adjacency, bool binarize = false);

// Text format, version 1:
//   attntul-graph 1
//   kind local|global
//   nodes N
//   trajectories T        (global only)
//   users U               (global only)
//   grids G
//   edges E               (stored entries, both directions)
//   max_weight W
//   symmetric 1|0
//   roster                then N lines, one label each
//   adjacency             then E lines `row col weight`, row-major
//   features F            (global only) then F lines `row col`
// Weights are written with 17 significant digits so reading is bit-exact.
void write_local_graph(std::ostream& out, const LocalSpatialGraph& g);
void write_global_graph(std::ostream& out, const GlobalSpatialGraph& g);
LocalSpatialGraph read_local_graph(std::istream& in);
GlobalSpatialGraph read_global_graph(std::istream& in);

}  // namespace attntul
