#pragma once

// The staged command pipeline. Every stage reads the artifacts of the
// previous one from the output directory and writes its own:
//
//   preprocess    gridmap.txt, sequences.tsv, splits.txt, manifest.txt
//   build-graphs  local.graph, global.graph
//   train         model[.VARIANT].ckpt, history[.VARIANT].tsv
//   evaluate      metrics[.VARIANT].txt
//   embed         embeddings[.VARIANT].tsv
//
// VARIANT is the ablation name, omitted for the full model.

#include "attntul/config.hpp"
#include "attntul/graph.hpp"
#include "attntul/metrics.hpp"
#include "attntul/mobility.hpp"
#include "attntul/trainer.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace attntul {

struct PreprocessSummary {
  std::size_t users = 0;
  std::size_t trajectories = 0;  // sub-trajectories
  std::size_t points = 0;
  std::size_t grids = 0;
  std::size_t lines = 0;
  std::size_t failures = 0;
};

struct GraphSummary {
  std::size_t local_edges = 0;
  std::size_t global_nodes = 0;
  std::size_t global_edges = 0;
};

struct TrainSummary {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_acc1 = 0.0;
  std::filesystem::path checkpoint;
};

PreprocessSummary cmd_preprocess(const RunConfig& config, std::ostream* log = nullptr);
GraphSummary cmd_build_graphs(const RunConfig& config, std::ostream* log = nullptr);
TrainSummary cmd_train(const RunConfig& config, std::ostream* log = nullptr);
// `split` is "test" or "validation".
MetricsReport cmd_evaluate(const RunConfig& config, const std::string& split = "test",
                           std::ostream* log = nullptr);
std::size_t cmd_embed(const RunConfig& config, std::ostream* log = nullptr);

// Artifact locations for a config's output directory and ablation.
struct ArtifactPaths {
  std::filesystem::path gridmap, sequences, splits, manifest;
  std::filesystem::path local_graph, global_graph;
  std::filesystem::path checkpoint, history, metrics, embeddings;

  static ArtifactPaths for_config(const RunConfig& config);
};

void write_sequences(std::ostream& out, const std::vector<GridSequence>& seqs);
std::vector<GridSequence> read_sequences(std::istream& in);
void write_split(std::ostream& out, const DatasetSplit& split);
DatasetSplit read_split(std::istream& in);
void write_gridmap(std::ostream& out, const GridMap& gm);
GridMap read_gridmap(std::istream& in);

}  // namespace attntul
