#pragma once

// Adam training loop with early stopping, split evaluation and embedding
// export.

#include "attntul/metrics.hpp"
#include "attntul/mobility.hpp"
#include "attntul/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace attntul {

enum class StopMetric { val_acc1, val_loss };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs_max = 80;
  std::size_t batch_size = 16;
  std::size_t patience = 10;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  StopMetric stop_metric = StopMetric::val_acc1;
  bool record_time = true;  // false writes 0 seconds so histories are reproducible

  void validate() const;  // throws ConfigError
};

// Named sub-seed ("init", "shuffle", "dropout") derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

// One bias-corrected Adam update of a single tensor's values. `step` is the
// 1-based step count after incrementing.
void adam_update(std::span<double> value, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::size_t step, const TrainConfig& config);

// Updates every parameter active under `model` from its accumulated grad.
// Inactive parameters are left untouched. Throws NumericalError naming the
// parameter on a non-finite gradient.
void adam_step(ModelParams& params, OptimizerState& state, const TrainConfig& config,
               const ModelConfig& model);

struct TrainingData {
  const ModelGraphs* graphs = nullptr;
  std::span<const TrajectoryInput> inputs;  // every trajectory, global-graph order
  std::span<const std::size_t> users;       // true user index per trajectory
  const DatasetSplit* split = nullptr;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_acc1 = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Shuffled mini-batch Adam on the train split; validation after every epoch
// keeps the best parameters and stops after `patience` epochs without
// improvement. `initial` is consumed as the starting point.
TrainResult train(const ModelConfig& model, const TrainConfig& config, const TrainingData& data,
                  ModelParams initial, const EpochCallback& on_epoch = {});

// "epoch\ttrain_loss\tval_acc1\tseconds" per line.
void write_history(std::ostream& out, std::span<const EpochRecord> history);

// Dropout-free logits for `indices`, row-major |indices| x |U|.
std::vector<double> predict_logits(const ModelConfig& model, const ModelParams& params,
                                   const TrainingData& data, std::span<const std::size_t> indices);

PredictionSet predict(const ModelConfig& model, const ModelParams& params,
                      const TrainingData& data, std::span<const std::size_t> indices);

MetricsReport evaluate_on_split(const ModelConfig& model, const ModelParams& params,
                                const TrainingData& data, std::span<const std::size_t> indices);

struct EmbeddingRow {
  std::string id;
  std::size_t user = 0;
  std::vector<double> vector;  // [z_l ; z_g], 2d entries
};

std::vector<EmbeddingRow> export_embeddings(const ModelConfig& model, const ModelParams& params,
                                            const TrainingData& data,
                                            std::span<const std::string> ids);

// id, user, then the vector entries (%.17g), tab-separated.
void write_embeddings(std::ostream& out, std::span<const EmbeddingRow> rows,
                      std::span<const std::string> user_names);

}  // namespace attntul
