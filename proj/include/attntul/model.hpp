#pragma once

// The AttnTUL network: GCNs over the local and global graphs, the semantic
// location encoder, stacked multi-head temporal self-attention with
// max-pooling, sparsemax elastic attention over global trajectory
// embeddings, and the linear linking layer.

#include "attntul/graph.hpp"
#include "attntul/mobility.hpp"
#include "attntul/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace attntul {

struct ModelConfig {
  std::size_t d = 128;
  std::size_t gcn_layers = 2;
  std::size_t attn_layers = 3;
  std::size_t heads = 4;
  double lambda_l2 = 5e-4;
  double dropout_rate = 0.5;
  std::size_t state_vocab = kMotionStateCount;
  std::size_t time_vocab = 12;  // 2 h windows

  // ablation variants
  bool disable_local = false;           // TUL-L
  bool disable_global = false;          // TUL-G
  bool disable_self_attention = false;  // TUL-SA
  bool use_softmax_global = false;      // TUL-EA
  bool disable_time_state = false;      // TUL-TS

  bool binarize_adjacency = false;
  bool scale_full_d = false;  // scale scores by sqrt(d) instead of sqrt(d / heads)

  std::size_t head_dim() const noexcept { return heads ? d / heads : 0; }
  void validate() const;  // throws ConfigError
};

enum class Ablation { none, tul_l, tul_g, tul_sa, tul_ea, tul_ts };

// "tul-l", "tul-g", "tul-sa", "tul-ea", "tul-ts" or "none"; throws
// ConfigError listing the valid names otherwise.
Ablation parse_ablation(const std::string& name);
std::string ablation_name(Ablation a);
void apply_ablation(ModelConfig& config, Ablation a);

enum class ParamGroup { local_gcn, global_gcn, time_embed, state_embed, location_fc, attention, linking };

struct Parameter {
  std::string name;
  ad::Tensor tensor;
  ParamGroup group;
  bool l2 = true;  // false for biases and layer-norm parameters
};

class ModelParams {
public:
  // Xavier-uniform matrices, zero biases, unit layer-norm gains.
  static ModelParams initialize(const ModelConfig& config, std::size_t n_grids,
                                std::size_t n_users, std::uint64_t seed);

  std::vector<Parameter>& all() noexcept { return params_; }
  const std::vector<Parameter>& all() const noexcept { return params_; }

  const ad::Tensor& get(const std::string& name) const;
  ad::Tensor& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::size_t total_count() const;

  // Copies are shallow (tensors are handles); clone() copies the values.
  ModelParams clone() const;

  void add(std::string name, ad::Tensor tensor, ParamGroup group, bool l2);

private:
  std::vector<Parameter> params_;
};

bool parameter_active(ParamGroup group, const ModelConfig& config);
std::size_t active_parameter_count(const ModelParams& params, const ModelConfig& config);
std::size_t expected_parameter_count(const ModelConfig& config, std::size_t n_grids,
                                     std::size_t n_users);

// Normalised adjacencies and global features, fixed for a whole run.
struct ModelGraphs {
  std::shared_ptr<const ad::FixedSparse> local_adjacency;   // n_grids x n_grids
  std::shared_ptr<const ad::FixedSparse> global_adjacency;  // (T+U) x (T+U)
  std::shared_ptr<const ad::FixedSparse> global_features;   // (T+U) x n_grids
  std::size_t n_grids = 0;
  std::size_t trajectory_count = 0;
  std::size_t user_count = 0;

  static ModelGraphs prepare(const LocalSpatialGraph& local, const GlobalSpatialGraph& global,
                             bool binarize_adjacency);
};

struct TrajectoryInput {
  std::vector<std::size_t> grids;
  std::vector<std::size_t> states;
  std::vector<std::size_t> windows;
  std::size_t node = 0;  // trajectory row in the global graph
};

TrajectoryInput make_trajectory_input(const GridSequence& seq, std::size_t node);

// H^(i+1) = ReLU(M H^(i) W^(i)). `features == nullptr` means identity
// features, in which case the first product M W^(0) skips the feature step.
ad::Tensor gcn_forward(const std::shared_ptr<const ad::FixedSparse>& normalized,
                       const std::shared_ptr<const ad::FixedSparse>& features,
                       std::span<const ad::Tensor> weights);

// P[pos][2i] = sin(pos / 10000^(2i/d)), P[pos][2i+1] = cos(same).
std::vector<double> positional_encoding(std::size_t max_len, std::size_t d);

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout
};

// Intermediate values exposed for tests and embedding export.
struct AttentionTrace {
  std::vector<ad::Tensor> temporal;  // per trajectory, per layer, per head: m x m
  ad::Tensor global_weights;         // batch x T
};

// x_i = tanh(FC([W_t t_i + b_t ; W_s s_i + b_s ; H_l(g_i)])), m x d.
ad::Tensor semantic_location_encode(const ModelConfig& config, const ModelParams& params,
                                    const ad::Tensor& grid_embeddings,
                                    const TrajectoryInput& traj);

// Position encoding, attn_layers x (multi-head attention, residual, layer
// norm). Identity when disable_self_attention is set.
ad::Tensor temporal_self_attention(const ModelConfig& config, const ModelParams& params,
                                   const ad::Tensor& x, const ForwardOptions& opts,
                                   std::vector<ad::Tensor>* attention = nullptr);

// Max-pool over positions; zeros when disable_local is set.
ad::Tensor local_representation(const ModelConfig& config, const ad::Tensor& z);

// Cosine scores of each query trajectory against every trajectory row,
// normalised by sparsemax (softmax under TUL-EA), then a weighted sum of
// those rows. Returns batch x d; zeros when disable_global is set.
ad::Tensor global_elastic_attention(const ModelConfig& config,
                                    const ad::Tensor& trajectory_embeddings,
                                    std::span<const std::size_t> query_rows,
                                    ad::Tensor* weights_out = nullptr);

// y = [z_l ; z_g] W_c^T + b_c, batch x |U|.
ad::Tensor linking_forward(const ModelParams& params, const ad::Tensor& local_repr,
                           const ad::Tensor& global_repr);

// Cross-entropy plus (lambda / 2) * sum of squared weight-matrix entries
// over the parameters active in this variant.
ad::Tensor model_loss(const ModelConfig& config, const ModelParams& params,
                      const ad::Tensor& logits, std::span<const std::size_t> targets);

struct ForwardResult {
  ad::Tensor logits;        // batch x |U|
  ad::Tensor local_repr;    // batch x d
  ad::Tensor global_repr;   // batch x d
};

// Both GCNs over the full graphs, then the per-trajectory local path,
// global elastic attention and linking for each trajectory in `batch`
// (indices into `trajectories`).
ForwardResult forward_full(const ModelConfig& config, const ModelParams& params,
                           const ModelGraphs& graphs,
                           std::span<const TrajectoryInput> trajectories,
                           std::span<const std::size_t> batch, const ForwardOptions& opts,
                           AttentionTrace* trace = nullptr);

}  // namespace attntul
