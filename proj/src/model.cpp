#include "attntul/model.hpp"

#include "attntul/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace attntul {

using ad::Tensor;

namespace {

std::string layer_name(const char* prefix, std::size_t layer, const char* suffix) {
  return std::string(prefix) + "." + std::to_string(layer) + "." + suffix;
}

std::string head_name(std::size_t layer, std::size_t head, const char* which) {
  return "attn." + std::to_string(layer) + ".head." + std::to_string(head) + "." + which;
}

Tensor xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (auto& x : v) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    x = (2.0 * u - 1.0) * limit;
  }
  return Tensor::matrix(rows, cols, std::move(v), true);
}

std::vector<Tensor> gcn_weights(const ModelParams& params, const char* prefix,
                                std::size_t layers) {
  std::vector<Tensor> w;
  for (std::size_t i = 0; i < layers; ++i) w.push_back(params.get(layer_name(prefix, i, "weight")));
  return w;
}

}  // namespace

void ModelConfig::validate() const {
  if (d == 0) throw ConfigError("d must be positive");
  if (heads == 0 || d % heads != 0)
    throw ConfigError("d (" + std::to_string(d) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  if (gcn_layers == 0) throw ConfigError("gcn_layers must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout must lie in [0, 1)");
  if (lambda_l2 < 0.0) throw ConfigError("lambda must be non-negative");
  if (state_vocab == 0 || time_vocab == 0) throw ConfigError("vocabularies must be non-empty");
  if (disable_local && disable_global)
    throw ConfigError("disabling both the local and the global path leaves no representation");
}

Ablation parse_ablation(const std::string& name) {
  if (name == "none" || name.empty()) return Ablation::none;
  if (name == "tul-l") return Ablation::tul_l;
  if (name == "tul-g") return Ablation::tul_g;
  if (name == "tul-sa") return Ablation::tul_sa;
  if (name == "tul-ea") return Ablation::tul_ea;
  if (name == "tul-ts") return Ablation::tul_ts;
  throw ConfigError("unknown ablation `" + name +
                    "`; valid names: none, tul-l, tul-g, tul-sa, tul-ea, tul-ts");
}

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::tul_l: return "tul-l";
    case Ablation::tul_g: return "tul-g";
    case Ablation::tul_sa: return "tul-sa";
    case Ablation::tul_ea: return "tul-ea";
    case Ablation::tul_ts: return "tul-ts";
  }
  return "none";
}

void apply_ablation(ModelConfig& c, Ablation a) {
  c.disable_local = a == Ablation::tul_l;
  c.disable_global = a == Ablation::tul_g;
  c.disable_self_attention = a == Ablation::tul_sa;
  c.use_softmax_global = a == Ablation::tul_ea;
  c.disable_time_state = a == Ablation::tul_ts;
}

// ---- parameters ------------------------------------------------------------

void ModelParams::add(std::string name, Tensor tensor, ParamGroup group, bool l2) {
  if (contains(name)) throw std::logic_error("duplicate parameter " + name);
  tensor.set_requires_grad(true);
  params_.push_back(Parameter{std::move(name), std::move(tensor), group, l2});
}

const Tensor& ModelParams::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw std::out_of_range("no parameter named " + name);
}

Tensor& ModelParams::get(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p.tensor;
  throw std::out_of_range("no parameter named " + name);
}

bool ModelParams::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

std::size_t ModelParams::total_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams copy;
  for (const auto& p : params_) {
    Tensor t(p.tensor.shape(), std::vector<double>(p.tensor.values().begin(), p.tensor.values().end()),
             true);
    copy.params_.push_back(Parameter{p.name, std::move(t), p.group, p.l2});
  }
  return copy;
}

ModelParams ModelParams::initialize(const ModelConfig& c, std::size_t n_grids,
                                    std::size_t n_users, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  const std::size_t d = c.d, dh = c.head_dim();
  auto zeros = [](std::size_t n) { return Tensor::zeros({n}, true); };
  auto ones = [](std::size_t n) { return Tensor(ad::Shape{n}, std::vector<double>(n, 1.0), true); };

  for (std::size_t i = 0; i < c.gcn_layers; ++i)
    p.add(layer_name("local_gcn", i, "weight"), xavier(i == 0 ? n_grids : d, d, rng),
          ParamGroup::local_gcn, true);
  for (std::size_t i = 0; i < c.gcn_layers; ++i)
    p.add(layer_name("global_gcn", i, "weight"), xavier(i == 0 ? n_grids : d, d, rng),
          ParamGroup::global_gcn, true);

  p.add("time.weight", xavier(c.time_vocab, d, rng), ParamGroup::time_embed, true);
  p.add("time.bias", zeros(d), ParamGroup::time_embed, false);
  p.add("state.weight", xavier(c.state_vocab, d, rng), ParamGroup::state_embed, true);
  p.add("state.bias", zeros(d), ParamGroup::state_embed, false);
  p.add("location_fc.weight", xavier(3 * d, d, rng), ParamGroup::location_fc, true);
  p.add("location_fc.bias", zeros(d), ParamGroup::location_fc, false);

  for (std::size_t l = 0; l < c.attn_layers; ++l) {
    for (std::size_t h = 0; h < c.heads; ++h) {
      p.add(head_name(l, h, "query"), xavier(d, dh, rng), ParamGroup::attention, true);
      p.add(head_name(l, h, "key"), xavier(d, dh, rng), ParamGroup::attention, true);
      p.add(head_name(l, h, "value"), xavier(d, dh, rng), ParamGroup::attention, true);
    }
    p.add(layer_name("attn", l, "out.weight"), xavier(d, d, rng), ParamGroup::attention, true);
    p.add(layer_name("attn", l, "out.bias"), zeros(d), ParamGroup::attention, false);
    p.add(layer_name("attn", l, "norm.gain"), ones(d), ParamGroup::attention, false);
    p.add(layer_name("attn", l, "norm.bias"), zeros(d), ParamGroup::attention, false);
  }

  p.add("link.weight", xavier(n_users, 2 * d, rng), ParamGroup::linking, true);
  p.add("link.bias", zeros(n_users), ParamGroup::linking, false);
  return p;
}

bool parameter_active(ParamGroup group, const ModelConfig& c) {
  switch (group) {
    case ParamGroup::local_gcn:
    case ParamGroup::location_fc: return !c.disable_local;
    case ParamGroup::time_embed:
    case ParamGroup::state_embed: return !c.disable_local && !c.disable_time_state;
    case ParamGroup::attention: return !c.disable_local && !c.disable_self_attention;
    case ParamGroup::global_gcn: return !c.disable_global;
    case ParamGroup::linking: return true;
  }
  return true;
}

std::size_t active_parameter_count(const ModelParams& params, const ModelConfig& c) {
  std::size_t n = 0;
  for (const auto& p : params.all())
    if (parameter_active(p.group, c)) n += p.tensor.size();
  return n;
}

std::size_t expected_parameter_count(const ModelConfig& c, std::size_t n_grids,
                                     std::size_t n_users) {
  const std::size_t d = c.d;
  const std::size_t gcn = n_grids * d + (c.gcn_layers - 1) * d * d;
  const std::size_t embed = (c.time_vocab + 1) * d + (c.state_vocab + 1) * d;
  const std::size_t fc = 3 * d * d + d;
  const std::size_t attn_layer = 3 * d * d + d * d + d + 2 * d;
  const std::size_t link = n_users * 2 * d + n_users;

  std::size_t n = link;
  if (!c.disable_global) n += gcn;
  if (!c.disable_local) {
    n += gcn + fc;
    if (!c.disable_time_state) n += embed;
    if (!c.disable_self_attention) n += c.attn_layers * attn_layer;
  }
  return n;
}

// ---- inputs ----------------------------------------------------------------

ModelGraphs ModelGraphs::prepare(const LocalSpatialGraph& local, const GlobalSpatialGraph& global,
                                 bool binarize) {
  ModelGraphs g;
  g.n_grids = local.n_grids;
  g.trajectory_count = global.trajectory_count;
  g.user_count = global.user_count;
  if (global.features.cols() != local.n_grids)
    throw DataError("global graph features cover " + std::to_string(global.features.cols()) +
                    " grids, local graph has " + std::to_string(local.n_grids));
  g.local_adjacency =
      std::make_shared<ad::FixedSparse>(symmetric_normalize(local.adjacency, binarize));
  g.global_adjacency =
      std::make_shared<ad::FixedSparse>(symmetric_normalize(global.adjacency, binarize));
  g.global_features = std::make_shared<ad::FixedSparse>(global.features);
  return g;
}

TrajectoryInput make_trajectory_input(const GridSequence& seq, std::size_t node) {
  TrajectoryInput t;
  t.node = node;
  for (const auto& e : seq.entries) {
    t.grids.push_back(static_cast<std::size_t>(e.grid));
    t.states.push_back(static_cast<std::size_t>(e.motion_state));
    t.windows.push_back(static_cast<std::size_t>(e.time_window));
  }
  return t;
}

// ---- components ------------------------------------------------------------

Tensor gcn_forward(const std::shared_ptr<const ad::FixedSparse>& normalized,
                   const std::shared_ptr<const ad::FixedSparse>& features,
                   std::span<const Tensor> weights) {
  if (weights.empty()) throw ShapeError("gcn_forward: no layers");
  const std::size_t n = normalized->matrix.rows();
  Tensor h;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Tensor hw;
    if (i == 0) {
      const std::size_t feat_cols = features ? features->matrix.cols() : n;
      if (weights[0].rows() != feat_cols || (features && features->matrix.rows() != n))
        throw ShapeError("gcn_forward: first weight " + ad::to_string(weights[0].shape()) +
                         " does not match " + std::to_string(feat_cols) + " feature columns");
      hw = features ? ad::sparse_matmul(features, weights[0]) : weights[0];
    } else {
      hw = ad::matmul(h, weights[i]);
    }
    h = ad::relu(ad::sparse_matmul(normalized, hw));
  }
  return h;
}

std::vector<double> positional_encoding(std::size_t max_len, std::size_t d) {
  std::vector<double> p(max_len * d);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t j = 0; j < d; ++j) {
      const double i2 = static_cast<double>(j - j % 2);
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, i2 / static_cast<double>(d));
      p[pos * d + j] = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return p;
}

Tensor semantic_location_encode(const ModelConfig& c, const ModelParams& params,
                                const Tensor& grid_embeddings, const TrajectoryInput& traj) {
  const std::size_t m = traj.grids.size();
  if (m == 0 || traj.states.size() != m || traj.windows.size() != m)
    throw ShapeError("semantic_location_encode: inconsistent trajectory input");
  for (std::size_t i = 0; i < m; ++i) {
    if (traj.grids[i] >= grid_embeddings.rows())
      throw std::out_of_range("grid index " + std::to_string(traj.grids[i]) + " outside " +
                              std::to_string(grid_embeddings.rows()) + " grids");
    if (traj.states[i] >= c.state_vocab)
      throw std::out_of_range("motion state " + std::to_string(traj.states[i]) +
                              " outside vocabulary");
    if (traj.windows[i] >= c.time_vocab)
      throw std::out_of_range("time window " + std::to_string(traj.windows[i]) +
                              " outside vocabulary of " + std::to_string(c.time_vocab));
  }

  Tensor parts[3];
  if (c.disable_time_state) {
    parts[0] = Tensor::zeros({m, c.d});
    parts[1] = Tensor::zeros({m, c.d});
  } else {
    parts[0] = ad::add_row_vector(ad::gather_rows(params.get("time.weight"), traj.windows),
                                  params.get("time.bias"));
    parts[1] = ad::add_row_vector(ad::gather_rows(params.get("state.weight"), traj.states),
                                  params.get("state.bias"));
  }
  parts[2] = ad::gather_rows(grid_embeddings, traj.grids);
  Tensor joined = ad::concat_cols(parts);
  return ad::tanh(ad::add_row_vector(ad::matmul(joined, params.get("location_fc.weight")),
                                     params.get("location_fc.bias")));
}

Tensor temporal_self_attention(const ModelConfig& c, const ModelParams& params, const Tensor& x,
                               const ForwardOptions& opts, std::vector<Tensor>* attention) {
  const std::size_t m = x.rows();
  if (m == 0) throw ShapeError("temporal_self_attention: empty trajectory");
  if (c.disable_self_attention) return x;

  const std::size_t d = c.d, dh = c.head_dim();
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(c.scale_full_d ? d : dh));
  Tensor h = ad::add(x, Tensor::matrix(m, d, positional_encoding(m, d)));

  for (std::size_t l = 0; l < c.attn_layers; ++l) {
    std::vector<Tensor> heads;
    heads.reserve(c.heads);
    for (std::size_t k = 0; k < c.heads; ++k) {
      Tensor q = ad::matmul(h, params.get(head_name(l, k, "query")));
      Tensor key = ad::matmul(h, params.get(head_name(l, k, "key")));
      Tensor v = ad::matmul(h, params.get(head_name(l, k, "value")));
      Tensor weights = ad::softmax(ad::scale(ad::matmul(q, ad::transpose(key)), inv_scale));
      if (attention) attention->push_back(weights);
      heads.push_back(ad::matmul(weights, v));
    }
    Tensor mixed = ad::add_row_vector(
        ad::matmul(ad::concat_cols(heads), params.get(layer_name("attn", l, "out.weight"))),
        params.get(layer_name("attn", l, "out.bias")));
    if (opts.training && c.dropout_rate > 0.0)
      mixed = ad::dropout(mixed, c.dropout_rate, true, *opts.rng);
    h = ad::layer_norm(ad::add(h, mixed), params.get(layer_name("attn", l, "norm.gain")),
                       params.get(layer_name("attn", l, "norm.bias")));
  }
  return h;
}

Tensor local_representation(const ModelConfig& c, const Tensor& z) {
  if (c.disable_local) return Tensor::zeros({c.d});
  return ad::max_pool_rows(z);
}

Tensor global_elastic_attention(const ModelConfig& c, const Tensor& trajectory_embeddings,
                                std::span<const std::size_t> query_rows, Tensor* weights_out) {
  if (c.disable_global) return Tensor::zeros({query_rows.size(), c.d});
  Tensor queries = ad::gather_rows(trajectory_embeddings, query_rows);
  Tensor scores = ad::cosine_scores(queries, trajectory_embeddings);
  Tensor weights = c.use_softmax_global ? ad::softmax(scores) : ad::sparsemax(scores);
  if (weights_out) *weights_out = weights;
  return ad::matmul(weights, trajectory_embeddings);
}

Tensor linking_forward(const ModelParams& params, const Tensor& local_repr,
                       const Tensor& global_repr) {
  if (local_repr.rows() != global_repr.rows() || local_repr.cols() != global_repr.cols())
    throw ShapeError("linking_forward: representations " + ad::to_string(local_repr.shape()) +
                     " and " + ad::to_string(global_repr.shape()) + " differ");
  const Tensor& w = params.get("link.weight");
  if (w.cols() != 2 * local_repr.cols())
    throw ShapeError("linking_forward: weight " + ad::to_string(w.shape()) +
                     " expects inputs of width " + std::to_string(w.cols() / 2));
  Tensor parts[2] = {local_repr, global_repr};
  Tensor joined = ad::concat_cols(parts);
  if (joined.rank() == 1) joined = ad::stack_rows(std::span<const Tensor>(&joined, 1));
  return ad::add_row_vector(ad::matmul(joined, ad::transpose(w)), params.get("link.bias"));
}

Tensor model_loss(const ModelConfig& c, const ModelParams& params, const Tensor& logits,
                  std::span<const std::size_t> targets) {
  Tensor ce = ad::cross_entropy(logits, targets);
  if (c.lambda_l2 == 0.0) return ce;
  std::vector<Tensor> squares;
  for (const auto& p : params.all())
    if (p.l2 && parameter_active(p.group, c)) squares.push_back(ad::sum_squares(p.tensor));
  Tensor penalty = ad::scale(ad::sum_scalars(squares), 0.5 * c.lambda_l2);
  Tensor terms[2] = {ce, penalty};
  return ad::sum_scalars(terms);
}

ForwardResult forward_full(const ModelConfig& c, const ModelParams& params,
                           const ModelGraphs& graphs, std::span<const TrajectoryInput> trajectories,
                           std::span<const std::size_t> batch, const ForwardOptions& opts,
                           AttentionTrace* trace) {
  if (batch.empty()) throw ShapeError("forward_full: empty batch");
  if (opts.training && c.dropout_rate > 0.0 && opts.rng == nullptr)
    throw std::invalid_argument("forward_full: training with dropout needs an rng");
  for (auto b : batch)
    if (b >= trajectories.size())
      throw std::out_of_range("forward_full: batch index " + std::to_string(b) + " outside " +
                              std::to_string(trajectories.size()) + " trajectories");

  ForwardResult result;
  const std::size_t n = batch.size();

  if (c.disable_local) {
    result.local_repr = Tensor::zeros({n, c.d});
  } else {
    Tensor grid_embeddings =
        gcn_forward(graphs.local_adjacency, nullptr, gcn_weights(params, "local_gcn", c.gcn_layers));

    auto encode_one = [&](std::size_t i, std::vector<Tensor>* attn) {
      const auto& traj = trajectories[batch[i]];
      Tensor x = semantic_location_encode(c, params, grid_embeddings, traj);
      if (opts.training && c.dropout_rate > 0.0) x = ad::dropout(x, c.dropout_rate, true, *opts.rng);
      return local_representation(c, temporal_self_attention(c, params, x, opts, attn));
    };

    std::vector<Tensor> rows(n);
    const bool concurrent = !opts.training && trace == nullptr && ad::Tape::active() == nullptr;
    if (concurrent) {
      // no tape and no rng: each trajectory is an independent pure computation
      const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 4)
      for (std::ptrdiff_t i = 0; i < count; ++i)
        rows[static_cast<std::size_t>(i)] = encode_one(static_cast<std::size_t>(i), nullptr);
    } else {
      for (std::size_t i = 0; i < n; ++i)
        rows[i] = encode_one(i, trace ? &trace->temporal : nullptr);
    }
    result.local_repr = ad::stack_rows(rows);
  }

  if (c.disable_global) {
    result.global_repr = Tensor::zeros({n, c.d});
  } else {
    Tensor node_embeddings = gcn_forward(graphs.global_adjacency, graphs.global_features,
                                         gcn_weights(params, "global_gcn", c.gcn_layers));
    Tensor traj_embeddings = ad::slice_rows(node_embeddings, 0, graphs.trajectory_count);
    std::vector<std::size_t> rows;
    rows.reserve(n);
    for (auto b : batch) {
      if (trajectories[b].node >= graphs.trajectory_count)
        throw std::out_of_range("trajectory node outside the global graph");
      rows.push_back(trajectories[b].node);
    }
    result.global_repr = global_elastic_attention(c, traj_embeddings, rows,
                                                  trace ? &trace->global_weights : nullptr);
  }

  result.logits = linking_forward(params, result.local_repr, result.global_repr);
  return result;
}

}  // namespace attntul
