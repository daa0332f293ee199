#include "attntul/trainer.hpp"

#include "attntul/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace attntul {

using ad::Tensor;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be positive");
  if (epochs_max == 0) throw ConfigError("epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  // FNV-1a over the stream name, folded into the seed, then splitmix64
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : stream) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void adam_update(std::span<double> value, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::size_t step, const TrainConfig& c) {
  if (grad.size() != value.size() || m.size() != value.size() || v.size() != value.size())
    throw ShapeError("adam_update: value, grad and moment sizes differ");
  if (step == 0) throw std::invalid_argument("adam_update: step is 1-based");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    value[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

void adam_step(ModelParams& params, OptimizerState& state, const TrainConfig& c,
               const ModelConfig& model) {
  auto& all = params.all();
  if (state.m.empty()) {
    for (const auto& p : all) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != all.size()) throw ShapeError("adam_step: optimizer state does not match parameters");

  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& p = all[i];
    if (state.m[i].size() != p.tensor.size()) throw ShapeError("adam_step: moment shape mismatch for " + p.name);
    if (!parameter_active(p.group, model)) continue;
    auto g = p.tensor.grad();
    if (g.size() != p.tensor.size()) continue;  // never reached by backward
    for (std::size_t j = 0; j < g.size(); ++j)
      if (!std::isfinite(g[j]))
        throw NumericalError("non-finite gradient in " + p.name + " at entry " + std::to_string(j) +
                             " (step " + std::to_string(state.step + 1) + ")");
  }

  ++state.step;
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& p = all[i];
    if (!parameter_active(p.group, model)) continue;
    auto g = p.tensor.grad();
    if (g.size() != p.tensor.size()) continue;
    adam_update(p.tensor.mutable_values(), g, state.m[i], state.v[i], state.step, c);
  }
}

namespace {

void check_data(const TrainingData& d) {
  if (!d.graphs || !d.split) throw std::invalid_argument("training data lacks graphs or split");
  if (d.inputs.size() != d.users.size())
    throw ShapeError("training data: " + std::to_string(d.inputs.size()) + " inputs but " +
                     std::to_string(d.users.size()) + " labels");
}

std::vector<std::size_t> targets_for(const TrainingData& d, std::span<const std::size_t> idx) {
  std::vector<std::size_t> t;
  t.reserve(idx.size());
  for (auto i : idx) t.push_back(d.users[i]);
  return t;
}

// Mean cross-entropy plus L2 over `indices`, evaluation mode.
double evaluation_loss(const ModelConfig& model, const ModelParams& params, const TrainingData& d,
                       std::span<const std::size_t> indices) {
  ForwardOptions opts;
  auto r = forward_full(model, params, *d.graphs, d.inputs, indices, opts);
  auto targets = targets_for(d, indices);
  return model_loss(model, params, r.logits, targets).item();
}

}  // namespace

TrainResult train(const ModelConfig& model, const TrainConfig& c, const TrainingData& data,
                  ModelParams params, const EpochCallback& on_epoch) {
  model.validate();
  c.validate();
  check_data(data);
  const auto& split = *data.split;
  if (split.train.empty()) throw DataError("train split is empty");
  if (split.validation.empty()) throw DataError("validation split is empty");

  std::mt19937_64 shuffle_rng(derive_seed(c.seed, "shuffle"));
  std::mt19937_64 dropout_rng(derive_seed(c.seed, "dropout"));

  for (auto& p : params.all()) p.tensor.set_requires_grad(true);

  TrainResult result;
  OptimizerState state;
  std::vector<std::size_t> order(split.train.begin(), split.train.end());
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= c.epochs_max; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += c.batch_size) {
      std::span<const std::size_t> batch(order.data() + b, std::min(c.batch_size, order.size() - b));
      for (auto& p : params.all()) p.tensor.zero_grad();

      ad::Tape tape;
      double loss_value = 0.0;
      {
        ad::TapeScope scope(tape);
        ForwardOptions opts{true, &dropout_rng};
        auto r = forward_full(model, params, *data.graphs, data.inputs, batch, opts);
        auto targets = targets_for(data, batch);
        Tensor loss = model_loss(model, params, r.logits, targets);
        loss_value = loss.item();
        if (!std::isfinite(loss_value))
          throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batches + 1));
        tape.backward(loss);
      }
      adam_step(params, state, c, model);
      loss_sum += loss_value;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val_acc1 = acc_at_k(predict(model, params, data, split.validation), 1);
    rec.val_loss = evaluation_loss(model, params, data, split.validation);
    if (c.record_time)
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double score = c.stop_metric == StopMetric::val_acc1 ? rec.val_acc1 : -rec.val_loss;
    if (score > best) {
      best = score;
      since_best = 0;
      result.best = params.clone();
      result.best_epoch = epoch;
    } else if (++since_best >= c.patience) {
      result.stopped_early = true;
      break;
    }
  }
  for (auto& p : result.best.all()) p.tensor.set_requires_grad(false);
  return result;
}

void write_history(std::ostream& out, std::span<const EpochRecord> history) {
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.3f\n", r.epoch, r.train_loss, r.val_acc1,
                  r.seconds);
    out << buf;
  }
}

std::vector<double> predict_logits(const ModelConfig& model, const ModelParams& params,
                                   const TrainingData& data, std::span<const std::size_t> indices) {
  check_data(data);
  if (indices.empty()) return {};
  ForwardOptions opts;
  auto r = forward_full(model, params, *data.graphs, data.inputs, indices, opts);
  auto v = r.logits.values();
  return {v.begin(), v.end()};
}

PredictionSet predict(const ModelConfig& model, const ModelParams& params, const TrainingData& data,
                      std::span<const std::size_t> indices) {
  auto logits = predict_logits(model, params, data, indices);
  auto truths = targets_for(data, indices);
  return rank_predictions(logits, data.graphs->user_count, truths);
}

MetricsReport evaluate_on_split(const ModelConfig& model, const ModelParams& params,
                                const TrainingData& data, std::span<const std::size_t> indices) {
  return evaluate_predictions(predict(model, params, data, indices));
}

std::vector<EmbeddingRow> export_embeddings(const ModelConfig& model, const ModelParams& params,
                                            const TrainingData& data,
                                            std::span<const std::string> ids) {
  check_data(data);
  if (ids.size() != data.inputs.size())
    throw ShapeError("export_embeddings: one id per trajectory required");
  std::vector<std::size_t> all(data.inputs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<EmbeddingRow> rows;
  if (all.empty()) return rows;

  ForwardOptions opts;
  auto r = forward_full(model, params, *data.graphs, data.inputs, all, opts);
  const std::size_t d = model.d;
  rows.reserve(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    EmbeddingRow row{ids[i], data.users[i], std::vector<double>(2 * d)};
    auto zl = r.local_repr.values().subspan(i * d, d);
    auto zg = r.global_repr.values().subspan(i * d, d);
    std::copy(zl.begin(), zl.end(), row.vector.begin());
    std::copy(zg.begin(), zg.end(), row.vector.begin() + static_cast<std::ptrdiff_t>(d));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_embeddings(std::ostream& out, std::span<const EmbeddingRow> rows,
                      std::span<const std::string> user_names) {
  char buf[32];
  for (const auto& r : rows) {
    out << r.id << '\t' << (r.user < user_names.size() ? user_names[r.user] : std::to_string(r.user));
    for (double v : r.vector) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

}  // namespace attntul
