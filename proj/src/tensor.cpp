#include "attntul/tensor.hpp"

#include "attntul/error.hpp"
#include "attntul/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace attntul::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// Active tape when any of the inputs is tracked, otherwise nullptr.
Tape* tracking(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return tape;
  return nullptr;
}

Tape* tracking(std::span<const Tensor> inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor& t : inputs)
    if (t.requires_grad()) return tape;
  return nullptr;
}

Tensor output(Shape shape, Tape* tape) {
  Tensor out = Tensor::zeros(std::move(shape));
  if (tape != nullptr) out.set_requires_grad(true);
  return out;
}

using NodePtr = std::shared_ptr<Node>;

// Accumulator for an input's gradient, or nullptr if the input is untracked.
double* grad_of(const NodePtr& n) {
  if (!n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<Node>()) { node_->value.assign(1, 0.0); }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  require(shape.size() <= 2, "tensor rank must be at most 2, got " + to_string(shape));
  require(values.size() == product(shape),
          "tensor " + to_string(shape) + " needs " + std::to_string(product(shape)) +
              " values, got " + std::to_string(values.size()));
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor({}, {v}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

double Tensor::item() const {
  require(size() == 1, "item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

// ---- Tape ------------------------------------------------------------------

void Tape::record(std::vector<NodePtr> inputs, NodePtr output, Backward backward) {
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

std::size_t Tape::backward(const Tensor& root) {
  require(root.size() == 1, "backward() needs a scalar root, got " + to_string(root.shape()));
  require(root.requires_grad(), "backward() root is not tracked");
  root.node()->ensure_grad();
  root.node()->grad[0] = 1.0;
  std::size_t replayed = 0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->backward();
    ++replayed;
  }
  return replayed;
}

bool Tape::used(const Tensor& t) const {
  for (const auto& e : entries_)
    for (const auto& in : e.inputs)
      if (in == t.node()) return true;
  return false;
}

Tape* Tape::active() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) noexcept : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
          "matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tape* tape = tracking({&a, &b});
  Tensor out = output({m, n}, tape);
  kernels::gemm({false, false, m, n, k, false}, a.values(), b.values(), out.mutable_values());
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    tape->record({an, bn}, on, [an, bn, on, m, n, k] {
      if (double* ga = grad_of(an))
        kernels::gemm({false, true, m, k, n, true}, on->grad, bn->value,
                      std::span<double>(ga, m * k));
      if (double* gb = grad_of(bn))
        kernels::gemm({true, false, k, n, m, true}, an->value, on->grad,
                      std::span<double>(gb, k * n));
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: needs rank 2, got " + to_string(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  Tape* tape = tracking({&a});
  Tensor out = output({n, m}, tape);
  auto y = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
  if (tape) {
    NodePtr an = a.node(), on = out.node();
    tape->record({an}, on, [an, on, m, n] {
      double* ga = grad_of(an);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += on->grad[j * m + i];
    });
  }
  return out;
}

Tensor sparse_matmul(const std::shared_ptr<const FixedSparse>& s, const Tensor& b) {
  require(b.rank() == 2 && s->matrix.cols() == b.rows(),
          "sparse_matmul: cannot multiply [" + std::to_string(s->matrix.rows()) + "x" +
              std::to_string(s->matrix.cols()) + "] by " + to_string(b.shape()));
  const std::size_t m = s->matrix.rows(), n = b.cols();
  Tape* tape = tracking({&b});
  Tensor out = output({m, n}, tape);
  kernels::spmm(s->matrix, b.values(), n, out.mutable_values(), false);
  if (tape) {
    NodePtr bn = b.node(), on = out.node();
    tape->record({bn}, on, [s, bn, on, n] {
      double* gb = grad_of(bn);
      kernels::spmm(s->transposed, on->grad, n, std::span<double>(gb, bn->value.size()), true);
    });
  }
  return out;
}

// ---- element-wise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "add: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  Tape* tape = tracking({&a, &b});
  Tensor out = output(a.shape(), tape);
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    tape->record({an, bn}, on, [an, bn, on] {
      if (double* ga = grad_of(an))
        for (std::size_t i = 0; i < on->grad.size(); ++i) ga[i] += on->grad[i];
      if (double* gb = grad_of(bn))
        for (std::size_t i = 0; i < on->grad.size(); ++i) gb[i] += on->grad[i];
    });
  }
  return out;
}

Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
  const std::size_t m = a.rows(), n = a.cols();
  require(bias.size() == n, "add_row_vector: bias " + to_string(bias.shape()) +
                                " does not match " + to_string(a.shape()));
  Tape* tape = tracking({&a, &bias});
  Tensor out = output(a.shape(), tape);
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = a.values()[i * n + j] + bias.values()[j];
  if (tape) {
    NodePtr an = a.node(), bn = bias.node(), on = out.node();
    tape->record({an, bn}, on, [an, bn, on, m, n] {
      if (double* ga = grad_of(an))
        for (std::size_t i = 0; i < m * n; ++i) ga[i] += on->grad[i];
      if (double* gb = grad_of(bn))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += on->grad[i * n + j];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "mul: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  Tape* tape = tracking({&a, &b});
  Tensor out = output(a.shape(), tape);
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    tape->record({an, bn}, on, [an, bn, on] {
      if (double* ga = grad_of(an))
        for (std::size_t i = 0; i < on->grad.size(); ++i) ga[i] += on->grad[i] * bn->value[i];
      if (double* gb = grad_of(bn))
        for (std::size_t i = 0; i < on->grad.size(); ++i) gb[i] += on->grad[i] * an->value[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tape* tape = tracking({&a});
  Tensor out = output(a.shape(), tape);
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * s;
  if (tape) {
    NodePtr an = a.node(), on = out.node();
    tape->record({an}, on, [an, on, s] {
      double* ga = grad_of(an);
      for (std::size_t i = 0; i < on->grad.size(); ++i) ga[i] += on->grad[i] * s;
    });
  }
  return out;
}

Tensor activation(const Tensor& x, Activation kind) {
  Tape* tape = tracking({&x});
  Tensor out = output(x.shape(), tape);
  auto y = out.mutable_values();
  auto v = x.values();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = v[i] > 0.0 ? v[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(v[i]);
  }
  if (tape) {
    NodePtr xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, kind] {
      double* gx = grad_of(xn);
      if (kind == Activation::relu) {
        // subgradient 0 at exactly 0
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          if (xn->value[i] > 0.0) gx[i] += on->grad[i];
      } else {
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          gx[i] += on->grad[i] * (1.0 - on->value[i] * on->value[i]);
      }
    });
  }
  return out;
}

// ---- normalisers -----------------------------------------------------------

Tensor softmax(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  Tape* tape = tracking({&x});
  Tensor out = output(x.shape(), tape);
  auto y = out.mutable_values();
  auto v = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = v.data() + i * n;
    double* p = y.data() + i * n;
    double mx = *std::max_element(row, row + n);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += (p[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) p[j] /= sum;
  }
  if (tape) {
    NodePtr xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, m, n] {
      double* gx = grad_of(xn);
      for (std::size_t i = 0; i < m; ++i) {
        const double* p = on->value.data() + i * n;
        const double* g = on->grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * p[j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += p[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

void sparsemax_project(std::span<const double> z, std::span<double> p) {
  const std::size_t n = z.size();
  if (p.size() != n) throw ShapeError("sparsemax: output size mismatch");
  if (n == 0) return;
  for (double v : z)
    if (!std::isfinite(v)) throw std::domain_error("sparsemax: non-finite input");

  std::vector<double> sorted(z.begin(), z.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumsum = 0.0, support_sum = 0.0;
  std::size_t support = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    cumsum += sorted[k - 1];
    if (1.0 + static_cast<double>(k) * sorted[k - 1] > cumsum) {
      support = k;
      support_sum = cumsum;
    }
  }
  const double tau = (support_sum - 1.0) / static_cast<double>(support);
  for (std::size_t i = 0; i < n; ++i) p[i] = std::max(z[i] - tau, 0.0);
}

void sparsemax_backward(std::span<const double> p, std::span<const double> g,
                        std::span<double> grad_in) {
  double sum = 0.0;
  std::size_t support = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      sum += g[i];
      ++support;
    }
  }
  const double mean = support ? sum / static_cast<double>(support) : 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) grad_in[i] = p[i] > 0.0 ? g[i] - mean : 0.0;
}

Tensor sparsemax(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  Tape* tape = tracking({&x});
  Tensor out = output(x.shape(), tape);
  for (std::size_t i = 0; i < m; ++i)
    sparsemax_project(x.values().subspan(i * n, n), out.mutable_values().subspan(i * n, n));
  if (tape) {
    NodePtr xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, m, n] {
      double* gx = grad_of(xn);
      std::vector<double> local(n);
      for (std::size_t i = 0; i < m; ++i) {
        sparsemax_backward(std::span<const double>(on->value).subspan(i * n, n),
                           std::span<const double>(on->grad).subspan(i * n, n), local);
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += local[j];
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  require(gain.size() == n && bias.size() == n,
          "layer_norm: gain/bias must have " + std::to_string(n) + " entries");
  Tape* tape = tracking({&x, &gain, &bias});
  Tensor out = output(x.shape(), tape);
  std::vector<double> xhat(m * n), inv_std(m);
  auto v = x.values();
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = v.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mean) * inv_std[i];
      y[i * n + j] = xhat[i * n + j] * gain.values()[j] + bias.values()[j];
    }
  }
  if (tape) {
    NodePtr xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    tape->record({xn, gn, bn}, on,
                 [xn, gn, bn, on, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
                   double* gx = grad_of(xn);
                   double* gg = grad_of(gn);
                   double* gb = grad_of(bn);
                   std::vector<double> dxhat(n);
                   for (std::size_t i = 0; i < m; ++i) {
                     const double* g = on->grad.data() + i * n;
                     const double* xh = xhat.data() + i * n;
                     double m1 = 0.0, m2 = 0.0;
                     for (std::size_t j = 0; j < n; ++j) {
                       dxhat[j] = g[j] * gn->value[j];
                       m1 += dxhat[j];
                       m2 += dxhat[j] * xh[j];
                       if (gg) gg[j] += g[j] * xh[j];
                       if (gb) gb[j] += g[j];
                     }
                     m1 /= static_cast<double>(n);
                     m2 /= static_cast<double>(n);
                     if (gx)
                       for (std::size_t j = 0; j < n; ++j)
                         gx[i * n + j] += inv_std[i] * (dxhat[j] - m1 - xh[j] * m2);
                   }
                 });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  Tape* tape = tracking({&x});
  Tensor out = output(x.shape(), tape);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    // 53 random bits -> uniform in [0, 1)
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u < rate ? 0.0 : keep_scale;
    y[i] = x.values()[i] * mask[i];
  }
  if (tape) {
    NodePtr xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, mask = std::move(mask)] {
      double* gx = grad_of(xn);
      for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += on->grad[i] * mask[i];
    });
  }
  return out;
}

Tensor max_pool_rows(const Tensor& z) {
  const std::size_t m = z.rank() == 2 ? z.rows() : (z.size() ? 1 : 0), d = z.cols();
  require(m >= 1 && z.size() > 0, "max_pool_rows: needs at least one row");
  Tape* tape = tracking({&z});
  Tensor out = output({d}, tape);
  std::vector<std::size_t> argmax(d, 0);
  auto v = z.values();
  auto y = out.mutable_values();
  for (std::size_t j = 0; j < d; ++j) {
    double best = v[j];
    for (std::size_t i = 1; i < m; ++i) {
      if (v[i * d + j] > best) {
        best = v[i * d + j];
        argmax[j] = i;
      }
    }
    y[j] = best;
  }
  if (tape) {
    NodePtr zn = z.node(), on = out.node();
    tape->record({zn}, on, [zn, on, d, argmax = std::move(argmax)] {
      double* gz = grad_of(zn);
      for (std::size_t j = 0; j < d; ++j) gz[argmax[j] * d + j] += on->grad[j];
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  const std::size_t b = logits.rows(), c = logits.cols();
  require(targets.size() == b, "cross_entropy: " + std::to_string(targets.size()) +
                                   " targets for " + std::to_string(b) + " rows");
  require(b > 0, "cross_entropy: empty batch");
  for (auto t : targets)
    if (t >= c)
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside " +
                              std::to_string(c) + " classes");
  Tape* tape = tracking({&logits});
  Tensor out = output({}, tape);
  std::vector<double> probs(b * c);
  double total = 0.0;
  auto v = logits.values();
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = v.data() + i * c;
    double mx = *std::max_element(row, row + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    double lse = mx + std::log(sum);
    total += lse - row[targets[i]];
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
  }
  out.mutable_values()[0] = total / static_cast<double>(b);
  if (tape) {
    NodePtr ln = logits.node(), on = out.node();
    std::vector<std::size_t> tg(targets.begin(), targets.end());
    tape->record({ln}, on, [ln, on, b, c, probs = std::move(probs), tg = std::move(tg)] {
      double* gl = grad_of(ln);
      const double s = on->grad[0] / static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j)
          gl[i * c + j] += s * (probs[i * c + j] - (j == tg[i] ? 1.0 : 0.0));
    });
  }
  return out;
}

// ---- structural ------------------------------------------------------------

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  bool all_vectors = true;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rows() == m, "concat_cols: row counts differ (" + to_string(parts.front().shape()) +
                               " vs " + to_string(p.shape()) + ")");
    all_vectors = all_vectors && p.rank() == 1;
    total += p.cols();
  }
  Tape* tape = tracking(parts);
  Tensor out = output(all_vectors ? Shape{total} : Shape{m, total}, tape);
  auto y = out.mutable_values();
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(p.values().data() + i * w, w, y.data() + i * total + off);
    off += w;
  }
  if (tape) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    NodePtr on = out.node();
    tape->record(nodes, on, [nodes, on, m, total, offsets = std::move(offsets)] {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        double* g = grad_of(nodes[k]);
        if (!g) continue;
        const std::size_t w = nodes[k]->shape.empty() ? 1 : nodes[k]->shape.back();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += on->grad[i * total + offsets[k] + j];
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= x.cols(), "slice_cols: range outside " + to_string(x.shape()));
  const std::size_t m = x.rows(), n = x.cols(), w = end - begin;
  Tape* tape = tracking({&x});
  Tensor out = output(x.rank() == 2 ? Shape{m, w} : Shape{w}, tape);
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.values().data() + i * n + begin, w, y.data() + i * w);
  if (tape) {
    NodePtr xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, m, n, w, begin] {
      double* g = grad_of(xn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += on->grad[i * w + j];
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require(x.rank() == 2 && begin <= end && end <= x.rows(),
          "slice_rows: range outside " + to_string(x.shape()));
  const std::size_t n = x.cols();
  Tape* tape = tracking({&x});
  Tensor out = output({end - begin, n}, tape);
  std::copy_n(x.values().data() + begin * n, (end - begin) * n, out.mutable_values().data());
  if (tape) {
    NodePtr xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, begin, n] {
      double* g = grad_of(xn);
      for (std::size_t i = 0; i < on->grad.size(); ++i) g[begin * n + i] += on->grad[i];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require(x.rank() == 2, "gather_rows: needs rank 2, got " + to_string(x.shape()));
  const std::size_t n = x.cols();
  for (auto r : rows)
    if (r >= x.rows())
      throw std::out_of_range("gather_rows: row " + std::to_string(r) + " outside " +
                              to_string(x.shape()));
  Tape* tape = tracking({&x});
  Tensor out = output({rows.size(), n}, tape);
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.values().data() + rows[i] * n, n, y.data() + i * n);
  if (tape) {
    NodePtr xn = x.node(), on = out.node();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    tape->record({xn}, on, [xn, on, n, idx = std::move(idx)] {
      double* g = grad_of(xn);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) g[idx[i] * n + j] += on->grad[i * n + j];
    });
  }
  return out;
}

Tensor stack_rows(std::span<const Tensor> rows) {
  require(!rows.empty(), "stack_rows: no inputs");
  const std::size_t n = rows.front().size();
  for (const auto& r : rows)
    require(r.size() == n, "stack_rows: row sizes differ");
  Tape* tape = tracking(rows);
  Tensor out = output({rows.size(), n}, tape);
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(rows[i].values().data(), n, y.data() + i * n);
  if (tape) {
    std::vector<NodePtr> nodes;
    for (const auto& r : rows) nodes.push_back(r.node());
    NodePtr on = out.node();
    tape->record(nodes, on, [nodes, on, n] {
      for (std::size_t i = 0; i < nodes.size(); ++i)
        if (double* g = grad_of(nodes[i]))
          for (std::size_t j = 0; j < n; ++j) g[j] += on->grad[i * n + j];
    });
  }
  return out;
}

Tensor sum_squares(const Tensor& x) {
  Tape* tape = tracking({&x});
  Tensor out = output({}, tape);
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  out.mutable_values()[0] = s;
  if (tape) {
    NodePtr xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on] {
      double* g = grad_of(xn);
      for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += 2.0 * xn->value[i] * on->grad[0];
    });
  }
  return out;
}

Tensor sum_scalars(std::span<const Tensor> scalars) {
  for (const auto& s : scalars) require(s.size() == 1, "sum_scalars: non-scalar input");
  Tape* tape = tracking(scalars);
  Tensor out = output({}, tape);
  double total = 0.0;
  for (const auto& s : scalars) total += s.values()[0];
  out.mutable_values()[0] = total;
  if (tape) {
    std::vector<NodePtr> nodes;
    for (const auto& s : scalars) nodes.push_back(s.node());
    NodePtr on = out.node();
    tape->record(nodes, on, [nodes, on] {
      for (const auto& n : nodes)
        if (double* g = grad_of(n)) g[0] += on->grad[0];
    });
  }
  return out;
}

Tensor cosine_scores(const Tensor& queries, const Tensor& keys, double eps) {
  require(queries.cols() == keys.cols(), "cosine_scores: widths of " +
                                             to_string(queries.shape()) + " and " +
                                             to_string(keys.shape()) + " differ");
  const std::size_t b = queries.rows(), n = keys.rows(), d = keys.cols();
  Tape* tape = tracking({&queries, &keys});
  Tensor out = output({b, n}, tape);
  auto q = queries.values();
  auto k = keys.values();
  std::vector<double> qn(b), kn(n), dots(b * n);
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < d; ++p) s += q[i * d + p] * q[i * d + p];
    qn[i] = std::sqrt(s);
  }
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t p = 0; p < d; ++p) s += k[j * d + p] * k[j * d + p];
    kn[j] = std::sqrt(s);
  }
  kernels::gemm({false, true, b, n, d, false}, q, k, dots);
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = dots[i * n + j] / (qn[i] * kn[j] + eps);
  if (tape) {
    NodePtr qnode = queries.node(), knode = keys.node(), on = out.node();
    tape->record({qnode, knode}, on,
                 [qnode, knode, on, b, n, d, eps, qn = std::move(qn), kn = std::move(kn),
                  dots = std::move(dots)] {
                   double* gq = grad_of(qnode);
                   double* gk = grad_of(knode);
                   const auto& q = qnode->value;
                   const auto& k = knode->value;
                   for (std::size_t i = 0; i < b; ++i) {
                     for (std::size_t j = 0; j < n; ++j) {
                       const double g = on->grad[i * n + j];
                       if (g == 0.0) continue;
                       const double den = qn[i] * kn[j] + eps;
                       const double c = g / den;
                       const double r = g * dots[i * n + j] / (den * den);
                       // d|q|/dq = q/|q|, taken as 0 at the origin
                       const double rq = qn[i] > 0.0 ? r * kn[j] / qn[i] : 0.0;
                       const double rk = kn[j] > 0.0 ? r * qn[i] / kn[j] : 0.0;
                       for (std::size_t p = 0; p < d; ++p) {
                         if (gq) gq[i * d + p] += c * k[j * d + p] - rq * q[i * d + p];
                         if (gk) gk[j * d + p] += c * q[i * d + p] - rk * k[j * d + p];
                       }
                     }
                   }
                 });
  }
  return out;
}

}  // namespace attntul::ad
