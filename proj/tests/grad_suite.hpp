#pragma once

// Finite-difference checks for every differentiable primitive and the full
// model loss. Cases whose inputs land near a kink are redrawn.

#include "support.hpp"
#include "toy.hpp"

#include "attntul/gradcheck.hpp"
#include "attntul/model.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace testing {

struct GradSetup {
  std::vector<attntul::ad::Tensor> inputs;
  std::function<attntul::ad::Tensor()> f;
};

struct GradCase {
  std::string name;
  double tolerance = 1e-6;
  bool kinks = false;
  std::function<GradSetup(std::mt19937_64&)> make;
};

struct GradOutcome {
  std::string name;
  double tolerance = 0.0;
  attntul::ad::GradCheckReport report;
  std::size_t attempts = 0;
};

// sum((t + c)^2) with a fixed random c, so every output entry gets a
// distinct upstream gradient.
inline std::function<attntul::ad::Tensor(const attntul::ad::Tensor&)> make_probe(
    std::mt19937_64& rng, const attntul::ad::Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  attntul::ad::Tensor c(shape, uniform_values(rng, n));
  return [c](const attntul::ad::Tensor& t) {
    return attntul::ad::sum_squares(attntul::ad::add(t, c));
  };
}

inline std::shared_ptr<const attntul::ad::FixedSparse> random_sparse(std::mt19937_64& rng,
                                                                     std::size_t r, std::size_t c,
                                                                     double density = 0.4) {
  std::bernoulli_distribution keep(density);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> dense(r * c, 0.0);
  for (auto& v : dense)
    if (keep(rng)) v = u(rng);
  return std::make_shared<attntul::ad::FixedSparse>(attntul::CsrMatrix::from_dense(r, c, dense));
}

inline std::shared_ptr<const attntul::ad::FixedSparse> random_normalized_adjacency(
    std::mt19937_64& rng, std::size_t n) {
  std::bernoulli_distribution edge(0.4);
  std::vector<double> dense(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge(rng)) dense[i * n + j] = dense[j * n + i] = 1.0 + static_cast<double>(rng() % 3);
  return std::make_shared<attntul::ad::FixedSparse>(
      attntul::symmetric_normalize(attntul::CsrMatrix::from_dense(n, n, dense)));
}

// Builds a case from input shapes and an expression over the inputs; the
// expression's output is reduced with a random probe.
inline GradCase unary_case(std::string name, double tolerance, bool kinks,
                           std::vector<attntul::ad::Shape> shapes,
                           std::function<attntul::ad::Tensor(std::vector<attntul::ad::Tensor>&)> expr,
                           double lo = -1.0, double hi = 1.0) {
  return {std::move(name), tolerance, kinks,
          [shapes, expr, lo, hi](std::mt19937_64& rng) {
            GradSetup s;
            for (const auto& shape : shapes) {
              std::size_t n = 1;
              for (auto e : shape) n *= e;
              s.inputs.emplace_back(shape, uniform_values(rng, n, lo, hi));
            }
            auto inputs = s.inputs;
            auto probe = make_probe(rng, expr(inputs).shape());
            s.f = [inputs, probe, expr]() mutable { return probe(expr(inputs)); };
            return s;
          }};
}

inline std::vector<GradCase> gradient_cases() {
  namespace ad = attntul::ad;
  using V = std::vector<ad::Tensor>;
  std::vector<GradCase> cases;

  cases.push_back(unary_case("matmul", 1e-6, false, {{7, 5}, {5, 3}},
                             [](V& x) { return ad::matmul(x[0], x[1]); }));
  cases.push_back(unary_case("transpose", 1e-6, false, {{4, 3}},
                             [](V& x) { return ad::transpose(x[0]); }));
  cases.push_back({"sparse_matmul", 1e-6, false, [](std::mt19937_64& rng) {
                     auto s = random_sparse(rng, 6, 5);
                     GradSetup g{{random_matrix(rng, 5, 3)}, {}};
                     auto b = g.inputs[0];
                     auto probe = make_probe(rng, {6, 3});
                     g.f = [s, b, probe] { return probe(ad::sparse_matmul(s, b)); };
                     return g;
                   }});
  cases.push_back(unary_case("add", 1e-6, false, {{4, 3}, {4, 3}},
                             [](V& x) { return ad::add(x[0], x[1]); }));
  cases.push_back(unary_case("add_row_vector", 1e-6, false, {{4, 3}, {3}},
                             [](V& x) { return ad::add_row_vector(x[0], x[1]); }));
  cases.push_back(unary_case("mul", 1e-6, false, {{4, 3}, {4, 3}},
                             [](V& x) { return ad::mul(x[0], x[1]); }));
  cases.push_back(unary_case("scale", 1e-6, false, {{4, 3}},
                             [](V& x) { return ad::scale(x[0], 0.7); }));
  cases.push_back(unary_case("relu", 1e-6, true, {{5, 4}},
                             [](V& x) { return ad::relu(x[0]); }));
  cases.push_back(unary_case("tanh", 1e-6, false, {{5, 4}},
                             [](V& x) { return ad::tanh(x[0]); }));
  cases.push_back(unary_case("softmax", 1e-6, false, {{3, 6}},
                             [](V& x) { return ad::softmax(x[0]); }, -3.0, 3.0));
  cases.push_back(unary_case("sparsemax", 1e-5, true, {{3, 6}},
                             [](V& x) { return ad::sparsemax(x[0]); }));
  cases.push_back(unary_case("layer_norm", 1e-5, false, {{4, 6}, {6}, {6}},
                             [](V& x) { return ad::layer_norm(x[0], x[1], x[2]); }));
  cases.push_back(unary_case("dropout", 1e-6, false, {{5, 6}}, [](V& x) {
    std::mt19937_64 rng(7);
    return ad::dropout(x[0], 0.3, true, rng);
  }));
  cases.push_back(unary_case("max_pool_rows", 1e-6, true, {{5, 4}},
                             [](V& x) { return ad::max_pool_rows(x[0]); }));
  cases.push_back({"cross_entropy", 1e-6, false, [](std::mt19937_64& rng) {
                     GradSetup g{{random_matrix(rng, 4, 5, -2.0, 2.0)}, {}};
                     auto logits = g.inputs[0];
                     g.f = [logits] {
                       const std::vector<std::size_t> targets{0, 3, 1, 4};
                       return ad::cross_entropy(logits, targets);
                     };
                     return g;
                   }});
  cases.push_back(unary_case("concat_cols", 1e-6, false, {{3, 2}, {3, 4}},
                             [](V& x) { return ad::concat_cols(x); }));
  cases.push_back(unary_case("slice_cols", 1e-6, false, {{3, 6}},
                             [](V& x) { return ad::slice_cols(x[0], 1, 4); }));
  cases.push_back(unary_case("slice_rows", 1e-6, false, {{5, 3}},
                             [](V& x) { return ad::slice_rows(x[0], 1, 4); }));
  cases.push_back(unary_case("gather_rows", 1e-6, false, {{5, 3}}, [](V& x) {
    const std::vector<std::size_t> rows{4, 0, 4, 2};
    return ad::gather_rows(x[0], rows);
  }));
  cases.push_back(unary_case("stack_rows", 1e-6, false, {{4}, {4}, {4}},
                             [](V& x) { return ad::stack_rows(x); }));
  cases.push_back(unary_case("sum_squares", 1e-6, false, {{3, 4}},
                             [](V& x) { return ad::sum_squares(x[0]); }));
  cases.push_back(unary_case("sum_scalars", 1e-6, false, {{}, {}, {}},
                             [](V& x) { return ad::sum_scalars(x); }));
  cases.push_back(unary_case("cosine_scores", 1e-6, false, {{3, 5}, {4, 5}},
                             [](V& x) { return ad::cosine_scores(x[0], x[1]); }));

  cases.push_back({"gcn_identity_features", 1e-4, true, [](std::mt19937_64& rng) {
                     auto m = random_normalized_adjacency(rng, 6);
                     GradSetup g{{random_matrix(rng, 6, 4), random_matrix(rng, 4, 4)}, {}};
                     auto w = g.inputs;
                     auto probe = make_probe(rng, {6, 4});
                     g.f = [m, w, probe] { return probe(attntul::gcn_forward(m, nullptr, w)); };
                     return g;
                   }});
  cases.push_back({"gcn_sparse_features", 1e-4, true, [](std::mt19937_64& rng) {
                     auto m = random_normalized_adjacency(rng, 6);
                     auto feats = random_sparse(rng, 6, 5, 0.5);
                     GradSetup g{{random_matrix(rng, 5, 4), random_matrix(rng, 4, 4)}, {}};
                     auto w = g.inputs;
                     auto probe = make_probe(rng, {6, 4});
                     g.f = [m, feats, w, probe] { return probe(attntul::gcn_forward(m, feats, w)); };
                     return g;
                   }});
  cases.push_back({"global_elastic_attention", 1e-4, true, [](std::mt19937_64& rng) {
                     GradSetup g{{random_matrix(rng, 6, 4)}, {}};
                     auto emb = g.inputs[0];
                     auto probe = make_probe(rng, {2, 4});
                     g.f = [emb, probe] {
                       attntul::ModelConfig c;
                       c.d = 4;
                       const std::vector<std::size_t> rows{0, 3};
                       return probe(attntul::global_elastic_attention(c, emb, rows));
                     };
                     return g;
                   }});
  cases.push_back({"model_loss", 1e-4, true, [](std::mt19937_64& rng) {
                     auto toy = std::make_shared<ToyProblem>(make_toy(rng()));
                     const auto config = toy_config();
                     auto params = attntul::ModelParams::initialize(config, toy->n_grids,
                                                                    toy->n_users, rng());
                     GradSetup g;
                     for (auto& p : params.all()) g.inputs.push_back(p.tensor);
                     g.f = [toy, config, params] {
                       std::vector<std::size_t> batch(toy->inputs.size());
                       for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
                       auto fwd = attntul::forward_full(config, params, toy->graphs, toy->inputs,
                                                        batch, {});
                       return attntul::model_loss(config, params, fwd.logits, toy->users);
                     };
                     return g;
                   }});
  return cases;
}

// Redraws a case until no coordinate sits at a kink, up to max_attempts;
// the last draw is kept (with its kink coordinates excluded) otherwise.
inline GradOutcome run_grad_case(const GradCase& c, std::uint64_t seed,
                                 std::size_t max_attempts = 20) {
  std::mt19937_64 rng(seed);
  GradOutcome out{c.name, c.tolerance, {}, 0};
  while (out.attempts < max_attempts) {
    ++out.attempts;
    auto setup = c.make(rng);
    out.report = attntul::ad::finite_difference_check(setup.f, setup.inputs, 1e-5, c.tolerance,
                                                      1e-6, c.kinks);
    if (out.report.kinks == 0) break;
  }
  return out;
}

inline std::vector<GradOutcome> run_grad_suite(std::uint64_t seed = 2024) {
  std::vector<GradOutcome> outcomes;
  for (const auto& c : gradient_cases()) outcomes.push_back(run_grad_case(c, seed));
  return outcomes;
}

}  // namespace testing
