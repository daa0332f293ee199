#include "oracles.hpp"
#include "support.hpp"

#include "attntul/error.hpp"
#include "attntul/graph.hpp"
#include "attntul/kernels.hpp"
#include "attntul/sparse.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

using namespace attntul;
using testing::sequence_of;

TEST_SUITE("graph") {

TEST_CASE("csr construction sums duplicates and drops zeros") {
  auto m = CsrMatrix::from_triplets(3, 3, {{2, 1, 1.0}, {0, 2, 2.0}, {2, 1, 3.0}, {1, 1, 0.0}});
  CHECK(m.nnz() == 2);
  CHECK(m.at(2, 1) == 4.0);
  CHECK(m.at(0, 2) == 2.0);
  CHECK(m.at(1, 1) == 0.0);
  CHECK(m.transpose().at(1, 2) == 4.0);
  CHECK(CsrMatrix::from_dense(3, 3, m.to_dense()) == m);
  CHECK(CsrMatrix::identity(3).is_symmetric());
  CHECK_FALSE(m.is_symmetric());
}

TEST_CASE("local graph on the worked examples") {
  std::vector<GridSequence> seqs = {sequence_of({1, 2, 3}), sequence_of({1, 2})};
  auto g = build_local_graph(seqs, 4);
  CHECK(g.adjacency.at(1, 2) == 2.0);
  CHECK(g.adjacency.at(2, 1) == 2.0);
  CHECK(g.adjacency.at(2, 3) == 1.0);
  CHECK(g.adjacency.nnz() == 4);

  auto loop = build_local_graph(std::vector{sequence_of({1, 1, 2})}, 3);
  CHECK(loop.adjacency.at(1, 1) == 0.0);
  CHECK(loop.adjacency.at(1, 2) == 1.0);

  auto single = build_local_graph(std::vector{sequence_of({0})}, 3);
  CHECK(single.adjacency.nnz() == 0);

  // a back-and-forth trajectory counts once per unordered pair
  auto twice = build_local_graph(std::vector{sequence_of({0, 1, 0, 1})}, 2);
  CHECK(twice.adjacency.at(0, 1) == 1.0);
}

TEST_CASE("incidence rows are distinct-grid indicators") {
  std::mt19937_64 rng(21);
  auto seqs = testing::random_grid_sequences(rng, 50, 30, 12);
  auto c = build_grid_incidence(seqs, 30);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::set<int> grids;
    for (const auto& e : seqs[i].entries) grids.insert(e.grid);
    CHECK(c.row_ptr()[i + 1] - c.row_ptr()[i] == grids.size());
    for (int g : grids) CHECK(c.at(i, static_cast<std::size_t>(g)) == 1.0);
  }
}

TEST_CASE("global graph on the worked examples") {
  // grids a=0 b=1 c=2 d=3
  std::vector<GridSequence> seqs = {sequence_of({0, 1}, "1"), sequence_of({1, 2}, "1"), sequence_of({2, 3}, "2")};
  auto inc = build_grid_incidence(seqs, 4);
  std::vector<std::optional<std::size_t>> labels = {0, std::nullopt, 1};
  auto g = build_global_graph(inc, labels, 2);
  CHECK(g.node_count() == 5);
  CHECK(g.adjacency.at(0, 1) == 1.0);
  CHECK(g.adjacency.at(1, 2) == 1.0);
  CHECK(g.adjacency.at(0, 2) == 0.0);
  CHECK(g.user_edge_weight == 1.0);
  CHECK(g.adjacency.at(0, 3) == 1.0);
  CHECK(g.adjacency.at(3, 0) == 1.0);
  CHECK(g.adjacency.at(2, 4) == 1.0);
  CHECK(g.adjacency.at(1, 3) == 0.0);  // unlabelled trajectory has no user edge
  CHECK(g.adjacency.at(3, 4) == 0.0);  // no user-user edges
  CHECK(g.adjacency.is_symmetric());
  CHECK(g.adjacency.has_zero_diagonal());
  // user features are the OR of their training rows only
  CHECK(g.features.at(3, 0) == 1.0);
  CHECK(g.features.at(3, 1) == 1.0);
  CHECK(g.features.at(3, 2) == 0.0);

  std::vector<GridSequence> same = {sequence_of({0, 1}), sequence_of({1, 0})};
  auto g2 = build_global_graph(build_grid_incidence(same, 2), std::vector<std::optional<std::size_t>>{0, 0}, 1);
  CHECK(g2.adjacency.at(0, 1) == 2.0);
  CHECK(g2.user_edge_weight == 2.0);
  CHECK(g2.adjacency.at(0, 2) == 2.0);

  CHECK_THROWS_AS(build_global_graph(inc, std::vector<std::optional<std::size_t>>{0, 0}, 2), DataError);
  CHECK_THROWS_AS(build_global_graph(inc, std::vector<std::optional<std::size_t>>{0, 5, 0}, 2), DataError);
}

TEST_CASE("graphs equal brute-force oracles on random trajectories") {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 5; ++round) {
    const std::size_t grids = 20 + rng() % 81;
    auto seqs = testing::random_grid_sequences(rng, 200, grids, 15);
    auto local = build_local_graph(seqs, grids);
    CHECK(local.adjacency == testing::local_graph_oracle(seqs, grids));

    auto inc = build_grid_incidence(seqs, grids);
    std::vector<std::optional<std::size_t>> labels(seqs.size());
    auto g = build_global_graph(inc, labels, 0);
    CHECK(g.adjacency == testing::shared_grid_oracle(seqs));
  }
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
  std::mt19937_64 rng(5);
  for (auto [ta, tb] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
    const std::size_t m = 37, n = 29, k = 41;
    auto a = testing::uniform_values(rng, m * k), b = testing::uniform_values(rng, k * n);
    std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
    kernels::GemmArgs args{ta, tb, m, n, k, true};
    kernels::serial::gemm(args, a, b, c1);
    kernels::parallel::gemm(args, a, b, c2);
    CHECK(c1 == c2);
  }
  auto seqs = testing::random_grid_sequences(rng, 300, 80, 10);
  auto inc = build_grid_incidence(seqs, 80);
  CHECK(kernels::serial::incidence_gram(inc) == kernels::parallel::incidence_gram(inc));

  auto b = testing::uniform_values(rng, 80 * 16);
  for (bool acc : {false, true}) {
    std::vector<double> s1(300 * 16, 0.25), s2(300 * 16, 0.25);
    kernels::serial::spmm(inc, b, 16, s1, acc);
    kernels::parallel::spmm(inc, b, 16, s2, acc);
    CHECK(s1 == s2);
  }
}

TEST_CASE("parallel kernels do not depend on the thread count") {
  std::mt19937_64 rng(8);
  const std::size_t m = 300, n = 128, k = 200;
  auto a = testing::uniform_values(rng, m * k), b = testing::uniform_values(rng, k * n);
  auto seqs = testing::random_grid_sequences(rng, 400, 120, 10);
  auto inc = build_grid_incidence(seqs, 120);
  const int before = kernels::max_threads();

  std::vector<std::vector<double>> products;
  std::vector<CsrMatrix> grams;
  for (int threads : {1, 2, 4}) {
    kernels::set_threads(threads);
    std::vector<double> c(m * n);
    kernels::parallel::gemm({false, false, m, n, k, false}, a, b, c);
    products.push_back(std::move(c));
    grams.push_back(kernels::parallel::incidence_gram(inc));
  }
  kernels::set_threads(before);
  CHECK(products[0] == products[1]);
  CHECK(products[0] == products[2]);
  CHECK(grams[0] == grams[1]);
  CHECK(grams[0] == grams[2]);
}

TEST_CASE("symmetric normalisation") {
  auto a = CsrMatrix::from_dense(2, 2, {0, 1, 1, 0});
  auto m = symmetric_normalize(a);
  for (double v : m.to_dense()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));

  auto zero = symmetric_normalize(CsrMatrix(4, 4));
  CHECK(zero == CsrMatrix::identity(4));

  CHECK_THROWS_AS(symmetric_normalize(CsrMatrix::from_dense(2, 2, {0, 1, 2, 0})), ShapeError);
  CHECK_THROWS_AS(symmetric_normalize(CsrMatrix(2, 3)), ShapeError);

  auto weighted = CsrMatrix::from_dense(2, 2, {0, 3, 3, 0});
  auto bin = symmetric_normalize(weighted, true);
  CHECK(bin.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(symmetric_normalize(weighted).at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

  std::mt19937_64 rng(13);
  for (int round = 0; round < 50; ++round) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> dense(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng() % 3 == 0) dense[i * n + j] = dense[j * n + i] = static_cast<double>(1 + rng() % 9);
    auto out = symmetric_normalize(CsrMatrix::from_dense(n, n, dense));
    CHECK(out.is_symmetric());
    const auto want = testing::normalize_oracle(dense, n);
    const auto got = out.to_dense();
    for (std::size_t i = 0; i < n * n; ++i)
      CHECK(std::fabs(static_cast<long double>(got[i]) - want[i]) <= 1e-12L);
  }
}

TEST_CASE("graph files round-trip bit-exactly") {
  std::mt19937_64 rng(31);
  auto seqs = testing::random_grid_sequences(rng, 40, 25, 8);
  auto local = build_local_graph(seqs, 25);
  std::vector<std::optional<std::size_t>> labels(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); i += 2) labels[i] = i % 3;
  auto global = build_global_graph(build_grid_incidence(seqs, 25), labels, 3);

  std::stringstream ls, gs;
  write_local_graph(ls, local);
  write_global_graph(gs, global);
  const std::string local_text = ls.str(), global_text = gs.str();
  CHECK(local_text.rfind("attntul-graph 1\nkind local\n", 0) == 0);
  CHECK(global_text.find("symmetric 1\n") != std::string::npos);

  auto l2 = read_local_graph(ls);
  auto g2 = read_global_graph(gs);
  CHECK(l2.n_grids == local.n_grids);
  CHECK(l2.adjacency == local.adjacency);
  CHECK(g2.adjacency == global.adjacency);
  CHECK(g2.features == global.features);
  CHECK(g2.roster == global.roster);
  CHECK(g2.user_edge_weight == global.user_edge_weight);
  CHECK(g2.trajectory_count == global.trajectory_count);

  std::stringstream again;
  write_global_graph(again, g2);
  CHECK(again.str() == global_text);

  std::stringstream wrong_kind(local_text);
  CHECK_THROWS_AS(read_global_graph(wrong_kind), DataError);
  std::stringstream garbage("not a graph\n");
  CHECK_THROWS_AS(read_local_graph(garbage), DataError);
}

}  // TEST_SUITE
