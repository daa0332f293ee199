#pragma once

// Dense and sparse products behind the tensor primitives and the graph
// builder. Every kernel exists twice: `serial` is the plain reference
// loop kept for tests, `parallel` is the OpenMP version the library calls.
// Parallel kernels partition work by output row only, so their results do
// not depend on the thread count.

#include "attntul/sparse.hpp"

#include <cstddef>
#include <span>

namespace attntul::kernels {

// C[m x n] (+)= op(A) * op(B) with op(A) m x k and op(B) k x n, all
// row-major. When trans_a is set A is stored k x m; when trans_b is set B
// is stored n x k.
struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  bool accumulate = false;
};

namespace serial {
void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
// C[rows(S) x n] (+)= S * B[cols(S) x n]
void spmm(const CsrMatrix& s, std::span<const double> b, std::size_t n, std::span<double> c,
          bool accumulate);
// C * C^T with the diagonal removed.
CsrMatrix incidence_gram(const CsrMatrix& incidence);
}  // namespace serial

namespace parallel {
void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void spmm(const CsrMatrix& s, std::span<const double> b, std::size_t n, std::span<double> c,
          bool accumulate);
CsrMatrix incidence_gram(const CsrMatrix& incidence);
}  // namespace parallel

using parallel::gemm;
using parallel::incidence_gram;
using parallel::spmm;

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace attntul::kernels
