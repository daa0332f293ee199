#include "attntul/kernels.hpp"

#include "attntul/error.hpp"

#include <algorithm>
#include <string>
#include <vector>

#ifdef ATTNTUL_HAVE_OPENMP
#include <omp.h>
#endif

namespace attntul::kernels {

namespace {

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

void check_gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b,
                std::span<double> c) {
  if (a.size() != g.m * g.k || b.size() != g.k * g.n || c.size() != g.m * g.n) {
    throw ShapeError("gemm: buffer sizes do not match m=" + std::to_string(g.m) +
                     " n=" + std::to_string(g.n) + " k=" + std::to_string(g.k));
  }
}

void check_spmm(const CsrMatrix& s, std::span<const double> b, std::size_t n,
                std::span<const double> c) {
  if (b.size() != s.cols() * n || c.size() != s.rows() * n) {
    throw ShapeError("spmm: sparse " + std::to_string(s.rows()) + "x" +
                     std::to_string(s.cols()) + " does not match dense operand width " +
                     std::to_string(n));
  }
}

inline double a_at(const GemmArgs& g, std::span<const double> a, std::size_t i, std::size_t p) {
  return g.trans_a ? a[p * g.m + i] : a[i * g.k + p];
}

inline double b_at(const GemmArgs& g, std::span<const double> b, std::size_t p, std::size_t j) {
  return g.trans_b ? b[j * g.k + p] : b[p * g.n + j];
}

void gemm_row(const GemmArgs& g, std::span<const double> a, std::span<const double> b,
              std::span<double> c, std::size_t i) {
  double* crow = c.data() + i * g.n;
  if (!g.trans_b) {
    // axpy form: stream rows of B. The product is summed apart from C so
    // accumulation rounds like the reference loop.
    thread_local std::vector<double> row;
    row.assign(g.n, 0.0);
    for (std::size_t p = 0; p < g.k; ++p) {
      const double av = a_at(g, a, i, p);
      const double* brow = b.data() + p * g.n;
      for (std::size_t j = 0; j < g.n; ++j) row[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < g.n; ++j) crow[j] = g.accumulate ? crow[j] + row[j] : row[j];
  } else {
    // dot form: rows of B are contiguous
    for (std::size_t j = 0; j < g.n; ++j) {
      const double* brow = b.data() + j * g.k;
      double s = 0.0;
      if (g.trans_a) {
        for (std::size_t p = 0; p < g.k; ++p) s += a[p * g.m + i] * brow[p];
      } else {
        const double* arow = a.data() + i * g.k;
        for (std::size_t p = 0; p < g.k; ++p) s += arow[p] * brow[p];
      }
      crow[j] = g.accumulate ? crow[j] + s : s;
    }
  }
}

void spmm_row(const CsrMatrix& s, std::span<const double> b, std::size_t n, std::span<double> c,
              bool accumulate, std::size_t r) {
  double* crow = c.data() + r * n;
  thread_local std::vector<double> row;
  row.assign(n, 0.0);
  const auto& ptr = s.row_ptr();
  const auto& col = s.col_idx();
  const auto& val = s.values();
  for (std::size_t k = ptr[r]; k < ptr[r + 1]; ++k) {
    const double v = val[k];
    const double* brow = b.data() + static_cast<std::size_t>(col[k]) * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += v * brow[j];
  }
  for (std::size_t j = 0; j < n; ++j) crow[j] = accumulate ? crow[j] + row[j] : row[j];
}

}  // namespace

namespace serial {

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  check_gemm(g, a, b, c);
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) s += a_at(g, a, i, p) * b_at(g, b, p, j);
      c[i * g.n + j] = g.accumulate ? c[i * g.n + j] + s : s;
    }
  }
}

void spmm(const CsrMatrix& s, std::span<const double> b, std::size_t n, std::span<double> c,
          bool accumulate) {
  check_spmm(s, b, n, c);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = s.row_ptr()[r]; k < s.row_ptr()[r + 1]; ++k)
        acc += s.values()[k] * b[static_cast<std::size_t>(s.col_idx()[k]) * n + j];
      c[r * n + j] = accumulate ? c[r * n + j] + acc : acc;
    }
  }
}

CsrMatrix incidence_gram(const CsrMatrix& inc) {
  const std::size_t t = inc.rows();
  std::vector<Triplet> entries;
  const auto& ptr = inc.row_ptr();
  const auto& col = inc.col_idx();
  const auto& val = inc.values();
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      if (i == j) continue;
      // merge of two sorted column lists
      double dot = 0.0;
      std::size_t p = ptr[i], q = ptr[j];
      while (p < ptr[i + 1] && q < ptr[j + 1]) {
        if (col[p] < col[q]) {
          ++p;
        } else if (col[q] < col[p]) {
          ++q;
        } else {
          dot += val[p] * val[q];
          ++p;
          ++q;
        }
      }
      if (dot != 0.0)
        entries.push_back({static_cast<std::int64_t>(i), static_cast<std::int64_t>(j), dot});
    }
  }
  return CsrMatrix::from_triplets(t, t, std::move(entries));
}

}  // namespace serial

namespace parallel {

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  check_gemm(g, a, b, c);
  const auto rows = static_cast<std::ptrdiff_t>(g.m);
  [[maybe_unused]] const bool big = g.m * g.n * g.k >= kParallelWork && g.m > 1;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i) gemm_row(g, a, b, c, static_cast<std::size_t>(i));
}

void spmm(const CsrMatrix& s, std::span<const double> b, std::size_t n, std::span<double> c,
          bool accumulate) {
  check_spmm(s, b, n, c);
  const auto rows = static_cast<std::ptrdiff_t>(s.rows());
  [[maybe_unused]] const bool big = s.nnz() * n >= kParallelWork && s.rows() > 1;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t r = 0; r < rows; ++r)
    spmm_row(s, b, n, c, accumulate, static_cast<std::size_t>(r));
}

CsrMatrix incidence_gram(const CsrMatrix& inc) {
  const std::size_t t = inc.rows();
  const CsrMatrix by_grid = inc.transpose();
  std::vector<std::vector<std::int32_t>> row_cols(t);
  std::vector<std::vector<double>> row_vals(t);

  const auto rows = static_cast<std::ptrdiff_t>(t);
#pragma omp parallel
  {
    std::vector<double> acc(t, 0.0);
    std::vector<std::int32_t> touched;
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      touched.clear();
      for (std::size_t p = inc.row_ptr()[i]; p < inc.row_ptr()[i + 1]; ++p) {
        const auto g = static_cast<std::size_t>(inc.col_idx()[p]);
        const double vi = inc.values()[p];
        for (std::size_t q = by_grid.row_ptr()[g]; q < by_grid.row_ptr()[g + 1]; ++q) {
          const auto j = by_grid.col_idx()[q];
          if (static_cast<std::size_t>(j) == i) continue;
          if (acc[static_cast<std::size_t>(j)] == 0.0) touched.push_back(j);
          acc[static_cast<std::size_t>(j)] += vi * by_grid.values()[q];
        }
      }
      std::sort(touched.begin(), touched.end());
      for (auto j : touched) {
        row_cols[i].push_back(j);
        row_vals[i].push_back(acc[static_cast<std::size_t>(j)]);
        acc[static_cast<std::size_t>(j)] = 0.0;
      }
    }
  }

  std::vector<Triplet> entries;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t k = 0; k < row_cols[i].size(); ++k)
      entries.push_back({static_cast<std::int64_t>(i), row_cols[i][k], row_vals[i][k]});
  return CsrMatrix::from_triplets(t, t, std::move(entries));
}

}  // namespace parallel

int max_threads() {
#ifdef ATTNTUL_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads([[maybe_unused]] int n) {
#ifdef ATTNTUL_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

}  // namespace attntul::kernels
