#include "attntul/sparse.hpp"

#include "attntul/error.hpp"

#include <algorithm>
#include <string>

namespace attntul {

CsrMatrix::CsrMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

CsrMatrix CsrMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<Triplet> entries) {
  for (const auto& e : entries) {
    if (e.row < 0 || e.col < 0 || static_cast<std::size_t>(e.row) >= rows ||
        static_cast<std::size_t>(e.col) >= cols) {
      throw ShapeError("triplet (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                       ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  CsrMatrix m(rows, cols);
  m.col_idx_.reserve(entries.size());
  m.values_.reserve(entries.size());
  std::vector<std::size_t> counts(rows, 0);
  for (std::size_t i = 0; i < entries.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < entries.size() && entries[j].row == entries[i].row &&
           entries[j].col == entries[i].col) {
      sum += entries[j].value;
      ++j;
    }
    if (sum != 0.0) {
      m.col_idx_.push_back(static_cast<std::int32_t>(entries[i].col));
      m.values_.push_back(sum);
      ++counts[static_cast<std::size_t>(entries[i].row)];
    }
    i = j;
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] = m.row_ptr_[r] + counts[r];
  return m;
}

CsrMatrix CsrMatrix::identity(std::size_t n) {
  CsrMatrix m(n, n);
  m.col_idx_.resize(n);
  m.values_.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    m.col_idx_[i] = static_cast<std::int32_t>(i);
    m.row_ptr_[i + 1] = i + 1;
  }
  return m;
}

CsrMatrix CsrMatrix::from_dense(std::size_t rows, std::size_t cols,
                                const std::vector<double>& dense) {
  if (dense.size() != rows * cols) throw ShapeError("from_dense: size mismatch");
  CsrMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double v = dense[r * cols + c];
      if (v != 0.0) {
        m.col_idx_.push_back(static_cast<std::int32_t>(c));
        m.values_.push_back(v);
      }
    }
    m.row_ptr_[r + 1] = m.values_.size();
  }
  return m;
}

double CsrMatrix::at(std::size_t r, std::size_t c) const {
  auto begin = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
  auto end = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
  auto it = std::lower_bound(begin, end, static_cast<std::int32_t>(c));
  if (it == end || *it != static_cast<std::int32_t>(c)) return 0.0;
  return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

CsrMatrix CsrMatrix::transpose() const {
  CsrMatrix t(cols_, rows_);
  t.col_idx_.resize(nnz());
  t.values_.resize(nnz());
  for (auto c : col_idx_) ++t.row_ptr_[static_cast<std::size_t>(c) + 1];
  for (std::size_t i = 0; i < cols_; ++i) t.row_ptr_[i + 1] += t.row_ptr_[i];
  std::vector<std::size_t> next(t.row_ptr_.begin(), t.row_ptr_.end() - 1);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      auto dst = next[static_cast<std::size_t>(col_idx_[k])]++;
      t.col_idx_[dst] = static_cast<std::int32_t>(r);
      t.values_[dst] = values_[k];
    }
  }
  return t;
}

std::vector<double> CsrMatrix::to_dense() const {
  std::vector<double> d(rows_ * cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      d[r * cols_ + static_cast<std::size_t>(col_idx_[k])] = values_[k];
  return d;
}

std::vector<Triplet> CsrMatrix::triplets() const {
  std::vector<Triplet> out;
  out.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      out.push_back({static_cast<std::int64_t>(r), col_idx_[k], values_[k]});
  return out;
}

bool CsrMatrix::is_symmetric() const {
  if (rows_ != cols_) return false;
  return transpose() == *this;
}

bool CsrMatrix::has_zero_diagonal() const {
  for (std::size_t r = 0; r < rows_ && r < cols_; ++r)
    if (at(r, r) != 0.0) return false;
  return true;
}

double CsrMatrix::max_value() const {
  if (values_.empty()) return 0.0;
  return *std::max_element(values_.begin(), values_.end());
}

}  // namespace attntul
