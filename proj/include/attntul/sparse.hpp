#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace attntul {

struct Triplet {
  std::int64_t row = 0;
  std::int64_t col = 0;
  double value = 0.0;
};

// Compressed sparse row matrix. Column indices are sorted within each row
// and unique.
class CsrMatrix {
public:
  CsrMatrix() = default;
  CsrMatrix(std::size_t rows, std::size_t cols);

  // Duplicate (row, col) entries are summed; explicit zeros are dropped.
  static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);
  static CsrMatrix identity(std::size_t n);
  static CsrMatrix from_dense(std::size_t rows, std::size_t cols, const std::vector<double>& dense);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::int32_t>& col_idx() const noexcept { return col_idx_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& mutable_values() noexcept { return values_; }

  double at(std::size_t r, std::size_t c) const;
  CsrMatrix transpose() const;
  std::vector<double> to_dense() const;
  std::vector<Triplet> triplets() const;  // row-major order

  bool is_symmetric() const;  // exact comparison of stored values
  bool has_zero_diagonal() const;
  double max_value() const;   // 0 for an empty matrix

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::int32_t> col_idx_;
  std::vector<double> values_;
};

}  // namespace attntul
