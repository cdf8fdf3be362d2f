#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace lesr {

// Matrix entries count paths, so they are nonnegative integers rather than
// booleans. Arithmetic saturates at a cap instead of overflowing.
using Count = std::int64_t;
inline constexpr Count kDefaultCountCap = std::numeric_limits<std::int32_t>::max();

struct MatrixEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  Count value = 0;

  friend bool operator==(const MatrixEntry&, const MatrixEntry&) = default;
};

// Compressed sparse row matrix of counts. Column indices within a row are
// strictly increasing and no zero is ever stored.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols);

  // Duplicate coordinates are summed; zero values are dropped.
  static SparseMatrix from_entries(std::size_t rows, std::size_t cols,
                                   std::vector<MatrixEntry> entries,
                                   Count cap = kDefaultCountCap);
  static SparseMatrix identity(std::size_t n);
  // Takes ownership of validated CSR arrays.
  static SparseMatrix from_csr(std::size_t rows, std::size_t cols,
                               std::vector<std::size_t> row_ptr,
                               std::vector<std::uint32_t> col_idx,
                               std::vector<Count> values, bool saturated);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  // True when some entry was clamped to the count cap while building it.
  bool saturated() const noexcept { return saturated_; }

  Count at(std::size_t row, std::size_t col) const;
  std::span<const std::uint32_t> row_cols(std::size_t row) const;
  std::span<const Count> row_values(std::size_t row) const;
  std::size_t row_nnz(std::size_t row) const { return row_ptr_[row + 1] - row_ptr_[row]; }

  std::vector<MatrixEntry> entries() const;

  friend bool operator==(const SparseMatrix& a, const SparseMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.row_ptr_ == b.row_ptr_ &&
           a.col_idx_ == b.col_idx_ && a.values_ == b.values_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> col_idx_;
  std::vector<Count> values_;
  bool saturated_ = false;
};

Count saturating_add(Count a, Count b, Count cap) noexcept;
Count saturating_mul(Count a, Count b, Count cap) noexcept;

namespace sparse {

// OpenMP row-parallel kernels. Results are independent of thread count.
SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b, Count cap = kDefaultCountCap);
SparseMatrix hadamard(const SparseMatrix& a, const SparseMatrix& b, Count cap = kDefaultCountCap);
SparseMatrix transpose(const SparseMatrix& a);

// Product of a chain, choosing the association order by a nnz cost estimate.
// The result does not depend on the order chosen, only the cost does.
SparseMatrix multiply_chain(std::span<const SparseMatrix* const> chain,
                            Count cap = kDefaultCountCap);

}  // namespace sparse

// Straightforward single-threaded versions kept as the test and benchmark
// baseline for the kernels above.
namespace sparse::reference {

SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b, Count cap = kDefaultCountCap);
SparseMatrix hadamard(const SparseMatrix& a, const SparseMatrix& b, Count cap = kDefaultCountCap);
SparseMatrix transpose(const SparseMatrix& a);

}  // namespace sparse::reference

}  // namespace lesr
