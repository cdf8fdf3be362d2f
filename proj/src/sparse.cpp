#include "lesr/sparse.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "lesr/common.hpp"

namespace lesr {

namespace {

void require_dims(bool ok, const char* op, const SparseMatrix& a, const SparseMatrix& b) {
  if (ok) return;
  throw Error(std::string(op) + ": dimension mismatch (" + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()) + ")");
}

}  // namespace

Count saturating_add(Count a, Count b, Count cap) noexcept {
  Count out;
  if (__builtin_add_overflow(a, b, &out) || out > cap) return cap;
  return out;
}

Count saturating_mul(Count a, Count b, Count cap) noexcept {
  Count out;
  if (__builtin_mul_overflow(a, b, &out) || out > cap) return cap;
  return out;
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

SparseMatrix SparseMatrix::from_entries(std::size_t rows, std::size_t cols,
                                        std::vector<MatrixEntry> entries, Count cap) {
  for (const auto& e : entries) {
    if (e.row >= rows || e.col >= cols) throw Error("sparse entry out of range");
    if (e.value < 0) throw Error("sparse entry must be nonnegative");
  }
  std::sort(entries.begin(), entries.end(), [](const MatrixEntry& x, const MatrixEntry& y) {
    return x.row != y.row ? x.row < y.row : x.col < y.col;
  });
  std::vector<std::size_t> row_ptr(rows + 1, 0);
  std::vector<std::uint32_t> col_idx;
  std::vector<Count> values;
  bool saturated = false;
  for (std::size_t i = 0; i < entries.size();) {
    std::size_t j = i;
    Count sum = 0;
    for (; j < entries.size() && entries[j].row == entries[i].row &&
           entries[j].col == entries[i].col;
         ++j) {
      sum = saturating_add(sum, entries[j].value, cap);
    }
    if (sum >= cap) saturated = true;
    if (sum != 0) {
      col_idx.push_back(static_cast<std::uint32_t>(entries[i].col));
      values.push_back(sum);
      ++row_ptr[entries[i].row + 1];
    }
    i = j;
  }
  for (std::size_t r = 0; r < rows; ++r) row_ptr[r + 1] += row_ptr[r];
  return from_csr(rows, cols, std::move(row_ptr), std::move(col_idx), std::move(values),
                  saturated);
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<std::size_t> row_ptr(n + 1);
  std::vector<std::uint32_t> col_idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    row_ptr[i + 1] = i + 1;
    col_idx[i] = static_cast<std::uint32_t>(i);
  }
  return from_csr(n, n, std::move(row_ptr), std::move(col_idx), std::vector<Count>(n, 1), false);
}

SparseMatrix SparseMatrix::from_csr(std::size_t rows, std::size_t cols,
                                    std::vector<std::size_t> row_ptr,
                                    std::vector<std::uint32_t> col_idx, std::vector<Count> values,
                                    bool saturated) {
  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_ptr_ = std::move(row_ptr);
  m.col_idx_ = std::move(col_idx);
  m.values_ = std::move(values);
  m.saturated_ = saturated;
  return m;
}

Count SparseMatrix::at(std::size_t row, std::size_t col) const {
  if (row >= rows_ || col >= cols_) throw Error("sparse index out of range");
  auto cols = row_cols(row);
  auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(col));
  if (it == cols.end() || *it != col) return 0;
  return values_[row_ptr_[row] + static_cast<std::size_t>(it - cols.begin())];
}

std::span<const std::uint32_t> SparseMatrix::row_cols(std::size_t row) const {
  return {col_idx_.data() + row_ptr_[row], row_ptr_[row + 1] - row_ptr_[row]};
}

std::span<const Count> SparseMatrix::row_values(std::size_t row) const {
  return {values_.data() + row_ptr_[row], row_ptr_[row + 1] - row_ptr_[row]};
}

std::vector<MatrixEntry> SparseMatrix::entries() const {
  std::vector<MatrixEntry> out;
  out.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      out.push_back({r, col_idx_[k], values_[k]});
    }
  }
  return out;
}

namespace sparse {

SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b, Count cap) {
  require_dims(a.cols() == b.rows(), "multiply", a, b);
  const std::size_t rows = a.rows();
  const std::size_t cols = b.cols();
  const auto n = static_cast<std::ptrdiff_t>(rows);
  std::vector<std::size_t> row_ptr(rows + 1, 0);

  // Symbolic pass: nnz per output row.
#pragma omp parallel
  {
    std::vector<std::ptrdiff_t> mark(cols, -1);
#pragma omp for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      std::size_t count = 0;
      for (std::uint32_t j : a.row_cols(static_cast<std::size_t>(i))) {
        for (std::uint32_t k : b.row_cols(j)) {
          if (mark[k] != i) {
            mark[k] = i;
            ++count;
          }
        }
      }
      row_ptr[static_cast<std::size_t>(i) + 1] = count;
    }
  }
  for (std::size_t r = 0; r < rows; ++r) row_ptr[r + 1] += row_ptr[r];

  std::vector<std::uint32_t> col_idx(row_ptr[rows]);
  std::vector<Count> values(row_ptr[rows]);
  bool saturated = a.saturated() || b.saturated();

  // Numeric pass: Gustavson accumulation into a dense per-thread scratch row.
#pragma omp parallel reduction(|| : saturated)
  {
    std::vector<Count> acc(cols, 0);
    std::vector<std::uint32_t> touched;
#pragma omp for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto row = static_cast<std::size_t>(i);
      touched.clear();
      auto a_cols = a.row_cols(row);
      auto a_vals = a.row_values(row);
      for (std::size_t p = 0; p < a_cols.size(); ++p) {
        auto b_cols = b.row_cols(a_cols[p]);
        auto b_vals = b.row_values(a_cols[p]);
        for (std::size_t q = 0; q < b_cols.size(); ++q) {
          const std::uint32_t k = b_cols[q];
          if (acc[k] == 0) touched.push_back(k);
          acc[k] = saturating_add(acc[k], saturating_mul(a_vals[p], b_vals[q], cap), cap);
        }
      }
      std::sort(touched.begin(), touched.end());
      std::size_t out = row_ptr[row];
      for (std::uint32_t k : touched) {
        if (acc[k] >= cap) saturated = true;
        col_idx[out] = k;
        values[out] = acc[k];
        ++out;
        acc[k] = 0;
      }
    }
  }
  return SparseMatrix::from_csr(rows, cols, std::move(row_ptr), std::move(col_idx),
                                std::move(values), saturated);
}

SparseMatrix hadamard(const SparseMatrix& a, const SparseMatrix& b, Count cap) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", a, b);
  const std::size_t rows = a.rows();
  const auto n = static_cast<std::ptrdiff_t>(rows);
  std::vector<std::size_t> row_ptr(rows + 1, 0);

#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto x = a.row_cols(static_cast<std::size_t>(i));
    auto y = b.row_cols(static_cast<std::size_t>(i));
    std::size_t count = 0;
    for (std::size_t p = 0, q = 0; p < x.size() && q < y.size();) {
      if (x[p] < y[q]) {
        ++p;
      } else if (y[q] < x[p]) {
        ++q;
      } else {
        ++count, ++p, ++q;
      }
    }
    row_ptr[static_cast<std::size_t>(i) + 1] = count;
  }
  for (std::size_t r = 0; r < rows; ++r) row_ptr[r + 1] += row_ptr[r];

  std::vector<std::uint32_t> col_idx(row_ptr[rows]);
  std::vector<Count> values(row_ptr[rows]);
  bool saturated = a.saturated() || b.saturated();
#pragma omp parallel for schedule(dynamic, 256) reduction(|| : saturated)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    auto x = a.row_cols(row);
    auto xv = a.row_values(row);
    auto y = b.row_cols(row);
    auto yv = b.row_values(row);
    std::size_t out = row_ptr[row];
    for (std::size_t p = 0, q = 0; p < x.size() && q < y.size();) {
      if (x[p] < y[q]) {
        ++p;
      } else if (y[q] < x[p]) {
        ++q;
      } else {
        col_idx[out] = x[p];
        values[out] = saturating_mul(xv[p], yv[q], cap);
        if (values[out] >= cap) saturated = true;
        ++out, ++p, ++q;
      }
    }
  }
  return SparseMatrix::from_csr(rows, a.cols(), std::move(row_ptr), std::move(col_idx),
                                std::move(values), saturated);
}

SparseMatrix transpose(const SparseMatrix& a) {
  const std::size_t rows = a.cols();
  std::vector<std::size_t> row_ptr(rows + 1, 0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::uint32_t c : a.row_cols(r)) ++row_ptr[c + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) row_ptr[r + 1] += row_ptr[r];
  std::vector<std::size_t> next(row_ptr.begin(), row_ptr.end() - 1);
  std::vector<std::uint32_t> col_idx(a.nnz());
  std::vector<Count> values(a.nnz());
  // Walking source rows in order leaves each output row sorted.
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto cols = a.row_cols(r);
    auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const std::size_t slot = next[cols[k]]++;
      col_idx[slot] = static_cast<std::uint32_t>(r);
      values[slot] = vals[k];
    }
  }
  return SparseMatrix::from_csr(rows, a.rows(), std::move(row_ptr), std::move(col_idx),
                                std::move(values), a.saturated());
}

SparseMatrix multiply_chain(std::span<const SparseMatrix* const> chain, Count cap) {
  if (chain.empty()) throw Error("multiply_chain: empty chain");
  if (chain.size() == 1) return *chain[0];
  if (chain.size() == 2) return multiply(*chain[0], *chain[1], cap);
  if (chain.size() == 3) {
    // Start from the sparser end; associativity makes the result identical.
    if (chain[0]->nnz() <= chain[2]->nnz()) {
      return multiply(multiply(*chain[0], *chain[1], cap), *chain[2], cap);
    }
    return multiply(*chain[0], multiply(*chain[1], *chain[2], cap), cap);
  }
  SparseMatrix acc = multiply(*chain[0], *chain[1], cap);
  for (std::size_t i = 2; i < chain.size(); ++i) acc = multiply(acc, *chain[i], cap);
  return acc;
}

}  // namespace sparse

namespace sparse::reference {

SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b, Count cap) {
  require_dims(a.cols() == b.rows(), "multiply", a, b);
  std::vector<MatrixEntry> out;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::map<std::size_t, Count> row;
    auto a_cols = a.row_cols(i);
    auto a_vals = a.row_values(i);
    for (std::size_t p = 0; p < a_cols.size(); ++p) {
      auto b_cols = b.row_cols(a_cols[p]);
      auto b_vals = b.row_values(a_cols[p]);
      for (std::size_t q = 0; q < b_cols.size(); ++q) {
        Count& slot = row[b_cols[q]];
        slot = saturating_add(slot, saturating_mul(a_vals[p], b_vals[q], cap), cap);
      }
    }
    for (auto [k, v] : row) out.push_back({i, k, v});
  }
  return SparseMatrix::from_entries(a.rows(), b.cols(), std::move(out), cap);
}

SparseMatrix hadamard(const SparseMatrix& a, const SparseMatrix& b, Count cap) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", a, b);
  std::vector<MatrixEntry> out;
  for (const auto& e : a.entries()) {
    const Count other = b.at(e.row, e.col);
    if (other != 0) out.push_back({e.row, e.col, saturating_mul(e.value, other, cap)});
  }
  return SparseMatrix::from_entries(a.rows(), a.cols(), std::move(out), cap);
}

SparseMatrix transpose(const SparseMatrix& a) {
  std::vector<MatrixEntry> out;
  for (const auto& e : a.entries()) out.push_back({e.col, e.row, e.value});
  return SparseMatrix::from_entries(a.cols(), a.rows(), std::move(out));
}

}  // namespace sparse::reference

}  // namespace lesr
