#include <doctest.h>

#include "lesr/sparse.hpp"
#include "testkit.hpp"

using namespace lesr;
using testkit::Dense;

namespace {

SparseMatrix from_list(std::size_t n, std::vector<MatrixEntry> e) {
  return SparseMatrix::from_entries(n, n, std::move(e));
}

}  // namespace

TEST_CASE("two-step path count on the three-triple KB") {
  // a=0, b=1, c=2; M_p = {(a,b), (b,c)}
  const auto p = from_list(3, {{0, 1, 1}, {1, 2, 1}});
  const auto pp = sparse::multiply(p, p);
  CHECK(pp.entries() == std::vector<MatrixEntry>{{0, 2, 1}});
}

TEST_CASE("identity is neutral for multiply") {
  Rng rng(3);
  const auto m = testkit::random_matrix(rng, 12, 12, 0.3, 4);
  CHECK(sparse::multiply(SparseMatrix::identity(12), m) == m);
  CHECK(sparse::multiply(m, SparseMatrix::identity(12)) == m);
}

TEST_CASE("multiply keeps counts instead of saturating to booleans") {
  // Two distinct paths 0->1->3 and 0->2->3.
  const auto m = from_list(4, {{0, 1, 1}, {0, 2, 1}, {1, 3, 1}, {2, 3, 1}});
  CHECK(sparse::multiply(m, m).at(0, 3) == 2);
}

TEST_CASE("multiply matches the dense triple loop on random 0/1 matrices") {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    const double density = 0.05 + 0.5 * rng.unit();
    const auto a = testkit::random_matrix(rng, n, n, density);
    const auto b = testkit::random_matrix(rng, n, n, density);
    const Dense expected = testkit::dense_multiply(testkit::to_dense(a), testkit::to_dense(b));
    CHECK(testkit::to_dense(sparse::multiply(a, b)) == expected);
    CHECK(testkit::to_dense(sparse::reference::multiply(a, b)) == expected);
  }
}

TEST_CASE("multiply is associative on random matrices") {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    const auto a = testkit::random_matrix(rng, n, n, 0.3);
    const auto b = testkit::random_matrix(rng, n, n, 0.3);
    const auto c = testkit::random_matrix(rng, n, n, 0.3);
    CHECK(sparse::multiply(sparse::multiply(a, b), c) == sparse::multiply(a, sparse::multiply(b, c)));
    const SparseMatrix* chain[] = {&a, &b, &c};
    CHECK(sparse::multiply_chain(chain) == sparse::multiply(sparse::multiply(a, b), c));
  }
}

TEST_CASE("rectangular multiply and dimension mismatch") {
  Rng rng(5);
  const auto a = testkit::random_matrix(rng, 4, 7, 0.4, 3);
  const auto b = testkit::random_matrix(rng, 7, 5, 0.4, 3);
  CHECK(testkit::to_dense(sparse::multiply(a, b)) ==
        testkit::dense_multiply(testkit::to_dense(a), testkit::to_dense(b)));
  CHECK_THROWS_AS(sparse::multiply(a, a), Error);
  CHECK_THROWS_AS(sparse::reference::multiply(b, b), Error);
}

TEST_CASE("transpose") {
  SUBCASE("single entry") {
    const auto m = from_list(2, {{0, 1, 1}});
    CHECK(sparse::transpose(m).entries() == std::vector<MatrixEntry>{{1, 0, 1}});
  }
  SUBCASE("involution and dense oracle on random 15x15") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
      const auto m = testkit::random_matrix(rng, 15, 15, 0.2, 5);
      CHECK(sparse::transpose(sparse::transpose(m)) == m);
      CHECK(testkit::to_dense(sparse::transpose(m)) == testkit::dense_transpose(testkit::to_dense(m)));
      CHECK(sparse::transpose(m) == sparse::reference::transpose(m));
    }
  }
}

TEST_CASE("hadamard") {
  SUBCASE("counts multiply") {
    const auto a = from_list(3, {{0, 2, 2}});
    const auto b = from_list(3, {{0, 2, 1}});
    CHECK(sparse::hadamard(a, b).entries() == std::vector<MatrixEntry>{{0, 2, 2}});
  }
  SUBCASE("with zero matrix") {
    Rng rng(2);
    const auto a = testkit::random_matrix(rng, 6, 6, 0.5, 3);
    CHECK(sparse::hadamard(a, SparseMatrix(6, 6)).empty());
  }
  SUBCASE("dense oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n = 1 + rng.below(18);
      const auto a = testkit::random_matrix(rng, n, n, 0.4, 4);
      const auto b = testkit::random_matrix(rng, n, n, 0.4, 4);
      const auto expected = testkit::dense_hadamard(testkit::to_dense(a), testkit::to_dense(b));
      CHECK(testkit::to_dense(sparse::hadamard(a, b)) == expected);
      CHECK(sparse::hadamard(a, b) == sparse::reference::hadamard(a, b));
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(sparse::hadamard(SparseMatrix(2, 3), SparseMatrix(3, 2)), Error);
  }
}

TEST_CASE("counts saturate at the cap and the result is flagged") {
  // 0 -> {1..5} -> 6 gives 5 paths; cap 3.
  std::vector<MatrixEntry> e;
  for (std::size_t k = 1; k <= 5; ++k) {
    e.push_back({0, k, 1});
    e.push_back({k, 6, 1});
  }
  const auto m = from_list(7, e);
  const auto capped = sparse::multiply(m, m, 3);
  CHECK(capped.at(0, 6) == 3);
  CHECK(capped.saturated());
  CHECK_FALSE(sparse::multiply(m, m).saturated());
  CHECK(saturating_mul(kDefaultCountCap, kDefaultCountCap, kDefaultCountCap) == kDefaultCountCap);
  CHECK(saturating_add(std::numeric_limits<Count>::max(), 1, std::numeric_limits<Count>::max()) ==
        std::numeric_limits<Count>::max());
}

TEST_CASE("from_entries sums duplicates and drops zeros") {
  const auto m = SparseMatrix::from_entries(2, 2, {{0, 0, 1}, {0, 0, 2}, {1, 1, 0}});
  CHECK(m.nnz() == 1);
  CHECK(m.at(0, 0) == 3);
  CHECK_THROWS_AS(SparseMatrix::from_entries(2, 2, {{2, 0, 1}}), Error);
}
