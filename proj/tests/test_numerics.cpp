#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "celu/error.hpp"
#include "celu/matrix.hpp"
#include "celu/rng.hpp"

using namespace celu;

namespace {

// Independent reference product: plain triple loop, accumulation order fixed.
Matrix matmul_reference(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("matmul identity") {
  Matrix eye{{1, 0}, {0, 1}};
  Matrix m{{5, 6}, {7, 8}};
  CHECK(matmul(eye, m) == m);
}

TEST_CASE("matmul forced arithmetic") {
  Matrix a{{1, 2}};
  Matrix b{{3}, {4}};
  Matrix p = matmul(a, b);
  CHECK(p.rows() == 1);
  CHECK(p.cols() == 1);
  CHECK(p(0, 0) == 11.0);
}

TEST_CASE("matmul matches triple-loop reference") {
  Rng rng(7);
  Matrix a = random_matrix(3, 4, rng);
  Matrix b = random_matrix(4, 2, rng);
  Matrix fast = matmul(a, b);
  Matrix ref = matmul_reference(a, b);
  for (std::size_t i = 0; i < fast.data().size(); ++i) {
    CHECK(fast.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul shape error names both shapes") {
  Matrix a(2, 3), b(4, 2);
  try {
    matmul(a, b);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::shape);
    CHECK(std::string(e.what()).find("2x3") != std::string::npos);
    CHECK(std::string(e.what()).find("4x2") != std::string::npos);
  }
}

TEST_CASE("matmul associativity within relative tolerance") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(5), k = 1 + rng.below(5);
    const std::size_t n = 1 + rng.below(5), q = 1 + rng.below(5);
    Matrix a = random_matrix(m, k, rng);
    Matrix b = random_matrix(k, n, rng);
    Matrix c = random_matrix(n, q, rng);
    Matrix left = matmul(matmul(a, b), c);
    Matrix right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.data().size(); ++i) {
      const double denom = std::max({std::abs(left.data()[i]), std::abs(right.data()[i]), 1.0});
      CHECK(std::abs(left.data()[i] - right.data()[i]) / denom < 1e-9);
    }
  }
}

TEST_CASE("matmul variants agree with explicit transpose") {
  Rng rng(5);
  Matrix a = random_matrix(4, 3, rng);
  Matrix b = random_matrix(4, 2, rng);
  CHECK(matmul_at_b(a, b) == matmul(transpose(a), b));
  Matrix c = random_matrix(2, 3, rng);
  CHECK(matmul_a_bt(a, c) == matmul(a, transpose(c)));
}

TEST_CASE("row_cosine self similarity is exactly one") {
  Matrix u{{1, 2, 3}, {-4, 0.5, 9}};
  const std::vector<double> cos = row_cosine(u, u);
  CHECK(cos[0] == 1.0);
  CHECK(cos[1] == 1.0);
}

TEST_CASE("row_cosine orthogonal and known-angle rows") {
  Matrix u{{1, 0}, {1, 0}};
  Matrix v{{0, 1}, {1, 1}};
  const std::vector<double> cos = row_cosine(u, v);
  CHECK(cos[0] == 0.0);
  CHECK(cos[1] == doctest::Approx(0.7071067812).epsilon(1e-9));
}

TEST_CASE("row_cosine zero-norm guards") {
  Matrix zero(2, 3);
  Matrix mixed{{0, 0, 0}, {1, 1, 1}};
  const std::vector<double> both = row_cosine(zero, zero);
  CHECK(both[0] == 1.0);
  const std::vector<double> one = row_cosine(zero, mixed);
  CHECK(one[0] == 1.0);  // both rows zero
  CHECK(one[1] == 0.0);  // exactly one side zero
}

TEST_CASE("row_cosine stays in [-1, 1] on random input") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.below(6), cols = 1 + rng.below(6);
    Matrix u = random_matrix(rows, cols, rng);
    Matrix v = random_matrix(rows, cols, rng);
    for (double c : row_cosine(u, v)) {
      CHECK(c >= -1.0);
      CHECK(c <= 1.0);
      CHECK(std::isfinite(c));
    }
  }
}

TEST_CASE("row_cosine shape error") {
  CHECK_THROWS_AS(row_cosine(Matrix(2, 2), Matrix(2, 3)), Error);
}

TEST_CASE("scale_rows") {
  Matrix m{{1, 2}, {3, 4}};
  CHECK(scale_rows(m, {1, 1}) == m);
  Matrix zeroed = scale_rows(m, {0, 0});
  for (double v : zeroed.data()) CHECK(v == 0.0);
  Matrix scaled = scale_rows(m, {2, 0.5});
  CHECK(scaled == Matrix{{2, 4}, {1.5, 2}});
  CHECK_THROWS_AS(scale_rows(m, {1, 2, 3}), Error);
}

TEST_CASE("operations are pure and bit-deterministic") {
  Rng rng(3);
  Matrix a = random_matrix(3, 3, rng);
  Matrix b = random_matrix(3, 3, rng);
  const Matrix a_copy = a, b_copy = b;
  Matrix p1 = matmul(a, b);
  Matrix p2 = matmul(a, b);
  CHECK(p1 == p2);
  CHECK(a == a_copy);
  CHECK(b == b_copy);
  CHECK(row_cosine(a, b) == row_cosine(a, b));
}

TEST_CASE("finite outputs on finite inputs") {
  Rng rng(17);
  Matrix a = random_matrix(5, 4, rng);
  Matrix b = random_matrix(4, 6, rng);
  for (double v : matmul(a, b).data()) CHECK(std::isfinite(v));
  for (double v : scale_rows(a, {1e-3, 2, 3, 4, 5}).data()) CHECK(std::isfinite(v));
}

TEST_CASE("hconcat and slice_cols round trip") {
  Rng rng(11);
  Matrix a = random_matrix(3, 2, rng);
  Matrix b = random_matrix(3, 4, rng);
  Matrix joined = hconcat(a, b);
  CHECK(slice_cols(joined, 0, 2) == a);
  CHECK(slice_cols(joined, 2, 6) == b);
  CHECK_THROWS_AS(hconcat(a, Matrix(2, 1)), Error);
}
