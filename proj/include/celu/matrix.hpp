#ifndef CELU_MATRIX_HPP
#define CELU_MATRIX_HPP

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace celu {

// Dense row-major matrix of doubles. Value semantics throughout; all free
// functions below are pure (inputs untouched, identical inputs give
// bit-identical outputs).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double& operator()(std::size_t r, std::size_t c) { return at(r, c); }
  double operator()(std::size_t r, std::size_t c) const { return at(r, c); }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Standard matrix product; throws a shape error naming both shapes when the
// inner dimensions differ.
Matrix matmul(const Matrix& a, const Matrix& b);

// A^T * B without materializing the transpose.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);

// A * B^T without materializing the transpose.
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// Per-row cosine similarity between two same-shaped matrices. Rows whose
// norms both fall below 1e-12 compare as identical (1.0); if exactly one is
// below the guard the similarity is 0.0. Results are clamped to [-1, 1].
std::vector<double> row_cosine(const Matrix& u, const Matrix& v);

// Row k of the result is row k of m multiplied by weights[k].
Matrix scale_rows(const Matrix& m, const std::vector<double>& weights);

// Column sums as a length-cols vector.
std::vector<double> col_sums(const Matrix& m);

// Rows of m selected by index, in order.
Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& indices);

// [left | right]; row counts must match.
Matrix hconcat(const Matrix& left, const Matrix& right);

// Columns [begin, end) of m.
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end);

}  // namespace celu

#endif  // CELU_MATRIX_HPP
