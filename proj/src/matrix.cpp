#include "celu/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "celu/error.hpp"

namespace celu {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

constexpr double kNormGuard = 1e-12;

}  // namespace

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows.size() ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& row : rows) {
    if (row.size() != cols_) {
      raise(ErrorKind::shape, "Matrix initializer rows have unequal lengths");
    }
    data_.insert(data_.end(), row.begin(), row.end());
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    raise(ErrorKind::shape, "matmul: inner dimensions differ: " + shape_str(a) +
                                " times " + shape_str(b));
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bd + p * n;
      double* orow = od + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    raise(ErrorKind::shape, "matmul_at_b: row counts differ: " + shape_str(a) +
                                " vs " + shape_str(b));
  }
  Matrix out(a.cols(), b.cols());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* arow = ad + r * k;
    const double* brow = bd + r * n;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = od + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    raise(ErrorKind::shape, "matmul_a_bt: column counts differ: " +
                                shape_str(a) + " vs " + shape_str(b));
  }
  Matrix out(a.rows(), b.rows());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = ad + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = bd + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

std::vector<double> row_cosine(const Matrix& u, const Matrix& v) {
  if (!u.same_shape(v)) {
    raise(ErrorKind::shape, "row_cosine: shapes differ: " + shape_str(u) +
                                " vs " + shape_str(v));
  }
  if (u.rows() == 0) {
    raise(ErrorKind::shape, "row_cosine: at least one row required");
  }
  std::vector<double> out(u.rows());
  const std::size_t d = u.cols();
  for (std::size_t r = 0; r < u.rows(); ++r) {
    const double* ur = u.data().data() + r * d;
    const double* vr = v.data().data() + r * d;
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      uu += ur[j] * ur[j];
      vv += vr[j] * vr[j];
      uv += ur[j] * vr[j];
    }
    const bool u_zero = std::sqrt(uu) < kNormGuard;
    const bool v_zero = std::sqrt(vv) < kNormGuard;
    if (u_zero && v_zero) {
      out[r] = 1.0;
    } else if (u_zero || v_zero) {
      out[r] = 0.0;
    } else {
      // dot / sqrt(uu * vv) rather than dot / (sqrt(uu) * sqrt(vv)): this
      // form returns exactly 1.0 for bit-identical rows, which the
      // zero-staleness reuse path relies on.
      double c = uv / std::sqrt(uu * vv);
      out[r] = std::clamp(c, -1.0, 1.0);
    }
  }
  return out;
}

Matrix scale_rows(const Matrix& m, const std::vector<double>& weights) {
  if (weights.size() != m.rows()) {
    raise(ErrorKind::shape,
          "scale_rows: weight length " + std::to_string(weights.size()) +
              " does not match row count " + std::to_string(m.rows()));
  }
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* row = out.data().data() + r * m.cols();
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] *= weights[r];
  }
  return out;
}

std::vector<double> col_sums(const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* row = m.data().data() + r * m.cols();
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += row[j];
  }
  return out;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= m.rows()) {
      raise(ErrorKind::range, "take_rows: index " + std::to_string(indices[r]) +
                                  " out of range for " + shape_str(m));
    }
    const double* src = m.data().data() + indices[r] * m.cols();
    std::copy(src, src + m.cols(), out.data().data() + r * m.cols());
  }
  return out;
}

Matrix hconcat(const Matrix& left, const Matrix& right) {
  if (left.rows() != right.rows()) {
    raise(ErrorKind::shape, "hconcat: row counts differ: " + shape_str(left) +
                                " vs " + shape_str(right));
  }
  Matrix out(left.rows(), left.cols() + right.cols());
  for (std::size_t r = 0; r < left.rows(); ++r) {
    double* dst = out.data().data() + r * out.cols();
    const double* l = left.data().data() + r * left.cols();
    const double* rr = right.data().data() + r * right.cols();
    std::copy(l, l + left.cols(), dst);
    std::copy(rr, rr + right.cols(), dst + left.cols());
  }
  return out;
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end) {
  if (begin > end || end > m.cols()) {
    raise(ErrorKind::range, "slice_cols: [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") out of range for " +
                                shape_str(m));
  }
  Matrix out(m.rows(), end - begin);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* src = m.data().data() + r * m.cols() + begin;
    std::copy(src, src + out.cols(), out.data().data() + r * out.cols());
  }
  return out;
}

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::shape: return "shape";
    case ErrorKind::data: return "data";
    case ErrorKind::parse: return "parse";
    case ErrorKind::range: return "range";
    case ErrorKind::logic: return "logic";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::metric: return "metric";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::size: return "size";
    case ErrorKind::channel_closed: return "channel_closed";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace celu
