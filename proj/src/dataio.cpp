#include "celu/dataio.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "celu/error.hpp"
#include "celu/rng.hpp"

namespace celu {

AlignedDataset generate_synthetic(std::size_t n, std::size_t d_a,
                                  std::size_t d_b, std::uint64_t seed) {
  if (n == 0 || d_a == 0 || d_b == 0) {
    raise(ErrorKind::config, "generate_synthetic: n, d_a, d_b must be positive");
  }
  const std::size_t d = d_a + d_b;
  Rng rng(seed);
  std::vector<double> v(d), u(d);
  for (double& x : v) x = rng.normal();
  for (double& x : u) x = rng.normal();

  AlignedDataset ds;
  ds.features_a = Matrix(n, d_a);
  ds.features_b = Matrix(n, d_b);
  ds.labels.resize(n);
  std::vector<double> row(d);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < d; ++j) row[j] = rng.normal();
    const double noise = 0.1 * rng.normal();
    double lin = 0.0, nonlin = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      lin += v[j] * row[j];
      nonlin += u[j] * row[j];
    }
    ds.labels[k] = lin + 0.5 * std::sin(nonlin) + noise > 0.0 ? 1 : 0;
    for (std::size_t j = 0; j < d_a; ++j) ds.features_a(k, j) = row[j];
    for (std::size_t j = 0; j < d_b; ++j) ds.features_b(k, j) = row[d_a + j];
  }
  return ds;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &consumed);
  } catch (const std::exception&) {
    consumed = 0;
  }
  if (consumed != cell.size() || cell.empty()) {
    raise(ErrorKind::parse, "load_csv: non-numeric cell '" + cell + "' at row " +
                                std::to_string(row) + ", column '" + col + "'");
  }
  return value;
}

std::size_t find_column(const std::vector<std::string>& header,
                        const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  raise(ErrorKind::parse, "load_csv: missing column '" + name + "'");
}

}  // namespace

AlignedDataset load_csv(const std::string& path, const std::string& label_col,
                        const std::vector<std::string>& party_a_cols,
                        const std::vector<std::string>& party_b_cols) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::io, "load_csv: cannot open '" + path + "'");
  for (const std::string& a : party_a_cols) {
    for (const std::string& b : party_b_cols) {
      if (a == b) raise(ErrorKind::config, "load_csv: column '" + a + "' assigned to both parties");
    }
    if (a == label_col) raise(ErrorKind::config, "load_csv: label column '" + a + "' assigned to party A");
  }
  for (const std::string& b : party_b_cols) {
    if (b == label_col) raise(ErrorKind::config, "load_csv: label column '" + b + "' assigned to party B");
  }

  std::string line;
  if (!std::getline(in, line)) raise(ErrorKind::parse, "load_csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);
  const std::size_t label_idx = find_column(header, label_col);
  std::vector<std::size_t> a_idx, b_idx;
  for (const std::string& c : party_a_cols) a_idx.push_back(find_column(header, c));
  for (const std::string& c : party_b_cols) b_idx.push_back(find_column(header, c));

  std::vector<double> a_values, b_values;
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      raise(ErrorKind::parse, "load_csv: row " + std::to_string(row) + " has " +
                                  std::to_string(cells.size()) + " cells, header has " +
                                  std::to_string(header.size()));
    }
    const double label = parse_cell(cells[label_idx], row, label_col);
    if (label != 0.0 && label != 1.0) {
      raise(ErrorKind::data, "load_csv: label " + cells[label_idx] + " at row " +
                                 std::to_string(row) + " is not 0 or 1");
    }
    labels.push_back(static_cast<int>(label));
    for (std::size_t i = 0; i < a_idx.size(); ++i) {
      a_values.push_back(parse_cell(cells[a_idx[i]], row, party_a_cols[i]));
    }
    for (std::size_t i = 0; i < b_idx.size(); ++i) {
      b_values.push_back(parse_cell(cells[b_idx[i]], row, party_b_cols[i]));
    }
    ++row;
  }
  if (row == 0) raise(ErrorKind::data, "load_csv: no data rows");

  AlignedDataset ds;
  ds.features_a = Matrix(row, party_a_cols.size());
  ds.features_a.data() = std::move(a_values);
  ds.features_b = Matrix(row, party_b_cols.size());
  ds.features_b.data() = std::move(b_values);
  ds.labels = std::move(labels);
  return ds;
}

BatchPlan::BatchPlan(std::uint64_t seed, std::size_t n, std::size_t batch_size,
                     std::size_t epochs)
    : seed_(seed), n_(n), batch_size_(batch_size), epochs_(epochs),
      cached_epoch_(std::numeric_limits<std::size_t>::max()) {
  if (batch_size == 0 || batch_size > n) {
    raise(ErrorKind::config, "BatchPlan: batch size " + std::to_string(batch_size) +
                                 " invalid for n = " + std::to_string(n));
  }
  steps_per_epoch_ = n / batch_size;  // drop_last is fixed true
}

std::vector<std::size_t> BatchPlan::batch_indices(std::size_t step) const {
  if (step >= total_steps()) {
    raise(ErrorKind::range, "batch_indices: step " + std::to_string(step) +
                                " out of range (" + std::to_string(total_steps()) +
                                " steps)");
  }
  const std::size_t epoch = step / steps_per_epoch_;
  const std::size_t slot = step % steps_per_epoch_;
  if (epoch != cached_epoch_) {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng = Rng::derive(seed_, epoch);
    rng.shuffle(order_);
    cached_epoch_ = epoch;
  }
  return std::vector<std::size_t>(order_.begin() + slot * batch_size_,
                                  order_.begin() + (slot + 1) * batch_size_);
}

std::vector<int> take_labels(const std::vector<int>& labels,
                             const std::vector<std::size_t>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= labels.size()) {
      raise(ErrorKind::range, "take_labels: index out of range");
    }
    out.push_back(labels[i]);
  }
  return out;
}

}  // namespace celu
