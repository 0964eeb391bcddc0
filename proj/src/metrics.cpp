#include "celu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "celu/error.hpp"
#include "celu/rng.hpp"

namespace celu {

const char* const kMetricsCsvHeader =
    "round,local_steps,bytes_sent,simulated_time_s,train_loss,eval_auc,"
    "rho_estimate,weights_zeroed_fraction";

namespace {

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
  std::string out = kMetricsCsvHeader;
  out += '\n';
  for (const MetricsRecord& r : records) {
    out += std::to_string(r.round);
    out += ',';
    out += std::to_string(r.local_steps);
    out += ',';
    out += std::to_string(r.bytes_sent);
    out += ',';
    out += fmt_double(r.simulated_time_s);
    out += ',';
    out += fmt_double(r.train_loss);
    out += ',';
    out += fmt_double(r.eval_auc);
    out += ',';
    if (r.rho_estimate) out += fmt_double(*r.rho_estimate);
    out += ',';
    out += fmt_double(r.weights_zeroed_fraction);
    out += '\n';
  }
  return out;
}

std::optional<std::size_t> rounds_to_target(const std::vector<MetricsRecord>& records,
                                            std::optional<double> target_loss,
                                            std::optional<double> target_auc) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (target_loss && records[i].train_loss <= *target_loss) return i;
    if (target_auc && records[i].eval_auc >= *target_auc) return i;
  }
  return std::nullopt;
}

double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.size() != scores.size()) {
    raise(ErrorKind::shape, "auc: label/score lengths differ");
  }
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) raise(ErrorKind::data, "auc: labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    raise(ErrorKind::metric, "auc: needs at least one positive and one negative label");
  }

  // Rank-based formulation with average ranks for ties.
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) positive_rank_sum += avg_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::optional<double> empirical_rho(const std::vector<double>& approx_grad,
                                    const std::vector<double>& true_grad) {
  if (approx_grad.size() != true_grad.size()) {
    raise(ErrorKind::shape, "empirical_rho: gradient lengths differ");
  }
  double aa = 0.0, tt = 0.0, at = 0.0;
  for (std::size_t i = 0; i < approx_grad.size(); ++i) {
    aa += approx_grad[i] * approx_grad[i];
    tt += true_grad[i] * true_grad[i];
    at += approx_grad[i] * true_grad[i];
  }
  if (aa == 0.0 || tt == 0.0) return std::nullopt;
  return std::clamp(at / std::sqrt(aa * tt), -1.0, 1.0);
}

std::optional<double> quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

double theoretical_delta(const DiagnosticsConfig& diag, std::size_t batch_size,
                         std::size_t workset_capacity, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) {
    raise(ErrorKind::range, "theoretical_delta: rho must be in (0, 1]");
  }
  if (diag.lipschitz <= 0.0 || diag.sigma <= 0.0 || diag.dim == 0 ||
      !(diag.delta > 0.0 && diag.delta < 1.0) || batch_size == 0 ||
      workset_capacity == 0) {
    raise(ErrorKind::config, "theoretical_delta: all constants must be positive, delta in (0,1)");
  }
  const double log_term = std::log(2.0 * static_cast<double>(diag.dim) / diag.delta);
  const double sampling = diag.lipschitz * diag.lipschitz * log_term /
                          static_cast<double>(batch_size) *
                          (1.0 + 1.0 / static_cast<double>(workset_capacity));
  const double staleness = diag.sigma * diag.sigma * (2.0 - rho);
  return sampling + staleness;
}

namespace {

// Mean gradient of the logistic loss over `indices` for a model applied to
// the concatenated features, flattened.
std::vector<double> subset_gradient(const MlpModel& model, const Matrix& features,
                                    const std::vector<int>& labels,
                                    const std::vector<std::size_t>& indices) {
  const Matrix x = take_rows(features, indices);
  auto [out, trace] = forward(model, x);
  std::vector<double> logits(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) logits[r] = out(r, 0);
  const LossResult lr = logistic_loss(take_labels(labels, indices), logits);
  Matrix upstream(out.rows(), 1);
  for (std::size_t r = 0; r < out.rows(); ++r) upstream(r, 0) = lr.dloss_dlogit[r];
  const std::vector<double> ones(out.rows(), 1.0);
  return flatten_grads(backward(model, trace, upstream, ones).params);
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

VarianceProbeResult variance_probe(const AlignedDataset& dataset,
                                   const MlpModel& model, std::size_t batch_size,
                                   std::size_t workset_capacity,
                                   std::size_t trials, double stale_scale,
                                   std::uint64_t seed) {
  if (trials < 30) {
    raise(ErrorKind::config, "variance_probe: fewer than 30 trials is too noisy");
  }
  const std::size_t n = dataset.size();
  if (batch_size == 0 || batch_size > n) {
    raise(ErrorKind::config, "variance_probe: invalid batch size");
  }
  const Matrix features = hconcat(dataset.features_a, dataset.features_b);
  if (features.cols() != model.input_dim() || model.output_dim() != 1) {
    raise(ErrorKind::shape, "variance_probe: model does not fit the dataset");
  }

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const std::vector<double> full_grad =
      subset_gradient(model, features, dataset.labels, all);

  // Stale parameter point: the snapshot nudged by seeded noise. stale_scale
  // zero keeps it bit-identical to the snapshot.
  MlpModel stale_model = model;
  if (stale_scale != 0.0) {
    Rng noise = Rng::derive(seed, 0x5741);
    for (Layer& layer : stale_model.layers) {
      for (double& w : layer.weights.data()) w += stale_scale * noise.normal();
      for (double& b : layer.bias) b += stale_scale * noise.normal();
    }
  }

  Rng rng = Rng::derive(seed, 0x5742);
  VarianceProbeResult result;
  result.trials = trials;
  const std::size_t workset_size = std::min(workset_capacity * batch_size, n);
  std::vector<std::size_t> pool(n);
  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    rng.shuffle(pool);
    std::vector<std::size_t> workset(pool.begin(), pool.begin() + workset_size);
    rng.shuffle(workset);
    const std::vector<std::size_t> batch(workset.begin(), workset.begin() + batch_size);

    const std::vector<double> g = subset_gradient(model, features, dataset.labels, batch);
    const std::vector<double> g_stale =
        stale_scale == 0.0 ? g
                           : subset_gradient(stale_model, features, dataset.labels, batch);

    const double a = sq_dist(g, full_grad);
    const double b = sq_dist(g_stale, g);
    const double l = sq_dist(g_stale, full_grad);
    result.term_sampling += a;
    result.term_staleness += b;
    result.lhs += l;
    if (l > 2.0 * a + 2.0 * b + 1e-12) result.violations += 1;
  }
  const double inv = 1.0 / static_cast<double>(trials);
  result.term_sampling *= inv;
  result.term_staleness *= inv;
  result.lhs *= inv;
  return result;
}

}  // namespace celu
