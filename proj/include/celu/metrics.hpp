#ifndef CELU_METRICS_HPP
#define CELU_METRICS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "celu/dataio.hpp"
#include "celu/model.hpp"

namespace celu {

// One evaluation snapshot appended every eval_every rounds (plus round 0 and
// the final round). Counter fields are cumulative.
struct MetricsRecord {
  std::size_t round = 0;
  std::size_t local_steps = 0;  // per-party local update count
  std::size_t bytes_sent = 0;   // both directions, on-the-wire
  double simulated_time_s = 0.0;
  double train_loss = 0.0;
  double eval_auc = 0.0;
  std::optional<double> rho_estimate;
  double weights_zeroed_fraction = 0.0;
};

// Exact header the metrics CSV uses.
extern const char* const kMetricsCsvHeader;

std::string metrics_to_csv(const std::vector<MetricsRecord>& records);

// First record index whose train_loss <= target_loss (if set) or
// eval_auc >= target_auc (if set); the record's round is the
// rounds-to-target. Empty when never reached (DNF).
std::optional<std::size_t> rounds_to_target(const std::vector<MetricsRecord>& records,
                                            std::optional<double> target_loss,
                                            std::optional<double> target_auc);

// Probability that a uniformly random positive instance outscores a
// uniformly random negative one; ties count one half (rank formulation).
// Requires at least one positive and one negative label.
double auc(const std::vector<int>& labels, const std::vector<double>& scores);

// Cosine between two flattened gradients; empty when either has zero norm.
std::optional<double> empirical_rho(const std::vector<double>& approx_grad,
                                    const std::vector<double>& true_grad);

// Robust summary of per-step cosines: the q-quantile (q in [0,1]) of the
// collected values, empty when none were recorded.
std::optional<double> quantile(std::vector<double> values, double q);

// User-supplied constants of the convergence-rate calculator; none of them
// are measurable by the artifact itself.
struct DiagnosticsConfig {
  double lipschitz = 1.0;  // L
  double sigma = 1.0;      // sqrt of the gradient moment bound
  std::size_t dim = 1;     // d
  double delta = 0.1;      // failure probability, in (0,1)
};

// L^2 * ln(2d/delta) / B * (1 + 1/W) + sigma^2 * (2 - rho).
double theoretical_delta(const DiagnosticsConfig& diag, std::size_t batch_size,
                         std::size_t workset_capacity, double rho);

struct VarianceProbeResult {
  double term_sampling = 0.0;   // E ||g - grad f||^2
  double term_staleness = 0.0;  // E ||g~ - g||^2
  double lhs = 0.0;             // E ||g~ - grad f||^2
  std::size_t trials = 0;
  std::size_t violations = 0;   // trials where lhs_k > 2*a_k + 2*b_k
};

// Monte-Carlo check that the expected gradient error splits into a sampling
// term and a staleness term: per trial a workset of W*B instances is drawn
// uniformly from the dataset and a batch of B from the workset; g is the
// batch gradient at `model`, g~ the same batch's gradient at a parameter
// point perturbed by stale_scale (0 makes g~ equal g bitwise). The full-batch
// gradient is computed exactly, so the dataset must stay small.
VarianceProbeResult variance_probe(const AlignedDataset& dataset,
                                   const MlpModel& model, std::size_t batch_size,
                                   std::size_t workset_capacity,
                                   std::size_t trials, double stale_scale,
                                   std::uint64_t seed);

}  // namespace celu

#endif  // CELU_METRICS_HPP
