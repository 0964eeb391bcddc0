#ifndef CELU_EXPERIMENT_HPP
#define CELU_EXPERIMENT_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "celu/protocol.hpp"

namespace celu {

// Flat key=value option set, the single source the CLI flags, config files,
// and the C API all funnel into. Unknown keys are a config error.
class Options {
 public:
  void set(const std::string& key, const std::string& value);
  static Options from_file(const std::string& path);  // key=value lines, # comments

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  const std::map<std::string, std::string>& all() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Materializes a TrainConfig from options (single-valued keys only).
TrainConfig config_from_options(const Options& opts);

// Loads the dataset an option set names: "synth:n,dA,dB" or "csv:PATH"
// (CSV needs label/party_a_cols/party_b_cols options).
AlignedDataset dataset_from_options(const Options& opts);

struct ExperimentCell {
  Algorithm algorithm;
  int updates_per_batch;
  std::size_t workset_capacity;
  double xi_degrees;
  bool weighting;
  std::uint64_t seed;
  std::string run_name;
  RunResult result;
};

struct ExperimentSummaryRow {
  std::string algorithm;
  int updates_per_batch;
  std::size_t workset_capacity;
  double xi_degrees;
  bool weighting;
  std::size_t runs = 0;
  std::size_t dnf = 0;
  double rounds_mean = 0.0;   // over seeds that reached the target
  double rounds_stddev = 0.0; // population stddev
};

struct ExperimentResult {
  std::vector<ExperimentCell> cells;
  std::vector<ExperimentSummaryRow> summary;
};

// Runs every (algorithm, R, W, xi, weighting, seed) cell of the config's
// cross product, writes one metrics CSV per run plus summary.csv into the
// output directory, and returns everything for programmatic use. Cells that
// never reach the target are marked DNF rather than failing the experiment.
ExperimentResult run_experiment(const Options& opts);

std::string summary_to_csv(const std::vector<ExperimentSummaryRow>& rows);

}  // namespace celu

#endif  // CELU_EXPERIMENT_HPP
