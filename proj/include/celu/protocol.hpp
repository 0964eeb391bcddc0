#ifndef CELU_PROTOCOL_HPP
#define CELU_PROTOCOL_HPP

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "celu/dataio.hpp"
#include "celu/metrics.hpp"
#include "celu/model.hpp"
#include "celu/transport.hpp"
#include "celu/workset.hpp"

namespace celu {

enum class Algorithm { vanilla, fedbcd, celu };
enum class ScheduleMode { deterministic, concurrent };

// All training hyper-parameters. updates_per_batch counts every update a
// mini-batch receives, the exchange-round one included, so each cached batch
// is good for updates_per_batch - 1 local steps; fedbcd degenerates to the
// workset with capacity 1 and weighting off, and updates_per_batch = 1 means
// no local steps at all (vanilla).
struct TrainConfig {
  Algorithm algorithm = Algorithm::vanilla;
  std::size_t batch_size = 256;
  int updates_per_batch = 1;        // R
  std::size_t workset_capacity = 1; // W
  double xi_degrees = 90.0;         // weighting threshold angle, in (0, 180]
  bool weighting = true;            // celu only; forced off for vanilla/fedbcd
  double learning_rate = 0.05;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  std::size_t dz = 16;              // width of Z_A (and Z_B)
  std::vector<std::size_t> bottom_hidden = {32};
  std::vector<std::size_t> top_hidden = {};
  ChannelConfig channel;
  ScheduleMode mode = ScheduleMode::deterministic;
  std::size_t eval_every = 100;     // rounds between metric records
  std::size_t max_rounds = 0;       // 0 = run all epochs
  bool rho_probe = false;           // shadow true-gradient diagnostics
  std::optional<double> target_loss;
  std::optional<double> target_auc;
  bool stop_at_target = false;

  bool weighting_active() const {
    return algorithm == Algorithm::celu && weighting;
  }
  int local_steps_per_round() const { return updates_per_batch - 1; }

  // Throws a config error on any invariant violation; called before any round.
  void validate() const;
};

// Per-row cosine between ad hoc and stale statistics, zeroed below
// cos(xi). All surviving weights lie in [cos xi, 1].
std::vector<double> ins_weight(const Matrix& ad_hoc, const Matrix& stale,
                               double xi_degrees);

struct PartyCounters {
  std::size_t rounds = 0;
  std::size_t local_steps = 0;
  std::size_t weights_zeroed = 0;
  std::size_t weights_total = 0;
};

struct LocalStepReport {
  std::size_t zeroed = 0;
  std::size_t total = 0;
  std::optional<double> rho;
};

// Called with the sampled batch and the flattened estimated gradients right
// before the optimizer step; returns the cosine against the true gradient.
using RhoHook = std::function<std::optional<double>(
    const std::vector<std::size_t>& batch, const std::vector<double>& estimated)>;

// Party A: features only. Never holds labels, the top model, or party B's
// bottom model; the only things that cross the channel are Z_A out and
// grad Z_A in.
struct PartyAState {
  Matrix features;  // X_A
  MlpModel bottom;
  AdaGradState optimizer;
  WorksetTable workset;
  BatchPlan plan;
  PartyCounters counters;

  PartyAState(Matrix features_a, MlpModel bottom_model, const TrainConfig& cfg);

  // Communication-worker half-steps around the channel.
  Message start_exchange(std::uint64_t round, double lr);
  void finish_exchange(const Message& backward_msg);

  // One local update from the workset; empty report on a bubble.
  std::optional<LocalStepReport> local_step(const TrainConfig& cfg,
                                            const RhoHook* rho_hook = nullptr);

  // The update itself, on an explicitly supplied cache entry: recompute the
  // ad hoc Z_A, weight the stale derivatives, backprop, AdaGrad.
  LocalStepReport apply_local_update(const CacheEntry& entry, const TrainConfig& cfg,
                                     const RhoHook* rho_hook = nullptr);

  std::mutex& model_mutex() { return model_mu_; }

 private:
  struct Pending {
    std::uint64_t round;
    std::vector<std::size_t> batch;
    Matrix z;  // double-precision Z_A as computed (own cached view)
    ForwardTrace trace;
    double lr;
  };
  std::optional<Pending> pending_;
  std::mutex model_mu_;
};

// Party B: features, labels, bottom and top models. Never holds X_A or
// party A's bottom model.
struct PartyBState {
  Matrix features;  // X_B
  std::vector<int> labels;
  MlpModel bottom;
  MlpModel top;
  AdaGradState opt_bottom;
  AdaGradState opt_top;
  WorksetTable workset;
  BatchPlan plan;
  PartyCounters counters;

  PartyBState(Matrix features_b, std::vector<int> labels_y, MlpModel bottom_model,
              MlpModel top_model, const TrainConfig& cfg);

  // Consumes the FORWARD_ACT frame for `round`, replies with the
  // per-instance BACKWARD_DER frame, updates the top and bottom models,
  // and caches the exchanged pair.
  Message process_exchange(const Message& forward_msg, std::uint64_t round, double lr);

  std::optional<LocalStepReport> local_step(const TrainConfig& cfg,
                                            const RhoHook* rho_hook = nullptr);

  // Forward the top model on (stale Z_A, ad hoc Z_B), weight the
  // per-instance loss by derivative similarity, update top and bottom.
  LocalStepReport apply_local_update(const CacheEntry& entry, const TrainConfig& cfg,
                                     const RhoHook* rho_hook = nullptr);

  std::mutex& model_mutex() { return model_mu_; }

 private:
  std::mutex model_mu_;
};

struct ModelSet {
  MlpModel bottom_a;
  MlpModel bottom_b;
  MlpModel top;
};

// The models a run starts from, deterministic in cfg.seed. Shared with the
// reference implementations in tests so trajectories are comparable.
ModelSet make_models(const TrainConfig& cfg, std::size_t d_a, std::size_t d_b);

std::vector<std::size_t> bottom_layout(const TrainConfig& cfg, std::size_t d_in);
std::vector<std::size_t> top_layout(const TrainConfig& cfg);

struct RunResult {
  std::vector<MetricsRecord> records;
  std::vector<FrameRecord> log_a_to_b;
  std::vector<FrameRecord> log_b_to_a;
  std::vector<double> params_bottom_a;  // final, flattened
  std::vector<double> params_bottom_b;
  std::vector<double> params_top;
  std::size_t rounds = 0;
  std::size_t local_steps_a = 0;
  std::size_t local_steps_b = 0;
  std::size_t frames_sent = 0;
  std::size_t bytes_sent = 0;
  double simulated_time_s = 0.0;
  std::optional<std::size_t> rounds_to_target;
};

// Runs the configured algorithm over the dataset: vanilla exchanges only,
// fedbcd repeats the newest batch, celu samples the workset round-robin with
// instance weighting. Deterministic mode interleaves [exchange, local phase]
// in one thread and is the reproducibility reference; concurrent mode
// free-runs a communication worker and a local worker per party.
RunResult run_training(const TrainConfig& cfg, const AlignedDataset& dataset);

}  // namespace celu

#endif  // CELU_PROTOCOL_HPP
