#include "celu/celu.h"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "celu/error.hpp"
#include "celu/experiment.hpp"
#include "celu/metrics.hpp"
#include "celu/protocol.hpp"

using celu::Error;
using celu::ErrorKind;

struct celu_run {
  celu::Options options;
  std::optional<celu::RunResult> result;
  std::string last_error;
  std::string csv_buffer;
  std::string summary_buffer;
};

namespace {

thread_local std::string g_last_error;

celu_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return CELU_ERR_CONFIG;
    case ErrorKind::shape: return CELU_ERR_SHAPE;
    case ErrorKind::data: return CELU_ERR_DATA;
    case ErrorKind::parse: return CELU_ERR_PARSE;
    case ErrorKind::range: return CELU_ERR_RANGE;
    case ErrorKind::logic: return CELU_ERR_LOGIC;
    case ErrorKind::numeric: return CELU_ERR_NUMERIC;
    case ErrorKind::metric: return CELU_ERR_METRIC;
    case ErrorKind::protocol: return CELU_ERR_PROTOCOL;
    case ErrorKind::size: return CELU_ERR_SIZE;
    case ErrorKind::channel_closed: return CELU_ERR_CHANNEL_CLOSED;
    case ErrorKind::io: return CELU_ERR_IO;
  }
  return CELU_ERR_INTERNAL;
}

template <typename Fn>
celu_status guarded(std::string* error_sink, Fn&& fn) {
  try {
    fn();
    return CELU_OK;
  } catch (const Error& e) {
    if (error_sink) *error_sink = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    if (error_sink) *error_sink = e.what();
    return CELU_ERR_INTERNAL;
  } catch (...) {
    if (error_sink) *error_sink = "unknown error";
    return CELU_ERR_INTERNAL;
  }
}

}  // namespace

extern "C" {

const char* celu_version(void) { return "0.1.0"; }

const char* celu_status_name(celu_status status) {
  switch (status) {
    case CELU_OK: return "ok";
    case CELU_ERR_CONFIG: return "config";
    case CELU_ERR_SHAPE: return "shape";
    case CELU_ERR_DATA: return "data";
    case CELU_ERR_PARSE: return "parse";
    case CELU_ERR_RANGE: return "range";
    case CELU_ERR_LOGIC: return "logic";
    case CELU_ERR_NUMERIC: return "numeric";
    case CELU_ERR_METRIC: return "metric";
    case CELU_ERR_PROTOCOL: return "protocol";
    case CELU_ERR_SIZE: return "size";
    case CELU_ERR_CHANNEL_CLOSED: return "channel_closed";
    case CELU_ERR_IO: return "io";
    case CELU_ERR_INVALID_ARG: return "invalid_arg";
    case CELU_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* celu_last_error(void) { return g_last_error.c_str(); }

celu_run* celu_run_new(void) {
  try {
    return new celu_run();
  } catch (...) {
    return nullptr;
  }
}

void celu_run_free(celu_run* run) { delete run; }

celu_status celu_run_set(celu_run* run, const char* key, const char* value) {
  if (!run || !key || !value) return CELU_ERR_INVALID_ARG;
  return guarded(&run->last_error, [&] { run->options.set(key, value); });
}

celu_status celu_run_load_config(celu_run* run, const char* path) {
  if (!run || !path) return CELU_ERR_INVALID_ARG;
  return guarded(&run->last_error, [&] {
    const celu::Options loaded = celu::Options::from_file(path);
    for (const auto& [key, value] : loaded.all()) run->options.set(key, value);
  });
}

celu_status celu_run_execute(celu_run* run) {
  if (!run) return CELU_ERR_INVALID_ARG;
  return guarded(&run->last_error, [&] {
    celu::TrainConfig cfg = celu::config_from_options(run->options);
    const celu::AlignedDataset dataset = celu::dataset_from_options(run->options);
    run->result = celu::run_training(cfg, dataset);
  });
}

const char* celu_run_last_error(const celu_run* run) {
  return run ? run->last_error.c_str() : "null run handle";
}

long celu_run_metric_count(const celu_run* run) {
  if (!run || !run->result) return -1;
  return static_cast<long>(run->result->records.size());
}

const char* celu_run_metrics_csv(celu_run* run) {
  if (!run || !run->result) return nullptr;
  run->csv_buffer = celu::metrics_to_csv(run->result->records);
  return run->csv_buffer.c_str();
}

const char* celu_run_summary(celu_run* run) {
  if (!run || !run->result) return nullptr;
  const celu::RunResult& r = *run->result;
  const celu::MetricsRecord& last = r.records.back();
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "rounds=%zu local_steps=%zu bytes=%zu sim_time_s=%.6g "
                "final_loss=%.6g final_auc=%.6g",
                r.rounds, r.local_steps_a, r.bytes_sent, r.simulated_time_s,
                last.train_loss, last.eval_auc);
  run->summary_buffer = buf;
  return run->summary_buffer.c_str();
}

long celu_run_rounds_to_target(const celu_run* run) {
  if (!run || !run->result || !run->result->rounds_to_target) return -1;
  return static_cast<long>(*run->result->rounds_to_target);
}

celu_status celu_experiment_execute(const char* config_path) {
  if (!config_path) return CELU_ERR_INVALID_ARG;
  return guarded(&g_last_error, [&] {
    celu::run_experiment(celu::Options::from_file(config_path));
  });
}

celu_status celu_probe_delta(double lipschitz, double sigma, long dim,
                             double delta, long batch, long workset, double rho,
                             double* out_value) {
  if (!out_value || dim < 0 || batch < 0 || workset < 0) return CELU_ERR_INVALID_ARG;
  return guarded(&g_last_error, [&] {
    celu::DiagnosticsConfig diag;
    diag.lipschitz = lipschitz;
    diag.sigma = sigma;
    diag.dim = static_cast<std::size_t>(dim);
    diag.delta = delta;
    *out_value = celu::theoretical_delta(diag, static_cast<std::size_t>(batch),
                                         static_cast<std::size_t>(workset), rho);
  });
}

celu_status celu_probe_variance(const celu_run* options, double* out_term_sampling,
                                double* out_term_staleness, double* out_lhs,
                                long* out_violations) {
  if (!options) return CELU_ERR_INVALID_ARG;
  return guarded(&g_last_error, [&] {
    const celu::Options& opts = options->options;
    const celu::AlignedDataset dataset = celu::dataset_from_options(opts);
    const celu::TrainConfig cfg = celu::config_from_options(opts);
    std::vector<std::size_t> layout{dataset.dim_a() + dataset.dim_b()};
    layout.insert(layout.end(), cfg.bottom_hidden.begin(), cfg.bottom_hidden.end());
    layout.push_back(1);
    const celu::MlpModel model = celu::init_mlp(layout, cfg.seed);
    long trials = 200;
    double stale_scale = 0.02;
    if (opts.has("trials")) trials = std::stol(opts.get("trials", "200"));
    if (opts.has("stale_scale")) stale_scale = std::stod(opts.get("stale_scale", "0.02"));
    const celu::VarianceProbeResult r = celu::variance_probe(
        dataset, model, cfg.batch_size, cfg.workset_capacity,
        static_cast<std::size_t>(trials), stale_scale, cfg.seed);
    if (out_term_sampling) *out_term_sampling = r.term_sampling;
    if (out_term_staleness) *out_term_staleness = r.term_staleness;
    if (out_lhs) *out_lhs = r.lhs;
    if (out_violations) *out_violations = static_cast<long>(r.violations);
  });
}

celu_status celu_probe_rho(const celu_run* options, double* out_rho) {
  if (!options || !out_rho) return CELU_ERR_INVALID_ARG;
  return guarded(&g_last_error, [&] {
    celu::Options opts = options->options;
    opts.set("rho_probe", "true");
    opts.set("mode", "deterministic");
    celu::TrainConfig cfg = celu::config_from_options(opts);
    const celu::AlignedDataset dataset = celu::dataset_from_options(opts);
    const celu::RunResult result = celu::run_training(cfg, dataset);
    std::optional<double> rho;
    for (const celu::MetricsRecord& rec : result.records) {
      if (rec.rho_estimate) {
        rho = rho ? std::min(*rho, *rec.rho_estimate) : *rec.rho_estimate;
      }
    }
    if (!rho) {
      celu::raise(ErrorKind::metric,
                  "rho probe: the run performed no local steps, nothing to estimate");
    }
    *out_rho = *rho;
  });
}

}  // extern "C"
