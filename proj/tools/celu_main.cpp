// celu command-line front end. Links the C API only; all heavy lifting lives
// behind libcelu.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "celu/celu.h"

namespace {

struct RunDeleter {
  void operator()(celu_run* run) const { celu_run_free(run); }
};
using RunHandle = std::unique_ptr<celu_run, RunDeleter>;

int fail(const std::string& what, celu_status status, const char* detail) {
  std::fprintf(stderr, "celu: %s failed (%s): %s\n", what.c_str(),
               celu_status_name(status), detail ? detail : "");
  return 1;
}

struct TrainFlags {
  std::string algo = "vanilla";
  long batch_size = 256;
  long local_steps = 1;
  long workset = 1;
  double xi = 90.0;
  double lr = 0.05;
  long epochs = 1;
  long seed = 1;
  long dz = 16;
  std::string bottom_hidden = "32";
  std::string top_hidden;
  double bandwidth = 300e6;
  double latency = 0.0;
  std::string transport = "inproc";
  std::string host = "127.0.0.1";
  long port = 0;
  std::string mode = "deterministic";
  std::string data = "synth:2000,12,8";
  std::string out;
  long eval_every = 100;
  long max_rounds = 0;
  bool no_weighting = false;
  bool rho_probe = false;
  bool real_sleep = false;
  bool stop_at_target = false;
  double target_loss = 0.0;
  double target_auc = 0.0;
  bool has_target_loss = false;
  bool has_target_auc = false;
  std::string label_col;
  std::string party_a_cols;
  std::string party_b_cols;
};

void add_train_flags(CLI::App* cmd, TrainFlags* f) {
  cmd->add_option("--algo", f->algo, "vanilla|fedbcd|celu")->capture_default_str();
  cmd->add_option("--batch-size", f->batch_size, "mini-batch size B")->capture_default_str();
  cmd->add_option("--local-steps", f->local_steps,
                  "updates per mini-batch R (exchange update included)")
      ->capture_default_str();
  cmd->add_option("--workset", f->workset, "workset table capacity W")->capture_default_str();
  cmd->add_option("--xi", f->xi, "instance weighting threshold angle, degrees")
      ->capture_default_str();
  cmd->add_option("--lr", f->lr, "AdaGrad learning rate")->capture_default_str();
  cmd->add_option("--epochs", f->epochs, "training epochs")->capture_default_str();
  cmd->add_option("--seed", f->seed, "shared seed")->capture_default_str();
  cmd->add_option("--dz", f->dz, "width of the exchanged activations")->capture_default_str();
  cmd->add_option("--bottom-hidden", f->bottom_hidden, "bottom hidden widths, comma separated")
      ->capture_default_str();
  cmd->add_option("--top-hidden", f->top_hidden, "top hidden widths, comma separated");
  cmd->add_option("--bandwidth", f->bandwidth, "link bandwidth, bits per second")
      ->capture_default_str();
  cmd->add_option("--latency", f->latency, "link latency, seconds")->capture_default_str();
  cmd->add_option("--transport", f->transport, "inproc|socket")->capture_default_str();
  cmd->add_option("--host", f->host, "socket transport host")->capture_default_str();
  cmd->add_option("--port", f->port, "socket transport port (0 = auto)")->capture_default_str();
  cmd->add_option("--mode", f->mode, "deterministic|concurrent")->capture_default_str();
  cmd->add_option("--data", f->data, "synth:n,dA,dB or csv:PATH")->capture_default_str();
  cmd->add_option("--out", f->out, "output directory for metrics.csv");
  cmd->add_option("--eval-every", f->eval_every, "rounds between metric records")
      ->capture_default_str();
  cmd->add_option("--max-rounds", f->max_rounds, "stop after this many rounds (0 = all epochs)")
      ->capture_default_str();
  cmd->add_flag("--no-weighting", f->no_weighting, "disable instance weighting (celu)");
  cmd->add_flag("--rho-probe", f->rho_probe, "record gradient-direction diagnostics");
  cmd->add_flag("--real-sleep", f->real_sleep, "sleep real time for simulated delays");
  cmd->add_flag("--stop-at-target", f->stop_at_target, "stop once the target metric is reached");
  cmd->add_option("--target-loss", f->target_loss, "train-loss target")
      ->each([f](const std::string&) { f->has_target_loss = true; });
  cmd->add_option("--target-auc", f->target_auc, "AUC target")
      ->each([f](const std::string&) { f->has_target_auc = true; });
  cmd->add_option("--label-col", f->label_col, "csv: label column name");
  cmd->add_option("--party-a-cols", f->party_a_cols, "csv: party A columns, comma separated");
  cmd->add_option("--party-b-cols", f->party_b_cols, "csv: party B columns, comma separated");
}

int apply_flags(celu_run* run, const TrainFlags& f) {
  const std::vector<std::pair<std::string, std::string>> kv = {
      {"algo", f.algo},
      {"batch_size", std::to_string(f.batch_size)},
      {"local_steps", std::to_string(f.local_steps)},
      {"workset", std::to_string(f.workset)},
      {"xi", std::to_string(f.xi)},
      {"weighting", f.no_weighting ? "false" : "true"},
      {"lr", std::to_string(f.lr)},
      {"epochs", std::to_string(f.epochs)},
      {"seed", std::to_string(f.seed)},
      {"dz", std::to_string(f.dz)},
      {"bottom_hidden", f.bottom_hidden},
      {"top_hidden", f.top_hidden},
      {"bandwidth", std::to_string(f.bandwidth)},
      {"latency", std::to_string(f.latency)},
      {"transport", f.transport},
      {"host", f.host},
      {"port", std::to_string(f.port)},
      {"mode", f.mode},
      {"data", f.data},
      {"eval_every", std::to_string(f.eval_every)},
      {"max_rounds", std::to_string(f.max_rounds)},
      {"rho_probe", f.rho_probe ? "true" : "false"},
      {"real_sleep", f.real_sleep ? "true" : "false"},
      {"stop_at_target", f.stop_at_target ? "true" : "false"},
  };
  for (const auto& [key, value] : kv) {
    const celu_status s = celu_run_set(run, key.c_str(), value.c_str());
    if (s != CELU_OK) return fail("setting option " + key, s, celu_run_last_error(run));
  }
  if (f.has_target_loss) {
    celu_run_set(run, "target_loss", std::to_string(f.target_loss).c_str());
  }
  if (f.has_target_auc) {
    celu_run_set(run, "target_auc", std::to_string(f.target_auc).c_str());
  }
  if (!f.label_col.empty()) celu_run_set(run, "label_col", f.label_col.c_str());
  if (!f.party_a_cols.empty()) celu_run_set(run, "party_a_cols", f.party_a_cols.c_str());
  if (!f.party_b_cols.empty()) celu_run_set(run, "party_b_cols", f.party_b_cols.c_str());
  return 0;
}

int cmd_train(const TrainFlags& f) {
  RunHandle run(celu_run_new());
  if (!run) return fail("allocating run", CELU_ERR_INTERNAL, nullptr);
  if (int rc = apply_flags(run.get(), f)) return rc;
  const celu_status s = celu_run_execute(run.get());
  if (s != CELU_OK) return fail("training", s, celu_run_last_error(run.get()));
  std::printf("%s\n", celu_run_summary(run.get()));
  const long hit = celu_run_rounds_to_target(run.get());
  if (hit >= 0) std::printf("rounds_to_target=%ld\n", hit);
  if (!f.out.empty()) {
    std::filesystem::create_directories(f.out);
    const std::string path = f.out + "/metrics.csv";
    std::ofstream csv(path);
    if (!csv) return fail("writing " + path, CELU_ERR_IO, nullptr);
    csv << celu_run_metrics_csv(run.get());
    std::printf("metrics: %s\n", path.c_str());
  }
  return 0;
}

int cmd_experiment(const std::string& config_path) {
  const celu_status s = celu_experiment_execute(config_path.c_str());
  if (s != CELU_OK) return fail("experiment", s, celu_last_error());
  std::printf("experiment done: %s\n", config_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-party vertical federated learning trainer and simulator"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "run one training configuration");
  add_train_flags(train, &train_flags);

  std::string config_path;
  CLI::App* experiment = app.add_subcommand("experiment", "run a config-file grid of cells");
  experiment->add_option("config", config_path, "key=value config file")->required();

  CLI::App* probe = app.add_subcommand("probe", "diagnostics calculators");
  probe->require_subcommand(1);

  TrainFlags var_flags;
  long var_trials = 200;
  double var_stale = 0.02;
  CLI::App* variance = probe->add_subcommand("variance", "gradient-error decomposition probe");
  variance->add_option("--data", var_flags.data, "synth:n,dA,dB")->capture_default_str();
  variance->add_option("--batch-size", var_flags.batch_size, "batch size")->capture_default_str();
  variance->add_option("--workset", var_flags.workset, "workset capacity")->capture_default_str();
  variance->add_option("--seed", var_flags.seed, "seed")->capture_default_str();
  variance->add_option("--trials", var_trials, "Monte-Carlo trials (>= 30)")->capture_default_str();
  variance->add_option("--stale-scale", var_stale, "parameter perturbation of the stale point")
      ->capture_default_str();

  double d_lips = 1.0, d_sigma = 1.0, d_delta = 0.1, d_rho = 1.0;
  long d_dim = 1, d_batch = 256, d_workset = 1;
  CLI::App* delta = probe->add_subcommand("delta", "convergence-factor calculator");
  delta->add_option("--lipschitz", d_lips, "L")->capture_default_str();
  delta->add_option("--sigma", d_sigma, "gradient moment bound sqrt")->capture_default_str();
  delta->add_option("--dim", d_dim, "parameter dimension d")->capture_default_str();
  delta->add_option("--delta", d_delta, "failure probability")->capture_default_str();
  delta->add_option("--batch-size", d_batch, "batch size B")->capture_default_str();
  delta->add_option("--workset", d_workset, "workset capacity W")->capture_default_str();
  delta->add_option("--rho", d_rho, "gradient-direction bound, in (0,1]")->capture_default_str();

  TrainFlags rho_flags;
  rho_flags.algo = "celu";
  rho_flags.local_steps = 3;
  rho_flags.workset = 3;
  rho_flags.epochs = 1;
  CLI::App* rho = probe->add_subcommand("rho", "empirical gradient-direction probe");
  add_train_flags(rho, &rho_flags);

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return cmd_train(train_flags);
  if (experiment->parsed()) return cmd_experiment(config_path);
  if (variance->parsed()) {
    RunHandle run(celu_run_new());
    celu_run_set(run.get(), "data", var_flags.data.c_str());
    celu_run_set(run.get(), "batch_size", std::to_string(var_flags.batch_size).c_str());
    celu_run_set(run.get(), "workset", std::to_string(var_flags.workset).c_str());
    celu_run_set(run.get(), "seed", std::to_string(var_flags.seed).c_str());
    celu_run_set(run.get(), "trials", std::to_string(var_trials).c_str());
    celu_run_set(run.get(), "stale_scale", std::to_string(var_stale).c_str());
    double sampling = 0, staleness = 0, lhs = 0;
    long violations = 0;
    const celu_status s =
        celu_probe_variance(run.get(), &sampling, &staleness, &lhs, &violations);
    if (s != CELU_OK) return fail("variance probe", s, celu_last_error());
    std::printf("term_sampling=%.10g term_staleness=%.10g lhs=%.10g violations=%ld\n",
                sampling, staleness, lhs, violations);
    std::printf("bound 2*sampling + 2*staleness = %.10g\n", 2 * sampling + 2 * staleness);
    return 0;
  }
  if (delta->parsed()) {
    double value = 0.0;
    const celu_status s =
        celu_probe_delta(d_lips, d_sigma, d_dim, d_delta, d_batch, d_workset, d_rho, &value);
    if (s != CELU_OK) return fail("delta probe", s, celu_last_error());
    std::printf("delta=%.10g\n", value);
    return 0;
  }
  if (rho->parsed()) {
    RunHandle run(celu_run_new());
    if (int rc = apply_flags(run.get(), rho_flags)) return rc;
    double value = 0.0;
    const celu_status s = celu_probe_rho(run.get(), &value);
    if (s != CELU_OK) return fail("rho probe", s, celu_last_error());
    std::printf("rho_estimate=%.10g\n", value);
    return 0;
  }
  return 0;
}
