#include "celu/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "celu/error.hpp"
#include "celu/metrics.hpp"

namespace celu {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "algo", "batch_size", "local_steps", "workset", "xi", "weighting", "lr",
      "epochs", "seed", "dz", "bottom_hidden", "top_hidden", "bandwidth",
      "latency", "transport", "host", "port", "mode", "data", "out",
      "eval_every", "max_rounds", "target_loss", "target_auc",
      "stop_at_target", "rho_probe", "real_sleep", "simulate_delay",
      "label_col", "party_a_cols", "party_b_cols", "trials", "stale_scale",
  };
  return keys;
}

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  std::size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

long parse_long(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  raise(ErrorKind::config, "option " + key + ": '" + value + "' is not an integer");
}

double parse_double(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  raise(ErrorKind::config, "option " + key + ": '" + value + "' is not a number");
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "on" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "off" || value == "0" || value == "no") return false;
  raise(ErrorKind::config, "option " + key + ": '" + value + "' is not a boolean");
}

Algorithm parse_algorithm(const std::string& value) {
  if (value == "vanilla") return Algorithm::vanilla;
  if (value == "fedbcd") return Algorithm::fedbcd;
  if (value == "celu") return Algorithm::celu;
  raise(ErrorKind::config, "algo: '" + value + "' is not one of vanilla|fedbcd|celu");
}

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::vanilla: return "vanilla";
    case Algorithm::fedbcd: return "fedbcd";
    case Algorithm::celu: return "celu";
  }
  return "?";
}

std::vector<std::size_t> parse_width_list(const std::string& value, const std::string& key) {
  std::vector<std::size_t> widths;
  if (trim(value).empty()) return widths;
  for (const std::string& item : split_list(value)) {
    const long v = parse_long(item, key);
    if (v <= 0) raise(ErrorKind::config, "option " + key + ": widths must be positive");
    widths.push_back(static_cast<std::size_t>(v));
  }
  return widths;
}

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void Options::set(const std::string& key, const std::string& value) {
  if (known_keys().count(key) == 0) {
    raise(ErrorKind::config, "unknown option '" + key + "'");
  }
  values_[key] = value;
}

Options Options::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::io, "cannot open config file '" + path + "'");
  Options opts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      raise(ErrorKind::parse, path + ":" + std::to_string(lineno) +
                                  ": expected key=value, got '" + stripped + "'");
    }
    opts.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return opts;
}

bool Options::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Options::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

TrainConfig config_from_options(const Options& opts) {
  TrainConfig cfg;
  cfg.algorithm = parse_algorithm(opts.get("algo", "vanilla"));
  cfg.batch_size = static_cast<std::size_t>(parse_long(opts.get("batch_size", "256"), "batch_size"));
  cfg.updates_per_batch = static_cast<int>(parse_long(opts.get("local_steps", "1"), "local_steps"));
  cfg.workset_capacity = static_cast<std::size_t>(parse_long(opts.get("workset", "1"), "workset"));
  cfg.xi_degrees = parse_double(opts.get("xi", "90"), "xi");
  cfg.weighting = parse_bool(opts.get("weighting", "true"), "weighting");
  cfg.learning_rate = parse_double(opts.get("lr", "0.05"), "lr");
  cfg.epochs = static_cast<std::size_t>(parse_long(opts.get("epochs", "1"), "epochs"));
  cfg.seed = static_cast<std::uint64_t>(parse_long(opts.get("seed", "1"), "seed"));
  cfg.dz = static_cast<std::size_t>(parse_long(opts.get("dz", "16"), "dz"));
  cfg.bottom_hidden = parse_width_list(opts.get("bottom_hidden", "32"), "bottom_hidden");
  cfg.top_hidden = parse_width_list(opts.get("top_hidden", ""), "top_hidden");
  cfg.channel.bandwidth_bps = parse_double(opts.get("bandwidth", "300000000"), "bandwidth");
  cfg.channel.latency_s = parse_double(opts.get("latency", "0"), "latency");
  const std::string transport = opts.get("transport", "inproc");
  if (transport == "inproc") {
    cfg.channel.mode = ChannelConfig::Mode::in_process;
  } else if (transport == "socket") {
    cfg.channel.mode = ChannelConfig::Mode::socket;
  } else {
    raise(ErrorKind::config, "transport: '" + transport + "' is not inproc|socket");
  }
  cfg.channel.host = opts.get("host", "127.0.0.1");
  cfg.channel.port = static_cast<int>(parse_long(opts.get("port", "0"), "port"));
  cfg.channel.simulate_delay = parse_bool(opts.get("simulate_delay", "true"), "simulate_delay");
  cfg.channel.real_sleep = parse_bool(opts.get("real_sleep", "false"), "real_sleep");
  const std::string mode = opts.get("mode", "deterministic");
  if (mode == "deterministic") {
    cfg.mode = ScheduleMode::deterministic;
  } else if (mode == "concurrent") {
    cfg.mode = ScheduleMode::concurrent;
  } else {
    raise(ErrorKind::config, "mode: '" + mode + "' is not deterministic|concurrent");
  }
  cfg.eval_every = static_cast<std::size_t>(parse_long(opts.get("eval_every", "100"), "eval_every"));
  cfg.max_rounds = static_cast<std::size_t>(parse_long(opts.get("max_rounds", "0"), "max_rounds"));
  cfg.rho_probe = parse_bool(opts.get("rho_probe", "false"), "rho_probe");
  if (opts.has("target_loss")) cfg.target_loss = parse_double(opts.get("target_loss", ""), "target_loss");
  if (opts.has("target_auc")) cfg.target_auc = parse_double(opts.get("target_auc", ""), "target_auc");
  cfg.stop_at_target = parse_bool(opts.get("stop_at_target", "false"), "stop_at_target");
  return cfg;
}

AlignedDataset dataset_from_options(const Options& opts) {
  const std::string spec = opts.get("data", "synth:2000,12,8");
  const std::size_t colon = spec.find(':');
  const std::string kind = spec.substr(0, colon == std::string::npos ? spec.size() : colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "synth") {
    const std::vector<std::string> dims = split_list(rest);
    if (dims.size() != 3) {
      raise(ErrorKind::config, "data: synth needs n,dA,dB, got '" + rest + "'");
    }
    const std::uint64_t seed =
        static_cast<std::uint64_t>(parse_long(opts.get("seed", "1"), "seed"));
    return generate_synthetic(static_cast<std::size_t>(parse_long(dims[0], "data")),
                              static_cast<std::size_t>(parse_long(dims[1], "data")),
                              static_cast<std::size_t>(parse_long(dims[2], "data")),
                              seed);
  }
  if (kind == "csv") {
    if (!opts.has("label_col") || !opts.has("party_a_cols") || !opts.has("party_b_cols")) {
      raise(ErrorKind::config,
            "data: csv needs label_col, party_a_cols and party_b_cols options");
    }
    return load_csv(rest, opts.get("label_col", ""),
                    split_list(opts.get("party_a_cols", "")),
                    split_list(opts.get("party_b_cols", "")));
  }
  raise(ErrorKind::config, "data: '" + spec + "' is not synth:n,dA,dB or csv:PATH");
}

namespace {

std::string cell_name(Algorithm algo, int r, std::size_t w, double xi, bool weighting,
                      std::uint64_t seed) {
  std::string name = std::string("run_") + algorithm_name(algo) + "_R" +
                     std::to_string(r) + "_W" + std::to_string(w);
  if (algo == Algorithm::celu) {
    name += weighting ? "_xi" + fmt_double(xi) : "_noweight";
  }
  name += "_seed" + std::to_string(seed);
  return name;
}

}  // namespace

ExperimentResult run_experiment(const Options& opts) {
  const std::string out_dir = opts.get("out", "");
  if (out_dir.empty()) raise(ErrorKind::config, "experiment: 'out' directory required");
  std::filesystem::create_directories(out_dir);

  const std::vector<std::string> algos = split_list(opts.get("algo", "vanilla"));
  const std::vector<std::string> rs = split_list(opts.get("local_steps", "1"));
  const std::vector<std::string> ws = split_list(opts.get("workset", "1"));
  const std::vector<std::string> xis = split_list(opts.get("xi", "90"));
  const std::vector<std::string> weightings = split_list(opts.get("weighting", "true"));
  const std::vector<std::string> seeds = split_list(opts.get("seed", "1"));

  // The dataset is seeded independently of the training seed so that every
  // cell trains on the same data.
  Options data_opts = opts;
  if (!seeds.empty()) data_opts.set("seed", seeds.front());
  const AlignedDataset dataset = dataset_from_options(data_opts);

  ExperimentResult result;
  std::set<std::string> seen;
  for (const std::string& algo_s : algos) {
    for (const std::string& r_s : rs) {
      for (const std::string& w_s : ws) {
        for (const std::string& xi_s : xis) {
          for (const std::string& weighting_s : weightings) {
            // Dimensions an algorithm does not have collapse to their
            // degenerate values, and the resulting duplicates are skipped:
            // vanilla is R=1/W=1 by definition, fedbcd is the W=1 regime
            // with weighting off.
            const Algorithm algo = parse_algorithm(algo_s);
            std::string eff_r = r_s, eff_w = w_s, eff_weighting = weighting_s;
            if (algo == Algorithm::vanilla) {
              eff_r = "1";
              eff_w = "1";
              eff_weighting = "false";
            } else if (algo == Algorithm::fedbcd) {
              eff_w = "1";
              eff_weighting = "false";
            }
            const std::string dedupe_key =
                cell_name(algo, static_cast<int>(parse_long(eff_r, "local_steps")),
                          static_cast<std::size_t>(parse_long(eff_w, "workset")),
                          parse_double(xi_s, "xi"),
                          parse_bool(eff_weighting, "weighting"), 0);
            if (!seen.insert(dedupe_key).second) continue;

            ExperimentSummaryRow row;
            row.algorithm = algo_s;
            row.updates_per_batch = static_cast<int>(parse_long(eff_r, "local_steps"));
            row.workset_capacity = static_cast<std::size_t>(parse_long(eff_w, "workset"));
            row.xi_degrees = parse_double(xi_s, "xi");
            row.weighting = parse_bool(eff_weighting, "weighting");
            std::vector<double> rounds;
            for (const std::string& seed_s : seeds) {
              Options cell_opts = opts;
              cell_opts.set("algo", algo_s);
              cell_opts.set("local_steps", eff_r);
              cell_opts.set("workset", eff_w);
              cell_opts.set("xi", xi_s);
              cell_opts.set("weighting", eff_weighting);
              cell_opts.set("seed", seed_s);
              TrainConfig cfg = config_from_options(cell_opts);
              cfg.validate();

              ExperimentCell cell;
              cell.algorithm = cfg.algorithm;
              cell.updates_per_batch = cfg.updates_per_batch;
              cell.workset_capacity = cfg.workset_capacity;
              cell.xi_degrees = cfg.xi_degrees;
              cell.weighting = cfg.weighting;
              cell.seed = cfg.seed;
              cell.run_name = cell_name(cfg.algorithm, cfg.updates_per_batch,
                                        cfg.workset_capacity, cfg.xi_degrees,
                                        cfg.weighting, cfg.seed);
              cell.result = run_training(cfg, dataset);

              std::ofstream csv(out_dir + "/" + cell.run_name + ".csv");
              if (!csv) raise(ErrorKind::io, "cannot write run CSV in '" + out_dir + "'");
              csv << metrics_to_csv(cell.result.records);

              row.runs += 1;
              if (cell.result.rounds_to_target) {
                rounds.push_back(static_cast<double>(*cell.result.rounds_to_target));
              } else {
                row.dnf += 1;
              }
              result.cells.push_back(std::move(cell));
            }
            if (!rounds.empty()) {
              double mean = 0.0;
              for (double v : rounds) mean += v;
              mean /= static_cast<double>(rounds.size());
              double var = 0.0;
              for (double v : rounds) var += (v - mean) * (v - mean);
              var /= static_cast<double>(rounds.size());
              row.rounds_mean = mean;
              row.rounds_stddev = std::sqrt(var);
            }
            result.summary.push_back(std::move(row));
          }
        }
      }
    }
  }

  std::ofstream summary_csv(out_dir + "/summary.csv");
  if (!summary_csv) raise(ErrorKind::io, "cannot write summary CSV in '" + out_dir + "'");
  summary_csv << summary_to_csv(result.summary);
  return result;
}

std::string summary_to_csv(const std::vector<ExperimentSummaryRow>& rows) {
  std::string out =
      "algorithm,local_steps,workset,xi,weighting,runs,dnf,rounds_mean,rounds_stddev\n";
  for (const ExperimentSummaryRow& row : rows) {
    out += row.algorithm;
    out += ',';
    out += std::to_string(row.updates_per_batch);
    out += ',';
    out += std::to_string(row.workset_capacity);
    out += ',';
    out += fmt_double(row.xi_degrees);
    out += ',';
    out += row.weighting ? "true" : "false";
    out += ',';
    out += std::to_string(row.runs);
    out += ',';
    out += std::to_string(row.dnf);
    out += ',';
    if (row.runs > row.dnf) {
      out += fmt_double(row.rounds_mean);
      out += ',';
      out += fmt_double(row.rounds_stddev);
    } else {
      out += "DNF,DNF";
    }
    out += '\n';
  }
  return out;
}

}  // namespace celu
