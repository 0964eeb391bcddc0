#include "celu/protocol.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "celu/error.hpp"
#include "celu/rng.hpp"

namespace celu {

void TrainConfig::validate() const {
  if (batch_size == 0) raise(ErrorKind::config, "config: batch_size must be >= 1");
  if (updates_per_batch < 1) raise(ErrorKind::config, "config: R must be >= 1");
  if (workset_capacity == 0) raise(ErrorKind::config, "config: W must be >= 1");
  if (!(xi_degrees > 0.0 && xi_degrees <= 180.0)) {
    raise(ErrorKind::config, "config: xi must lie in (0, 180] degrees");
  }
  if (algorithm == Algorithm::vanilla && updates_per_batch != 1) {
    raise(ErrorKind::config, "config: vanilla requires R = 1");
  }
  if (algorithm == Algorithm::fedbcd && workset_capacity != 1) {
    raise(ErrorKind::config, "config: fedbcd requires W = 1");
  }
  if (learning_rate <= 0.0) raise(ErrorKind::config, "config: learning rate must be positive");
  if (epochs == 0) raise(ErrorKind::config, "config: epochs must be >= 1");
  if (dz == 0) raise(ErrorKind::config, "config: dz must be >= 1");
  if (eval_every == 0) raise(ErrorKind::config, "config: eval_every must be >= 1");
  if (channel.bandwidth_bps <= 0.0) raise(ErrorKind::config, "config: bandwidth must be positive");
  if (channel.latency_s < 0.0) raise(ErrorKind::config, "config: latency must be >= 0");
  if (rho_probe && mode == ScheduleMode::concurrent) {
    raise(ErrorKind::config, "config: the rho probe needs the deterministic schedule");
  }
  if (mode == ScheduleMode::deterministic &&
      channel.mode == ChannelConfig::Mode::socket) {
    // The single-threaded lockstep relies on kernel socket buffering.
    const std::size_t frame = kFrameHeaderBytes + 4 * batch_size * dz;
    if (frame > 128 * 1024) {
      raise(ErrorKind::config,
            "config: frame of " + std::to_string(frame) +
                " bytes is too large for deterministic socket mode; use the "
                "concurrent schedule or the in-process transport");
    }
  }
}

std::vector<double> ins_weight(const Matrix& ad_hoc, const Matrix& stale,
                               double xi_degrees) {
  if (!(xi_degrees > 0.0 && xi_degrees <= 180.0)) {
    raise(ErrorKind::config, "ins_weight: xi must lie in (0, 180] degrees");
  }
  const double threshold = std::cos(xi_degrees * M_PI / 180.0);
  std::vector<double> weights = row_cosine(ad_hoc, stale);
  for (double& w : weights) {
    if (w < threshold) w = 0.0;
  }
  return weights;
}

std::vector<std::size_t> bottom_layout(const TrainConfig& cfg, std::size_t d_in) {
  std::vector<std::size_t> layout{d_in};
  layout.insert(layout.end(), cfg.bottom_hidden.begin(), cfg.bottom_hidden.end());
  layout.push_back(cfg.dz);
  return layout;
}

std::vector<std::size_t> top_layout(const TrainConfig& cfg) {
  std::vector<std::size_t> layout{2 * cfg.dz};
  layout.insert(layout.end(), cfg.top_hidden.begin(), cfg.top_hidden.end());
  layout.push_back(1);
  return layout;
}

ModelSet make_models(const TrainConfig& cfg, std::size_t d_a, std::size_t d_b) {
  ModelSet models;
  // Bottom outputs are hidden activations of the overall network, so every
  // bottom layer is relu; the top ends in linear logits.
  const std::vector<std::size_t> layout_a = bottom_layout(cfg, d_a);
  const std::vector<std::size_t> layout_b = bottom_layout(cfg, d_b);
  models.bottom_a = init_mlp(layout_a, std::vector<Activation>(layout_a.size() - 1, Activation::relu),
                             Rng::derive(cfg.seed, 11).next_u64());
  models.bottom_b = init_mlp(layout_b, std::vector<Activation>(layout_b.size() - 1, Activation::relu),
                             Rng::derive(cfg.seed, 12).next_u64());
  models.top = init_mlp(top_layout(cfg), Rng::derive(cfg.seed, 13).next_u64());
  return models;
}

namespace {

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

std::vector<double> logits_of(const Matrix& out) {
  std::vector<double> logits(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) logits[r] = out(r, 0);
  return logits;
}

Matrix column_matrix(const std::vector<double>& values) {
  Matrix m(values.size(), 1);
  for (std::size_t r = 0; r < values.size(); ++r) m(r, 0) = values[r];
  return m;
}

std::size_t count_zeroed(const std::vector<double>& weights) {
  std::size_t zeroed = 0;
  for (double w : weights) zeroed += w == 0.0 ? 1 : 0;
  return zeroed;
}

}  // namespace

PartyAState::PartyAState(Matrix features_a, MlpModel bottom_model,
                         const TrainConfig& cfg)
    : features(std::move(features_a)),
      bottom(std::move(bottom_model)),
      optimizer(make_adagrad_state(bottom)),
      workset(cfg.workset_capacity, cfg.local_steps_per_round()),
      plan(cfg.seed, features.rows(), cfg.batch_size, cfg.epochs) {}

Message PartyAState::start_exchange(std::uint64_t round, double lr) {
  std::lock_guard<std::mutex> lock(model_mu_);
  if (pending_) raise(ErrorKind::logic, "start_exchange: previous round unfinished");
  std::vector<std::size_t> batch = plan.batch_indices(round);
  auto [z, trace] = forward(bottom, take_rows(features, batch));
  Message msg{MessageKind::forward_act, round, z};
  pending_ = Pending{round, std::move(batch), std::move(z), std::move(trace), lr};
  return msg;
}

void PartyAState::finish_exchange(const Message& backward_msg) {
  std::lock_guard<std::mutex> lock(model_mu_);
  if (!pending_) raise(ErrorKind::logic, "finish_exchange without start_exchange");
  if (backward_msg.kind != MessageKind::backward_der ||
      backward_msg.batch_id != pending_->round) {
    raise(ErrorKind::protocol,
          "party A desync: expected backward derivatives for round " +
              std::to_string(pending_->round) + ", got kind " +
              std::to_string(static_cast<int>(backward_msg.kind)) + " round " +
              std::to_string(backward_msg.batch_id));
  }
  const Matrix& dz = backward_msg.payload;
  if (!dz.same_shape(pending_->z)) {
    raise(ErrorKind::protocol, "party A desync: derivative shape mismatch");
  }
  BackwardResult grads = backward(bottom, pending_->trace, dz, ones(dz.rows()));
  adagrad_step(bottom, grads.params, optimizer, pending_->lr);
  CacheEntry entry;
  entry.batch_id = pending_->round;
  entry.z_stale = std::move(pending_->z);  // own double-precision view
  entry.dz_stale = dz;                     // as received (f32 round-tripped)
  entry.insert_time = pending_->round;
  entry.batch_indices = std::move(pending_->batch);
  workset.insert(std::move(entry), pending_->round);
  counters.rounds += 1;
  pending_.reset();
}

std::optional<LocalStepReport> PartyAState::local_step(const TrainConfig& cfg,
                                                       const RhoHook* rho_hook) {
  std::optional<CacheEntry> entry = workset.take_next();
  if (!entry) return std::nullopt;
  return apply_local_update(*entry, cfg, rho_hook);
}

LocalStepReport PartyAState::apply_local_update(const CacheEntry& entry,
                                                const TrainConfig& cfg,
                                                const RhoHook* rho_hook) {
  std::lock_guard<std::mutex> lock(model_mu_);
  auto [z_adhoc, trace] = forward(bottom, take_rows(features, entry.batch_indices));
  std::vector<double> weights = cfg.weighting_active()
                                    ? ins_weight(z_adhoc, entry.z_stale, cfg.xi_degrees)
                                    : ones(z_adhoc.rows());
  BackwardResult grads = backward(bottom, trace, entry.dz_stale, weights);
  LocalStepReport report;
  report.zeroed = count_zeroed(weights);
  report.total = weights.size();
  if (rho_hook && *rho_hook) {
    report.rho = (*rho_hook)(entry.batch_indices, flatten_grads(grads.params));
  }
  adagrad_step(bottom, grads.params, optimizer, cfg.learning_rate);
  counters.local_steps += 1;
  counters.weights_zeroed += report.zeroed;
  counters.weights_total += report.total;
  return report;
}

PartyBState::PartyBState(Matrix features_b, std::vector<int> labels_y,
                         MlpModel bottom_model, MlpModel top_model,
                         const TrainConfig& cfg)
    : features(std::move(features_b)),
      labels(std::move(labels_y)),
      bottom(std::move(bottom_model)),
      top(std::move(top_model)),
      opt_bottom(make_adagrad_state(bottom)),
      opt_top(make_adagrad_state(top)),
      workset(cfg.workset_capacity, cfg.local_steps_per_round()),
      plan(cfg.seed, features.rows(), cfg.batch_size, cfg.epochs) {}

Message PartyBState::process_exchange(const Message& forward_msg,
                                      std::uint64_t round, double lr) {
  std::lock_guard<std::mutex> lock(model_mu_);
  if (forward_msg.kind != MessageKind::forward_act || forward_msg.batch_id != round) {
    raise(ErrorKind::protocol,
          "party B desync: expected forward activations for round " +
              std::to_string(round) + ", got kind " +
              std::to_string(static_cast<int>(forward_msg.kind)) + " round " +
              std::to_string(forward_msg.batch_id));
  }
  std::vector<std::size_t> batch = plan.batch_indices(round);
  const std::size_t dz_a = top.input_dim() - bottom.output_dim();
  const Matrix& za = forward_msg.payload;
  if (za.rows() != batch.size() || za.cols() != dz_a) {
    raise(ErrorKind::protocol, "party B desync: activation shape mismatch");
  }
  auto [zb, trace_b] = forward(bottom, take_rows(features, batch));
  auto [out, trace_t] = forward(top, hconcat(za, zb));
  const LossResult loss = logistic_loss(take_labels(labels, batch), logits_of(out));
  const Matrix upstream = column_matrix(loss.dloss_dlogit);

  // Per-instance derivatives of the loss w.r.t. Z_A; this is the wire value,
  // unnormalized so the receiver's mean-over-B backward applies 1/B once.
  BackwardResult raw = backward_raw(top, trace_t, upstream);
  Matrix dza = slice_cols(raw.input_grad, 0, dz_a);
  Message reply{MessageKind::backward_der, round, dza};

  BackwardResult top_grads = backward(top, trace_t, upstream, ones(upstream.rows()));
  Matrix zb_up = slice_cols(top_grads.input_grad, dz_a, dz_a + zb.cols());
  BackwardResult bottom_grads = backward_raw(bottom, trace_b, zb_up);
  adagrad_step(top, top_grads.params, opt_top, lr);
  adagrad_step(bottom, bottom_grads.params, opt_bottom, lr);

  CacheEntry entry;
  entry.batch_id = round;
  entry.z_stale = za;              // as received (f32 round-tripped)
  entry.dz_stale = std::move(dza); // own double-precision view
  entry.insert_time = round;
  entry.batch_indices = std::move(batch);
  workset.insert(std::move(entry), round);
  counters.rounds += 1;
  return reply;
}

std::optional<LocalStepReport> PartyBState::local_step(const TrainConfig& cfg,
                                                       const RhoHook* rho_hook) {
  std::optional<CacheEntry> entry = workset.take_next();
  if (!entry) return std::nullopt;
  return apply_local_update(*entry, cfg, rho_hook);
}

LocalStepReport PartyBState::apply_local_update(const CacheEntry& entry,
                                                const TrainConfig& cfg,
                                                const RhoHook* rho_hook) {
  std::lock_guard<std::mutex> lock(model_mu_);
  const std::size_t dz_a = top.input_dim() - bottom.output_dim();
  auto [zb, trace_b] = forward(bottom, take_rows(features, entry.batch_indices));
  auto [out, trace_t] = forward(top, hconcat(entry.z_stale, zb));
  const LossResult loss =
      logistic_loss(take_labels(labels, entry.batch_indices), logits_of(out));
  const Matrix upstream = column_matrix(loss.dloss_dlogit);

  std::vector<double> weights;
  if (cfg.weighting_active()) {
    // Ad hoc derivatives w.r.t. the stale Z_A input; the extra backward pass
    // exists only to measure the weights.
    BackwardResult raw = backward_raw(top, trace_t, upstream);
    const Matrix dza_adhoc = slice_cols(raw.input_grad, 0, dz_a);
    weights = ins_weight(dza_adhoc, entry.dz_stale, cfg.xi_degrees);
  } else {
    weights = ones(upstream.rows());
  }

  BackwardResult top_grads = backward(top, trace_t, upstream, weights);
  Matrix zb_up = slice_cols(top_grads.input_grad, dz_a, dz_a + zb.cols());
  BackwardResult bottom_grads = backward_raw(bottom, trace_b, zb_up);

  LocalStepReport report;
  report.zeroed = count_zeroed(weights);
  report.total = weights.size();
  if (rho_hook && *rho_hook) {
    std::vector<double> est = flatten_grads(top_grads.params);
    const std::vector<double> est_bottom = flatten_grads(bottom_grads.params);
    est.insert(est.end(), est_bottom.begin(), est_bottom.end());
    report.rho = (*rho_hook)(entry.batch_indices, est);
  }
  adagrad_step(top, top_grads.params, opt_top, cfg.learning_rate);
  adagrad_step(bottom, bottom_grads.params, opt_bottom, cfg.learning_rate);
  counters.local_steps += 1;
  counters.weights_zeroed += report.zeroed;
  counters.weights_total += report.total;
  return report;
}

namespace {

// Omniscient full-dataset evaluation; a pure observer of both parties.
// The wire's float32 quantization of Z_A is part of the modeled system, so
// it applies here too.
void evaluate_models(const AlignedDataset& data, const MlpModel& bottom_a,
                     const MlpModel& bottom_b, const MlpModel& top,
                     double* train_loss, double* eval_auc) {
  const Matrix za = quantize_f32(forward(bottom_a, data.features_a).first);
  const Matrix zb = forward(bottom_b, data.features_b).first;
  const Matrix out = forward(top, hconcat(za, zb)).first;
  const std::vector<double> logits = logits_of(out);
  const LossResult loss = logistic_loss(data.labels, logits);
  double total = 0.0;
  for (double v : loss.loss) total += v;
  *train_loss = total / static_cast<double>(loss.loss.size());
  *eval_auc = auc(data.labels, logits);
}

Message control_message(std::uint64_t id) {
  return Message{MessageKind::control, id, Matrix(0, 0)};
}

void expect_control(const Message& msg) {
  if (msg.kind != MessageKind::control) {
    raise(ErrorKind::protocol, "expected control frame, got kind " +
                                   std::to_string(static_cast<int>(msg.kind)));
  }
}

// Mutable run state shared by the deterministic and concurrent drivers.
struct RunState {
  const TrainConfig& cfg;
  const AlignedDataset& data;
  PartyAState& a;
  PartyBState& b;
  Endpoint& ep_a;
  Endpoint& ep_b;
  SimClock& clock;
  std::vector<MetricsRecord> records;
  std::vector<double> rho_window;
  std::size_t last_zeroed = 0;
  std::size_t last_total = 0;
  bool target_reached = false;

  // Callers must hold (or not need) both model mutexes.
  void append_record(std::size_t round) {
    MetricsRecord rec;
    rec.round = round;
    rec.local_steps = a.counters.local_steps;
    rec.bytes_sent = ep_a.stats().bytes_sent + ep_b.stats().bytes_sent;
    rec.simulated_time_s = clock.now();
    evaluate_models(data, a.bottom, b.bottom, b.top, &rec.train_loss, &rec.eval_auc);
    const std::size_t zeroed = a.counters.weights_zeroed + b.counters.weights_zeroed;
    const std::size_t total = a.counters.weights_total + b.counters.weights_total;
    rec.weights_zeroed_fraction =
        total > last_total
            ? static_cast<double>(zeroed - last_zeroed) / static_cast<double>(total - last_total)
            : 0.0;
    last_zeroed = zeroed;
    last_total = total;
    rec.rho_estimate = quantile(rho_window, 0.05);
    rho_window.clear();
    records.push_back(rec);
    if ((cfg.target_loss && rec.train_loss <= *cfg.target_loss) ||
        (cfg.target_auc && rec.eval_auc >= *cfg.target_auc)) {
      target_reached = true;
    }
  }
};

RhoHook make_rho_hook_a(PartyAState& a, PartyBState& b, std::vector<double>& window) {
  return [&a, &b, &window](const std::vector<std::size_t>& batch,
                           const std::vector<double>& estimated) -> std::optional<double> {
    // True mini-batch gradient for party A at the current parameters of both
    // parties: what a fresh exchange on this batch would deliver. Pure
    // shadow computation; nothing here touches optimizer state or RNG.
    auto [za, trace_a] = forward(a.bottom, take_rows(a.features, batch));
    const Matrix za_q = quantize_f32(za);
    const Matrix zb = forward(b.bottom, take_rows(b.features, batch)).first;
    auto [out, trace_t] = forward(b.top, hconcat(za_q, zb));
    const LossResult loss = logistic_loss(take_labels(b.labels, batch), logits_of(out));
    BackwardResult raw = backward_raw(b.top, trace_t, column_matrix(loss.dloss_dlogit));
    const std::size_t dz_a = b.top.input_dim() - b.bottom.output_dim();
    const Matrix dza = quantize_f32(slice_cols(raw.input_grad, 0, dz_a));
    BackwardResult truth = backward(a.bottom, trace_a, dza, ones(dza.rows()));
    std::optional<double> rho = empirical_rho(estimated, flatten_grads(truth.params));
    if (rho) window.push_back(*rho);
    return rho;
  };
}

RhoHook make_rho_hook_b(PartyAState& a, PartyBState& b, std::vector<double>& window) {
  return [&a, &b, &window](const std::vector<std::size_t>& batch,
                           const std::vector<double>& estimated) -> std::optional<double> {
    const Matrix za_q = quantize_f32(forward(a.bottom, take_rows(a.features, batch)).first);
    auto [zb, trace_b] = forward(b.bottom, take_rows(b.features, batch));
    auto [out, trace_t] = forward(b.top, hconcat(za_q, zb));
    const LossResult loss = logistic_loss(take_labels(b.labels, batch), logits_of(out));
    BackwardResult top_grads =
        backward(b.top, trace_t, column_matrix(loss.dloss_dlogit), ones(batch.size()));
    const std::size_t dz_a = b.top.input_dim() - b.bottom.output_dim();
    Matrix zb_up = slice_cols(top_grads.input_grad, dz_a, dz_a + zb.cols());
    BackwardResult bottom_grads = backward_raw(b.bottom, trace_b, zb_up);
    std::vector<double> truth = flatten_grads(top_grads.params);
    const std::vector<double> truth_bottom = flatten_grads(bottom_grads.params);
    truth.insert(truth.end(), truth_bottom.begin(), truth_bottom.end());
    std::optional<double> rho = empirical_rho(estimated, truth);
    if (rho) window.push_back(*rho);
    return rho;
  };
}

void run_deterministic(RunState& state, std::size_t total_rounds) {
  const TrainConfig& cfg = state.cfg;
  RhoHook hook_a, hook_b;
  if (cfg.rho_probe) {
    hook_a = make_rho_hook_a(state.a, state.b, state.rho_window);
    hook_b = make_rho_hook_b(state.a, state.b, state.rho_window);
  }
  const RhoHook* ha = cfg.rho_probe ? &hook_a : nullptr;
  const RhoHook* hb = cfg.rho_probe ? &hook_b : nullptr;

  state.ep_a.send(control_message(0));
  expect_control(state.ep_b.recv());
  state.ep_b.send(control_message(0));
  expect_control(state.ep_a.recv());

  state.append_record(0);
  for (std::size_t round = 0; round < total_rounds; ++round) {
    Message fwd = state.a.start_exchange(round, cfg.learning_rate);
    state.ep_a.send(fwd);
    Message received = state.ep_b.recv();
    Message reply = state.b.process_exchange(received, round, cfg.learning_rate);
    state.ep_b.send(reply);
    state.a.finish_exchange(state.ep_a.recv());

    // Local phase: one interleaved draw per party, up to R-1 each, stopping
    // early once both tables bubble.
    for (int j = 0; j < cfg.local_steps_per_round(); ++j) {
      const auto report_a = state.a.local_step(cfg, ha);
      const auto report_b = state.b.local_step(cfg, hb);
      if (!report_a && !report_b) break;
    }

    if ((round + 1) % cfg.eval_every == 0) {
      state.append_record(round + 1);
      if (cfg.stop_at_target && state.target_reached) break;
    }
  }

  state.ep_a.send(control_message(1));
  expect_control(state.ep_b.recv());
  state.ep_b.send(control_message(1));
  expect_control(state.ep_a.recv());
}

void run_concurrent(RunState& state, std::size_t total_rounds) {
  const TrainConfig& cfg = state.cfg;
  std::atomic<bool> stop_requested{false};
  std::atomic<bool> comm_done{false};
  std::atomic<std::size_t> rounds_done{0};
  std::exception_ptr errors[4] = {};

  std::thread comm_a([&] {
    try {
      state.ep_a.send(control_message(0));
      expect_control(state.ep_a.recv());
      for (std::size_t round = 0; round < total_rounds; ++round) {
        if (stop_requested.load()) break;
        Message fwd = state.a.start_exchange(round, cfg.learning_rate);
        state.ep_a.send(fwd);
        state.a.finish_exchange(state.ep_a.recv());
        rounds_done.store(round + 1);
      }
      state.ep_a.send(control_message(1));
      expect_control(state.ep_a.recv());
    } catch (...) {
      errors[0] = std::current_exception();
      state.ep_a.close();
    }
  });

  std::thread comm_b([&] {
    try {
      expect_control(state.ep_b.recv());
      state.ep_b.send(control_message(0));
      while (true) {
        Message msg = state.ep_b.recv();
        if (msg.kind == MessageKind::control) {
          state.ep_b.send(control_message(msg.batch_id));
          break;
        }
        Message reply =
            state.b.process_exchange(msg, state.b.counters.rounds, cfg.learning_rate);
        state.ep_b.send(reply);
      }
    } catch (...) {
      errors[1] = std::current_exception();
      state.ep_b.close();
    }
  });

  std::thread local_a([&] {
    try {
      while (true) {
        if (!state.a.local_step(cfg)) {
          if (comm_done.load()) break;
          std::this_thread::yield();
        }
      }
    } catch (...) {
      errors[2] = std::current_exception();
    }
  });

  std::thread local_b([&] {
    try {
      while (true) {
        if (!state.b.local_step(cfg)) {
          if (comm_done.load()) break;
          std::this_thread::yield();
        }
      }
    } catch (...) {
      errors[3] = std::current_exception();
    }
  });

  // Observer loop: metric snapshots at the eval cadence.
  std::size_t next_eval = cfg.eval_every;
  {
    std::unique_lock<std::mutex> lock_a(state.a.model_mutex(), std::defer_lock);
    std::unique_lock<std::mutex> lock_b(state.b.model_mutex(), std::defer_lock);
    std::lock(lock_a, lock_b);
    state.append_record(0);
  }
  while (comm_a.joinable() &&
         rounds_done.load() < total_rounds && !stop_requested.load()) {
    if (rounds_done.load() >= next_eval) {
      std::unique_lock<std::mutex> lock_a(state.a.model_mutex(), std::defer_lock);
      std::unique_lock<std::mutex> lock_b(state.b.model_mutex(), std::defer_lock);
      std::lock(lock_a, lock_b);
      state.append_record(rounds_done.load());
      next_eval += cfg.eval_every;
      if (cfg.stop_at_target && state.target_reached) stop_requested.store(true);
    } else {
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    if (errors[0] || errors[1]) break;
  }

  comm_a.join();
  comm_b.join();
  comm_done.store(true);
  local_a.join();
  local_b.join();
  for (const std::exception_ptr& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace

RunResult run_training(const TrainConfig& cfg, const AlignedDataset& dataset) {
  cfg.validate();
  if (dataset.size() == 0 || dataset.features_a.rows() != dataset.size() ||
      dataset.features_b.rows() != dataset.size()) {
    raise(ErrorKind::config, "run_training: inconsistent dataset dimensions");
  }

  SimClock clock;
  EndpointPair endpoints = make_endpoint_pair(cfg.channel, &clock);
  ModelSet models = make_models(cfg, dataset.dim_a(), dataset.dim_b());
  PartyAState a(dataset.features_a, std::move(models.bottom_a), cfg);
  PartyBState b(dataset.features_b, dataset.labels, std::move(models.bottom_b),
                std::move(models.top), cfg);

  std::size_t total_rounds = a.plan.total_steps();
  if (cfg.max_rounds > 0 && cfg.max_rounds < total_rounds) {
    total_rounds = cfg.max_rounds;
  }

  RunState state{cfg, dataset, a, b, *endpoints.first, *endpoints.second, clock};
  if (cfg.mode == ScheduleMode::deterministic) {
    run_deterministic(state, total_rounds);
  } else {
    run_concurrent(state, total_rounds);
  }

  if (state.records.empty() || state.records.back().round != a.counters.rounds) {
    state.append_record(a.counters.rounds);
  }

  RunResult result;
  result.records = std::move(state.records);
  result.log_a_to_b = endpoints.first->sent_log();
  result.log_b_to_a = endpoints.second->sent_log();
  result.params_bottom_a = flatten_params(a.bottom);
  result.params_bottom_b = flatten_params(b.bottom);
  result.params_top = flatten_params(b.top);
  result.rounds = a.counters.rounds;
  result.local_steps_a = a.counters.local_steps;
  result.local_steps_b = b.counters.local_steps;
  result.frames_sent =
      endpoints.first->stats().frames_sent + endpoints.second->stats().frames_sent;
  result.bytes_sent =
      endpoints.first->stats().bytes_sent + endpoints.second->stats().bytes_sent;
  result.simulated_time_s = clock.now();
  const std::optional<std::size_t> hit =
      rounds_to_target(result.records, cfg.target_loss, cfg.target_auc);
  if (hit) result.rounds_to_target = result.records[*hit].round;
  return result;
}

}  // namespace celu
