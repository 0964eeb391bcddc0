#include "celu/model.hpp"

#include <cmath>
#include <string>

#include "celu/error.hpp"
#include "celu/rng.hpp"

namespace celu {

namespace {

Matrix apply_activation(const Matrix& pre, Activation act) {
  if (act == Activation::linear) return pre;
  Matrix out = pre;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

// Multiplies upstream by the activation derivative evaluated at `pre`.
// relu'(0) is taken as 0.
Matrix chain_activation(const Matrix& upstream, const Matrix& pre,
                        Activation act) {
  if (act == Activation::linear) return upstream;
  Matrix out = upstream;
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    if (pre.data()[i] <= 0.0) out.data()[i] = 0.0;
  }
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(-m)) without overflow for large |m|.
double softplus_neg(double m) {
  if (m > 0.0) return std::log1p(std::exp(-m));
  return -m + std::log1p(std::exp(m));
}

}  // namespace

MlpModel init_mlp(const std::vector<std::size_t>& layout,
                  const std::vector<Activation>& activations,
                  std::uint64_t seed) {
  if (layout.size() < 2) {
    raise(ErrorKind::config, "init_mlp: layout needs at least input and output widths");
  }
  if (activations.size() != layout.size() - 1) {
    raise(ErrorKind::config, "init_mlp: one activation per layer required");
  }
  for (std::size_t w : layout) {
    if (w == 0) raise(ErrorKind::config, "init_mlp: zero layer width");
  }
  Rng rng(seed);
  MlpModel model;
  for (std::size_t l = 0; l + 1 < layout.size(); ++l) {
    const std::size_t d_in = layout[l], d_out = layout[l + 1];
    Layer layer;
    layer.weights = Matrix(d_in, d_out);
    const double limit = std::sqrt(6.0 / static_cast<double>(d_in + d_out));
    for (double& w : layer.weights.data()) w = rng.uniform(-limit, limit);
    layer.bias.assign(d_out, 0.0);
    layer.activation = activations[l];
    model.layers.push_back(std::move(layer));
  }
  return model;
}

MlpModel init_mlp(const std::vector<std::size_t>& layout, std::uint64_t seed) {
  std::vector<Activation> acts(layout.size() - 1, Activation::relu);
  if (!acts.empty()) acts.back() = Activation::linear;
  return init_mlp(layout, acts, seed);
}

std::pair<Matrix, ForwardTrace> forward(const MlpModel& model, const Matrix& x) {
  if (x.cols() != model.input_dim()) {
    raise(ErrorKind::shape, "forward: input has " + std::to_string(x.cols()) +
                                " cols, model expects " +
                                std::to_string(model.input_dim()));
  }
  ForwardTrace trace;
  trace.input = x;
  const Matrix* current = &trace.input;
  for (const Layer& layer : model.layers) {
    Matrix pre = matmul(*current, layer.weights);
    for (std::size_t r = 0; r < pre.rows(); ++r) {
      double* row = pre.data().data() + r * pre.cols();
      for (std::size_t j = 0; j < pre.cols(); ++j) row[j] += layer.bias[j];
    }
    trace.post_acts.push_back(apply_activation(pre, layer.activation));
    trace.pre_acts.push_back(std::move(pre));
    current = &trace.post_acts.back();
  }
  return {trace.post_acts.back(), trace};
}

BackwardResult backward_raw(const MlpModel& model, const ForwardTrace& trace,
                            const Matrix& upstream) {
  const std::size_t depth = model.layers.size();
  if (trace.pre_acts.size() != depth) {
    raise(ErrorKind::shape, "backward: trace depth does not match model");
  }
  if (!upstream.same_shape(trace.post_acts.back())) {
    raise(ErrorKind::shape,
          "backward: upstream " + std::to_string(upstream.rows()) + "x" +
              std::to_string(upstream.cols()) + " does not match output " +
              std::to_string(trace.post_acts.back().rows()) + "x" +
              std::to_string(trace.post_acts.back().cols()));
  }
  BackwardResult result;
  result.params.resize(depth);
  Matrix grad = upstream;
  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = model.layers[l];
    grad = chain_activation(grad, trace.pre_acts[l], layer.activation);
    const Matrix& layer_in = l == 0 ? trace.input : trace.post_acts[l - 1];
    result.params[l].weights = matmul_at_b(layer_in, grad);
    result.params[l].bias = col_sums(grad);
    grad = matmul_a_bt(grad, layer.weights);
  }
  result.input_grad = std::move(grad);
  return result;
}

BackwardResult backward(const MlpModel& model, const ForwardTrace& trace,
                        const Matrix& upstream,
                        const std::vector<double>& row_weights) {
  if (row_weights.size() != upstream.rows()) {
    raise(ErrorKind::shape, "backward: " + std::to_string(row_weights.size()) +
                                " row weights for " +
                                std::to_string(upstream.rows()) + " rows");
  }
  const double inv_b = 1.0 / static_cast<double>(upstream.rows());
  Matrix scaled = upstream;
  for (std::size_t r = 0; r < scaled.rows(); ++r) {
    const double s = row_weights[r] * inv_b;
    double* row = scaled.data().data() + r * scaled.cols();
    for (std::size_t j = 0; j < scaled.cols(); ++j) row[j] *= s;
  }
  return backward_raw(model, trace, scaled);
}

LossResult logistic_loss(const std::vector<int>& labels,
                         const std::vector<double>& logits) {
  if (labels.size() != logits.size()) {
    raise(ErrorKind::shape, "logistic_loss: " + std::to_string(labels.size()) +
                                " labels vs " + std::to_string(logits.size()) +
                                " logits");
  }
  LossResult result;
  result.loss.resize(labels.size());
  result.dloss_dlogit.resize(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != 0 && labels[k] != 1) {
      raise(ErrorKind::data, "logistic_loss: label " + std::to_string(labels[k]) +
                                 " at index " + std::to_string(k) +
                                 " is not in {0,1}");
    }
    const double sign = labels[k] == 1 ? 1.0 : -1.0;
    result.loss[k] = softplus_neg(sign * logits[k]);
    result.dloss_dlogit[k] = stable_sigmoid(logits[k]) - static_cast<double>(labels[k]);
  }
  return result;
}

AdaGradState make_adagrad_state(const MlpModel& model, double epsilon) {
  AdaGradState state;
  state.epsilon = epsilon;
  for (const Layer& layer : model.layers) {
    LayerGrads acc;
    acc.weights = Matrix(layer.weights.rows(), layer.weights.cols());
    acc.bias.assign(layer.bias.size(), 0.0);
    state.accum.push_back(std::move(acc));
  }
  return state;
}

void adagrad_step(MlpModel& model, const ParamGrads& grads, AdaGradState& state,
                  double lr) {
  if (grads.size() != model.layers.size() || state.accum.size() != grads.size()) {
    raise(ErrorKind::shape, "adagrad_step: gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < grads.size(); ++l) {
    for (double g : grads[l].weights.data()) {
      if (!std::isfinite(g)) {
        raise(ErrorKind::numeric,
              "adagrad_step: non-finite weight gradient in layer " + std::to_string(l));
      }
    }
    for (double g : grads[l].bias) {
      if (!std::isfinite(g)) {
        raise(ErrorKind::numeric,
              "adagrad_step: non-finite bias gradient in layer " + std::to_string(l));
      }
    }
  }
  for (std::size_t l = 0; l < grads.size(); ++l) {
    Layer& layer = model.layers[l];
    LayerGrads& acc = state.accum[l];
    if (!acc.weights.same_shape(grads[l].weights) ||
        acc.bias.size() != grads[l].bias.size()) {
      raise(ErrorKind::shape, "adagrad_step: gradient shape mismatch in layer " +
                                  std::to_string(l));
    }
    for (std::size_t i = 0; i < acc.weights.data().size(); ++i) {
      const double g = grads[l].weights.data()[i];
      acc.weights.data()[i] += g * g;
      layer.weights.data()[i] -=
          lr * g / (std::sqrt(acc.weights.data()[i]) + state.epsilon);
    }
    for (std::size_t i = 0; i < acc.bias.size(); ++i) {
      const double g = grads[l].bias[i];
      acc.bias[i] += g * g;
      layer.bias[i] -= lr * g / (std::sqrt(acc.bias[i]) + state.epsilon);
    }
  }
}

std::vector<double> flatten_params(const MlpModel& model) {
  std::vector<double> out;
  for (const Layer& layer : model.layers) {
    out.insert(out.end(), layer.weights.data().begin(), layer.weights.data().end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

std::vector<double> flatten_grads(const ParamGrads& grads) {
  std::vector<double> out;
  for (const LayerGrads& g : grads) {
    out.insert(out.end(), g.weights.data().begin(), g.weights.data().end());
    out.insert(out.end(), g.bias.begin(), g.bias.end());
  }
  return out;
}

}  // namespace celu
