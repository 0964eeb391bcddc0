#ifndef CELU_MODEL_HPP
#define CELU_MODEL_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "celu/matrix.hpp"

namespace celu {

enum class Activation { relu, linear };

struct Layer {
  Matrix weights;            // d_in x d_out
  std::vector<double> bias;  // d_out
  Activation activation = Activation::linear;
};

// Dense multilayer perceptron. Layer dims chain; construction is the only
// place shapes are decided, so forward/backward just assert them.
struct MlpModel {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().weights.rows(); }
  std::size_t output_dim() const { return layers.back().weights.cols(); }
};

// Everything backward needs from a forward pass: the batch input plus each
// layer's pre- and post-activation values.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre_acts;
  std::vector<Matrix> post_acts;
};

struct LayerGrads {
  Matrix weights;
  std::vector<double> bias;
};

using ParamGrads = std::vector<LayerGrads>;

struct BackwardResult {
  ParamGrads params;
  Matrix input_grad;  // gradient w.r.t. the forward input, for chaining
};

// Per-parameter accumulator of squared gradients. Accumulators are
// non-negative and non-decreasing over steps.
struct AdaGradState {
  std::vector<LayerGrads> accum;
  double epsilon = 1e-10;
};

// Xavier-uniform weights in +-sqrt(6/(d_in+d_out)), zero biases,
// deterministic in seed. activations.size() must be layout.size()-1.
MlpModel init_mlp(const std::vector<std::size_t>& layout,
                  const std::vector<Activation>& activations,
                  std::uint64_t seed);

// Convenience: relu on hidden layers, linear output.
MlpModel init_mlp(const std::vector<std::size_t>& layout, std::uint64_t seed);

std::pair<Matrix, ForwardTrace> forward(const MlpModel& model, const Matrix& x);

// Pure chain rule: param grads are sums over the batch of the per-instance
// contributions implied by `upstream`; no normalization or weighting.
BackwardResult backward_raw(const MlpModel& model, const ForwardTrace& trace,
                            const Matrix& upstream);

// Weighted backward pass: upstream row k is scaled by row_weights[k] / B
// before the chain rule, i.e. gradients of (1/B) * sum_k w_k <upstream_k, out_k>.
// Zero-weighted rows reduce the signal rather than renormalizing the batch.
BackwardResult backward(const MlpModel& model, const ForwardTrace& trace,
                        const Matrix& upstream,
                        const std::vector<double>& row_weights);

struct LossResult {
  std::vector<double> loss;          // per-instance logistic loss
  std::vector<double> dloss_dlogit;  // sigma(logit) - y
};

// Stable per-instance logistic loss for labels in {0,1}.
LossResult logistic_loss(const std::vector<int>& labels,
                         const std::vector<double>& logits);

AdaGradState make_adagrad_state(const MlpModel& model, double epsilon = 1e-10);

// acc += g^2; p -= lr * g / (sqrt(acc) + epsilon). Throws a numeric error
// naming the layer if a gradient is not finite.
void adagrad_step(MlpModel& model, const ParamGrads& grads, AdaGradState& state,
                  double lr);

std::vector<double> flatten_params(const MlpModel& model);
std::vector<double> flatten_grads(const ParamGrads& grads);

}  // namespace celu

#endif  // CELU_MODEL_HPP
