#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "focus/matrix.hpp"

// Minimal fully connected network: affine layers, relu/tanh hidden
// activations, identity/softplus head, exact reverse-mode gradients.
// All arithmetic is 64-bit.
namespace focus::nn {

enum class Activation { relu, tanh };
enum class OutputActivation { identity, softplus };

std::string_view to_string(Activation a);
std::string_view to_string(OutputActivation a);
Activation activation_from_string(std::string_view s);
OutputActivation output_activation_from_string(std::string_view s);

// Shape tree shared by gradients and optimizer moments.
struct Gradients {
  std::vector<std::vector<double>> weights;  // weights[l]: (out, in) row-major
  std::vector<std::vector<double>> biases;

  bool operator==(const Gradients&) const = default;
};

struct MlpParams {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::tanh;
  OutputActivation output_activation = OutputActivation::identity;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t parameter_count() const;

  bool operator==(const MlpParams&) const = default;
};

// Glorot-uniform weights, zero biases. Throws config error unless
// layer_sizes has at least two entries, all >= 1.
MlpParams mlp_init(std::vector<std::size_t> layer_sizes, Activation activation,
                   OutputActivation output_activation, std::uint64_t seed);

Gradients zeros_like(const MlpParams& params);
void check_congruent(const MlpParams& params, const Gradients& tree);
bool all_finite(const MlpParams& params);

double softplus(double z);
double sigmoid(double z);

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input);

// Per-example buffers for a forward pass that is later differentiated.
class Workspace {
 public:
  void reserve(const MlpParams& params);

  std::span<const double> forward(const MlpParams& params, std::span<const double> input);

  // Accumulates scale * d(loss)/d(params) into `accum`, given d(loss)/d(output)
  // for the most recent forward(). ReLU uses subgradient 0 at 0.
  void backward(const MlpParams& params, std::span<const double> d_output,
                Gradients& accum, double scale);

 private:
  std::vector<double> input_;
  std::vector<std::vector<double>> pre_;   // pre-activations per layer
  std::vector<std::vector<double>> post_;  // activations per layer
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
};

// Loss of one example as a function of the network output. Writes
// d(loss)/d(output) into d_output. Must be safe to call concurrently.
using OutputLoss =
    std::function<double(std::size_t example, std::span<const double> output,
                         std::span<double> d_output)>;

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
};

// Mean over rows of `inputs` of the per-example loss, with its exact gradient.
// Serial reference implementation. Non-finite intermediates raise a numerical
// error naming the layer index.
LossAndGrad loss_and_grad(const MlpParams& params, const RowMatrix& inputs,
                          const OutputLoss& loss);

// Central differences, one parameter at a time. Test oracle.
Gradients finite_diff_grad(const MlpParams& params,
                           const std::function<double(const MlpParams&)>& loss,
                           double eps);

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct OptConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptState {
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t step_count = 0;
  Gradients first_moment;   // adam only
  Gradients second_moment;  // adam only
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const OptState&) const = default;
};

OptState make_opt_state(const MlpParams& params, const OptConfig& config);

// In-place update used by training loops.
void apply_step(MlpParams& params, const Gradients& grads, OptState& state);

// Value-semantics form of apply_step.
std::pair<MlpParams, OptState> optimizer_step(MlpParams params, const Gradients& grads,
                                              OptState state);

// Versioned checkpoint document. Readers reject any other format_version.
inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  MlpParams params;
  std::optional<OptState> opt_state;

  bool operator==(const Checkpoint&) const = default;
};

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

}  // namespace focus::nn
