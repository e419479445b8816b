#include "focus/nn.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "focus/error.hpp"
#include "focus/rng.hpp"

namespace focus::nn {

std::string_view to_string(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

std::string_view to_string(OutputActivation a) {
  return a == OutputActivation::identity ? "identity" : "softplus";
}

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  fail(ErrorKind::config, "unknown activation '" + std::string(s) + "'");
}

OutputActivation output_activation_from_string(std::string_view s) {
  if (s == "identity") return OutputActivation::identity;
  if (s == "softplus") return OutputActivation::softplus;
  fail(ErrorKind::config, "unknown output activation '" + std::string(s) + "'");
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  fail(ErrorKind::config, "unknown optimizer '" + std::string(s) + "'");
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

MlpParams mlp_init(std::vector<std::size_t> layer_sizes, Activation activation,
                   OutputActivation output_activation, std::uint64_t seed) {
  if (layer_sizes.size() < 2) fail(ErrorKind::config, "an MLP needs at least two layer sizes");
  for (auto n : layer_sizes) {
    if (n < 1) fail(ErrorKind::config, "layer sizes must be >= 1");
  }
  MlpParams p;
  p.layer_sizes = std::move(layer_sizes);
  p.activation = activation;
  p.output_activation = output_activation;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
    const std::size_t in = p.layer_sizes[l];
    const std::size_t out = p.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(out, 0.0);
  }
  return p;
}

Gradients zeros_like(const MlpParams& params) {
  Gradients g;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    g.weights.emplace_back(params.weights[l].size(), 0.0);
    g.biases.emplace_back(params.biases[l].size(), 0.0);
  }
  return g;
}

void check_congruent(const MlpParams& params, const Gradients& tree) {
  if (tree.weights.size() != params.num_layers() || tree.biases.size() != params.num_layers()) {
    fail(ErrorKind::shape, "gradient tree has the wrong number of layers");
  }
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    if (tree.weights[l].size() != params.weights[l].size() ||
        tree.biases[l].size() != params.biases[l].size()) {
      fail(ErrorKind::shape, "gradient tree shape mismatch at layer " + std::to_string(l));
    }
  }
}

bool all_finite(const MlpParams& params) {
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    for (double v : params.weights[l]) if (!std::isfinite(v)) return false;
    for (double v : params.biases[l]) if (!std::isfinite(v)) return false;
  }
  return true;
}

double softplus(double z) {
  const double v = z > 30.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return std::max(v, std::numeric_limits<double>::min());
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

inline double hidden_act(Activation a, double z) {
  return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through pre-activation z and activation y.
inline double hidden_act_grad(Activation a, double z, double y) {
  return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - y * y;
}

// out = W x + b, summed left to right then bias; MDE scoring relies on this order.
void affine(const std::vector<double>& w, const std::vector<double>& b,
            std::span<const double> x, std::vector<double>& out) {
  const std::size_t in = x.size();
  const std::size_t n_out = b.size();
  out.resize(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    const double* row = w.data() + o * in;
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    out[o] = acc + b[o];
  }
}

void check_finite_layer(const std::vector<double>& v, std::size_t layer) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      fail(ErrorKind::numerical, "non-finite activation in layer " + std::to_string(layer));
    }
  }
}

}  // namespace

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input) {
  Workspace ws;
  auto out = ws.forward(params, input);
  return {out.begin(), out.end()};
}

void Workspace::reserve(const MlpParams& params) {
  pre_.resize(params.num_layers());
  post_.resize(params.num_layers());
}

std::span<const double> Workspace::forward(const MlpParams& params,
                                           std::span<const double> input) {
  if (input.size() != params.input_size()) {
    fail(ErrorKind::shape, "network input has length " + std::to_string(input.size()) +
                               ", expected " + std::to_string(params.input_size()));
  }
  const std::size_t n_layers = params.num_layers();
  if (pre_.size() != n_layers) reserve(params);
  input_.assign(input.begin(), input.end());
  std::span<const double> x = input_;
  for (std::size_t l = 0; l < n_layers; ++l) {
    affine(params.weights[l], params.biases[l], x, pre_[l]);
    check_finite_layer(pre_[l], l);
    auto& y = post_[l];
    y.resize(pre_[l].size());
    const bool last = l + 1 == n_layers;
    for (std::size_t o = 0; o < y.size(); ++o) {
      const double z = pre_[l][o];
      if (!last) {
        y[o] = hidden_act(params.activation, z);
      } else {
        y[o] = params.output_activation == OutputActivation::softplus ? softplus(z) : z;
      }
    }
    x = y;
  }
  return post_.back();
}

void Workspace::backward(const MlpParams& params, std::span<const double> d_output,
                         Gradients& accum, double scale) {
  const std::size_t n_layers = params.num_layers();
  if (d_output.size() != params.output_size()) fail(ErrorKind::shape, "output gradient length mismatch");
  delta_.resize(d_output.size());
  for (std::size_t o = 0; o < d_output.size(); ++o) {
    const double d = d_output[o] * scale;
    delta_[o] = params.output_activation == OutputActivation::softplus
                    ? d * sigmoid(pre_.back()[o])
                    : d;
  }
  for (std::size_t l = n_layers; l-- > 0;) {
    const std::span<const double> x =
        l == 0 ? std::span<const double>(input_) : std::span<const double>(post_[l - 1]);
    const std::size_t in = x.size();
    auto& gw = accum.weights[l];
    auto& gb = accum.biases[l];
    for (std::size_t o = 0; o < delta_.size(); ++o) {
      const double d = delta_[o];
      gb[o] += d;
      if (d == 0.0) continue;
      double* row = gw.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) row[i] += d * x[i];
    }
    if (l == 0) break;
    const auto& w = params.weights[l];
    delta_prev_.assign(in, 0.0);
    for (std::size_t o = 0; o < delta_.size(); ++o) {
      const double d = delta_[o];
      if (d == 0.0) continue;
      const double* row = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) delta_prev_[i] += row[i] * d;
    }
    for (std::size_t i = 0; i < in; ++i) {
      delta_prev_[i] *= hidden_act_grad(params.activation, pre_[l - 1][i], post_[l - 1][i]);
    }
    std::swap(delta_, delta_prev_);
  }
}

LossAndGrad loss_and_grad(const MlpParams& params, const RowMatrix& inputs,
                          const OutputLoss& loss) {
  if (inputs.rows == 0) fail(ErrorKind::config, "loss over an empty batch");
  LossAndGrad result{0.0, zeros_like(params)};
  Workspace ws;
  ws.reserve(params);
  std::vector<double> d_out(params.output_size());
  const double inv_n = 1.0 / static_cast<double>(inputs.rows);
  for (std::size_t r = 0; r < inputs.rows; ++r) {
    auto out = ws.forward(params, inputs.row(r));
    std::fill(d_out.begin(), d_out.end(), 0.0);
    const double value = loss(r, out, d_out);
    if (!std::isfinite(value)) fail(ErrorKind::numerical, "non-finite loss at example " + std::to_string(r));
    result.loss += value;
    ws.backward(params, d_out, result.grads, inv_n);
  }
  result.loss *= inv_n;
  return result;
}

Gradients finite_diff_grad(const MlpParams& params,
                           const std::function<double(const MlpParams&)>& loss, double eps) {
  if (!(eps > 0.0)) fail(ErrorKind::config, "finite-difference step must be positive");
  Gradients g = zeros_like(params);
  MlpParams probe = params;
  auto central = [&](double& slot) {
    const double saved = slot;
    slot = saved + eps;
    const double up = loss(probe);
    slot = saved - eps;
    const double down = loss(probe);
    slot = saved;
    return (up - down) / (2.0 * eps);
  };
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    for (std::size_t i = 0; i < probe.weights[l].size(); ++i) g.weights[l][i] = central(probe.weights[l][i]);
    for (std::size_t i = 0; i < probe.biases[l].size(); ++i) g.biases[l][i] = central(probe.biases[l][i]);
  }
  return g;
}

OptState make_opt_state(const MlpParams& params, const OptConfig& config) {
  OptState s;
  s.optimizer = config.optimizer;
  s.learning_rate = config.learning_rate;
  s.beta1 = config.beta1;
  s.beta2 = config.beta2;
  s.epsilon = config.epsilon;
  if (s.optimizer == OptimizerKind::adam) {
    s.first_moment = zeros_like(params);
    s.second_moment = zeros_like(params);
  }
  return s;
}

void apply_step(MlpParams& params, const Gradients& grads, OptState& state) {
  check_congruent(params, grads);
  state.step_count += 1;
  if (state.optimizer == OptimizerKind::sgd) {
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
      for (std::size_t i = 0; i < params.weights[l].size(); ++i) params.weights[l][i] -= state.learning_rate * grads.weights[l][i];
      for (std::size_t i = 0; i < params.biases[l].size(); ++i) params.biases[l][i] -= state.learning_rate * grads.biases[l][i];
    }
    return;
  }
  check_congruent(params, state.first_moment);
  check_congruent(params, state.second_moment);
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                    std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  };
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    update(params.weights[l], grads.weights[l], state.first_moment.weights[l], state.second_moment.weights[l]);
    update(params.biases[l], grads.biases[l], state.first_moment.biases[l], state.second_moment.biases[l]);
  }
  if (!all_finite(params)) fail(ErrorKind::numerical, "optimizer step produced non-finite parameters");
}

std::pair<MlpParams, OptState> optimizer_step(MlpParams params, const Gradients& grads,
                                              OptState state) {
  apply_step(params, grads, state);
  return {std::move(params), std::move(state)};
}

namespace {

using ojson = nlohmann::ordered_json;

ojson matrix_json(const std::vector<double>& flat, std::size_t rows, std::size_t cols) {
  ojson m = ojson::array();
  for (std::size_t r = 0; r < rows; ++r) {
    m.push_back(std::vector<double>(flat.begin() + r * cols, flat.begin() + (r + 1) * cols));
  }
  return m;
}

ojson tree_json(const Gradients& tree, const std::vector<std::size_t>& sizes) {
  ojson w = ojson::array();
  for (std::size_t l = 0; l < tree.weights.size(); ++l) w.push_back(matrix_json(tree.weights[l], sizes[l + 1], sizes[l]));
  return ojson{{"weights", w}, {"biases", tree.biases}};
}

std::vector<double> read_matrix(const nlohmann::json& m, std::size_t rows, std::size_t cols) {
  if (!m.is_array() || m.size() != rows) fail(ErrorKind::shape, "checkpoint weight matrix has wrong row count");
  std::vector<double> flat;
  flat.reserve(rows * cols);
  for (const auto& row : m) {
    if (!row.is_array() || row.size() != cols) fail(ErrorKind::shape, "checkpoint weight matrix has wrong column count");
    for (const auto& v : row) flat.push_back(v.get<double>());
  }
  return flat;
}

Gradients read_tree(const nlohmann::json& doc, const std::vector<std::size_t>& sizes) {
  Gradients t;
  const auto& w = doc.at("weights");
  const auto& b = doc.at("biases");
  if (w.size() + 1 != sizes.size() || b.size() + 1 != sizes.size()) fail(ErrorKind::shape, "checkpoint layer count mismatch");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    t.weights.push_back(read_matrix(w[l], sizes[l + 1], sizes[l]));
    auto bias = b[l].get<std::vector<double>>();
    if (bias.size() != sizes[l + 1]) fail(ErrorKind::shape, "checkpoint bias length mismatch");
    t.biases.push_back(std::move(bias));
  }
  return t;
}

}  // namespace

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& checkpoint) {
  const auto& p = checkpoint.params;
  const Gradients values{p.weights, p.biases};
  ojson tree = tree_json(values, p.layer_sizes);
  ojson doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["layer_sizes"] = p.layer_sizes;
  doc["activation"] = to_string(p.activation);
  doc["output_activation"] = to_string(p.output_activation);
  doc["weights"] = tree["weights"];
  doc["biases"] = tree["biases"];
  if (checkpoint.opt_state) {
    const auto& s = *checkpoint.opt_state;
    ojson o;
    o["optimizer"] = to_string(s.optimizer);
    o["step_count"] = s.step_count;
    o["learning_rate"] = s.learning_rate;
    o["beta1"] = s.beta1;
    o["beta2"] = s.beta2;
    o["epsilon"] = s.epsilon;
    if (s.optimizer == OptimizerKind::adam) {
      o["first_moment"] = tree_json(s.first_moment, p.layer_sizes);
      o["second_moment"] = tree_json(s.second_moment, p.layer_sizes);
    }
    doc["opt_state"] = o;
  } else {
    doc["opt_state"] = nullptr;
  }
  return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      fail(ErrorKind::io, "unsupported checkpoint format_version " + std::to_string(version));
    }
    Checkpoint c;
    auto& p = c.params;
    p.layer_sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
    if (p.layer_sizes.size() < 2) fail(ErrorKind::shape, "checkpoint needs at least two layer sizes");
    p.activation = activation_from_string(doc.at("activation").get<std::string>());
    p.output_activation = output_activation_from_string(doc.at("output_activation").get<std::string>());
    auto values = read_tree(doc, p.layer_sizes);
    p.weights = std::move(values.weights);
    p.biases = std::move(values.biases);
    if (!all_finite(p)) fail(ErrorKind::numerical, "checkpoint contains non-finite parameters");
    const auto& o = doc.at("opt_state");
    if (!o.is_null()) {
      OptState s;
      s.optimizer = optimizer_from_string(o.at("optimizer").get<std::string>());
      s.step_count = o.at("step_count").get<std::uint64_t>();
      s.learning_rate = o.at("learning_rate").get<double>();
      s.beta1 = o.at("beta1").get<double>();
      s.beta2 = o.at("beta2").get<double>();
      s.epsilon = o.at("epsilon").get<double>();
      if (s.optimizer == OptimizerKind::adam) {
        s.first_moment = read_tree(o.at("first_moment"), p.layer_sizes);
        s.second_moment = read_tree(o.at("second_moment"), p.layer_sizes);
      }
      c.opt_state = std::move(s);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace focus::nn
