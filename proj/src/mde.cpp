#include "focus/mde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "focus/error.hpp"
#include "focus/json_util.hpp"
#include "focus/kernels.hpp"
#include "focus/rng.hpp"

namespace focus::mde {

namespace {

constexpr double kMinOutputScale = 1e-3;

void check_model_dims(const MdeModel& mde, std::size_t s, std::size_t a, std::size_t sp) {
  if (s != mde.state_dim || sp != mde.state_dim || a != mde.action_dim) {
    fail(ErrorKind::shape, "state/action dimensions do not match the estimator");
  }
}

void fill_raw_input(const MdeModel& mde, std::span<const double> grid, std::span<const double> s,
                    std::span<const double> a, std::span<const double> sp, std::span<double> out) {
  if (grid.size() != mde.grid_size()) fail(ErrorKind::shape, "occupancy grid size does not match the estimator");
  check_model_dims(mde, s.size(), a.size(), sp.size());
  auto it = std::copy(grid.begin(), grid.end(), out.begin());
  it = std::copy(s.begin(), s.end(), it);
  it = std::copy(a.begin(), a.end(), it);
  std::copy(sp.begin(), sp.end(), it);
}

double hidden(nn::Activation act, double z) { return act == nn::Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z); }

// Asymmetric estimator loss on the softplus head: d_hat = c * y.
double example_loss(double c, double k, double d, double y, double& d_y) {
  const double w = std::exp(-k * d);
  const double diff = c * y - d;
  d_y = 2.0 * w * diff * c;
  return w * diff * diff;
}

}  // namespace

MdeModel make_mde(int resolution, double k_mde, std::size_t state_dim, std::size_t action_dim,
                  const MdeNetConfig& net, std::uint64_t seed) {
  if (resolution < 4) fail(ErrorKind::config, "grid resolution must be >= 4");
  if (!(k_mde > 0.0)) fail(ErrorKind::config, "k_mde must be > 0");
  MdeModel m;
  m.resolution = resolution;
  m.k_mde = k_mde;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  const std::size_t in = m.grid_size() + 2 * state_dim + action_dim;
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), net.hidden.begin(), net.hidden.end());
  sizes.push_back(1);
  m.net = nn::mlp_init(sizes, net.activation, nn::OutputActivation::softplus, seed);
  m.input_norm = Normalizer::identity(in);
  return m;
}

MdeExample make_mde_example(const dynamics::DynamicsModel& model, const EnvSpec& spec, const Transition& t,
                            int resolution) {
  return make_mde_examples(model, spec, std::span<const Transition>(&t, 1), resolution).front();
}

std::vector<MdeExample> make_mde_examples(const dynamics::DynamicsModel& model, const EnvSpec& spec,
                                          std::span<const Transition> data, int resolution) {
  if (model.env_id != spec.env_id) fail(ErrorKind::config, "dynamics model and spec describe different envs");
  auto grid = std::make_shared<const std::vector<double>>(envs::occupancy_grid(spec, resolution));
  std::vector<MdeExample> out;
  out.reserve(data.size());
  dynamics::Predictor predict(model);
  for (const auto& t : data) {
    if (t.env_id != spec.env_id) fail(ErrorKind::config, "transition env_id does not match the EnvSpec");
    auto p = predict(t.state, t.action);
    MdeExample ex;
    ex.transition = t;
    ex.predicted_next.assign(p.begin(), p.end());
    ex.true_error = envs::state_distance(spec.env_id, ex.predicted_next, t.next_state);
    ex.grid = grid;
    out.push_back(std::move(ex));
  }
  return out;
}

double mde_loss(double d_hat, double d, double k_mde) {
  const double diff = d_hat - d;
  return diff * diff * std::exp(-k_mde * d);
}

double mde_predict(const MdeModel& mde, const EnvSpec& spec, std::span<const double> s,
                   std::span<const double> a, std::span<const double> s_pred) {
  const auto grid = envs::occupancy_grid(spec, mde.resolution);
  std::vector<double> raw(mde.net.input_size());
  fill_raw_input(mde, grid, s, a, s_pred, raw);
  std::vector<double> x(raw.size());
  mde.input_norm.apply(raw, x);
  return mde.output_scale * nn::mlp_forward(mde.net, x)[0];
}

double mde_predict(const MdeModel& mde, const MdeExample& ex) {
  std::vector<double> raw(mde.net.input_size());
  fill_raw_input(mde, *ex.grid, ex.transition.state, ex.transition.action, ex.predicted_next, raw);
  std::vector<double> x(raw.size());
  mde.input_norm.apply(raw, x);
  return mde.output_scale * nn::mlp_forward(mde.net, x)[0];
}

MdeScorer::MdeScorer(const MdeModel& mde, const EnvSpec& spec) : mde_(mde) {
  const auto grid = envs::occupancy_grid(spec, mde.resolution);
  const std::size_t g = mde.grid_size();
  const std::size_t in = mde.net.input_size();
  const std::size_t h = mde.net.layer_sizes[1];
  grid_partial_.assign(h, 0.0);
  for (std::size_t o = 0; o < h; ++o) {
    const double* row = mde.net.weights[0].data() + o * in;
    double acc = 0.0;
    for (std::size_t i = 0; i < g; ++i) acc += row[i] * ((grid[i] - mde.input_norm.mean[i]) / mde.input_norm.scale[i]);
    grid_partial_[o] = acc;
  }
  tail_.resize(in - g);
}

double MdeScorer::operator()(std::span<const double> s, std::span<const double> a, std::span<const double> s_pred) {
  const auto& net = mde_.net;
  check_model_dims(mde_, s.size(), a.size(), s_pred.size());
  const std::size_t g = mde_.grid_size();
  const std::size_t in = net.input_size();
  std::size_t k = 0;
  for (auto part : {s, a, s_pred}) {
    for (double v : part) {
      tail_[k] = (v - mde_.input_norm.mean[g + k]) / mde_.input_norm.scale[g + k];
      ++k;
    }
  }
  const std::size_t n_layers = net.num_layers();
  buf_a_.resize(net.layer_sizes[1]);
  for (std::size_t o = 0; o < buf_a_.size(); ++o) {
    const double* row = net.weights[0].data() + o * in + g;
    double acc = grid_partial_[o];
    for (std::size_t i = 0; i < tail_.size(); ++i) acc += row[i] * tail_[i];
    const double z = acc + net.biases[0][o];
    if (!std::isfinite(z)) fail(ErrorKind::numerical, "non-finite activation in layer 0");
    buf_a_[o] = n_layers == 1 ? nn::softplus(z) : hidden(net.activation, z);
  }
  for (std::size_t l = 1; l < n_layers; ++l) {
    const std::size_t n_in = net.layer_sizes[l];
    const std::size_t n_out = net.layer_sizes[l + 1];
    buf_b_.resize(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double* row = net.weights[l].data() + o * n_in;
      double acc = 0.0;
      for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * buf_a_[i];
      const double z = acc + net.biases[l][o];
      if (!std::isfinite(z)) fail(ErrorKind::numerical, "non-finite activation in layer " + std::to_string(l));
      buf_b_[o] = l + 1 == n_layers ? nn::softplus(z) : hidden(net.activation, z);
    }
    std::swap(buf_a_, buf_b_);
  }
  return mde_.output_scale * buf_a_[0];
}

double mean_mde_loss(const MdeModel& mde, std::span<const MdeExample> examples) {
  if (examples.empty()) fail(ErrorKind::config, "loss over an empty example set");
  double acc = 0.0;
  for (const auto& ex : examples) acc += mde_loss(mde_predict(mde, ex), ex.true_error, mde.k_mde);
  return acc / static_cast<double>(examples.size());
}

MdeTrainResult fine_tune_mde(const MdeModel& mde0, std::span<const MdeExample> examples, const MdeTrainConfig& cfg,
                             std::uint64_t seed) {
  if (examples.empty()) fail(ErrorKind::config, "fine_tune_mde: empty dataset");
  if (cfg.batch_size == 0) fail(ErrorKind::config, "batch_size must be >= 1");
  MdeModel mde = mde0;
  const std::size_t n = examples.size();
  const std::size_t in = mde.net.input_size();
  RowMatrix raw(n, in);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = examples[i];
    fill_raw_input(mde, *ex.grid, ex.transition.state, ex.transition.action, ex.predicted_next, raw.row(i));
  }
  if (!mde.fitted) {
    mde.input_norm = Normalizer::fit(raw);
    double mean_err = 0.0;
    for (const auto& ex : examples) mean_err += ex.true_error;
    mean_err /= static_cast<double>(n);
    mde.output_scale = std::max(mean_err, kMinOutputScale);
    mde.fitted = true;
  }
  RowMatrix x(n, in);
  for (std::size_t i = 0; i < n; ++i) mde.input_norm.apply(raw.row(i), x.row(i));

  nn::OptState opt = nn::make_opt_state(mde.net, cfg.opt);
  Rng shuffle_rng(derive_seed(seed, "shuffle"));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  MdeTrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.final_learning_rate > 0.0 && cfg.epochs > 1) {
      const double f = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
      opt.learning_rate = cfg.opt.learning_rate * std::pow(cfg.final_learning_rate / cfg.opt.learning_rate, f);
    }
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, n);
      RowMatrix batch(end - begin, in);
      for (std::size_t r = 0; r < end - begin; ++r) {
        const auto src = x.row(order[begin + r]);
        std::copy(src.begin(), src.end(), batch.row(r).begin());
      }
      const nn::OutputLoss loss = [&](std::size_t r, std::span<const double> y, std::span<double> d_y) {
        return example_loss(mde.output_scale, mde.k_mde, examples[order[begin + r]].true_error, y[0], d_y[0]);
      };
      auto lg = kernels::batch_loss_grad(mde.net, batch, loss, cfg.exec);
      loss_sum += lg.loss * static_cast<double>(end - begin);
      nn::apply_step(mde.net, lg.grads, opt);
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(n));
  }
  result.model = std::move(mde);
  return result;
}

nn::LossAndGrad mde_loss_and_grad(const MdeModel& mde, std::span<const MdeExample> examples) {
  if (examples.empty()) fail(ErrorKind::config, "mde_loss_and_grad: empty batch");
  const std::size_t in = mde.net.input_size();
  RowMatrix x(examples.size(), in);
  std::vector<double> raw(in);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    fill_raw_input(mde, *ex.grid, ex.transition.state, ex.transition.action, ex.predicted_next, raw);
    mde.input_norm.apply(raw, x.row(i));
  }
  const nn::OutputLoss loss = [&](std::size_t r, std::span<const double> y, std::span<double> d_y) {
    return example_loss(mde.output_scale, mde.k_mde, examples[r].true_error, y[0], d_y[0]);
  };
  return nn::loss_and_grad(mde.net, x, loss);
}

nlohmann::ordered_json checkpoint_to_json(const MdeModel& mde) {
  auto doc = nn::checkpoint_to_json(nn::Checkpoint{mde.net, std::nullopt});
  doc["resolution"] = mde.resolution;
  doc["k_mde"] = mde.k_mde;
  doc["state_dim"] = mde.state_dim;
  doc["action_dim"] = mde.action_dim;
  doc["normalization"] = {{"fitted", mde.fitted},
                          {"input_mean", mde.input_norm.mean},
                          {"input_scale", mde.input_norm.scale},
                          {"output_scale", mde.output_scale}};
  return doc;
}

MdeModel checkpoint_from_json(const nlohmann::json& doc) {
  auto nc = nn::checkpoint_from_json(doc);
  try {
    MdeModel m;
    m.net = std::move(nc.params);
    m.resolution = doc.at("resolution").get<int>();
    m.k_mde = doc.at("k_mde").get<double>();
    m.state_dim = doc.at("state_dim").get<std::size_t>();
    m.action_dim = doc.at("action_dim").get<std::size_t>();
    const auto& n = doc.at("normalization");
    m.fitted = n.at("fitted").get<bool>();
    m.input_norm = {n.at("input_mean").get<std::vector<double>>(), n.at("input_scale").get<std::vector<double>>()};
    m.output_scale = n.at("output_scale").get<double>();
    if (m.net.input_size() != m.grid_size() + 2 * m.state_dim + m.action_dim ||
        m.input_norm.mean.size() != m.net.input_size() || m.input_norm.scale.size() != m.net.input_size() ||
        m.net.output_size() != 1) {
      fail(ErrorKind::shape, "estimator checkpoint dimensions are inconsistent");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("malformed estimator checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const MdeModel& mde) {
  write_text_file(path, checkpoint_to_json(mde).dump() + "\n");
}

MdeModel load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json_file(path)); }

nlohmann::ordered_json example_to_json(const MdeExample& ex) {
  auto doc = envs::transition_to_json(ex.transition);
  doc["predicted_next"] = ex.predicted_next;
  doc["true_error"] = ex.true_error;
  return doc;
}

MdeExample example_from_json(const nlohmann::json& doc, std::shared_ptr<const std::vector<double>> grid) {
  MdeExample ex;
  nlohmann::json t = doc;
  try {
    ex.predicted_next = t.at("predicted_next").get<State>();
    ex.true_error = t.at("true_error").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("malformed estimator example: ") + e.what());
  }
  t.erase("predicted_next");
  t.erase("true_error");
  ex.transition = envs::transition_from_json(t);
  ex.grid = std::move(grid);
  return ex;
}

void write_examples(const std::string& path, std::span<const MdeExample> examples) {
  std::ostringstream out;
  for (const auto& ex : examples) out << example_to_json(ex).dump() << '\n';
  write_text_file(path, out.str());
}

}  // namespace focus::mde
