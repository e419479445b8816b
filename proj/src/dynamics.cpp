#include "focus/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "focus/error.hpp"
#include "focus/json_util.hpp"
#include "focus/rng.hpp"

namespace focus::dynamics {

std::string_view to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "affine"; }

std::string_view to_string(AdaptMode m) {
  switch (m) {
    case AdaptMode::focus: return "focus";
    case AdaptMode::all_data: return "all_data";
    case AdaptMode::low_initial_error: return "low_initial_error";
  }
  return "focus";
}

ScheduleKind schedule_kind_from_string(std::string_view s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "affine") return ScheduleKind::affine;
  fail(ErrorKind::config, "unknown schedule kind '" + std::string(s) + "'");
}

AdaptMode adapt_mode_from_string(std::string_view s) {
  if (s == "focus") return AdaptMode::focus;
  if (s == "all_data") return AdaptMode::all_data;
  if (s == "low_initial_error") return AdaptMode::low_initial_error;
  fail(ErrorKind::config, "unknown adapt mode '" + std::string(s) + "'");
}

Normalizer Normalizer::identity(std::size_t dim) {
  return Normalizer{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

Normalizer Normalizer::fit(const RowMatrix& data) {
  if (data.rows == 0) fail(ErrorKind::config, "cannot fit normalisation on no data");
  Normalizer n{std::vector<double>(data.cols, 0.0), std::vector<double>(data.cols, 0.0)};
  for (std::size_t r = 0; r < data.rows; ++r) {
    for (std::size_t c = 0; c < data.cols; ++c) n.mean[c] += data.row(r)[c];
  }
  for (auto& m : n.mean) m /= static_cast<double>(data.rows);
  for (std::size_t r = 0; r < data.rows; ++r) {
    for (std::size_t c = 0; c < data.cols; ++c) {
      const double d = data.row(r)[c] - n.mean[c];
      n.scale[c] += d * d;
    }
  }
  for (auto& s : n.scale) {
    s = std::sqrt(s / static_cast<double>(data.rows));
    if (s < 1e-8) s = 1.0;
  }
  return n;
}

void Normalizer::apply(std::span<const double> x, std::span<double> out) const {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / scale[i];
}

void Normalizer::invert(std::span<const double> x, std::span<double> out) const {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * scale[i] + mean[i];
}

double WeightSchedule::phi(int j) const {
  const double jj = static_cast<double>(j);
  return kind == ScheduleKind::linear ? slope * jj : slope * jj + offset;
}

double WeightSchedule::hardness(int j) const { return scale_by_gamma ? phi(j) / gamma : phi(j); }

void validate(const WeightSchedule& s) {
  if (!(s.slope >= 0.0)) fail(ErrorKind::config, "schedule slope must be >= 0");
  if (!(s.offset >= 0.0)) fail(ErrorKind::config, "schedule offset must be >= 0");
  if (!(s.gamma > 0.0)) fail(ErrorKind::config, "schedule gamma must be > 0");
}

std::size_t histogram_bin(double weight) {
  const auto b = static_cast<std::ptrdiff_t>(std::floor(weight * static_cast<double>(kHistogramBins)));
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, kHistogramBins - 1));
}

namespace {

void check_dims(const DynamicsModel& model, std::size_t s, std::size_t a) {
  if (s != model.state_dim() || a != model.action_dim()) {
    fail(ErrorKind::shape, "state/action dimensions do not match the dynamics model");
  }
}

std::vector<double> concat(std::span<const double> s, std::span<const double> a) {
  std::vector<double> x(s.begin(), s.end());
  x.insert(x.end(), a.begin(), a.end());
  return x;
}

// Normalised network inputs and world-unit targets for a dataset.
struct Encoded {
  RowMatrix inputs;
  RowMatrix targets;
};

Encoded encode(const DynamicsModel& model, std::span<const Transition> data) {
  Encoded e{RowMatrix(data.size(), model.net.input_size()), RowMatrix(data.size(), model.state_dim())};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& t = data[i];
    check_dims(model, t.state.size(), t.action.size());
    if (t.next_state.size() != model.state_dim()) fail(ErrorKind::shape, "next_state dimension mismatch");
    const auto x = concat(t.state, t.action);
    model.input_norm.apply(x, e.inputs.row(i));
    std::copy(t.next_state.begin(), t.next_state.end(), e.targets.row(i).begin());
  }
  return e;
}

// Squared world-unit error of a normalised output against a target, and its
// gradient with respect to the output (before weighting).
double squared_error(const Normalizer& out_norm, std::span<const double> y, std::span<const double> target,
                     std::span<double> d_y) {
  double e = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double pred = y[k] * out_norm.scale[k] + out_norm.mean[k];
    const double diff = pred - target[k];
    e += diff * diff;
    d_y[k] = 2.0 * diff * out_norm.scale[k];
  }
  return e;
}

enum class WeightRule { one, schedule, fixed };

struct EpochTrace {
  std::vector<double> err_sq;
  std::vector<double> weight;
};

// Shared minibatch loop for source training and all adaptation modes.
TrainReport run_training(DynamicsModel& model, const Encoded& data, WeightRule rule,
                         const WeightSchedule* sched, std::span<const double> fixed_weights,
                         bool track_gamma, const TrainConfig& cfg, std::uint64_t seed) {
  const std::size_t n = data.inputs.rows;
  if (cfg.epochs < 0) fail(ErrorKind::config, "epochs must be >= 0");
  if (cfg.batch_size == 0) fail(ErrorKind::config, "batch_size must be >= 1");
  nn::OptState opt = nn::make_opt_state(model.net, cfg.opt);
  Rng shuffle_rng(derive_seed(seed, "shuffle"));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  TrainReport report;
  EpochTrace trace{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  const std::size_t in_dim = data.inputs.cols;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.final_learning_rate > 0.0 && cfg.epochs > 1) {
      const double f = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
      opt.learning_rate = cfg.opt.learning_rate * std::pow(cfg.final_learning_rate / cfg.opt.learning_rate, f);
    }
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, n);
      RowMatrix batch(end - begin, in_dim);
      for (std::size_t r = 0; r < end - begin; ++r) {
        const auto src = data.inputs.row(order[begin + r]);
        std::copy(src.begin(), src.end(), batch.row(r).begin());
      }
      const nn::OutputLoss loss = [&](std::size_t r, std::span<const double> y, std::span<double> d_y) {
        const std::size_t idx = order[begin + r];
        const double e = squared_error(model.output_norm, y, data.targets.row(idx), d_y);
        double w = 1.0;
        if (rule == WeightRule::schedule) w = focus_weight(e, epoch, *sched);
        if (rule == WeightRule::fixed) w = fixed_weights[idx];
        for (auto& g : d_y) g *= w;
        trace.err_sq[idx] = e;
        trace.weight[idx] = w;
        return w * e;
      };
      auto lg = kernels::batch_loss_grad(model.net, batch, loss, cfg.exec);
      loss_sum += lg.loss * static_cast<double>(end - begin);
      nn::apply_step(model.net, lg.grads, opt);
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.mean_loss = loss_sum / static_cast<double>(n);
    std::size_t below = 0;
    for (std::size_t i = 0; i < n; ++i) {
      stats.histogram[histogram_bin(trace.weight[i])] += 1;
      if (track_gamma && trace.err_sq[i] < sched->gamma) ++below;
    }
    stats.frac_below_gamma = static_cast<double>(below) / static_cast<double>(n);
    report.epochs.push_back(stats);
  }
  return report;
}

void check_dataset(std::span<const Transition> data, const char* what) {
  if (data.empty()) fail(ErrorKind::config, std::string(what) + ": empty dataset");
  const auto v = data.front().variant;
  const auto id = data.front().env_id;
  for (const auto& t : data) {
    if (t.variant != v) fail(ErrorKind::config, std::string(what) + ": mixed-variant dataset");
    if (t.env_id != id) fail(ErrorKind::config, std::string(what) + ": mixed env_id dataset");
  }
}

}  // namespace

State predict(const DynamicsModel& model, std::span<const double> s, std::span<const double> a) {
  Predictor p(model);
  auto out = p(s, a);
  return {out.begin(), out.end()};
}

Predictor::Predictor(const DynamicsModel& model)
    : model_(model), input_(model.net.input_size()), output_(model.state_dim()) {
  ws_.reserve(model.net);
}

std::span<const double> Predictor::operator()(std::span<const double> s, std::span<const double> a) {
  check_dims(model_, s.size(), a.size());
  const std::size_t ds = s.size();
  for (std::size_t i = 0; i < ds; ++i) input_[i] = (s[i] - model_.input_norm.mean[i]) / model_.input_norm.scale[i];
  for (std::size_t i = 0; i < a.size(); ++i) {
    input_[ds + i] = (a[i] - model_.input_norm.mean[ds + i]) / model_.input_norm.scale[ds + i];
  }
  auto y = ws_.forward(model_.net, input_);
  model_.output_norm.invert(y, output_);
  return output_;
}

double prediction_error_sq(const DynamicsModel& model, const Transition& t) {
  const State pred = predict(model, t.state, t.action);
  double e = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = pred[k] - t.next_state[k];
    e += d * d;
  }
  return e;
}

std::vector<double> prediction_errors_sq(const DynamicsModel& model, std::span<const Transition> data,
                                         kernels::Exec exec) {
  const Encoded enc = encode(model, data);
  const RowMatrix y = kernels::batch_forward(model.net, enc.inputs, exec);
  std::vector<double> errs(data.size());
  std::vector<double> scratch(model.state_dim());
  for (std::size_t i = 0; i < data.size(); ++i) {
    errs[i] = squared_error(model.output_norm, y.row(i), enc.targets.row(i), scratch);
  }
  return errs;
}

double focus_weight(double err_sq, int j, const WeightSchedule& sched) {
  return 1.0 - nn::sigmoid(sched.hardness(j) * (err_sq - sched.gamma));
}

double weighted_loss(const DynamicsModel& model, std::span<const Transition> batch,
                     std::span<const double> weights) {
  if (batch.empty()) fail(ErrorKind::config, "loss over an empty batch");
  if (weights.size() != batch.size()) fail(ErrorKind::shape, "one weight per transition required");
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) acc += prediction_error_sq(model, batch[i]) * weights[i];
  return acc / static_cast<double>(batch.size());
}

double focused_loss(const DynamicsModel& model, std::span<const Transition> batch, int j,
                    const WeightSchedule& sched) {
  if (batch.empty()) fail(ErrorKind::config, "loss over an empty batch");
  std::vector<double> w(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) w[i] = focus_weight(prediction_error_sq(model, batch[i]), j, sched);
  return weighted_loss(model, batch, w);
}

nn::LossAndGrad focused_loss_and_grad(const DynamicsModel& model, std::span<const Transition> batch,
                                      int j, const WeightSchedule& sched) {
  if (batch.empty()) fail(ErrorKind::config, "loss over an empty batch");
  const Encoded enc = encode(model, batch);
  const nn::OutputLoss loss = [&](std::size_t r, std::span<const double> y, std::span<double> d_y) {
    const double e = squared_error(model.output_norm, y, enc.targets.row(r), d_y);
    const double w = focus_weight(e, j, sched);
    for (auto& g : d_y) g *= w;
    return w * e;
  };
  return nn::loss_and_grad(model.net, enc.inputs, loss);
}

TrainResult train_source(std::span<const Transition> dataset, const NetConfig& net,
                         const TrainConfig& train, std::uint64_t seed) {
  check_dataset(dataset, "train_source");
  if (dataset.front().variant != envs::Variant::source) fail(ErrorKind::config, "train_source needs source-variant data");
  const std::size_t ds = dataset.front().state.size();
  const std::size_t da = dataset.front().action.size();
  RowMatrix xs(dataset.size(), ds + da);
  RowMatrix ys(dataset.size(), ds);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& t = dataset[i];
    if (t.state.size() != ds || t.action.size() != da || t.next_state.size() != ds) {
      fail(ErrorKind::shape, "inconsistent transition dimensions");
    }
    const auto x = concat(t.state, t.action);
    std::copy(x.begin(), x.end(), xs.row(i).begin());
    std::copy(t.next_state.begin(), t.next_state.end(), ys.row(i).begin());
  }
  DynamicsModel model;
  model.env_id = dataset.front().env_id;
  model.input_norm = Normalizer::fit(xs);
  model.output_norm = Normalizer::fit(ys);
  std::vector<std::size_t> sizes{ds + da};
  sizes.insert(sizes.end(), net.hidden.begin(), net.hidden.end());
  sizes.push_back(ds);
  model.net = nn::mlp_init(sizes, net.activation, nn::OutputActivation::identity, derive_seed(seed, "init"));
  const Encoded enc = encode(model, dataset);
  TrainReport report = run_training(model, enc, WeightRule::one, nullptr, {}, false, train, seed);
  return {std::move(model), std::move(report)};
}

TrainResult fine_tune_dynamics(const DynamicsModel& model0, std::span<const Transition> dataset,
                               AdaptMode mode, const WeightSchedule& sched, const TrainConfig& train,
                               std::uint64_t seed) {
  check_dataset(dataset, "fine_tune_dynamics");
  validate(sched);
  if (dataset.front().env_id != model0.env_id) fail(ErrorKind::config, "dataset env_id differs from the model's");
  DynamicsModel model = model0;
  const Encoded enc = encode(model, dataset);
  std::vector<double> frozen;
  WeightRule rule = WeightRule::schedule;
  if (mode == AdaptMode::all_data) rule = WeightRule::one;
  if (mode == AdaptMode::low_initial_error) {
    rule = WeightRule::fixed;
    const auto errs = prediction_errors_sq(model0, dataset, train.exec);
    frozen.resize(errs.size());
    for (std::size_t i = 0; i < errs.size(); ++i) frozen[i] = focus_weight(errs[i], 0, sched);
  }
  TrainReport report = run_training(model, enc, rule, &sched, frozen, true, train, seed);
  return {std::move(model), std::move(report)};
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) fail(ErrorKind::config, "percentile of an empty set");
  if (!(pct >= 0.0 && pct <= 100.0)) fail(ErrorKind::config, "percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * pct / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double error_percentile(const DynamicsModel& model, std::span<const Transition> data, double pct) {
  return percentile(prediction_errors_sq(model, data), pct);
}

nlohmann::ordered_json schedule_to_json(const WeightSchedule& s) {
  return {{"kind", to_string(s.kind)},
          {"slope", s.slope},
          {"offset", s.offset},
          {"gamma", s.gamma},
          {"scale_by_gamma", s.scale_by_gamma}};
}

WeightSchedule schedule_from_json(const nlohmann::json& doc) {
  ObjectReader r(doc, "schedule");
  WeightSchedule s;
  s.kind = schedule_kind_from_string(r.get<std::string>("kind", "affine"));
  s.slope = r.get<double>("slope", s.kind == ScheduleKind::linear ? 0.5 : 5.0);
  s.offset = r.get<double>("offset", s.kind == ScheduleKind::linear ? 0.0 : 3.0);
  s.gamma = r.get<double>("gamma", s.gamma);
  s.scale_by_gamma = r.get<bool>("scale_by_gamma", false);
  r.finish();
  return s;
}

nlohmann::ordered_json checkpoint_to_json(const DynamicsCheckpoint& c) {
  auto doc = nn::checkpoint_to_json(nn::Checkpoint{c.model.net, c.opt_state});
  doc["env_id"] = envs::to_string(c.model.env_id);
  doc["normalization"] = {{"input_mean", c.model.input_norm.mean},
                          {"input_scale", c.model.input_norm.scale},
                          {"output_mean", c.model.output_norm.mean},
                          {"output_scale", c.model.output_norm.scale}};
  doc["gamma_used"] = c.gamma_used ? nlohmann::ordered_json(*c.gamma_used) : nlohmann::ordered_json(nullptr);
  doc["mode"] = c.mode;
  doc["schedule"] = c.schedule ? schedule_to_json(*c.schedule) : nlohmann::ordered_json(nullptr);
  return doc;
}

DynamicsCheckpoint checkpoint_from_json(const nlohmann::json& doc) {
  auto nc = nn::checkpoint_from_json(doc);
  try {
    DynamicsCheckpoint c;
    c.model.net = std::move(nc.params);
    c.opt_state = std::move(nc.opt_state);
    c.model.env_id = envs::env_id_from_string(doc.at("env_id").get<std::string>());
    const auto& n = doc.at("normalization");
    c.model.input_norm = {n.at("input_mean").get<std::vector<double>>(), n.at("input_scale").get<std::vector<double>>()};
    c.model.output_norm = {n.at("output_mean").get<std::vector<double>>(), n.at("output_scale").get<std::vector<double>>()};
    if (c.model.input_norm.mean.size() != c.model.net.input_size() ||
        c.model.input_norm.scale.size() != c.model.net.input_size() ||
        c.model.output_norm.mean.size() != c.model.net.output_size() ||
        c.model.output_norm.scale.size() != c.model.net.output_size()) {
      fail(ErrorKind::shape, "normalisation vectors do not match the network");
    }
    if (!doc.at("gamma_used").is_null()) c.gamma_used = doc.at("gamma_used").get<double>();
    c.mode = doc.at("mode").get<std::string>();
    if (!doc.at("schedule").is_null()) c.schedule = schedule_from_json(doc.at("schedule"));
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("malformed dynamics checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const DynamicsCheckpoint& c) {
  write_text_file(path, checkpoint_to_json(c).dump() + "\n");
}

DynamicsCheckpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json_file(path)); }

std::string train_report_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "epoch,mean_loss,frac_below_gamma";
  for (std::size_t b = 0; b < kHistogramBins; ++b) out << ",hist_bin_" << b;
  out << '\n';
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << format_double(e.mean_loss) << ',' << format_double(e.frac_below_gamma);
    for (auto c : e.histogram) out << ',' << c;
    out << '\n';
  }
  return out.str();
}

TrainReport train_report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::io, "empty train report");
  TrainReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3 + kHistogramBins) fail(ErrorKind::io, "train report row has wrong column count");
    EpochStats e;
    e.epoch = std::stoi(cells[0]);
    e.mean_loss = std::stod(cells[1]);
    e.frac_below_gamma = std::stod(cells[2]);
    for (std::size_t b = 0; b < kHistogramBins; ++b) e.histogram[b] = std::stoul(cells[3 + b]);
    report.epochs.push_back(e);
  }
  return report;
}

}  // namespace focus::dynamics
