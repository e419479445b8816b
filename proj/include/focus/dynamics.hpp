#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "focus/envs.hpp"
#include "focus/kernels.hpp"
#include "focus/nn.hpp"

namespace focus::dynamics {

using envs::Action;
using envs::EnvId;
using envs::State;
using envs::Transition;

// Per-dimension affine normalisation, x_n = (x - mean) / scale.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Normalizer identity(std::size_t dim);
  // Column mean and standard deviation; scales below 1e-8 are replaced by 1.
  static Normalizer fit(const RowMatrix& data);

  void apply(std::span<const double> x, std::span<double> out) const;
  void invert(std::span<const double> x, std::span<double> out) const;

  bool operator==(const Normalizer&) const = default;
};

// Net maps normalize(concat(state, action)) to normalized next state.
// Normalisation is computed on source data and frozen afterwards.
struct DynamicsModel {
  nn::MlpParams net;
  EnvId env_id = EnvId::drag_point;
  Normalizer input_norm;
  Normalizer output_norm;

  std::size_t state_dim() const { return net.output_size(); }
  std::size_t action_dim() const { return net.input_size() - net.output_size(); }

  bool operator==(const DynamicsModel&) const = default;
};

enum class ScheduleKind { linear, affine };
enum class AdaptMode { focus, all_data, low_initial_error };

std::string_view to_string(ScheduleKind k);
std::string_view to_string(AdaptMode m);
ScheduleKind schedule_kind_from_string(std::string_view s);
AdaptMode adapt_mode_from_string(std::string_view s);

// phi(j) = slope * j (+ offset for affine). With scale_by_gamma the
// effective hardness is phi(j) / gamma, i.e. the sigmoid acts on the
// relative error err_sq / gamma - 1.
struct WeightSchedule {
  ScheduleKind kind = ScheduleKind::affine;
  double slope = 5.0;
  double offset = 3.0;
  double gamma = 0.08;
  bool scale_by_gamma = false;

  double phi(int j) const;
  double hardness(int j) const;

  bool operator==(const WeightSchedule&) const = default;
};

void validate(const WeightSchedule& sched);

struct NetConfig {
  std::vector<std::size_t> hidden{64, 64};
  nn::Activation activation = nn::Activation::tanh;
};

struct TrainConfig {
  nn::OptConfig opt;
  // Learning rate decays geometrically per epoch from opt.learning_rate to
  // final_learning_rate; 0 keeps it constant.
  double final_learning_rate = 0.0;
  int epochs = 20;
  std::size_t batch_size = 64;
  kernels::Exec exec = kernels::Exec::parallel;
};

inline constexpr std::size_t kHistogramBins = 32;

struct EpochStats {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double frac_below_gamma = 0.0;
  std::array<std::size_t, kHistogramBins> histogram{};

  bool operator==(const EpochStats&) const = default;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

std::size_t histogram_bin(double weight);

State predict(const DynamicsModel& model, std::span<const double> s, std::span<const double> a);

// Allocation-free prediction for hot loops (planner propagation).
class Predictor {
 public:
  explicit Predictor(const DynamicsModel& model);
  std::span<const double> operator()(std::span<const double> s, std::span<const double> a);

 private:
  const DynamicsModel& model_;
  nn::Workspace ws_;
  std::vector<double> input_;
  std::vector<double> output_;
};

double prediction_error_sq(const DynamicsModel& model, const Transition& t);

// 1 - sigmoid(hardness(j) * (err_sq - gamma)).
double focus_weight(double err_sq, int j, const WeightSchedule& sched);

// Batch mean of err_sq * w, with w recomputed from the current model and
// held constant under differentiation.
double focused_loss(const DynamicsModel& model, std::span<const Transition> batch, int j,
                    const WeightSchedule& sched);

// Batch mean of err_sq * weights[i] for externally supplied weights.
double weighted_loss(const DynamicsModel& model, std::span<const Transition> batch,
                     std::span<const double> weights);

// Gradient of focused_loss with detached weights, via the serial reference kernel.
nn::LossAndGrad focused_loss_and_grad(const DynamicsModel& model, std::span<const Transition> batch,
                                      int j, const WeightSchedule& sched);

struct TrainResult {
  DynamicsModel model;
  TrainReport report;
};

TrainResult train_source(std::span<const Transition> dataset, const NetConfig& net,
                         const TrainConfig& train, std::uint64_t seed);

TrainResult fine_tune_dynamics(const DynamicsModel& model0, std::span<const Transition> dataset,
                               AdaptMode mode, const WeightSchedule& sched,
                               const TrainConfig& train, std::uint64_t seed);

// Percentile (linear interpolation between order statistics) of squared
// prediction error over a dataset.
double error_percentile(const DynamicsModel& model, std::span<const Transition> data, double percentile);

double percentile(std::vector<double> values, double pct);

std::vector<double> prediction_errors_sq(const DynamicsModel& model, std::span<const Transition> data,
                                         kernels::Exec exec = kernels::Exec::parallel);

// Checkpoint = nn checkpoint + model metadata.
struct DynamicsCheckpoint {
  DynamicsModel model;
  std::optional<nn::OptState> opt_state;
  std::optional<double> gamma_used;
  std::string mode = "source";
  std::optional<WeightSchedule> schedule;

  bool operator==(const DynamicsCheckpoint&) const = default;
};

nlohmann::ordered_json checkpoint_to_json(const DynamicsCheckpoint& c);
DynamicsCheckpoint checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const std::string& path, const DynamicsCheckpoint& c);
DynamicsCheckpoint load_checkpoint(const std::string& path);

nlohmann::ordered_json schedule_to_json(const WeightSchedule& s);
WeightSchedule schedule_from_json(const nlohmann::json& doc);

// CSV: epoch, mean_loss, frac_below_gamma, hist_bin_0..hist_bin_31
std::string train_report_csv(const TrainReport& report);
TrainReport train_report_from_csv(const std::string& text);

}  // namespace focus::dynamics
