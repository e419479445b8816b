#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "focus/dynamics.hpp"
#include "focus/envs.hpp"
#include "focus/nn.hpp"

// Model deviation estimator: regresses the dynamics model's (unsquared)
// prediction error from (occupancy grid, state, action, predicted next state).
namespace focus::mde {

using dynamics::Normalizer;
using envs::EnvSpec;
using envs::State;
using envs::Transition;

inline constexpr double kDefaultK = 10.0;

// Input layout: [grid (resolution^2), state, action, predicted_next].
// The estimate is output_scale * softplus(net output). Normalisation and
// output_scale are fitted on the first training call and frozen afterwards.
struct MdeModel {
  nn::MlpParams net;
  int resolution = 16;
  double k_mde = kDefaultK;
  Normalizer input_norm;
  double output_scale = 1.0;
  bool fitted = false;

  std::size_t state_dim = 0;
  std::size_t action_dim = 0;

  std::size_t grid_size() const { return static_cast<std::size_t>(resolution * resolution); }

  bool operator==(const MdeModel&) const = default;
};

struct MdeNetConfig {
  std::vector<std::size_t> hidden{64, 64};
  nn::Activation activation = nn::Activation::relu;
};

MdeModel make_mde(int resolution, double k_mde, std::size_t state_dim, std::size_t action_dim,
                  const MdeNetConfig& net, std::uint64_t seed);

struct MdeExample {
  Transition transition;
  State predicted_next;
  double true_error = 0.0;
  // Shared by every example built from the same spec.
  std::shared_ptr<const std::vector<double>> grid;
};

MdeExample make_mde_example(const dynamics::DynamicsModel& model, const EnvSpec& spec,
                            const Transition& t, int resolution);

// Labels a whole dataset against one spec; the grid is computed once.
std::vector<MdeExample> make_mde_examples(const dynamics::DynamicsModel& model, const EnvSpec& spec,
                                          std::span<const Transition> data, int resolution);

// (d_hat - d)^2 * exp(-k * d)
double mde_loss(double d_hat, double d, double k_mde);

double mde_predict(const MdeModel& mde, const EnvSpec& spec, std::span<const double> s,
                   std::span<const double> a, std::span<const double> s_pred);

// Estimate for an example's own grid; used for evaluation and training checks.
double mde_predict(const MdeModel& mde, const MdeExample& ex);

// Planner-side estimator for one spec. The grid part of the first layer is
// summed once; the remaining inputs continue the same sum in the same order,
// so results are bit-identical to mde_predict.
class MdeScorer {
 public:
  MdeScorer(const MdeModel& mde, const EnvSpec& spec);
  double operator()(std::span<const double> s, std::span<const double> a, std::span<const double> s_pred);

 private:
  const MdeModel& mde_;
  std::vector<double> grid_partial_;
  std::vector<double> tail_;
  std::vector<double> buf_a_;
  std::vector<double> buf_b_;
};

struct MdeTrainConfig {
  nn::OptConfig opt;
  int epochs = 20;
  std::size_t batch_size = 64;
  // Geometric per-epoch decay target; 0 keeps the rate constant.
  double final_learning_rate = 0.0;
  kernels::Exec exec = kernels::Exec::parallel;
};

struct MdeTrainResult {
  MdeModel model;
  std::vector<double> epoch_losses;
};

MdeTrainResult fine_tune_mde(const MdeModel& mde0, std::span<const MdeExample> examples,
                             const MdeTrainConfig& cfg, std::uint64_t seed);

// Mean mde_loss of the current model over examples.
double mean_mde_loss(const MdeModel& mde, std::span<const MdeExample> examples);

// Mean estimator loss and its gradient w.r.t. the network, serial reference.
nn::LossAndGrad mde_loss_and_grad(const MdeModel& mde, std::span<const MdeExample> examples);

nlohmann::ordered_json checkpoint_to_json(const MdeModel& mde);
MdeModel checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const std::string& path, const MdeModel& mde);
MdeModel load_checkpoint(const std::string& path);

// JSON Lines: transition fields plus predicted_next and true_error.
nlohmann::ordered_json example_to_json(const MdeExample& ex);
MdeExample example_from_json(const nlohmann::json& doc, std::shared_ptr<const std::vector<double>> grid);
void write_examples(const std::string& path, std::span<const MdeExample> examples);

}  // namespace focus::mde
