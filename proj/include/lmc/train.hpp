#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "lmc/common.hpp"
#include "lmc/rng.hpp"

namespace lmc {

enum class TrainMode { GD, SGD };

// Learning-rate schedules: a constant rate lr0, or lr0 / m (the width-
// decayed rate used for the sweeps).
enum class LrSchedule { Constant, WidthDecayed };

struct TrainConfig {
  TrainMode mode = TrainMode::GD;
  double lr0 = 0.5;
  LrSchedule lr_schedule = LrSchedule::WidthDecayed;
  int batch = 64;  // SGD minibatch size
  long long max_iters = 200000;
  // Stop once the exact population loss is at or below this. 1e-6 is a more
  // realistic target for SGD.
  double loss_tol = 1e-10;
  // Init entries are iid N(0, init_std^2); unset means the 1/(m d) rule.
  std::optional<double> init_std;
  // SGD evaluates the exact population loss every eval_stride steps, both
  // for the stopping rule and for the loss trace.
  long long eval_stride = 100;
  // GD records the trace every trace_stride iterations (plus the final point).
  long long trace_stride = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  WeightMatrix weights;
  double final_loss = 0.0;
  long long iterations = 0;
  bool converged = false;
  std::vector<std::pair<long long, double>> loss_trace;  // (iteration, loss)
};

WeightMatrix init_weights(const ProblemConfig& config, const TrainConfig& train);

// Full-batch gradient descent on the exact population loss. Throws
// DivergenceError if the loss goes non-finite or exceeds 1e6.
TrainResult train_gd(const ProblemConfig& config, const TrainConfig& train);

// Minibatch SGD on inputs drawn uniformly from the sphere, with the ReLU
// subgradient taken as 0 at 0. Convergence is judged on the exact
// population loss at the evaluation stride.
TrainResult train_sgd(const ProblemConfig& config, const TrainConfig& train);

// Gradient of the empirical squared error (1/B) sum_b (f_W(x_b) - f*(x_b))^2
// over the rows of X. Exposed so the SGD step direction can be checked
// against the population gradient.
WeightMatrix empirical_grad(const WeightMatrix& W, const ProblemConfig& config,
                            const Eigen::MatrixXd& X);

}  // namespace lmc
