#include "lmc/train.hpp"

#include <cmath>
#include <string>

#include "lmc/error.hpp"
#include "lmc/kernel.hpp"

namespace lmc {

namespace {

constexpr double kDivergenceLoss = 1e6;

double step_size(const TrainConfig& train, int m) {
  return train.lr_schedule == LrSchedule::WidthDecayed ? train.lr0 / m
                                                       : train.lr0;
}

void check_finite_loss(double loss, long long iteration) {
  if (!std::isfinite(loss) || loss > kDivergenceLoss) {
    throw DivergenceError(iteration,
                          "training diverged at iteration " +
                              std::to_string(iteration) + " (loss " +
                              std::to_string(loss) + ")");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("TrainConfig: lr0 must be positive");
  if (batch < 1) throw ConfigError("TrainConfig: batch must be >= 1");
  if (max_iters < 0) throw ConfigError("TrainConfig: max_iters must be >= 0");
  if (!(loss_tol >= 0.0)) throw ConfigError("TrainConfig: loss_tol must be >= 0");
  if (init_std && *init_std < 0.0) {
    throw ConfigError("TrainConfig: init_std must be >= 0");
  }
  if (eval_stride < 1) throw ConfigError("TrainConfig: eval_stride must be >= 1");
  if (trace_stride < 1) throw ConfigError("TrainConfig: trace_stride must be >= 1");
}

WeightMatrix init_weights(const ProblemConfig& config,
                          const TrainConfig& train) {
  config.validate();
  train.validate();
  const double std_dev =
      train.init_std ? *train.init_std
                     : 1.0 / (static_cast<double>(config.m) * config.d);
  Rng rng(train.seed);
  WeightMatrix W(config.m, config.d);
  for (int i = 0; i < config.m; ++i) {
    for (int j = 0; j < config.d; ++j) {
      W(i, j) = std_dev * rng.gaussian();
    }
  }
  return W;
}

TrainResult train_gd(const ProblemConfig& config, const TrainConfig& train) {
  config.validate();
  train.validate();
  const double eta = step_size(train, config.m);

  TrainResult result;
  result.weights = init_weights(config, train);

  WeightMatrix grad;
  double loss = population_loss_and_grad(result.weights, config, grad);
  result.loss_trace.emplace_back(0, loss);

  long long it = 0;
  while (it < train.max_iters && loss > train.loss_tol) {
    result.weights -= eta * grad;
    ++it;
    loss = population_loss_and_grad(result.weights, config, grad);
    check_finite_loss(loss, it);
    if (it % train.trace_stride == 0) {
      result.loss_trace.emplace_back(it, loss);
    }
  }

  if (result.loss_trace.back().first != it) {
    result.loss_trace.emplace_back(it, loss);
  }
  result.final_loss = loss;
  result.iterations = it;
  result.converged = loss <= train.loss_tol;
  return result;
}

WeightMatrix empirical_grad(const WeightMatrix& W, const ProblemConfig& config,
                            const Eigen::MatrixXd& X) {
  config.validate();
  check_shape(W, config);
  if (X.cols() != config.d) {
    throw ShapeError("empirical_grad: inputs have wrong dimension");
  }
  const int B = static_cast<int>(X.rows());
  if (B < 1) throw ShapeError("empirical_grad: empty batch");

  // Pre-activations for the whole batch; the ReLU subgradient at 0 is 0,
  // so only strictly positive units propagate.
  const Eigen::MatrixXd pre = X * W.transpose();  // B x m
  WeightMatrix grad = WeightMatrix::Zero(config.m, config.d);
  for (int b = 0; b < B; ++b) {
    double f = 0.0;
    for (int i = 0; i < config.m; ++i) {
      if (pre(b, i) > 0.0) f += pre(b, i);
    }
    double f_star = 0.0;
    for (int j = 0; j < config.M; ++j) {
      if (X(b, j) > 0.0) f_star += X(b, j);
    }
    const double resid = f - f_star;
    if (resid == 0.0) continue;
    for (int i = 0; i < config.m; ++i) {
      if (pre(b, i) > 0.0) grad.row(i) += resid * X.row(b);
    }
  }
  grad *= 2.0 / B;
  return grad;
}

TrainResult train_sgd(const ProblemConfig& config, const TrainConfig& train) {
  config.validate();
  train.validate();
  const double eta = step_size(train, config.m);

  TrainResult result;
  result.weights = init_weights(config, train);
  // Minibatches come from a derived stream so they are independent of the
  // init draws, which consumed the raw seed.
  Rng rng(Rng::derive(train.seed, {1}));

  double loss = population_loss(result.weights, config);
  result.loss_trace.emplace_back(0, loss);
  if (loss <= train.loss_tol) {
    result.final_loss = loss;
    result.converged = true;
    return result;
  }

  long long it = 0;
  while (it < train.max_iters) {
    const Eigen::MatrixXd X = sample_sphere(train.batch, config.d, rng);
    result.weights -= eta * empirical_grad(result.weights, config, X);
    ++it;
    if (it % train.eval_stride == 0 || it == train.max_iters) {
      loss = population_loss(result.weights, config);
      check_finite_loss(loss, it);
      result.loss_trace.emplace_back(it, loss);
      if (loss <= train.loss_tol) break;
    }
  }

  result.final_loss = loss;
  result.iterations = it;
  result.converged = loss <= train.loss_tol;
  return result;
}

}  // namespace lmc
