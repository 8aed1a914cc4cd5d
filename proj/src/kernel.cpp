#include "lmc/kernel.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lmc/error.hpp"

namespace lmc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kClampTol = 1e-12;

double checked_clamp(double t) {
  if (std::abs(t) > 1.0 + kClampTol) {
    throw DomainError("kernel argument " + std::to_string(t) +
                      " is outside [-1, 1] beyond tolerance");
  }
  return t < -1.0 ? -1.0 : (t > 1.0 ? 1.0 : t);
}

// kappa, kappa' and the combination g(t) = kappa(t) - t kappa'(t)
// = sqrt(1 - t^2) / (2 pi d), which is what the gradient needs.
struct KernelValues {
  double k;
  double kp;
  double g;
};

inline KernelValues eval_kernel(double t, double inv_2pid) {
  t = checked_clamp(t);
  const double a = kPi - std::acos(t);
  const double s = std::sqrt(std::fmax(0.0, 1.0 - t * t));
  return {(a * t + s) * inv_2pid, a * inv_2pid, s * inv_2pid};
}

// Shared implementation; grad may be null for the loss-only path.
double loss_core(const WeightMatrix& W, const ProblemConfig& config,
                 WeightMatrix* grad) {
  config.validate();
  check_shape(W, config);
  const int m = config.m;
  const int M = config.M;
  const int d = config.d;
  const double inv_2pid = 1.0 / (2.0 * kPi * d);
  const double k1 = kPi * inv_2pid;  // kappa(1) = 1/(2d)
  const double k0 = inv_2pid;        // kappa(0)

  Eigen::VectorXd r(m);
  std::vector<char> live(m);
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(m, d);
  for (int i = 0; i < m; ++i) {
    r(i) = W.row(i).norm();
    live[i] = r(i) > kZeroRowNorm;
    if (live[i]) U.row(i) = W.row(i) / r(i);
  }
  const Eigen::MatrixXd G = U * U.transpose();

  if (grad) grad->setZero(m, d);

  // Teacher-teacher block: M unit neurons, pairwise orthogonal.
  double loss = M * k1 + static_cast<double>(M) * (M - 1) * k0;

  for (int i = 0; i < m; ++i) {
    if (!live[i]) continue;
    loss += r(i) * r(i) * k1;
    if (grad) grad->row(i) += 2.0 * k1 * W.row(i);
    for (int i2 = i + 1; i2 < m; ++i2) {
      if (!live[i2]) continue;
      const KernelValues kv = eval_kernel(G(i, i2), inv_2pid);
      loss += 2.0 * r(i) * r(i2) * kv.k;
      if (grad) {
        grad->row(i) += 2.0 * r(i2) * (kv.g * U.row(i) + kv.kp * U.row(i2));
        grad->row(i2) += 2.0 * r(i) * (kv.g * U.row(i2) + kv.kp * U.row(i));
      }
    }
    for (int j = 0; j < M; ++j) {
      const KernelValues kv = eval_kernel(U(i, j), inv_2pid);
      loss -= 2.0 * r(i) * kv.k;
      if (grad) {
        grad->row(i) -= 2.0 * kv.g * U.row(i);
        (*grad)(i, j) -= 2.0 * kv.kp;
      }
    }
  }

  if (loss < -kLossClampTol) {
    throw DomainError("population loss " + std::to_string(loss) +
                      " is negative beyond round-off");
  }
  return loss < 0.0 ? 0.0 : loss;
}

}  // namespace

double kappa(double t, int d) {
  if (d < 1) throw DomainError("kappa: d must be >= 1");
  t = checked_clamp(t);
  const double s = std::sqrt(std::fmax(0.0, 1.0 - t * t));
  return ((kPi - std::acos(t)) * t + s) / (2.0 * kPi * d);
}

double kappa_prime(double t, int d) {
  if (d < 1) throw DomainError("kappa_prime: d must be >= 1");
  t = checked_clamp(t);
  return (kPi - std::acos(t)) / (2.0 * kPi * d);
}

double population_loss(const WeightMatrix& W, const ProblemConfig& config) {
  return loss_core(W, config, nullptr);
}

WeightMatrix population_grad(const WeightMatrix& W,
                             const ProblemConfig& config) {
  WeightMatrix grad;
  loss_core(W, config, &grad);
  return grad;
}

double population_loss_and_grad(const WeightMatrix& W,
                                const ProblemConfig& config,
                                WeightMatrix& grad) {
  return loss_core(W, config, &grad);
}

Eigen::MatrixXd sample_sphere(int n, int d, Rng& rng) {
  if (n < 0 || d < 1) throw DomainError("sample_sphere: bad dimensions");
  Eigen::MatrixXd X(n, d);
  for (int b = 0; b < n; ++b) {
    double norm2;
    do {
      for (int j = 0; j < d; ++j) X(b, j) = rng.gaussian();
      norm2 = X.row(b).squaredNorm();
    } while (norm2 < 1e-280);
    X.row(b) /= std::sqrt(norm2);
  }
  return X;
}

McEstimate mc_loss(const WeightMatrix& W, const ProblemConfig& config,
                   long long n, std::uint64_t seed) {
  config.validate();
  check_shape(W, config);
  if (n < 1) throw ConfigError("mc_loss: n must be >= 1");

  Rng rng(seed);
  Eigen::VectorXd x(config.d);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (long long b = 0; b < n; ++b) {
    double norm2;
    do {
      for (int j = 0; j < config.d; ++j) x(j) = rng.gaussian();
      norm2 = x.squaredNorm();
    } while (norm2 < 1e-280);
    x /= std::sqrt(norm2);

    double f = 0.0;
    for (int i = 0; i < config.m; ++i) {
      const double z = W.row(i).dot(x);
      if (z > 0.0) f += z;
    }
    double f_star = 0.0;
    for (int j = 0; j < config.M; ++j) {
      if (x(j) > 0.0) f_star += x(j);
    }
    const double y = (f - f_star) * (f - f_star);
    sum += y;
    sum_sq += y * y;
  }

  McEstimate est;
  est.n_samples = n;
  est.seed = seed;
  est.mean = sum / static_cast<double>(n);
  if (n > 1) {
    const double var =
        std::fmax(0.0, (sum_sq - static_cast<double>(n) * est.mean * est.mean) /
                           static_cast<double>(n - 1));
    est.std_error = std::sqrt(var / static_cast<double>(n));
  }
  return est;
}

}  // namespace lmc
