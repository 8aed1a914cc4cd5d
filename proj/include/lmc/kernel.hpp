#pragma once

#include <cstdint>

#include "lmc/common.hpp"
#include "lmc/rng.hpp"

namespace lmc {

// Arc-cosine kernel of the ReLU feature map under the uniform distribution
// on the unit sphere in R^d:
//
//   kappa(t) = ((pi - arccos t) * t + sqrt(1 - t^2)) / (2 pi d)
//
// for t = cos(angle between two unit vectors). kappa(1) = 1/(2d),
// kappa(0) = 1/(2 pi d), kappa(-1) = 0.
//
// Arguments are clamped into [-1, 1] when within 1e-12 of the boundary;
// anything further out signals corrupted normalization upstream and throws
// DomainError.
double kappa(double t, int d);

// d/dt kappa(t) = (pi - arccos t) / (2 pi d).
double kappa_prime(double t, int d);

// Exact population loss of the student W against the axis-aligned teacher,
//
//   L(W) = sum_{i,i'} |w_i||w_i'| kappa(u_i . u_i')
//        + M kappa(1) + M(M-1) kappa(0)
//        - 2 sum_{i,j<=M} |w_i| kappa(u_i . e_j),
//
// with u_i = w_i / |w_i| and zero rows contributing nothing. Values in
// [-1e-12, 0) clamp to zero; below that DomainError is thrown.
double population_loss(const WeightMatrix& W, const ProblemConfig& config);

// Analytic gradient of population_loss. Rows of norm <= 1e-12 get a zero
// gradient row (limit convention at the ReLU kink).
WeightMatrix population_grad(const WeightMatrix& W, const ProblemConfig& config);

// Loss and gradient in one pass over the Gram matrix; this is the form the
// training loop calls.
double population_loss_and_grad(const WeightMatrix& W,
                                const ProblemConfig& config,
                                WeightMatrix& grad);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long long n_samples = 0;
  std::uint64_t seed = 0;
};

// Monte Carlo estimate of the population loss from n inputs drawn uniformly
// on the sphere. Same (W, n, seed) gives a bit-identical estimate.
McEstimate mc_loss(const WeightMatrix& W, const ProblemConfig& config,
                   long long n, std::uint64_t seed);

// n x d matrix of rows drawn uniformly on the unit sphere in R^d.
Eigen::MatrixXd sample_sphere(int n, int d, Rng& rng);

}  // namespace lmc
