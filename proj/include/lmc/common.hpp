#pragma once

#include <Eigen/Dense>

namespace lmc {

// Student weights, one row per neuron. The teacher is implicit: M unit-norm
// neurons along the first M coordinate axes.
using WeightMatrix = Eigen::MatrixXd;

// Dimensions of a teacher-student instance.
struct ProblemConfig {
  int m = 1;  // student width
  int M = 1;  // teacher width
  int d = 2;  // input dimension

  // Throws ConfigError unless d >= M >= 1 and m >= 1.
  void validate() const;
};

// Throws ShapeError unless W is m x d.
void check_shape(const WeightMatrix& W, const ProblemConfig& config);

// Negative population losses below this magnitude are round-off and clamp
// to zero; anything more negative is treated as corruption.
inline constexpr double kLossClampTol = 1e-12;

// Rows with Euclidean norm at or below this are treated as exactly zero in
// the kernel expansion (the ReLU of the zero function is zero).
inline constexpr double kZeroRowNorm = 1e-12;

}  // namespace lmc
