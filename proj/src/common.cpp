#include "lmc/common.hpp"

#include <string>

#include "lmc/error.hpp"

namespace lmc {

void ProblemConfig::validate() const {
  if (M < 1) throw ConfigError("ProblemConfig: M must be >= 1");
  if (d < M) throw ConfigError("ProblemConfig: d must be >= M");
  if (m < 1) throw ConfigError("ProblemConfig: m must be >= 1");
}

void check_shape(const WeightMatrix& W, const ProblemConfig& config) {
  if (W.rows() != config.m || W.cols() != config.d) {
    throw ShapeError("weight matrix is " + std::to_string(W.rows()) + "x" +
                     std::to_string(W.cols()) + ", expected " +
                     std::to_string(config.m) + "x" + std::to_string(config.d));
  }
}

}  // namespace lmc
