#include "lmc/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "lmc/error.hpp"
#include "lmc/rng.hpp"

namespace lmc {

namespace {

// Largest and second-largest entry magnitudes of a row.
std::pair<double, double> top_two_magnitudes(const WeightMatrix& W, int i) {
  double first = 0.0;
  double second = 0.0;
  for (int j = 0; j < W.cols(); ++j) {
    const double a = std::abs(W(i, j));
    if (a > first) {
      second = first;
      first = a;
    } else if (a > second) {
      second = a;
    }
  }
  return {first, second};
}

}  // namespace

int TypeVector::sum() const {
  return std::accumulate(alpha.begin(), alpha.end(), 0);
}

bool TypeVector::valid_for(int m, int M_) const {
  if (static_cast<int>(alpha.size()) != M_) return false;
  if (std::any_of(alpha.begin(), alpha.end(), [](int a) { return a < 0; }))
    return false;
  return sum() == m - M_;
}

bool ClassifiedSolution::covers_all_types() const {
  return std::all_of(alpha.alpha.begin(), alpha.alpha.end(),
                     [](int a) { return a >= 0; });
}

int ClassifiedSolution::zero_label_count() const {
  return static_cast<int>(std::count(labels.begin(), labels.end(), 0));
}

bool is_global_min(const WeightMatrix& W, const ProblemConfig& config,
                   double tol) {
  config.validate();
  check_shape(W, config);
  if (config.m < config.M) {
    throw RegimeError("is_global_min: undefined for m < M");
  }
  const int M = config.M;

  for (int i = 0; i < config.m; ++i) {
    int above = 0;
    for (int j = 0; j < M; ++j) {
      const double v = W(i, j);
      if (std::abs(v) > tol) {
        if (v < 0.0) return false;  // nonzero mass must be positive
        ++above;
      }
    }
    if (above > 1) return false;  // a row may carry one teacher direction
    for (int j = M; j < config.d; ++j) {
      if (std::abs(W(i, j)) > tol) return false;  // outside the teacher span
    }
  }

  for (int j = 0; j < M; ++j) {
    if (std::abs(W.col(j).sum() - 1.0) > tol) return false;
    bool occupied = false;
    for (int i = 0; i < config.m; ++i) {
      if (W(i, j) > tol) {
        occupied = true;
        break;
      }
    }
    if (!occupied) return false;  // every type needs at least one neuron
  }
  return true;
}

ClassifiedSolution classify(const WeightMatrix& W, const ProblemConfig& config,
                            double tol) {
  config.validate();
  check_shape(W, config);
  const int M = config.M;

  ClassifiedSolution out;
  out.labels.assign(config.m, 0);
  std::vector<int> counts(M, 0);

  for (int i = 0; i < config.m; ++i) {
    int label = 0;
    for (int j = 0; j < config.d; ++j) {
      const double v = W(i, j);
      if (std::abs(v) <= tol) continue;
      if (j >= M) {
        throw ClassificationError(
            i, "row " + std::to_string(i) +
                   " has mass outside the teacher span (column " +
                   std::to_string(j) + ")");
      }
      if (v < 0.0) {
        throw ClassificationError(i, "row " + std::to_string(i) +
                                         " has a negative entry in column " +
                                         std::to_string(j));
      }
      if (label != 0) {
        throw ClassificationError(i, "row " + std::to_string(i) +
                                         " has two entries above tolerance");
      }
      label = j + 1;
    }
    out.labels[i] = label;
    if (label != 0) ++counts[label - 1];
    out.residual = std::max(out.residual, top_two_magnitudes(W, i).second);
  }

  out.alpha.alpha.resize(M);
  for (int j = 0; j < M; ++j) out.alpha.alpha[j] = counts[j] - 1;
  return out;
}

ClassifiedSolution classify_dominant(const WeightMatrix& W,
                                     const ProblemConfig& config,
                                     double zero_tol) {
  config.validate();
  check_shape(W, config);
  const int M = config.M;

  ClassifiedSolution out;
  out.labels.assign(config.m, 0);
  std::vector<int> counts(M, 0);

  for (int i = 0; i < config.m; ++i) {
    if (W.row(i).norm() <= zero_tol) {
      out.labels[i] = 0;
    } else {
      int best = 0;
      for (int j = 1; j < M; ++j) {
        if (std::abs(W(i, j)) > std::abs(W(i, best))) best = j;
      }
      out.labels[i] = best + 1;
      ++counts[best];
    }
    out.residual = std::max(out.residual, top_two_magnitudes(W, i).second);
  }

  out.alpha.alpha.resize(M);
  for (int j = 0; j < M; ++j) out.alpha.alpha[j] = counts[j] - 1;
  return out;
}

WeightMatrix sample_uniform(const ProblemConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.m < config.M) {
    throw RegimeError("sample_uniform: the manifold requires m >= M");
  }

  Rng rng(seed);
  const std::vector<int> alpha =
      rng.multinomial_uniform(config.m - config.M, config.M);

  std::vector<int> slots(config.m);
  std::iota(slots.begin(), slots.end(), 0);
  rng.shuffle(slots);

  WeightMatrix W = WeightMatrix::Zero(config.m, config.d);
  int next = 0;
  for (int j = 0; j < config.M; ++j) {
    const int count = alpha[j] + 1;
    std::vector<double> z(count);
    double total = 0.0;
    for (int k = 0; k < count; ++k) {
      z[k] = rng.exponential();
      total += z[k];
    }
    for (int k = 0; k < count; ++k) {
      W(slots[next++], j) = z[k] / total;
    }
  }
  return W;
}

}  // namespace lmc
