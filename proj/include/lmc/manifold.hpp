#pragma once

#include <cstdint>
#include <vector>

#include "lmc/common.hpp"

namespace lmc {

// Occupancy pattern of the teacher types in a zero-loss solution: type j is
// carried by alpha[j-1] + 1 student neurons. Valid when every entry is
// nonnegative and the entries sum to m - M.
struct TypeVector {
  std::vector<int> alpha;

  int M() const { return static_cast<int>(alpha.size()); }
  int sum() const;
  bool valid_for(int m, int M) const;
};

// Row labels and occupancy of a (near-)structured weight matrix.
struct ClassifiedSolution {
  // Per row: 0 for a zero row, j in 1..M for a multiple of the teacher e_j.
  std::vector<int> labels;
  // Per type: neuron count minus one. Entries can be -1 when a type has no
  // neuron at all, which only happens off the manifold.
  TypeVector alpha;
  // Largest second-largest entry magnitude over rows; 0 for exactly
  // structured matrices.
  double residual = 0.0;

  int type_count(int j) const { return alpha.alpha[j - 1] + 1; }
  bool covers_all_types() const;
  int zero_label_count() const;
};

// Whether W is a global minimizer in the exactly/over-realized regime
// (m >= M): every row is a nonnegative multiple of some teacher direction,
// nothing lives outside the teacher span, each teacher column sums to 1,
// and every type is represented. Throws RegimeError when m < M.
bool is_global_min(const WeightMatrix& W, const ProblemConfig& config,
                   double tol = 1e-8);

// Labels each row by its single above-tolerance coordinate. Throws
// ClassificationError if a row has two above-tolerance entries, a negative
// above-tolerance entry, or mass outside the teacher span.
ClassifiedSolution classify(const WeightMatrix& W, const ProblemConfig& config,
                            double tol = 1e-4);

// Tolerant variant used for matching far from the manifold: labels each row
// by its largest-magnitude coordinate among the first M (rows of norm at
// most zero_tol get label 0). Never throws.
ClassifiedSolution classify_dominant(const WeightMatrix& W,
                                     const ProblemConfig& config,
                                     double zero_tol = 1e-6);

// Draws from the uniform distribution on the global-minima manifold:
// occupancy from Multinomial(m - M; 1/M, ..., 1/M), per-type values from
// normalized Exp(1) draws (uniform on the simplex), rows placed by a random
// permutation of the slots. Throws RegimeError when m < M.
WeightMatrix sample_uniform(const ProblemConfig& config, std::uint64_t seed);

}  // namespace lmc
