#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lmc/common.hpp"
#include "lmc/kernel.hpp"
#include "lmc/manifold.hpp"

namespace lmc {

// Row permutation. Row r of the permuted matrix is source[r] of the input.
struct Permutation {
  std::vector<int> source;

  WeightMatrix apply(const WeightMatrix& W) const;
  bool is_valid() const;
};

// What the matcher did, per teacher type.
struct MatchReport {
  // Slot indices (rows of W1) matched within each type j = 1..M.
  std::vector<std::vector<int>> matched_sets;
  // Rows not matched within any type, ascending. unmatched_1 holds W1 slot
  // indices, unmatched_2 holds original W2 row indices.
  std::vector<int> unmatched_1;
  std::vector<int> unmatched_2;
  // Per-type neuron counts of the two inputs.
  std::vector<int> counts_1;
  std::vector<int> counts_2;
  // Summed type-coordinate values over matched rows, per type, for (W1, W2).
  std::vector<std::pair<double, double>> matched_mass;
  int overlap_C = 0;
  double proportion_P = 0.0;
};

// Overlap statistic sum_j min(a1_j, a2_j) + M of two occupancy vectors with
// the same teacher width and the same implied student width.
int overlap(const TypeVector& a1, const TypeVector& a2);

// Exact expected overlap proportion T(m, M) of two independent uniform
// manifold draws: 1 - (M / 2m) E|X - Y| with X, Y iid Binomial(m-M, 1/M).
// Refuses m - M > 4096 (SizeError); use the Monte Carlo form there.
double expected_overlap_exact(int m, int M);

// Monte Carlo estimate of the same quantity from n independent pairs.
McEstimate expected_overlap_mc(int m, int M, long long n, std::uint64_t seed);

// Large-width limit of T(m, M) along M/m -> t in (0, 1]:
// 1 - sqrt(t (1 - t) / pi).
double limit_overlap(double t);

// Greedy per-type matching: within each type, the k-th largest neuron of W2
// goes to the slot of the k-th largest neuron of W1 (ties broken by
// ascending row index); zero rows pair with zero-row slots first; leftovers
// fill remaining slots in ascending index order on both sides. The first
// overload classifies strictly and so throws ClassificationError off the
// manifold; the second takes any labelings.
std::pair<Permutation, MatchReport> best_permutation(const WeightMatrix& W1,
                                                     const WeightMatrix& W2,
                                                     const ProblemConfig& config);
std::pair<Permutation, MatchReport> best_permutation(
    const WeightMatrix& W1, const WeightMatrix& W2, const ProblemConfig& config,
    const ClassifiedSolution& c1, const ClassifiedSolution& c2);

struct BarrierProfile {
  std::vector<double> lambdas;
  std::vector<double> losses;
  // (L(W1), L(W2)); lambda = 1 is the W1 end.
  std::pair<double, double> endpoint_losses{0.0, 0.0};
  // max over the grid of loss minus the linear interpolation of the
  // endpoint losses. Nonnegative up to round-off.
  double barrier = 0.0;
};

// Population loss along the segment lambda W1 + (1 - lambda) W2 on a
// uniform lambda grid (grid_points >= 2).
BarrierProfile barrier(const WeightMatrix& W1, const WeightMatrix& W2,
                       const ProblemConfig& config, int grid_points = 11);

// Barrier after aligning W2 to W1 with best_permutation.
std::pair<BarrierProfile, MatchReport> barrier_modulo_permutation(
    const WeightMatrix& W1, const WeightMatrix& W2, const ProblemConfig& config,
    int grid_points = 11);

}  // namespace lmc
