#include "lmc/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "lmc/error.hpp"
#include "lmc/rng.hpp"

namespace lmc {

namespace {

// Row indices of each label class, with the typed classes ordered by
// descending coordinate magnitude (ties by ascending row index) and the
// zero class left in ascending row order.
std::vector<std::vector<int>> ranked_by_type(const WeightMatrix& W,
                                             const ClassifiedSolution& c,
                                             int M) {
  std::vector<std::vector<int>> by_type(M + 1);
  for (int i = 0; i < static_cast<int>(c.labels.size()); ++i) {
    by_type[c.labels[i]].push_back(i);
  }
  for (int j = 1; j <= M; ++j) {
    std::sort(by_type[j].begin(), by_type[j].end(), [&](int a, int b) {
      const double va = std::abs(W(a, j - 1));
      const double vb = std::abs(W(b, j - 1));
      if (va != vb) return va > vb;
      return a < b;
    });
  }
  return by_type;
}

}  // namespace

WeightMatrix Permutation::apply(const WeightMatrix& W) const {
  if (static_cast<int>(source.size()) != W.rows()) {
    throw ShapeError("permutation length does not match the row count");
  }
  if (!is_valid()) throw DomainError("permutation is not a bijection");
  WeightMatrix out(W.rows(), W.cols());
  for (int r = 0; r < W.rows(); ++r) out.row(r) = W.row(source[r]);
  return out;
}

bool Permutation::is_valid() const {
  const int n = static_cast<int>(source.size());
  std::vector<char> seen(n, 0);
  for (int s : source) {
    if (s < 0 || s >= n || seen[s]) return false;
    seen[s] = 1;
  }
  return true;
}

int overlap(const TypeVector& a1, const TypeVector& a2) {
  if (a1.M() != a2.M()) {
    throw ShapeError("overlap: type vectors have different teacher widths");
  }
  const auto nonneg = [](const TypeVector& a) {
    return std::all_of(a.alpha.begin(), a.alpha.end(),
                       [](int x) { return x >= 0; });
  };
  if (!nonneg(a1) || !nonneg(a2)) {
    throw DomainError("overlap: type vectors must be nonnegative");
  }
  if (a1.sum() != a2.sum()) {
    throw DomainError("overlap: type vectors imply different student widths");
  }
  int c = a1.M();
  for (int j = 0; j < a1.M(); ++j) {
    c += std::min(a1.alpha[j], a2.alpha[j]);
  }
  return c;
}

double expected_overlap_exact(int m, int M) {
  if (M < 1 || m < M) throw DomainError("expected_overlap_exact: need m >= M >= 1");
  const int n = m - M;
  if (n > 4096) {
    throw SizeError("expected_overlap_exact: m - M = " + std::to_string(n) +
                    " exceeds 4096; use the Monte Carlo estimator");
  }
  if (n == 0 || M == 1) return 1.0;

  // Binomial(n, 1/M) pmf in log space; n*log(1-1/M) underflows a direct
  // product long before n = 4096.
  const double log_p = -std::log(static_cast<double>(M));
  const double log_1mp = std::log1p(-1.0 / M);
  std::vector<double> pmf(n + 1);
  const double lg_n = std::lgamma(n + 1.0);
  for (int k = 0; k <= n; ++k) {
    const double log_pmf = lg_n - std::lgamma(k + 1.0) -
                           std::lgamma(n - k + 1.0) + k * log_p +
                           (n - k) * log_1mp;
    pmf[k] = std::exp(log_pmf);
  }

  double mean_abs_diff = 0.0;
  for (int x = 0; x <= n; ++x) {
    for (int y = 0; y <= n; ++y) {
      mean_abs_diff += pmf[x] * pmf[y] * std::abs(x - y);
    }
  }
  return 1.0 - (static_cast<double>(M) / (2.0 * m)) * mean_abs_diff;
}

McEstimate expected_overlap_mc(int m, int M, long long n, std::uint64_t seed) {
  if (M < 1 || m < M) throw DomainError("expected_overlap_mc: need m >= M >= 1");
  if (n < 1) throw ConfigError("expected_overlap_mc: n must be >= 1");

  Rng rng(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (long long b = 0; b < n; ++b) {
    const std::vector<int> a1 = rng.multinomial_uniform(m - M, M);
    const std::vector<int> a2 = rng.multinomial_uniform(m - M, M);
    int c = M;
    for (int j = 0; j < M; ++j) c += std::min(a1[j], a2[j]);
    const double p = static_cast<double>(c) / m;
    sum += p;
    sum_sq += p * p;
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

double limit_overlap(double t) {
  if (!(t > 0.0 && t <= 1.0)) {
    throw DomainError("limit_overlap: t must lie in (0, 1]");
  }
  return 1.0 - std::sqrt(t * (1.0 - t) / std::numbers::pi);
}

std::pair<Permutation, MatchReport> best_permutation(
    const WeightMatrix& W1, const WeightMatrix& W2,
    const ProblemConfig& config) {
  const ClassifiedSolution c1 = classify(W1, config);
  const ClassifiedSolution c2 = classify(W2, config);
  return best_permutation(W1, W2, config, c1, c2);
}

std::pair<Permutation, MatchReport> best_permutation(
    const WeightMatrix& W1, const WeightMatrix& W2, const ProblemConfig& config,
    const ClassifiedSolution& c1, const ClassifiedSolution& c2) {
  config.validate();
  check_shape(W1, config);
  check_shape(W2, config);
  const int m = config.m;
  const int M = config.M;

  const std::vector<std::vector<int>> r1 = ranked_by_type(W1, c1, M);
  const std::vector<std::vector<int>> r2 = ranked_by_type(W2, c2, M);

  MatchReport report;
  report.matched_sets.resize(M);
  report.counts_1.resize(M);
  report.counts_2.resize(M);
  report.matched_mass.assign(M, {0.0, 0.0});

  std::vector<int> source(m, -1);
  std::vector<char> slot_taken(m, 0);
  std::vector<char> row_taken(m, 0);

  for (int j = 1; j <= M; ++j) {
    report.counts_1[j - 1] = static_cast<int>(r1[j].size());
    report.counts_2[j - 1] = static_cast<int>(r2[j].size());
    const std::size_t k = std::min(r1[j].size(), r2[j].size());
    for (std::size_t t = 0; t < k; ++t) {
      const int slot = r1[j][t];
      const int row = r2[j][t];
      source[slot] = row;
      slot_taken[slot] = 1;
      row_taken[row] = 1;
      report.matched_sets[j - 1].push_back(slot);
      report.matched_mass[j - 1].first += W1(slot, j - 1);
      report.matched_mass[j - 1].second += W2(row, j - 1);
    }
    report.overlap_C += static_cast<int>(k);
  }
  report.proportion_P = static_cast<double>(report.overlap_C) / m;

  // Only typed matches count toward C; everything below just completes the
  // bijection. Unmatched lists record the rows outside every I_j.
  for (int i = 0; i < m; ++i) {
    if (!slot_taken[i]) report.unmatched_1.push_back(i);
  }
  for (int i = 0; i < m; ++i) {
    if (!row_taken[i]) report.unmatched_2.push_back(i);
  }

  // Zero rows of W2 go to zero-row slots while both last; everything still
  // unpaired afterwards is filled in ascending index order on both sides.
  const std::size_t z = std::min(r1[0].size(), r2[0].size());
  for (std::size_t t = 0; t < z; ++t) {
    source[r1[0][t]] = r2[0][t];
    slot_taken[r1[0][t]] = 1;
    row_taken[r2[0][t]] = 1;
  }
  {
    std::size_t t = 0;
    std::vector<int> free_rows;
    for (int i = 0; i < m; ++i) {
      if (!row_taken[i]) free_rows.push_back(i);
    }
    for (int i = 0; i < m; ++i) {
      if (source[i] == -1) source[i] = free_rows[t++];
    }
  }

  Permutation perm{std::move(source)};
  return {std::move(perm), std::move(report)};
}

BarrierProfile barrier(const WeightMatrix& W1, const WeightMatrix& W2,
                       const ProblemConfig& config, int grid_points) {
  config.validate();
  check_shape(W1, config);
  check_shape(W2, config);
  if (grid_points < 2) throw ConfigError("barrier: grid_points must be >= 2");

  BarrierProfile profile;
  profile.endpoint_losses = {population_loss(W1, config),
                             population_loss(W2, config)};
  profile.lambdas.resize(grid_points);
  profile.losses.resize(grid_points);

  double worst = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid_points; ++k) {
    const double lam = static_cast<double>(k) / (grid_points - 1);
    const WeightMatrix mid = lam * W1 + (1.0 - lam) * W2;
    const double loss = population_loss(mid, config);
    profile.lambdas[k] = lam;
    profile.losses[k] = loss;
    const double base = lam * profile.endpoint_losses.first +
                        (1.0 - lam) * profile.endpoint_losses.second;
    worst = std::fmax(worst, loss - base);
  }
  profile.barrier = worst;
  return profile;
}

std::pair<BarrierProfile, MatchReport> barrier_modulo_permutation(
    const WeightMatrix& W1, const WeightMatrix& W2, const ProblemConfig& config,
    int grid_points) {
  auto [perm, report] = best_permutation(W1, W2, config);
  BarrierProfile profile = barrier(W1, perm.apply(W2), config, grid_points);
  return {std::move(profile), std::move(report)};
}

}  // namespace lmc
