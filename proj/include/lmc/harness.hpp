#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmc/common.hpp"
#include "lmc/train.hpp"

namespace lmc::harness {

enum class Experiment {
  OverlapCurve,      // overlap proportion of independent uniform draws vs m
  BarrierCurve,      // direct and permuted barriers over a width grid
  NormalizedBarrier, // barrier_curve plus the permuted/direct ratio table
  DoubleDescent,     // permuted barrier across the under/over-realized divide
  PqiVsWidth,        // row-norm PQ index of GD vs uniform solutions, by width
  PqiVsLr,           // sparsity of GD solutions across learning rates
  UniformValidation, // occupancy counts / sorted entries of trained solutions
  DecaySlope,        // log-log slope of the permuted barrier in m
};

enum class SolutionSource { Uniform, Gd, Sgd };

Experiment experiment_from_string(const std::string& name);
std::string to_string(Experiment e);
SolutionSource source_from_string(const std::string& name);
std::string to_string(SolutionSource s);

struct ProblemTriple {
  int m = 1;
  int M = 1;
  int d = 2;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::OverlapCurve;
  // Cells to sweep; sorted lexicographically by (m, M, d) at parse time so
  // output order never depends on how the config listed them.
  std::vector<ProblemTriple> grid;
  SolutionSource solution_source = SolutionSource::Uniform;
  long long replicates = 1;
  std::uint64_t base_seed = 0;
  TrainConfig train;
  std::string output_dir = "out";
  int grid_points = 11;             // barrier lambda grid
  std::vector<double> lr_values;    // learning-rate sweeps
  int threads = 0;                  // 0 means hardware concurrency

  void validate() const;
};

// Strict parse: unknown keys anywhere are a ConfigError. The grid is given
// either as "grid": [[m,M,d], ...] or as "m_values" with scalar "M", "d".
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

// One metric of one replicate. Error replicates carry metric "error" with a
// numeric category code instead of aborting the sweep.
struct ResultRow {
  std::string experiment;
  int m = 0;
  int M = 0;
  int d = 0;
  // -1 marks a per-cell row that is independent of any replicate.
  long long replicate = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
  // Flagged nulls (for example a barrier ratio over a zero denominator)
  // serialize as the literal "null" rather than NaN.
  bool null_value = false;
};

// Error category codes recorded in "error" rows.
inline constexpr double kErrorRegime = 1.0;
inline constexpr double kErrorDivergence = 2.0;
inline constexpr double kErrorClassification = 3.0;
inline constexpr double kErrorOther = 4.0;

struct RunOutput {
  std::string results_path;
  std::string manifest_path;
  long long rows = 0;
  nlohmann::json analysis;
};

// Runs the experiment, writing results.csv, manifest.json and a plot stub
// into output_dir. Replicates execute in a thread pool, but rows are merged
// in (cell, replicate) order, so the CSV bytes do not depend on the thread
// count. Rerunning an identical config reproduces the CSVs byte for byte.
RunOutput run(const ExperimentConfig& config);

// Barrier ratio table derived from the rows of a barrier-style run.
struct NormalizedBarrierRow {
  int m = 0;
  int M = 0;
  int d = 0;
  double m_over_M = 0.0;
  double direct_mean = 0.0;
  double permuted_mean = 0.0;
  double ratio = 0.0;
  // Set when direct_mean < 1e-12 and the ratio is meaningless.
  bool flagged = false;
};
std::vector<NormalizedBarrierRow> normalized_barrier_summary(
    const std::vector<ResultRow>& rows);

double least_squares_slope(const std::vector<double>& x,
                           const std::vector<double>& y);

// Seed plumbing. The seed recorded on a row is base_seed + replicate; every
// stream a replicate consumes is derived from that together with the cell,
// so a row can be regenerated in isolation.
std::uint64_t replicate_seed(std::uint64_t base_seed, long long replicate);
std::uint64_t stream_seed(std::uint64_t rep_seed, const ProblemTriple& cell,
                          std::uint64_t stream);

}  // namespace lmc::harness
