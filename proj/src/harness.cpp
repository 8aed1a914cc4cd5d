#include "lmc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lmc/align.hpp"
#include "lmc/error.hpp"
#include "lmc/io.hpp"
#include "lmc/kernel.hpp"
#include "lmc/manifold.hpp"
#include "lmc/sparsity.hpp"

namespace lmc::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string format_short(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

double error_code(const Error& e) {
  if (dynamic_cast<const RegimeError*>(&e)) return kErrorRegime;
  if (dynamic_cast<const DivergenceError*>(&e)) return kErrorDivergence;
  if (dynamic_cast<const ClassificationError*>(&e)) return kErrorClassification;
  return kErrorOther;
}

ProblemConfig to_problem(const ProblemTriple& cell) {
  return ProblemConfig{cell.m, cell.M, cell.d};
}

// Appends rows for one replicate of one cell; shared by all experiments.
class RowSink {
 public:
  RowSink(std::vector<ResultRow>& rows, const ExperimentConfig& config,
          const ProblemTriple& cell, long long replicate, std::uint64_t seed)
      : rows_(rows),
        experiment_(to_string(config.experiment)),
        cell_(cell),
        replicate_(replicate),
        seed_(seed) {}

  void push(const std::string& metric, double value) {
    rows_.push_back(ResultRow{experiment_, cell_.m, cell_.M, cell_.d,
                              replicate_, seed_, metric, value, false});
  }

  void push_error(const Error& e, const std::string& suffix = "") {
    push(suffix.empty() ? "error" : "error/" + suffix, error_code(e));
  }

 private:
  std::vector<ResultRow>& rows_;
  std::string experiment_;
  ProblemTriple cell_;
  long long replicate_;
  std::uint64_t seed_;
};

struct Solution {
  WeightMatrix W;
  double final_loss = 0.0;
  bool converged = false;
  bool trained = false;
};

Solution make_solution(SolutionSource source, const ProblemConfig& pc,
                       const TrainConfig& base, std::uint64_t seed) {
  Solution out;
  if (source == SolutionSource::Uniform) {
    out.W = sample_uniform(pc, seed);
    return out;
  }
  TrainConfig tc = base;
  tc.seed = seed;
  tc.mode = source == SolutionSource::Gd ? TrainMode::GD : TrainMode::SGD;
  const TrainResult res =
      tc.mode == TrainMode::GD ? train_gd(pc, tc) : train_sgd(pc, tc);
  out.W = res.weights;
  out.final_loss = res.final_loss;
  out.converged = res.converged;
  out.trained = true;
  return out;
}

void push_endpoint(RowSink& sink, const Solution& s, int which) {
  if (!s.trained) return;
  const std::string n = std::to_string(which);
  sink.push("final_loss_" + n, s.final_loss);
  sink.push("converged_" + n, s.converged ? 1.0 : 0.0);
}

// ---- per-replicate bodies ----------------------------------------------

std::vector<ResultRow> overlap_replicate(const ExperimentConfig& config,
                                         const ProblemTriple& cell,
                                         long long rep) {
  std::vector<ResultRow> rows;
  const std::uint64_t rep_seed = replicate_seed(config.base_seed, rep);
  RowSink sink(rows, config, cell, rep, rep_seed);
  try {
    const ProblemConfig pc = to_problem(cell);
    if (pc.m < pc.M) throw RegimeError("overlap requires m >= M");
    Rng r1(stream_seed(rep_seed, cell, 1));
    Rng r2(stream_seed(rep_seed, cell, 2));
    const std::vector<int> a1 = r1.multinomial_uniform(pc.m - pc.M, pc.M);
    const std::vector<int> a2 = r2.multinomial_uniform(pc.m - pc.M, pc.M);
    int c = pc.M;
    for (int j = 0; j < pc.M; ++j) c += std::min(a1[j], a2[j]);
    sink.push("overlap_P", static_cast<double>(c) / pc.m);
  } catch (const Error& e) {
    sink.push_error(e);
  }
  return rows;
}

std::vector<ResultRow> barrier_replicate(const ExperimentConfig& config,
                                         const ProblemTriple& cell,
                                         long long rep) {
  std::vector<ResultRow> rows;
  const std::uint64_t rep_seed = replicate_seed(config.base_seed, rep);
  RowSink sink(rows, config, cell, rep, rep_seed);
  try {
    const ProblemConfig pc = to_problem(cell);
    const Solution s1 = make_solution(config.solution_source, pc, config.train,
                                      stream_seed(rep_seed, cell, 1));
    const Solution s2 = make_solution(config.solution_source, pc, config.train,
                                      stream_seed(rep_seed, cell, 2));
    push_endpoint(sink, s1, 1);
    push_endpoint(sink, s2, 2);
    const BarrierProfile direct =
        barrier(s1.W, s2.W, pc, config.grid_points);
    sink.push("barrier_direct", direct.barrier);
    try {
      const auto [permuted, report] =
          barrier_modulo_permutation(s1.W, s2.W, pc, config.grid_points);
      sink.push("barrier_permuted", permuted.barrier);
      sink.push("overlap_P", report.proportion_P);
    } catch (const ClassificationError& e) {
      sink.push_error(e);
    }
  } catch (const Error& e) {
    sink.push_error(e);
  }
  return rows;
}

std::vector<ResultRow> double_descent_replicate(const ExperimentConfig& config,
                                                const ProblemTriple& cell,
                                                long long rep) {
  std::vector<ResultRow> rows;
  const std::uint64_t rep_seed = replicate_seed(config.base_seed, rep);
  RowSink sink(rows, config, cell, rep, rep_seed);
  try {
    const ProblemConfig pc = to_problem(cell);
    const Solution s1 = make_solution(SolutionSource::Gd, pc, config.train,
                                      stream_seed(rep_seed, cell, 1));
    const Solution s2 = make_solution(SolutionSource::Gd, pc, config.train,
                                      stream_seed(rep_seed, cell, 2));
    push_endpoint(sink, s1, 1);
    push_endpoint(sink, s2, 2);
    const BarrierProfile direct = barrier(s1.W, s2.W, pc, config.grid_points);
    sink.push("barrier_direct", direct.barrier);
    // Strict classification is undefined below m = M, so the matcher runs
    // on dominant-coordinate labels throughout this experiment.
    const ClassifiedSolution c1 = classify_dominant(s1.W, pc);
    const ClassifiedSolution c2 = classify_dominant(s2.W, pc);
    const auto [perm, report] = best_permutation(s1.W, s2.W, pc, c1, c2);
    const BarrierProfile permuted =
        barrier(s1.W, perm.apply(s2.W), pc, config.grid_points);
    sink.push("barrier_permuted", permuted.barrier);
    sink.push("overlap_P", report.proportion_P);
  } catch (const Error& e) {
    sink.push_error(e);
  }
  return rows;
}

void push_sparsity(RowSink& sink, const WeightMatrix& W,
                   const std::string& tag) {
  sink.push("pq_by_row/" + tag, pq_by_row(W));
  sink.push("pq_flat/" + tag, pq_flat(W));
  sink.push("zero_rows/" + tag, static_cast<double>(zero_rows(W)));
}

std::vector<ResultRow> pqi_vs_width_replicate(const ExperimentConfig& config,
                                              const ProblemTriple& cell,
                                              long long rep) {
  std::vector<ResultRow> rows;
  const std::uint64_t rep_seed = replicate_seed(config.base_seed, rep);
  RowSink sink(rows, config, cell, rep, rep_seed);
  const ProblemConfig pc = to_problem(cell);
  try {
    const WeightMatrix W = sample_uniform(pc, stream_seed(rep_seed, cell, 0));
    push_sparsity(sink, W, "uniform");
  } catch (const Error& e) {
    sink.push_error(e, "uniform");
  }
  for (std::size_t li = 0; li < config.lr_values.size(); ++li) {
    const std::string tag = "gd:lr0=" + format_short(config.lr_values[li]);
    try {
      TrainConfig tc = config.train;
      tc.lr0 = config.lr_values[li];
      const Solution s = make_solution(SolutionSource::Gd, pc, tc,
                                       stream_seed(rep_seed, cell, 100 + li));
      push_sparsity(sink, s.W, tag);
      sink.push("final_loss/" + tag, s.final_loss);
      sink.push("converged/" + tag, s.converged ? 1.0 : 0.0);
    } catch (const Error& e) {
      sink.push_error(e, tag);
    }
  }
  return rows;
}

std::vector<ResultRow> pqi_vs_lr_replicate(const ExperimentConfig& config,
                                           const ProblemTriple& cell,
                                           long long rep) {
  std::vector<ResultRow> rows;
  const std::uint64_t rep_seed = replicate_seed(config.base_seed, rep);
  RowSink sink(rows, config, cell, rep, rep_seed);
  const ProblemConfig pc = to_problem(cell);
  for (std::size_t li = 0; li < config.lr_values.size(); ++li) {
    const std::string tag = "gd:lr0=" + format_short(config.lr_values[li]);
    try {
      TrainConfig tc = config.train;
      tc.lr0 = config.lr_values[li];
      const Solution s = make_solution(SolutionSource::Gd, pc, tc,
                                       stream_seed(rep_seed, cell, 100 + li));
      push_sparsity(sink, s.W, tag);
      sink.push("final_loss/" + tag, s.final_loss);
      sink.push("converged/" + tag, s.converged ? 1.0 : 0.0);
    } catch (const Error& e) {
      sink.push_error(e, tag);
    }
  }
  return rows;
}

std::vector<ResultRow> uniform_validation_replicate(
    const ExperimentConfig& config, const ProblemTriple& cell, long long rep) {
  std::vector<ResultRow> rows;
  const std::uint64_t rep_seed = replicate_seed(config.base_seed, rep);
  RowSink sink(rows, config, cell, rep, rep_seed);
  try {
    const ProblemConfig pc = to_problem(cell);
    const Solution s = make_solution(config.solution_source, pc, config.train,
                                     stream_seed(rep_seed, cell, 1));
    if (s.trained) {
      sink.push("final_loss", s.final_loss);
      sink.push("converged", s.converged ? 1.0 : 0.0);
    }
    const ClassifiedSolution c = classify(s.W, pc);
    for (int j = 0; j < pc.M; ++j) {
      sink.push("alpha_" + std::to_string(j + 1),
                static_cast<double>(c.alpha.alpha[j]));
    }
    if (pc.M == 1) {
      // Single-teacher instances additionally record the sorted neuron
      // values, whose order statistics have a known simplex law.
      std::vector<double> v(pc.m);
      for (int i = 0; i < pc.m; ++i) v[i] = s.W(i, 0);
      std::sort(v.begin(), v.end());
      for (int i = 0; i < pc.m; ++i) {
        sink.push("sorted_entry_" + std::to_string(i + 1), v[i]);
      }
    }
  } catch (const Error& e) {
    sink.push_error(e);
  }
  return rows;
}

std::vector<ResultRow> cell_rows(const ExperimentConfig& config,
                                 const ProblemTriple& cell) {
  std::vector<ResultRow> rows;
  if (config.experiment == Experiment::OverlapCurve) {
    if (cell.m >= cell.M && cell.m - cell.M <= 4096) {
      RowSink sink(rows, config, cell, -1, 0);
      sink.push("expected_overlap_exact",
                expected_overlap_exact(cell.m, cell.M));
    }
  }
  return rows;
}

std::vector<ResultRow> replicate_rows(const ExperimentConfig& config,
                                      const ProblemTriple& cell,
                                      long long rep) {
  switch (config.experiment) {
    case Experiment::OverlapCurve:
      return overlap_replicate(config, cell, rep);
    case Experiment::BarrierCurve:
    case Experiment::NormalizedBarrier:
    case Experiment::DecaySlope:
      return barrier_replicate(config, cell, rep);
    case Experiment::DoubleDescent:
      return double_descent_replicate(config, cell, rep);
    case Experiment::PqiVsWidth:
      return pqi_vs_width_replicate(config, cell, rep);
    case Experiment::PqiVsLr:
      return pqi_vs_lr_replicate(config, cell, rep);
    case Experiment::UniformValidation:
      return uniform_validation_replicate(config, cell, rep);
  }
  throw ConfigError("unhandled experiment");
}

// Runs fn(0..n-1) on a small pool. Results land in caller-owned slots, so
// scheduling order never shows in the output.
void run_parallel(long long n, int threads,
                  const std::function<void(long long)>& fn) {
  int T = threads > 0 ? threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  if (T < 1) T = 1;
  if (n < T) T = static_cast<int>(n);
  if (T <= 1) {
    for (long long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long long> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(T);
  for (int t = 0; t < T; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const long long i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

void write_results_csv(const std::string& path,
                       const std::vector<ResultRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "experiment,m,M,d,replicate,seed,metric,value\n";
  for (const ResultRow& r : rows) {
    out << r.experiment << ',' << r.m << ',' << r.M << ',' << r.d << ','
        << r.replicate << ',' << r.seed << ',' << r.metric << ','
        << (r.null_value ? "null" : format_double(r.value)) << '\n';
  }
}

void write_normalized_summary(const std::string& path,
                              const std::vector<NormalizedBarrierRow>& table) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "m,M,d,m_over_M,barrier_direct_mean,barrier_permuted_mean,ratio,"
         "flagged\n";
  for (const NormalizedBarrierRow& r : table) {
    out << r.m << ',' << r.M << ',' << r.d << ',' << format_double(r.m_over_M)
        << ',' << format_double(r.direct_mean) << ','
        << format_double(r.permuted_mean) << ','
        << (r.flagged ? "null" : format_double(r.ratio)) << ','
        << (r.flagged ? 1 : 0) << '\n';
  }
}

const char* plot_stub(Experiment e) {
  switch (e) {
    case Experiment::OverlapCurve:
      return "#!/usr/bin/env python3\n"
             "\"\"\"Mean overlap proportion against student width, one curve\n"
             "per teacher width, with the exact expectation overlaid.\"\"\"\n"
             "import pandas as pd\n"
             "import matplotlib.pyplot as plt\n\n"
             "df = pd.read_csv(\"results.csv\")\n"
             "obs = df[df.metric == \"overlap_P\"]\n"
             "exact = df[df.metric == \"expected_overlap_exact\"]\n"
             "fig, ax = plt.subplots()\n"
             "for M, g in obs.groupby(\"M\"):\n"
             "    mean = g.groupby(\"m\").value.mean()\n"
             "    ax.plot(mean.index, mean.values, \"o-\", label=f\"M={M} (mc)\")\n"
             "for M, g in exact.groupby(\"M\"):\n"
             "    s = g.set_index(\"m\").value.sort_index()\n"
             "    ax.plot(s.index, s.values, \"k--\", lw=1)\n"
             "ax.set_xlabel(\"m\")\n"
             "ax.set_ylabel(\"overlap proportion\")\n"
             "ax.legend()\n"
             "fig.savefig(\"overlap_curve.png\", dpi=150)\n";
    case Experiment::BarrierCurve:
    case Experiment::NormalizedBarrier:
      return "#!/usr/bin/env python3\n"
             "\"\"\"Mean direct and permuted barriers against student width.\"\"\"\n"
             "import pandas as pd\n"
             "import matplotlib.pyplot as plt\n\n"
             "df = pd.read_csv(\"results.csv\")\n"
             "fig, ax = plt.subplots()\n"
             "for metric in (\"barrier_direct\", \"barrier_permuted\"):\n"
             "    mean = df[df.metric == metric].groupby(\"m\").value.mean()\n"
             "    ax.plot(mean.index, mean.values, \"o-\", label=metric)\n"
             "ax.set_xlabel(\"m\")\n"
             "ax.set_ylabel(\"barrier\")\n"
             "ax.legend()\n"
             "fig.savefig(\"barrier_curve.png\", dpi=150)\n";
    case Experiment::DoubleDescent:
      return "#!/usr/bin/env python3\n"
             "\"\"\"Permuted barrier across the under/over-realized divide.\"\"\"\n"
             "import pandas as pd\n"
             "import matplotlib.pyplot as plt\n\n"
             "df = pd.read_csv(\"results.csv\")\n"
             "mean = df[df.metric == \"barrier_permuted\"].groupby(\"m\").value.mean()\n"
             "fig, ax = plt.subplots()\n"
             "ax.plot(mean.index, mean.values, \"o-\")\n"
             "ax.set_xlabel(\"m\")\n"
             "ax.set_ylabel(\"permuted barrier\")\n"
             "fig.savefig(\"double_descent.png\", dpi=150)\n";
    case Experiment::PqiVsWidth:
      return "#!/usr/bin/env python3\n"
             "\"\"\"Row-norm PQ index against width for each solution source.\"\"\"\n"
             "import pandas as pd\n"
             "import matplotlib.pyplot as plt\n\n"
             "df = pd.read_csv(\"results.csv\")\n"
             "rows = df[df.metric.str.startswith(\"pq_by_row/\")]\n"
             "fig, ax = plt.subplots()\n"
             "for tag, g in rows.groupby(rows.metric.str.split(\"/\").str[1]):\n"
             "    mean = g.groupby(\"m\").value.mean()\n"
             "    ax.plot(mean.index, mean.values, \"o-\", label=tag)\n"
             "ax.set_xscale(\"log\")\n"
             "ax.set_xlabel(\"m\")\n"
             "ax.set_ylabel(\"pq_by_row\")\n"
             "ax.legend()\n"
             "fig.savefig(\"pqi_vs_width.png\", dpi=150)\n";
    case Experiment::PqiVsLr:
      return "#!/usr/bin/env python3\n"
             "\"\"\"Sparsity of GD solutions against the learning rate.\"\"\"\n"
             "import pandas as pd\n"
             "import matplotlib.pyplot as plt\n\n"
             "df = pd.read_csv(\"results.csv\")\n"
             "def lr_of(metric):\n"
             "    return float(metric.split(\"lr0=\")[1])\n"
             "fig, ax = plt.subplots()\n"
             "for stem in (\"pq_flat\", \"zero_rows\"):\n"
             "    rows = df[df.metric.str.startswith(stem + \"/\")].copy()\n"
             "    rows[\"lr\"] = rows.metric.map(lr_of)\n"
             "    mean = rows.groupby(\"lr\").value.mean()\n"
             "    ax.plot(mean.index, mean.values, \"o-\", label=stem)\n"
             "ax.set_xlabel(\"lr0\")\n"
             "ax.legend()\n"
             "fig.savefig(\"pqi_vs_lr.png\", dpi=150)\n";
    case Experiment::UniformValidation:
      return "#!/usr/bin/env python3\n"
             "\"\"\"Occupancy counts of trained solutions (uniformity check).\"\"\"\n"
             "import pandas as pd\n"
             "import matplotlib.pyplot as plt\n\n"
             "df = pd.read_csv(\"results.csv\")\n"
             "alpha = df[df.metric.str.startswith(\"alpha_\")]\n"
             "# For m = M + 1 each replicate has exactly one alpha_j equal to 1.\n"
             "hits = alpha[alpha.value == 1].metric.value_counts().sort_index()\n"
             "fig, ax = plt.subplots()\n"
             "hits.plot.bar(ax=ax)\n"
             "ax.set_ylabel(\"replicates\")\n"
             "fig.savefig(\"uniform_validation.png\", dpi=150)\n";
    case Experiment::DecaySlope:
      return "#!/usr/bin/env python3\n"
             "\"\"\"Permuted barrier against width on log-log axes.\"\"\"\n"
             "import pandas as pd\n"
             "import matplotlib.pyplot as plt\n\n"
             "df = pd.read_csv(\"results.csv\")\n"
             "mean = df[df.metric == \"barrier_permuted\"].groupby(\"m\").value.mean()\n"
             "fig, ax = plt.subplots()\n"
             "ax.loglog(mean.index, mean.values, \"o-\")\n"
             "ax.set_xlabel(\"m\")\n"
             "ax.set_ylabel(\"permuted barrier\")\n"
             "fig.savefig(\"decay_slope.png\", dpi=150)\n";
  }
  return "";
}

}  // namespace

// ---- enum conversions ---------------------------------------------------

Experiment experiment_from_string(const std::string& name) {
  if (name == "overlap_curve") return Experiment::OverlapCurve;
  if (name == "barrier_curve") return Experiment::BarrierCurve;
  if (name == "normalized_barrier") return Experiment::NormalizedBarrier;
  if (name == "double_descent") return Experiment::DoubleDescent;
  if (name == "pqi_vs_width") return Experiment::PqiVsWidth;
  if (name == "pqi_vs_lr") return Experiment::PqiVsLr;
  if (name == "uniform_validation") return Experiment::UniformValidation;
  if (name == "decay_slope") return Experiment::DecaySlope;
  throw ConfigError("unknown experiment '" + name + "'");
}

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::OverlapCurve: return "overlap_curve";
    case Experiment::BarrierCurve: return "barrier_curve";
    case Experiment::NormalizedBarrier: return "normalized_barrier";
    case Experiment::DoubleDescent: return "double_descent";
    case Experiment::PqiVsWidth: return "pqi_vs_width";
    case Experiment::PqiVsLr: return "pqi_vs_lr";
    case Experiment::UniformValidation: return "uniform_validation";
    case Experiment::DecaySlope: return "decay_slope";
  }
  return "";
}

SolutionSource source_from_string(const std::string& name) {
  if (name == "uniform") return SolutionSource::Uniform;
  if (name == "gd") return SolutionSource::Gd;
  if (name == "sgd") return SolutionSource::Sgd;
  throw ConfigError("unknown solution_source '" + name + "'");
}

std::string to_string(SolutionSource s) {
  switch (s) {
    case SolutionSource::Uniform: return "uniform";
    case SolutionSource::Gd: return "gd";
    case SolutionSource::Sgd: return "sgd";
  }
  return "";
}

// ---- config parsing -----------------------------------------------------

namespace {

void expect_keys(const json& j, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

TrainConfig train_from_json(const json& j) {
  expect_keys(j, "train",
              {"mode", "lr0", "lr_schedule", "batch", "max_iters", "loss_tol",
               "init_std", "eval_stride", "trace_stride", "seed"});
  TrainConfig tc;
  if (j.contains("mode")) {
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "gd") {
      tc.mode = TrainMode::GD;
    } else if (mode == "sgd") {
      tc.mode = TrainMode::SGD;
    } else {
      throw ConfigError("unknown train.mode '" + mode + "'");
    }
  }
  if (j.contains("lr0")) tc.lr0 = j.at("lr0").get<double>();
  if (j.contains("lr_schedule")) {
    const std::string sched = j.at("lr_schedule").get<std::string>();
    if (sched == "constant") {
      tc.lr_schedule = LrSchedule::Constant;
    } else if (sched == "width_decayed") {
      tc.lr_schedule = LrSchedule::WidthDecayed;
    } else {
      throw ConfigError("unknown train.lr_schedule '" + sched + "'");
    }
  }
  if (j.contains("batch")) tc.batch = j.at("batch").get<int>();
  if (j.contains("max_iters")) tc.max_iters = j.at("max_iters").get<long long>();
  if (j.contains("loss_tol")) tc.loss_tol = j.at("loss_tol").get<double>();
  if (j.contains("init_std") && !j.at("init_std").is_null()) {
    tc.init_std = j.at("init_std").get<double>();
  }
  if (j.contains("eval_stride")) {
    tc.eval_stride = j.at("eval_stride").get<long long>();
  }
  if (j.contains("trace_stride")) {
    tc.trace_stride = j.at("trace_stride").get<long long>();
  }
  if (j.contains("seed")) tc.seed = j.at("seed").get<std::uint64_t>();
  tc.validate();
  return tc;
}

json train_to_json(const TrainConfig& tc) {
  json j;
  j["mode"] = tc.mode == TrainMode::GD ? "gd" : "sgd";
  j["lr0"] = tc.lr0;
  j["lr_schedule"] =
      tc.lr_schedule == LrSchedule::Constant ? "constant" : "width_decayed";
  j["batch"] = tc.batch;
  j["max_iters"] = tc.max_iters;
  j["loss_tol"] = tc.loss_tol;
  if (tc.init_std) {
    j["init_std"] = *tc.init_std;
  } else {
    j["init_std"] = nullptr;
  }
  j["eval_stride"] = tc.eval_stride;
  j["trace_stride"] = tc.trace_stride;
  j["seed"] = tc.seed;
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (grid.empty()) throw ConfigError("experiment grid is empty");
  for (const ProblemTriple& cell : grid) to_problem(cell).validate();
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (grid_points < 2) throw ConfigError("grid_points must be >= 2");
  for (double lr : lr_values) {
    if (!(lr > 0.0)) throw ConfigError("lr_values must be positive");
  }
  if (experiment == Experiment::PqiVsLr && lr_values.empty()) {
    throw ConfigError("pqi_vs_lr requires a nonempty lr_values list");
  }
  train.validate();
}

ExperimentConfig config_from_json(const json& j) {
  expect_keys(j, "config",
              {"experiment", "grid", "m_values", "M", "d", "solution_source",
               "replicates", "base_seed", "train", "output_dir", "grid_points",
               "lr_values", "threads"});
  ExperimentConfig config;
  if (!j.contains("experiment")) {
    throw ConfigError("config is missing 'experiment'");
  }
  config.experiment =
      experiment_from_string(j.at("experiment").get<std::string>());

  const bool has_grid = j.contains("grid");
  const bool has_mvals = j.contains("m_values");
  if (has_grid == has_mvals) {
    throw ConfigError("config needs exactly one of 'grid' or 'm_values'");
  }
  if (has_grid) {
    if (j.contains("M") || j.contains("d")) {
      throw ConfigError("'M'/'d' only combine with 'm_values', not 'grid'");
    }
    for (const json& cell : j.at("grid")) {
      if (!cell.is_array() || cell.size() != 3) {
        throw ConfigError("grid cells must be [m, M, d] triples");
      }
      config.grid.push_back(ProblemTriple{cell[0].get<int>(),
                                          cell[1].get<int>(),
                                          cell[2].get<int>()});
    }
  } else {
    if (!j.contains("M") || !j.contains("d")) {
      throw ConfigError("'m_values' requires scalar 'M' and 'd'");
    }
    const int M = j.at("M").get<int>();
    const int d = j.at("d").get<int>();
    for (const json& mv : j.at("m_values")) {
      config.grid.push_back(ProblemTriple{mv.get<int>(), M, d});
    }
  }
  std::sort(config.grid.begin(), config.grid.end(),
            [](const ProblemTriple& a, const ProblemTriple& b) {
              if (a.m != b.m) return a.m < b.m;
              if (a.M != b.M) return a.M < b.M;
              return a.d < b.d;
            });

  if (j.contains("solution_source")) {
    config.solution_source =
        source_from_string(j.at("solution_source").get<std::string>());
  }
  if (j.contains("replicates")) {
    config.replicates = j.at("replicates").get<long long>();
  }
  if (j.contains("base_seed")) {
    config.base_seed = j.at("base_seed").get<std::uint64_t>();
  }
  if (j.contains("train")) config.train = train_from_json(j.at("train"));
  if (j.contains("output_dir")) {
    config.output_dir = j.at("output_dir").get<std::string>();
  }
  if (j.contains("grid_points")) {
    config.grid_points = j.at("grid_points").get<int>();
  }
  if (j.contains("lr_values")) {
    for (const json& lr : j.at("lr_values")) {
      config.lr_values.push_back(lr.get<double>());
    }
  }
  if (j.contains("threads")) config.threads = j.at("threads").get<int>();
  config.validate();
  return config;
}

json config_to_json(const ExperimentConfig& config) {
  json j;
  j["experiment"] = to_string(config.experiment);
  json grid = json::array();
  for (const ProblemTriple& cell : config.grid) {
    grid.push_back(json::array({cell.m, cell.M, cell.d}));
  }
  j["grid"] = grid;
  j["solution_source"] = to_string(config.solution_source);
  j["replicates"] = config.replicates;
  j["base_seed"] = config.base_seed;
  j["train"] = train_to_json(config.train);
  j["output_dir"] = config.output_dir;
  j["grid_points"] = config.grid_points;
  j["lr_values"] = config.lr_values;
  j["threads"] = config.threads;
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

// ---- seeds --------------------------------------------------------------

std::uint64_t replicate_seed(std::uint64_t base_seed, long long replicate) {
  return base_seed + static_cast<std::uint64_t>(replicate);
}

std::uint64_t stream_seed(std::uint64_t rep_seed, const ProblemTriple& cell,
                          std::uint64_t stream) {
  return Rng::derive(rep_seed,
                     {static_cast<std::uint64_t>(cell.m),
                      static_cast<std::uint64_t>(cell.M),
                      static_cast<std::uint64_t>(cell.d), stream});
}

// ---- analysis -----------------------------------------------------------

std::vector<NormalizedBarrierRow> normalized_barrier_summary(
    const std::vector<ResultRow>& rows) {
  struct Acc {
    ProblemTriple cell;
    double direct_sum = 0.0;
    long long direct_n = 0;
    double permuted_sum = 0.0;
    long long permuted_n = 0;
  };
  std::vector<Acc> accs;
  auto find = [&accs](const ResultRow& r) -> Acc& {
    for (Acc& a : accs) {
      if (a.cell.m == r.m && a.cell.M == r.M && a.cell.d == r.d) return a;
    }
    accs.push_back(Acc{ProblemTriple{r.m, r.M, r.d}});
    return accs.back();
  };
  for (const ResultRow& r : rows) {
    if (r.metric == "barrier_direct") {
      Acc& a = find(r);
      a.direct_sum += r.value;
      ++a.direct_n;
    } else if (r.metric == "barrier_permuted") {
      Acc& a = find(r);
      a.permuted_sum += r.value;
      ++a.permuted_n;
    }
  }

  std::vector<NormalizedBarrierRow> table;
  for (const Acc& a : accs) {
    if (a.direct_n == 0 || a.permuted_n == 0) continue;
    NormalizedBarrierRow row;
    row.m = a.cell.m;
    row.M = a.cell.M;
    row.d = a.cell.d;
    row.m_over_M = static_cast<double>(a.cell.m) / a.cell.M;
    row.direct_mean = a.direct_sum / a.direct_n;
    row.permuted_mean = a.permuted_sum / a.permuted_n;
    row.flagged = row.direct_mean < 1e-12;
    row.ratio = row.flagged ? 0.0 : row.permuted_mean / row.direct_mean;
    table.push_back(row);
  }
  return table;
}

double least_squares_slope(const std::vector<double>& x,
                           const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DomainError("least_squares_slope: need two same-length samples");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw DomainError("least_squares_slope: degenerate x");
  return (n * sxy - sx * sy) / denom;
}

// ---- driver -------------------------------------------------------------

RunOutput run(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(config.output_dir);

  const long long cells = static_cast<long long>(config.grid.size());
  const long long R = config.replicates;
  std::vector<std::vector<ResultRow>> buckets(cells * R);
  run_parallel(cells * R, config.threads, [&](long long idx) {
    const long long ci = idx / R;
    const long long rep = idx % R;
    buckets[idx] = replicate_rows(config, config.grid[ci], rep);
  });

  std::vector<ResultRow> rows;
  for (long long ci = 0; ci < cells; ++ci) {
    std::vector<ResultRow> head = cell_rows(config, config.grid[ci]);
    rows.insert(rows.end(), head.begin(), head.end());
    for (long long rep = 0; rep < R; ++rep) {
      std::vector<ResultRow>& b = buckets[ci * R + rep];
      rows.insert(rows.end(), b.begin(), b.end());
    }
  }

  RunOutput out;
  out.results_path = (fs::path(config.output_dir) / "results.csv").string();
  out.manifest_path = (fs::path(config.output_dir) / "manifest.json").string();
  out.rows = static_cast<long long>(rows.size());
  write_results_csv(out.results_path, rows);

  json analysis = json::object();
  if (config.experiment == Experiment::NormalizedBarrier) {
    const std::vector<NormalizedBarrierRow> table =
        normalized_barrier_summary(rows);
    const std::string summary_path =
        (fs::path(config.output_dir) / "normalized_barrier.csv").string();
    write_normalized_summary(summary_path, table);
    analysis["summary"] = "normalized_barrier.csv";
  }
  if (config.experiment == Experiment::DecaySlope) {
    // Log-log slope of the mean permuted barrier over the width grid.
    struct CellMean {
      int m;
      double sum = 0.0;
      long long n = 0;
    };
    std::vector<CellMean> means;
    for (const ResultRow& r : rows) {
      if (r.metric != "barrier_permuted") continue;
      bool found = false;
      for (CellMean& cm : means) {
        if (cm.m == r.m) {
          cm.sum += r.value;
          ++cm.n;
          found = true;
          break;
        }
      }
      if (!found) means.push_back(CellMean{r.m, r.value, 1});
    }
    std::vector<double> log_m, log_b;
    const std::string summary_path =
        (fs::path(config.output_dir) / "decay_slope_summary.csv").string();
    std::ofstream summary(summary_path);
    if (!summary) throw ConfigError("cannot open " + summary_path);
    summary << "m,mean_barrier_permuted\n";
    for (const CellMean& cm : means) {
      const double mean = cm.sum / cm.n;
      summary << cm.m << ',' << format_double(mean) << '\n';
      if (mean > 0.0) {
        log_m.push_back(std::log(static_cast<double>(cm.m)));
        log_b.push_back(std::log(mean));
      }
    }
    analysis["summary"] = "decay_slope_summary.csv";
    if (log_m.size() >= 2) {
      analysis["slope"] = least_squares_slope(log_m, log_b);
    }
  }

  {
    std::ofstream plot(fs::path(config.output_dir) / "plot.py");
    if (plot) plot << plot_stub(config.experiment);
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  json manifest;
  manifest["schema_version"] = 1;
  manifest["tool"] = "lmc";
  manifest["tool_version"] = kToolVersion;
  manifest["experiment"] = to_string(config.experiment);
  manifest["config"] = config_to_json(config);
  manifest["results"] = "results.csv";
  manifest["rows"] = out.rows;
  manifest["wall_time_s"] = wall;
  manifest["analysis"] = analysis;
  std::ofstream mf(out.manifest_path);
  if (!mf) throw ConfigError("cannot open " + out.manifest_path);
  mf << manifest.dump(2) << '\n';

  out.analysis = std::move(analysis);
  return out;
}

}  // namespace lmc::harness
