// Command-line front end. Exit codes: 0 success, 1 usage or input error,
// 2 numerical error (divergence, domain violation, failed classification).

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lmc/align.hpp"
#include "lmc/error.hpp"
#include "lmc/harness.hpp"
#include "lmc/io.hpp"
#include "lmc/kernel.hpp"
#include "lmc/manifold.hpp"
#include "lmc/sparsity.hpp"
#include "lmc/train.hpp"

namespace {

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stoi(cell));
    } catch (const std::exception&) {
      throw lmc::ConfigError("cannot parse '" + cell + "' as an integer");
    }
  }
  if (out.empty()) throw lmc::ConfigError("empty integer list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw lmc::ConfigError("cannot parse '" + cell + "' as a number");
    }
  }
  if (out.empty()) throw lmc::ConfigError("empty number list");
  return out;
}

void check_format(const std::string& format) {
  if (format != "csv") {
    throw lmc::ConfigError("unsupported output format '" + format + "'");
  }
}

// Infers (m, d) from the matrix and takes M from the flag.
lmc::ProblemConfig config_for(const lmc::WeightMatrix& W, int M) {
  lmc::ProblemConfig pc;
  pc.m = static_cast<int>(W.rows());
  pc.d = static_cast<int>(W.cols());
  pc.M = M;
  pc.validate();
  return pc;
}

void print_labels(const lmc::ClassifiedSolution& c) {
  std::cout << "labels=";
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    if (i > 0) std::cout << ',';
    std::cout << c.labels[i];
  }
  std::cout << "\nalpha=";
  for (std::size_t j = 0; j < c.alpha.alpha.size(); ++j) {
    if (j > 0) std::cout << ',';
    std::cout << c.alpha.alpha[j];
  }
  std::cout << "\nresidual=" << lmc::format_double(c.residual) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for linear mode connectivity modulo "
               "permutation in two-layer ReLU teacher-student networks"};
  app.require_subcommand(1);

  // kappa -----------------------------------------------------------------
  auto* kappa_cmd = app.add_subcommand("kappa", "evaluate the arc-cosine kernel");
  double kappa_t = 0.0;
  int kappa_d = 2;
  bool kappa_prime_flag = false;
  kappa_cmd->add_option("-t,--t", kappa_t, "cosine of the angle")->required();
  kappa_cmd->add_option("-d,--dim", kappa_d, "input dimension")->required();
  kappa_cmd->add_flag("--prime", kappa_prime_flag, "evaluate the derivative");
  kappa_cmd->callback([&] {
    const double v = kappa_prime_flag ? lmc::kappa_prime(kappa_t, kappa_d)
                                      : lmc::kappa(kappa_t, kappa_d);
    std::cout << lmc::format_double(v) << '\n';
  });

  // loss ------------------------------------------------------------------
  auto* loss_cmd = app.add_subcommand("loss", "exact population loss of a weight CSV");
  std::string loss_weights;
  int loss_M = 1;
  long long loss_mc = 0;
  std::uint64_t loss_seed = 0;
  loss_cmd->add_option("--weights", loss_weights, "weight CSV path")->required();
  loss_cmd->add_option("-M,--teacher", loss_M, "teacher width")->required();
  loss_cmd->add_option("--mc", loss_mc, "also report a Monte Carlo estimate from this many samples");
  loss_cmd->add_option("--seed", loss_seed, "Monte Carlo seed");
  loss_cmd->callback([&] {
    const lmc::WeightMatrix W = lmc::read_weights_csv(loss_weights);
    const lmc::ProblemConfig pc = config_for(W, loss_M);
    std::cout << "loss=" << lmc::format_double(lmc::population_loss(W, pc))
              << '\n';
    if (loss_mc > 0) {
      const lmc::McEstimate est = lmc::mc_loss(W, pc, loss_mc, loss_seed);
      std::cout << "mc_mean=" << lmc::format_double(est.mean) << '\n'
                << "mc_stderr=" << lmc::format_double(est.std_error) << '\n';
    }
  });

  // train -----------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "run GD or SGD on the population objective");
  lmc::ProblemConfig train_pc;
  lmc::TrainConfig train_tc;
  std::string train_mode = "gd";
  std::string train_sched = "width_decayed";
  double train_init_std = -1.0;
  std::string train_out, train_trace, train_format = "csv";
  train_cmd->add_option("-m,--width", train_pc.m, "student width")->required();
  train_cmd->add_option("-M,--teacher", train_pc.M, "teacher width")->required();
  train_cmd->add_option("-d,--dim", train_pc.d, "input dimension")->required();
  train_cmd->add_option("--mode", train_mode, "gd or sgd");
  train_cmd->add_option("--lr0", train_tc.lr0, "base learning rate");
  train_cmd->add_option("--schedule", train_sched, "constant or width_decayed");
  train_cmd->add_option("--batch", train_tc.batch, "SGD minibatch size");
  train_cmd->add_option("--max-iters", train_tc.max_iters, "iteration cap");
  train_cmd->add_option("--loss-tol", train_tc.loss_tol, "stopping loss");
  train_cmd->add_option("--init-std", train_init_std,
                        "init std (default 1/(m*d))");
  train_cmd->add_option("--eval-stride", train_tc.eval_stride,
                        "SGD evaluation stride");
  train_cmd->add_option("--trace-stride", train_tc.trace_stride,
                        "loss trace stride");
  train_cmd->add_option("--seed", train_tc.seed, "init/minibatch seed");
  train_cmd->add_option("--out", train_out, "write final weights CSV here");
  train_cmd->add_option("--trace", train_trace, "write loss trace CSV here");
  train_cmd->add_option("--format", train_format, "output format (csv)");
  train_cmd->callback([&] {
    check_format(train_format);
    if (train_mode == "gd") {
      train_tc.mode = lmc::TrainMode::GD;
    } else if (train_mode == "sgd") {
      train_tc.mode = lmc::TrainMode::SGD;
    } else {
      throw lmc::ConfigError("unknown mode '" + train_mode + "'");
    }
    if (train_sched == "constant") {
      train_tc.lr_schedule = lmc::LrSchedule::Constant;
    } else if (train_sched == "width_decayed") {
      train_tc.lr_schedule = lmc::LrSchedule::WidthDecayed;
    } else {
      throw lmc::ConfigError("unknown schedule '" + train_sched + "'");
    }
    if (train_init_std >= 0.0) train_tc.init_std = train_init_std;
    const lmc::TrainResult res = train_tc.mode == lmc::TrainMode::GD
                                     ? lmc::train_gd(train_pc, train_tc)
                                     : lmc::train_sgd(train_pc, train_tc);
    std::cout << "final_loss=" << lmc::format_double(res.final_loss) << '\n'
              << "iterations=" << res.iterations << '\n'
              << "converged=" << (res.converged ? 1 : 0) << '\n';
    if (!train_out.empty()) lmc::write_weights_csv(train_out, res.weights);
    if (!train_trace.empty()) lmc::write_trace_csv(train_trace, res.loss_trace);
  });

  // sample ----------------------------------------------------------------
  auto* sample_cmd = app.add_subcommand("sample", "draw uniformly from the global-minima manifold");
  lmc::ProblemConfig sample_pc;
  std::uint64_t sample_seed = 0;
  std::string sample_out, sample_format = "csv";
  sample_cmd->add_option("-m,--width", sample_pc.m, "student width")->required();
  sample_cmd->add_option("-M,--teacher", sample_pc.M, "teacher width")->required();
  sample_cmd->add_option("-d,--dim", sample_pc.d, "input dimension")->required();
  sample_cmd->add_option("--seed", sample_seed, "seed");
  sample_cmd->add_option("--out", sample_out, "weight CSV path (stdout if omitted)");
  sample_cmd->add_option("--format", sample_format, "output format (csv)");
  sample_cmd->callback([&] {
    check_format(sample_format);
    const lmc::WeightMatrix W = lmc::sample_uniform(sample_pc, sample_seed);
    if (sample_out.empty()) {
      for (int i = 0; i < W.rows(); ++i) {
        for (int j = 0; j < W.cols(); ++j) {
          if (j > 0) std::cout << ',';
          std::cout << lmc::format_double(W(i, j));
        }
        std::cout << '\n';
      }
    } else {
      lmc::write_weights_csv(sample_out, W);
    }
  });

  // classify --------------------------------------------------------------
  auto* classify_cmd = app.add_subcommand("classify", "label the rows of a weight CSV by teacher type");
  std::string classify_weights;
  int classify_M = 1;
  double classify_tol = 1e-4;
  classify_cmd->add_option("--weights", classify_weights, "weight CSV path")->required();
  classify_cmd->add_option("-M,--teacher", classify_M, "teacher width")->required();
  classify_cmd->add_option("--tol", classify_tol, "entry tolerance");
  classify_cmd->callback([&] {
    const lmc::WeightMatrix W = lmc::read_weights_csv(classify_weights);
    const lmc::ProblemConfig pc = config_for(W, classify_M);
    print_labels(lmc::classify(W, pc, classify_tol));
  });

  // permute ---------------------------------------------------------------
  auto* permute_cmd = app.add_subcommand("permute", "align the rows of the second matrix to the first");
  std::string permute_w1, permute_w2, permute_out, permute_report;
  std::string permute_format = "csv";
  int permute_M = 1;
  double permute_tol = 1e-4;
  permute_cmd->add_option("--w1", permute_w1, "first weight CSV")->required();
  permute_cmd->add_option("--w2", permute_w2, "second weight CSV")->required();
  permute_cmd->add_option("-M,--teacher", permute_M, "teacher width")->required();
  permute_cmd->add_option("--tol", permute_tol, "classification tolerance");
  permute_cmd->add_option("--out", permute_out, "write the permuted second matrix here");
  permute_cmd->add_option("--report", permute_report, "write the match report CSV here");
  permute_cmd->add_option("--format", permute_format, "output format (csv)");
  permute_cmd->callback([&] {
    check_format(permute_format);
    const lmc::WeightMatrix W1 = lmc::read_weights_csv(permute_w1);
    const lmc::WeightMatrix W2 = lmc::read_weights_csv(permute_w2);
    const lmc::ProblemConfig pc = config_for(W1, permute_M);
    const lmc::ClassifiedSolution c1 = lmc::classify(W1, pc, permute_tol);
    const lmc::ClassifiedSolution c2 = lmc::classify(W2, pc, permute_tol);
    const auto [perm, report] = lmc::best_permutation(W1, W2, pc, c1, c2);
    std::cout << "overlap_C=" << report.overlap_C << '\n'
              << "proportion_P=" << lmc::format_double(report.proportion_P)
              << '\n';
    if (!permute_out.empty()) {
      lmc::write_weights_csv(permute_out, perm.apply(W2));
    }
    if (!permute_report.empty()) {
      lmc::write_match_report_csv(permute_report, report);
    }
  });

  // barrier ---------------------------------------------------------------
  auto* barrier_cmd = app.add_subcommand("barrier", "loss profile along the segment between two solutions");
  std::string barrier_w1, barrier_w2, barrier_out, barrier_format = "csv";
  int barrier_M = 1;
  int barrier_grid = 11;
  bool barrier_permute = false;
  barrier_cmd->add_option("--w1", barrier_w1, "first weight CSV")->required();
  barrier_cmd->add_option("--w2", barrier_w2, "second weight CSV")->required();
  barrier_cmd->add_option("-M,--teacher", barrier_M, "teacher width")->required();
  barrier_cmd->add_option("--grid", barrier_grid, "number of lambda points");
  barrier_cmd->add_flag("--permute", barrier_permute, "align the second matrix first");
  barrier_cmd->add_option("--out", barrier_out, "write the lambda/loss profile here");
  barrier_cmd->add_option("--format", barrier_format, "output format (csv)");
  barrier_cmd->callback([&] {
    check_format(barrier_format);
    const lmc::WeightMatrix W1 = lmc::read_weights_csv(barrier_w1);
    const lmc::WeightMatrix W2 = lmc::read_weights_csv(barrier_w2);
    const lmc::ProblemConfig pc = config_for(W1, barrier_M);
    lmc::BarrierProfile profile;
    if (barrier_permute) {
      auto [p, report] =
          lmc::barrier_modulo_permutation(W1, W2, pc, barrier_grid);
      profile = std::move(p);
      std::cout << "proportion_P=" << lmc::format_double(report.proportion_P)
                << '\n';
    } else {
      profile = lmc::barrier(W1, W2, pc, barrier_grid);
    }
    std::cout << "barrier=" << lmc::format_double(profile.barrier) << '\n'
              << "loss_w1=" << lmc::format_double(profile.endpoint_losses.first)
              << '\n'
              << "loss_w2="
              << lmc::format_double(profile.endpoint_losses.second) << '\n';
    if (!barrier_out.empty()) lmc::write_barrier_csv(barrier_out, profile);
  });

  // overlap ---------------------------------------------------------------
  auto* overlap_cmd = app.add_subcommand("overlap", "overlap statistics of occupancy vectors");
  std::string overlap_a1, overlap_a2;
  int overlap_m = 0, overlap_M = 0;
  long long overlap_mc_n = 0;
  std::uint64_t overlap_seed = 0;
  double overlap_limit_t = -1.0;
  bool overlap_expected = false;
  overlap_cmd->add_option("--a1", overlap_a1, "first occupancy vector, comma separated");
  overlap_cmd->add_option("--a2", overlap_a2, "second occupancy vector");
  overlap_cmd->add_flag("--expected", overlap_expected, "expected overlap proportion of uniform draws");
  overlap_cmd->add_option("-m,--width", overlap_m, "student width");
  overlap_cmd->add_option("-M,--teacher", overlap_M, "teacher width");
  overlap_cmd->add_option("--mc", overlap_mc_n, "Monte Carlo pairs (0 = exact)");
  overlap_cmd->add_option("--seed", overlap_seed, "Monte Carlo seed");
  overlap_cmd->add_option("--limit", overlap_limit_t, "evaluate the limiting curve at t = M/m");
  overlap_cmd->callback([&] {
    if (overlap_limit_t >= 0.0) {
      std::cout << lmc::format_double(lmc::limit_overlap(overlap_limit_t))
                << '\n';
      return;
    }
    if (overlap_expected) {
      if (overlap_m <= 0 || overlap_M <= 0) {
        throw lmc::ConfigError("--expected requires -m and -M");
      }
      if (overlap_mc_n > 0) {
        const lmc::McEstimate est = lmc::expected_overlap_mc(
            overlap_m, overlap_M, overlap_mc_n, overlap_seed);
        std::cout << "mc_mean=" << lmc::format_double(est.mean) << '\n'
                  << "mc_stderr=" << lmc::format_double(est.std_error) << '\n';
      } else {
        std::cout << lmc::format_double(
                         lmc::expected_overlap_exact(overlap_m, overlap_M))
                  << '\n';
      }
      return;
    }
    if (overlap_a1.empty() || overlap_a2.empty()) {
      throw lmc::ConfigError("provide --a1/--a2, or --expected, or --limit");
    }
    lmc::TypeVector a1{parse_int_list(overlap_a1)};
    lmc::TypeVector a2{parse_int_list(overlap_a2)};
    const int C = lmc::overlap(a1, a2);
    const int m = a1.sum() + a1.M();
    std::cout << "overlap_C=" << C << '\n'
              << "proportion_P="
              << lmc::format_double(static_cast<double>(C) / m) << '\n';
  });

  // pqi -------------------------------------------------------------------
  auto* pqi_cmd = app.add_subcommand("pqi", "PQ sparsity index");
  std::string pqi_weights, pqi_vector, pqi_mode = "flat";
  lmc::PQParams pqi_params;
  double pqi_tol = 1e-6;
  pqi_cmd->add_option("--weights", pqi_weights, "weight CSV path");
  pqi_cmd->add_option("--vector", pqi_vector, "comma-separated vector");
  pqi_cmd->add_option("--mode", pqi_mode, "flat, by_row or zero_rows");
  pqi_cmd->add_option("-p,--p", pqi_params.p, "lower exponent");
  pqi_cmd->add_option("-q,--q", pqi_params.q, "upper exponent");
  pqi_cmd->add_option("--tol", pqi_tol, "zero-row tolerance");
  pqi_cmd->callback([&] {
    if (!pqi_vector.empty()) {
      const std::vector<double> vals = parse_double_list(pqi_vector);
      Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
      for (std::size_t i = 0; i < vals.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = vals[i];
      }
      std::cout << lmc::format_double(lmc::pq_index(v, pqi_params)) << '\n';
      return;
    }
    if (pqi_weights.empty()) {
      throw lmc::ConfigError("provide --weights or --vector");
    }
    const lmc::WeightMatrix W = lmc::read_weights_csv(pqi_weights);
    if (pqi_mode == "flat") {
      std::cout << lmc::format_double(lmc::pq_flat(W, pqi_params)) << '\n';
    } else if (pqi_mode == "by_row") {
      std::cout << lmc::format_double(lmc::pq_by_row(W, pqi_params)) << '\n';
    } else if (pqi_mode == "zero_rows") {
      std::cout << lmc::zero_rows(W, pqi_tol) << '\n';
    } else {
      throw lmc::ConfigError("unknown pqi mode '" + pqi_mode + "'");
    }
  });

  // experiment ------------------------------------------------------------
  auto* experiment_cmd = app.add_subcommand("experiment", "run a sweep from a JSON config");
  auto* run_cmd = experiment_cmd->add_subcommand("run", "execute a config");
  experiment_cmd->require_subcommand(1);
  std::string run_config_path, run_out_dir;
  int run_threads = -1;
  run_cmd->add_option("config", run_config_path, "JSON config path")->required();
  run_cmd->add_option("--out", run_out_dir, "override output_dir");
  run_cmd->add_option("--threads", run_threads, "override worker count");
  run_cmd->callback([&] {
    lmc::harness::ExperimentConfig config =
        lmc::harness::load_config(run_config_path);
    if (!run_out_dir.empty()) config.output_dir = run_out_dir;
    if (run_threads >= 0) config.threads = run_threads;
    const lmc::harness::RunOutput out = lmc::harness::run(config);
    std::cout << "results=" << out.results_path << '\n'
              << "rows=" << out.rows << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const lmc::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const lmc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
