#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <lmc/align.hpp>
#include <lmc/error.hpp>
#include <lmc/harness.hpp>
#include <lmc/io.hpp>
#include <lmc/manifold.hpp>

namespace fs = std::filesystem;
namespace hn = lmc::harness;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("harness_test_tmp") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct CsvRow {
  std::string experiment;
  int m, M, d;
  long long replicate;
  std::uint64_t seed;
  std::string metric;
  std::string value;
};

std::vector<CsvRow> parse_results(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  REQUIRE(line == "experiment,m,M,d,replicate,seed,metric,value");
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> parts;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) parts.push_back(tok);
    REQUIRE(parts.size() == 8);
    rows.push_back({parts[0], std::stoi(parts[1]), std::stoi(parts[2]),
                    std::stoi(parts[3]), std::stoll(parts[4]),
                    static_cast<std::uint64_t>(std::stoull(parts[5])),
                    parts[6], parts[7]});
  }
  return rows;
}

struct CliResult {
  int exit_code;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::path("harness_test_tmp");
  fs::create_directories(dir);
  const fs::path out = dir / ("cli_" + std::to_string(counter++) + ".txt");
  const std::string cmd =
      std::string(LMC_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.output = slurp(out);
  return result;
}

hn::ExperimentConfig tiny_overlap_config(const fs::path& dir) {
  hn::ExperimentConfig config;
  config.experiment = hn::Experiment::OverlapCurve;
  config.grid = {{6, 3, 4}, {8, 3, 4}};
  config.replicates = 5;
  config.base_seed = 100;
  config.output_dir = dir.string();
  return config;
}

}  // namespace

// ---- serialization ------------------------------------------------------

TEST_CASE("format_double round-trips doubles exactly") {
  for (double x : {1.0 / 3.0, 0.1, -2.5e-17, 1e300, 1e-300, 0.0,
                   0.3408450569081046, 12345.6789012345678}) {
    const std::string s = lmc::format_double(x);
    CHECK(std::strtod(s.c_str(), nullptr) == x);
  }
}

TEST_CASE("weight matrices round-trip through CSV") {
  const fs::path dir = fresh_dir("io_weights");
  lmc::WeightMatrix W(3, 4);
  W << 1.0 / 3.0, -0.1, 5e-17, 0.0, 2.5, 1e-300, -7.0, 0.25, 1e16, -1.0 / 7.0,
      3.14159, 0.5;
  const std::string path = (dir / "w.csv").string();
  lmc::write_weights_csv(path, W);
  const lmc::WeightMatrix R = lmc::read_weights_csv(path);
  REQUIRE(R.rows() == 3);
  REQUIRE(R.cols() == 4);
  CHECK((R - W).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("weight CSV reader rejects malformed input") {
  const fs::path dir = fresh_dir("io_bad");
  CHECK_THROWS_AS(lmc::read_weights_csv((dir / "missing.csv").string()),
                  lmc::ConfigError);

  {
    std::ofstream out(dir / "ragged.csv");
    out << "1.0,2.0\n3.0\n";
  }
  CHECK_THROWS_AS(lmc::read_weights_csv((dir / "ragged.csv").string()),
                  lmc::ConfigError);

  {
    std::ofstream out(dir / "text.csv");
    out << "1.0,fish\n";
  }
  CHECK_THROWS_AS(lmc::read_weights_csv((dir / "text.csv").string()),
                  lmc::ConfigError);
}

TEST_CASE("auxiliary CSV writers emit the documented headers") {
  const fs::path dir = fresh_dir("io_aux");

  lmc::write_trace_csv((dir / "trace.csv").string(), {{0, 1.5}, {100, 0.25}});
  const std::string trace = slurp(dir / "trace.csv");
  CHECK(trace == "iteration,loss\n0,1.5\n100,0.25\n");

  lmc::BarrierProfile profile;
  profile.lambdas = {0.0, 0.5, 1.0};
  profile.losses = {0.0, 0.125, 0.0};
  lmc::write_barrier_csv((dir / "barrier.csv").string(), profile);
  const std::string barrier = slurp(dir / "barrier.csv");
  CHECK(barrier == "lambda,loss\n0,0\n0.5,0.125\n1,0\n");

  lmc::MatchReport report;
  report.counts_1 = {2, 1};
  report.counts_2 = {1, 2};
  report.matched_sets = {{0}, {2}};
  report.matched_mass = {{0.7, 1.0}, {1.0, 0.7}};
  lmc::write_match_report_csv((dir / "match.csv").string(), report);
  const std::string match = slurp(dir / "match.csv");
  CHECK(match.rfind("type,alpha1,alpha2,matched,gamma1,gamma2\n", 0) == 0);
  CHECK(match.find("1,1,0,1,") != std::string::npos);
}

// ---- configuration ------------------------------------------------------

TEST_CASE("experiment and source names round-trip") {
  for (auto e : {hn::Experiment::OverlapCurve, hn::Experiment::BarrierCurve,
                 hn::Experiment::NormalizedBarrier,
                 hn::Experiment::DoubleDescent, hn::Experiment::PqiVsWidth,
                 hn::Experiment::PqiVsLr, hn::Experiment::UniformValidation,
                 hn::Experiment::DecaySlope}) {
    CHECK(hn::experiment_from_string(hn::to_string(e)) == e);
  }
  for (auto s : {hn::SolutionSource::Uniform, hn::SolutionSource::Gd,
                 hn::SolutionSource::Sgd}) {
    CHECK(hn::source_from_string(hn::to_string(s)) == s);
  }
  CHECK_THROWS_AS(hn::experiment_from_string("nope"), lmc::ConfigError);
  CHECK_THROWS_AS(hn::source_from_string("nope"), lmc::ConfigError);
}

TEST_CASE("config parsing is strict about keys and the grid") {
  nlohmann::json base = {
      {"experiment", "overlap_curve"},
      {"grid", {{6, 3, 4}}},
      {"replicates", 2},
  };
  CHECK_NOTHROW(hn::config_from_json(base));

  nlohmann::json unknown = base;
  unknown["surprise"] = 1;
  CHECK_THROWS_AS(hn::config_from_json(unknown), lmc::ConfigError);

  nlohmann::json bad_train = base;
  bad_train["train"] = {{"learning_rate", 0.5}};
  CHECK_THROWS_AS(hn::config_from_json(bad_train), lmc::ConfigError);

  nlohmann::json both = base;
  both["m_values"] = {4, 6};
  both["M"] = 3;
  both["d"] = 4;
  CHECK_THROWS_AS(hn::config_from_json(both), lmc::ConfigError);

  nlohmann::json neither = {{"experiment", "overlap_curve"}};
  CHECK_THROWS_AS(hn::config_from_json(neither), lmc::ConfigError);

  nlohmann::json missing_exp = {{"grid", {{6, 3, 4}}}};
  CHECK_THROWS_AS(hn::config_from_json(missing_exp), lmc::ConfigError);
}

TEST_CASE("m_values expands against scalar M and d") {
  const nlohmann::json j = {
      {"experiment", "overlap_curve"},
      {"m_values", {12, 8, 10}},
      {"M", 4},
      {"d", 6},
  };
  const auto config = hn::config_from_json(j);
  REQUIRE(config.grid.size() == 3);
  // Sorted by (m, M, d) regardless of listing order.
  CHECK(config.grid[0].m == 8);
  CHECK(config.grid[1].m == 10);
  CHECK(config.grid[2].m == 12);
  for (const auto& cell : config.grid) {
    CHECK(cell.M == 4);
    CHECK(cell.d == 6);
  }
}

TEST_CASE("grid cells are sorted at parse time") {
  const nlohmann::json j = {
      {"experiment", "barrier_curve"},
      {"grid", {{8, 3, 4}, {6, 3, 4}, {6, 2, 4}}},
  };
  const auto config = hn::config_from_json(j);
  REQUIRE(config.grid.size() == 3);
  CHECK(config.grid[0].m == 6);
  CHECK(config.grid[0].M == 2);
  CHECK(config.grid[1].m == 6);
  CHECK(config.grid[1].M == 3);
  CHECK(config.grid[2].m == 8);
}

TEST_CASE("learning-rate sweeps require lr_values") {
  nlohmann::json j = {
      {"experiment", "pqi_vs_lr"},
      {"grid", {{6, 2, 4}}},
  };
  CHECK_THROWS_AS(hn::config_from_json(j).validate(), lmc::ConfigError);
  j["lr_values"] = {0.1, 0.5};
  CHECK_NOTHROW(hn::config_from_json(j).validate());
}

TEST_CASE("config serialization is a fixed point") {
  const nlohmann::json j = {
      {"experiment", "pqi_vs_lr"},
      {"grid", {{6, 2, 4}, {8, 2, 4}}},
      {"solution_source", "gd"},
      {"replicates", 7},
      {"base_seed", 42},
      {"lr_values", {0.1, 2.0}},
      {"grid_points", 21},
      {"threads", 2},
      {"train", {{"mode", "gd"}, {"lr0", 0.5}, {"max_iters", 1000}}},
      {"output_dir", "somewhere"},
  };
  const auto config = hn::config_from_json(j);
  const nlohmann::json round = hn::config_to_json(config);
  const auto config2 = hn::config_from_json(round);
  CHECK(hn::config_to_json(config2) == round);
  CHECK(config2.replicates == 7);
  CHECK(config2.base_seed == 42);
  CHECK(config2.train.lr0 == 0.5);
  CHECK(config2.grid_points == 21);
}

TEST_CASE("seed plumbing is additive and stream-separated") {
  CHECK(hn::replicate_seed(100, 0) == 100);
  CHECK(hn::replicate_seed(100, 7) == 107);
  const hn::ProblemTriple cell{6, 3, 4};
  const hn::ProblemTriple other{6, 3, 5};
  const auto a = hn::stream_seed(107, cell, 1);
  CHECK(a == hn::stream_seed(107, cell, 1));
  CHECK(a != hn::stream_seed(107, cell, 2));
  CHECK(a != hn::stream_seed(107, other, 1));
  CHECK(a != hn::stream_seed(108, cell, 1));
}

// ---- experiment runs ----------------------------------------------------

TEST_CASE("overlap_curve emits per-replicate rows plus the exact value") {
  const fs::path dir = fresh_dir("run_overlap");
  const auto config = tiny_overlap_config(dir);
  const auto out = hn::run(config);
  CHECK(fs::exists(out.results_path));
  CHECK(fs::exists(out.manifest_path));
  CHECK(fs::exists(dir / "plot.py"));

  const auto rows = parse_results(out.results_path);
  CHECK(static_cast<long long>(rows.size()) == out.rows);

  std::map<int, int> replicate_rows;
  std::map<int, int> exact_rows;
  for (const auto& r : rows) {
    CHECK(r.experiment == "overlap_curve");
    if (r.metric == "overlap_P") {
      ++replicate_rows[r.m];
      CHECK(r.seed == config.base_seed + static_cast<std::uint64_t>(r.replicate));
      const double v = std::stod(r.value);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    } else if (r.metric == "expected_overlap_exact") {
      ++exact_rows[r.m];
      CHECK(r.replicate == -1);
    }
  }
  CHECK(replicate_rows[6] == 5);
  CHECK(replicate_rows[8] == 5);
  CHECK(exact_rows[6] == 1);
  CHECK(exact_rows[8] == 1);

  // Manifest carries the config echo and row count.
  const auto manifest = nlohmann::json::parse(slurp(out.manifest_path));
  CHECK(manifest.at("rows").get<long long>() == out.rows);
  CHECK(manifest.at("config").at("experiment") == "overlap_curve");
}

TEST_CASE("identical configs give byte-identical results regardless of threads") {
  const fs::path dir1 = fresh_dir("det_a");
  const fs::path dir2 = fresh_dir("det_b");
  const fs::path dir3 = fresh_dir("det_c");

  auto config = tiny_overlap_config(dir1);
  config.threads = 1;
  hn::run(config);
  config.output_dir = dir2.string();
  config.threads = 4;
  hn::run(config);
  config.output_dir = dir3.string();
  config.threads = 4;
  hn::run(config);

  const std::string a = slurp(dir1 / "results.csv");
  const std::string b = slurp(dir2 / "results.csv");
  const std::string c = slurp(dir3 / "results.csv");
  CHECK(a == b);
  CHECK(b == c);
}

TEST_CASE("barrier_curve reports direct and permuted barriers") {
  const fs::path dir = fresh_dir("run_barrier");
  hn::ExperimentConfig config;
  config.experiment = hn::Experiment::BarrierCurve;
  config.grid = {{6, 3, 4}};
  config.replicates = 3;
  config.base_seed = 7;
  config.output_dir = dir.string();
  const auto out = hn::run(config);

  const auto rows = parse_results(out.results_path);
  std::map<long long, double> direct, permuted;
  for (const auto& r : rows) {
    if (r.metric == "barrier_direct") direct[r.replicate] = std::stod(r.value);
    if (r.metric == "barrier_permuted") {
      permuted[r.replicate] = std::stod(r.value);
    }
  }
  REQUIRE(direct.size() == 3);
  REQUIRE(permuted.size() == 3);
  for (const auto& [rep, d_val] : direct) {
    CHECK(permuted.at(rep) <= d_val + 1e-12);
  }
}

TEST_CASE("normalized_barrier writes the ratio table") {
  const fs::path dir = fresh_dir("run_normalized");
  hn::ExperimentConfig config;
  config.experiment = hn::Experiment::NormalizedBarrier;
  config.grid = {{6, 3, 4}, {7, 3, 4}};
  config.replicates = 3;
  config.base_seed = 19;
  config.output_dir = dir.string();
  hn::run(config);

  const std::string table = slurp(dir / "normalized_barrier.csv");
  CHECK(table.rfind(
            "m,M,d,m_over_M,barrier_direct_mean,barrier_permuted_mean,ratio",
            0) == 0);
  // One line per cell plus the header.
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
}

TEST_CASE("normalized_barrier_summary flags zero denominators") {
  std::vector<hn::ResultRow> rows;
  auto add = [&rows](int m, long long rep, const std::string& metric,
                     double value) {
    hn::ResultRow r;
    r.experiment = "normalized_barrier";
    r.m = m;
    r.M = 3;
    r.d = 4;
    r.replicate = rep;
    r.metric = metric;
    r.value = value;
    rows.push_back(r);
  };
  add(6, 0, "barrier_direct", 0.1);
  add(6, 1, "barrier_direct", 0.3);
  add(6, 0, "barrier_permuted", 0.05);
  add(6, 1, "barrier_permuted", 0.10);
  add(7, 0, "barrier_direct", 0.0);
  add(7, 0, "barrier_permuted", 0.0);

  const auto summary = hn::normalized_barrier_summary(rows);
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].m == 6);
  CHECK(summary[0].direct_mean == doctest::Approx(0.2));
  CHECK(summary[0].permuted_mean == doctest::Approx(0.075));
  CHECK(summary[0].ratio == doctest::Approx(0.375));
  CHECK(summary[0].m_over_M == doctest::Approx(2.0));
  CHECK_FALSE(summary[0].flagged);
  CHECK(summary[1].flagged);
}

TEST_CASE("double_descent spans the under-realized regime") {
  const fs::path dir = fresh_dir("run_dd");
  hn::ExperimentConfig config;
  config.experiment = hn::Experiment::DoubleDescent;
  config.grid = {{2, 3, 4}};  // m < M on purpose
  config.solution_source = hn::SolutionSource::Gd;
  config.replicates = 2;
  config.base_seed = 5;
  config.train.lr0 = 0.5;
  config.train.max_iters = 3000;
  config.train.loss_tol = 1e-8;
  config.output_dir = dir.string();
  const auto out = hn::run(config);

  const auto rows = parse_results(out.results_path);
  std::set<std::string> metrics;
  for (const auto& r : rows) metrics.insert(r.metric);
  CHECK(metrics.count("barrier_direct") == 1);
  CHECK(metrics.count("barrier_permuted") == 1);
  CHECK(metrics.count("final_loss_1") == 1);
  CHECK(metrics.count("final_loss_2") == 1);
  CHECK(metrics.count("error") == 0);
}

TEST_CASE("pqi_vs_width compares uniform and trained sparsity") {
  const fs::path dir = fresh_dir("run_pqw");
  hn::ExperimentConfig config;
  config.experiment = hn::Experiment::PqiVsWidth;
  config.grid = {{8, 2, 4}};
  config.replicates = 2;
  config.base_seed = 3;
  config.lr_values = {0.5};
  config.train.max_iters = 3000;
  config.train.loss_tol = 1e-8;
  config.output_dir = dir.string();
  const auto out = hn::run(config);

  const auto rows = parse_results(out.results_path);
  std::set<std::string> metrics;
  for (const auto& r : rows) metrics.insert(r.metric);
  CHECK(metrics.count("pq_by_row/uniform") == 1);
  CHECK(metrics.count("pq_flat/uniform") == 1);
  CHECK(metrics.count("zero_rows/uniform") == 1);
  CHECK(metrics.count("pq_by_row/gd:lr0=0.5") == 1);
  CHECK(metrics.count("final_loss/gd:lr0=0.5") == 1);
}

TEST_CASE("pqi_vs_lr sweeps the requested rates") {
  const fs::path dir = fresh_dir("run_pql");
  hn::ExperimentConfig config;
  config.experiment = hn::Experiment::PqiVsLr;
  config.grid = {{6, 2, 4}};
  config.replicates = 2;
  config.base_seed = 23;
  config.lr_values = {0.1, 0.4};
  config.train.max_iters = 3000;
  config.train.loss_tol = 1e-8;
  config.output_dir = dir.string();
  const auto out = hn::run(config);

  const auto rows = parse_results(out.results_path);
  std::set<std::string> metrics;
  for (const auto& r : rows) metrics.insert(r.metric);
  CHECK(metrics.count("pq_by_row/gd:lr0=0.1") == 1);
  CHECK(metrics.count("pq_by_row/gd:lr0=0.4") == 1);
  CHECK(metrics.count("zero_rows/gd:lr0=0.1") == 1);
}

TEST_CASE("uniform_validation reports occupancy and sorted entries") {
  const fs::path dir = fresh_dir("run_uv");
  hn::ExperimentConfig config;
  config.experiment = hn::Experiment::UniformValidation;
  config.grid = {{5, 1, 3}};
  config.solution_source = hn::SolutionSource::Uniform;
  config.replicates = 3;
  config.base_seed = 77;
  config.output_dir = dir.string();
  const auto out = hn::run(config);

  const auto rows = parse_results(out.results_path);
  std::map<std::string, std::vector<double>> by_metric;
  for (const auto& r : rows) {
    if (r.value != "null") by_metric[r.metric].push_back(std::stod(r.value));
  }
  REQUIRE(by_metric.count("alpha_1") == 1);
  CHECK(by_metric["alpha_1"] == std::vector<double>{4.0, 4.0, 4.0});
  for (int i = 1; i <= 5; ++i) {
    REQUIRE(by_metric.count("sorted_entry_" + std::to_string(i)) == 1);
  }
  // Entries are sorted ascending and sum to 1 within each replicate.
  for (std::size_t rep = 0; rep < 3; ++rep) {
    double total = 0.0;
    double prev = -1.0;
    for (int i = 1; i <= 5; ++i) {
      const double v = by_metric["sorted_entry_" + std::to_string(i)][rep];
      CHECK(v >= prev);
      prev = v;
      total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("decay_slope runs the regression and records it") {
  const fs::path dir = fresh_dir("run_slope");
  hn::ExperimentConfig config;
  config.experiment = hn::Experiment::DecaySlope;
  config.grid = {{16, 4, 8}, {32, 4, 8}};
  config.replicates = 3;
  config.base_seed = 31;
  config.output_dir = dir.string();
  const auto out = hn::run(config);

  CHECK(fs::exists(dir / "decay_slope_summary.csv"));
  REQUIRE(out.analysis.contains("slope"));
  const double slope = out.analysis.at("slope").get<double>();
  CHECK(std::isfinite(slope));

  const auto manifest = nlohmann::json::parse(slurp(out.manifest_path));
  CHECK(manifest.at("analysis").at("slope").get<double>() ==
        doctest::Approx(slope));
}

TEST_CASE("least squares slope on an exact line") {
  CHECK(hn::least_squares_slope({1.0, 2.0, 3.0, 4.0},
                                {2.5, 2.0, 1.5, 1.0}) ==
        doctest::Approx(-0.5).epsilon(1e-12));
}

// ---- command line front end ---------------------------------------------

TEST_CASE("cli kappa prints exact values") {
  const auto r = run_cli("kappa -t 1 -d 2");
  CHECK(r.exit_code == 0);
  CHECK(r.output == "0.25\n");

  const auto prime = run_cli("kappa -t -1 -d 4 --prime");
  CHECK(prime.exit_code == 0);
  CHECK(prime.output == "0\n");
}

TEST_CASE("cli reports usage errors with exit code 1") {
  CHECK(run_cli("kappa --no-such-flag").exit_code == 1);
  CHECK(run_cli("definitely-not-a-command").exit_code == 1);
  CHECK(run_cli("loss --weights does_not_exist.csv -M 2").exit_code == 1);
}

TEST_CASE("cli reports numerical failures with exit code 2") {
  CHECK(run_cli("kappa -t 1.5 -d 2").exit_code == 2);
  const auto r = run_cli(
      "train -m 8 -M 3 -d 5 --lr0 50 --schedule constant --max-iters 1000");
  CHECK(r.exit_code == 2);
}

TEST_CASE("cli sample, classify and pqi form a pipeline") {
  const fs::path dir = fresh_dir("cli_pipe");
  const std::string w = (dir / "w.csv").string();
  CHECK(run_cli("sample -m 6 -M 3 -d 5 --seed 4 --out " + w).exit_code == 0);

  const auto cls = run_cli("classify --weights " + w + " -M 3");
  CHECK(cls.exit_code == 0);
  CHECK(cls.output.find("labels=") != std::string::npos);

  const auto pqi = run_cli("pqi --weights " + w + " --mode zero_rows");
  CHECK(pqi.exit_code == 0);
  CHECK(pqi.output == "0\n");
}

TEST_CASE("cli experiment run executes a config file") {
  const fs::path dir = fresh_dir("cli_exp");
  const fs::path config_path = dir / "config.json";
  {
    nlohmann::json j = {
        {"experiment", "overlap_curve"},
        {"grid", {{6, 3, 4}}},
        {"replicates", 2},
        {"base_seed", 9},
        {"output_dir", (dir / "out").string()},
    };
    std::ofstream out(config_path);
    out << j.dump(2);
  }
  const auto r = run_cli("experiment run " + config_path.string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "results.csv"));

  {
    std::ofstream out(dir / "broken.json");
    out << "{ not json";
  }
  CHECK(run_cli("experiment run " + (dir / "broken.json").string()).exit_code ==
        1);
}
