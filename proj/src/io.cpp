#include "lmc/io.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lmc/error.hpp"

namespace lmc {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_weights_csv(const std::string& path, const WeightMatrix& W) {
  std::ofstream out = open_out(path);
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(W(i, j));
    }
    out << '\n';
  }
}

WeightMatrix read_weights_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);

  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(
                   static_cast<unsigned char>(cell[used]))) {
          ++used;
        }
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError(path + ": cannot parse '" + cell + "' as a number");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError(path + ": rows have inconsistent column counts");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(path + ": no data rows");

  WeightMatrix W(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return W;
}

void write_trace_csv(const std::string& path,
                     const std::vector<std::pair<long long, double>>& trace) {
  std::ofstream out = open_out(path);
  out << "iteration,loss\n";
  for (const auto& [it, loss] : trace) {
    out << it << ',' << format_double(loss) << '\n';
  }
}

void write_barrier_csv(const std::string& path, const BarrierProfile& profile) {
  std::ofstream out = open_out(path);
  out << "lambda,loss\n";
  for (std::size_t k = 0; k < profile.lambdas.size(); ++k) {
    out << format_double(profile.lambdas[k]) << ','
        << format_double(profile.losses[k]) << '\n';
  }
}

void write_match_report_csv(const std::string& path,
                            const MatchReport& report) {
  std::ofstream out = open_out(path);
  out << "type,alpha1,alpha2,matched,gamma1,gamma2\n";
  for (std::size_t j = 0; j < report.counts_1.size(); ++j) {
    out << (j + 1) << ',' << (report.counts_1[j] - 1) << ','
        << (report.counts_2[j] - 1) << ',' << report.matched_sets[j].size()
        << ',' << format_double(report.matched_mass[j].first) << ','
        << format_double(report.matched_mass[j].second) << '\n';
  }
}

}  // namespace lmc
