#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lmc/align.hpp"
#include "lmc/common.hpp"

namespace lmc {

// Shortest representation that round-trips a double (printf %.17g).
std::string format_double(double x);

// Weight matrix CSV: one row per neuron, d comma-separated values, no
// header, full double precision.
void write_weights_csv(const std::string& path, const WeightMatrix& W);
WeightMatrix read_weights_csv(const std::string& path);

// Loss trace CSV with header "iteration,loss".
void write_trace_csv(const std::string& path,
                     const std::vector<std::pair<long long, double>>& trace);

// Barrier profile CSV with header "lambda,loss".
void write_barrier_csv(const std::string& path, const BarrierProfile& profile);

// Match report CSV with header "type,alpha1,alpha2,matched,gamma1,gamma2",
// one row per teacher type.
void write_match_report_csv(const std::string& path, const MatchReport& report);

}  // namespace lmc
