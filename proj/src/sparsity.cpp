#include "lmc/sparsity.hpp"

#include <cmath>

#include "lmc/error.hpp"

namespace lmc {

double pq_index(const Eigen::VectorXd& v, const PQParams& params) {
  if (!(params.p > 0.0) || !(params.p < params.q)) {
    throw ConfigError("pq_index: exponents must satisfy 0 < p < q");
  }
  const Eigen::Index n = v.size();
  if (n == 0) throw DomainError("pq_index: empty vector");

  double sum_p = 0.0;
  double sum_q = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = std::abs(v(i));
    if (a == 0.0) continue;
    sum_p += std::pow(a, params.p);
    sum_q += std::pow(a, params.q);
  }
  if (sum_q == 0.0) throw DomainError("pq_index: all-zero vector");

  const double norm_p = std::pow(sum_p, 1.0 / params.p);
  const double norm_q = std::pow(sum_q, 1.0 / params.q);
  const double scale =
      std::pow(static_cast<double>(n), 1.0 / params.q - 1.0 / params.p);
  return 1.0 - scale * norm_p / norm_q;
}

double pq_flat(const WeightMatrix& W, const PQParams& params) {
  const Eigen::VectorXd flat =
      Eigen::Map<const Eigen::VectorXd>(W.data(), W.size());
  return pq_index(flat, params);
}

double pq_by_row(const WeightMatrix& W, const PQParams& params) {
  return pq_index(W.rowwise().norm(), params);
}

int zero_rows(const WeightMatrix& W, double tol) {
  int count = 0;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    if (W.row(i).norm() <= tol) ++count;
  }
  return count;
}

}  // namespace lmc
