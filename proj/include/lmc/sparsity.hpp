#pragma once

#include "lmc/common.hpp"

namespace lmc {

// Exponents of the PQ sparsity index. Requires 0 < p < q.
struct PQParams {
  double p = 0.5;
  double q = 1.0;
};

// PQ index of a vector:
//
//   I_{p,q}(v) = 1 - n^{1/q - 1/p} ||v||_p / ||v||_q .
//
// 0 for flat vectors, 1 - n^{1/q - 1/p} (maximal) for one-hot vectors,
// invariant under scaling. Throws DomainError on the all-zero vector.
double pq_index(const Eigen::VectorXd& v, const PQParams& params = {});

// PQ index of the flattened absolute entries of W.
double pq_flat(const WeightMatrix& W, const PQParams& params = {});

// PQ index of the vector of row norms of W; zero rows stay in as zeros, so
// dead neurons register as sparsity.
double pq_by_row(const WeightMatrix& W, const PQParams& params = {});

// Number of rows with Euclidean norm <= tol.
int zero_rows(const WeightMatrix& W, double tol = 1e-6);

}  // namespace lmc
