#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include <lmc/error.hpp>
#include <lmc/kernel.hpp>
#include <lmc/manifold.hpp>
#include <lmc/rng.hpp>

#include "support/oracles.hpp"

namespace {

constexpr double kPi = std::numbers::pi;

// Gaussian weights redrawn until every pair of rows (and every row against a
// coordinate axis) is safely away from |cos| = 1, where finite differences of
// arccos are ill-conditioned.
lmc::WeightMatrix generic_weights(int m, int d, lmc::Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    lmc::WeightMatrix W = testoracle::random_weights(m, d, rng);
    lmc::WeightMatrix U = W;
    for (int i = 0; i < m; ++i) U.row(i).normalize();
    double worst = 0.0;
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        worst = std::max(worst, std::abs(U.row(i).dot(U.row(j))));
      }
      for (int j = 0; j < d; ++j) worst = std::max(worst, std::abs(U(i, j)));
    }
    if (worst < 0.999) return W;
  }
  FAIL("could not draw a generic weight matrix");
  return {};
}

}  // namespace

TEST_CASE("kappa endpoint values are exact") {
  for (int d : {2, 8, 64}) {
    CHECK(lmc::kappa(1.0, d) == doctest::Approx(0.5 / d).epsilon(1e-15));
    CHECK(lmc::kappa(0.0, d) ==
          doctest::Approx(1.0 / (2.0 * kPi * d)).epsilon(1e-15));
    CHECK(lmc::kappa(-1.0, d) == 0.0);
    CHECK(lmc::kappa_prime(1.0, d) ==
          doctest::Approx(0.5 / d).epsilon(1e-15));
    CHECK(lmc::kappa_prime(0.0, d) ==
          doctest::Approx(0.25 / d).epsilon(1e-15));
    CHECK(lmc::kappa_prime(-1.0, d) == 0.0);
  }
}

TEST_CASE("kappa is nonnegative and nondecreasing on [-1,1]") {
  double prev = -1.0;
  for (int k = 0; k <= 2000; ++k) {
    const double t = -1.0 + 2.0 * k / 2000.0;
    const double v = lmc::kappa(t, 8);
    CHECK(v >= 0.0);
    CHECK(v >= prev - 1e-15);
    prev = v;
  }
}

TEST_CASE("kappa clamps round-off but rejects genuine overshoot") {
  CHECK(lmc::kappa(1.0 + 1e-13, 4) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(lmc::kappa(-1.0 - 1e-13, 4) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(lmc::kappa(1.001, 4), lmc::DomainError);
  CHECK_THROWS_AS(lmc::kappa(-1.001, 4), lmc::DomainError);
  CHECK_THROWS_AS(lmc::kappa_prime(1.001, 4), lmc::DomainError);
}

TEST_CASE("kappa_prime matches finite differences of kappa") {
  const double h = 1e-7;
  for (int k = 0; k <= 100; ++k) {
    const double t = -0.999 + 1.998 * k / 100.0;
    const double fd = (lmc::kappa(t + h, 8) - lmc::kappa(t - h, 8)) / (2.0 * h);
    CHECK(lmc::kappa_prime(t, 8) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("kappa minus t kappa_prime has the closed form sqrt(1-t^2)/(2 pi d)") {
  for (int k = 0; k <= 50; ++k) {
    const double t = -1.0 + 2.0 * k / 50.0;
    const double lhs = lmc::kappa(t, 16) - t * lmc::kappa_prime(t, 16);
    const double rhs = std::sqrt(std::max(0.0, 1.0 - t * t)) / (2.0 * kPi * 16);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
  }
}

TEST_CASE("population_loss single neuron closed form") {
  lmc::WeightMatrix W(1, 2);
  W << 0.0, 1.0;
  const auto config = testoracle::make_config(1, 1, 2);
  const double expected = 0.5 - 1.0 / (2.0 * kPi);
  CHECK(lmc::population_loss(W, config) ==
        doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("population_loss vanishes on the teacher itself") {
  const auto config = testoracle::make_config(3, 3, 5);
  lmc::WeightMatrix W = lmc::WeightMatrix::Zero(3, 5);
  for (int i = 0; i < 3; ++i) W(i, i) = 1.0;
  CHECK(lmc::population_loss(W, config) == 0.0);
}

TEST_CASE("population_loss of the zero network is the teacher energy") {
  const auto config = testoracle::make_config(4, 3, 6);
  const lmc::WeightMatrix W = lmc::WeightMatrix::Zero(4, 6);
  const double expected =
      3.0 * lmc::kappa(1.0, 6) + 3.0 * 2.0 * lmc::kappa(0.0, 6);
  CHECK(lmc::population_loss(W, config) ==
        doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("appending a zero row leaves the loss bit-identical") {
  lmc::Rng rng(11);
  const auto config = testoracle::make_config(5, 2, 4);
  const lmc::WeightMatrix W = generic_weights(5, 4, rng);
  lmc::WeightMatrix W2 = lmc::WeightMatrix::Zero(6, 4);
  W2.topRows(5) = W;
  const auto config2 = testoracle::make_config(6, 2, 4);
  CHECK(lmc::population_loss(W2, config2) == lmc::population_loss(W, config));
}

TEST_CASE("population_loss is invariant under row permutations") {
  lmc::Rng rng(17);

  SUBCASE("all permutations for small m") {
    for (int m : {4, 5}) {
      const auto config = testoracle::make_config(m, 2, 5);
      const lmc::WeightMatrix W = generic_weights(m, 5, rng);
      const double base = lmc::population_loss(W, config);
      std::vector<int> perm(m);
      for (int i = 0; i < m; ++i) perm[i] = i;
      do {
        lmc::WeightMatrix P(m, 5);
        for (int i = 0; i < m; ++i) P.row(i) = W.row(perm[i]);
        CHECK(lmc::population_loss(P, config) ==
              doctest::Approx(base).epsilon(1e-12));
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }

  SUBCASE("random permutations for larger m") {
    const int m = 12;
    const auto config = testoracle::make_config(m, 3, 6);
    const lmc::WeightMatrix W = generic_weights(m, 6, rng);
    const double base = lmc::population_loss(W, config);
    std::vector<int> perm(m);
    for (int i = 0; i < m; ++i) perm[i] = i;
    for (int rep = 0; rep < 100; ++rep) {
      rng.shuffle(perm);
      lmc::WeightMatrix P(m, 6);
      for (int i = 0; i < m; ++i) P.row(i) = W.row(perm[i]);
      CHECK(lmc::population_loss(P, config) ==
            doctest::Approx(base).epsilon(1e-12));
    }
  }
}

TEST_CASE("population_loss is invariant under teacher-preserving rotations") {
  // The teacher directions are the first M coordinate axes, so the loss must
  // be unchanged by any orthogonal map that permutes those axes among
  // themselves and acts arbitrarily on the orthogonal complement.
  lmc::Rng rng(23);
  const int m = 5, M = 3, d = 8;
  const auto config = testoracle::make_config(m, M, d);
  const lmc::WeightMatrix W = generic_weights(m, d, rng);
  const double base = lmc::population_loss(W, config);

  std::vector<int> axis_perm = {0, 1, 2};
  for (int rep = 0; rep < 10; ++rep) {
    rng.shuffle(axis_perm);
    Eigen::MatrixXd block(d - M, d - M);
    for (int i = 0; i < d - M; ++i) {
      for (int j = 0; j < d - M; ++j) block(i, j) = rng.gaussian();
    }
    const Eigen::MatrixXd R =
        Eigen::HouseholderQR<Eigen::MatrixXd>(block).householderQ();

    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(d, d);
    for (int j = 0; j < M; ++j) Q(axis_perm[j], j) = 1.0;
    Q.bottomRightCorner(d - M, d - M) = R;

    const lmc::WeightMatrix rotated = W * Q.transpose();
    CHECK(lmc::population_loss(rotated, config) ==
          doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("padding with zero columns rescales the loss by the dimension") {
  // The kernel carries a 1/d normalization (x is uniform on the unit sphere,
  // so each coordinate has variance 1/d). Embedding the same geometry in a
  // larger ambient dimension therefore multiplies the loss by d/(d+k);
  // the dimension-normalized product d * loss is what stays fixed.
  lmc::Rng rng(29);
  const int m = 4, M = 2, d = 5;
  const auto config = testoracle::make_config(m, M, d);
  const lmc::WeightMatrix W = generic_weights(m, d, rng);
  const double base = static_cast<double>(d) * lmc::population_loss(W, config);
  for (int extra : {1, 3, 11}) {
    lmc::WeightMatrix P = lmc::WeightMatrix::Zero(m, d + extra);
    P.leftCols(d) = W;
    const auto padded = testoracle::make_config(m, M, d + extra);
    const double scaled =
        static_cast<double>(d + extra) * lmc::population_loss(P, padded);
    CHECK(scaled == doctest::Approx(base).epsilon(1e-14));
  }
}

TEST_CASE("population_loss rejects shape mismatches") {
  const auto config = testoracle::make_config(3, 2, 4);
  const lmc::WeightMatrix W = lmc::WeightMatrix::Zero(3, 5);
  CHECK_THROWS_AS(lmc::population_loss(W, config), lmc::ShapeError);
  CHECK_THROWS_AS(lmc::population_grad(W, config), lmc::ShapeError);
}

TEST_CASE("population_grad matches central finite differences") {
  lmc::Rng rng(31);
  int checked = 0;
  while (checked < 50) {
    const int M = 1 + static_cast<int>(rng.uniform01() * 4.0);
    const int m = 1 + static_cast<int>(rng.uniform01() * 8.0);
    const int d = std::max(2, M + static_cast<int>(rng.uniform01() * (9.0 - M)));
    const auto config = testoracle::make_config(m, std::min(M, d), d);
    const lmc::WeightMatrix W = generic_weights(m, d, rng);
    const lmc::WeightMatrix analytic = lmc::population_grad(W, config);
    const lmc::WeightMatrix fd = testoracle::fd_gradient(W, config, 1e-5);
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    const double err = (analytic - fd).cwiseAbs().maxCoeff() / scale;
    CHECK(err < 1e-5);
    ++checked;
  }
}

TEST_CASE("population_grad gives zero rows a zero gradient") {
  lmc::Rng rng(37);
  const auto config = testoracle::make_config(4, 2, 4);
  lmc::WeightMatrix W = generic_weights(4, 4, rng);
  W.row(2).setZero();
  const lmc::WeightMatrix grad = lmc::population_grad(W, config);
  CHECK(grad.row(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("population_grad vanishes on the manifold") {
  const auto config = testoracle::make_config(6, 4, 6);
  const lmc::WeightMatrix W = lmc::sample_uniform(config, 101);
  const lmc::WeightMatrix grad = lmc::population_grad(W, config);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("loss and gradient agree with the separately computed pair") {
  lmc::Rng rng(41);
  const auto config = testoracle::make_config(6, 3, 7);
  const lmc::WeightMatrix W = generic_weights(6, 7, rng);
  lmc::WeightMatrix grad;
  const double loss = lmc::population_loss_and_grad(W, config, grad);
  CHECK(loss == lmc::population_loss(W, config));
  CHECK((grad - lmc::population_grad(W, config)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mc_loss is a calibrated estimator of population_loss") {
  lmc::Rng rng(43);
  int within = 0;
  const int trials = 8;
  for (int rep = 0; rep < trials; ++rep) {
    const auto config = testoracle::make_config(3, 2, 4);
    const lmc::WeightMatrix W = generic_weights(3, 4, rng);
    const double exact = lmc::population_loss(W, config);
    const auto est = lmc::mc_loss(W, config, 200000, 900 + rep);
    CHECK(est.std_error > 0.0);
    if (std::abs(est.mean - exact) < 4.0 * est.std_error) ++within;
  }
  CHECK(within >= trials - 1);
}

TEST_CASE("mc_loss is deterministic and exact on the teacher") {
  const auto config = testoracle::make_config(2, 2, 3);
  lmc::WeightMatrix W = lmc::WeightMatrix::Zero(2, 3);
  W(0, 0) = 1.0;
  W(1, 1) = 1.0;
  const auto a = lmc::mc_loss(W, config, 5000, 7);
  const auto b = lmc::mc_loss(W, config, 5000, 7);
  CHECK(a.mean == b.mean);
  CHECK(a.std_error == b.std_error);
  CHECK(a.mean == 0.0);
  CHECK(a.std_error == 0.0);
  CHECK(a.n_samples == 5000);
  CHECK(a.seed == 7);

  const auto c = lmc::mc_loss(W, config, 5000, 8);
  CHECK(c.mean == a.mean);  // teacher fit is exact under any sample
}

TEST_CASE("mc_loss standard error shrinks like n^{-1/2}") {
  lmc::Rng rng(47);
  const auto config = testoracle::make_config(3, 2, 4);
  const lmc::WeightMatrix W = generic_weights(3, 4, rng);
  const auto small = lmc::mc_loss(W, config, 10000, 13);
  const auto large = lmc::mc_loss(W, config, 160000, 13);
  const double ratio = small.std_error / large.std_error;
  CHECK(ratio > 2.8);  // ideal value 4
  CHECK(ratio < 5.7);
}

TEST_CASE("mc_loss rejects invalid sample counts") {
  const auto config = testoracle::make_config(1, 1, 2);
  const lmc::WeightMatrix W = lmc::WeightMatrix::Zero(1, 2);
  CHECK_THROWS_AS(lmc::mc_loss(W, config, 0, 1), lmc::ConfigError);
}

TEST_CASE("sample_sphere draws unit vectors deterministically") {
  lmc::Rng rng(53);
  const Eigen::MatrixXd X = lmc::sample_sphere(200, 6, rng);
  REQUIRE(X.rows() == 200);
  REQUIRE(X.cols() == 6);
  for (int i = 0; i < X.rows(); ++i) {
    CHECK(std::abs(X.row(i).norm() - 1.0) < 1e-12);
  }
  lmc::Rng rng2(53);
  const Eigen::MatrixXd Y = lmc::sample_sphere(200, 6, rng2);
  CHECK((X - Y).cwiseAbs().maxCoeff() == 0.0);
}
