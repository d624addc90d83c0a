#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "hrmt/errors.hpp"
#include "hrmt/linalg.hpp"

using namespace hrmt;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("log returns") {
  const double e = std::exp(1.0);
  Eigen::MatrixXd prices(3, 4);
  prices << 1, e, e * e, e * e * e,  //
      5, 5, 5, 5,                    //
      1, 2, 4, 2;
  const auto r = log_returns(prices);
  CHECK(r.periods() == 3);
  CHECK(r.values(0, 0) == doctest::Approx(1.0));
  CHECK(r.values(0, 1) == doctest::Approx(1.0));
  CHECK(r.values.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.values(2, 0) == doctest::Approx(std::log(2.0)));
  CHECK(r.values(2, 2) == doctest::Approx(-std::log(2.0)));
  CHECK_FALSE(r.standardized);

  prices(1, 2) = 0.0;
  try {
    log_returns(prices, {"x", "y", "z"}, {"d0", "d1", "d2", "d3"});
    FAIL("expected an error");
  } catch (const DataError& err) {
    CHECK(err.params().at("asset") == "y");
    CHECK(err.params().at("timestamp") == "d2");
  }
}

TEST_CASE("standardize and correlation") {
  Eigen::MatrixXd v = gaussian(4, 300, 1);
  v.row(1) = v.row(0) * 3.0 + Eigen::RowVectorXd::Constant(300, 2.0);
  v.row(2) = -v.row(0);
  const auto s = standardize(make_panel(v));
  CHECK(s.standardized);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(std::abs(s.values.row(i).mean()) <= 1e-12);
    CHECK(std::abs(s.values.row(i).squaredNorm() / 300 - 1.0) <= 1e-12);
  }
  const auto c = correlation_matrix(s);
  CHECK(c(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c(0, 2) == doctest::Approx(-1.0).epsilon(1e-12));
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(c(i, i) - 1.0) <= 1e-12);
  CHECK((c - c.transpose()).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(correlation_matrix(make_panel(v)), DataError);
  Eigen::MatrixXd flat = Eigen::MatrixXd::Ones(2, 5);
  CHECK_THROWS_AS(standardize(make_panel(flat)), DataError);
}

TEST_CASE("time permutation leaves C bit-identical") {
  const auto s = standardize(make_panel(gaussian(30, 200, 2)));
  ReturnPanel shuffled = s;
  std::vector<int> perm(200);
  for (int i = 0; i < 200; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), std::mt19937(9));
  for (int k = 0; k < 200; ++k) shuffled.values.col(k) = s.values.col(perm[k]);
  const auto c1 = correlation_matrix(s);
  const auto c2 = correlation_matrix(shuffled);
  CHECK((c1.array() == c2.array()).all());
  // Standardizing a shuffled raw panel is also order independent.
  const auto raw = make_panel(gaussian(5, 100, 3));
  ReturnPanel raw_shuffled = raw;
  for (int k = 0; k < 100; ++k) raw_shuffled.values.col(k) = raw.values.col(99 - k);
  const auto a = standardize(raw);
  const auto b = standardize(raw_shuffled);
  for (int k = 0; k < 100; ++k) {
    CHECK((a.values.col(k).array() == b.values.col(99 - k).array()).all());
  }
}

TEST_CASE("Jacobi eigensolver") {
  const auto id = sym_eig(Eigen::MatrixXd::Identity(4, 4));
  CHECK((id.eigenvalues.array() == 1.0).all());

  Eigen::MatrixXd d(2, 2);
  d << 1, 0, 0, 3;
  const auto ed = sym_eig(d);
  CHECK(ed.eigenvalues(0) == 3.0);
  CHECK(ed.eigenvalues(1) == 1.0);
  CHECK(ed.eigenvectors(1, 0) == 1.0);
  CHECK(ed.eigenvectors(0, 1) == 1.0);

  Eigen::MatrixXd r = gaussian(5, 5, 4);
  const Eigen::MatrixXd c5 = r + r.transpose();
  const auto e5 = sym_eig(c5);
  CHECK(std::abs(e5.eigenvalues.sum() - c5.trace()) <= 1e-10);
  for (int k = 0; k + 1 < 5; ++k) CHECK(e5.eigenvalues(k) >= e5.eigenvalues(k + 1));

  const auto s = standardize(make_panel(gaussian(120, 400, 5)));
  const auto c = correlation_matrix(s);
  const auto e = sym_eig(c);
  const auto& u = e.eigenvectors;
  CHECK((u.transpose() * u - Eigen::MatrixXd::Identity(120, 120)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((u * e.eigenvalues.asDiagonal() * u.transpose() - c).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(e.eigenvalues.minCoeff() >= -1e-10);
  const double cn = c.norm();
  for (Eigen::Index k = 0; k < 120; ++k) {
    CHECK((c * u.col(k) - e.eigenvalues(k) * u.col(k)).norm() <= 1e-8 * cn);
    Eigen::Index big = 0;
    u.col(k).cwiseAbs().maxCoeff(&big);
    CHECK(u(big, k) > 0.0);
  }
  // Agrees with a reference solver.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(c);
  Eigen::VectorXd sorted = ref.eigenvalues().reverse();
  CHECK((sorted - e.eigenvalues).cwiseAbs().maxCoeff() <= 1e-10);

  Eigen::MatrixXd asym(2, 2);
  asym << 1, 2, 3, 1;
  CHECK_THROWS_AS(sym_eig(asym), DomainError);
  JacobiOptions tight;
  tight.max_sweeps = 1;
  CHECK_THROWS_AS(sym_eig(c, tight), ConvergenceError);
}

TEST_CASE("whitening") {
  Eigen::MatrixXd v = gaussian(2, 2000, 6);
  v.row(1) = 0.9 * v.row(0) + std::sqrt(1 - 0.81) * v.row(1);
  const auto s = standardize(make_panel(v));
  const auto c = correlation_matrix(s);
  CHECK(c(0, 1) > 0.85);
  const auto w = whiten(s, sym_eig(c));
  const auto cw = second_moment_matrix(w);
  CHECK(std::abs(cw(0, 1)) <= 1e-10);
  CHECK((cw - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-10);

  const auto big = standardize(make_panel(gaussian(50, 300, 7)));
  const auto w1 = whiten(big, sym_eig(correlation_matrix(big)));
  CHECK((second_moment_matrix(w1) - Eigen::MatrixXd::Identity(50, 50)).cwiseAbs().maxCoeff() <= 1e-10);
  // Whitening again is (nearly) a no-op up to the eigenbasis rotation of I.
  const auto w2 = whiten(w1, sym_eig(correlation_matrix(w1)));
  CHECK((w2.values - w1.values).cwiseAbs().maxCoeff() <= 1e-8);

  Eigen::MatrixXd dup = gaussian(2, 50, 8);
  dup.row(1) = dup.row(0);
  const auto sd = standardize(make_panel(dup));
  auto eig = sym_eig(correlation_matrix(sd));
  eig.eigenvalues(1) = 0.0;
  CHECK_THROWS_AS(whiten(sd, eig), DataError);
}

TEST_CASE("aggregation") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 3, 4;
  const auto p = make_panel(m);
  CHECK(aggregate(p) == std::vector<double>{1, 2, 3, 4});
  CHECK(aggregate(p, AggregationOrder::TimeMajor) == std::vector<double>{1, 3, 2, 4});
  Eigen::MatrixXd one(1, 3);
  one << 5, 6, 7;
  CHECK(aggregate(make_panel(one)) == std::vector<double>{5, 6, 7});
  CHECK(aggregate(make_panel(gaussian(3, 7, 1))).size() == 21);
}

}  // TEST_SUITE
