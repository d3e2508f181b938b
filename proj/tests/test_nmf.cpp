#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "tvtbip/errors.hpp"
#include "tvtbip/nmf.hpp"

using namespace tvtbip;

namespace {

CountMatrix from_dense(const std::vector<std::vector<int>>& rows) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.push_back({i, j, rows[i][j]});
  }
  return CountMatrix::from_triplets(rows.size(), rows.empty() ? 0 : rows[0].size(), std::move(t));
}

Matrix dense(const CountMatrix& c) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(c.rows()), static_cast<Eigen::Index>(c.cols()));
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (const auto& e : c.row(i)) m(static_cast<Eigen::Index>(i), e.col) = e.count;
  }
  return m;
}

double relative_error(const CountMatrix& c, const Matrix& W, const Matrix& H) {
  const Matrix C = dense(c);
  return (C - W * H).norm() / C.norm();
}

CountMatrix random_counts(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::poisson_distribution<int> pois(1.5);
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) t.push_back({i, j, pois(rng)});
  }
  t.push_back({0, 0, 1});
  return CountMatrix::from_triplets(rows, cols, std::move(t));
}

void check_monotone(const std::vector<double>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    CHECK(trace[i] <= trace[i - 1] + 1e-10);
  }
}

}  // namespace

TEST_CASE("frobenius_loss matches the dense residual") {
  std::mt19937_64 rng(1);
  const auto C = random_counts(rng, 6, 5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  Matrix W(6, 2), H(2, 5);
  for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < H.size(); ++i) H.data()[i] = u(rng);
  CHECK(frobenius_loss(C, W, H) == doctest::Approx((dense(C) - W * H).squaredNorm()).epsilon(1e-12));
}

TEST_CASE("rank-1 outer product is reconstructed") {
  const auto C = from_dense({{3, 4}, {6, 8}});
  const auto r = nmf_factorize(C, 1, 500, 42);
  CHECK(relative_error(C, r.W, r.H) < 1e-6);
  check_monotone(r.objective_trace);
  CHECK(r.objective_trace.size() == 500);
}

TEST_CASE("2x2 identity is reconstructed with K=2") {
  const auto C = from_dense({{1, 0}, {0, 1}});
  const auto r = nmf_factorize(C, 2, 2000, 3);
  CHECK(relative_error(C, r.W, r.H) < 1e-3);
  check_monotone(r.objective_trace);
}

TEST_CASE("rank-2 integer product is reconstructed") {
  const Matrix W{{1, 0}, {2, 1}, {0, 3}, {1, 1}, {4, 0}, {0, 2}};
  const Matrix H{{1, 2, 0, 3, 1}, {2, 0, 1, 1, 3}};
  const Matrix P = W * H;
  std::vector<std::vector<int>> rows;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    rows.emplace_back();
    for (Eigen::Index j = 0; j < P.cols(); ++j) rows.back().push_back(static_cast<int>(P(i, j)));
  }
  const auto C = from_dense(rows);
  const auto r = nmf_factorize(C, 2, 2000, 9);
  CHECK(relative_error(C, r.W, r.H) < 1e-3);
  check_monotone(r.objective_trace);
}

TEST_CASE("objective never increases and factors stay non-negative") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> dim(2, 12), k(1, 4);
    const auto C = random_counts(rng, static_cast<std::size_t>(dim(rng)), static_cast<std::size_t>(dim(rng)));
    const auto r = nmf_factorize(C, k(rng), 200, static_cast<std::uint64_t>(trial));
    check_monotone(r.objective_trace);
    CHECK(r.W.minCoeff() >= 0.0);
    CHECK(r.H.minCoeff() >= 0.0);
  }
}

TEST_CASE("same seed gives identical factors") {
  std::mt19937_64 rng(2);
  const auto C = random_counts(rng, 8, 7);
  const auto a = nmf_factorize(C, 3, 100, 5);
  const auto b = nmf_factorize(C, 3, 100, 5);
  CHECK(a.W == b.W);
  CHECK(a.H == b.H);
  CHECK(a.objective_trace == b.objective_trace);
}

TEST_CASE("all-zero matrix is degenerate") {
  const auto C = from_dense({{0, 0}, {0, 0}});
  CHECK_THROWS_AS(nmf_factorize(C, 1, 10, 0), DegenerateInput);
}

TEST_CASE("transform with the true basis recovers the loadings up to scale") {
  const auto C = from_dense({{2, 4, 6}, {1, 2, 3}, {5, 10, 15}});
  const Matrix h{{1, 2, 3}};
  const auto r = nmf_transform(C, h, 500, 1);
  CHECK(relative_error(C, r.W, h) < 1e-6);
  CHECK(r.W(0, 0) / r.W(1, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(r.W(2, 0) / r.W(1, 0) == doctest::Approx(5.0).epsilon(1e-6));
  check_monotone(r.objective_trace);
}

TEST_CASE("a fitted basis transforms better than a random one") {
  std::mt19937_64 rng(8);
  const auto C = random_counts(rng, 10, 8);
  const auto fit = nmf_factorize(C, 3, 500, 4);
  Matrix random_h(3, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < random_h.size(); ++i) random_h.data()[i] = u(rng);
  const auto good = nmf_transform(C, fit.H, 200, 6);
  const auto bad = nmf_transform(C, random_h, 200, 6);
  CHECK(good.objective_trace.back() <= bad.objective_trace.back());
}

TEST_CASE("zero row gets loadings at the floor") {
  const auto C = from_dense({{1, 2}, {0, 0}, {3, 1}});
  const Matrix h{{1, 1}, {1, 0}};
  const auto r = nmf_transform(C, h, 500, 2);
  CHECK(r.W.row(1).maxCoeff() <= 1e-8);
}
