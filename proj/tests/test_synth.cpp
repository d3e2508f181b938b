#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "tvtbip/errors.hpp"
#include "tvtbip/synth.hpp"

using namespace tvtbip;

namespace {

Scenario tiny() {
  Scenario sc;
  sc.topics = 2;
  sc.terms = 30;
  sc.docs = 60;
  sc.speakers = 6;
  return sc;
}

std::vector<SessionParams> truths_as_fits(const SyntheticData& d) {
  std::vector<SessionParams> out;
  for (std::size_t t = 0; t < d.corpora.size(); ++t) out.push_back(truth_params_for_corpus(d.truth, t, d.corpora[t]));
  return out;
}

}  // namespace

TEST_CASE("same seed gives identical corpora") {
  const auto a = generate_corpus(tiny(), 5);
  const auto b = generate_corpus(tiny(), 5);
  CHECK(a.corpora == b.corpora);
  CHECK(a.truth.params[0].beta == b.truth.params[0].beta);
  const auto c = generate_corpus(tiny(), 6);
  CHECK_FALSE(a.corpora == c.corpora);
}

TEST_CASE("zero drift keeps the truth fixed across sessions") {
  auto sc = tiny();
  sc.sessions = 2;
  sc.gap = 0.0;
  const auto d = generate_corpus(sc, 1);
  REQUIRE(d.truth.params.size() == 2);
  CHECK(d.truth.params[0].beta == d.truth.params[1].beta);
  CHECK(d.truth.params[0].eta == d.truth.params[1].eta);
  CHECK(d.truth.params[0].x == d.truth.params[1].x);
  CHECK(d.corpora[1].session == 2);
}

TEST_CASE("generated corpora are valid and parties alternate") {
  const auto d = generate_corpus(tiny(), 2);
  const auto& c = d.corpora[0];
  CHECK_NOTHROW(c.validate());
  CHECK(d.truth.party_of[0] == Party::D);
  CHECK(d.truth.party_of[1] == Party::R);
  const auto& x = d.truth.params[0].x;
  for (Eigen::Index s = 0; s < x.size(); ++s) {
    CHECK(std::abs(std::abs(x(s)) - 1.0) < 0.6);
    CHECK((x(s) > 0) == (d.truth.party_of[static_cast<std::size_t>(s)] == Party::D));
  }
}

TEST_CASE("count draws average to the model rate") {
  std::mt19937_64 rng(99);
  const double th[] = {0.8, 1.7};
  const Matrix beta{{0.9}, {1.3}};
  const Matrix eta{{0.4}, {-0.7}};
  const double x = 0.6;
  const Vector rate = poisson_rate(th, beta, eta, x);
  const double want = 0.8 * 0.9 * std::exp(0.24) + 1.7 * 1.3 * std::exp(-0.42);
  CHECK(rate(0) == doctest::Approx(want).epsilon(1e-12));
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(draw_counts(rate, rng)[0]);
  CHECK(std::abs(sum / n - want) / want < 0.01);
  CHECK(draw_counts(Vector::Constant(3, 1e-320), rng) == std::vector<std::int64_t>{0, 0, 0});
}

TEST_CASE("truth injected as the fit scores perfectly") {
  auto sc = tiny();
  sc.sessions = 2;
  sc.drift = 0.05;
  const auto d = generate_corpus(sc, 4);
  const auto fits = truths_as_fits(d);
  const auto rep = recovery_report(fits, d.corpora, d.truth);
  REQUIRE(rep.sessions.size() == 2);
  for (const auto& s : rep.sessions) {
    CHECK(s.mean_beta_cosine == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.mean_eta_cosine == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.x_correlation == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.sign == 1);
    CHECK(s.topic_permutation == std::vector<std::size_t>{0, 1});
    REQUIRE(s.partisanship_error.has_value());
  }
}

TEST_CASE("flipping x and eta is undone by sign alignment") {
  const auto d = generate_corpus(tiny(), 8);
  auto fits = truths_as_fits(d);
  fits[0].x = -fits[0].x;
  fits[0].eta = -fits[0].eta;
  const auto rep = recovery_report(fits, d.corpora, d.truth);
  CHECK(rep.sessions[0].x_correlation == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.sessions[0].sign == -1);
  CHECK(rep.sessions[0].mean_eta_cosine == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("permuted topics are matched back") {
  auto sc = tiny();
  sc.topics = 3;
  const auto d = generate_corpus(sc, 12);
  auto fits = truths_as_fits(d);
  auto& p = fits[0];
  const Matrix beta = p.beta, eta = p.eta, theta = p.theta;
  const std::vector<Eigen::Index> perm = {2, 0, 1};
  for (Eigen::Index k = 0; k < 3; ++k) {
    p.beta.row(k) = 4.0 * beta.row(perm[static_cast<std::size_t>(k)]);
    p.eta.row(k) = eta.row(perm[static_cast<std::size_t>(k)]);
    p.theta.col(k) = theta.col(perm[static_cast<std::size_t>(k)]) / 4.0;
  }
  const auto rep = recovery_report(fits, d.corpora, d.truth);
  CHECK(rep.sessions[0].topic_permutation == std::vector<std::size_t>{2, 0, 1});
  CHECK(rep.sessions[0].mean_beta_cosine == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("no polarization skips the partisanship metric") {
  auto sc = tiny();
  sc.gap = 0.0;
  const auto d = generate_corpus(sc, 3);
  const auto rep = recovery_report(truths_as_fits(d), d.corpora, d.truth);
  CHECK_FALSE(rep.sessions[0].partisanship_error.has_value());
}

TEST_CASE("greedy matching and correlation helpers") {
  const Matrix a{{1, 0, 0}, {0, 1, 0}};
  const Matrix b{{0, 2, 0.1}, {3, 0, 0}};
  CHECK(greedy_topic_matching(a, b) == std::vector<std::size_t>{1, 0});
  const std::vector<double> u = {1, 2, 3}, v = {2, 4, 6.5};
  CHECK(pearson_correlation(u, u) == doctest::Approx(1.0));
  CHECK(pearson_correlation(u, v) > 0.99);
}

TEST_CASE("bad scenarios are rejected") {
  auto sc = tiny();
  sc.topics = 0;
  CHECK_THROWS(generate_corpus(sc, 1));
  sc = tiny();
  sc.gap = -1.0;
  CHECK_THROWS(generate_corpus(sc, 1));
}
