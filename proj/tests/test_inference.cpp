#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "tvtbip/errors.hpp"
#include "tvtbip/inference.hpp"
#include "tvtbip/synth.hpp"
#include "oracles.hpp"

using namespace tvtbip;
using namespace tvtbip::oracle;

TEST_CASE("init_variational examples") {
  std::mt19937_64 rng(1);
  const auto c = small_corpus(rng, 2, 2, 1);
  FitConfig cfg;
  cfg.topics = 1;
  NmfResult nmf;
  nmf.W = Matrix{{2.0}, {0.0}};
  nmf.H = Matrix{{1.0, 3.0}};
  const auto s = init_variational(c, cfg, nmf);
  CHECK(s.mu_theta(0, 0) == doctest::Approx(std::log(2.0)));
  CHECK(s.mu_theta(1, 0) == doctest::Approx(std::log(1e-6)));
  CHECK(s.mu_beta(0, 1) == doctest::Approx(std::log(3.0)));
  CHECK(s.mu_eta.isZero(0.0));
  CHECK(s.mu_x.isZero(0.0));
  for (const Matrix* m : {&s.logsig_theta, &s.logsig_beta, &s.logsig_eta}) CHECK((m->array() == -2.0).all());
  CHECK((s.logsig_x.array() == -2.0).all());

  nmf.W = Matrix{{1.0, 1.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(init_variational(c, cfg, nmf), DimensionMismatch);
}

TEST_CASE("reparameterized_sample examples") {
  std::mt19937_64 rng(2);
  const auto c = small_corpus(rng, 3, 2, 2);
  auto s = random_state(rng, c, 2);
  Noise zero = draw_noise(s, 3, rng);
  zero.theta.setZero();
  zero.beta.setZero();
  zero.eta.setZero();
  zero.x.setZero();
  const auto p = reparameterized_sample(s, zero);
  CHECK(p.theta.isApprox(s.mu_theta.array().exp().matrix()));
  CHECK(p.eta == s.mu_eta);
  CHECK(p.x == s.mu_x);

  s.mu_theta.setZero();
  s.logsig_theta.setZero();
  Noise ones = zero;
  ones.theta.setOnes();
  CHECK(reparameterized_sample(s, ones).theta(0, 0) == doctest::Approx(std::numbers::e));

  Rng a(9), b(9);
  const auto na = draw_noise(s, 3, a);
  const auto nb = draw_noise(s, 3, b);
  CHECK(na.theta == nb.theta);
  CHECK(na.eta == nb.eta);
  CHECK(na.x == nb.x);
}

TEST_CASE("analytic gradient matches central finite differences") {
  std::mt19937_64 rng(123);
  const auto c = small_corpus(rng, 5, 6, 3);
  const auto s = random_state(rng, c, 2);
  Rng nr(5);
  CHECK(worst_fd_error(s, c, {draw_noise(s, 5, nr)}) < 1e-4);
}

TEST_CASE("mu_x gradient vanishes at zero with zero noise") {
  std::mt19937_64 rng(4);
  const auto c = small_corpus(rng, 4, 3, 2);
  auto s = random_state(rng, c, 2);
  s.mu_x.setZero();
  s.mu_eta.setZero();
  Noise n = draw_noise(s, 4, rng);
  n.theta.setZero();
  n.beta.setZero();
  n.eta.setZero();
  n.x.setZero();
  const std::vector<Noise> noise = {n};
  const auto g = elbo_and_gradient(s, c, all_docs(c), {}, noise).gradient;
  CHECK(g.mu_x.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("worker count does not change the estimate") {
  std::mt19937_64 rng(8);
  const auto c = small_corpus(rng, 40, 12, 4);
  const auto s = random_state(rng, c, 3);
  Rng nr(1);
  const std::vector<Noise> noise = {draw_noise(s, 40, nr), draw_noise(s, 40, nr)};
  const auto a = elbo_and_gradient(s, c, all_docs(c), {}, noise, 1);
  const auto b = elbo_and_gradient(s, c, all_docs(c), {}, noise, 4);
  CHECK(a.value.total() == doctest::Approx(b.value.total()).epsilon(1e-12));
  std::vector<double> ga, gb;
  a.gradient.for_each([&](double v) { ga.push_back(v); });
  b.gradient.for_each([&](double v) { gb.push_back(v); });
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == doctest::Approx(gb[i]).epsilon(1e-10));
}

TEST_CASE("Monte Carlo ELBO agrees with quadrature on a one-topic instance") {
  std::mt19937_64 rng(31);
  const auto c = small_corpus(rng, 2, 2, 2);
  const auto s = random_state(rng, c, 1);
  const PriorConfig prior;
  const double oracle = quadrature_elbo(s, c, prior);
  const auto docs = all_docs(c);
  Rng nr(77);
  const auto mc = monte_carlo(10000, [&] {
    const std::vector<Noise> one = {draw_noise(s, docs.size(), nr)};
    return elbo_with_noise(s, c, docs, prior, one).total();
  });
  INFO("mc " << mc.mean << " se " << mc.se << " quadrature " << oracle);
  CHECK(std::abs(mc.mean - oracle) < 3.0 * mc.se);
  CHECK(mc.se > 0.0);
}

TEST_CASE("scaled half batch is unbiased for the full batch") {
  std::mt19937_64 rng(12);
  const auto base = small_corpus(rng, 2, 3, 2);
  SessionCorpus dup = base;
  std::vector<Triplet> t;
  for (std::size_t copy = 0; copy < 2; ++copy) {
    for (std::size_t d = 0; d < 2; ++d) {
      for (const auto& e : base.counts.row(d)) t.push_back({copy * 2 + d, static_cast<std::size_t>(e.col), e.count});
    }
  }
  dup.counts = CountMatrix::from_triplets(4, 3, std::move(t));
  dup.doc_speaker = {0, 1, 0, 1};
  auto s = random_state(rng, dup, 2);
  s.mu_theta.bottomRows(2) = s.mu_theta.topRows(2).eval();
  s.logsig_theta.bottomRows(2) = s.logsig_theta.topRows(2).eval();

  const std::vector<std::size_t> full = {0, 1, 2, 3}, half = {0, 1};
  Rng ra(1), rb(2);
  const int n = 100000;
  const auto a = monte_carlo(n, [&] {
    const std::vector<Noise> one = {draw_noise(s, 4, ra)};
    return elbo_with_noise(s, dup, full, {}, one).total();
  });
  const auto b = monte_carlo(n, [&] {
    const std::vector<Noise> one = {draw_noise(s, 2, rb)};
    return elbo_with_noise(s, dup, half, {}, one).total();
  });
  INFO("full " << a.mean << " +- " << a.se << ", half " << b.mean << " +- " << b.se);
  CHECK(std::abs(a.mean - b.mean) < 4.0 * std::hypot(a.se, b.se));
}

TEST_CASE("averaging more draws lowers the estimator variance") {
  std::mt19937_64 rng(15);
  const auto c = small_corpus(rng, 6, 4, 2);
  const auto s = random_state(rng, c, 2);
  const auto docs = all_docs(c);
  Rng nr(3);
  auto spread = [&](int m) {
    return monte_carlo(2000, [&] {
      std::vector<Noise> noise;
      for (int i = 0; i < m; ++i) noise.push_back(draw_noise(s, docs.size(), nr));
      return elbo_with_noise(s, c, docs, {}, noise).total();
    });
  };
  const auto one = spread(1), four = spread(4);
  CHECK(four.se < one.se * 0.7);
  CHECK(std::abs(four.mean - one.mean) < 4.0 * std::hypot(one.se, four.se));
}

TEST_CASE("entropy closed form") {
  CHECK(normal_entropy(0.0) == doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e)));
  CHECK(lognormal_entropy(1.5, 0.0) == doctest::Approx(1.5 + normal_entropy(0.0)));

  // -E log q by sampling a log-normal.
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  const double mu = 0.4, sg = 0.6;
  const auto mc = monte_carlo(200000, [&] {
    const double lv = mu + sg * z(rng);
    return -(normal_logpdf(lv, mu, sg) - lv);
  });
  CHECK(std::abs(mc.mean - lognormal_entropy(mu, std::log(sg))) < 4.0 * mc.se);

  const auto c = small_corpus(rng, 3, 3, 2);
  auto s = random_state(rng, c, 2);
  const auto docs = all_docs(c);
  const double before = variational_entropy(s, docs, 1.0);
  for (Matrix* m : {&s.logsig_theta, &s.logsig_beta, &s.logsig_eta}) m->array() -= 1.0;
  s.logsig_x.array() -= 1.0;
  CHECK(variational_entropy(s, docs, 1.0) < before);
}

TEST_CASE("posterior_means examples") {
  auto s = VariationalState::zeros(1, 1, 1, 1);
  s.logsig_theta(0, 0) = -30.0;
  s.logsig_beta(0, 0) = 0.5 * std::log(2.0 * std::log(2.0));
  s.mu_eta(0, 0) = 0.3;
  s.mu_x(0) = -0.2;
  const auto p = posterior_means(s);
  CHECK(p.theta(0, 0) == doctest::Approx(1.0));
  CHECK(p.beta(0, 0) == doctest::Approx(2.0));
  CHECK(p.eta(0, 0) == 0.3);
  CHECK(p.x(0) == -0.2);
}

TEST_CASE("posterior mean matches a million log-normal draws") {
  auto s = VariationalState::zeros(1, 1, 1, 1);
  s.mu_theta(0, 0) = 0.3;
  s.logsig_theta(0, 0) = std::log(0.8);
  Rng rng(2024);
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) sum += reparameterized_sample(s, draw_noise(s, 1, rng)).theta(0, 0);
  const double want = posterior_means(s).theta(0, 0);
  CHECK(std::abs(sum / n - want) / want < 0.005);
}

TEST_CASE("sample_batch draws distinct ascending rows") {
  Rng rng(6);
  std::vector<int> hits(50, 0);
  for (int trial = 0; trial < 4000; ++trial) {
    const auto b = sample_batch(50, 10, rng);
    REQUIRE(b.size() == 10);
    CHECK(std::is_sorted(b.begin(), b.end()));
    CHECK(std::adjacent_find(b.begin(), b.end()) == b.end());
    CHECK(b.back() < 50);
    for (auto i : b) ++hits[i];
  }
  // Each row is included with probability 1/5: 800 expected, SD ~25.
  for (int h : hits) CHECK(std::abs(h - 800) < 130);
  CHECK(sample_batch(5, 99, rng) == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("swap_topic_blocs is an involution that exchanges low-side profiles") {
  std::mt19937_64 rng(44);
  const auto c = small_corpus(rng, 12, 5, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_state(rng, c, 3);
    const auto once = swap_topic_blocs(s, c, 0, 2);
    const auto twice = swap_topic_blocs(once, c, 0, 2);
    CHECK(twice.mu_theta == s.mu_theta);
    CHECK(twice.mu_beta.isApprox(s.mu_beta, 1e-10));
    CHECK(twice.mu_eta.isApprox(s.mu_eta, 1e-10));
    CHECK(once.mu_x == s.mu_x);
    CHECK(once.mu_theta.col(1) == s.mu_theta.col(1));
    CHECK(once.mu_beta.row(1) == s.mu_beta.row(1));

    std::vector<double> xs(s.mu_x.data(), s.mu_x.data() + s.mu_x.size());
    std::sort(xs.begin(), xs.end());
    const double median = xs[xs.size() / 2];
    for (std::size_t d = 0; d < c.num_docs(); ++d) {
      const auto r = static_cast<Eigen::Index>(d);
      const bool low = s.mu_x(static_cast<Eigen::Index>(c.doc_speaker[d])) < median;
      CHECK(once.mu_theta(r, 0) == (low ? s.mu_theta(r, 2) : s.mu_theta(r, 0)));
    }
  }
  CHECK_THROWS(swap_topic_blocs(random_state(rng, c, 3), c, 1, 1));
}

TEST_CASE("fit_session raises the ELBO and is deterministic") {
  Scenario sc;
  sc.topics = 2;
  sc.terms = 50;
  sc.docs = 100;
  sc.speakers = 10;
  const auto data = generate_corpus(sc, 3);
  const auto& c = data.corpora[0];
  FitConfig cfg;
  cfg.topics = 2;
  cfg.iters = 3000;
  cfg.batch_size = 32;
  cfg.seed = 11;
  const auto nmf = nmf_factorize(c.counts, 2, 300, 11);
  const auto a = fit_session(c, cfg, init_variational(c, cfg, nmf));
  REQUIRE(a.elbo_trace.size() == 30);
  CHECK(a.elbo_trace.back().elbo > a.elbo_trace.front().elbo);
  CHECK(a.elbo_trace.back().iteration == 3000);
  CHECK(a.state.all_finite());

  const auto b = fit_session(c, cfg, init_variational(c, cfg, nmf));
  CHECK(a.state == b.state);
  REQUIRE(a.elbo_trace.size() == b.elbo_trace.size());
  for (std::size_t i = 0; i < a.elbo_trace.size(); ++i) CHECK(a.elbo_trace[i].elbo == b.elbo_trace[i].elbo);

  const auto p = posterior_means(a.state);
  CHECK(p.theta == a.params.theta);
  CHECK(p.x == a.params.x);
}

TEST_CASE("fit_session rejects mismatched inputs") {
  std::mt19937_64 rng(1);
  const auto c = small_corpus(rng, 4, 3, 2);
  FitConfig cfg;
  cfg.topics = 2;
  cfg.iters = 5;
  auto s = random_state(rng, c, 3);
  CHECK_THROWS_AS(fit_session(c, cfg, s), DimensionMismatch);
  s = random_state(rng, c, 2);
  cfg.learning_rate = 0.0;
  CHECK_THROWS(fit_session(c, cfg, s));
  cfg.learning_rate = 0.01;
  s.mu_x.resize(5);
  CHECK_THROWS_AS(fit_session(c, cfg, s), DimensionMismatch);
}
