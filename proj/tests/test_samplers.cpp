#include <doctest.h>

#include <map>
#include <set>

#include "fedld/samplers.hpp"
#include "support.hpp"

using namespace fedld;
using namespace fedld::testing;

TEST_CASE("correlated noise endpoints") {
  std::mt19937_64 rng(1);
  const Vector s = randn(4, rng), l = randn(4, rng);
  // b = 1: the shared draw passes through untouched
  CHECK((correlated_noise(s, l, 1.0, 1) - s).norm() == 0.0);
  CHECK((correlated_noise(s, l, 0.0, 5) - l).norm() == 0.0);
  // b clients, tau = 1: shared draw scaled by 1/sqrt(b), identical across clients
  CHECK((correlated_noise(s, l, 1.0, 4) - 0.5 * s).norm() < 1e-15);
  CHECK_THROWS_AS(correlated_noise(s, l, 1.5, 1), InputError);
  CHECK_THROWS_AS(correlated_noise(s, l, -0.1, 1), InputError);
  NoiseSpec bad{0.5, 0, 1};
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("correlated noise covariance by Monte Carlo") {
  // b = 1: the usual sqrt(tau) mixing, marginal N(0, 1); b = 3: pair covariance tau/b
  for (std::size_t b : {std::size_t{1}, std::size_t{3}}) {
    const double tau = 0.5;
    const int n = 100000;
    std::mt19937_64 rng(2 + b);
    double s11 = 0, s12 = 0, avg = 0;
    for (int k = 0; k < n; ++k) {
      const Vector sh = randn(1, rng);
      const Vector l1 = randn(1, rng), l2 = randn(1, rng);
      const double a = correlated_noise(sh, l1, tau, b)[0];
      const double c = correlated_noise(sh, l2, tau, b)[0];
      s11 += a * a;
      s12 += a * c;
      avg += a;
    }
    s11 /= n;
    s12 /= n;
    avg /= n;
    const double bb = static_cast<double>(b);
    const double var = tau / bb + 1 - tau;
    const double cov = tau / bb;
    CHECK(std::abs(avg) < 3 * std::sqrt(var / n));
    CHECK(std::abs(s11 - var) < 3 * std::sqrt(2 * var * var / n));
    CHECK(std::abs(s12 - cov) < 3 * std::sqrt((var * var + cov * cov) / n));
  }
}

TEST_CASE("client average noise has variance 1/b for every tau") {
  const std::size_t b = 4;
  for (double tau : {0.0, 0.3, 1.0}) {
    std::mt19937_64 rng(7);
    const int n = 50000;
    double s2 = 0;
    for (int k = 0; k < n; ++k) {
      const Vector sh = randn(1, rng);
      double m = 0;
      for (std::size_t i = 0; i < b; ++i) m += correlated_noise(sh, randn(1, rng), tau, b)[0];
      m /= b;
      s2 += m * m;
    }
    s2 /= n;
    CHECK(std::abs(s2 - 0.25) < 3 * 0.25 * std::sqrt(2.0 / n));
  }
}

TEST_CASE("rule parsing") {
  CHECK(LocalGradientRule::parse("fald").name() == "fald");
  CHECK(LocalGradientRule::parse("vr_fald", "exact").name() == "vr_fald_exact");
  CHECK(LocalGradientRule::parse("vr_fald").uses_control_variate());
  CHECK_THROWS_AS(LocalGradientRule::parse("sgd"), ConfigError);
  CHECK_THROWS_AS(LocalGradientRule::parse("fald", "approx"), ConfigError);
}

TEST_CASE("fald gradient") {
  std::mt19937_64 rng(3);
  auto g = random_gaussian(3, 1, rng);
  PotentialSet set({g}, Vector::Zero(1));
  const auto& gp = static_cast<const GaussianPotential&>(*g);
  const std::vector<std::size_t> batch{0};
  CHECK(fald_gradient(set.client(0), gp.mean(), {}, GradientMode::exact).norm() < 1e-14);
  const Vector x = randn(3, rng);
  CHECK(rel_err(fald_gradient(set.client(0), x, batch), grad(set.client(0), x)) < 1e-14);

  PotentialSet mix({random_gaussian(2, 5, rng)}, {}, 1.0);
  const Vector y = randn(2, rng);
  Vector acc = Vector::Zero(2);
  const auto all = subsets(5, 2);
  for (const auto& s : all) acc += fald_gradient(mix.client(0), y, s);
  CHECK(rel_err(acc / static_cast<double>(all.size()), grad(mix.client(0), y)) < 1e-12);
}

TEST_CASE("vr gradient") {
  std::mt19937_64 rng(4);
  std::vector<std::shared_ptr<const PotentialModel>> clients{random_gaussian(2, 4, rng), random_logistic(2, 5, rng),
                                                             random_gaussian(2, 3, rng)};
  PotentialSet set(clients, {}, 0.5);
  std::vector<Vector> xs{randn(2, rng), randn(2, rng), randn(2, rng)};
  const auto cv = init_control_variate(set, xs);

  SUBCASE("x at the reference returns the shift") {
    for (std::size_t i = 0; i < 3; ++i) {
      const std::vector<std::size_t> batch{1, 2};
      CHECK(rel_err(vrfald_gradient(set.client(i), cv.reference, cv, batch), cv.shift) < 1e-14);
    }
  }
  SUBCASE("exact telescoping") {
    Vector lhs = Vector::Zero(2), rhs = Vector::Zero(2);
    for (std::size_t i = 0; i < 3; ++i) {
      lhs += vrfald_gradient(set.client(i), xs[i], cv, {}, GradientMode::exact);
      rhs += grad(set.client(i), xs[i]);
    }
    CHECK(rel_err(lhs, rhs) < 1e-12);
  }
  SUBCASE("stochastic telescoping by enumeration") {
    Vector lhs = Vector::Zero(2), rhs = Vector::Zero(2);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto all = subsets(set.model(i).num_terms(), 2);
      Vector m = Vector::Zero(2);
      for (const auto& s : all) m += vrfald_gradient(set.client(i), xs[i], cv, s);
      lhs += m / static_cast<double>(all.size());
      rhs += grad(set.client(i), xs[i]);
    }
    CHECK(rel_err(lhs, rhs) < 1e-12);
  }
  SUBCASE("exact mode ignores the batch") {
    const std::vector<std::size_t> b1{0}, b2{2, 3};
    const Vector a = vrfald_gradient(set.client(0), xs[0], cv, b1, GradientMode::exact);
    const Vector b = vrfald_gradient(set.client(0), xs[0], cv, b2, GradientMode::exact);
    CHECK((a - b).norm() == 0.0);
  }
}

TEST_CASE("control variate update") {
  std::mt19937_64 rng(5);
  std::vector<std::shared_ptr<const PotentialModel>> clients;
  for (int i = 0; i < 3; ++i) clients.push_back(random_gaussian(2, 1, rng, 2.0));
  PotentialSet set(clients);
  std::vector<Vector> xs{randn(2, rng), randn(2, rng), randn(2, rng)};
  const auto cv = init_control_variate(set, xs);

  const auto same = update_control_variate(cv, xs, set, false);
  CHECK((same.reference - cv.reference).norm() == 0.0);
  CHECK((same.shift - cv.shift).norm() == 0.0);

  const Vector xstar = minimizer(set);
  std::vector<Vector> at_star(3, xstar);
  CHECK(update_control_variate(cv, at_star, set, true).shift.norm() < 1e-12);

  std::vector<Vector> ys{randn(2, rng), randn(2, rng), randn(2, rng)};
  const auto fresh = update_control_variate(cv, ys, set, true);
  const Vector y = (ys[0] + ys[1] + ys[2]) / 3.0;
  Vector c = Vector::Zero(2);
  for (auto& m : clients) {
    const auto& g = static_cast<const GaussianPotential&>(*m);
    c += g.precision() * (y - g.mean());
  }
  CHECK(rel_err(fresh.reference, y) < 1e-15);
  CHECK(rel_err(fresh.shift, c / 3.0) < 1e-13);
}

TEST_CASE("local step") {
  const Vector x = Vector::Constant(1, 2.0);
  CHECK(local_step(x, Vector::Zero(1), 0.1, Vector::Zero(1))[0] == 2.0);
  CHECK(local_step(x, Vector::Constant(1, 1.0), 0.1, Vector::Constant(1, 0.5))[0] ==
        doctest::Approx(2.1236068).epsilon(1e-8));
  std::mt19937_64 rng(6);
  const Vector y = randn(3, rng), g = randn(3, rng);
  CHECK(rel_err(local_step(y, g, 0.3, Vector::Zero(3)) - y, -0.3 * g) < 1e-15);
  CHECK_THROWS_AS(local_step(x, x, 0.0, x), ConfigError);
  CHECK_THROWS_AS(local_step(x, x, -1.0, x), ConfigError);
}

TEST_CASE("ula step") {
  std::mt19937_64 rng(8);
  auto g = random_gaussian(2, 1, rng);
  PotentialSet one({g});
  const Vector x = randn(2, rng), z = randn(2, rng);
  const Vector expect = x - 0.05 * grad(one.client(0), x) + std::sqrt(0.1) * z;
  CHECK(rel_err(ula_step(one, x, 0.05, z), expect) < 1e-15);

  PotentialSet set({random_gaussian(2, 1, rng), random_gaussian(2, 2, rng), g});
  const Vector xs = minimizer(set);
  CHECK(rel_err(ula_step(set, xs, 0.1, Vector::Zero(2)), xs) < 1e-12);
  CHECK_THROWS_AS(ula_step(set, xs, 0.0, xs), ConfigError);
}

TEST_CASE("batch sampler draws uniform subsets") {
  CHECK_THROWS_AS(BatchSampler(4, 0), ConfigError);
  CHECK_THROWS_AS(BatchSampler(4, 5), ConfigError);

  std::mt19937_64 rng(9), untouched(9);
  BatchSampler full(5, 5);
  const auto f = full.draw(rng);
  CHECK(f.size() == 5);
  CHECK(rng == untouched);

  // N=5, n=2: each of the 10 subsets with frequency 1/10
  BatchSampler s(5, 2);
  std::map<std::set<std::size_t>, int> freq;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto b = s.draw(rng);
    std::set<std::size_t> key(b.begin(), b.end());
    REQUIRE(key.size() == 2);
    REQUIRE(*key.rbegin() < 5);
    ++freq[key];
  }
  CHECK(freq.size() == 10);
  for (auto& [k, c] : freq) CHECK(std::abs(c / double(n) - 0.1) < 4 * std::sqrt(0.09 / n));

  // a draw depends only on the generator state
  std::mt19937_64 r1(10), r2(10);
  BatchSampler a(7, 3), b(7, 3);
  for (int k = 0; k < 5; ++k) a.draw(r1);
  std::mt19937_64 r3 = r1;
  const auto x = a.draw(r1);
  const std::vector<std::size_t> xa(x.begin(), x.end());
  const auto y = b.draw(r3);
  CHECK(xa == std::vector<std::size_t>(y.begin(), y.end()));
}
