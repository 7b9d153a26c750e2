#include <doctest.h>

#include <algorithm>

#include <boost/math/distributions/chi_squared.hpp>

#include "fedld/metrics.hpp"
#include "support.hpp"

using namespace fedld;
using namespace fedld::testing;

namespace {

std::vector<Vector> scalars(std::initializer_list<double> xs) {
  std::vector<Vector> out;
  for (double x : xs) out.push_back(Vector::Constant(1, x));
  return out;
}

std::vector<Vector> draws(const GaussianLaw& law, std::size_t n, std::mt19937_64& rng) {
  const Matrix l = law.covariance().llt().matrixL();
  std::vector<Vector> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(law.mean() + l * randn(law.dim(), rng));
  return out;
}

}  // namespace

TEST_CASE("moments") {
  const auto c = std::vector<Vector>(5, Vector::Constant(2, 3.0));
  const auto mc = moments(c);
  CHECK(mc.mean == Vector::Constant(2, 3.0));
  CHECK(mc.covariance.norm() == 0.0);

  const auto two = moments(scalars({0, 2}));
  CHECK(two.mean[0] == 1.0);
  CHECK(two.covariance(0, 0) == 2.0);
  CHECK(two.mean_sq_dist_to_mean == 1.0);
  CHECK(two.second_moment_about(Vector::Zero(1)) == 2.0);

  CHECK_THROWS_AS(moments(scalars({})), InputError);
  CHECK_THROWS_AS(moments(scalars({1})), InputError);

  std::mt19937_64 rng(1);
  std::vector<Vector> n;
  for (int k = 0; k < 100000; ++k) n.push_back(randn(1, rng));
  CHECK(std::abs(moments(n).mean[0]) < 3 / std::sqrt(1e5));
}

TEST_CASE("variance mse") {
  const GaussianLaw post(Vector::Zero(1), Matrix::Constant(1, 1, 2.0));
  // mean squared distance exactly 2
  CHECK(variance_mse(scalars({std::sqrt(2.0), -std::sqrt(2.0)}), post) < 1e-30);
  CHECK(variance_mse(scalars({0.0}), post) == doctest::Approx(4.0));
  CHECK_THROWS_AS(variance_mse(std::vector<Vector>{Vector::Zero(2)}, post), InputError);

  auto s = scalars({0.1, -3, 2, 0.7});
  const double a = variance_mse(s, post);
  std::reverse(s.begin(), s.end());
  CHECK(variance_mse(s, post) == doctest::Approx(a).epsilon(1e-15));

  // i.i.d. exact draws: the error shrinks like 1/K
  std::mt19937_64 rng(2);
  const GaussianLaw law(Vector::Ones(3), Matrix::Identity(3, 3));
  auto mean_mse = [&](std::size_t k) {
    double acc = 0;
    for (int r = 0; r < 200; ++r) acc += variance_mse(draws(law, k, rng), law);
    return acc / 200;
  };
  const double small = mean_mse(500), large = mean_mse(5000);
  // E[mse] = 2 d / K for unit-variance d-dim draws
  CHECK(small == doctest::Approx(6.0 / 500).epsilon(0.25));
  CHECK(large == doctest::Approx(6.0 / 5000).epsilon(0.25));
}

TEST_CASE("empirical w2 in one dimension") {
  const std::vector<double> a{3, 1, 2}, b{0, 1}, c{1, 2};
  CHECK(empirical_w2_1d(a, a) == 0.0);
  CHECK(empirical_w2_1d(b, c) == doctest::Approx(1.0));
  CHECK(empirical_w2_1d(b, c) == empirical_w2_1d(c, b));
  CHECK_THROWS_AS(empirical_w2_1d(std::vector<double>{}, a), InputError);

  // unequal sizes: {0,1,2,3} vs {0,2} couples 0,1 -> 0 and 2,3 -> 2
  const std::vector<double> four{0, 1, 2, 3}, twoq{0, 2};
  CHECK(empirical_w2_1d(four, twoq) == doctest::Approx(std::sqrt(0.5)));

  std::mt19937_64 rng(3);
  std::vector<double> x, y, xs;
  std::normal_distribution<double> n;
  for (int k = 0; k < 100000; ++k) {
    x.push_back(n(rng));
    y.push_back(2 + n(rng));
  }
  CHECK(empirical_w2_1d(x, y) == doctest::Approx(2.0).epsilon(0.01));
  for (double v : x) xs.push_back(v + 0.7);
  CHECK(empirical_w2_1d(x, xs) == doctest::Approx(0.7).epsilon(1e-12));
  std::vector<double> x5(x), y5(y);
  for (auto& v : x5) v += 5;
  for (auto& v : y5) v += 5;
  CHECK(empirical_w2_1d(x5, y5) == doctest::Approx(empirical_w2_1d(x, y)).epsilon(1e-9));
}

TEST_CASE("gaussian fit w2") {
  std::mt19937_64 rng(4);
  const GaussianLaw law(Vector::Zero(2), random_spd(2, 0.5, 2, rng));
  const auto few = gaussian_fit_w2(draws(law, 1000, rng), law).distance;
  const auto many = gaussian_fit_w2(draws(law, 100000, rng), law).distance;
  CHECK(many < few);
  CHECK(many < 0.02);

  // collapsed trace: the fit is singular and gets regularised
  const std::vector<Vector> at_mean(10, law.mean());
  const auto fit = gaussian_fit_w2(at_mean, law);
  CHECK(fit.regularized);
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(law.covariance()).eigenvalues();
  CHECK(fit.distance == doctest::Approx(std::sqrt(ev.sum())).epsilon(1e-4));

  const auto samples = draws(law, 50, rng);
  const auto m = moments(samples);
  const auto self = gaussian_fit_w2(samples, GaussianLaw(m.mean, m.covariance));
  CHECK(self.distance < 1e-6);
  CHECK_FALSE(self.regularized);
}

TEST_CASE("quantiles and hpd thresholds") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(quantile(v, 0.75) == doctest::Approx(3.25));
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);
  CHECK(hpd_threshold(v, 0.25).threshold == doctest::Approx(3.25));
  const std::vector<double> odd{5, 1, 3};
  CHECK(hpd_threshold(odd, 0.5).threshold == 3.0);
  CHECK_THROWS_AS(hpd_threshold(v, 0.0), InputError);
  CHECK_THROWS_AS(hpd_threshold(v, 1.0), InputError);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::vector<double> pot;
  for (int k = 0; k < 200000; ++k) {
    const double x = 1 + 2 * n(rng);
    pot.push_back((x - 1) * (x - 1) / 8);  // -log density of N(1, 4) up to a constant
  }
  double prev = -1;
  for (double a : {0.5, 0.2, 0.1, 0.05}) {
    const double eta = hpd_threshold(pot, a).threshold;
    const double exact = 0.5 * boost::math::quantile(boost::math::chi_squared(1.0), 1 - a);
    CHECK(eta == doctest::Approx(exact).epsilon(0.02));
    CHECK(eta >= prev);
    prev = eta;
  }
}

TEST_CASE("coordinate extraction") {
  const std::vector<Vector> s{Eigen::Vector2d(1, 2), Eigen::Vector2d(3, 4)};
  CHECK(coordinate(s, 1) == std::vector<double>{2, 4});
  CHECK_THROWS_AS(coordinate(s, 2), InputError);
}
