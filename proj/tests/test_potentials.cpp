#include <doctest.h>

#include <numeric>

#include "fedld/potentials.hpp"
#include "support.hpp"

using namespace fedld;
using namespace fedld::testing;

namespace {

PotentialSet two_gauss(double mu1, double mu2, double v1, double v2) {
  return PotentialSet({gauss1(mu1, v1), gauss1(mu2, v2)});
}

}  // namespace

TEST_CASE("gaussian gradient closed form") {
  auto m = gauss1(1.0, 2.0);
  PotentialSet set({m});
  CHECK(grad(set.client(0), Vector::Constant(1, 3.0))[0] == doctest::Approx(1.0));
  CHECK(grad(set.client(0), Vector::Constant(1, 1.0)).norm() == 0.0);
  CHECK_THROWS_AS(grad(set.client(0), Vector::Zero(2)), InputError);
}

TEST_CASE("gradients match central differences") {
  std::mt19937_64 rng(11);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index d = 1 + trial % 6;
    auto g = random_gaussian(d, 1 + trial % 3, rng, 2.0);
    auto l = random_logistic(d, 3 + trial % 7, rng, 0.1 * (trial % 4));
    std::vector<double> w{0.3, 0.7};
    PotentialSet set({g, l}, Eigen::Map<Vector>(w.data(), 2), 0.5);
    const Vector x = 2.0 * randn(d, rng);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto c = set.client(i);
      const Vector fd = central_difference([&](const Vector& y) { return c.value(y); }, x);
      if (rel_err(grad(c, x), fd) > 1e-5) ++failures;
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("hessians match differences of gradients") {
  std::mt19937_64 rng(12);
  auto l = random_logistic(3, 8, rng);
  PotentialSet set({l});
  const Vector x = randn(3, rng);
  const Matrix h = set.client(0).hessian(x);
  for (Index k = 0; k < 3; ++k) {
    const Vector fd = central_difference([&](const Vector& y) { return grad(set.client(0), y)[k]; }, x);
    CHECK(rel_err(h.row(k).transpose(), fd) < 1e-6);
  }
}

TEST_CASE("full batch stochastic gradient equals the gradient") {
  std::mt19937_64 rng(13);
  PotentialSet set({random_gaussian(3, 4, rng), random_logistic(3, 5, rng)}, {}, 0.8);
  const Vector x = randn(3, rng);
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<std::size_t> all(set.model(i).num_terms());
    std::iota(all.begin(), all.end(), 0);
    CHECK(rel_err(stochastic_grad(set.client(i), x, all), grad(set.client(i), x)) < 1e-14);
  }
}

TEST_CASE("subset average reproduces the gradient") {
  std::mt19937_64 rng(14);
  double worst = 0.0;
  for (std::size_t N = 1; N <= 6; ++N) {
    PotentialSet set({random_gaussian(2, N, rng), random_logistic(2, N, rng)}, {}, 0.4);
    const Vector x = randn(2, rng);
    for (std::size_t i = 0; i < 2; ++i) {
      const Vector g = grad(set.client(i), x);
      for (std::size_t n = 1; n <= N; ++n) {
        Vector acc = Vector::Zero(2);
        const auto all = subsets(N, n);
        for (const auto& s : all) acc += stochastic_grad(set.client(i), x, s);
        acc /= static_cast<double>(all.size());
        worst = std::max(worst, (acc - g).norm() / std::max(g.norm(), 1e-300));
      }
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("single term without prior share scales by N/n") {
  std::mt19937_64 rng(15);
  std::vector<GaussianTerm> t;
  for (int j = 0; j < 3; ++j) t.push_back({randn(2, rng), random_spd(2, 0.5, 1.0, rng)});
  auto model = std::make_shared<GaussianPotential>(GaussianPotential::from_terms(t));
  PotentialSet set({model, model}, Eigen::Vector2d(0.0, 1.0), 1.0);
  const Vector x = randn(2, rng);
  const std::vector<std::size_t> batch{1};
  const Vector expect = 3.0 * (t[1].precision * (x - t[1].mean));
  CHECK(rel_err(stochastic_grad(set.client(0), x, batch), expect) < 1e-13);
}

TEST_CASE("stochastic gradient rejects bad batches") {
  PotentialSet set({gauss1(0, 1)});
  const std::vector<std::size_t> empty, bad{3};
  CHECK_THROWS_AS(stochastic_grad(set.client(0), Vector::Zero(1), empty), InputError);
  CHECK_THROWS_AS(stochastic_grad(set.client(0), Vector::Zero(1), bad), InputError);
}

TEST_CASE("minimizer") {
  CHECK(minimizer(two_gauss(0, 2, 1, 1))[0] == doctest::Approx(1.0));
  std::mt19937_64 rng(16);
  auto g = random_gaussian(3, 1, rng);
  const auto& gp = static_cast<const GaussianPotential&>(*g);
  CHECK(rel_err(minimizer(PotentialSet({g})), gp.mean()) < 1e-12);

  std::vector<std::shared_ptr<const PotentialModel>> clients;
  for (int i = 0; i < 5; ++i) clients.push_back(random_gaussian(3, 2, rng, 3.0));
  PotentialSet set(clients);
  const Vector xs = minimizer(set);
  Vector r = Vector::Zero(3);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& m = static_cast<const GaussianPotential&>(set.model(i));
    r += m.precision() * (xs - m.mean());
  }
  CHECK(r.norm() < 1e-10);

  std::vector<std::shared_ptr<const PotentialModel>> logi;
  for (int i = 0; i < 4; ++i) logi.push_back(random_logistic(4, 20, rng, 0.05));
  PotentialSet lset(logi);
  const Vector xl = minimizer(lset);
  CHECK(lset.total_grad(xl).norm() < 1e-8 * (1 + xl.norm()));
}

TEST_CASE("heterogeneity") {
  CHECK(heterogeneity(two_gauss(0, 2, 1, 1)) == doctest::Approx(1.0));
  auto m = gauss1(0.3, 2.0);
  CHECK(heterogeneity(PotentialSet({m, m, m})) == doctest::Approx(0.0).epsilon(1e-20));

  std::mt19937_64 rng(17);
  std::vector<std::shared_ptr<const PotentialModel>> clients;
  for (int i = 0; i < 5; ++i) clients.push_back(random_gaussian(2, 1, rng, 2.0));
  PotentialSet set(clients);
  // independent: x_* from the normal equations, gradients by hand
  Matrix P = Matrix::Zero(2, 2);
  Vector rhs = Vector::Zero(2);
  for (auto& c : clients) {
    const auto& g = static_cast<const GaussianPotential&>(*c);
    P += g.precision();
    rhs += g.precision() * g.mean();
  }
  const Vector xs = P.ldlt().solve(rhs);
  double h = 0;
  for (auto& c : clients) {
    const auto& g = static_cast<const GaussianPotential&>(*c);
    h += (g.precision() * (xs - g.mean())).squaredNorm();
  }
  CHECK(heterogeneity(set) == doctest::Approx(h / 5).epsilon(1e-10));
}

TEST_CASE("constants") {
  const double lam = 2.5;
  auto iso = std::make_shared<GaussianPotential>(Vector::Zero(3), lam * Matrix::Identity(3, 3));
  auto iso2 = std::make_shared<GaussianPotential>(Vector::Ones(3), lam * Matrix::Identity(3, 3));
  PotentialSet set({iso, iso2});
  const auto rep = constants(set, {});
  CHECK(rep.strong_convexity == doctest::Approx(lam));
  CHECK(rep.smoothness == doctest::Approx(lam));
  CHECK(rep.vr_variance_const == 0.0);
  CHECK(rep.grad_variance_const == 0.0);
  CHECK(rep.stochastic_smoothness == doctest::Approx(rep.smoothness));

  // N=4, n=2 mixture of terms: plug-in of the without-replacement bound
  std::mt19937_64 rng(18);
  std::vector<GaussianTerm> t;
  for (int j = 0; j < 4; ++j) t.push_back({randn(2, rng), random_spd(2, 0.3, 2.0, rng)});
  double lj = 0;
  Matrix P = Matrix::Zero(2, 2);
  for (auto& term : t) {
    lj = std::max(lj, Eigen::SelfAdjointEigenSolver<Matrix>(term.precision).eigenvalues().maxCoeff());
    P += term.precision;
  }
  const double L = Eigen::SelfAdjointEigenSolver<Matrix>(P).eigenvalues().maxCoeff();
  auto mix = std::make_shared<GaussianPotential>(GaussianPotential::from_terms(t));
  PotentialSet mset({mix});
  const std::vector<std::size_t> n{2};
  const auto mr = constants(mset, n);
  const double factor = 2.0 * 2.0 / (4.0 * 3.0) * lj;
  CHECK(mr.vr_variance_const == doctest::Approx(factor * L));
  CHECK(mr.grad_variance_const == doctest::Approx(factor * L));
  CHECK(mr.stochastic_smoothness == doctest::Approx(L * std::sqrt(1 + factor / L)));
  CHECK(mr.stochastic_smoothness >= mr.smoothness);
  CHECK(mr.strong_convexity <= mr.smoothness);
}

TEST_CASE("potential set json round trip") {
  std::mt19937_64 rng(19);
  PotentialSet set({random_gaussian(2, 3, rng), random_logistic(2, 4, rng), random_gaussian(2, 1, rng)},
                   {}, 0.7);
  const auto back = PotentialSet::from_json(set.to_json());
  const Vector x = randn(2, rng);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(rel_err(grad(back.client(i), x), grad(set.client(i), x)) < 1e-14);
    CHECK(back.model(i).num_terms() == set.model(i).num_terms());
  }
  CHECK_THROWS_AS(PotentialSet::from_json(nlohmann::json{{"clients", nlohmann::json::array()}}), ParseError);
}

TEST_CASE("generator is deterministic and heterogeneous") {
  GaussianSetParams p;
  p.num_clients = 6;
  p.dim = 3;
  p.seed = 5;
  p.mean_spread = 2.0;
  const auto a = generate_gaussian_set(p).to_json();
  const auto b = generate_gaussian_set(p).to_json();
  CHECK(a == b);
  const auto set = generate_gaussian_set(p);
  CHECK(set.size() == 6);
  CHECK(heterogeneity(set) > 0.1);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double k = set.model(i).smoothness() / set.model(i).strong_convexity();
    CHECK(k <= p.condition_number * (1 + 1e-9));
  }
}
