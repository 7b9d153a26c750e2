#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "fedld/potentials.hpp"

namespace fedld::testing {

inline Vector randn(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vector v(d);
  for (Index k = 0; k < d; ++k) v[k] = n(rng);
  return v;
}

// SPD with eigenvalues drawn in [lo, hi]
inline Matrix random_spd(Index d, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix a(d, d);
  for (Index r = 0; r < d; ++r)
    for (Index c = 0; c < d; ++c) a(r, c) = std::normal_distribution<double>()(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix q = qr.householderQ();
  Vector ev(d);
  for (Index k = 0; k < d; ++k) ev[k] = u(rng);
  Matrix s = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

inline std::shared_ptr<const PotentialModel> random_gaussian(Index d, std::size_t terms, std::mt19937_64& rng,
                                                             double spread = 1.0) {
  if (terms == 1) return std::make_shared<GaussianPotential>(spread * randn(d, rng), random_spd(d, 0.5, 3.0, rng));
  std::vector<GaussianTerm> t;
  for (std::size_t j = 0; j < terms; ++j) t.push_back({spread * randn(d, rng), random_spd(d, 0.2, 1.5, rng)});
  return std::make_shared<GaussianPotential>(GaussianPotential::from_terms(std::move(t)));
}

inline std::shared_ptr<const PotentialModel> random_logistic(Index d, std::size_t rows, std::mt19937_64& rng,
                                                             double ridge = 0.3) {
  Matrix z(static_cast<Index>(rows), d);
  Vector o(static_cast<Index>(rows));
  std::bernoulli_distribution coin(0.5);
  for (Index r = 0; r < z.rows(); ++r) {
    z.row(r) = randn(d, rng).transpose();
    o[r] = coin(rng) ? 1.0 : 0.0;
  }
  return std::make_shared<LogisticPotential>(z, o, ridge);
}

// 1-d Gaussian client N(mu, var)
inline std::shared_ptr<const PotentialModel> gauss1(double mu, double var) {
  return std::make_shared<GaussianPotential>(Vector::Constant(1, mu), Matrix::Constant(1, 1, 1.0 / var));
}

inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x) {
  const double h = 1e-5 * (1.0 + x.norm());
  Vector g(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    Vector a = x, b = x;
    a[k] += h;
    b[k] -= h;
    g[k] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

// every k-subset of {0..n-1}
inline std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<bool> mask(n, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(k), true);
  do {
    std::vector<std::size_t> s;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[j]) s.push_back(j);
    out.push_back(std::move(s));
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return out;
}

inline double rel_err(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace fedld::testing
