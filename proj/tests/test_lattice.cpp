#include <doctest.h>

#include <cmath>

#include "dipolerg/lattice.hpp"

using namespace dipolerg;

namespace {

Field coordinate_field(const Torus& g, int axis) {
  Field phi(g);
  for (std::int64_t i = 0; i < g.volume(); ++i) phi.v[i] = static_cast<double>(g.coords(i)[axis]);
  return phi;
}

Field random_field(const Torus& g, std::uint64_t seed, bool integers = false) {
  Field phi(g);
  Rng rng(seed);
  for (auto& v : phi.v) v = integers ? std::floor(6.0 * rng.uniform()) - 3.0 : rng.normal();
  return phi;
}

}  // namespace

TEST_CASE("lattice spec validation") {
  LatticeSpec ok{3, 5, 2};
  ok.validate();
  CHECK(ok.side() == 25);
  CHECK(ok.volume() == 25 * 25 * 25);
  CHECK_THROWS(LatticeSpec{3, 4, 1}.validate());
  CHECK_THROWS(LatticeSpec{0, 5, 1}.validate());
  // paper regime needs L >= 2^{d+3}+1
  CHECK_THROWS(LatticeSpec{3, 5, 1}.validate(true));
  LatticeSpec paper{3, 65, 1};
  paper.validate(true);
}

TEST_CASE("forward and backward derivatives") {
  Torus g(2, 7);
  Field c(g);
  for (auto& v : c.v) v = 4.2;
  const std::int64_t x = g.index({3, 3});
  for (const int mu : {1, -1, 2, -2}) CHECK(derivative(c, mu, x) == 0.0);

  const Field phi = coordinate_field(g, 0);
  CHECK(derivative(phi, 1, x) == doctest::Approx(1.0));
  CHECK(derivative(phi, -1, x) == doctest::Approx(-1.0));
  CHECK(derivative(phi, 2, x) == doctest::Approx(0.0));

  CHECK_THROWS_AS(derivative(phi, 0, x), InvalidDirectionError);
  CHECK_THROWS_AS(derivative(phi, 3, x), InvalidDirectionError);
}

TEST_CASE("laplacian stencil") {
  {
    Torus g(1, 9);
    Field ind(g);
    ind.v[g.index({0})] = 1.0;
    CHECK(laplacian(ind, g.index({0})) == doctest::Approx(2.0));
  }
  {
    Torus g(2, 9);
    Field ind(g);
    ind.v[g.index({0, 0})] = 1.0;
    CHECK(laplacian(ind, g.index({1, 0})) == doctest::Approx(-1.0));
  }
  {
    Torus g(3, 5);
    Field c(g);
    for (auto& v : c.v) v = -1.7;
    CHECK(laplacian(c, 0) == doctest::Approx(0.0));
  }
}

TEST_CASE("quadratic energy") {
  // direct-summation oracle on the 4-site chain (0,1,0,0)
  {
    Torus g(1, 4);
    Field phi(g, {0.0, 1.0, 0.0, 0.0});
    double oracle = 0.0;
    for (std::int64_t x = 0; x < 4; ++x) {
      for (const int mu : {1, -1}) {
        const double dv = phi.v[g.neighbor(x, mu)] - phi.v[x];
        oracle += dv * dv;
      }
    }
    oracle *= 0.25;
    CHECK(oracle == doctest::Approx(1.0));  // frozen from the oracle
    CHECK(quadratic_energy(phi) == doctest::Approx(oracle));
    CHECK(quadratic_energy(phi) == doctest::Approx(dirichlet_form(phi)));
  }
  // homogeneity: V(c phi) = c^2 V(phi)
  {
    Torus g(2, 5);
    Field phi = random_field(g, 7);
    Field phi3 = phi;
    for (auto& v : phi3.v) v *= 3.0;
    CHECK(quadratic_energy(phi3) == doctest::Approx(9.0 * quadratic_energy(phi)));
  }
  // constant field
  {
    Torus g(3, 3);
    Field c(g);
    for (auto& v : c.v) v = 2.0;
    CHECK(quadratic_energy(c) == 0.0);
  }
}

TEST_CASE("dirichlet identity and adjointness") {
  Torus g(3, 4);
  for (const std::uint64_t seed : {1u, 2u, 3u}) {
    const Field phi = random_field(g, seed);
    const double v = quadratic_energy(phi);
    const double w = dirichlet_form(phi);
    CHECK(std::abs(v - w) <= 1e-12 * std::max(1.0, std::abs(v)));
  }
  // sum_x (d_mu phi)(x) psi(x) = sum_x phi(x) (d_{-mu} psi)(x)
  const Field phi = random_field(g, 11, true);
  const Field psi = random_field(g, 13, true);
  for (const int mu : {1, -2, 3}) {
    double lhs = 0.0, rhs = 0.0;
    for (std::int64_t x = 0; x < g.volume(); ++x) {
      lhs += derivative(phi, mu, x) * psi.v[x];
      rhs += phi.v[x] * derivative(psi, -mu, x);
    }
    CHECK(lhs == doctest::Approx(rhs));
  }
}

TEST_CASE("translation covariance of the stencils") {
  Torus g(2, 6);
  const Field phi = random_field(g, 17);
  // the shifted field has shifted derivatives
  Field shifted(g);
  for (std::int64_t i = 0; i < g.volume(); ++i) {
    auto c = g.coords(i);
    c[0] += 2;
    c[1] += 5;
    shifted.v[i] = phi.v[g.index(c)];
  }
  for (std::int64_t i = 0; i < g.volume(); ++i) {
    auto c = g.coords(i);
    c[0] += 2;
    c[1] += 5;
    const std::int64_t ishift = g.index(c);
    for (const int mu : {1, -1, 2, -2}) {
      CHECK(derivative(shifted, mu, i) == doctest::Approx(derivative(phi, mu, ishift)));
    }
    CHECK(laplacian(shifted, i) == doctest::Approx(laplacian(phi, ishift)));
  }
}
