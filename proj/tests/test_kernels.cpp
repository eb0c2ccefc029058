#include <doctest.h>

#include <cmath>

#include "dipolerg/kernels.hpp"

using namespace dipolerg;

namespace {

const Kernel& shared_table() {
  static const Kernel k = build_coulomb_table(3, 8, 2);
  return k;
}

}  // namespace

TEST_CASE("coulomb rejects d <= 2") {
  CHECK_THROWS_AS(coulomb(2, {0, 0}, 1e-6), UnsupportedDimensionError);
  CHECK_THROWS_AS(coulomb_heat_kernel(1, {0}), UnsupportedDimensionError);
}

TEST_CASE("coulomb at the origin (d=3)") {
  // 0.2527310098... (the standard simple-cubic lattice value)
  const double v = coulomb(3, {0, 0, 0}, 1e-6);
  CHECK(v == doctest::Approx(0.252731009859).epsilon(1e-8));
  CHECK(coulomb_heat_kernel(3, {0, 0, 0}) == doctest::Approx(v).epsilon(1e-9));
}

TEST_CASE("two quadrature routes agree") {
  for (const auto& x : std::vector<std::vector<int>>{{1, 0, 0}, {2, 1, 0}, {3, 2, 1}}) {
    const double a = coulomb(3, x, 1e-6);
    const double b = coulomb_heat_kernel(3, x);
    CHECK(std::abs(a - b) < 2e-9);
  }
}

TEST_CASE("x and -x give equal values") {
  const double a = coulomb(3, {2, -1, 3}, 1e-6);
  const double b = coulomb(3, {-2, 1, -3}, 1e-6);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("minus-Laplacian of the table is the delta function") {
  const Kernel& k = shared_table();
  CHECK(kernel_laplacian(k, {0, 0, 0}) == doctest::Approx(1.0).epsilon(1e-8));
  for (const auto& x :
       std::vector<std::vector<int>>{{1, 0, 0}, {2, 1, 0}, {4, 3, 1}, {6, 5, 4}}) {
    CHECK(std::abs(kernel_laplacian(k, x)) < 1e-8);
  }
}

TEST_CASE("hyperoctahedral symmetry is exact on the table") {
  const Kernel& k = shared_table();
  CHECK(k.at({2, 3, 1}) == k.at({1, 2, 3}));
  CHECK(k.at({-2, 3, -1}) == k.at({1, 2, 3}));
  CHECK(k.at({3, -1, 2}) == k.at({1, 2, 3}));
}

TEST_CASE("kernel derivative stencils") {
  const Kernel& k = shared_table();
  // alpha = 0 is the identity
  const Kernel same = kernel_derivative(k, {});
  CHECK(same.at({1, 2, 3}) == k.at({1, 2, 3}));
  // commutation
  const Kernel d12 = kernel_derivative(k, {1, 2});
  const Kernel d21 = kernel_derivative(k, {2, 1});
  d12.for_each_site([&](const std::vector<int>& x, double v) {
    CHECK(v == doctest::Approx(d21.at(x)).epsilon(1e-14));
  });
  // d_{-mu} d_mu is the positive second difference along the axis, so the
  // axis sum applied to C reproduces (-Lap C) = +delta_0
  Kernel acc(3, k.radius() - 2);
  for (int mu = 1; mu <= 3; ++mu) {
    const Kernel dd = kernel_derivative(k, {mu, -mu});
    acc.for_each_site([&](const std::vector<int>& x, double) { acc.ref(x) += dd.at(x); });
  }
  CHECK(acc.at({0, 0, 0}) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(std::abs(acc.at({2, 1, 0})) < 1e-8);
  // cap
  CHECK_THROWS(kernel_derivative(k, {1, 1, 2, 2, 3}));
}

TEST_CASE("decay fits") {
  const Kernel& k = shared_table();
  const DecayFit f0 = decay_fit(k, {}, 6);
  const DecayFit f1 = decay_fit(k, {1}, 6);
  const DecayFit f2 = decay_fit(k, {1, 2}, 6);
  // |alpha| = 2: fitted exponent <= -(d-2+2) + 0.3
  CHECK(f2.exponent <= -2.7);
  // exponent monotone in |alpha|
  CHECK(f1.exponent < f0.exponent);
  // finite constants witness the paper-form bound over the table
  CHECK(f0.constant > 0.0);
  CHECK(std::isfinite(f2.constant));

  // finite-range toy: zero away from the origin -> degenerate sentinel
  Kernel toy(3, 3);
  toy.finite_range = true;
  toy.range = 0.5;
  const DecayFit ft = decay_fit(toy, {}, 2);
  CHECK(ft.degenerate);
  CHECK(std::isinf(ft.exponent));

  // linearity: scaling the kernel doubles the constant
  Kernel scaled = k;
  for (auto& v : scaled.data()) v *= 2.0;
  const DecayFit fs = decay_fit(scaled, {1}, 6);
  CHECK(fs.constant == doctest::Approx(2.0 * f1.constant));
}

TEST_CASE("coverage errors") {
  const Kernel& k = shared_table();
  CHECK_THROWS_AS(k.at({9, 0, 0}), CoverageError);
  CHECK_THROWS_AS(decay_fit(k, {1}, 8), CoverageError);
}
