#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "dipolerg/common.hpp"

namespace dipolerg {

// Translation-invariant kernel tabulated on the cube |x|_inf <= radius.
class Kernel {
 public:
  Kernel() = default;
  Kernel(int d, int radius);

  int dim() const { return d_; }
  int radius() const { return radius_; }

  double at(const std::vector<int>& x) const;
  double& ref(const std::vector<int>& x);

  // Outside the table: 0 for declared finite-range kernels, error otherwise.
  double value_or_zero(const std::vector<int>& x) const;

  // Zero outside the declared range (exact finite-range kernels).
  bool finite_range = false;
  double range = std::numeric_limits<double>::infinity();

  // Raw storage (cube of side 2*radius+1, row-major), index via offset().
  std::vector<double>& data() { return v_; }
  const std::vector<double>& data() const { return v_; }
  std::size_t offset(const std::vector<int>& x) const;

  // All sites of the table in a fixed (row-major) order.
  void for_each_site(const std::function<void(const std::vector<int>&, double)>& fn) const;

 private:
  int d_ = 0;
  int radius_ = 0;
  std::int64_t side_ = 1;
  std::vector<double> v_;
};

// ---------------------------------------------------------------------------
// Lattice Coulomb kernel C = (-Lap)^{-1} on Z^d, d >= 3.

// Brillouin-zone quadrature for a single site value: product Gauss-Legendre
// with dyadic refinement toward p=0 and oscillation-aware panel splitting.
// Throws ConvergenceError if the two-level refinement estimate exceeds tol.
double coulomb(int d, const std::vector<int>& x, double tol);

// Same value through the heat-kernel route C(x) = int_0^inf prod_a
// exp(-2t) I_{x_a}(2t) dt (scaled-Bessel products, asymptotic tail).  Fast
// enough for full tables; agrees with coulomb() to ~1e-9.
double coulomb_heat_kernel(int d, const std::vector<int>& x);

// Full table builder (heat-kernel route, parallel over sites, symmetrized so
// all hyperoctahedral images are bit-identical).
Kernel build_coulomb_table(int d, int radius, int threads = 1);

// Table of (2pi)^{-d} int e^{ip.x} mult(lambda(p))/lambda(p) dp for a bounded
// multiplier with mult(0) = m0 (same dyadic scheme as coulomb()).
Kernel build_symbol_table(int d, int radius,
                          const std::function<double(double)>& multiplier, double m0,
                          int levels = 10, int order = 10, int threads = 1);

// (-Lap K)(x) from the table; needs |x|_inf <= radius-1.
double kernel_laplacian(const Kernel& k, const std::vector<int>& x);

// Kernel of d^alpha K, alpha a list of signed directions, |alpha| <= 4.
Kernel kernel_derivative(const Kernel& k, const std::vector<int>& alpha);

struct DecayFit {
  double constant = 0.0;   // smallest c with |K(x)| <= c (1+|x|)^{-d+2-|alpha|}
  double exponent = 0.0;   // least-squares slope of log|K| vs log(1+|x|)
  bool degenerate = false; // all-zero table; exponent reported as -inf
};

DecayFit decay_fit(const Kernel& k, const std::vector<int>& alpha, int radius);

}  // namespace dipolerg
