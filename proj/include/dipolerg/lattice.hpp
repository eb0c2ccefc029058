#pragma once

#include <cstdint>
#include <vector>

#include "dipolerg/common.hpp"

namespace dipolerg {

// Direction indices are signed: mu in {+-1, ..., +-d}, e_{-mu} = -e_mu.
void check_direction(int d, int mu);

// Box Lambda_N = [-L^N/2, L^N/2]^d intersected with Z^d, |Lambda_N| = L^{dN}.
struct LatticeSpec {
  int d = 3;
  int L = 5;
  int N = 1;

  void validate(bool paper_regime = false) const;
  // Side of Lambda_N (odd).
  std::int64_t side() const;
  std::int64_t volume() const;
};

// Periodic cubic lattice of the given side; sites are indexed row-major.
class Torus {
 public:
  Torus(int d, std::int64_t side);

  int dim() const { return d_; }
  std::int64_t side() const { return side_; }
  std::int64_t volume() const { return volume_; }

  std::int64_t wrap(std::int64_t c) const {
    c %= side_;
    return c < 0 ? c + side_ : c;
  }

  std::int64_t index(const std::vector<std::int64_t>& x) const;
  std::vector<std::int64_t> coords(std::int64_t idx) const;

  // Index of x + e_mu (signed mu), with periodic wrap.
  std::int64_t neighbor(std::int64_t idx, int mu) const;

 private:
  int d_;
  std::int64_t side_;
  std::int64_t volume_;
  std::vector<std::int64_t> strides_;
};

// Real scalar field on a torus.
struct Field {
  Torus geom;
  std::vector<double> v;

  explicit Field(const Torus& g) : geom(g), v(g.volume(), 0.0) {}
  Field(const Torus& g, std::vector<double> values);

  double at(std::int64_t idx) const { return v[idx]; }
  double& at(std::int64_t idx) { return v[idx]; }
};

// Forward/backward lattice derivative: (d_mu phi)(x) = phi(x+e_mu) - phi(x).
double derivative(const Field& phi, int mu, std::int64_t idx);

// (-Lap phi)(x) = 2d phi(x) - sum over the 2d neighbors.
double laplacian(const Field& phi, std::int64_t idx);

// V(region, phi) = 1/4 sum_{x in region} sum_{+-mu} (d_mu phi(x))^2.
// Empty region list means the full torus.
double quadratic_energy(const Field& phi, const std::vector<std::int64_t>& region = {});

// 1/2 (phi, -Lap phi) over the full torus.
double dirichlet_form(const Field& phi);

}  // namespace dipolerg
