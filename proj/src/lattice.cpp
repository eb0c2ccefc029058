#include "dipolerg/lattice.hpp"

#include <cmath>
#include <cstdlib>

namespace dipolerg {

void check_direction(int d, int mu) {
  if (mu == 0 || std::abs(mu) > d) {
    throw InvalidDirectionError("direction index " + std::to_string(mu) +
                                " out of range for d=" + std::to_string(d));
  }
}

void LatticeSpec::validate(bool paper_regime) const {
  if (d < 1) throw Error("LatticeSpec: d must be >= 1");
  if (L < 3 || L % 2 == 0) throw Error("LatticeSpec: L must be odd and >= 3");
  if (N < 0) throw Error("LatticeSpec: N must be >= 0");
  if (paper_regime) {
    if (d < 3) throw Error("paper regime requires d >= 3");
    const std::int64_t min_L = (std::int64_t{1} << (d + 3)) + 1;
    if (L < min_L) {
      throw Error("paper regime requires L >= 2^{d+3}+1 = " + std::to_string(min_L));
    }
  }
}

std::int64_t LatticeSpec::side() const {
  std::int64_t s = 1;
  for (int i = 0; i < N; ++i) s *= L;
  return s;
}

std::int64_t LatticeSpec::volume() const {
  std::int64_t v = 1;
  const std::int64_t s = side();
  for (int i = 0; i < d; ++i) v *= s;
  return v;
}

Torus::Torus(int d, std::int64_t side) : d_(d), side_(side) {
  if (d < 1 || d > kMaxDim) throw Error("Torus: unsupported dimension");
  if (side < 1) throw Error("Torus: side must be positive");
  strides_.resize(d);
  volume_ = 1;
  for (int i = d - 1; i >= 0; --i) {
    strides_[i] = volume_;
    volume_ *= side_;
  }
}

std::int64_t Torus::index(const std::vector<std::int64_t>& x) const {
  std::int64_t idx = 0;
  for (int i = 0; i < d_; ++i) idx += wrap(x[i]) * strides_[i];
  return idx;
}

std::vector<std::int64_t> Torus::coords(std::int64_t idx) const {
  std::vector<std::int64_t> x(d_);
  for (int i = 0; i < d_; ++i) {
    x[i] = idx / strides_[i];
    idx %= strides_[i];
  }
  return x;
}

std::int64_t Torus::neighbor(std::int64_t idx, int mu) const {
  check_direction(d_, mu);
  const int axis = std::abs(mu) - 1;
  const std::int64_t c = (idx / strides_[axis]) % side_;
  const std::int64_t cc = mu > 0 ? (c + 1 == side_ ? 0 : c + 1) : (c == 0 ? side_ - 1 : c - 1);
  return idx + (cc - c) * strides_[axis];
}

Field::Field(const Torus& g, std::vector<double> values) : geom(g), v(std::move(values)) {
  if (static_cast<std::int64_t>(v.size()) != g.volume()) {
    throw Error("Field: value count does not match torus volume");
  }
}

double derivative(const Field& phi, int mu, std::int64_t idx) {
  return phi.v[phi.geom.neighbor(idx, mu)] - phi.v[idx];
}

double laplacian(const Field& phi, std::int64_t idx) {
  const int d = phi.geom.dim();
  double acc = 2.0 * d * phi.v[idx];
  for (int a = 1; a <= d; ++a) {
    acc -= phi.v[phi.geom.neighbor(idx, a)];
    acc -= phi.v[phi.geom.neighbor(idx, -a)];
  }
  return acc;
}

double quadratic_energy(const Field& phi, const std::vector<std::int64_t>& region) {
  const int d = phi.geom.dim();
  double acc = 0.0;
  auto term = [&](std::int64_t x) {
    double s = 0.0;
    for (int a = 1; a <= d; ++a) {
      const double fw = derivative(phi, a, x);
      const double bw = derivative(phi, -a, x);
      s += fw * fw + bw * bw;
    }
    return s;
  };
  if (region.empty()) {
    for (std::int64_t x = 0; x < phi.geom.volume(); ++x) acc += term(x);
  } else {
    for (const std::int64_t x : region) acc += term(x);
  }
  return 0.25 * acc;
}

double dirichlet_form(const Field& phi) {
  double acc = 0.0;
  for (std::int64_t x = 0; x < phi.geom.volume(); ++x) acc += phi.v[x] * laplacian(phi, x);
  return 0.5 * acc;
}

}  // namespace dipolerg
