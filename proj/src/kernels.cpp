#include "dipolerg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

namespace dipolerg {

Kernel::Kernel(int d, int radius) : d_(d), radius_(radius) {
  if (d < 1 || d > kMaxDim) throw UnsupportedDimensionError("Kernel: bad dimension");
  if (radius < 0) throw Error("Kernel: negative radius");
  side_ = 2 * static_cast<std::int64_t>(radius) + 1;
  std::int64_t n = 1;
  for (int i = 0; i < d; ++i) n *= side_;
  v_.assign(n, 0.0);
}

std::size_t Kernel::offset(const std::vector<int>& x) const {
  std::int64_t idx = 0;
  for (int i = 0; i < d_; ++i) {
    const int c = x[i] + radius_;
    if (c < 0 || c >= side_) throw CoverageError("Kernel: site outside table");
    idx = idx * side_ + c;
  }
  return static_cast<std::size_t>(idx);
}

double Kernel::at(const std::vector<int>& x) const { return v_[offset(x)]; }
double& Kernel::ref(const std::vector<int>& x) { return v_[offset(x)]; }

double Kernel::value_or_zero(const std::vector<int>& x) const {
  for (int i = 0; i < d_; ++i) {
    if (std::abs(x[i]) > radius_) {
      if (finite_range) return 0.0;
      throw CoverageError("Kernel: site outside table of an unbounded kernel");
    }
  }
  return v_[offset(x)];
}

void Kernel::for_each_site(
    const std::function<void(const std::vector<int>&, double)>& fn) const {
  std::vector<int> x(d_, -radius_);
  std::size_t idx = 0;
  while (true) {
    fn(x, v_[idx]);
    ++idx;
    int axis = d_ - 1;
    while (axis >= 0 && x[axis] == radius_) x[axis--] = -radius_;
    if (axis < 0) break;
    ++x[axis];
  }
}

// ---------------------------------------------------------------------------
// Brillouin-zone quadrature route.

namespace {

// c_d = int_{[0,1]^d} |u|^{-2} du via the exact scaling identity
// c_d = A_d / (1 - 2^{2-d}), A_d the integral over [0,1]^d \ [0,1/2]^d.
double corner_singularity_constant(int d) {
  static std::map<int, double> cache;
  static std::mutex mu;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(d);
    if (it != cache.end()) return it->second;
  }
  const Quadrature1D base = gauss_legendre(24);
  const Quadrature1D lohalf = scaled_rule(base, 0.0, 0.5);
  const Quadrature1D hihalf = scaled_rule(base, 0.5, 1.0);
  const int n = static_cast<int>(base.nodes.size());
  double A = 0.0;
  // cells indexed by a bitmask: bit=1 -> [1/2,1] on that axis; skip all-zero
  for (int mask = 1; mask < (1 << d); ++mask) {
    std::vector<int> idx(d, 0);
    while (true) {
      double w = 1.0, r2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const Quadrature1D& q = (mask >> a) & 1 ? hihalf : lohalf;
        w *= q.weights[idx[a]];
        r2 += q.nodes[idx[a]] * q.nodes[idx[a]];
      }
      A += w / r2;
      int axis = d - 1;
      while (axis >= 0 && idx[axis] == n - 1) idx[axis--] = 0;
      if (axis < 0) break;
      ++idx[axis];
    }
  }
  const double c = A / (1.0 - std::pow(2.0, 2 - d));
  std::lock_guard<std::mutex> lock(mu);
  cache[d] = c;
  return c;
}

struct AxisGrid {
  std::vector<double> nodes;
  std::vector<double> weights;
  int order = 0;  // the first `order` nodes form the innermost panel [0,h]
};

// Innermost panel [0,h], then dyadic panels toward pi, split further so
// Gauss-Legendre resolves cos(p x) oscillation.
AxisGrid axis_grid(int levels, int order, int xmax) {
  AxisGrid g;
  g.order = order;
  const Quadrature1D base = gauss_legendre(order);
  const double h = M_PI * std::pow(0.5, levels);
  {
    const Quadrature1D q = scaled_rule(base, 0.0, h);
    g.nodes.insert(g.nodes.end(), q.nodes.begin(), q.nodes.end());
    g.weights.insert(g.weights.end(), q.weights.begin(), q.weights.end());
  }
  for (int k = levels - 1; k >= 0; --k) {
    const double b = M_PI * std::pow(0.5, k);
    const double a = 0.5 * b;
    const int m = std::max(1, static_cast<int>(std::ceil((b - a) * (xmax + 3) / 4.0)));
    for (int s = 0; s < m; ++s) {
      const double pa = a + (b - a) * s / m;
      const double pb = a + (b - a) * (s + 1) / m;
      const Quadrature1D q = scaled_rule(base, pa, pb);
      g.nodes.insert(g.nodes.end(), q.nodes.begin(), q.nodes.end());
      g.weights.insert(g.weights.end(), q.weights.begin(), q.weights.end());
    }
  }
  return g;
}

// One full pass of int mult(lambda) cos(p.x) / lambda over [0,pi]^d.  The
// corner cell [0,h]^d carries the m0/|p|^2 singularity: its Gauss estimate of
// m0 cos/|p|^2 is swapped for the exact scaling value m0 c_d h^{d-2}; the
// bounded remainder stays on the rule.
double symbol_quadrature_pass(int d, const std::vector<int>& x, int levels, int order,
                              const std::function<double(double)>& multiplier,
                              double m0) {
  int xmax = 0;
  for (int a = 0; a < d; ++a) xmax = std::max(xmax, std::abs(x[a]));
  const AxisGrid g = axis_grid(levels, order, xmax);
  const int n = static_cast<int>(g.nodes.size());

  std::vector<double> one_minus_cos(n), cospx(static_cast<std::size_t>(d) * n);
  for (int i = 0; i < n; ++i) one_minus_cos[i] = 1.0 - std::cos(g.nodes[i]);
  for (int a = 0; a < d; ++a) {
    for (int i = 0; i < n; ++i) {
      cospx[static_cast<std::size_t>(a) * n + i] = std::cos(g.nodes[i] * x[a]);
    }
  }

  double acc = 0.0;
  std::vector<int> idx(d, 0);
  while (true) {
    double w = 1.0, lam = 0.0;
    for (int a = 0; a < d; ++a) {
      const int i = idx[a];
      w *= g.weights[i] * cospx[static_cast<std::size_t>(a) * n + i];
      lam += one_minus_cos[i];
    }
    lam *= 2.0;
    acc += w * (multiplier ? multiplier(lam) : 1.0) / lam;
    int axis = d - 1;
    while (axis >= 0 && idx[axis] == n - 1) idx[axis--] = 0;
    if (axis < 0) break;
    ++idx[axis];
  }

  double gl_corner = 0.0;
  std::vector<int> jdx(d, 0);
  while (true) {
    double w = 1.0, p2 = 0.0;
    for (int a = 0; a < d; ++a) {
      const int i = jdx[a];
      w *= g.weights[i] * cospx[static_cast<std::size_t>(a) * n + i];
      p2 += g.nodes[i] * g.nodes[i];
    }
    gl_corner += w / p2;
    int axis = d - 1;
    while (axis >= 0 && jdx[axis] == g.order - 1) jdx[axis--] = 0;
    if (axis < 0) break;
    ++jdx[axis];
  }

  const double h = M_PI * std::pow(0.5, levels);
  acc += m0 * (corner_singularity_constant(d) * std::pow(h, d - 2) - gl_corner);
  return acc / std::pow(M_PI, d);
}

double coulomb_quadrature_pass(int d, const std::vector<int>& x, int levels, int order) {
  return symbol_quadrature_pass(d, x, levels, order, nullptr, 1.0);
}

}  // namespace

double coulomb(int d, const std::vector<int>& x, double tol) {
  if (d < 3) {
    throw UnsupportedDimensionError("coulomb: integral diverges at p=0 for d <= 2");
  }
  if (static_cast<int>(x.size()) != d) throw Error("coulomb: bad site");
  int xmax = 0;
  for (int a = 0; a < d; ++a) xmax = std::max(xmax, std::abs(x[a]));

  // Corner-cell residual error scales like h^{d-2} (h x)^2; pick levels.
  int levels = 8;
  const double cd = corner_singularity_constant(d);
  while (levels < 40) {
    const double h = M_PI * std::pow(0.5, levels);
    const double err =
        cd * std::pow(h, d - 2) / std::pow(M_PI, d) * (0.5 * h * h * xmax * xmax * d + 1e-4);
    if (err < 0.1 * tol) break;
    ++levels;
  }

  const double v1 = coulomb_quadrature_pass(d, x, levels, 8);
  const double v2 = coulomb_quadrature_pass(d, x, levels + 2, 12);
  const double achieved = std::abs(v2 - v1);
  if (achieved > tol) {
    throw ConvergenceError("coulomb: quadrature refinement estimate exceeds tol", achieved);
  }
  return v2;
}

Kernel build_symbol_table(int d, int radius,
                          const std::function<double(double)>& multiplier, double m0,
                          int levels, int order, int threads) {
  if (d < 3) {
    throw UnsupportedDimensionError("build_symbol_table: needs d >= 3");
  }
  Kernel k(d, radius);
  std::vector<std::vector<int>> canonical;
  {
    std::vector<int> c(d, 0);
    while (true) {
      bool sorted = true;
      for (int a = 0; a + 1 < d; ++a) sorted = sorted && c[a] <= c[a + 1];
      if (sorted) canonical.push_back(c);
      int axis = d - 1;
      while (axis >= 0 && c[axis] == radius) c[axis--] = 0;
      if (axis < 0) break;
      ++c[axis];
    }
  }
  const std::size_t nsites = canonical.size();

  // shared grid: the multiplier is evaluated once per node, the cos products
  // come from per-axis tables
  const AxisGrid g = axis_grid(levels, order, radius);
  const int n = static_cast<int>(g.nodes.size());
  std::vector<double> one_minus_cos(n);
  for (int i = 0; i < n; ++i) one_minus_cos[i] = 1.0 - std::cos(g.nodes[i]);
  // costab[i * (radius+1) + v] = cos(p_i v)
  std::vector<double> costab(static_cast<std::size_t>(n) * (radius + 1));
  for (int i = 0; i < n; ++i) {
    for (int v = 0; v <= radius; ++v) {
      costab[static_cast<std::size_t>(i) * (radius + 1) + v] = std::cos(g.nodes[i] * v);
    }
  }

  // enumerate cells as products of per-axis node indices, chunked by the
  // leading axis for deterministic parallel reduction
  std::vector<std::vector<double>> partial(std::max(threads, 1),
                                           std::vector<double>(nsites, 0.0));
  run_chunks(static_cast<std::size_t>(n), threads, [&](int chunk, std::size_t lo,
                                                       std::size_t hi) {
    std::vector<double>& acc = partial[chunk];
    std::vector<int> idx(d, 0);
    std::vector<double> prod(nsites);
    for (std::size_t i0 = lo; i0 < hi; ++i0) {
      idx.assign(d, 0);
      idx[0] = static_cast<int>(i0);
      while (true) {
        double w = 1.0, lam = 0.0;
        for (int a = 0; a < d; ++a) {
          w *= g.weights[idx[a]];
          lam += one_minus_cos[idx[a]];
        }
        lam *= 2.0;
        const double q = w * (multiplier ? multiplier(lam) : 1.0) / lam;
        for (std::size_t s = 0; s < nsites; ++s) {
          double cp = 1.0;
          for (int a = 0; a < d; ++a) {
            cp *= costab[static_cast<std::size_t>(idx[a]) * (radius + 1) +
                         canonical[s][a]];
          }
          acc[s] += q * cp;
        }
        int axis = d - 1;
        while (axis >= 1 && idx[axis] == n - 1) idx[axis--] = 0;
        if (axis < 1) break;
        ++idx[axis];
      }
    }
  });

  std::vector<double> values(nsites, 0.0);
  for (const auto& acc : partial) {
    for (std::size_t s = 0; s < nsites; ++s) values[s] += acc[s];
  }

  // corner-cell correction per site (cheap: order^d nodes)
  const double h = M_PI * std::pow(0.5, levels);
  const double corner = corner_singularity_constant(d) * std::pow(h, d - 2);
  for (std::size_t s = 0; s < nsites; ++s) {
    double gl_corner = 0.0;
    std::vector<int> jdx(d, 0);
    while (true) {
      double w = 1.0, p2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const int i = jdx[a];
        w *= g.weights[i] *
             costab[static_cast<std::size_t>(i) * (radius + 1) + canonical[s][a]];
        p2 += g.nodes[i] * g.nodes[i];
      }
      gl_corner += w / p2;
      int axis = d - 1;
      while (axis >= 0 && jdx[axis] == g.order - 1) jdx[axis--] = 0;
      if (axis < 0) break;
      ++jdx[axis];
    }
    values[s] = (values[s] + m0 * (corner - gl_corner)) / std::pow(M_PI, d);
  }

  std::map<std::vector<int>, double> lut;
  for (std::size_t i = 0; i < nsites; ++i) lut[canonical[i]] = values[i];
  std::vector<int> x(d, -radius);
  while (true) {
    std::vector<int> key(d);
    for (int a = 0; a < d; ++a) key[a] = std::abs(x[a]);
    std::sort(key.begin(), key.end());
    k.ref(x) = lut[key];
    int axis = d - 1;
    while (axis >= 0 && x[axis] == radius) x[axis--] = -radius;
    if (axis < 0) break;
    ++x[axis];
  }
  return k;
}

// ---------------------------------------------------------------------------
// Heat-kernel route: C(x) = int_0^inf prod_a f_{|x_a|}(t) dt with
// f_n(t) = exp(-2t) I_n(2t).

namespace {

// f_n(t) for n = 0..nmax by downward (Miller) recurrence with the
// normalization f_0 + 2 sum_{n>=1} f_n = 1.
void scaled_bessel_row(double t, int nmax, std::vector<double>& out) {
  out.assign(nmax + 1, 0.0);
  if (t < 1e-14) {
    out[0] = 1.0;
    return;
  }
  const int start =
      static_cast<int>(2.0 * t + 25.0 * std::cbrt(2.0 * t + 1.0) + 50.0) + nmax;
  std::vector<double> u(start + 2, 0.0);
  u[start + 1] = 0.0;
  u[start] = 1e-280;
  for (int k = start; k >= 1; --k) {
    u[k - 1] = u[k + 1] + (static_cast<double>(k) / t) * u[k];
    if (u[k - 1] > 1e260) {
      const double s = 1e-260;
      for (int m = k - 1; m <= start + 1; ++m) u[m] *= s;
    }
  }
  double norm = u[0];
  for (int k = 1; k <= start; ++k) norm += 2.0 * u[k];
  for (int n = 0; n <= nmax; ++n) out[n] = u[n] / norm;
}

struct HeatGrid {
  std::vector<double> nodes, weights;
  double T = 0.0;
};

HeatGrid heat_grid(int nmax) {
  HeatGrid g;
  g.T = std::max(4096.0, 28.0 * nmax * nmax);
  const Quadrature1D base = gauss_legendre(24);
  double a = 0.0, b = 1.0;
  while (a < g.T) {
    const Quadrature1D q = scaled_rule(base, a, std::min(b, g.T));
    g.nodes.insert(g.nodes.end(), q.nodes.begin(), q.nodes.end());
    g.weights.insert(g.weights.end(), q.weights.begin(), q.weights.end());
    a = b;
    b *= 2.0;
  }
  return g;
}

// Asymptotic tail int_T^inf prod_a f_{n_a}(t) dt through third order in 1/t.
double heat_tail(int d, const std::vector<int>& x, double T) {
  // per-factor series 1 + s1/t + s2/t^2 + s3/t^3 (including the sign)
  auto factor_series = [](int n) {
    std::array<double, 4> s{1.0, 0.0, 0.0, 0.0};
    const double fourn2 = 4.0 * n * n;
    double prod = 1.0;
    double fact = 1.0;
    for (int k = 1; k <= 3; ++k) {
      prod *= fourn2 - (2.0 * k - 1.0) * (2.0 * k - 1.0);
      fact *= k;
      s[k] = ((k % 2) ? -1.0 : 1.0) * prod / (fact * std::pow(16.0, k));
    }
    return s;
  };
  std::array<double, 4> c{1.0, 0.0, 0.0, 0.0};
  for (int a = 0; a < d; ++a) {
    const auto s = factor_series(std::abs(x[a]));
    std::array<double, 4> nc{};
    for (int i = 0; i < 4; ++i) {
      for (int k = 0; i + k < 4; ++k) nc[i + k] += c[i] * s[k];
    }
    c = nc;
  }
  double tail = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double power = 0.5 * d + k - 1.0;
    tail += c[k] * std::pow(T, -power) / power;
  }
  return tail * std::pow(4.0 * M_PI, -0.5 * d);
}

}  // namespace

double coulomb_heat_kernel(int d, const std::vector<int>& x) {
  if (d < 3) {
    throw UnsupportedDimensionError("coulomb: integral diverges at p=0 for d <= 2");
  }
  int nmax = 0;
  for (int a = 0; a < d; ++a) nmax = std::max(nmax, std::abs(x[a]));
  const HeatGrid g = heat_grid(nmax);
  std::vector<double> row;
  double acc = 0.0;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    scaled_bessel_row(g.nodes[i], nmax, row);
    double prod = 1.0;
    for (int a = 0; a < d; ++a) prod *= row[std::abs(x[a])];
    acc += g.weights[i] * prod;
  }
  return acc + heat_tail(d, x, g.T);
}

Kernel build_coulomb_table(int d, int radius, int threads) {
  if (d < 3) {
    throw UnsupportedDimensionError("coulomb: integral diverges at p=0 for d <= 2");
  }
  Kernel k(d, radius);

  // canonical sites: sorted absolute coordinates
  std::vector<std::vector<int>> canonical;
  {
    std::vector<int> c(d, 0);
    while (true) {
      bool sorted = true;
      for (int a = 0; a + 1 < d; ++a) sorted = sorted && c[a] <= c[a + 1];
      if (sorted) canonical.push_back(c);
      int axis = d - 1;
      while (axis >= 0 && c[axis] == radius) c[axis--] = 0;
      if (axis < 0) break;
      ++c[axis];
    }
  }

  std::vector<double> values(canonical.size(), 0.0);
  run_chunks(canonical.size(), threads, [&](int, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      values[i] = coulomb_heat_kernel(d, canonical[i]);
    }
  });

  // shared t-grid per value would also work; per-site cost is already small
  std::map<std::vector<int>, double> lut;
  for (std::size_t i = 0; i < canonical.size(); ++i) lut[canonical[i]] = values[i];

  std::vector<int> x(d, -radius);
  while (true) {
    std::vector<int> key(d);
    for (int a = 0; a < d; ++a) key[a] = std::abs(x[a]);
    std::sort(key.begin(), key.end());
    k.ref(x) = lut[key];
    int axis = d - 1;
    while (axis >= 0 && x[axis] == radius) x[axis--] = -radius;
    if (axis < 0) break;
    ++x[axis];
  }
  return k;
}

// ---------------------------------------------------------------------------

double kernel_laplacian(const Kernel& k, const std::vector<int>& x) {
  const int d = k.dim();
  double acc = 2.0 * d * k.at(x);
  std::vector<int> y = x;
  for (int a = 0; a < d; ++a) {
    y[a] = x[a] + 1;
    acc -= k.at(y);
    y[a] = x[a] - 1;
    acc -= k.at(y);
    y[a] = x[a];
  }
  return acc;
}

Kernel kernel_derivative(const Kernel& k, const std::vector<int>& alpha) {
  if (alpha.size() > 4) throw Error("kernel_derivative: |alpha| > 4 unsupported");
  Kernel cur = k;
  for (const int mu : alpha) {
    if (mu == 0 || std::abs(mu) > k.dim()) {
      throw InvalidDirectionError("kernel_derivative: bad direction");
    }
    if (cur.radius() == 0) throw CoverageError("kernel_derivative: table exhausted");
    Kernel next(cur.dim(), cur.radius() - 1);
    next.finite_range = cur.finite_range;
    next.range = cur.range;
    const int axis = std::abs(mu) - 1, sgn = mu > 0 ? 1 : -1;
    std::vector<int> x(cur.dim(), -next.radius());
    while (true) {
      std::vector<int> y = x;
      y[axis] += sgn;
      next.ref(x) = cur.at(y) - cur.at(x);
      int a = cur.dim() - 1;
      while (a >= 0 && x[a] == next.radius()) x[a--] = -next.radius();
      if (a < 0) break;
      ++x[a];
    }
    cur = std::move(next);
  }
  return cur;
}

DecayFit decay_fit(const Kernel& k, const std::vector<int>& alpha, int radius) {
  const Kernel dk = kernel_derivative(k, alpha);
  if (radius > dk.radius()) throw CoverageError("decay_fit: table does not cover radius");
  const int d = k.dim();
  const double power = -static_cast<double>(d) + 2.0 - static_cast<double>(alpha.size());

  DecayFit out;
  std::vector<double> lx, ly;
  dk.for_each_site([&](const std::vector<int>& x, double v) {
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) r2 += static_cast<double>(x[a]) * x[a];
    const double r = std::sqrt(r2);
    if (r > radius + 1e-9) return;
    const double bound = std::pow(1.0 + r, power);
    out.constant = std::max(out.constant, std::abs(v) / bound);
    if (std::abs(v) > 0.0) {
      lx.push_back(std::log(1.0 + r));
      ly.push_back(std::log(std::abs(v)));
    }
  });
  if (lx.size() < 2) {
    out.degenerate = true;
    out.exponent = -std::numeric_limits<double>::infinity();
    return out;
  }
  out.exponent = fit_line(lx, ly).second;
  return out;
}

}  // namespace dipolerg
