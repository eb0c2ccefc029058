#include "dipolerg/gas.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dipolerg {

// ---------------------------------------------------------------------------
// Spherical moments.

double sphere_cos_moment(int d, double vnorm) {
  const double v = std::abs(vnorm);
  if (d < 1) throw UnsupportedDimensionError("sphere_cos_moment: d >= 1");
  if (d == 1) return std::cos(v);
  if (d == 3) return v < 1e-8 ? 1.0 - v * v / 6.0 : std::sin(v) / v;
  if (d == 2) {
    // (1/pi) int_0^pi cos(v cos a) da, uniform rule (periodic integrand)
    const int n = 128;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += std::cos(v * std::cos(M_PI * (i + 0.5) / n));
    }
    return acc / n;
  }
  // d >= 4: int cos(v cos t) sin^{d-2} t dt / int sin^{d-2} t dt
  static const Quadrature1D q = gauss_legendre(96);
  const Quadrature1D rule = scaled_rule(q, 0.0, M_PI);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double s = std::pow(std::sin(rule.nodes[i]), d - 2);
    num += rule.weights[i] * s * std::cos(v * std::cos(rule.nodes[i]));
    den += rule.weights[i] * s;
  }
  return num / den;
}

double sphere_cos_moment_vec(int d, const std::vector<double>& v) {
  double n2 = 0.0;
  for (int a = 0; a < d; ++a) n2 += v[a] * v[a];
  return sphere_cos_moment(d, std::sqrt(n2));
}

SphereRule sphere_rule(int d, int order) {
  SphereRule r;
  if (d == 1) {
    r.points = {{1.0}, {-1.0}};
    r.weights = {0.5, 0.5};
    return r;
  }
  if (d == 2) {
    const int n = 4 * order;
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * M_PI * (i + 0.5) / n;
      r.points.push_back({std::cos(a), std::sin(a)});
      r.weights.push_back(1.0 / n);
    }
    return r;
  }
  if (d == 3) {
    const Quadrature1D gl = gauss_legendre(order);
    const int na = 2 * order;
    for (int i = 0; i < order; ++i) {
      const double c = gl.nodes[i], s = std::sqrt(std::max(0.0, 1.0 - c * c));
      for (int j = 0; j < na; ++j) {
        const double a = 2.0 * M_PI * (j + 0.5) / na;
        r.points.push_back({s * std::cos(a), s * std::sin(a), c});
        r.weights.push_back(gl.weights[i] / 2.0 / na);
      }
    }
    return r;
  }
  throw UnsupportedDimensionError("sphere_rule: only d <= 3 tabulated");
}

// ---------------------------------------------------------------------------
// Dipole pieces.

double dipole_interaction(const Kernel& c, const std::vector<double>& p1,
                          const std::vector<double>& p2, const std::vector<int>& dx) {
  const int d = c.dim();
  double acc = 0.0;
  std::vector<int> v(d);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      // d^{(1)}_a d^{(2)}_b C: four-point stencil
      v = dx;
      v[a] += 1;
      v[b] -= 1;
      double s = c.value_or_zero(v);
      v = dx;
      v[a] += 1;
      s -= c.value_or_zero(v);
      v = dx;
      v[b] -= 1;
      s -= c.value_or_zero(v);
      s += c.value_or_zero(dx);
      acc += p1[a] * p2[b] * s;
    }
  }
  return acc;
}

double pair_energy(const DipoleConfig& cfg, const Kernel& c) {
  const int d = c.dim();
  double acc = 0.0;
  std::vector<int> dx(d);
  for (const auto& dk : cfg) {
    for (const auto& dj : cfg) {
      for (int a = 0; a < d; ++a) dx[a] = dk.x[a] - dj.x[a];
      acc += dipole_interaction(c, dk.p, dj.p, dx);
    }
  }
  return acc;
}

double w_energy(const Field& phi, const std::vector<std::int64_t>& region, double u) {
  const int d = phi.geom.dim();
  std::vector<double> g(d);
  double acc = 0.0;
  auto term = [&](std::int64_t x) {
    for (int a = 1; a <= d; ++a) g[a - 1] = u * derivative(phi, a, x);
    return sphere_cos_moment_vec(d, g);
  };
  if (region.empty()) {
    for (std::int64_t x = 0; x < phi.geom.volume(); ++x) acc += term(x);
  } else {
    for (const std::int64_t x : region) acc += term(x);
  }
  return acc;
}

double w_total(const Field& phi, double u) { return w_energy(phi, {}, u); }

// ---------------------------------------------------------------------------
// External field spec.

int ExternalFieldSpec::m() const {
  return variant == FieldVariant::general ? static_cast<int>(general.size())
                                          : static_cast<int>(points.size());
}

void ExternalFieldSpec::validate(int d) const {
  if (variant == FieldVariant::none) return;
  if (variant == FieldVariant::general) {
    if (general.empty()) throw Error("field spec: general variant without functionals");
    return;
  }
  if (points.size() < 2) throw Error("field spec: need m >= 2 points");
  if (points.size() != dirs.size()) throw Error("field spec: points/dirs mismatch");
  for (const auto mu : dirs) check_direction(d, mu);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t k = i + 1; k < points.size(); ++k) {
      if (points[i] == points[k]) throw Error("field spec: points must be distinct");
    }
  }
  for (const auto& tk : t) {
    if (std::abs(tk) > t_radius + 1e-12) {
      throw Error("field spec: |t_k| exceeds the analyticity radius");
    }
  }
}

// ---------------------------------------------------------------------------
// FFT helpers (hand-rolled: deterministic across platforms, no plan state).

namespace {

void dft_line(std::complex<double>* buf, int n, bool inverse) {
  if ((n & (n - 1)) == 0) {
    // iterative radix-2
    for (int i = 1, j = 0; i < n; ++i) {
      int bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(buf[i], buf[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
      const double ang = (inverse ? 2.0 : -2.0) * M_PI / len;
      const std::complex<double> wl(std::cos(ang), std::sin(ang));
      for (int i = 0; i < n; i += len) {
        std::complex<double> w(1.0);
        for (int k = 0; k < len / 2; ++k) {
          const std::complex<double> u = buf[i + k];
          const std::complex<double> v = buf[i + k + len / 2] * w;
          buf[i + k] = u + v;
          buf[i + k + len / 2] = u - v;
          w *= wl;
        }
      }
    }
    return;
  }
  // direct O(n^2) for small non-power-of-two sides
  std::vector<std::complex<double>> out(n);
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (int x = 0; x < n; ++x) {
      const double ang = (inverse ? 2.0 : -2.0) * M_PI * k * x / n;
      acc += buf[x] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), buf);
}

// In-place n-dimensional DFT; inverse includes the 1/V factor.
void dft_nd(const Torus& geom, std::vector<std::complex<double>>& a, bool inverse) {
  const int d = geom.dim();
  const std::int64_t S = geom.side(), V = geom.volume();
  std::vector<std::complex<double>> line(S);
  for (int axis = 0; axis < d; ++axis) {
    std::int64_t stride = 1;
    for (int i = d - 1; i > axis; --i) stride *= S;
    const std::int64_t blocks = V / S;
    for (std::int64_t b = 0; b < blocks; ++b) {
      // base index of the b-th line along `axis`
      const std::int64_t outer = b / stride, inner = b % stride;
      const std::int64_t base = outer * stride * S + inner;
      for (std::int64_t i = 0; i < S; ++i) line[i] = a[base + i * stride];
      dft_line(line.data(), static_cast<int>(S), inverse);
      for (std::int64_t i = 0; i < S; ++i) a[base + i * stride] = line[i];
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(V);
    for (auto& v : a) v *= inv;
  }
}

double torus_mode_lambda(const Torus& geom, std::int64_t idx) {
  double lam = 0.0;
  const auto k = geom.coords(idx);
  for (int a = 0; a < geom.dim(); ++a) {
    lam += 2.0 * (1.0 - std::cos(2.0 * M_PI * k[a] / geom.side()));
  }
  return lam;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gaussian sampler.

GaussianSampler::GaussianSampler(const Torus& geom, std::vector<double> symbol,
                                 std::uint64_t seed)
    : geom_(geom), rng_(seed), modes_(geom.volume()) {
  const std::int64_t V = geom.volume();
  if (static_cast<std::int64_t>(symbol.size()) != V) {
    throw Error("GaussianSampler: symbol size mismatch");
  }
  amp_.resize(V);
  conj_index_.resize(V);
  for (std::int64_t k = 0; k < V; ++k) {
    double s = symbol[k];
    if (s < 0.0) {
      if (s < -1e-12) throw Error("GaussianSampler: negative symbol (invalid covariance)");
      s = 0.0;
    }
    amp_[k] = std::sqrt(static_cast<double>(V) * s);
    auto c = geom.coords(k);
    for (auto& v : c) v = v == 0 ? 0 : geom.side() - v;
    conj_index_[k] = geom.index(c);
  }
}

std::vector<double> GaussianSampler::inverse_laplacian_symbol(const Torus& geom) {
  std::vector<double> s(geom.volume());
  for (std::int64_t k = 0; k < geom.volume(); ++k) {
    const double lam = torus_mode_lambda(geom, k);
    s[k] = k == 0 ? 0.0 : 1.0 / lam;
  }
  return s;
}

std::vector<double> GaussianSampler::frd_partial_symbol(const Torus& geom,
                                                        const RangeDecomposition& rd) {
  if (geom.dim() != rd.d) throw Error("frd_partial_symbol: dimension mismatch");
  std::vector<double> s(geom.volume());
  for (std::int64_t k = 0; k < geom.volume(); ++k) {
    s[k] = k == 0 ? 0.0 : rd.partial_sum_symbol(torus_mode_lambda(geom, k));
  }
  return s;
}

std::vector<double> GaussianSampler::kernel_symbol(const Torus& geom, const Kernel& k) {
  if (geom.dim() != k.dim()) throw Error("kernel_symbol: dimension mismatch");
  if (2 * k.radius() + 1 > geom.side() && !k.finite_range) {
    throw Error("kernel_symbol: table wider than torus");
  }
  std::vector<double> s(geom.volume(), 0.0);
  const int d = geom.dim();
  for (std::int64_t m = 0; m < geom.volume(); ++m) {
    const auto kk = geom.coords(m);
    double acc = 0.0;
    k.for_each_site([&](const std::vector<int>& x, double v) {
      if (v == 0.0) return;
      double phase = 0.0;
      for (int a = 0; a < d; ++a) {
        phase += 2.0 * M_PI * kk[a] * x[a] / geom.side();
      }
      acc += v * std::cos(phase);
    });
    s[m] = std::max(acc, 0.0);
    if (acc < -1e-10) throw Error("kernel_symbol: negative symbol");
  }
  // zero mode pinned: gradient observables are unaffected
  s[0] = 0.0;
  return s;
}

Field GaussianSampler::next() {
  const std::int64_t V = geom_.volume();
  for (std::int64_t k = 0; k < V; ++k) {
    const std::int64_t c = conj_index_[k];
    if (k < c) {
      const double a = rng_.normal(), b = rng_.normal();
      modes_[k] = std::complex<double>(a, b) * (amp_[k] * M_SQRT1_2);
      modes_[c] = std::complex<double>(a, -b) * (amp_[k] * M_SQRT1_2);
    } else if (k == c) {
      modes_[k] = amp_[k] * rng_.normal();
    }
  }
  std::vector<std::complex<double>> buf = modes_;
  dft_nd(geom_, buf, true);
  Field out(geom_);
  for (std::int64_t x = 0; x < V; ++x) out.v[x] = buf[x].real();
  return out;
}

// ---------------------------------------------------------------------------
// Partition functions.

namespace {

// quadratic forms q_ab = d_a^{(1)} d_b^{(2)} C(dx) for a kernel table
std::vector<double> pair_matrix(const Kernel& c, const std::vector<int>& dx) {
  const int d = c.dim();
  std::vector<double> m(static_cast<std::size_t>(d) * d);
  std::vector<int> v(d);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      v = dx;
      v[a] += 1;
      v[b] -= 1;
      double s = c.value_or_zero(v);
      v = dx;
      v[a] += 1;
      s -= c.value_or_zero(v);
      v = dx;
      v[b] -= 1;
      s -= c.value_or_zero(v);
      s += c.value_or_zero(dx);
      m[static_cast<std::size_t>(a) * d + b] = s;
    }
  }
  return m;
}

double quad_form(const std::vector<double>& m, const std::vector<double>& p,
                 const std::vector<double>& q, int d) {
  double acc = 0.0;
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) acc += p[a] * m[static_cast<std::size_t>(a) * d + b] * q[b];
  }
  return acc;
}

}  // namespace

GrandResult grand_partition_truncated(int d, int box_side, double z, int n_max,
                                      const Kernel& c, int sphere_order,
                                      double op_budget) {
  if (n_max < 0 || n_max > 4) throw Error("grand_partition_truncated: n_max <= 4");
  if (c.dim() != d) throw Error("grand_partition_truncated: kernel dimension");
  const SphereRule rule = sphere_rule(d, sphere_order);
  const std::size_t nq = rule.points.size();
  const double sites = std::pow(static_cast<double>(box_side), d);

  GrandResult out;
  out.value = 1.0;
  if (n_max == 0 || z == 0.0) return out;

  const std::vector<double> m0 = pair_matrix(c, std::vector<int>(d, 0));

  // n = 1: sites * int dp exp(-1/2 (p.d)(p.d)C(0))
  double g1 = 0.0;
  for (std::size_t i = 0; i < nq; ++i) {
    g1 += rule.weights[i] * std::exp(-0.5 * quad_form(m0, rule.points[i], rule.points[i], d));
  }
  g1 *= sites;
  out.value += z * g1;
  out.last_term = std::abs(z * g1);
  if (n_max == 1) return out;

  // n = 2: (1/2) sum over ordered site pairs, grouped by displacement
  {
    const double ops = std::pow(2.0 * box_side - 1.0, d) * nq * nq;
    if (ops > op_budget) {
      throw BudgetExceededError("grand_partition_truncated: n=2 over budget",
                                static_cast<std::uint64_t>(ops));
    }
  }
  std::vector<double> self(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    self[i] = quad_form(m0, rule.points[i], rule.points[i], d);
  }
  double g2 = 0.0;
  std::vector<int> dx(d, -(box_side - 1));
  while (true) {
    double count = 1.0;
    for (int a = 0; a < d; ++a) count *= box_side - std::abs(dx[a]);
    if (count > 0) {
      const std::vector<double> m = pair_matrix(c, dx);
      double acc = 0.0;
      for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t j = 0; j < nq; ++j) {
          acc += rule.weights[i] * rule.weights[j] *
                 std::exp(-0.5 * (self[i] + self[j]) -
                          quad_form(m, rule.points[i], rule.points[j], d));
        }
      }
      g2 += count * acc;
    }
    int axis = d - 1;
    while (axis >= 0 && dx[axis] == box_side - 1) dx[axis--] = -(box_side - 1);
    if (axis < 0) break;
    ++dx[axis];
  }
  g2 *= 0.5;
  out.value += z * z * g2;
  out.last_term = std::abs(z * z * g2);
  if (n_max == 2) return out;

  throw BudgetExceededError("grand_partition_truncated: n_max >= 3 exceeds the op budget",
                            0);
}

KacSiegertResult kac_siegert_check(int d, int side, int n, int sphere_order) {
  if (n < 0 || n > 2) throw Error("kac_siegert_check: n <= 2");
  const Torus geom(d, side);
  const std::int64_t V = geom.volume();

  // exact torus covariance table (zero mode dropped; only gradients matter)
  Kernel ct(d, side - 1 > 2 ? side - 1 : 2);
  {
    std::vector<double> lam(V);
    for (std::int64_t k = 0; k < V; ++k) lam[k] = torus_mode_lambda(geom, k);
    std::vector<int> x(d, -ct.radius());
    while (true) {
      double acc = 0.0;
      for (std::int64_t k = 1; k < V; ++k) {
        const auto kk = geom.coords(k);
        double phase = 0.0;
        for (int a = 0; a < d; ++a) phase += 2.0 * M_PI * kk[a] * x[a] / side;
        acc += std::cos(phase) / lam[k];
      }
      ct.ref(x) = acc / static_cast<double>(V);
      int axis = d - 1;
      while (axis >= 0 && x[axis] == ct.radius()) x[axis--] = -ct.radius();
      if (axis < 0) break;
      ++x[axis];
    }
    ct.finite_range = false;
  }

  const SphereRule rule = sphere_rule(d, sphere_order);
  const std::size_t nq = rule.points.size();
  const std::vector<double> m0 = pair_matrix(ct, std::vector<int>(d, 0));
  std::vector<double> self(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    self[i] = quad_form(m0, rule.points[i], rule.points[i], d);
  }

  KacSiegertResult out;
  if (n == 0) {
    out.grand_route = out.field_route = 1.0;
    return out;
  }
  if (n == 1) {
    // grand: sum_x int dp exp(-1/2 (p d)(p d)C(0));  field: E[W] by Wick
    double g = 0.0;
    for (std::size_t i = 0; i < nq; ++i) g += rule.weights[i] * std::exp(-0.5 * self[i]);
    out.grand_route = static_cast<double>(V) * g;
    double f = 0.0;
    for (std::size_t i = 0; i < nq; ++i) {
      const double var = quad_form(m0, rule.points[i], rule.points[i], d);
      f += rule.weights[i] * std::exp(-0.5 * var);
    }
    out.field_route = static_cast<double>(V) * f;
  } else {
    // displacements on the torus: all ordered pairs give V per displacement
    double g = 0.0, f = 0.0;
    std::vector<int> dx(d, 0);
    std::vector<std::int64_t> xv(d);
    for (std::int64_t r = 0; r < V; ++r) {
      const auto xr = geom.coords(r);
      for (int a = 0; a < d; ++a) {
        // displacements folded to the symmetric window
        std::int64_t v = xr[a];
        if (2 * v > side) v -= side;
        dx[a] = static_cast<int>(v);
      }
      const std::vector<double> m = pair_matrix(ct, dx);
      for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t j = 0; j < nq; ++j) {
          const double cross = quad_form(m, rule.points[i], rule.points[j], d);
          const double w = rule.weights[i] * rule.weights[j];
          // grand-canonical integrand for the pair
          g += w * std::exp(-0.5 * (self[i] + self[j]) - cross);
          // Wick on cosines: E[cos A cos B]
          f += w * 0.5 *
               (std::exp(-0.5 * (self[i] + self[j] + 2.0 * cross)) +
                std::exp(-0.5 * (self[i] + self[j] - 2.0 * cross)));
        }
      }
    }
    out.grand_route = 0.5 * static_cast<double>(V) * g;
    out.field_route = 0.5 * static_cast<double>(V) * f;
  }
  out.rel_diff = std::abs(out.grand_route - out.field_route) /
                 std::max({std::abs(out.grand_route), std::abs(out.field_route), 1e-300});
  return out;
}

double quadratic_partition_exact(std::int64_t volume, double sigma) {
  if (sigma <= -1.0) throw Error("quadratic_partition_exact: sigma must exceed -1");
  const double v = static_cast<double>(volume);
  return -0.5 * std::log1p(sigma) * (v - 1.0) / v;
}

MCEstimate quadratic_partition_mc(const Torus& geom, double sigma, std::uint64_t seed,
                                  long samples, int chains) {
  if (sigma <= -1.0) throw Error("quadratic_partition_mc: sigma must exceed -1");
  const auto symbol = GaussianSampler::inverse_laplacian_symbol(geom);
  const long per_chain = std::max<long>(1, samples / chains);
  std::vector<double> est(chains);
  double wsum = 0.0, w2sum = 0.0;
  for (int c = 0; c < chains; ++c) {
    GaussianSampler sampler(geom, symbol, Rng::derive(seed, c));
    double acc = 0.0;
    for (long i = 0; i < per_chain; ++i) {
      const Field phi = sampler.next();
      const double w = std::exp(-sigma * quadratic_energy(phi));
      acc += w;
      wsum += w;
      w2sum += w * w;
    }
    est[c] = std::log(acc / per_chain) / static_cast<double>(geom.volume());
  }
  MCEstimate out;
  out.samples = per_chain * chains;
  out.seed = seed;
  double mean = 0.0;
  for (const double e : est) mean += e;
  mean /= chains;
  double var = 0.0;
  for (const double e : est) var += (e - mean) * (e - mean);
  var /= std::max(1, chains - 1);
  out.mean = mean;
  out.std_error = std::sqrt(var / chains);
  out.ess_fraction = wsum * wsum / (w2sum * out.samples);
  out.status = out.ess_fraction < 0.01 ? RunStatus::unreliable : RunStatus::ok;
  return out;
}

// ---------------------------------------------------------------------------
// Truncated correlations.

namespace {

struct ChainCumulant {
  std::complex<double> value;
  double weight_sum = 0.0;
  double weight_sq_sum = 0.0;
};

using Cplx = std::complex<double>;

// weighted joint cumulant of observables (m <= 4) from one chain's samples
Cplx weighted_cumulant(const std::vector<std::vector<Cplx>>& obs,
                       const std::vector<double>& w) {
  const std::size_t m = obs.size(), n = w.size();
  double wsum = 0.0;
  for (const double x : w) wsum += x;
  std::vector<Cplx> mean(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    Cplx acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * obs[k][i];
    mean[k] = acc / wsum;
  }
  auto central = [&](std::initializer_list<std::size_t> which) {
    Cplx acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Cplx prod = w[i];
      for (const auto k : which) prod *= obs[k][i] - mean[k];
      acc += prod;
    }
    return acc / wsum;
  };
  switch (m) {
    case 2:
      return central({0, 1});
    case 3:
      return central({0, 1, 2});
    case 4:
      return central({0, 1, 2, 3}) - central({0, 1}) * central({2, 3}) -
             central({0, 2}) * central({1, 3}) - central({0, 3}) * central({1, 2});
    default:
      throw Error("weighted_cumulant: m must be 2..4");
  }
}

}  // namespace

CumulantResult mc_truncated_correlation(const CorrelationRequest& req) {
  req.field.validate(req.d);
  const int m = req.field.m();
  if (m < 2 || m > 4) throw Error("mc_truncated_correlation: m must be 2..4");
  const Torus geom(req.d, req.side);
  const auto symbol = GaussianSampler::inverse_laplacian_symbol(geom);
  const double u = std::sqrt(1.0 + req.sigma);
  const long per_chain = std::max<long>(1, req.samples / req.chains);

  std::vector<std::int64_t> obs_site(m);
  for (int k = 0; k < m; ++k) {
    if (req.field.variant != FieldVariant::general) {
      obs_site[k] = geom.index(req.field.points[k]);
    }
  }

  std::vector<Cplx> chain_vals(req.chains);
  double wsum_all = 0.0, w2sum_all = 0.0;
  for (int c = 0; c < req.chains; ++c) {
    GaussianSampler sampler(geom, symbol, Rng::derive(req.seed, c));
    std::vector<std::vector<Cplx>> obs(m, std::vector<Cplx>(per_chain));
    std::vector<double> logw(per_chain);
    for (long i = 0; i < per_chain; ++i) {
      const Field phi = sampler.next();
      double lw = 0.0;
      if (req.z != 0.0) lw += req.z * w_total(phi, u);
      if (req.sigma != 0.0) lw -= req.sigma * quadratic_energy(phi);
      logw[i] = lw;
      for (int k = 0; k < m; ++k) {
        switch (req.field.variant) {
          case FieldVariant::gradient_linear:
            obs[k][i] = derivative(phi, req.field.dirs[k], obs_site[k]);
            break;
          case FieldVariant::gradient_exponential: {
            const double g = derivative(phi, req.field.dirs[k], obs_site[k]);
            obs[k][i] = Cplx(std::cos(g), std::sin(g));
            break;
          }
          case FieldVariant::general:
            obs[k][i] = req.field.general[k].eval(phi);
            break;
          default:
            throw Error("mc_truncated_correlation: field variant required");
        }
      }
    }
    // stabilize the weights within the chain (ratio estimators are invariant)
    double lmax = logw.empty() ? 0.0 : *std::max_element(logw.begin(), logw.end());
    std::vector<double> w(per_chain);
    for (long i = 0; i < per_chain; ++i) {
      w[i] = std::exp(logw[i] - lmax);
      wsum_all += w[i];
      w2sum_all += w[i] * w[i];
    }
    chain_vals[c] = weighted_cumulant(obs, w);
  }

  CumulantResult out;
  out.samples = per_chain * req.chains;
  out.seed = req.seed;
  Cplx mean = 0.0;
  for (const auto& v : chain_vals) mean += v;
  mean /= static_cast<double>(req.chains);
  double var = 0.0;
  for (const auto& v : chain_vals) var += std::norm(v - mean);
  var /= std::max(1, req.chains - 1);
  out.value = mean;
  out.std_error = std::sqrt(var / req.chains);
  out.ess_fraction = wsum_all * wsum_all / (w2sum_all * out.samples);
  out.status =
      out.ess_fraction < req.min_ess_fraction ? RunStatus::unreliable : RunStatus::ok;
  return out;
}

CumulantResult mc_truncated_correlation_tdiff(const CorrelationRequest& req) {
  req.field.validate(req.d);
  if (req.field.variant != FieldVariant::gradient_linear || req.field.m() != 2) {
    throw Error("tdiff cross-check supports m = 2 gradient-linear only");
  }
  const Torus geom(req.d, req.side);
  const auto symbol = GaussianSampler::inverse_laplacian_symbol(geom);
  const double u = std::sqrt(1.0 + req.sigma);
  const long per_chain = std::max<long>(1, req.samples / req.chains);
  const std::int64_t s0 = geom.index(req.field.points[0]);
  const std::int64_t s1 = geom.index(req.field.points[1]);

  // mixed d^2/dt1 dt2 log E[w e^{i(t1 O1 + t2 O2)}] by central differences at
  // h and h/2, Richardson-combined; G^t = i^2 (that)
  auto estimate_at = [&](double h) {
    Cplx zpp = 0.0, zpm = 0.0, zmp = 0.0, zmm = 0.0;
    double wn = 0.0;
    for (int c = 0; c < req.chains; ++c) {
      GaussianSampler sampler(geom, symbol, Rng::derive(req.seed, c));
      for (long i = 0; i < per_chain; ++i) {
        const Field phi = sampler.next();
        double lw = 0.0;
        if (req.z != 0.0) lw += req.z * w_total(phi, u);
        if (req.sigma != 0.0) lw -= req.sigma * quadratic_energy(phi);
        const double w = std::exp(lw);
        const double o1 = derivative(phi, req.field.dirs[0], s0);
        const double o2 = derivative(phi, req.field.dirs[1], s1);
        const auto ph = [&](double t1, double t2) {
          const double a = t1 * o1 + t2 * o2;
          return Cplx(std::cos(a), std::sin(a)) * w;
        };
        zpp += ph(h, h);
        zpm += ph(h, -h);
        zmp += ph(-h, h);
        zmm += ph(-h, -h);
        wn += w;
      }
    }
    const Cplx val =
        (std::log(zpp / wn) - std::log(zpm / wn) - std::log(zmp / wn) + std::log(zmm / wn)) /
        (4.0 * h * h);
    return -val;  // i^2 factor
  };

  const double a = req.field.t_radius;
  const Cplx coarse = estimate_at(a / 4.0);
  const Cplx fine = estimate_at(a / 8.0);
  CumulantResult out;
  out.value = (4.0 * fine - coarse) / 3.0;
  out.std_error = std::abs(fine - coarse) / 3.0;  // Richardson remainder proxy
  out.samples = per_chain * req.chains;
  out.seed = req.seed;
  return out;
}

double decay_eta(int d) { return std::min(0.5 * d, 2.0); }

DecayFitResult decay_exponent_fit(const CorrelationRequest& base, int direction,
                                  const std::vector<std::int64_t>& separations) {
  if (separations.size() < 2) throw Error("decay_exponent_fit: need >= 2 separations");
  {
    std::int64_t smin = separations.front(), smax = separations.front();
    for (const auto s : separations) {
      smin = std::min(smin, s);
      smax = std::max(smax, s);
    }
    if (smax < 4 * smin) throw Error("decay_exponent_fit: separations must span 4x");
  }
  check_direction(base.d, direction);
  const Torus geom(base.d, base.side);
  const auto symbol = GaussianSampler::inverse_laplacian_symbol(geom);
  const double u = std::sqrt(1.0 + base.sigma);
  const long per_chain = std::max<long>(1, base.samples / base.chains);
  const std::size_t ns = separations.size();

  const std::int64_t origin = 0;
  std::vector<std::int64_t> sep_site(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    std::vector<std::int64_t> x(base.d, 0);
    x[std::abs(direction) - 1] = separations[i];
    sep_site[i] = geom.index(x);
  }

  std::vector<std::vector<Cplx>> chain_vals(ns, std::vector<Cplx>(base.chains));
  for (int c = 0; c < base.chains; ++c) {
    GaussianSampler sampler(geom, symbol, Rng::derive(base.seed, c));
    std::vector<double> w(per_chain);
    std::vector<std::vector<Cplx>> o0(1, std::vector<Cplx>(per_chain));
    std::vector<std::vector<Cplx>> osep(ns, std::vector<Cplx>(per_chain));
    std::vector<double> logw(per_chain);
    for (long i = 0; i < per_chain; ++i) {
      const Field phi = sampler.next();
      double lw = 0.0;
      if (base.z != 0.0) lw += base.z * w_total(phi, u);
      if (base.sigma != 0.0) lw -= base.sigma * quadratic_energy(phi);
      logw[i] = lw;
      o0[0][i] = derivative(phi, direction, origin);
      for (std::size_t s = 0; s < ns; ++s) {
        osep[s][i] = derivative(phi, direction, sep_site[s]);
      }
    }
    const double lmax = *std::max_element(logw.begin(), logw.end());
    for (long i = 0; i < per_chain; ++i) w[i] = std::exp(logw[i] - lmax);
    for (std::size_t s = 0; s < ns; ++s) {
      std::vector<std::vector<Cplx>> obs{o0[0], osep[s]};
      chain_vals[s][c] = weighted_cumulant(obs, w);
    }
  }

  DecayFitResult out;
  out.eta = decay_eta(base.d);
  std::vector<double> lx, ly, lsig;
  for (std::size_t s = 0; s < ns; ++s) {
    Cplx mean = 0.0;
    for (const auto& v : chain_vals[s]) mean += v;
    mean /= static_cast<double>(base.chains);
    double var = 0.0;
    for (const auto& v : chain_vals[s]) var += std::norm(v - mean);
    var /= std::max(1, base.chains - 1);
    DecayFitPoint pt;
    pt.separation = separations[s];
    pt.value = mean.real();
    pt.std_error = std::sqrt(var / base.chains);
    out.points.push_back(pt);
    if (std::abs(pt.value) < 3.0 * pt.std_error) {
      out.status = RunStatus::unreliable;
    }
    if (std::abs(pt.value) > 0.0) {
      lx.push_back(std::log(static_cast<double>(separations[s])));
      ly.push_back(std::log(std::abs(pt.value)));
      lsig.push_back(pt.std_error / std::abs(pt.value));
    }
  }
  if (lx.size() < 2) {
    out.status = RunStatus::unreliable;
    return out;
  }
  // weighted least squares in log space
  double sw = 0.0, swx = 0.0, swy = 0.0, swxx = 0.0, swxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double wgt = 1.0 / std::max(lsig[i] * lsig[i], 1e-12);
    sw += wgt;
    swx += wgt * lx[i];
    swy += wgt * ly[i];
    swxx += wgt * lx[i] * lx[i];
    swxy += wgt * lx[i] * ly[i];
  }
  const double det = sw * swxx - swx * swx;
  const double slope = (sw * swxy - swx * swy) / det;
  out.exponent = -slope;
  out.fit_std_error = std::sqrt(sw / det);
  return out;
}

}  // namespace dipolerg
