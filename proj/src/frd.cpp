#include "dipolerg/frd.hpp"

#include <algorithm>
#include <cmath>

#include "dipolerg/lattice.hpp"

namespace dipolerg {

namespace {

std::int64_t ipow(std::int64_t base, int e) {
  std::int64_t v = 1;
  for (int i = 0; i < e; ++i) v *= base;
  return v;
}

double cutoff_d(const ScaleCutoff& c, double band, double lambda) {
  const double w = (band + c.lambda_c - 2.0 * lambda) / (band - c.lambda_c);
  const double w0 = (band + c.lambda_c) / (band - c.lambda_c);
  const double r = cheb_t(c.cheb_order, w) / cheb_t(c.cheb_order, w0);
  return r * r;
}

}  // namespace

double RangeDecomposition::cutoff_factor(int i, double lambda) const {
  return cutoff_d(cutoffs.at(i - 1), band, lambda);
}

double RangeDecomposition::suppression(int upto_j, double lambda) const {
  double e = 1.0;
  for (int i = 1; i <= upto_j; ++i) e *= cutoff_factor(i, lambda);
  return e;
}

double RangeDecomposition::gamma_symbol(int j, double lambda) const {
  const double floor_l = band * 1e-9;
  if (lambda < floor_l) lambda = floor_l;
  return suppression(j - 1, lambda) * (1.0 - cutoff_factor(j, lambda)) / lambda;
}

double RangeDecomposition::partial_sum_symbol(double lambda) const {
  const double floor_l = band * 1e-9;
  if (lambda < floor_l) lambda = floor_l;
  return (1.0 - suppression(J, lambda)) / lambda;
}

double RangeDecomposition::tail_symbol(double lambda) const {
  if (lambda <= 0.0) throw Error("tail_symbol: diverges at lambda = 0");
  return suppression(J, lambda) / lambda;
}

Kernel RangeDecomposition::gamma_values(int j, int radius, int threads) const {
  if (j < 1 || j > J) throw Error("gamma_values: scale out of range");
  const Kernel& g = gammas[j - 1];
  if (g.dim() > 0) {
    Kernel out(d, radius);
    std::vector<int> x(d, -radius);
    while (true) {
      out.ref(x) = g.value_or_zero(x);
      int axis = d - 1;
      while (axis >= 0 && x[axis] == radius) x[axis--] = -radius;
      if (axis < 0) break;
      ++x[axis];
    }
    out.finite_range = true;
    out.range = g.range;
    return out;
  }
  // spectral route: multiplier E_{j-1} (1 - D_j) vanishes at lambda = 0, so
  // the integrand is bounded and no corner term is needed
  Kernel out = build_symbol_table(
      d, radius,
      [&](double lam) {
        return suppression(j - 1, lam) * (1.0 - cutoff_factor(j, lam));
      },
      0.0, 12, 10, threads);
  out.finite_range = true;
  out.range = 0.5 * std::pow(static_cast<double>(L), j);
  return out;
}

Kernel RangeDecomposition::tail_from(int k) const {
  if (k < 0 || k > J) throw Error("tail_from: scale out of range");
  Kernel out = tail;
  for (int j = k + 1; j <= J; ++j) {
    const Kernel g = gamma_values(j, out.radius(), 1);
    std::vector<int> x(d, -out.radius());
    while (true) {
      out.ref(x) += g.value_or_zero(x);
      int axis = d - 1;
      while (axis >= 0 && x[axis] == out.radius()) x[axis--] = -out.radius();
      if (axis < 0) break;
      ++x[axis];
    }
  }
  out.finite_range = false;
  out.range = std::numeric_limits<double>::infinity();
  return out;
}

namespace {

// P(-Lap) delta_0 by Clenshaw in the operator X = (2(-Lap) - b)/b, restricted
// to the growing support of the recurrence (entries beyond stay exactly 0).
Kernel clenshaw_table(int d, const ChebSeries& series, int pad) {
  const int deg = static_cast<int>(series.coeff.size()) - 1;
  const int radius = deg + pad;
  Kernel out(d, radius);

  const std::int64_t cube = static_cast<std::int64_t>(out.data().size());
  std::vector<double> b1(cube, 0.0), b2(cube, 0.0), tmp(cube, 0.0);
  const double band = series.hi;

  const std::int64_t side = 2 * static_cast<std::int64_t>(radius) + 1;
  std::vector<std::int64_t> strides(d);
  {
    std::int64_t s = 1;
    for (int i = d - 1; i >= 0; --i) {
      strides[i] = s;
      s *= side;
    }
  }
  const std::int64_t center = out.offset(std::vector<int>(d, 0));

  // y = (2/band) (-Lap x) - x over the box |coord| <= r (reads treat outside
  // as zero, valid while the true support stays inside the box)
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y, int r) {
    std::vector<int> c(d, -r);
    while (true) {
      std::int64_t idx = center;
      for (int i = 0; i < d; ++i) idx += c[i] * strides[i];
      double acc = 2.0 * d * x[idx];
      for (int a = 0; a < d; ++a) {
        if (c[a] + 1 <= radius) acc -= x[idx + strides[a]];
        if (c[a] - 1 >= -radius) acc -= x[idx - strides[a]];
      }
      y[idx] = (2.0 / band) * acc - x[idx];
      int axis = d - 1;
      while (axis >= 0 && c[axis] == r) c[axis--] = -r;
      if (axis < 0) break;
      ++c[axis];
    }
  };

  // b_k = c_k delta + 2 X b_{k+1} - b_{k+2}; support of b_k is <= deg - k.
  for (int k = deg; k >= 1; --k) {
    const int r = std::min(deg - k + 1, radius);
    apply(b1, tmp, r);
    std::vector<int> c(d, -r);
    while (true) {
      std::int64_t idx = center;
      for (int i = 0; i < d; ++i) idx += c[i] * strides[i];
      const double b0 = 2.0 * tmp[idx] - b2[idx];
      b2[idx] = b1[idx];
      b1[idx] = b0;
      int axis = d - 1;
      while (axis >= 0 && c[axis] == r) c[axis--] = -r;
      if (axis < 0) break;
      ++c[axis];
    }
    b1[center] += series.coeff[k];
  }
  // f(X) delta = c0 delta + X b_1 - b_2
  apply(b1, tmp, radius);
  for (std::int64_t i = 0; i < cube; ++i) out.data()[i] = tmp[i] - b2[i];
  out.data()[center] += series.coeff[0];
  return out;
}

}  // namespace

RangeDecomposition build_decomposition(int d, int L, int J, const FrdOptions& opts) {
  if (d < 3) throw UnsupportedDimensionError("build_decomposition: d >= 3 required");
  if (L < 3 || L % 2 == 0) throw Error("build_decomposition: L must be odd >= 3");
  if (J < 1) throw Error("build_decomposition: J >= 1");

  RangeDecomposition rd;
  rd.d = d;
  rd.L = L;
  rd.J = J;
  rd.band = 4.0 * d;

  std::int64_t m_prev = 0;
  int degree_budget = 0;
  for (int j = 1; j <= J; ++j) {
    const std::int64_t m_j = (ipow(L, j) + 1) / 2;
    const std::int64_t delta = m_j - m_prev;
    ScaleCutoff c;
    c.cheb_order = static_cast<int>(std::max<std::int64_t>(1, delta / 2));
    const double lc = rd.band * std::pow(opts.kappa / c.cheb_order, 2.0);
    c.lambda_c = std::min(lc, rd.band * opts.lambda_cap_frac);
    rd.cutoffs.push_back(c);
    degree_budget += 2 * c.cheb_order;
    if (degree_budget > m_j) {
      throw Error("build_decomposition: degree budget overflow at scale " +
                  std::to_string(j));
    }
    m_prev = m_j;
  }

  rd.min_symbol = 0.0;
  int deg_sum = 0;
  for (int j = 1; j <= J; ++j) {
    deg_sum += 2 * rd.cutoffs[j - 1].cheb_order;
    const int deg_j = deg_sum - 1;
    const double cube_cells = std::pow(2.0 * (deg_j + 2) + 1.0, d);
    if (cube_cells > opts.max_table_cells) {
      rd.gammas.emplace_back();  // untabulated scale; gamma_values() is spectral
      continue;
    }
    ChebSeries series = cheb_interpolate(
        [&](double lam) { return rd.gamma_symbol(j, lam); }, 0.0, rd.band, deg_j + 1);
    Kernel g = clenshaw_table(d, series, 2);
    g.finite_range = true;
    g.range = 0.5 * std::pow(static_cast<double>(L), j);

    // exact finite-range audit: entries with |x|_1 > deg_j must be 0.0
    std::vector<int> x(d, -g.radius());
    while (true) {
      int l1 = 0;
      for (int a = 0; a < d; ++a) l1 += std::abs(x[a]);
      if (l1 > deg_j && g.at(x) != 0.0) {
        throw Error("build_decomposition: finite-range violation at scale " +
                    std::to_string(j));
      }
      int axis = d - 1;
      while (axis >= 0 && x[axis] == g.radius()) x[axis--] = -g.radius();
      if (axis < 0) break;
      ++x[axis];
    }

    // PSD sample: the series *is* the table's symbol
    for (int i = 0; i <= 2000; ++i) {
      const double lam = rd.band * i / 2000.0;
      rd.min_symbol = std::min(rd.min_symbol, series.eval(lam));
    }
    rd.gammas.push_back(std::move(g));
  }
  if (rd.min_symbol < -1e-10) {
    throw Error("build_decomposition: symbol positivity violated");
  }

  rd.tail = build_symbol_table(
      d, opts.tail_radius, [&](double lam) { return rd.suppression(J, lam); }, 1.0, 12,
      10, opts.threads);

  // relative symbol residual on the reference torus spectrum
  const double lam_min = 2.0 * (1.0 - std::cos(2.0 * M_PI / opts.residual_ref_side));
  double res = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double lam =
        lam_min * std::pow(rd.band / lam_min, static_cast<double>(i) / 4000.0);
    res = std::max(res, rd.suppression(J, lam));
  }
  rd.symbol_residual = res;
  rd.status = res > opts.symbol_tol ? RunStatus::warning : RunStatus::ok;
  return rd;
}

DecayReport verify_decay(const RangeDecomposition& rd, const std::vector<int>& alpha,
                         double flag_factor) {
  DecayReport rep;
  double cmin = std::numeric_limits<double>::infinity(), cmax = 0.0;
  for (int j = 1; j <= rd.J; ++j) {
    // untabulated scales get a spectral window (covers the peak near 0)
    const Kernel g = rd.has_table(j) ? rd.gammas[j - 1] : rd.gamma_values(j, 16);
    const Kernel dk = kernel_derivative(g, alpha);
    double sup = 0.0;
    dk.for_each_site([&](const std::vector<int>&, double v) {
      sup = std::max(sup, std::abs(v));
    });
    const double scale = std::pow(static_cast<double>(rd.L),
                                  -(j - 1.0) * (rd.d - 2.0 + static_cast<double>(alpha.size())));
    ScaleDecay sd;
    sd.j = j;
    sd.constant = sup / scale;
    const DecayFit fit = decay_fit(g, alpha, dk.radius());
    sd.exponent = fit.exponent;
    rep.scales.push_back(sd);
    if (sd.constant > 0) {
      cmin = std::min(cmin, sd.constant);
      cmax = std::max(cmax, sd.constant);
    }
  }
  rep.spread = cmin > 0 && cmax > 0 ? cmax / cmin : std::numeric_limits<double>::infinity();
  rep.uniform = rep.spread <= flag_factor;
  return rep;
}

double trace_term(const Kernel& gamma, int L, int j, double sigma) {
  const int d = gamma.dim();
  double diag = 0.0;
  std::vector<int> e(d, 0);
  const double g0 = gamma.value_or_zero(e);
  for (int a = 0; a < d; ++a) {
    e[a] = 1;
    // both signed directions contribute equally for a symmetric kernel
    diag += 2.0 * 2.0 * (g0 - gamma.value_or_zero(e));
    e[a] = 0;
  }
  const double block = std::pow(static_cast<double>(L), static_cast<double>(d) * j);
  return 0.25 * sigma * block * diag;
}

double gradient_covariance(const Kernel& gamma, int mu, int nu) {
  return gradient_covariance_at(gamma, mu, nu, std::vector<int>(gamma.dim(), 0));
}

double gradient_covariance_at(const Kernel& gamma, int mu, int nu,
                              const std::vector<int>& dx) {
  const int d = gamma.dim();
  check_direction(d, mu);
  check_direction(d, nu);
  const int amu = std::abs(mu) - 1, smu = mu > 0 ? 1 : -1;
  const int anu = std::abs(nu) - 1, snu = nu > 0 ? 1 : -1;
  std::vector<int> v = dx;
  v[amu] += smu;
  v[anu] -= snu;
  const double t1 = gamma.value_or_zero(v);  // Gamma(dx + e_mu - e_nu)
  v = dx;
  v[amu] += smu;
  const double t2 = gamma.value_or_zero(v);  // Gamma(dx + e_mu)
  v = dx;
  v[anu] -= snu;
  const double t3 = gamma.value_or_zero(v);  // Gamma(dx - e_nu)
  return t1 - t2 - t3 + gamma.value_or_zero(dx);
}

}  // namespace dipolerg
