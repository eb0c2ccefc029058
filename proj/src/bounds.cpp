#include "dipolerg/bounds.hpp"

#include <cmath>
#include <limits>

namespace dipolerg {

void LedgerInput::validate() const {
  if (d < 1) throw Error("ledger: d >= 1");
  if (L < 3 || L % 2 == 0) throw Error("ledger: L must be odd >= 3");
  if (A <= 2.0) throw Error("ledger: A > 2 required");
  if (q < 1.0) throw Error("ledger: q >= 1");
  if (r <= 0.0 || r >= 1.0) throw Error("ledger: 0 < r < 1");
  if (h <= 0.0) throw Error("ledger: h > 0");
  if (m < 0) throw Error("ledger: m >= 0");
}

namespace {

// Analytic over-estimate of sup_U A^{|U|} sum_{X not small, Xbar = U}
// (A/2)^{-|X|}: anchored connected-set counts are bounded by
// u L^d (e k)^{s-1} with k the block-adjacency degree, and the geometric
// tail sums when 2 e k < A.
double l1_bracket(const LedgerInput& in) {
  const int d = in.d;
  const double k = in.adj == Adjacency::sup ? std::pow(3.0, d) - 1.0 : 2.0 * d;
  const double rho = 2.0 * std::exp(1.0) * k / in.A;
  if (rho >= 1.0) return std::numeric_limits<double>::infinity();
  const double ld = std::pow(static_cast<double>(in.L), d);
  const int small_cap = 1 << d;
  double worst = 0.0;
  for (int u = 1; u <= small_cap; ++u) {
    const int s0 = std::max(small_cap + 1, u);
    const double head = std::pow(rho, s0) / (1.0 - rho);
    const double val =
        std::pow(in.A, u) * u * ld * head / (std::exp(1.0) * k);
    worst = std::max(worst, val);
  }
  return worst;
}

}  // namespace

double l4_at_scale(const LedgerInput& in, int j) {
  const NConstants nc = n_constants_cached(in.d, in.adj);
  return 4.0 * std::pow(2.0 * in.d, 3) * nc.n2 *
         std::pow(static_cast<double>(in.L), -(j + 1.0));
}

LedgerReport contraction_ledger(const LedgerInput& in) {
  in.validate();
  const NConstants nc = n_constants_cached(in.d, in.adj);
  LedgerReport rep;
  rep.n1 = nc.n1;
  rep.n2 = nc.n2;
  const double d = in.d, L = in.L;
  const double two_pow_2d = std::pow(2.0, static_cast<double>(1 << in.d));

  rep.l2_bulk = 24.0 * in.q * 4.0 * two_pow_2d * nc.n2 * std::pow(L, -d / 2.0);
  rep.l2_f = 4.0 * in.q * in.m * two_pow_2d * nc.n2 * std::pow(L, -d / 2.0);
  rep.l3_prime = 72.0 * d * d * std::pow(2.0, 2.0 * d) * nc.n1 * std::pow(L, -2.0);
  rep.l4 = l4_at_scale(in, 0);
  rep.delta = 4.0 * std::pow(2.0 * d, 5) * std::pow(2.0, d) * nc.n2 / L;
  rep.l1_estimate = l1_bracket(in);
  rep.l1_status = std::isfinite(rep.l1_estimate) ? RunStatus::ok : RunStatus::warning;

  rep.total_explicit = rep.l2_bulk + rep.l2_f + rep.l3_prime + rep.l4 + rep.delta;
  rep.total = rep.total_explicit + rep.l1_estimate;
  rep.admissible = rep.total <= 0.25;
  return rep;
}

std::int64_t min_scale_for_contraction(int d, double target_mu, const LedgerInput& base) {
  if (target_mu <= 0.0 || target_mu > 0.5) {
    throw Error("min_scale_for_contraction: target mu in (0, 1/2]");
  }
  // The explicit lemma bounds are evaluated with L as a double; they are
  // rational in L, so exactness does not suffer at large L.
  LedgerInput in = base;
  in.d = d;
  const NConstants nc = n_constants_cached(in.d, in.adj);
  const double two_pow_2d = std::pow(2.0, static_cast<double>(1 << in.d));
  auto total = [&](double L) {
    const double l2b = 24.0 * in.q * 4.0 * two_pow_2d * nc.n2 * std::pow(L, -0.5 * d);
    const double l2f = 4.0 * in.q * in.m * two_pow_2d * nc.n2 * std::pow(L, -0.5 * d);
    const double l3p =
        72.0 * d * d * std::pow(2.0, 2.0 * d) * nc.n1 * std::pow(L, -2.0);
    const double l4 = 4.0 * std::pow(2.0 * d, 3) * nc.n2 / L;
    const double delta = 4.0 * std::pow(2.0 * d, 5) * std::pow(2.0, d) * nc.n2 / L;
    return l2b + l2f + l3p + l4 + delta;
  };
  auto ok = [&](std::int64_t L) { return total(static_cast<double>(L)) <= 0.5 * target_mu; };
  std::int64_t hi = 3;
  while (!ok(hi)) {
    hi = 2 * hi + 1;
    if (hi > (std::int64_t{1} << 60)) {
      throw Error("min_scale_for_contraction: search overflow");
    }
  }
  std::int64_t lo = 3;
  if (ok(lo)) return lo;
  while (hi - lo > 2) {
    std::int64_t mid = lo + (hi - lo) / 2;
    if (mid % 2 == 0) ++mid;
    if (mid >= hi) mid = hi - 2;
    if (ok(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double min_A_for_correlation(int d, double eta, double eps, double r, Adjacency adj) {
  (void)eps;
  const NConstants nc = n_constants_cached(d, adj);
  const double factor =
      std::pow(2.0, d * (d + 1.0)) * 4.0 * r * std::pow(d * std::pow(2.0, d + 1), eta);
  auto ok = [&](double A) { return nc.n3(0.5 * A) * factor <= 1.0; };
  double hi = 4.0;
  while (!ok(hi)) {
    hi *= 2.0;
    if (hi > 1e18) throw Error("min_A_for_correlation: search overflow");
  }
  double lo = 2.0;
  if (ok(lo)) return lo;
  for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-9; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (ok(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double tail_bound(double h, double A, double c, double r, int N) {
  if (h <= 0 || A <= 0 || c <= 0 || r < 0 || N < 0) {
    throw Error("tail_bound: positive inputs required");
  }
  return 2.0 * (4.0 * h * h / c + 1.0 / A) * r * std::pow(2.0, -N);
}

int tail_scale_for(double h, double A, double c, double r, double tol) {
  if (tol <= 0) throw Error("tail_scale_for: tol > 0");
  for (int N = 0; N < 4096; ++N) {
    if (tail_bound(h, A, c, r, N) <= tol) return N;
  }
  throw Error("tail_scale_for: tolerance unreachable");
}

}  // namespace dipolerg
