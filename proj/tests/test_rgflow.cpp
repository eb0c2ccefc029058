#include <doctest.h>

#include <cmath>

#include "dipolerg/rgflow.hpp"

using namespace dipolerg;

namespace {

const RangeDecomposition& shared_rd() {
  static const RangeDecomposition rd = [] {
    FrdOptions opts;
    opts.threads = 2;
    opts.tail_radius = 5;
    return build_decomposition(3, 3, 5, opts);
  }();
  return rd;
}

ExternalFieldSpec no_field;

// K_0(B, phi) for a single site block evaluated directly, used as the
// finite-difference oracle for the initial quadratic data
double k0_single_block(double z, double sigma0, int d, const std::vector<double>& grad) {
  // forward gradient vector is given; the potential uses both signs
  double vb = 0.0;
  for (const double g : grad) vb += 2.0 * g * g;  // backward derivative = -g here
  vb *= 0.25 * sigma0;
  const double u = std::sqrt(1.0 + sigma0);
  std::vector<double> ug(grad);
  for (auto& g : ug) g *= u;
  const double w = z * sphere_cos_moment_vec(d, ug);
  return std::expm1(w) * std::exp(-vb);
}

}  // namespace

TEST_CASE("multilinear polynomial algebra") {
  auto p = MultilinearPoly::monomial(2, 1, {0.0, 1.0});
  auto q = MultilinearPoly::monomial(2, 2, {0.0, 1.0});
  const auto pq = p * q;
  CHECK(pq.full_mask() == std::complex<double>(-1.0, 0.0));
  // overlapping masks drop
  const auto pp = p * p;
  CHECK(pp.is_zero());
  auto r = MultilinearPoly::constant(2, 2.0);
  r += pq;
  CHECK(r.c[0] == std::complex<double>(2.0, 0.0));
  CHECK(r.max_abs() == doctest::Approx(2.0));
}

TEST_CASE("initial activity") {
  FlowOptions opts;
  // z = 0: identically zero
  CHECK(init_mayer(0.0, 0.0, no_field, 3, 3, Adjacency::sup, opts).empty());
  CHECK(init_mayer(0.0, 0.25, no_field, 3, 3, Adjacency::sup, opts).empty());

  const double z = 0.01, s0 = 0.05;
  const TaylorActivity k = init_mayer(z, s0, no_field, 2, 3, Adjacency::sup, opts);
  Shape single;
  single.blocks = {BlockCoord{}};
  REQUIRE(k.bulk.count(single) == 1);
  const BulkEntry& e = k.bulk.at(single);
  CHECK(e.v == doctest::Approx(std::expm1(z)));

  // quadratic data against Richardson central differences of K_0
  const int d = 2;
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      auto value = [&](double s, double t) {
        std::vector<double> grad(d, 0.0);
        grad[a] += s;
        grad[b] += t;
        return k0_single_block(z, s0, d, grad);
      };
      auto second = [&](double h) {
        return (value(h, h) - value(h, -h) - value(-h, h) + value(-h, -h)) / (4.0 * h * h);
      };
      const double fd = (4.0 * second(5e-4) - second(1e-3)) / 3.0;
      CHECK(std::abs(e.q.at(a, b) - fd) <= 1e-8);
    }
  }
  // multi-block products carry (e^z - 1)^{|X|}
  for (const auto& [shape, be] : k.bulk) {
    CHECK(be.v == doctest::Approx(std::pow(std::expm1(z), shape.size())));
  }
}

TEST_CASE("fluctuation integration is the exact Gaussian convolution") {
  const RangeDecomposition& rd = shared_rd();
  const Kernel gamma = rd.gamma_values(1, 2);

  TaylorActivity k;
  k.d = 3;
  k.L = 3;
  k.j = 0;
  Shape single;
  single.blocks = {BlockCoord{}};
  BulkEntry e;
  e.v = 0.3;
  e.q.d = 3;
  for (int a = 0; a < 3; ++a) e.q.at(a, a) = 1.0;  // s-structure identity
  k.bulk[single] = e;

  // Gamma = 0 is the identity map
  Kernel zero(3, 2);
  zero.finite_range = true;
  zero.range = 1.0;
  const TaylorActivity kz = fluctuation_sharp(k, zero, no_field);
  CHECK(kz.bulk.at(single).v == doctest::Approx(0.3));

  // Q = 0 leaves v unchanged
  TaylorActivity kq = k;
  kq.bulk[single].q = QuadData{3, {}};
  CHECK(fluctuation_sharp(kq, gamma, no_field).bulk.at(single).v == doctest::Approx(0.3));

  // v# - v against a Monte Carlo average of the truncated quadratic
  const TaylorActivity ks = fluctuation_sharp(k, gamma, no_field);
  const double shift = ks.bulk.at(single).v - 0.3;
  const Torus geom(3, 8);
  const auto symbol = GaussianSampler::kernel_symbol(geom, gamma);
  GaussianSampler sampler(geom, symbol, 5150);
  const int n = 100000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Field zeta = sampler.next();
    double quad = 0.0;
    for (int mu = -3; mu <= 3; ++mu) {
      if (mu == 0) continue;
      for (int nu = -3; nu <= 3; ++nu) {
        if (nu == 0) continue;
        quad += e.q.signed_at(mu, nu) * derivative(zeta, mu, 0) * derivative(zeta, nu, 0);
      }
    }
    const double val = 0.125 * quad;
    acc += val;
    acc2 += val * val;
  }
  const double mean = acc / n;
  const double se = std::sqrt((acc2 / n - mean * mean) / n);
  CHECK(std::abs(shift - mean) <= 3.0 * se);
  // Q passes through
  CHECK(ks.bulk.at(single).q.at(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("beta extraction") {
  TaylorActivity k;
  k.d = 1;
  k.L = 3;
  k.j = 0;
  CHECK(extract_beta(k) == 0.0);
  const double w = 0.37;
  Shape single, pair;
  single.blocks = {BlockCoord{}};
  pair.blocks = {BlockCoord{}, make_block({1})};
  BulkEntry es;
  es.v = w;
  es.q.d = 1;
  k.bulk[single] = es;
  // only X = B contributes when the activity sits on single blocks
  CHECK(extract_beta(k) == doctest::Approx(-w));
  // d=1 with the value w on all three small sets containing B: beta = -2w
  BulkEntry ep;
  ep.v = w;
  ep.q.d = 1;
  k.bulk[pair] = ep;
  CHECK(extract_beta(k) == doctest::Approx(-2.0 * w));
}

TEST_CASE("alpha extraction and its symmetry") {
  TaylorActivity k;
  k.d = 3;
  k.L = 3;
  k.j = 0;
  Shape single;
  single.blocks = {BlockCoord{}};
  BulkEntry e;
  e.v = 0.0;
  e.q.d = 3;
  const double c = 0.8;
  for (int a = 0; a < 3; ++a) e.q.at(a, a) = c;  // Q = c (delta - delta_-) shape
  k.bulk[single] = e;
  const Extraction ex = extract_alpha(k);
  // alpha_{mu nu} = -(1/2)|B|^{-1} Q_{mu nu} here, |B| = 1
  CHECK(ex.alpha.at(0, 0) == doctest::Approx(-0.5 * c));
  CHECK(ex.alpha_scalar == doctest::Approx(-c));
  CHECK(ex.sym_residual <= 1e-14);
  // exact antisymmetry through the stored structure
  CHECK(ex.alpha.signed_at(-1, 1) == doctest::Approx(-ex.alpha.signed_at(1, 1)));
  // Q = 0 gives alpha = 0
  TaylorActivity kz = k;
  kz.bulk[single].q = QuadData{3, {}};
  CHECK(extract_alpha(kz).alpha_scalar == 0.0);
}

TEST_CASE("step fixed point and composition identity") {
  const RangeDecomposition& rd = shared_rd();
  FlowOptions opts;

  // origin is an exact fixed point
  FlowState zero;
  zero.j = 0;
  zero.sigma = 0.0;
  zero.k = init_mayer(0.0, 0.0, no_field, 3, 3, Adjacency::sup, opts);
  const FlowState z1 = step(zero, rd, no_field, opts);
  CHECK(z1.sigma == 0.0);
  CHECK(z1.k.empty());
  CHECK(z1.bulk_energy_per_block == 0.0);

  // sigma = s, K = 0: sigma is inert, the energy is the trace term
  FlowState pure;
  pure.j = 0;
  pure.sigma = 0.4;
  pure.k = zero.k;
  const FlowState p1 = step(pure, rd, no_field, opts);
  CHECK(p1.sigma == doctest::Approx(0.4));
  const Kernel g1 = rd.gamma_values(1, 2);
  CHECK(p1.bulk_energy_per_block ==
        doctest::Approx(27.0 * trace_term(g1, 3, 0, 0.4)));

  // step == fluctuation; extraction; reblock, bitwise
  FlowState st;
  st.j = 0;
  st.sigma = 0.02;
  st.k = init_mayer(0.002, 0.02, no_field, 3, 3, Adjacency::sup, opts);
  const FlowState via_step = step(st, rd, no_field, opts);
  const Kernel gamma = rd.gamma_values(1, 2, opts.threads);
  const TaylorActivity ks = fluctuation_sharp(st.k, gamma, no_field);
  const Extraction ex = extract(ks);
  CHECK(via_step.sigma == st.sigma + ex.alpha_scalar);  // bitwise
  const double eplus = 27.0 * (trace_term(gamma, 3, 0, st.sigma) + ex.beta_bulk);
  CHECK(via_step.bulk_energy_per_block == eplus);
}

TEST_CASE("flow at small activity contracts geometrically") {
  const RangeDecomposition& rd = shared_rd();
  FlowOptions opts;
  opts.threads = 2;

  // z = 0: all states zero, sigma constant
  const Trajectory t0 = run_flow(0.0, 0.07, no_field, rd, 5, opts);
  for (const auto& s : t0.states) {
    CHECK(s.sigma == doctest::Approx(0.07));
    CHECK(s.norm_k == 0.0);
  }

  const double z = 5e-4;
  const ShootingResult sh = stable_sigma(z, no_field, rd, 5, 1e-10, opts);
  CHECK(std::abs(sh.final_sigma) <= 1e-10);
  const Trajectory traj = run_flow(z, sh.sigma0, no_field, rd, 5, opts);
  CHECK(traj.status == RunStatus::ok);
  CHECK(traj.geometric_ok);
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    const double bound = opts.r * std::pow(0.5, static_cast<double>(i));
    CHECK(traj.states[i].norm_k <= bound);
    CHECK(std::abs(traj.states[i].sigma) <= bound);
  }
  // max_j ||K_j|| 2^j stays bounded on the stable manifold
  double worst = 0.0;
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    worst = std::max(worst, traj.states[i].norm_k * std::pow(2.0, static_cast<double>(i)));
  }
  CHECK(worst <= 1.0);

  // stable_sigma(0) = 0 exactly
  CHECK(stable_sigma(0.0, no_field, rd, 5, 1e-10, opts).sigma0 == 0.0);

  // sigma(z) drifts continuously with z (monotone trend recorded)
  const ShootingResult shh = stable_sigma(z / 2, no_field, rd, 5, 1e-10, opts);
  CHECK(std::abs(shh.sigma0) < std::abs(sh.sigma0));
}

TEST_CASE("f-channel support and the scale-resolved series") {
  const RangeDecomposition& rd = shared_rd();
  FlowOptions opts;
  opts.threads = 2;
  ExternalFieldSpec f;
  f.variant = FieldVariant::gradient_linear;
  f.points = {{0, 0, 0}, {4, 0, 0}};
  f.dirs = {1, 1};
  f.t = {0.05, 0.05};

  const Trajectory traj = run_flow(0.0, 0.0, f, rd, 5, opts);
  // support: every tracked f-entry stays near the source points (asserted by
  // the flow; verify the energies are localized too)
  for (const auto& st : traj.states) {
    for (const auto& [b, poly] : st.f_energy) {
      (void)b;
      CHECK(poly.max_abs() < 1.0);
    }
  }
  const FFSeries ff = accumulate_fF(traj, f, 3, Adjacency::sup);
  // contributions vanish below the covering scale
  for (int j = 0; j < ff.j0 && j < static_cast<int>(ff.per_scale.size()); ++j) {
    CHECK(std::abs(ff.per_scale[j]) == 0.0);
  }
  // total = sum_j dd Gamma_j at the separation, up to the J-tail
  double expected = 0.0;
  for (int j = 1; j <= 5; ++j) {
    const Kernel g = rd.gamma_values(j, 6, 2);
    expected += gradient_covariance_at(g, 1, 1, {4, 0, 0});
  }
  CHECK(ff.total.real() == doctest::Approx(expected).epsilon(1e-9));
  // and matches the full Wick value within the tail budget
  const Kernel c = build_coulomb_table(3, 6, 2);
  const double wick = gradient_covariance_at(c, 1, 1, {4, 0, 0});
  const double tail = std::abs(gradient_covariance_at(rd.tail, 1, 1, {4, 0, 0}));
  CHECK(std::abs(ff.total.real() - wick) <= tail + 1e-9);
}

TEST_CASE("exponential-variant f channel flows") {
  const RangeDecomposition& rd = shared_rd();
  FlowOptions opts;
  ExternalFieldSpec f;
  f.variant = FieldVariant::gradient_exponential;
  f.points = {{0, 0, 0}, {2, 0, 0}};
  f.dirs = {1, -1};
  f.t = {0.05, 0.05};
  const Trajectory traj = run_flow(0.001, 0.0, f, rd, 4, opts);
  CHECK(traj.status == RunStatus::ok);
  const FFSeries ff = accumulate_fF(traj, f, 3, Adjacency::sup);
  CHECK(std::isfinite(ff.total.real()));
  CHECK(std::isfinite(ff.total.imag()));
}
