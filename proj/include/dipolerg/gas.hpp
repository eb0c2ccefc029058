#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include "dipolerg/common.hpp"
#include "dipolerg/frd.hpp"
#include "dipolerg/kernels.hpp"
#include "dipolerg/lattice.hpp"

namespace dipolerg {

// ---------------------------------------------------------------------------
// Spherical integration on S^{d-1} (normalized rotation-invariant measure).

// int cos(p.v) dp depends on |v| only; closed forms for d in {1,3}, else a
// Gauss rule in the polar angle.
double sphere_cos_moment(int d, double vnorm);
double sphere_cos_moment_vec(int d, const std::vector<double>& v);

struct SphereRule {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;  // sum to 1
};

// Product rule (polar Gauss x uniform azimuth); supports d <= 3 exactly as
// needed by the dipole integrals here.
SphereRule sphere_rule(int d, int order);

// ---------------------------------------------------------------------------
// Dipole model pieces.

struct Dipole {
  std::vector<int> x;       // site
  std::vector<double> p;    // unit moment
};
using DipoleConfig = std::vector<Dipole>;

// (p1 . d)(p2 . d) C at displacement dx, derivatives acting on the two slots.
double dipole_interaction(const Kernel& c, const std::vector<double>& p1,
                          const std::vector<double>& p2, const std::vector<int>& dx);

// sum_{k,j} (p_k . d)(p_j . d) C(x_k - x_j), self terms included.
double pair_energy(const DipoleConfig& cfg, const Kernel& c);

// sum_{x in region} int dp cos(u p . grad phi(x)), forward gradient.
double w_energy(const Field& phi, const std::vector<std::int64_t>& region, double u);
double w_total(const Field& phi, double u);

// ---------------------------------------------------------------------------
// External field channel.

enum class FieldVariant { none, gradient_linear, gradient_exponential, general };

struct LocalFunctional {
  std::vector<std::int64_t> point;
  double growth_M = 0.0;  // |f|_0 <= M |phi| + m declaration
  double growth_m = 1.0;
  std::function<std::complex<double>(const Field&)> eval;
};

struct ExternalFieldSpec {
  FieldVariant variant = FieldVariant::none;
  std::vector<std::vector<std::int64_t>> points;
  std::vector<int> dirs;                  // signed directions per point
  std::vector<std::complex<double>> t;    // source strengths
  double t_radius = 0.1;                  // analyticity radius a
  std::vector<LocalFunctional> general;

  int m() const;
  void validate(int d) const;
};

// ---------------------------------------------------------------------------
// Monte Carlo scaffolding.

struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long samples = 0;
  std::uint64_t seed = 0;
  double ess_fraction = 1.0;
  RunStatus status = RunStatus::ok;
};

// Spectral sampler for mean-zero Gaussian fields on a torus; symbol is the
// per-mode variance factor, zero mode pinned to 0.  Deterministic stream per
// seed.
class GaussianSampler {
 public:
  GaussianSampler(const Torus& geom, std::vector<double> symbol, std::uint64_t seed);

  // Symbols
  static std::vector<double> inverse_laplacian_symbol(const Torus& geom);
  static std::vector<double> frd_partial_symbol(const Torus& geom,
                                                const RangeDecomposition& rd);
  static std::vector<double> kernel_symbol(const Torus& geom, const Kernel& k);

  Field next();

 private:
  Torus geom_;
  std::vector<double> amp_;  // sqrt(V * symbol)
  Rng rng_;
  std::vector<std::complex<double>> modes_;
  std::vector<std::int64_t> conj_index_;
};

// ---------------------------------------------------------------------------
// Partition functions.

struct GrandResult {
  double value = 1.0;
  double last_term = 0.0;  // magnitude of the n_max contribution
  RunStatus status = RunStatus::ok;
};

// Grand canonical partition function on a box, truncated at n_max dipoles.
GrandResult grand_partition_truncated(int d, int box_side, double z, int n_max,
                                      const Kernel& c, int sphere_order = 12,
                                      double op_budget = 3e9);

struct KacSiegertResult {
  double grand_route = 0.0;  // z^n coefficient via the dipole-sum form
  double field_route = 0.0;  // same via Gaussian Wick reduction of E[W^n]
  double rel_diff = 0.0;
};

// Order-n (n <= 2) coefficient comparison on a periodic box with the exact
// torus covariance.
KacSiegertResult kac_siegert_check(int d, int side, int n, int sphere_order = 12);

// |Lambda|^{-1} log Z''(sigma) = -1/2 log(1+sigma) (|Lambda|-1)/|Lambda|.
double quadratic_partition_exact(std::int64_t volume, double sigma);

MCEstimate quadratic_partition_mc(const Torus& geom, double sigma, std::uint64_t seed,
                                  long samples, int chains = 16);

// ---------------------------------------------------------------------------
// Truncated correlations.

struct CorrelationRequest {
  int d = 3;
  std::int64_t side = 16;
  double z = 0.0;
  double sigma = 0.0;
  ExternalFieldSpec field;
  std::uint64_t seed = 1;
  long samples = 20000;
  int chains = 16;
  double min_ess_fraction = 0.2;
};

struct CumulantResult {
  std::complex<double> value;
  double std_error = 0.0;  // scatter of per-chain estimates (complex modulus)
  double ess_fraction = 1.0;
  long samples = 0;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::ok;
};

// Joint cumulant of the field-spec observables under the reweighted measure
// e^{zW - sigma V} dmu_C / norm, by importance-weighted k-statistics (m<=4).
CumulantResult mc_truncated_correlation(const CorrelationRequest& req);

// Finite-difference cross-check (m = 2, gradient-linear): mixed t-derivative
// of log Z via central differences at steps {a/4, a/8}, Richardson combined.
CumulantResult mc_truncated_correlation_tdiff(const CorrelationRequest& req);

struct DecayFitPoint {
  std::int64_t separation = 0;
  double value = 0.0;
  double std_error = 0.0;
};

struct DecayFitResult {
  double exponent = 0.0;      // decay rate: |corr| ~ r^{-exponent}
  double fit_std_error = 0.0;
  double eta = 0.0;           // min{d/2, 2}
  std::vector<DecayFitPoint> points;
  RunStatus status = RunStatus::ok;
};

double decay_eta(int d);

// Gradient-gradient truncated two-point decay along a lattice axis.
DecayFitResult decay_exponent_fit(const CorrelationRequest& base, int direction,
                                  const std::vector<std::int64_t>& separations);

}  // namespace dipolerg
