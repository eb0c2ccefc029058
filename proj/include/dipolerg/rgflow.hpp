#pragma once

#include <array>
#include <complex>
#include <map>
#include <vector>

#include "dipolerg/common.hpp"
#include "dipolerg/frd.hpp"
#include "dipolerg/gas.hpp"
#include "dipolerg/polymers.hpp"

namespace dipolerg {

// ---------------------------------------------------------------------------
// Multilinear polynomials in the source strengths t_1..t_m (coefficients per
// subset mask).  Products drop non-multilinear terms; they never contribute
// to the mixed first derivatives that define truncated correlations.

struct MultilinearPoly {
  int m = 0;
  std::array<std::complex<double>, 16> c{};

  static MultilinearPoly zero(int m) {
    MultilinearPoly p;
    p.m = m;
    return p;
  }
  static MultilinearPoly constant(int m, std::complex<double> v) {
    MultilinearPoly p = zero(m);
    p.c[0] = v;
    return p;
  }
  static MultilinearPoly monomial(int m, int mask, std::complex<double> v) {
    MultilinearPoly p = zero(m);
    p.c[mask] = v;
    return p;
  }

  bool is_zero(double eps = 0.0) const {
    for (int i = 0; i < (1 << m); ++i) {
      if (std::abs(c[i]) > eps) return false;
    }
    return true;
  }
  double max_abs() const {
    double v = 0.0;
    for (int i = 0; i < (1 << m); ++i) v = std::max(v, std::abs(c[i]));
    return v;
  }
  std::complex<double> full_mask() const { return c[(1 << m) - 1]; }

  MultilinearPoly& operator+=(const MultilinearPoly& o) {
    for (int i = 0; i < (1 << m); ++i) c[i] += o.c[i];
    return *this;
  }
  MultilinearPoly operator*(std::complex<double> s) const {
    MultilinearPoly p = *this;
    for (int i = 0; i < (1 << m); ++i) p.c[i] *= s;
    return p;
  }
  // mask-disjoint product
  MultilinearPoly operator*(const MultilinearPoly& o) const {
    MultilinearPoly p = zero(m);
    for (int i = 0; i < (1 << m); ++i) {
      if (c[i] == std::complex<double>(0.0)) continue;
      for (int k = 0; k < (1 << m); ++k) {
        if ((i & k) == 0) p.c[i | k] += c[i] * o.c[k];
      }
    }
    return p;
  }
};

// ---------------------------------------------------------------------------
// Activity data.

// Symmetric quadratic data over positive axes; the full signed matrix is
// Q_{mu nu} = sgn(mu) sgn(nu) q[|mu|-1][|nu|-1] (the antisymmetry
// Q_{-mu,nu} = -Q_{mu,nu} is built in).
struct QuadData {
  int d = 0;
  std::array<double, kMaxDim * kMaxDim> q{};

  double& at(int a, int b) { return q[static_cast<std::size_t>(a) * d + b]; }
  double at(int a, int b) const { return q[static_cast<std::size_t>(a) * d + b]; }
  double signed_at(int mu, int nu) const {
    const double s = (mu > 0 ? 1.0 : -1.0) * (nu > 0 ? 1.0 : -1.0);
    return s * at(std::abs(mu) - 1, std::abs(nu) - 1);
  }
  double max_abs() const {
    double v = 0.0;
    for (int a = 0; a < d; ++a) {
      for (int b = 0; b < d; ++b) v = std::max(v, std::abs(at(a, b)));
    }
    return v;
  }
  bool is_zero(double eps = 0.0) const { return max_abs() <= eps; }
};

// Canonical translation-reduced shape: sorted blocks, minimum corner at 0.
struct Shape {
  std::vector<BlockCoord> blocks;
  bool operator<(const Shape& o) const { return blocks < o.blocks; }
  bool operator==(const Shape& o) const { return blocks == o.blocks; }
  int size() const { return static_cast<int>(blocks.size()); }
};

// canonical shape + the anchor that restores absolute positions
std::pair<Shape, BlockCoord> canonicalize(const std::vector<BlockCoord>& blocks, int d);

struct BulkEntry {
  double v = 0.0;  // K(X, 0)
  QuadData q;      // K_2(X, 0; x_mu, x_nu)
};

struct AbsKey {
  Shape shape;
  BlockCoord anchor{};
  bool operator<(const AbsKey& o) const {
    if (shape.blocks != o.shape.blocks) return shape.blocks < o.shape.blocks;
    return anchor < o.anchor;
  }
};

struct FEntry {
  MultilinearPoly dv;               // delta-channel value at phi = 0
  std::vector<MultilinearPoly> g;   // coefficient of d_{mu_k} phi(x_k) per point
};

struct TaylorActivity {
  int d = 3;
  int L = 5;
  int j = 0;
  int m = 0;
  Adjacency adj = Adjacency::sup;
  std::map<Shape, BulkEntry> bulk;
  std::map<AbsKey, FEntry> fchannel;

  bool empty() const { return bulk.empty() && fchannel.empty(); }
};

// ---------------------------------------------------------------------------
// Empirical norm surrogate.

struct FlowOptions {
  double A = 16.0;     // polymer-size weight in the norm
  double h = 1.0;      // field-strength parameter of the Phi_j norm
  double r = 0.5;      // geometric-decay budget checked by run_flow
  Adjacency adj = Adjacency::sup;
  int init_size_cap = 0;                  // 0: as large as the budget allows
  std::uint64_t init_class_budget = 200000;
  double value_floor = 1e-14;             // drop classes below this
  int pair_block_cap = 1;                 // max |X_i| entering product terms
  double norm_blowup = 1e3;
  std::uint64_t probe_seed = 20260809;
  int threads = 1;
};

// Fixed battery: zero field, +-coordinate fields and seeded plane waves, all
// scaled to unit Phi_j norm.
struct Probe {
  // phi(x) = amp * sin(k.x + phase) + slope . x
  std::vector<double> slope;
  double amp = 0.0;
  std::vector<double> wavevec;
  double phase = 0.0;
};

struct ProbeBattery {
  int d = 3;
  double h = 1.0;
  std::vector<Probe> probes;

  static ProbeBattery make(int d, double h, std::uint64_t seed);
};

// Surrogate for the activity norm at scale j.
double activity_norm(const TaylorActivity& k, const ProbeBattery& battery, double A,
                     const ExternalFieldSpec& field);

// ---------------------------------------------------------------------------
// Flow state and operations.

struct Extraction {
  double beta_bulk = 0.0;  // block-independent beta(B) in the bulk
  // alpha_{mu nu} over signed directions, its scalar fit and the residual
  QuadData alpha;          // positive-axis block (signed via s-structure)
  double alpha_scalar = 0.0;
  double sym_residual = 0.0;
  std::map<BlockCoord, MultilinearPoly> f_beta;  // per j-block, near the points
};

struct FlowState {
  int j = 0;
  double sigma = 0.0;
  TaylorActivity k;
  double norm_k = 0.0;
  // energies extracted while arriving at this scale (empty at j = 0);
  // log Z accumulates the *negative* of these
  double bulk_energy_per_block = 0.0;  // per (j)-block at this scale
  std::map<BlockCoord, MultilinearPoly> f_energy;  // per (j)-block
};

struct Trajectory {
  std::vector<FlowState> states;
  std::vector<double> ratios;  // ||K_{j+1}|| / ||K_j||
  bool geometric_ok = true;    // ||K_j|| <= r 2^{-j} and |sigma_j| <= r 2^{-j}
  RunStatus status = RunStatus::ok;
};

TaylorActivity init_mayer(double z, double sigma0, const ExternalFieldSpec& field,
                          int d, int L, Adjacency adj, const FlowOptions& opts);

// Gaussian convolution on the truncated data (exact at this order): values
// absorb (1/8) Q : gradcov(Gamma) plus the within-entry pairings of the
// f-channel linear data; Q and g pass through.
TaylorActivity fluctuation_sharp(const TaylorActivity& k, const Kernel& gamma,
                                 const ExternalFieldSpec& field);

Extraction extract(const TaylorActivity& k_sharp);

double extract_beta(const TaylorActivity& k_sharp);                  // bulk value
Extraction extract_alpha(const TaylorActivity& k_sharp);             // full report

// One RG step j -> j+1 (composes the public pieces).
FlowState step(const FlowState& state, const RangeDecomposition& rd,
               const ExternalFieldSpec& field, const FlowOptions& opts);

Trajectory run_flow(double z, double sigma0, const ExternalFieldSpec& field,
                    const RangeDecomposition& rd, int J, const FlowOptions& opts);

struct ShootingResult {
  double sigma0 = 0.0;
  double final_sigma = 0.0;
  int evaluations = 0;
  RunStatus status = RunStatus::ok;
};

// Stable-manifold shooting: sigma0 with |sigma_J| minimized (bisection).
ShootingResult stable_sigma(double z, const ExternalFieldSpec& field,
                            const RangeDecomposition& rd, int J, double tol,
                            const FlowOptions& opts);

struct FFSeries {
  std::vector<std::complex<double>> per_scale;  // scale-j contribution to G^t
  std::complex<double> total;
  int j0 = 0;  // min covering scale of the points
};

// Scale-resolved i^m d^m/dt log Z contributions carried by the f-channel
// energies; comparable to the gas-module truncated correlation.
FFSeries accumulate_fF(const Trajectory& traj, const ExternalFieldSpec& field, int L,
                       Adjacency adj);

}  // namespace dipolerg
