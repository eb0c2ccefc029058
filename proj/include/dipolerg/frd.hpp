#pragma once

#include <vector>

#include "dipolerg/common.hpp"
#include "dipolerg/kernels.hpp"

namespace dipolerg {

// Finite-range decomposition C = sum_j Gamma_j + C_J.  Each Gamma_j is a
// polynomial in -Lap: Gamma_j = P_j(-Lap) delta_0 with
//   P_j = (E_{j-1} - E_j)/lambda,   E_j = prod_{i<=j} D_i,
//   D_i(lambda) = (T_{t_i}(w_i(lambda)) / T_{t_i}(w_i(0)))^2,
// w_i affine with w_i(lambda_c_i) = 1, w_i(4d) = -1.  Then D_i(0)=1 and
// 0 <= D_i <= 1 on [0,4d], so every P_j is >= 0 on the spectrum (exact PSD)
// and has degree < ceil(L^j/2) (exact finite range L^j/2).

struct FrdOptions {
  double kappa = 1.0;          // cutoff placement: lambda_c = 4d (kappa/t)^2
  double lambda_cap_frac = 1.0 / 3.0;
  double table_tol = 1e-5;     // position-space identity tolerance (reported)
  double symbol_tol = 5e-2;    // relative symbol residual threshold (warning)
  int residual_ref_side = 16;  // torus whose spectrum the residual is read on
  int tail_radius = 12;
  double max_table_cells = 4e7;  // full Gamma tables only while under this
  int threads = 1;
};

struct ScaleCutoff {
  int cheb_order = 0;   // t_j
  double lambda_c = 0;  // left edge of the suppression window
};

struct RangeDecomposition {
  int d = 3;
  int L = 5;
  int J = 1;
  double band = 12.0;  // 4d
  std::vector<ScaleCutoff> cutoffs;  // one per scale 1..J
  // Full tables for the scales whose support fits the cell cap; a
  // default-constructed Kernel (dim 0) marks an untabulated scale.
  std::vector<Kernel> gammas;
  Kernel tail;  // C_J, symbol E_J(lambda)/lambda
  RunStatus status = RunStatus::ok;
  double symbol_residual = 0.0;  // max of E_J on [lambda_min(ref torus), 4d]
  double min_symbol = 0.0;       // min of sampled Gamma_j symbols (PSD check)

  bool has_table(int j) const { return gammas.at(j - 1).dim() > 0; }

  // Gamma_j on |x|_inf <= radius: a slice of the stored table, or a spectral
  // evaluation for scales too wide to tabulate.
  Kernel gamma_values(int j, int radius, int threads = 1) const;

  // Spectral pieces, evaluated stably (no coefficient arithmetic).
  double cutoff_factor(int i, double lambda) const;   // D_i
  double suppression(int upto_j, double lambda) const;  // E_j = prod D_i
  double gamma_symbol(int j, double lambda) const;      // P_j
  double partial_sum_symbol(double lambda) const;       // sum_{j<=J} P_j
  double tail_symbol(double lambda) const;              // E_J / lambda

  // C_k = sum_{j>k} Gamma_j + residual, as a table (C_J plus later gammas).
  Kernel tail_from(int k) const;
};

RangeDecomposition build_decomposition(int d, int L, int J, const FrdOptions& opts = {});

struct ScaleDecay {
  int j = 0;
  double constant = 0.0;  // smallest c with |d^a Gamma_j| <= c L^{-(j-1)(d-2+|a|)}
  double exponent = 0.0;  // raw log-log fit slope within the table
};

struct DecayReport {
  std::vector<ScaleDecay> scales;
  double spread = 0.0;  // max/min of the constants
  bool uniform = true;  // spread <= flag_factor
};

DecayReport verify_decay(const RangeDecomposition& rd, const std::vector<int>& alpha,
                         double flag_factor = 3.0);

// (sigma/4) L^{dj} sum_{+-mu} (d_mu Gamma d*_mu)(0,0): the constant energy
// extracted per j-block when integrating the sigma V term over Gamma.
double trace_term(const Kernel& gamma, int L, int j, double sigma);

// Gradient-gradient covariance of a kernel: E[d_mu zeta(0) d_nu zeta(0)] for
// signed directions mu, nu (zeta Gaussian with covariance `gamma`).
double gradient_covariance(const Kernel& gamma, int mu, int nu);

// Same at separated points: E[d_mu zeta(x) d_nu zeta(y)], dx = x - y.
double gradient_covariance_at(const Kernel& gamma, int mu, int nu,
                              const std::vector<int>& dx);

}  // namespace dipolerg
