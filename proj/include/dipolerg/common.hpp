#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dipolerg {

inline constexpr int kMaxDim = 6;
inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Errors and statuses

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidDirectionError : Error {
  using Error::Error;
};
struct UnsupportedDimensionError : Error {
  using Error::Error;
};
struct ConvergenceError : Error {
  double achieved = 0.0;
  ConvergenceError(const std::string& msg, double got) : Error(msg), achieved(got) {}
};
struct CoverageError : Error {
  using Error::Error;
};
struct BudgetExceededError : Error {
  std::uint64_t partial_count = 0;
  BudgetExceededError(const std::string& msg, std::uint64_t partial)
      : Error(msg), partial_count(partial) {}
};

enum class RunStatus { ok, warning, divergence, unreliable, budget_exceeded };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::warning: return "warning";
    case RunStatus::divergence: return "divergence";
    case RunStatus::unreliable: return "unreliable";
    case RunStatus::budget_exceeded: return "budget_exceeded";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Reproducible RNG.  mt19937_64 has a standardized sequence; the normal
// transform is fixed here (Box-Muller) because std::normal_distribution is
// implementation-defined.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // uniform in [0,1)
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Stable derivation of per-chain streams from a master seed.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Deterministic parallel helper: fixed chunk partition, caller combines chunk
// results in index order.

inline std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::size_t n,
                                                                     int threads) {
  int t = threads > 0 ? threads : 1;
  if (static_cast<std::size_t>(t) > n) t = n > 0 ? static_cast<int>(n) : 1;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t base = n / t, rem = n % t;
  std::size_t begin = 0;
  for (int i = 0; i < t; ++i) {
    std::size_t len = base + (static_cast<std::size_t>(i) < rem ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

// Runs fn(chunk_index, begin, end) on each chunk; blocks until done.
inline void run_chunks(std::size_t n, int threads,
                       const std::function<void(int, std::size_t, std::size_t)>& fn) {
  const auto ranges = chunk_ranges(n, threads);
  if (ranges.size() == 1) {
    fn(0, ranges[0].first, ranges[0].second);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(ranges.size());
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    pool.emplace_back([&, i] { fn(static_cast<int>(i), ranges[i].first, ranges[i].second); });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes/weights on [-1,1], by Newton iteration.

struct Quadrature1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline Quadrature1D gauss_legendre(int n) {
  Quadrature1D q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 0; k < n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k + 1.0) * x * p1 - k * p2) / (k + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.nodes[i] = -x;
    q.nodes[n - 1 - i] = x;
    q.weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    q.weights[n - 1 - i] = q.weights[i];
  }
  return q;
}

// Maps [-1,1] rule to [a,b].
inline Quadrature1D scaled_rule(const Quadrature1D& q, double a, double b) {
  Quadrature1D out = q;
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    out.nodes[i] = c + h * q.nodes[i];
    out.weights[i] = h * q.weights[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chebyshev polynomials on [lo,hi]: T_k(s(x)) with s affine to [-1,1].

// T_n(x) for arbitrary real x, stable via trig/hyperbolic forms.
inline double cheb_t(int n, double x) {
  if (x >= 1.0) return std::cosh(n * std::acosh(x));
  if (x <= -1.0) {
    const double v = std::cosh(n * std::acosh(-x));
    return (n % 2 == 0) ? v : -v;
  }
  return std::cos(n * std::acos(x));
}

struct ChebSeries {
  double lo = 0.0, hi = 1.0;
  std::vector<double> coeff;  // f(x) = sum_k coeff[k] T_k(s(x))

  double map(double x) const { return (2.0 * x - (hi + lo)) / (hi - lo); }

  double eval(double x) const {
    // Clenshaw
    const double s = map(x);
    double b1 = 0.0, b2 = 0.0;
    for (int k = static_cast<int>(coeff.size()) - 1; k >= 1; --k) {
      const double b0 = coeff[k] + 2.0 * s * b1 - b2;
      b2 = b1;
      b1 = b0;
    }
    return coeff.empty() ? 0.0 : coeff[0] + s * b1 - b2;
  }
};

// Interpolates f at n Chebyshev-Gauss nodes of [lo,hi]; exact for polynomials
// of degree < n.
inline ChebSeries cheb_interpolate(const std::function<double(double)>& f, double lo,
                                   double hi, int n) {
  std::vector<double> fx(n);
  for (int i = 0; i < n; ++i) {
    const double theta = M_PI * (i + 0.5) / n;
    const double s = std::cos(theta);
    fx[i] = f(0.5 * (lo + hi) + 0.5 * (hi - lo) * s);
  }
  ChebSeries out;
  out.lo = lo;
  out.hi = hi;
  out.coeff.assign(n, 0.0);
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += fx[i] * std::cos(k * M_PI * (i + 0.5) / n);
    }
    out.coeff[k] = acc * (k == 0 ? 1.0 : 2.0) / n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Small least-squares line fit: y = a + b x.  Returns {a, b}.

inline std::pair<double, double> fit_line(const std::vector<double>& x,
                                          const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) throw Error("fit_line: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  if (std::abs(det) < 1e-300) throw Error("fit_line: degenerate abscissae");
  const double b = (n * sxy - sx * sy) / det;
  const double a = (sy - b * sx) / n;
  return {a, b};
}

}  // namespace dipolerg
