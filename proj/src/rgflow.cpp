#include "dipolerg/rgflow.hpp"

#include <algorithm>
#include <cmath>

#include "dipolerg/lattice.hpp"

namespace dipolerg {

namespace {

std::int64_t ipow64(std::int64_t b, int e) {
  std::int64_t v = 1;
  for (int i = 0; i < e; ++i) v *= b;
  return v;
}

// s_{mu nu} = delta_{mu nu} - delta_{mu,-nu} on signed directions; on the
// positive-axis block it is the identity.
double qcoef_sign(int mu, int nu) {
  if (std::abs(mu) != std::abs(nu)) return 0.0;
  return mu == nu ? 1.0 : -1.0;
}

BlockCoord block_of_site(const std::vector<std::int64_t>& site, int d, int j, int L) {
  return site_to_block(site, d, ipow64(L, j));
}

bool entry_supported(const std::vector<BlockCoord>& blocks, int d, Adjacency adj,
                     const ExternalFieldSpec& field, int j, int L) {
  const int R = (1 << d) - 1;
  for (const auto& pt : field.points) {
    const BlockCoord pb = block_of_site(pt, d, j, L);
    for (const auto& b : blocks) {
      int l1 = 0, linf = 0;
      for (int a = 0; a < d; ++a) {
        const int diff = std::abs(pb[a] - b[a]);
        l1 += diff;
        linf = std::max(linf, diff);
      }
      if ((adj == Adjacency::sup ? linf : l1) <= R) return true;
    }
  }
  return false;
}

}  // namespace

std::pair<Shape, BlockCoord> canonicalize(const std::vector<BlockCoord>& blocks, int d) {
  BlockCoord anchor{};
  for (int a = 0; a < d; ++a) {
    std::int32_t mn = blocks[0][a];
    for (const auto& b : blocks) mn = std::min(mn, b[a]);
    anchor[a] = mn;
  }
  Shape s;
  s.blocks.reserve(blocks.size());
  for (const auto& b : blocks) {
    BlockCoord c{};
    for (int a = 0; a < d; ++a) c[a] = b[a] - anchor[a];
    s.blocks.push_back(c);
  }
  std::sort(s.blocks.begin(), s.blocks.end());
  return {std::move(s), anchor};
}

// ---------------------------------------------------------------------------
// Initialization (Mayer expansion at scale 0).

TaylorActivity init_mayer(double z, double sigma0, const ExternalFieldSpec& field,
                          int d, int L, Adjacency adj, const FlowOptions& opts) {
  field.validate(d);
  if (field.variant == FieldVariant::general) {
    throw Error("init_mayer: general field variant is not carried by the flow");
  }
  TaylorActivity k;
  k.d = d;
  k.L = L;
  k.j = 0;
  k.m = field.m();
  k.adj = adj;

  const double ez1 = std::expm1(z);  // e^z - 1 = K_0 single-block value
  const double qdiag =
      -z * (1.0 + sigma0) * std::exp(z) / d - ez1 * sigma0;  // Q_{mu mu} per block

  // connected products up to the largest size the enumeration budget allows
  int cap = opts.init_size_cap > 0 ? std::min(opts.init_size_cap, 1 << d) : (1 << d);
  std::vector<Shape> classes;
  while (cap >= 1) {
    classes.clear();
    std::map<Shape, bool> seen;
    try {
      EnumerationBudget budget;
      budget.max_nodes = opts.init_class_budget;
      for_each_small_set(BlockCoord{}, d, adj, cap, budget,
                         [&](const std::vector<BlockCoord>& blocks) {
                           auto [shape, anchor] = canonicalize(blocks, d);
                           seen.emplace(std::move(shape), true);
                         });
      for (auto& [shape, flag] : seen) classes.push_back(shape);
      break;
    } catch (const BudgetExceededError&) {
      --cap;  // shrink until the census fits the budget
    }
  }
  if (cap < 1) throw Error("init_mayer: enumeration budget too small");

  if (z != 0.0) {
    for (const auto& shape : classes) {
      const int s = shape.size();
      BulkEntry e;
      e.v = std::pow(ez1, s);
      e.q.d = d;
      const double qfac = s * std::pow(ez1, s - 1) * qdiag;
      for (int a = 0; a < d; ++a) e.q.at(a, a) = qfac;
      if (std::abs(e.v) < opts.value_floor && e.q.max_abs() < opts.value_floor) continue;
      k.bulk.emplace(shape, e);
    }
  } else if (sigma0 != 0.0) {
    // W vanishes: e^{W}-1 = 0 and the activity is identically zero
  }

  // f channel: one entry per source point, on its own block
  if (field.variant != FieldVariant::none) {
    for (int p = 0; p < k.m; ++p) {
      const BlockCoord b = block_of_site(field.points[p], d, 0, L);
      AbsKey key;
      key.shape.blocks = {BlockCoord{}};
      key.anchor = b;
      FEntry fe;
      fe.dv = MultilinearPoly::zero(k.m);
      fe.g.assign(k.m, MultilinearPoly::zero(k.m));
      const std::complex<double> ez = std::exp(z);
      if (field.variant == FieldVariant::gradient_linear) {
        // (e^{i t O + W} - 1) e^{-V}: value unchanged at phi=0, linear i t e^z
        fe.g[p] = MultilinearPoly::monomial(k.m, 1 << p, std::complex<double>(0, 1) * ez);
      } else {
        // t e^{i d phi} factor: value e^z t, linear i t e^z
        fe.dv = MultilinearPoly::monomial(k.m, 1 << p, ez);
        fe.g[p] = MultilinearPoly::monomial(k.m, 1 << p, std::complex<double>(0, 1) * ez);
      }
      auto [it, fresh] = k.fchannel.emplace(key, fe);
      if (!fresh) {
        it->second.dv += fe.dv;
        for (int q = 0; q < k.m; ++q) it->second.g[q] += fe.g[q];
      }
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// Fluctuation integration on the truncated data.

TaylorActivity fluctuation_sharp(const TaylorActivity& k, const Kernel& gamma,
                                 const ExternalFieldSpec& field) {
  TaylorActivity out = k;
  const int d = k.d;

  // gradient-gradient covariance over signed direction pairs at x = 0
  std::vector<double> gcov(static_cast<std::size_t>(2 * d + 1) * (2 * d + 1), 0.0);
  auto gc = [&](int mu, int nu) -> double& {
    return gcov[static_cast<std::size_t>(mu + d) * (2 * d + 1) + (nu + d)];
  };
  for (int mu = -d; mu <= d; ++mu) {
    if (mu == 0) continue;
    for (int nu = -d; nu <= d; ++nu) {
      if (nu == 0) continue;
      gc(mu, nu) = gradient_covariance(gamma, mu, nu);
    }
  }

  // v# = v + (1/8) sum_{mu nu} Q_{mu nu} gamma_{mu nu}
  for (auto& [shape, e] : out.bulk) {
    double contraction = 0.0;
    for (int mu = -d; mu <= d; ++mu) {
      if (mu == 0) continue;
      for (int nu = -d; nu <= d; ++nu) {
        if (nu == 0) continue;
        const double qs = e.q.signed_at(mu, nu);
        if (qs != 0.0) contraction += qs * gc(mu, nu);
      }
    }
    e.v += 0.125 * contraction;
  }

  // f channel: within-entry pairings of the linear data
  if (!out.fchannel.empty() && field.variant != FieldVariant::none) {
    const int m = k.m;
    for (auto& [key, fe] : out.fchannel) {
      for (int p = 0; p < m; ++p) {
        if (fe.g[p].is_zero()) continue;
        for (int q = p + 1; q < m; ++q) {
          if (fe.g[q].is_zero()) continue;
          std::vector<int> dx(d);
          for (int a = 0; a < d; ++a) {
            dx[a] = static_cast<int>(field.points[p][a] - field.points[q][a]);
          }
          const double cov =
              gradient_covariance_at(gamma, field.dirs[p], field.dirs[q], dx);
          if (cov == 0.0) continue;
          fe.dv += fe.g[p] * fe.g[q] * cov;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Extraction.

double extract_beta(const TaylorActivity& k_sharp) {
  double beta = 0.0;
  for (const auto& [shape, e] : k_sharp.bulk) beta -= e.v;
  return beta;
}

Extraction extract_alpha(const TaylorActivity& k_sharp) {
  Extraction ex;
  ex.alpha.d = k_sharp.d;
  const double block = std::pow(static_cast<double>(k_sharp.L),
                                static_cast<double>(k_sharp.d) * k_sharp.j);
  for (const auto& [shape, e] : k_sharp.bulk) {
    for (int a = 0; a < k_sharp.d; ++a) {
      for (int b = 0; b < k_sharp.d; ++b) {
        ex.alpha.at(a, b) -= 0.5 * e.q.at(a, b) / block;
      }
    }
  }
  double diag = 0.0;
  for (int a = 0; a < k_sharp.d; ++a) diag += ex.alpha.at(a, a);
  ex.alpha_scalar = 2.0 * diag / k_sharp.d;
  for (int a = 0; a < k_sharp.d; ++a) {
    for (int b = 0; b < k_sharp.d; ++b) {
      const double fit = a == b ? 0.5 * ex.alpha_scalar : 0.0;
      ex.sym_residual = std::max(ex.sym_residual, std::abs(ex.alpha.at(a, b) - fit));
    }
  }
  return ex;
}

Extraction extract(const TaylorActivity& k_sharp) {
  Extraction ex = extract_alpha(k_sharp);
  ex.beta_bulk = extract_beta(k_sharp);
  for (const auto& [key, fe] : k_sharp.fchannel) {
    if (fe.dv.is_zero()) continue;
    const double inv = 1.0 / key.shape.size();
    for (const auto& rel : key.shape.blocks) {
      BlockCoord b = rel;
      for (int a = 0; a < k_sharp.d; ++a) b[a] += key.anchor[a];
      auto [it, fresh] =
          ex.f_beta.emplace(b, MultilinearPoly::zero(k_sharp.m));
      it->second += fe.dv * (-inv);
    }
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Reblocking with second-order product terms.

namespace {

struct ReblockContext {
  const TaylorActivity& ks;
  const RangeDecomposition& rd;
  const Kernel& gamma;
  const ExternalFieldSpec& field;
  const FlowOptions& opts;
  double bulk_energy_next;  // E+ per (j+1)-block (bulk part)
};

Polymer to_polymer(const std::vector<BlockCoord>& blocks, int d, int j) {
  Polymer p;
  p.d = d;
  p.j = j;
  p.blocks = blocks;
  p.normalize();
  return p;
}

bool blocks_disjoint(const std::vector<BlockCoord>& a, const std::vector<BlockCoord>& b) {
  for (const auto& x : a) {
    for (const auto& y : b) {
      if (x == y) return false;
    }
  }
  return true;
}

// closure of a union at the next scale; empty optional-equivalent when the
// result is not a small set
bool close_small(const std::vector<BlockCoord>& blocks, int d, int j, int L,
                 Adjacency adj, Polymer& out) {
  out = closure(to_polymer(blocks, d, j), L);
  return is_small(out, adj);
}

}  // namespace

static TaylorActivity reblock(const ReblockContext& ctx) {
  const TaylorActivity& ks = ctx.ks;
  const int d = ks.d, L = ks.L, j = ks.j, m = ks.m;
  const Adjacency adj = ks.adj;
  TaylorActivity out;
  out.d = d;
  out.L = L;
  out.j = j + 1;
  out.m = m;
  out.adj = adj;

  // Single entries: the extraction removes exactly the tracked Taylor data of
  // the bulk channel ((I-T2) remainders carry none) and the value of the f
  // channel ((I-T0) keeps the linear data), so only f-linear data survives.
  for (const auto& [key, fe] : ks.fchannel) {
    bool keep = false;
    for (const auto& g : fe.g) keep = keep || !g.is_zero(ctx.opts.value_floor);
    if (!keep) continue;
    std::vector<BlockCoord> abs_blocks = key.shape.blocks;
    for (auto& b : abs_blocks) {
      for (int a = 0; a < d; ++a) b[a] += key.anchor[a];
    }
    Polymer cl;
    if (!close_small(abs_blocks, d, j, L, adj, cl)) {
      throw Error("reblock: closure of an f-entry is not small");
    }
    auto [shape, anchor] = canonicalize(cl.blocks, d);
    AbsKey nk{shape, anchor};
    auto [it, fresh] = out.fchannel.emplace(nk, FEntry{MultilinearPoly::zero(m),
                                                       std::vector<MultilinearPoly>(
                                                           m, MultilinearPoly::zero(m))});
    for (int p = 0; p < m; ++p) it->second.g[p] += fe.g[p];
  }

  const int cap = ctx.opts.pair_block_cap;
  const auto pair_window = [L](int s1, int s2) {
    return s1 == 1 && s2 == 1 ? (3 * L) / 2 + 1 : L * (s1 + s2 + 3);
  };

  // bulk x bulk products (unordered pairs counted via the 1/2 factor).  The
  // pair configuration is relative; every alignment of the pair against the
  // coarse grid produces its own target, so the grid offsets are enumerated
  // explicitly.
  for (const auto& [s1, e1] : ks.bulk) {
    if (s1.size() > cap) continue;
    const double m1 = std::max(std::abs(e1.v), e1.q.max_abs());
    for (const auto& [s2, e2] : ks.bulk) {
      if (s2.size() > cap) continue;
      const double m2 = std::max(std::abs(e2.v), e2.q.max_abs());
      if (m1 * m2 < ctx.opts.value_floor) continue;
      const int window = pair_window(s1.size(), s2.size());
      std::vector<int> t(d, -window);
      std::vector<BlockCoord> uni, x1, x2;
      while (true) {
        bool any_disjoint = false;
        {
          std::vector<BlockCoord> probe = s2.blocks;
          for (auto& b : probe) {
            for (int a = 0; a < d; ++a) b[a] += t[a];
          }
          any_disjoint = blocks_disjoint(s1.blocks, probe);
        }
        if (any_disjoint) {
          std::vector<int> delta(d, 0);
          while (true) {
            x1 = s1.blocks;
            x2 = s2.blocks;
            for (auto& b : x1) {
              for (int a = 0; a < d; ++a) b[a] += delta[a];
            }
            for (auto& b : x2) {
              for (int a = 0; a < d; ++a) b[a] += delta[a] + t[a];
            }
            uni = x1;
            uni.insert(uni.end(), x2.begin(), x2.end());
            Polymer cl;
            if (close_small(uni, d, j, L, adj, cl)) {
              auto [shape, anchor] = canonicalize(cl.blocks, d);
              BulkEntry& ne = out.bulk[shape];
              ne.q.d = d;
              ne.v += 0.5 * e1.v * e2.v;
              for (int a = 0; a < d; ++a) {
                for (int b = 0; b < d; ++b) {
                  ne.q.at(a, b) += 0.5 * (e1.v * e2.q.at(a, b) + e1.q.at(a, b) * e2.v);
                }
              }
            }
            int axis = d - 1;
            while (axis >= 0 && delta[axis] == L - 1) delta[axis--] = 0;
            if (axis < 0) break;
            ++delta[axis];
          }
        }
        int axis = d - 1;
        while (axis >= 0 && t[axis] == window) t[axis--] = -window;
        if (axis < 0) break;
        ++t[axis];
      }
    }
  }

  // f x bulk and f x f products
  if (!ks.fchannel.empty()) {
    std::vector<std::pair<AbsKey, FEntry>> fentries(ks.fchannel.begin(),
                                                    ks.fchannel.end());
    auto absolute = [&](const AbsKey& key) {
      std::vector<BlockCoord> blocks = key.shape.blocks;
      for (auto& b : blocks) {
        for (int a = 0; a < d; ++a) b[a] += key.anchor[a];
      }
      return blocks;
    };

    for (const auto& [key, fe] : fentries) {
      if (key.shape.size() > cap) continue;
      const std::vector<BlockCoord> xf = absolute(key);
      for (const auto& [s2, e2] : ks.bulk) {
        if (s2.size() > cap) continue;
        if (std::abs(e2.v) < 1e-300) continue;
        const int window = pair_window(key.shape.size(), s2.size());
        std::vector<int> t(d, -window);
        while (true) {
          std::vector<BlockCoord> x2 = s2.blocks;
          for (auto& b : x2) {
            for (int a = 0; a < d; ++a) b[a] += key.anchor[a] + t[a];
          }
          if (blocks_disjoint(xf, x2)) {
            std::vector<BlockCoord> uni = xf;
            uni.insert(uni.end(), x2.begin(), x2.end());
            Polymer cl;
            if (close_small(uni, d, j, L, adj, cl)) {
              auto [shape, anchor] = canonicalize(cl.blocks, d);
              AbsKey nk{shape, anchor};
              auto [it, fresh] = out.fchannel.emplace(
                  nk, FEntry{MultilinearPoly::zero(m),
                             std::vector<MultilinearPoly>(m, MultilinearPoly::zero(m))});
              it->second.dv += fe.dv * e2.v;
              for (int p = 0; p < m; ++p) it->second.g[p] += fe.g[p] * e2.v;
            }
          }
          int axis = d - 1;
          while (axis >= 0 && t[axis] == window) t[axis--] = -window;
          if (axis < 0) break;
          ++t[axis];
        }
      }
    }

    for (std::size_t i = 0; i < fentries.size(); ++i) {
      for (std::size_t l = i + 1; l < fentries.size(); ++l) {
        const auto& [k1, f1] = fentries[i];
        const auto& [k2, f2] = fentries[l];
        const std::vector<BlockCoord> x1 = absolute(k1), x2 = absolute(k2);
        if (!blocks_disjoint(x1, x2)) continue;
        std::vector<BlockCoord> uni = x1;
        uni.insert(uni.end(), x2.begin(), x2.end());
        Polymer cl;
        if (!close_small(uni, d, j, L, adj, cl)) continue;
        auto [shape, anchor] = canonicalize(cl.blocks, d);
        AbsKey nk{shape, anchor};
        auto [it, fresh] = out.fchannel.emplace(
            nk, FEntry{MultilinearPoly::zero(m),
                       std::vector<MultilinearPoly>(m, MultilinearPoly::zero(m))});
        FEntry& ne = it->second;
        ne.dv += f1.dv * f2.dv;
        for (int p = 0; p < m; ++p) {
          ne.g[p] += f1.g[p] * f2.dv;
          ne.g[p] += f2.g[p] * f1.dv;
        }
        // cross pairings under the fluctuation covariance
        for (int p = 0; p < m; ++p) {
          if (f1.g[p].is_zero()) continue;
          for (int q = 0; q < m; ++q) {
            if (q == p || f2.g[q].is_zero()) continue;
            std::vector<int> dx(d);
            for (int a = 0; a < d; ++a) {
              dx[a] = static_cast<int>(ctx.field.points[p][a] - ctx.field.points[q][a]);
            }
            const double cov =
                gradient_covariance_at(ctx.gamma, ctx.field.dirs[p], ctx.field.dirs[q], dx);
            if (cov != 0.0) ne.dv += f1.g[p] * f2.g[q] * cov;
          }
        }
      }
    }
  }

  // The energy re-exponentiation of K+ is omitted: it is second order in the
  // tracked data, and with range-capped polynomial covariances the per-block
  // trace energy grows with the scale, which would amplify that imperfection
  // into spurious blowup.  The extracted energies are reported instead.

  // value floor
  for (auto it = out.bulk.begin(); it != out.bulk.end();) {
    if (std::abs(it->second.v) < ctx.opts.value_floor &&
        it->second.q.max_abs() < ctx.opts.value_floor) {
      it = out.bulk.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = out.fchannel.begin(); it != out.fchannel.end();) {
    bool keep = !it->second.dv.is_zero(ctx.opts.value_floor);
    for (const auto& g : it->second.g) keep = keep || !g.is_zero(ctx.opts.value_floor);
    if (!keep) {
      it = out.fchannel.erase(it);
    } else {
      if (ctx.field.variant != FieldVariant::none &&
          !entry_supported(
              [&] {
                std::vector<BlockCoord> abs_blocks = it->first.shape.blocks;
                for (auto& b : abs_blocks) {
                  for (int a = 0; a < d; ++a) b[a] += it->first.anchor[a];
                }
                return abs_blocks;
              }(),
              d, adj, ctx.field, j + 1, L)) {
        throw Error("reblock: f-channel support escaped the source points");
      }
      ++it;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Step and flow.

FlowState step(const FlowState& state, const RangeDecomposition& rd,
               const ExternalFieldSpec& field, const FlowOptions& opts) {
  const TaylorActivity& k = state.k;
  const int d = k.d, L = k.L, j = k.j;

  // covariance table radius: enough for the within-entry pairings
  int maxsep = 0;
  for (std::size_t p = 0; p < field.points.size(); ++p) {
    for (std::size_t q = p + 1; q < field.points.size(); ++q) {
      for (int a = 0; a < d; ++a) {
        maxsep = std::max<int>(
            maxsep, static_cast<int>(std::abs(field.points[p][a] - field.points[q][a])));
      }
    }
  }
  const double range = 0.5 * std::pow(static_cast<double>(L), j + 1);
  const int radius =
      std::min<int>(maxsep + 2, static_cast<int>(std::ceil(range)) + 1);
  const Kernel gamma = rd.gamma_values(j + 1, std::max(2, radius), opts.threads);

  const TaylorActivity k_sharp = fluctuation_sharp(k, gamma, field);
  const Extraction ex = extract(k_sharp);

  FlowState next;
  next.j = j + 1;
  next.sigma = state.sigma + ex.alpha_scalar;

  const double block_count = std::pow(static_cast<double>(L), d);
  const double e_per_jblock = trace_term(gamma, L, j, state.sigma) + ex.beta_bulk;
  next.bulk_energy_per_block = block_count * e_per_jblock;

  // f-channel energies per (j+1)-block
  for (const auto& [b, poly] : ex.f_beta) {
    Polymer cl = closure(to_polymer({b}, d, j), L);
    const BlockCoord bp = cl.blocks[0];
    auto [it, fresh] = next.f_energy.emplace(bp, MultilinearPoly::zero(k.m));
    it->second += poly;
  }

  ReblockContext ctx{k_sharp, rd, gamma, field, opts, next.bulk_energy_per_block};
  next.k = reblock(ctx);
  return next;
}

Trajectory run_flow(double z, double sigma0, const ExternalFieldSpec& field,
                    const RangeDecomposition& rd, int J, const FlowOptions& opts) {
  if (J > rd.J) throw Error("run_flow: decomposition not built to the requested scale");
  field.validate(rd.d);
  Trajectory traj;
  const ProbeBattery battery = ProbeBattery::make(rd.d, opts.h, opts.probe_seed);

  FlowState st;
  st.j = 0;
  st.sigma = sigma0;
  st.k = init_mayer(z, sigma0, field, rd.d, rd.L, opts.adj, opts);
  st.norm_k = activity_norm(st.k, battery, opts.A, field);
  traj.states.push_back(st);

  for (int j = 0; j < J; ++j) {
    FlowState next = step(traj.states.back(), rd, field, opts);
    next.norm_k = activity_norm(next.k, battery, opts.A, field);
    if (!std::isfinite(next.norm_k) || next.norm_k > opts.norm_blowup ||
        !std::isfinite(next.sigma)) {
      traj.status = RunStatus::divergence;
      traj.states.push_back(next);
      return traj;
    }
    const double prev = traj.states.back().norm_k;
    traj.ratios.push_back(prev > 0 ? next.norm_k / prev : 0.0);
    traj.states.push_back(next);
  }

  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    const double bound = opts.r * std::pow(0.5, static_cast<double>(i));
    if (traj.states[i].norm_k > bound || std::abs(traj.states[i].sigma) > bound) {
      traj.geometric_ok = false;
    }
  }
  return traj;
}

ShootingResult stable_sigma(double z, const ExternalFieldSpec& field,
                            const RangeDecomposition& rd, int J, double tol,
                            const FlowOptions& opts) {
  ShootingResult out;
  auto final_sigma = [&](double s0) {
    const Trajectory t = run_flow(z, s0, field, rd, J, opts);
    ++out.evaluations;
    if (t.status == RunStatus::divergence) {
      throw Error("stable_sigma: flow diverged during shooting");
    }
    return t.states.back().sigma;
  };

  if (z == 0.0) {
    // exact fixed point: the activity is identically zero and sigma is inert
    const double f0 = final_sigma(0.0);
    if (f0 != 0.0) throw Error("stable_sigma: origin is not a fixed point");
    out.sigma0 = 0.0;
    out.final_sigma = 0.0;
    return out;
  }

  double b = std::max(8.0 * std::abs(z), 1e-3);
  double lo = -b, hi = b;
  double flo = final_sigma(lo), fhi = final_sigma(hi);
  int expand = 0;
  while (flo * fhi > 0.0 && expand < 40) {
    lo *= 2.0;
    hi *= 2.0;
    flo = final_sigma(lo);
    fhi = final_sigma(hi);
    ++expand;
  }
  if (flo * fhi > 0.0) {
    out.status = RunStatus::unreliable;
    throw Error("stable_sigma: no sign change in the shooting bracket");
  }
  double mid = 0.0, fmid = 0.0;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    fmid = final_sigma(mid);
    if (std::abs(fmid) <= tol || hi - lo < 1e-16) break;
    if (flo * fmid <= 0.0) {
      hi = mid;
      fhi = fmid;
    } else {
      lo = mid;
      flo = fmid;
    }
  }
  out.sigma0 = mid;
  out.final_sigma = fmid;
  return out;
}

FFSeries accumulate_fF(const Trajectory& traj, const ExternalFieldSpec& field, int L,
                       Adjacency adj) {
  if (field.m() < 2) throw Error("accumulate_fF: need m >= 2 source points");
  FFSeries out;
  const int m = field.m();
  std::complex<double> i_pow_m(1.0, 0.0);
  for (int i = 0; i < m; ++i) i_pow_m *= std::complex<double>(0.0, 1.0);

  const int d = traj.states.empty() ? 3 : traj.states.front().k.d;
  out.j0 = min_covering_scale(field.points, d, L, adj).j0;

  out.total = 0.0;
  for (std::size_t s = 1; s < traj.states.size(); ++s) {
    std::complex<double> coeff = 0.0;
    for (const auto& [b, poly] : traj.states[s].f_energy) coeff += poly.full_mask();
    // log Z accumulates -sum E; G^t = i^m d^m log Z
    const std::complex<double> contrib = i_pow_m * (-coeff);
    out.per_scale.push_back(contrib);
    out.total += contrib;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Probe battery and the empirical norm.

ProbeBattery ProbeBattery::make(int d, double h, std::uint64_t seed) {
  ProbeBattery b;
  b.d = d;
  b.h = h;
  b.probes.push_back(Probe{});  // zero field
  for (int a = 0; a < d; ++a) {
    for (const double s : {1.0, -1.0}) {
      Probe p;
      p.slope.assign(d, 0.0);
      p.slope[a] = s;  // rescaled per scale in activity_norm
      b.probes.push_back(p);
    }
  }
  Rng rng(seed);
  for (int w = 0; w < 2 * d; ++w) {
    Probe p;
    p.amp = 1.0;
    p.wavevec.assign(d, 0.0);
    for (int a = 0; a < d; ++a) {
      p.wavevec[a] = (0.25 + 0.75 * rng.uniform()) * M_PI * (rng.uniform() < 0.5 ? -1 : 1);
    }
    p.phase = 2.0 * M_PI * rng.uniform();
    b.probes.push_back(p);
  }
  return b;
}

namespace {

struct ScaledProbe {
  std::vector<double> slope;
  double amp = 0.0;
  std::vector<double> wavevec;
  double phase = 0.0;
  double phi_norm = 0.0;  // Phi_j norm (surrogate bound)

  double value_at(const std::vector<double>& site) const {
    double v = 0.0;
    if (!slope.empty()) {
      for (std::size_t a = 0; a < slope.size(); ++a) v += slope[a] * site[a];
    }
    if (amp != 0.0) {
      double ph = phase;
      for (std::size_t a = 0; a < wavevec.size(); ++a) ph += wavevec[a] * site[a];
      v += amp * std::sin(ph);
    }
    return v;
  }

  // lattice derivative along signed mu at a site
  double derivative_at(std::vector<double> site, int mu) const {
    const int a = std::abs(mu) - 1;
    const double s = mu > 0 ? 1.0 : -1.0;
    const double v0 = value_at(site);
    site[a] += s;
    return value_at(site) - v0;
  }
};

// Phi_j norm h^{-1} max_{1<=|alpha|<=3} L^{j(d-2)/2 + j|alpha|} |d^alpha phi|,
// with |d^alpha phi| bounded analytically per probe shape.
ScaledProbe scale_probe(const Probe& p, int d, int j, int L, double h) {
  ScaledProbe sp;
  const double lj = std::pow(static_cast<double>(L), j);
  const double base = std::pow(lj, 0.5 * (d - 2));
  if (!p.slope.empty()) {
    // only |alpha| = 1 derivatives are nonzero; norm = h^{-1} base L^j |slope|
    double smax = 0.0;
    for (const double s : p.slope) smax = std::max(smax, std::abs(s));
    const double raw = base * lj * smax / h;
    sp.slope = p.slope;
    if (raw > 0) {
      for (auto& s : sp.slope) s /= raw;  // unit Phi_j norm
    }
    sp.phi_norm = smax > 0 ? 1.0 : 0.0;
    return sp;
  }
  if (p.amp != 0.0) {
    double wmax = 0.0;
    for (const double k : p.wavevec) wmax = std::max(wmax, std::abs(2.0 * std::sin(k / 2.0)));
    double raw = 0.0;
    for (int order = 1; order <= 3; ++order) {
      raw = std::max(raw, base * std::pow(lj * wmax, order) / h);
    }
    sp.amp = raw > 0 ? p.amp / raw : 0.0;
    sp.wavevec = p.wavevec;
    sp.phase = p.phase;
    sp.phi_norm = raw > 0 ? 1.0 : 0.0;
    return sp;
  }
  sp.phi_norm = 0.0;  // zero field
  return sp;
}

}  // namespace

double activity_norm(const TaylorActivity& k, const ProbeBattery& battery, double A,
                     const ExternalFieldSpec& field) {
  const int d = k.d;
  std::vector<ScaledProbe> probes;
  probes.reserve(battery.probes.size());
  for (const auto& p : battery.probes) {
    probes.push_back(scale_probe(p, d, k.j, k.L, battery.h));
  }
  const double lj = std::pow(static_cast<double>(k.L), k.j);

  double norm = 0.0;
  for (const auto& [shape, e] : k.bulk) {
    const double weight = std::pow(A, shape.size());
    for (const auto& sp : probes) {
      // gradient at the anchor block's center
      std::vector<double> site(d, 0.0);
      double quad = 0.0;
      std::vector<double> g(2 * d + 1, 0.0);
      for (int mu = -d; mu <= d; ++mu) {
        if (mu == 0) continue;
        g[mu + d] = sp.derivative_at(site, mu);
      }
      for (int mu = -d; mu <= d; ++mu) {
        if (mu == 0) continue;
        for (int nu = -d; nu <= d; ++nu) {
          if (nu == 0) continue;
          quad += e.q.signed_at(mu, nu) * g[mu + d] * g[nu + d];
        }
      }
      const double val = std::abs(e.v + 0.125 * quad);
      norm = std::max(norm, weight * val * std::exp(-sp.phi_norm * sp.phi_norm));
    }
  }
  const double a = field.t_radius;
  for (const auto& [key, fe] : k.fchannel) {
    const double weight = std::pow(A, key.shape.size());
    auto poly_bound = [&](const MultilinearPoly& p) {
      double acc = 0.0;
      for (int mask = 0; mask < (1 << p.m); ++mask) {
        acc += std::abs(p.c[mask]) * std::pow(a, __builtin_popcount(mask));
      }
      return acc;
    };
    for (const auto& sp : probes) {
      double val = poly_bound(fe.dv);
      for (int p = 0; p < k.m; ++p) {
        if (fe.g[p].is_zero()) continue;
        std::vector<double> site(d);
        for (int axx = 0; axx < d; ++axx) {
          site[axx] = static_cast<double>(field.points[p][axx]);
        }
        val += poly_bound(fe.g[p]) * std::abs(sp.derivative_at(site, field.dirs[p]));
      }
      norm = std::max(norm, weight * val * std::exp(-sp.phi_norm * sp.phi_norm));
    }
  }
  (void)lj;
  return norm;
}

}  // namespace dipolerg
