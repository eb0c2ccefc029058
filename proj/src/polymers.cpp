#include "dipolerg/polymers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_set>

namespace dipolerg {

namespace {

std::int64_t floordiv(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

// Nearest block-grid multiple (blocks are centered on multiples of side).
std::int64_t balanced_round(std::int64_t x, std::int64_t side) {
  return floordiv(x + (side - 1) / 2, side);
}

}  // namespace

bool blocks_adjacent(int d, const BlockCoord& a, const BlockCoord& b, Adjacency adj) {
  int l1 = 0, linf = 0;
  for (int i = 0; i < d; ++i) {
    const int diff = std::abs(a[i] - b[i]);
    l1 += diff;
    linf = std::max(linf, diff);
  }
  if (l1 == 0) return false;
  return adj == Adjacency::sup ? linf <= 1 : l1 <= 1;
}

void Polymer::normalize() {
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
}

bool Polymer::contains(const BlockCoord& b) const {
  return std::binary_search(blocks.begin(), blocks.end(), b);
}

std::vector<Polymer> connected_components(const Polymer& x, Adjacency adj) {
  const int n = x.size();
  std::vector<int> comp(n, -1);
  std::vector<Polymer> out;
  for (int start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(out.size());
    std::vector<int> stack{start};
    comp[start] = id;
    Polymer c;
    c.d = x.d;
    c.j = x.j;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      c.blocks.push_back(x.blocks[u]);
      for (int v = 0; v < n; ++v) {
        if (comp[v] < 0 && blocks_adjacent(x.d, x.blocks[u], x.blocks[v], adj)) {
          comp[v] = id;
          stack.push_back(v);
        }
      }
    }
    c.normalize();
    out.push_back(std::move(c));
  }
  return out;
}

bool is_connected(const Polymer& x, Adjacency adj) {
  return x.size() <= 1 || connected_components(x, adj).size() == 1;
}

bool is_small(const Polymer& x, Adjacency adj) {
  return x.size() <= (1 << x.d) && is_connected(x, adj);
}

Polymer closure(const Polymer& x, int L) {
  Polymer out;
  out.d = x.d;
  out.j = x.j + 1;
  out.blocks.reserve(x.blocks.size());
  for (const auto& b : x.blocks) {
    BlockCoord c{};
    for (int i = 0; i < x.d; ++i) {
      c[i] = static_cast<std::int32_t>(balanced_round(b[i], L));
    }
    out.blocks.push_back(c);
  }
  out.normalize();
  return out;
}

BlockCoord site_to_block(const std::vector<std::int64_t>& site, int d,
                         std::int64_t block_side) {
  BlockCoord b{};
  for (int i = 0; i < d; ++i) {
    b[i] = static_cast<std::int32_t>(balanced_round(site[i], block_side));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Connected-set enumeration (Redelmeier scheme): every connected superset of
// the anchor with at most size_cap blocks is visited exactly once.  The
// untried set is an intrusive linked list over cell ids; a level consumes its
// list front-to-back, each processed cell stays banned for the rest of that
// level, and pushes are spliced at the child's head and unwound on return.

namespace {

struct Enumerator {
  int d;
  int size_cap;
  std::uint64_t budget;
  int side = 0;
  int radius = 0;
  int cells = 1;
  int origin = 0;
  int max_nbr = 0;
  std::vector<std::int32_t> nbr;  // [cell * max_nbr + k], -1 terminated
  std::vector<std::uint8_t> occupied;
  std::vector<std::uint8_t> inlist;
  std::vector<std::int32_t> next;  // linked untried list, -1 = end
  std::vector<std::int32_t> current;
  std::vector<std::uint64_t> cnt;
  std::uint64_t nodes = 0;
  const std::function<void(const std::vector<BlockCoord>&)>* visit = nullptr;
  std::vector<BlockCoord> scratch;

  Enumerator(int d_, Adjacency adj, int cap, std::uint64_t budget_)
      : d(d_), size_cap(cap), budget(budget_) {
    radius = size_cap > 1 ? size_cap - 1 : 1;
    side = 2 * radius + 1;
    for (int i = 0; i < d; ++i) cells *= side;
    origin = 0;
    for (int i = 0; i < d; ++i) origin = origin * side + radius;

    std::vector<std::array<int, kMaxDim>> offsets;
    if (adj == Adjacency::sup) {
      std::array<int, kMaxDim> off{};
      std::function<void(int)> gen = [&](int axis) {
        if (axis == d) {
          bool zero = true;
          for (int i = 0; i < d; ++i) zero = zero && off[i] == 0;
          if (!zero) offsets.push_back(off);
          return;
        }
        for (int v = -1; v <= 1; ++v) {
          off[axis] = v;
          gen(axis + 1);
        }
        off[axis] = 0;
      };
      gen(0);
    } else {
      for (int a = 0; a < d; ++a) {
        std::array<int, kMaxDim> off{};
        off[a] = 1;
        offsets.push_back(off);
        off[a] = -1;
        offsets.push_back(off);
      }
    }
    max_nbr = static_cast<int>(offsets.size());

    nbr.assign(static_cast<std::size_t>(cells) * max_nbr, -1);
    std::vector<int> coord(d);
    for (int c = 0; c < cells; ++c) {
      int t = c;
      for (int i = d - 1; i >= 0; --i) {
        coord[i] = t % side;
        t /= side;
      }
      int k = 0;
      for (const auto& off : offsets) {
        bool ok = true;
        int idx = 0;
        for (int i = 0; i < d; ++i) {
          const int v = coord[i] + off[i];
          if (v < 0 || v >= side) {
            ok = false;
            break;
          }
          idx = idx * side + v;
        }
        if (ok) nbr[static_cast<std::size_t>(c) * max_nbr + k++] = idx;
      }
    }

    occupied.assign(cells, 0);
    inlist.assign(cells, 0);
    next.assign(cells, -1);
    cnt.assign(size_cap, 0);
  }

  BlockCoord decode(int cell) const {
    BlockCoord b{};
    for (int i = d - 1; i >= 0; --i) {
      b[i] = static_cast<std::int32_t>(cell % side - radius);
      cell /= side;
    }
    return b;
  }

  void emit(int size) {
    ++cnt[size - 1];
    if (visit) {
      scratch.clear();
      for (const int c : current) scratch.push_back(decode(c));
      std::sort(scratch.begin(), scratch.end());
      (*visit)(scratch);
    }
  }

  void rec(int head, int size) {
    std::array<std::int32_t, 3 * 3 * 3 * 3 * 3 * 3> pushed;  // 3^kMaxDim bound
    for (int c = head; c >= 0; c = next[c]) {
      if (++nodes > budget) {
        std::uint64_t total = 0;
        for (const auto v : cnt) total += v;
        throw BudgetExceededError("small-set enumeration budget exceeded", total);
      }
      occupied[c] = 1;
      current.push_back(c);
      emit(size + 1);
      if (size + 1 < size_cap) {
        int child_head = next[c];
        int npush = 0;
        const std::int32_t* nb = &nbr[static_cast<std::size_t>(c) * max_nbr];
        for (int k = 0; k < max_nbr && nb[k] >= 0; ++k) {
          const int n = nb[k];
          if (!occupied[n] && !inlist[n]) {
            inlist[n] = 1;
            next[n] = child_head;
            child_head = n;
            pushed[npush++] = n;
          }
        }
        rec(child_head, size + 1);
        for (int k = 0; k < npush; ++k) inlist[pushed[k]] = 0;
      }
      occupied[c] = 0;
      current.pop_back();
      // c stays inlist=1: banned for the remainder of this level; the level
      // that pushed c clears the flag.
    }
  }

  void run() {
    occupied[origin] = 1;
    inlist[origin] = 1;
    current.push_back(origin);
    emit(1);
    if (size_cap > 1) {
      int head = -1;
      const std::int32_t* nb = &nbr[static_cast<std::size_t>(origin) * max_nbr];
      for (int k = 0; k < max_nbr && nb[k] >= 0; ++k) {
        inlist[nb[k]] = 1;
        next[nb[k]] = head;
        head = nb[k];
      }
      rec(head, 1);
    }
  }
};

}  // namespace

std::vector<std::uint64_t> small_set_counts(int d, Adjacency adj,
                                            const EnumerationBudget& budget,
                                            int size_cap) {
  if (d < 1 || d > kMaxDim) throw UnsupportedDimensionError("small_set_counts: bad d");
  const int cap = size_cap > 0 ? size_cap : (1 << d);
  Enumerator e(d, adj, cap, budget.max_nodes);
  e.run();
  return e.cnt;
}

void for_each_small_set(const BlockCoord& anchor, int d, Adjacency adj, int size_cap,
                        const EnumerationBudget& budget,
                        const std::function<void(const std::vector<BlockCoord>&)>& visit) {
  const int cap = size_cap > 0 ? size_cap : (1 << d);
  Enumerator e(d, adj, cap, budget.max_nodes);
  std::function<void(const std::vector<BlockCoord>&)> shifted =
      [&](const std::vector<BlockCoord>& rel) {
        std::vector<BlockCoord> abs(rel.size());
        for (std::size_t i = 0; i < rel.size(); ++i) {
          abs[i] = rel[i];
          for (int a = 0; a < d; ++a) abs[i][a] += anchor[a];
        }
        visit(abs);
      };
  e.visit = &shifted;
  e.run();
}

std::vector<Polymer> small_sets_containing(const BlockCoord& anchor, int d, int j,
                                           Adjacency adj, const EnumerationBudget& budget,
                                           int size_cap) {
  std::vector<Polymer> out;
  for_each_small_set(anchor, d, adj, size_cap, budget,
                     [&](const std::vector<BlockCoord>& blocks) {
                       Polymer p;
                       p.d = d;
                       p.j = j;
                       p.blocks = blocks;
                       out.push_back(std::move(p));
                     });
  return out;
}

double NConstants::n3(double l) const {
  if (l < 1.0) throw Error("n3: l must be >= 1");
  double acc = 0.0;
  for (std::size_t s = 1; s <= counts_by_size.size(); ++s) {
    acc += static_cast<double>(counts_by_size[s - 1]) * std::pow(l, -static_cast<double>(s)) /
           static_cast<double>(s);
  }
  return acc;
}

NConstants n_constants(int d, Adjacency adj, int j, const EnumerationBudget& budget) {
  (void)j;  // block-coordinate combinatorics are identical at every scale
  NConstants out;
  out.counts_by_size = small_set_counts(d, adj, budget);
  for (std::size_t s = 1; s <= out.counts_by_size.size(); ++s) {
    out.n2 += static_cast<double>(out.counts_by_size[s - 1]);
    out.n1 += static_cast<double>(out.counts_by_size[s - 1]) / static_cast<double>(s);
  }
  return out;
}

namespace {

// Full d=3 sup-norm census (sizes 1..8), computed once with this enumerator
// (1.47e10 sets, ~100 s); the default node budget cannot cover a live run.
constexpr std::uint64_t kPinnedSup3Counts[8] = {
    1, 26, 711, 19980, 571095, 16522686, 482379065, 14182198176ull};
constexpr bool kHavePinnedSup3 = true;

}  // namespace

NConstants n_constants_cached(int d, Adjacency adj, bool force_live,
                              const EnumerationBudget& budget) {
  if (!force_live && d == 3 && adj == Adjacency::sup && kHavePinnedSup3) {
    NConstants out;
    out.counts_by_size.assign(std::begin(kPinnedSup3Counts), std::end(kPinnedSup3Counts));
    for (std::size_t s = 1; s <= out.counts_by_size.size(); ++s) {
      out.n2 += static_cast<double>(out.counts_by_size[s - 1]);
      out.n1 += static_cast<double>(out.counts_by_size[s - 1]) / static_cast<double>(s);
    }
    return out;
  }
  return n_constants(d, adj, 0, budget);
}

std::vector<BlockCoord> star_blocks(const BlockCoord& b, int d, Adjacency adj) {
  const int R = (1 << d) - 1;
  std::vector<BlockCoord> out;
  std::vector<int> off(d, -R);
  while (true) {
    int l1 = 0;
    for (int i = 0; i < d; ++i) l1 += std::abs(off[i]);
    if (adj == Adjacency::sup || l1 <= R) {
      BlockCoord c = b;
      for (int i = 0; i < d; ++i) c[i] += off[i];
      out.push_back(c);
    }
    int axis = d - 1;
    while (axis >= 0 && off[axis] == R) off[axis--] = -R;
    if (axis < 0) break;
    ++off[axis];
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool star_covers(const BlockCoord& b, const std::vector<BlockCoord>& targets, int d,
                 Adjacency adj) {
  const int R = (1 << d) - 1;
  for (const auto& t : targets) {
    int l1 = 0, linf = 0;
    for (int i = 0; i < d; ++i) {
      const int diff = std::abs(t[i] - b[i]);
      l1 += diff;
      linf = std::max(linf, diff);
    }
    if (adj == Adjacency::sup ? linf > R : l1 > R) return false;
  }
  return true;
}

CoveringScale min_covering_scale(const std::vector<std::vector<std::int64_t>>& points,
                                 int d, int L, Adjacency adj) {
  if (points.size() < 2) throw Error("min_covering_scale: need at least two points");
  CoveringScale out;
  double diam2 = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t k = i + 1; k < points.size(); ++k) {
      double s = 0.0;
      for (int a = 0; a < d; ++a) {
        const double diff = static_cast<double>(points[i][a] - points[k][a]);
        s += diff * diff;
      }
      diam2 = std::max(diam2, s);
    }
  }
  out.diameter = std::sqrt(diam2);

  const int R = (1 << d) - 1;
  std::int64_t block_side = 1;
  for (int j = 0; j < 63; ++j) {
    std::vector<BlockCoord> bl(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      bl[i] = site_to_block(points[i], d, block_side);
    }
    bool covered = false;
    std::array<std::int64_t, kMaxDim> lo{}, hi{};
    bool feasible = true;
    for (int a = 0; a < d; ++a) {
      std::int32_t mn = bl[0][a], mx = bl[0][a];
      for (const auto& b : bl) {
        mn = std::min(mn, b[a]);
        mx = std::max(mx, b[a]);
      }
      lo[a] = mx - R;
      hi[a] = mn + R;
      if (lo[a] > hi[a]) feasible = false;
    }
    if (feasible) {
      if (adj == Adjacency::sup) {
        covered = true;  // axes are independent under sup-norm stars
      } else {
        std::vector<std::int64_t> anchor(d);
        std::function<bool(int)> search = [&](int axis) -> bool {
          if (axis == d) {
            BlockCoord b{};
            for (int a = 0; a < d; ++a) b[a] = static_cast<std::int32_t>(anchor[a]);
            return star_covers(b, bl, d, adj);
          }
          for (std::int64_t v = lo[axis]; v <= hi[axis]; ++v) {
            anchor[axis] = v;
            if (search(axis + 1)) return true;
          }
          return false;
        };
        covered = search(0);
      }
    }
    if (covered) {
      out.j0 = j;
      const double bound = static_cast<double>(d) * std::pow(2.0, d + 1) *
                           std::pow(static_cast<double>(L), j);
      out.diam_bound_ok = out.diameter <= bound;
      return out;
    }
    block_side *= L;
  }
  throw Error("min_covering_scale: no covering scale found");
}

}  // namespace dipolerg
