#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "dipolerg/common.hpp"

namespace dipolerg {

// Block connectivity convention.  The small-set combinatorics (and through
// them the n-constants and the contraction ledger) depend on it.  Default is
// sup-norm touching, corners included; face adjacency is available as a
// switch.
enum class Adjacency { sup, face };

// Coordinates of a j-block on the block grid (unused axes stay 0).
using BlockCoord = std::array<std::int32_t, kMaxDim>;

inline BlockCoord make_block(std::initializer_list<std::int32_t> c) {
  BlockCoord b{};
  int i = 0;
  for (auto v : c) b[i++] = v;
  return b;
}

struct BlockCoordHash {
  std::size_t operator()(const BlockCoord& b) const {
    std::uint64_t h = 1469598103934665603ull;
    for (int i = 0; i < kMaxDim; ++i) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(b[i]));
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

bool blocks_adjacent(int d, const BlockCoord& a, const BlockCoord& b, Adjacency adj);

// A finite union of j-blocks.
struct Polymer {
  int d = 1;
  int j = 0;
  std::vector<BlockCoord> blocks;  // kept sorted and deduplicated

  void normalize();
  int size() const { return static_cast<int>(blocks.size()); }
  bool contains(const BlockCoord& b) const;
};

std::vector<Polymer> connected_components(const Polymer& x, Adjacency adj);
bool is_connected(const Polymer& x, Adjacency adj);

// Small set: connected with at most 2^d blocks.
bool is_small(const Polymer& x, Adjacency adj);

// The smallest (j+1)-polymer containing x, under the odd-L nested block grid.
Polymer closure(const Polymer& x, int L);

// Block of scale j containing a site (balanced rounding; blocks are centered
// on multiples of L^j).
BlockCoord site_to_block(const std::vector<std::int64_t>& site, int d, std::int64_t block_side);

// ---------------------------------------------------------------------------
// Exhaustive small-set enumeration around an anchor block.

struct EnumerationBudget {
  std::uint64_t max_nodes = 200'000'000;  // enumeration tree nodes
};

// counts[s-1] = number of connected polymers of s blocks containing the
// anchor, for s = 1..2^d.  Throws BudgetExceededError when the budget is hit.
std::vector<std::uint64_t> small_set_counts(int d, Adjacency adj,
                                            const EnumerationBudget& budget = {},
                                            int size_cap = -1);

// Materialized enumeration (block sets contain `anchor`); intended for small d
// or tight size caps.
std::vector<Polymer> small_sets_containing(const BlockCoord& anchor, int d, int j,
                                           Adjacency adj,
                                           const EnumerationBudget& budget = {},
                                           int size_cap = -1);

// Visits every connected polymer containing `anchor` with at most size_cap
// blocks, exactly once.
void for_each_small_set(const BlockCoord& anchor, int d, Adjacency adj, int size_cap,
                        const EnumerationBudget& budget,
                        const std::function<void(const std::vector<BlockCoord>&)>& visit);

// ---------------------------------------------------------------------------
// n-constants

struct NConstants {
  double n1 = 0.0;
  double n2 = 0.0;
  std::vector<std::uint64_t> counts_by_size;
  // n3 needs an l argument; evaluated from the stored counts.
  double n3(double l) const;
};

// Exact by enumeration (subject to budget).  The scale argument only tags the
// block grid; the block-coordinate combinatorics are scale-free, which is the
// paper-level statement checked by the tests.
NConstants n_constants(int d, Adjacency adj = Adjacency::sup, int j = 0,
                       const EnumerationBudget& budget = {});

// Cached/pinned variant: for d <= 2 computes live; for d == 3 (sup) returns
// counts pinned from a full offline enumeration run, unless force_live.
NConstants n_constants_cached(int d, Adjacency adj = Adjacency::sup,
                              bool force_live = false,
                              const EnumerationBudget& budget = {});

// ---------------------------------------------------------------------------
// Star neighborhood and covering scale.

// Blocks of star(B) = union of small sets containing B.
std::vector<BlockCoord> star_blocks(const BlockCoord& b, int d, Adjacency adj);

// True when star(b) contains all the given blocks.
bool star_covers(const BlockCoord& b, const std::vector<BlockCoord>& targets, int d,
                 Adjacency adj);

struct CoveringScale {
  int j0 = 0;
  double diameter = 0.0;  // Euclidean diameter of the point set
  bool diam_bound_ok = false;  // diameter <= d 2^{d+1} L^{j0}
};

// Smallest j such that some j-block B has star(B) covering all points.
CoveringScale min_covering_scale(const std::vector<std::vector<std::int64_t>>& points,
                                 int d, int L, Adjacency adj = Adjacency::sup);

}  // namespace dipolerg
