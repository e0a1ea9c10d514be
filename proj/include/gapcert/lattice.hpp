#pragma once

// Hypercubic lattice geometry: the periodic box Lambda_N = ((-N, N] ∩ Z)^D,
// general periodic tori, the open subsystem boxes B_l = [0, n]^D + l, and
// brute-force verification of the box-counting identities behind the
// squaring argument.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gapcert/error.hpp"

namespace gapcert {

struct Site {
  std::vector<int> coords;

  auto operator<=>(const Site&) const = default;
  bool operator==(const Site&) const = default;
};

/// Nearest-neighbour edge from `base` to `base + e_direction` (direction is a
/// 0-based axis index). On a torus the head is wrapped; the edge identity is
/// the pair (base, direction), so a side-2 torus carries two parallel edges
/// between the same two sites.
struct Edge {
  Site base;
  int direction = 0;

  auto operator<=>(const Edge&) const = default;
  bool operator==(const Edge&) const = default;
};

enum class PairClass { Same, Aligned, Bent, Disjoint };

inline std::string to_string(PairClass c) {
  switch (c) {
    case PairClass::Same: return "same";
    case PairClass::Aligned: return "aligned";
    case PairClass::Bent: return "bent";
    case PairClass::Disjoint: return "disjoint";
  }
  return "?";
}

inline constexpr std::uint64_t kDefaultEnumerationLimit = 1'000'000;

/// Dimension D plus either a periodic side length (coordinates reduced to
/// [lo, lo + side)) or no wrap at all (side == 0, plain Z^D).
class LatticeGeometry {
 public:
  /// Lambda_N: side 2N, canonical representatives in (-N, N].
  static LatticeGeometry lambda(int D, int N) {
    if (D < 1 || N < 1) throw ConfigError("Lambda_N requires D >= 1 and N >= 1");
    return LatticeGeometry(D, 2 * N, -N + 1, N);
  }

  /// Periodic box of side L with coordinates in [0, L).
  static LatticeGeometry torus(int D, int L) {
    if (D < 1 || L < 2) throw ConfigError("torus requires D >= 1 and side >= 2");
    return LatticeGeometry(D, L, 0, 0);
  }

  /// Z^D without periodic identification.
  static LatticeGeometry infinite(int D) {
    if (D < 1) throw ConfigError("lattice dimension must be >= 1");
    return LatticeGeometry(D, 0, 0, 0);
  }

  int dimension() const noexcept { return D_; }
  int side() const noexcept { return side_; }
  bool periodic() const noexcept { return side_ > 0; }
  /// Half side N for Lambda_N geometries, 0 otherwise.
  int half_side() const noexcept { return N_; }
  int lowest() const noexcept { return lo_; }

  int canonical(int x) const noexcept {
    if (!periodic()) return x;
    int r = (x - lo_) % side_;
    if (r < 0) r += side_;
    return r + lo_;
  }

  Site canonical(Site s) const {
    for (int& c : s.coords) c = canonical(c);
    return s;
  }

  Site shifted(const Site& s, int axis, int step = 1) const {
    Site out = s;
    out.coords[static_cast<std::size_t>(axis)] += step;
    return canonical(std::move(out));
  }

  Site translate(const Site& s, const Site& by) const {
    Site out = s;
    for (std::size_t a = 0; a < out.coords.size(); ++a) out.coords[a] += by.coords[a];
    return canonical(std::move(out));
  }

  Site origin() const { return Site{std::vector<int>(static_cast<std::size_t>(D_), 0)}; }

  Site head(const Edge& e) const { return shifted(e.base, e.direction); }

  /// Periodic difference reduced to [0, side).
  int offset(int from, int to) const noexcept {
    int r = (to - from) % side_;
    return r < 0 ? r + side_ : r;
  }

  std::uint64_t num_sites(std::uint64_t limit = kDefaultEnumerationLimit) const {
    if (!periodic()) throw ConfigError("Z^D has infinitely many sites");
    const auto count = detail::checked_pow(static_cast<std::uint64_t>(side_),
                                           static_cast<std::uint64_t>(D_), limit);
    if (count > limit)
      throw LimitError("site enumeration exceeds limit of " + std::to_string(limit));
    return count;
  }

  /// Lexicographic rank of a canonical site.
  std::uint64_t index(const Site& s) const {
    std::uint64_t idx = 0;
    for (int c : s.coords)
      idx = idx * static_cast<std::uint64_t>(side_) + static_cast<std::uint64_t>(c - lo_);
    return idx;
  }

 private:
  LatticeGeometry(int D, int side, int lo, int N) : D_(D), side_(side), lo_(lo), N_(N) {}

  int D_;
  int side_;
  int lo_;
  int N_;
};

/// Open box [0, n]^D translated by `base`.
struct BoxRegion {
  Site base;
  int n = 1;
};

namespace detail {

// Calls f(coords) for every point of prod_a [lo, lo + extent) in lex order.
template <typename F>
void for_each_point(int D, int lo, int extent, F&& f) {
  std::vector<int> x(static_cast<std::size_t>(D), lo);
  if (extent <= 0) return;
  while (true) {
    f(x);
    int a = D - 1;
    while (a >= 0) {
      auto& c = x[static_cast<std::size_t>(a)];
      if (++c < lo + extent) break;
      c = lo;
      --a;
    }
    if (a < 0) return;
  }
}

inline void require_box_fits(const BoxRegion& box, const LatticeGeometry& g) {
  if (box.n < 1) throw ConfigError("box side n must be >= 1");
  if (static_cast<int>(box.base.coords.size()) != g.dimension())
    throw ConfigError("box base has wrong dimension");
  if (g.periodic() && box.n + 1 > g.side())
    throw ConfigError("box of side n+1 = " + std::to_string(box.n + 1) +
                      " does not fit in a torus of side " + std::to_string(g.side()));
}

}  // namespace detail

/// All (side)^D canonical sites, lexicographic.
inline std::vector<Site> sites(const LatticeGeometry& g,
                               std::uint64_t limit = kDefaultEnumerationLimit) {
  std::vector<Site> out;
  out.reserve(g.num_sites(limit));
  detail::for_each_point(g.dimension(), g.lowest(), g.side(),
                         [&](const std::vector<int>& x) { out.push_back(Site{x}); });
  return out;
}

/// Every periodic nearest-neighbour edge, D * side^D of them, sorted.
inline std::vector<Edge> periodic_edges(const LatticeGeometry& g,
                                        std::uint64_t limit = kDefaultEnumerationLimit) {
  std::vector<Edge> out;
  for (auto& s : sites(g, limit))
    for (int a = 0; a < g.dimension(); ++a) out.push_back(Edge{s, a});
  return out;
}

inline std::vector<Site> box_sites(const BoxRegion& box, const LatticeGeometry& g) {
  detail::require_box_fits(box, g);
  std::vector<Site> out;
  detail::for_each_point(g.dimension(), 0, box.n + 1, [&](const std::vector<int>& x) {
    out.push_back(g.translate(Site{x}, box.base));
  });
  std::sort(out.begin(), out.end());
  return out;
}

/// Internal edges of the open box, D * n * (n+1)^(D-1) of them, sorted.
inline std::vector<Edge> box_edges(const BoxRegion& box, const LatticeGeometry& g) {
  detail::require_box_fits(box, g);
  std::vector<Edge> out;
  detail::for_each_point(g.dimension(), 0, box.n + 1, [&](const std::vector<int>& x) {
    for (int a = 0; a < g.dimension(); ++a) {
      if (x[static_cast<std::size_t>(a)] == box.n) continue;
      out.push_back(Edge{g.translate(Site{x}, box.base), a});
    }
  });
  std::sort(out.begin(), out.end());
  return out;
}

inline PairClass classify_pair(const Edge& e1, const Edge& e2, const LatticeGeometry& g) {
  if (e1 == e2) return PairClass::Same;
  const Site a1 = g.canonical(e1.base), b1 = g.head(e1);
  const Site a2 = g.canonical(e2.base), b2 = g.head(e2);
  const bool touch = a1 == a2 || a1 == b2 || b1 == a2 || b1 == b2;
  if (!touch) return PairClass::Disjoint;
  return e1.direction == e2.direction ? PairClass::Aligned : PairClass::Bent;
}

/// True iff `e` is an internal edge of the open box [0,n]^D + l.
inline bool box_contains(std::span<const int> l, int n, const Edge& e, const LatticeGeometry& g) {
  for (int a = 0; a < g.dimension(); ++a) {
    const auto ua = static_cast<std::size_t>(a);
    const int delta = g.periodic() ? g.offset(l[ua], e.base.coords[ua])
                                   : e.base.coords[ua] - l[ua];
    const int hi = (a == e.direction) ? n - 1 : n;
    if (delta < 0 || delta > hi) return false;
  }
  return true;
}

/// Number of translates l in the torus whose box B_l contains every target
/// edge, by exhaustive enumeration of all side^D translates.
inline std::int64_t count_boxes_containing(std::span<const Edge> targets, int n,
                                           const LatticeGeometry& g,
                                           std::uint64_t limit = kDefaultEnumerationLimit) {
  if (!g.periodic()) throw ConfigError("box counting needs a periodic geometry");
  if (n < 1) throw ConfigError("box side n must be >= 1");
  g.num_sites(limit);
  std::int64_t count = 0;
  detail::for_each_point(g.dimension(), g.lowest(), g.side(), [&](const std::vector<int>& x) {
    const std::span<const int> l(x);
    if (std::all_of(targets.begin(), targets.end(),
                    [&](const Edge& e) { return box_contains(l, n, e, g); }))
      ++count;
  });
  return count;
}

inline std::int64_t count_boxes_containing(const Edge& e, int n, const LatticeGeometry& g,
                                           std::uint64_t limit = kDefaultEnumerationLimit) {
  return count_boxes_containing(std::span<const Edge>(&e, 1), n, g, limit);
}

/// Exact rational p/q with q > 0.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool equals(std::int64_t k) const { return k * den == num; }
  bool bounds(std::int64_t k) const { return k * den <= num; }
  std::string str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }
};

namespace counting {

inline std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// n^a (n+1)^(D+shift), with a negative exponent moved to the denominator.
inline Fraction scaled(std::int64_t prefactor, int n, int exponent) {
  Fraction f;
  if (exponent >= 0) {
    f.num = prefactor * ipow(n + 1, exponent);
  } else {
    f.num = prefactor;
    f.den = ipow(n + 1, -exponent);
  }
  const auto g = std::gcd(f.num, f.den);
  if (g > 1) {
    f.num /= g;
    f.den /= g;
  }
  return f;
}

/// Boxes containing a single edge: n (n+1)^(D-1).
inline Fraction edge_count(int D, int n) { return scaled(n, n, D - 1); }
/// Boxes containing an aligned pair: (n-1) (n+1)^(D-1).
inline Fraction aligned_count(int D, int n) { return scaled(n - 1, n, D - 1); }
/// Boxes containing a bent pair; also the upper bound for disjoint pairs:
/// n^2 (n+1)^(D-2).
inline Fraction bent_count(int D, int n) {
  return scaled(static_cast<std::int64_t>(n) * n, n, D - 2);
}

}  // namespace counting

struct ClassTally {
  Fraction expected;
  bool upper_bound = false;
  std::uint64_t checked = 0;
  std::int64_t min_count = 0;
  std::int64_t max_count = 0;

  void record(std::int64_t c) {
    if (checked == 0) {
      min_count = max_count = c;
    } else {
      min_count = std::min(min_count, c);
      max_count = std::max(max_count, c);
    }
    ++checked;
  }
};

struct CountDiscrepancy {
  PairClass cls;  // Same stands for the single-edge count
  Edge first;
  std::optional<Edge> second;
  std::int64_t count = 0;
  Fraction expected;
};

struct CountReport {
  int D = 0;
  int n = 0;
  int N = 0;
  bool in_regime = false;  // N >= 2n + 1
  ClassTally edges;
  ClassTally aligned;
  ClassTally bent;
  ClassTally disjoint;
  bool bent_skipped = false;  // D = 1 has no bent pairs
  std::vector<CountDiscrepancy> discrepancies;

  bool ok() const { return discrepancies.empty(); }
};

/// Checks every closed-form box count on Lambda_N by brute force.
///
/// Single edges: all D (2N)^D edges. Pairs: every pair whose first edge is
/// based at the origin, which meets every translation orbit of ordered pairs;
/// each such pair is counted over all (2N)^D translates. Aligned and bent
/// pairs must match exactly, disjoint pairs must not exceed n^2 (n+1)^(D-2).
inline CountReport verify_counting_lemma(int n, const LatticeGeometry& g,
                                         std::uint64_t limit = kDefaultEnumerationLimit) {
  if (g.half_side() == 0) throw ConfigError("counting lemma is stated on Lambda_N");
  if (n < 1) throw ConfigError("box side n must be >= 1");
  if (n + 1 > g.side())
    throw ConfigError("box [0, n]^D with n = " + std::to_string(n) + " does not fit in a torus of side " +
                      std::to_string(g.side()));
  const int D = g.dimension();
  CountReport rep;
  rep.D = D;
  rep.n = n;
  rep.N = g.half_side();
  rep.in_regime = rep.N >= 2 * n + 1;
  rep.edges.expected = counting::edge_count(D, n);
  rep.aligned.expected = counting::aligned_count(D, n);
  rep.bent.expected = counting::bent_count(D, n);
  rep.disjoint.expected = counting::bent_count(D, n);
  rep.disjoint.upper_bound = true;
  rep.bent_skipped = D == 1;

  const auto all_edges = periodic_edges(g, limit);
  for (const auto& e : all_edges) {
    const auto c = count_boxes_containing(e, n, g, limit);
    rep.edges.record(c);
    if (!rep.edges.expected.equals(c))
      rep.discrepancies.push_back({PairClass::Same, e, std::nullopt, c, rep.edges.expected});
  }

  const Site o = g.origin();
  for (int a = 0; a < D; ++a) {
    const Edge first{o, a};
    for (const auto& second : all_edges) {
      const auto cls = classify_pair(first, second, g);
      if (cls == PairClass::Same) continue;
      const Edge pair[2] = {first, second};
      const auto c = count_boxes_containing(std::span<const Edge>(pair, 2), n, g, limit);
      ClassTally* tally = nullptr;
      switch (cls) {
        case PairClass::Aligned: tally = &rep.aligned; break;
        case PairClass::Bent: tally = &rep.bent; break;
        case PairClass::Disjoint: tally = &rep.disjoint; break;
        case PairClass::Same: break;
      }
      tally->record(c);
      const bool good = tally->upper_bound ? tally->expected.bounds(c) : tally->expected.equals(c);
      if (!good) rep.discrepancies.push_back({cls, first, second, c, tally->expected});
    }
  }
  return rep;
}

}  // namespace gapcert
