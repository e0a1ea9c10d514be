#pragma once

// Finite-range interactions on Z^3 and their one-step coarse-graining onto
// metaspins: cubes C(y) of side R centred at y in R Z^3.
//
// A translated term x + S is assigned to the bounding block of the cubes it
// touches. The block is a 1, 2, 4 or 8 cube cluster (on-site, face, edge,
// corner). The coarse interaction of a block is the projection onto the
// complement of the joint kernel of all terms assigned to it. It is kept
// factorised over connected components of the term supports:
//   P_block = I - (x)_c K_c,   K_c = kernel projector of component c.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gapcert/error.hpp"
#include "gapcert/operator.hpp"
#include "gapcert/spectral.hpp"

namespace gapcert {

using Site3 = std::array<int, 3>;

inline Site3 operator+(const Site3& a, const Site3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Site3 operator-(const Site3& a, const Site3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

inline int l1_distance(const Site3& a, const Site3& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

inline std::string to_string(const Site3& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + ")";
}

/// Default cap on d^{#sites} for kernel computations.
inline constexpr std::uint64_t kDefaultKernelLimit = std::uint64_t{1} << 12;

namespace detail {

// Reorders the tensor factors of M: factor i of the result is factor perm[i]
// of M.
inline cmat permute_factors(const cmat& M, int d, const std::vector<int>& perm) {
  const auto k = perm.size();
  const Index dim = M.rows();
  std::vector<Index> stride(k);
  Index s = 1;
  for (std::size_t p = k; p-- > 0;) {
    stride[p] = s;
    s *= d;
  }
  if (s != dim) throw ConfigError("permute_factors: dimension does not match factor count");
  std::vector<Index> map(static_cast<std::size_t>(dim));
  for (Index i = 0; i < dim; ++i) {
    Index rem = i, old = 0;
    for (std::size_t p = k; p-- > 0;) {
      old += (rem % d) * stride[static_cast<std::size_t>(perm[p])];
      rem /= d;
    }
    map[static_cast<std::size_t>(i)] = old;
  }
  cmat out(dim, dim);
  for (Index j = 0; j < dim; ++j)
    for (Index i = 0; i < dim; ++i) out(i, j) = M(map[static_cast<std::size_t>(i)], map[static_cast<std::size_t>(j)]);
  return out;
}

inline cmat kron(const cmat& a, const cmat& b) {
  cmat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline int floor_div(int a, int b) {
  const int q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Interaction shapes

struct InteractionShape {
  std::vector<Site3> offsets;  // sorted lexicographically; tensor factor order
  cmat projection;

  /// Sorts the offsets, permuting the projection's tensor factors to match,
  /// and validates the result.
  static InteractionShape checked(int d, std::vector<Site3> offsets, cmat P, double tol = kProjectionTol) {
    if (offsets.empty()) throw ConfigError("interaction shape has no sites");
    const Site3 origin{0, 0, 0};
    if (std::find(offsets.begin(), offsets.end(), origin) == offsets.end())
      throw ConfigError("interaction shape must contain the origin");
    std::vector<int> perm(offsets.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(), [&](int a, int b) { return offsets[a] < offsets[b]; });
    std::vector<Site3> sorted;
    for (int p : perm) sorted.push_back(offsets[p]);
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("interaction shape has repeated offsets");
    const Index expect =
        static_cast<Index>(hilbert_dimension(d, sorted.size(), kDefaultMatvecLimit));
    if (P.rows() != expect || P.cols() != expect)
      throw ConfigError("projection for shape of " + std::to_string(sorted.size()) + " sites must be " +
                        std::to_string(expect) + "x" + std::to_string(expect));
    const auto defect = projection_defect(P);
    if (defect.hermitian > tol || defect.idempotent > tol)
      throw ConfigError("shape projection check failed: ||P - P^dag|| = " + std::to_string(defect.hermitian) +
                        ", ||P^2 - P|| = " + std::to_string(defect.idempotent));
    const bool identity_order = std::is_sorted(perm.begin(), perm.end());
    return InteractionShape{std::move(sorted), identity_order ? std::move(P) : detail::permute_factors(P, d, perm)};
  }
};

struct FiniteRangeSpec {
  int d = 2;
  int R = 1;
  std::vector<InteractionShape> shapes;
};

/// Largest pairwise l1 distance within the offsets.
inline int diam1(std::span<const Site3> offsets) {
  if (offsets.empty()) throw ConfigError("diam1 of an empty set");
  int best = 0;
  for (const auto& a : offsets)
    for (const auto& b : offsets) best = std::max(best, l1_distance(a, b));
  return best;
}

inline int diam1(const InteractionShape& s) { return diam1(s.offsets); }

inline void require_odd_range(int R) {
  if (R < 1 || R % 2 == 0) throw ConfigError("interaction range R must be odd and positive, got " + std::to_string(R));
}

/// True iff diam1(S) < R for every shape.
inline bool validate_range(const FiniteRangeSpec& spec) {
  require_odd_range(spec.R);
  return std::all_of(spec.shapes.begin(), spec.shapes.end(), [&](const auto& s) { return diam1(s) < spec.R; });
}

/// Every translate of every shape touches at most two cubes per axis iff the
/// per-axis extent of each shape is at most R.
inline bool fits_cube_blocks(const FiniteRangeSpec& spec) {
  require_odd_range(spec.R);
  for (const auto& s : spec.shapes)
    for (int a = 0; a < 3; ++a) {
      const auto [lo, hi] = std::minmax_element(s.offsets.begin(), s.offsets.end(),
                                                [a](const Site3& p, const Site3& q) { return p[a] < q[a]; });
      if ((*hi)[a] - (*lo)[a] > spec.R) return false;
    }
  return true;
}

// ---------------------------------------------------------------------------
// Cubes and regions

struct MetaCube {
  Site3 center;
  int R = 1;

  std::vector<Site3> sites() const {
    const int h = (R - 1) / 2;
    std::vector<Site3> out;
    out.reserve(static_cast<std::size_t>(R * R * R));
    for (int i = -h; i <= h; ++i)
      for (int j = -h; j <= h; ++j)
        for (int k = -h; k <= h; ++k) out.push_back(center + Site3{i, j, k});
    return out;
  }
};

/// Cube index b with site in C(R b).
inline Site3 cube_of(const Site3& site, int R) {
  const int h = (R - 1) / 2;
  return {detail::floor_div(site[0] + h, R), detail::floor_div(site[1] + h, R), detail::floor_div(site[2] + h, R)};
}

inline MetaCube cube_at(const Site3& b, int R) { return MetaCube{{R * b[0], R * b[1], R * b[2]}, R}; }

/// Union of the cubes C(R b) for b in the given box of cube indices, sorted.
inline std::vector<Site3> cube_box_region(const Site3& lower, const Site3& extent, int R) {
  require_odd_range(R);
  std::vector<Site3> out;
  for (int i = 0; i < extent[0]; ++i)
    for (int j = 0; j < extent[1]; ++j)
      for (int k = 0; k < extent[2]; ++k) {
        const auto cs = cube_at(lower + Site3{i, j, k}, R).sites();
        out.insert(out.end(), cs.begin(), cs.end());
      }
  std::sort(out.begin(), out.end());
  return out;
}

/// C_n: the (n+1)^3 cubes C(R b), b in [0, n]^3.
inline std::vector<Site3> build_Cn_region(int n, int R) {
  if (n < 1) throw ConfigError("C_n needs n >= 1");
  return cube_box_region({0, 0, 0}, {n + 1, n + 1, n + 1}, R);
}

struct PlacedTerm {
  int shape = 0;
  Site3 anchor{};             // x in x + S
  std::vector<Site3> sites;   // x + S, lexicographic
};

/// All translates x + S contained in the region, ordered by anchor then shape.
inline std::vector<PlacedTerm> region_terms(const FiniteRangeSpec& spec, std::span<const Site3> region) {
  const std::set<Site3> in(region.begin(), region.end());
  std::vector<Site3> anchors(region.begin(), region.end());
  std::sort(anchors.begin(), anchors.end());
  std::vector<PlacedTerm> out;
  for (const auto& x : anchors)
    for (std::size_t s = 0; s < spec.shapes.size(); ++s) {
      PlacedTerm t{static_cast<int>(s), x, {}};
      bool inside = true;
      for (const auto& o : spec.shapes[s].offsets) {
        const auto p = x + o;
        if (!in.count(p)) {
          inside = false;
          break;
        }
        t.sites.push_back(p);
      }
      if (inside) out.push_back(std::move(t));
    }
  return out;
}

/// Sum of the placed projections on a region (sites in lexicographic order).
inline ManyBodyOperator region_hamiltonian(const FiniteRangeSpec& spec, std::span<const Site3> region,
                                           std::uint64_t matvec_limit = kDefaultMatvecLimit) {
  std::vector<Site3> sorted(region.begin(), region.end());
  std::sort(sorted.begin(), sorted.end());
  ManyBodyOperator H(spec.d, sorted.size(), matvec_limit);
  std::map<Site3, std::size_t> pos;
  for (std::size_t i = 0; i < sorted.size(); ++i) pos[sorted[i]] = i;
  for (const auto& t : region_terms(spec, sorted)) {
    std::vector<std::size_t> p;
    for (const auto& s : t.sites) p.push_back(pos.at(s));
    H.add_term(std::move(p), spec.shapes[static_cast<std::size_t>(t.shape)].projection);
  }
  return H;
}

/// H_{C_n} with open boundary: only translates inside C_n contribute.
inline ManyBodyOperator build_HCn(const FiniteRangeSpec& spec, int n,
                                  std::uint64_t matvec_limit = kDefaultMatvecLimit) {
  const auto region = build_Cn_region(n, spec.R);
  return region_hamiltonian(spec, region, matvec_limit);
}

/// c1 (gamma_Cn - c2 / n) with caller-supplied constants.
inline double gap_bound_fr(double gamma_Cn, int n, double c1, double c2) {
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("gap_bound_fr needs positive constants c1, c2");
  if (n < 1) throw ConfigError("gap_bound_fr needs n >= 1");
  return c1 * (gamma_Cn - c2 / n);
}

// ---------------------------------------------------------------------------
// Coarse-graining

enum class CoverClass { OnSite, Face, EdgeAdj, CornerAdj };

inline std::string to_string(CoverClass c) {
  switch (c) {
    case CoverClass::OnSite: return "on-site";
    case CoverClass::Face: return "face";
    case CoverClass::EdgeAdj: return "edge";
    case CoverClass::CornerAdj: return "corner";
  }
  return "?";
}

/// Shape of a cube block: axes along which it spans two cubes.
struct BlockType {
  std::array<bool, 3> spans{false, false, false};

  int extent_count() const { return spans[0] + spans[1] + spans[2]; }
  CoverClass cover_class() const { return static_cast<CoverClass>(extent_count()); }
  std::string name() const {
    std::string axes;
    for (int a = 0; a < 3; ++a)
      if (spans[a]) axes += "xyz"[a];
    return axes.empty() ? to_string(cover_class()) : to_string(cover_class()) + "-" + axes;
  }
  auto operator<=>(const BlockType&) const = default;

  static std::vector<BlockType> all() {
    std::vector<BlockType> out;
    for (int m = 0; m < 8; ++m) out.push_back(BlockType{{(m & 1) != 0, (m & 2) != 0, (m & 4) != 0}});
    std::sort(out.begin(), out.end(), [](const BlockType& a, const BlockType& b) {
      return std::pair(a.extent_count(), a.name()) < std::pair(b.extent_count(), b.name());
    });
    return out;
  }
};

/// Lower cube index and block type of the cubes touched by the sites.
inline std::pair<Site3, BlockType> cover_block(std::span<const Site3> sites, int R) {
  Site3 lo = cube_of(sites.front(), R), hi = lo;
  for (const auto& s : sites) {
    const auto c = cube_of(s, R);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], c[a]);
      hi[a] = std::max(hi[a], c[a]);
    }
  }
  BlockType t;
  for (int a = 0; a < 3; ++a) {
    if (hi[a] - lo[a] > 1) throw ConfigError("term spans more than two cubes along an axis");
    t.spans[a] = hi[a] > lo[a];
  }
  return {lo, t};
}

struct KernelComponent {
  std::vector<Site3> sites;      // lexicographic
  std::vector<std::size_t> terms;
  std::optional<cmat> kernel;    // projector onto the joint kernel on `sites`
};

struct CoarseInteraction {
  BlockType type;
  std::vector<PlacedTerm> terms;  // assigned translates, lower cube at 0
  std::vector<KernelComponent> components;

  CoverClass cover_class() const { return type.cover_class(); }
  bool materialized() const {
    return std::all_of(components.begin(), components.end(), [](const auto& c) { return c.kernel.has_value(); });
  }
  /// Union of the component sites, lexicographic.
  std::vector<Site3> support() const {
    std::vector<Site3> out;
    for (const auto& c : components) out.insert(out.end(), c.sites.begin(), c.sites.end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

struct CoarseGrainedSpec {
  int d = 2;
  int R = 1;
  std::uint64_t metaspin_dim = 0;  // d^{R^3}, saturated at the kernel limit + 1
  std::uint64_t kernel_limit = kDefaultKernelLimit;
  std::vector<CoarseInteraction> interactions;  // one per block type, in BlockType::all() order

  std::size_t count(CoverClass c) const {
    std::size_t k = 0;
    for (const auto& i : interactions)
      if (i.cover_class() == c) k += i.terms.size();
    return k;
  }
  const CoarseInteraction& at(const BlockType& t) const {
    for (const auto& i : interactions)
      if (i.type == t) return i;
    throw ConfigError("no coarse interaction for block " + t.name());
  }
};

namespace detail {

inline std::vector<std::vector<std::size_t>> connected_components(const std::vector<PlacedTerm>& terms) {
  std::vector<std::size_t> parent(terms.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  std::map<Site3, std::size_t> owner;
  for (std::size_t t = 0; t < terms.size(); ++t)
    for (const auto& s : terms[t].sites) {
      auto [it, fresh] = owner.emplace(s, t);
      if (!fresh) parent[find(t)] = find(it->second);
    }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t t = 0; t < terms.size(); ++t) groups[find(t)].push_back(t);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

inline cmat kernel_projector(const cmat& H, double kernel_tol) {
  Eigen::SelfAdjointEigenSolver<cmat> es(0.5 * (H + H.adjoint()));
  if (es.info() != Eigen::Success) throw SolverError("dense eigensolver failed");
  Index k = 0;
  while (k < es.eigenvalues().size() && es.eigenvalues()(k) <= kernel_tol) ++k;
  const cmat V = es.eigenvectors().leftCols(k);
  return V * V.adjoint();
}

inline KernelComponent make_component(const FiniteRangeSpec& spec, const std::vector<PlacedTerm>& terms,
                                      std::vector<std::size_t> members, std::uint64_t kernel_limit,
                                      double kernel_tol) {
  KernelComponent c;
  c.terms = std::move(members);
  std::set<Site3> all;
  for (auto t : c.terms) all.insert(terms[t].sites.begin(), terms[t].sites.end());
  c.sites.assign(all.begin(), all.end());
  if (detail::checked_pow(static_cast<std::uint64_t>(spec.d), c.sites.size(), kernel_limit) > kernel_limit)
    return c;
  if (c.terms.size() == 1) {
    const auto& P = spec.shapes[static_cast<std::size_t>(terms[c.terms.front()].shape)].projection;
    c.kernel = cmat::Identity(P.rows(), P.cols()) - P;
    return c;
  }
  // Only the assigned terms count, not every translate that fits on the sites.
  ManyBodyOperator Hc(spec.d, c.sites.size());
  std::map<Site3, std::size_t> pos;
  for (std::size_t i = 0; i < c.sites.size(); ++i) pos[c.sites[i]] = i;
  for (auto t : c.terms) {
    std::vector<std::size_t> p;
    for (const auto& s : terms[t].sites) p.push_back(pos.at(s));
    Hc.add_term(std::move(p), spec.shapes[static_cast<std::size_t>(terms[t].shape)].projection);
  }
  c.kernel = kernel_projector(dense_matrix(Hc, kernel_limit), kernel_tol);
  return c;
}

}  // namespace detail

/// Assigns the translates of every shape to cover blocks with lower cube at
/// the origin and builds the per-block coarse projections. Components whose
/// dimension exceeds `kernel_limit` are left unmaterialized.
inline CoarseGrainedSpec coarse_grain(const FiniteRangeSpec& spec,
                                      std::uint64_t kernel_limit = kDefaultKernelLimit,
                                      double kernel_tol = kKernelTol) {
  if (!fits_cube_blocks(spec))
    throw ConfigError("some shape extends over more than R sites along an axis; translates would touch "
                      "three cubes in a row");
  CoarseGrainedSpec out;
  out.d = spec.d;
  out.R = spec.R;
  out.kernel_limit = kernel_limit;
  out.metaspin_dim = detail::checked_pow(static_cast<std::uint64_t>(spec.d),
                                         static_cast<std::uint64_t>(spec.R) * spec.R * spec.R, kernel_limit);

  for (const auto& type : BlockType::all()) {
    CoarseInteraction ci{type, {}, {}};
    const Site3 extent{1 + type.spans[0], 1 + type.spans[1], 1 + type.spans[2]};
    const auto block = cube_box_region({0, 0, 0}, extent, spec.R);
    // Every site of x + S lies in the block, in particular the anchor x.
    for (const auto& x : block)
      for (std::size_t s = 0; s < spec.shapes.size(); ++s) {
        PlacedTerm t{static_cast<int>(s), x, {}};
        for (const auto& o : spec.shapes[s].offsets) t.sites.push_back(x + o);
        const auto [lo, bt] = cover_block(t.sites, spec.R);
        if (lo == Site3{0, 0, 0} && bt == type) ci.terms.push_back(std::move(t));
      }
    for (auto& members : detail::connected_components(ci.terms))
      ci.components.push_back(detail::make_component(spec, ci.terms, std::move(members), kernel_limit, kernel_tol));
    out.interactions.push_back(std::move(ci));
  }
  return out;
}

/// I - (x)_c K_c on the interaction's support, factors in lexicographic order.
inline cmat coarse_projection(const CoarseInteraction& ci, int d, std::uint64_t dense_limit = kDefaultDenseLimit) {
  if (!ci.materialized()) throw LimitError("coarse interaction " + ci.type.name() + " has unmaterialized kernels");
  const auto support = ci.support();
  hilbert_dimension(d, support.size(), dense_limit);
  cmat K = cmat::Identity(1, 1);
  std::vector<Site3> concat;
  for (const auto& c : ci.components) {
    K = detail::kron(K, *c.kernel);
    concat.insert(concat.end(), c.sites.begin(), c.sites.end());
  }
  std::vector<int> perm;
  for (const auto& s : support)
    perm.push_back(static_cast<int>(std::find(concat.begin(), concat.end(), s) - concat.begin()));
  const cmat Ks = std::is_sorted(perm.begin(), perm.end()) ? K : detail::permute_factors(K, d, perm);
  return cmat::Identity(Ks.rows(), Ks.cols()) - Ks;
}

struct ClassProjectionReport {
  std::size_t checked = 0;           // materialized components checked
  std::size_t unmaterialized = 0;    // components above the kernel limit
  double max_defect = 0.0;
  std::vector<std::string> unmaterialized_blocks;
  bool passed(double tol = kProjectionTol) const { return max_defect <= tol; }
};

/// Each component kernel K_c must be a projection; then so is I - (x)_c K_c.
inline ClassProjectionReport check_class_projections(const CoarseGrainedSpec& cg) {
  ClassProjectionReport rep;
  for (const auto& ci : cg.interactions)
    for (const auto& c : ci.components) {
      if (!c.kernel) {
        ++rep.unmaterialized;
        rep.unmaterialized_blocks.push_back(ci.type.name() + " (" + std::to_string(c.sites.size()) + " sites)");
        continue;
      }
      ++rep.checked;
      const auto d = projection_defect(*c.kernel);
      rep.max_defect = std::max({rep.max_defect, d.hermitian, d.idempotent});
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Invariant checks

struct IdentityReport {
  bool identical = false;
  std::size_t original_terms = 0;  // translates anchored in one cube
  std::size_t coarse_terms = 0;
  std::string detail;
};

/// R = 1: each block carries exactly one original translate and its coarse
/// projection equals that translate's matrix entrywise.
inline IdentityReport check_r1_identity(const FiniteRangeSpec& spec, const CoarseGrainedSpec& cg) {
  IdentityReport rep;
  if (spec.R != 1 || cg.R != 1) {
    rep.detail = "identity check applies to R = 1 only";
    return rep;
  }
  rep.original_terms = spec.shapes.size();
  rep.identical = true;
  std::set<std::pair<int, Site3>> seen;
  for (const auto& ci : cg.interactions) {
    rep.coarse_terms += ci.terms.size();
    for (const auto& t : ci.terms) {
      seen.insert({t.shape, t.anchor});
      std::vector<const KernelComponent*> holder;
      for (const auto& c : ci.components)
        if (c.sites == t.sites) holder.push_back(&c);
      if (holder.size() != 1 || holder.front()->terms.size() != 1 || !holder.front()->kernel) {
        rep.identical = false;
        rep.detail = "term of shape " + std::to_string(t.shape) + " at " + to_string(t.anchor) +
                     " shares its block component with other terms";
        continue;
      }
      const cmat& P = spec.shapes[static_cast<std::size_t>(t.shape)].projection;
      const cmat coarse = cmat::Identity(P.rows(), P.cols()) - *holder.front()->kernel;
      if (coarse != P) {
        rep.identical = false;
        rep.detail = "coarse projection differs from the original for shape " + std::to_string(t.shape);
      }
    }
  }
  // At R = 1 each shape has exactly one translate whose cube box starts at 0.
  if (seen.size() != spec.shapes.size() || rep.coarse_terms != rep.original_terms) {
    rep.identical = false;
    if (rep.detail.empty())
      rep.detail = "term multiplicity changed: " + std::to_string(rep.original_terms) + " original, " +
                   std::to_string(rep.coarse_terms) + " coarse";
  }
  return rep;
}

struct ConservationReport {
  int cubes_per_axis = 0;
  std::size_t original_terms = 0;
  std::size_t assigned_terms = 0;
  std::map<CoverClass, std::size_t> per_class;
  std::size_t mismatched_blocks = 0;
  bool ok() const { return original_terms == assigned_terms && mismatched_blocks == 0; }
};

/// On a torus of L^3 cubes every translate lands in exactly one block, and the
/// translates in each block match the canonical class contents.
inline ConservationReport check_term_conservation(const FiniteRangeSpec& spec, const CoarseGrainedSpec& cg,
                                                  int cubes_per_axis) {
  if (cubes_per_axis < 3) throw ConfigError("term conservation check needs at least 3 cubes per axis");
  const int L = cubes_per_axis, R = spec.R, h = (R - 1) / 2;
  ConservationReport rep;
  rep.cubes_per_axis = L;

  using Key = std::pair<Site3, BlockType>;
  std::map<Key, std::set<std::pair<int, Site3>>> found;
  for (int i = -h; i < L * R - h; ++i)
    for (int j = -h; j < L * R - h; ++j)
      for (int k = -h; k < L * R - h; ++k)
        for (std::size_t s = 0; s < spec.shapes.size(); ++s) {
          const Site3 x{i, j, k};
          std::vector<Site3> pts;
          for (const auto& o : spec.shapes[s].offsets) pts.push_back(x + o);
          const auto [lo, type] = cover_block(pts, R);
          const Site3 rel = x - Site3{R * lo[0], R * lo[1], R * lo[2]};
          Site3 wrapped{};
          for (int a = 0; a < 3; ++a) wrapped[a] = ((lo[a] % L) + L) % L;
          ++rep.original_terms;
          found[{wrapped, type}].insert({static_cast<int>(s), rel});
        }

  for (const auto& ci : cg.interactions) {
    std::set<std::pair<int, Site3>> canonical;
    for (const auto& t : ci.terms) canonical.insert({t.shape, t.anchor});
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j)
        for (int k = 0; k < L; ++k) {
          auto it = found.find({Site3{i, j, k}, ci.type});
          const std::size_t got = it == found.end() ? 0 : it->second.size();
          rep.assigned_terms += got;
          rep.per_class[ci.cover_class()] += got;
          if ((it == found.end() && !canonical.empty()) || (it != found.end() && it->second != canonical))
            ++rep.mismatched_blocks;
        }
  }
  return rep;
}

struct AdjacencyCounts {
  int face = 0;
  int edge = 0;
  int corner = 0;
};

/// Neighbouring cubes of C(0) that share a face, an edge or only a corner.
/// With cubes_per_axis = 0 the cube lattice is infinite; otherwise periodic.
inline AdjacencyCounts metacube_adjacency(int cubes_per_axis = 0) {
  if (cubes_per_axis < 0) throw ConfigError("cube count must be non-negative");
  const int L = cubes_per_axis;
  std::set<Site3> distinct;
  AdjacencyCounts out;
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j)
      for (int k = -1; k <= 1; ++k) {
        Site3 b{i, j, k};
        if (L > 0)
          for (auto& c : b) c = ((c % L) + L) % L;
        if (b == Site3{0, 0, 0} || !distinct.insert(b).second) continue;
        int moved = 0;
        for (int a = 0; a < 3; ++a) {
          const int diff = L > 0 ? std::min(b[a], L - b[a]) : std::abs(b[a]);
          moved += diff != 0;
        }
        if (moved == 1) ++out.face;
        if (moved == 2) ++out.edge;
        if (moved == 3) ++out.corner;
      }
  return out;
}

struct GroundSpaceReport {
  Index dimension = 0;
  int kernel_dim_original = 0;
  int kernel_dim_coarse = 0;
  double residual = 0.0;  // max of ||(I - K_cg) K|| and ||(I - K) K_cg|| (Frobenius)
  bool passed = false;
};

/// Original and coarse Hamiltonians on a box of cubes; their kernels must
/// coincide.
inline GroundSpaceReport verify_ground_space_preservation(const FiniteRangeSpec& spec, const CoarseGrainedSpec& cg,
                                                          const Site3& cube_extent,
                                                          std::uint64_t dense_limit = kDefaultDenseLimit,
                                                          double kernel_tol = kKernelTol, double tol = 1e-9) {
  const auto region = cube_box_region({0, 0, 0}, cube_extent, spec.R);
  if (detail::checked_pow(static_cast<std::uint64_t>(spec.d), region.size(), dense_limit) > dense_limit)
    throw LimitError("region of " + std::to_string(region.size()) + " sites has dimension " + std::to_string(spec.d) +
                     "^" + std::to_string(region.size()) + "; feasible envelope is " + std::to_string(spec.d) +
                     "^k <= " + std::to_string(dense_limit) + " (R = " + std::to_string(spec.R) + " cubes hold " +
                     std::to_string(spec.R * spec.R * spec.R) + " sites each)");
  const auto H = region_hamiltonian(spec, region, dense_limit);

  ManyBodyOperator Hcg(spec.d, region.size(), dense_limit);
  std::map<Site3, std::size_t> pos;
  for (std::size_t i = 0; i < region.size(); ++i) pos[region[i]] = i;
  for (const auto& ci : cg.interactions) {
    if (ci.terms.empty()) continue;
    const auto support = ci.support();
    const cmat P = coarse_projection(ci, spec.d, dense_limit);
    for (int i = 0; i + ci.type.spans[0] < cube_extent[0]; ++i)
      for (int j = 0; j + ci.type.spans[1] < cube_extent[1]; ++j)
        for (int k = 0; k + ci.type.spans[2] < cube_extent[2]; ++k) {
          const Site3 shift{spec.R * i, spec.R * j, spec.R * k};
          std::vector<std::size_t> p;
          for (const auto& s : support) p.push_back(pos.at(s + shift));
          Hcg.add_term(std::move(p), P);
        }
  }

  GroundSpaceReport rep;
  rep.dimension = H.dimension();
  const cmat K = detail::kernel_projector(dense_matrix(H, dense_limit), kernel_tol);
  const cmat Kc = detail::kernel_projector(dense_matrix(Hcg, dense_limit), kernel_tol);
  rep.kernel_dim_original = static_cast<int>(std::lround(K.trace().real()));
  rep.kernel_dim_coarse = static_cast<int>(std::lround(Kc.trace().real()));
  const cmat I = cmat::Identity(K.rows(), K.cols());
  rep.residual = std::max(((I - Kc) * K).norm(), ((I - K) * Kc).norm());
  rep.passed = rep.residual <= tol && rep.kernel_dim_original == rep.kernel_dim_coarse;
  return rep;
}

}  // namespace gapcert
