#pragma once

// Matrix-free many-body operators built from embedded local terms.
//
// Basis convention: for an ordered site list s_0, ..., s_{L-1} with local
// dimension d, the basis state |a_0 ... a_{L-1}> has index
//   sum_p a_p * d^(L-1-p),
// i.e. the first site is the most significant digit. A k-site local matrix
// acting on positions (p_1, ..., p_k) uses the same convention internally,
// so a term on sites (0, 1) of a two-site system is the local matrix itself
// and the embedding agrees with Kronecker products taken in site order.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gapcert/error.hpp"
#include "gapcert/lattice.hpp"

namespace gapcert {

using cplx = std::complex<double>;
using cvec = Eigen::VectorXcd;
using cmat = Eigen::MatrixXcd;
using Index = Eigen::Index;

inline constexpr std::uint64_t kDefaultMatvecLimit = std::uint64_t{1} << 28;
inline constexpr std::uint64_t kDefaultDenseLimit = std::uint64_t{1} << 14;
inline constexpr double kProjectionTol = 1e-12;
inline constexpr double kIdentityTol = 1e-10;
inline constexpr double kWitnessTol = 1e-10;

struct ProjectionDefect {
  double hermitian = 0.0;   // ||P - P^dagger||_F
  double idempotent = 0.0;  // ||P^2 - P||_F
};

inline ProjectionDefect projection_defect(const cmat& P) {
  if (P.rows() != P.cols()) throw ConfigError("projection check needs a square matrix");
  return {(P - P.adjoint()).norm(), (P * P - P).norm()};
}

inline bool projection_check(const cmat& P, double tol = kProjectionTol) {
  const auto def = projection_defect(P);
  return def.hermitian <= tol && def.idempotent <= tol;
}

/// Translation-invariant nearest-neighbour interaction: an orthogonal
/// projection P on C^d (x) C^d.
struct NNInteraction {
  int d = 2;
  cmat P;

  static NNInteraction checked(int d, cmat P, double tol = kProjectionTol) {
    if (d < 2) throw ConfigError("local dimension must be >= 2");
    if (P.rows() != d * d || P.cols() != d * d)
      throw ConfigError("interaction must be a d^2 x d^2 matrix");
    const auto def = projection_defect(P);
    if (def.hermitian > tol || def.idempotent > tol)
      throw ConfigError("interaction is not a projection: ||P - P^+|| = " +
                        std::to_string(def.hermitian) +
                        ", ||P^2 - P|| = " + std::to_string(def.idempotent));
    return NNInteraction{d, std::move(P)};
  }
};

inline std::uint64_t hilbert_dimension(int d, std::size_t num_sites, std::uint64_t limit) {
  const auto dim = detail::checked_pow(static_cast<std::uint64_t>(d), num_sites, limit);
  if (dim > limit)
    throw LimitError("Hilbert space dimension " + std::to_string(d) + "^" +
                     std::to_string(num_sites) + " exceeds limit " + std::to_string(limit));
  return dim;
}

/// Hermitian operator given as a sum of local terms, applied without ever
/// forming the full matrix.
class ManyBodyOperator {
 public:
  struct Term {
    std::vector<std::size_t> positions;
    cmat local;
  };

  ManyBodyOperator(int d, std::size_t num_sites, std::uint64_t matvec_limit = kDefaultMatvecLimit)
      : d_(d), num_sites_(num_sites) {
    if (d < 1) throw ConfigError("local dimension must be >= 1");
    dim_ = static_cast<Index>(hilbert_dimension(d, num_sites, matvec_limit));
    strides_.resize(num_sites);
    Index s = 1;
    for (std::size_t p = num_sites; p-- > 0;) {
      strides_[p] = s;
      s *= d;
    }
  }

  int local_dim() const noexcept { return d_; }
  std::size_t num_sites() const noexcept { return num_sites_; }
  Index dimension() const noexcept { return dim_; }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  const std::vector<Site>& site_list() const noexcept { return site_list_; }
  void set_site_list(std::vector<Site> s) { site_list_ = std::move(s); }

  void add_term(std::vector<std::size_t> positions, cmat local) {
    const std::size_t k = positions.size();
    if (k == 0 || k > num_sites_) throw ConfigError("term support must be non-empty");
    {
      auto sorted = positions;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ConfigError("term positions must be distinct");
      if (sorted.back() >= num_sites_) throw ConfigError("term position out of range");
    }
    Index local_dim = 1;
    for (std::size_t i = 0; i < k; ++i) local_dim *= d_;
    if (local.rows() != local_dim || local.cols() != local_dim)
      throw ConfigError("local term has wrong size for its support");

    Compiled c;
    c.offsets.resize(static_cast<std::size_t>(local_dim));
    for (Index a = 0; a < local_dim; ++a) {
      Index rem = a, off = 0;
      for (std::size_t t = k; t-- > 0;) {
        off += (rem % d_) * strides_[positions[t]];
        rem /= d_;
      }
      c.offsets[static_cast<std::size_t>(a)] = off;
    }
    for (Index col = 0; col < local_dim; ++col)
      for (Index row = 0; row < local_dim; ++row)
        if (local(row, col) != cplx(0.0, 0.0)) c.entries.push_back({row, col, local(row, col)});
    for (std::size_t p = 0; p < num_sites_; ++p)
      if (std::find(positions.begin(), positions.end(), p) == positions.end())
        c.free_strides.push_back(strides_[p]);
    if (d_ == 2)
      for (auto p : positions) c.mask |= static_cast<std::uint64_t>(strides_[p]);

    terms_.push_back(Term{std::move(positions), std::move(local)});
    compiled_.push_back(std::move(c));
  }

  /// y += scale * (this) x
  void apply_add(const cvec& x, cvec& y, cplx scale = 1.0) const {
    if (x.size() != dim_ || y.size() != dim_) throw ConfigError("vector length mismatch in apply");
    for (const auto& c : compiled_) {
      if (d_ == 2) {
        // Bases are exactly the indices with zero bits on the term's sites.
        const std::uint64_t mask = c.mask;
        const auto dim = static_cast<std::uint64_t>(dim_);
        std::uint64_t b = 0;
        do {
          apply_block(c, static_cast<Index>(b), x, y, scale);
          b = ((b | mask) + 1) & ~mask;
        } while (b != 0 && b < dim);
      } else {
        for_each_base(c, [&](Index b) { apply_block(c, b, x, y, scale); });
      }
    }
  }

  cvec apply(const cvec& x) const {
    cvec y = cvec::Zero(dim_);
    apply_add(x, y);
    return y;
  }

 private:
  struct Entry {
    Index row;
    Index col;
    cplx value;
  };
  struct Compiled {
    std::vector<Index> offsets;
    std::vector<Entry> entries;
    std::vector<Index> free_strides;
    std::uint64_t mask = 0;
  };

  static void apply_block(const Compiled& c, Index b, const cvec& x, cvec& y, cplx scale) {
    for (const auto& e : c.entries)
      y[b + c.offsets[static_cast<std::size_t>(e.row)]] +=
          scale * e.value * x[b + c.offsets[static_cast<std::size_t>(e.col)]];
  }

  template <typename F>
  void for_each_base(const Compiled& c, F&& f) const {
    const std::size_t nf = c.free_strides.size();
    std::vector<int> digit(nf, 0);
    Index b = 0;
    while (true) {
      f(b);
      std::size_t i = 0;
      for (; i < nf; ++i) {
        if (++digit[i] < d_) {
          b += c.free_strides[i];
          break;
        }
        b -= static_cast<Index>(d_ - 1) * c.free_strides[i];
        digit[i] = 0;
      }
      if (i == nf) return;
    }
  }

  int d_;
  std::size_t num_sites_;
  Index dim_ = 1;
  std::vector<Index> strides_;
  std::vector<Term> terms_;
  std::vector<Compiled> compiled_;
  std::vector<Site> site_list_;
};

/// Explicit matrix wrapped as an operator.
class DenseOperator {
 public:
  explicit DenseOperator(cmat m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw ConfigError("dense operator must be square");
  }
  Index dimension() const noexcept { return m_.rows(); }
  const cmat& matrix() const noexcept { return m_; }
  void apply_add(const cvec& x, cvec& y, cplx scale = 1.0) const {
    if (x.size() != m_.cols() || y.size() != m_.rows())
      throw ConfigError("vector length mismatch in apply");
    y.noalias() += scale * (m_ * x);
  }
  cvec apply(const cvec& x) const { return m_ * x; }

 private:
  cmat m_;
};

/// Real linear combination of products of many-body operators.
/// A summand with factors (F_1, ..., F_r) acts as F_1 F_2 ... F_r (F_r first);
/// an empty factor list is the identity. Products are never materialized.
class CompositeOperator {
 public:
  using Factor = std::shared_ptr<const ManyBodyOperator>;
  struct Summand {
    double coefficient = 1.0;
    std::vector<Factor> factors;
  };

  explicit CompositeOperator(Index dim) : dim_(dim) {}

  static CompositeOperator identity(Index dim) {
    CompositeOperator c(dim);
    c.add_identity(1.0);
    return c;
  }

  Index dimension() const noexcept { return dim_; }
  const std::vector<Summand>& summands() const noexcept { return summands_; }

  CompositeOperator& add_identity(double coef) {
    summands_.push_back({coef, {}});
    return *this;
  }

  CompositeOperator& add(double coef, Factor op) { return add_product(coef, {std::move(op)}); }

  CompositeOperator& add(double coef, const ManyBodyOperator& op) {
    return add(coef, std::make_shared<const ManyBodyOperator>(op));
  }

  CompositeOperator& add_product(double coef, std::vector<Factor> factors) {
    for (const auto& f : factors)
      if (!f || f->dimension() != dim_) throw ConfigError("composite factor dimension mismatch");
    summands_.push_back({coef, std::move(factors)});
    return *this;
  }

  /// Appends coef * other (all of its summands).
  CompositeOperator& add(double coef, const CompositeOperator& other) {
    if (other.dim_ != dim_) throw ConfigError("composite dimension mismatch");
    for (const auto& s : other.summands_) summands_.push_back({coef * s.coefficient, s.factors});
    return *this;
  }

  void apply_add(const cvec& x, cvec& y, cplx scale = 1.0) const {
    if (x.size() != dim_ || y.size() != dim_) throw ConfigError("vector length mismatch in apply");
    cvec cur, next;
    for (const auto& s : summands_) {
      const cplx c = scale * s.coefficient;
      if (s.factors.empty()) {
        y += c * x;
        continue;
      }
      if (s.factors.size() == 1) {
        s.factors.front()->apply_add(x, y, c);
        continue;
      }
      cur = x;
      for (std::size_t i = s.factors.size(); i-- > 1;) {
        next.setZero(dim_);
        s.factors[i]->apply_add(cur, next);
        cur.swap(next);
      }
      s.factors.front()->apply_add(cur, y, c);
    }
  }

  cvec apply(const cvec& x) const {
    cvec y = cvec::Zero(dim_);
    apply_add(x, y);
    return y;
  }

 private:
  Index dim_;
  std::vector<Summand> summands_;
};

template <typename Op>
concept LinearMap = requires(const Op& op, const cvec& x, cvec& y) {
  { op.dimension() } -> std::convertible_to<Index>;
  op.apply_add(x, y, cplx{1.0});
};

template <LinearMap Op>
cvec apply(const Op& op, const cvec& x) {
  if (x.size() != op.dimension()) throw ConfigError("vector length mismatch in apply");
  cvec y = cvec::Zero(op.dimension());
  op.apply_add(x, y, cplx{1.0});
  return y;
}

/// Full matrix of a matrix-free operator, one basis vector at a time.
template <LinearMap Op>
cmat dense_matrix(const Op& op, std::uint64_t dense_limit = kDefaultDenseLimit) {
  const Index dim = op.dimension();
  if (static_cast<std::uint64_t>(dim) > dense_limit)
    throw LimitError("dimension " + std::to_string(dim) + " exceeds dense limit " +
                     std::to_string(dense_limit));
  cmat m = cmat::Zero(dim, dim);
  cvec e = cvec::Zero(dim), col(dim);
  for (Index j = 0; j < dim; ++j) {
    e[j] = 1.0;
    col.setZero();
    op.apply_add(e, col, cplx{1.0});
    m.col(j) = col;
    e[j] = 0.0;
  }
  return m;
}

/// Uniformly distributed complex unit vector.
template <typename Rng>
cvec random_unit_vector(Index dim, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  cvec v(dim);
  for (Index i = 0; i < dim; ++i) v[i] = cplx(g(rng), g(rng));
  v.normalize();
  return v;
}

namespace detail {

inline std::size_t position_of(const std::map<Site, std::size_t>& pos, const Site& s) {
  auto it = pos.find(s);
  if (it == pos.end()) throw ConfigError("edge references a site outside the site list");
  return it->second;
}

inline std::map<Site, std::size_t> position_map(std::span<const Site> site_list) {
  std::map<Site, std::size_t> pos;
  for (std::size_t i = 0; i < site_list.size(); ++i)
    if (!pos.emplace(site_list[i], i).second) throw ConfigError("duplicate site in site list");
  return pos;
}

}  // namespace detail

/// Sum of h_{j,k} = P (x) Id over the given edges. Edges are sorted first so
/// the term order is deterministic; each term acts on (base, head) in that
/// order.
inline ManyBodyOperator build_hamiltonian(const NNInteraction& inter, std::vector<Edge> edges,
                                          std::span<const Site> site_list,
                                          const LatticeGeometry& g,
                                          std::uint64_t matvec_limit = kDefaultMatvecLimit) {
  ManyBodyOperator H(inter.d, site_list.size(), matvec_limit);
  const auto pos = detail::position_map(site_list);
  std::sort(edges.begin(), edges.end());
  for (const auto& e : edges) {
    const auto j = detail::position_of(pos, g.canonical(e.base));
    const auto k = detail::position_of(pos, g.head(e));
    H.add_term({j, k}, inter.P);
  }
  H.set_site_list({site_list.begin(), site_list.end()});
  return H;
}

/// H^2 = H + Q + R for projection terms: Q collects anticommutators of
/// distinct touching edge pairs (split by aligned/bent), R of disjoint ones.
struct TermDecomposition {
  ManyBodyOperator H;
  CompositeOperator Q;
  CompositeOperator Q_aligned;
  CompositeOperator Q_bent;
  CompositeOperator R;
  std::vector<Edge> edges;
};

inline TermDecomposition build_QR(const NNInteraction& inter, std::vector<Edge> edges,
                                  std::span<const Site> site_list, const LatticeGeometry& g,
                                  std::uint64_t matvec_limit = kDefaultMatvecLimit) {
  std::sort(edges.begin(), edges.end());
  auto H = build_hamiltonian(inter, edges, site_list, g, matvec_limit);
  const Index dim = H.dimension();
  TermDecomposition out{H, CompositeOperator(dim), CompositeOperator(dim),
                        CompositeOperator(dim), CompositeOperator(dim), edges};

  const std::size_t E = edges.size();
  std::vector<CompositeOperator::Factor> single(E);
  for (std::size_t a = 0; a < E; ++a) {
    ManyBodyOperator h(inter.d, site_list.size(), matvec_limit);
    h.add_term(H.terms()[a].positions, H.terms()[a].local);
    single[a] = std::make_shared<const ManyBodyOperator>(std::move(h));
  }
  // Sum over unordered pairs {a, b} of h_a h_b + h_b h_a equals the sum over
  // a of h_a * (sum of h_b with b != a in the same class).
  for (std::size_t a = 0; a < E; ++a) {
    ManyBodyOperator aligned(inter.d, site_list.size(), matvec_limit);
    ManyBodyOperator bent(inter.d, site_list.size(), matvec_limit);
    ManyBodyOperator disjoint(inter.d, site_list.size(), matvec_limit);
    for (std::size_t b = 0; b < E; ++b) {
      const auto& t = H.terms()[b];
      switch (classify_pair(edges[a], edges[b], g)) {
        case PairClass::Same: break;
        case PairClass::Aligned: aligned.add_term(t.positions, t.local); break;
        case PairClass::Bent: bent.add_term(t.positions, t.local); break;
        case PairClass::Disjoint: disjoint.add_term(t.positions, t.local); break;
      }
    }
    auto add_class = [&](ManyBodyOperator&& partners, CompositeOperator& target) {
      if (partners.terms().empty()) return;
      auto f = std::make_shared<const ManyBodyOperator>(std::move(partners));
      target.add_product(1.0, {single[a], f});
      out.Q.add_product(1.0, {single[a], f});
    };
    add_class(std::move(aligned), out.Q_aligned);
    add_class(std::move(bent), out.Q_bent);
    if (!disjoint.terms().empty())
      out.R.add_product(1.0, {single[a], std::make_shared<const ManyBodyOperator>(std::move(disjoint))});
  }
  return out;
}

struct ResidualReport {
  double max_residual = 0.0;
  int trials = 0;
  double tol = kIdentityTol;
  bool passed = false;
};

/// max over random unit v of ||(H^2 - H - Q - R) v||.
inline ResidualReport verify_square_identity(const NNInteraction& inter, std::vector<Edge> edges,
                                             std::span<const Site> site_list,
                                             const LatticeGeometry& g, int trials,
                                             double tol = kIdentityTol,
                                             std::uint64_t seed = 1) {
  const auto dec = build_QR(inter, std::move(edges), site_list, g);
  std::mt19937_64 rng(seed);
  ResidualReport rep;
  rep.trials = trials;
  rep.tol = tol;
  for (int t = 0; t < trials; ++t) {
    const cvec v = random_unit_vector(dec.H.dimension(), rng);
    const cvec Hv = dec.H.apply(v);
    cvec r = dec.H.apply(Hv) - Hv;
    dec.Q.apply_add(v, r, -1.0);
    dec.R.apply_add(v, r, -1.0);
    rep.max_residual = std::max(rep.max_residual, r.norm());
  }
  rep.passed = rep.max_residual <= tol;
  return rep;
}

namespace detail {

inline double min_eigenvalue_dense(const cmat& m) {
  Eigen::SelfAdjointEigenSolver<cmat> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw SolverError("dense eigensolver failed");
  return es.eigenvalues()(0);
}

}  // namespace detail

/// Minimum eigenvalue of {h12, h23} + h12 + h23 on a three-site chain, with
/// h12 built from P1 and h23 from P2. Non-negative iff -{h, h'} <= h + h'
/// holds for this pair.
inline double cauchy_schwarz_witness(const NNInteraction& P1, const NNInteraction& P2,
                                     std::uint64_t dense_limit = kDefaultDenseLimit) {
  if (P1.d != P2.d) throw ConfigError("Cauchy-Schwarz witness needs equal local dimensions");
  const int d = P1.d;
  hilbert_dimension(d, 3, dense_limit);
  ManyBodyOperator h12(d, 3), h23(d, 3);
  h12.add_term({0, 1}, P1.P);
  h23.add_term({1, 2}, P2.P);
  const cmat a = dense_matrix(h12, dense_limit);
  const cmat b = dense_matrix(h23, dense_limit);
  const cmat m = a * b + b * a + a + b;
  return detail::min_eigenvalue_dense(0.5 * (m + m.adjoint()));
}

}  // namespace gapcert
