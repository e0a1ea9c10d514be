#pragma once

// Finite-size criteria for frustration-free nearest-neighbour Hamiltonians.
//
//   GM   (1D, periodic bulk):  gamma_m^per >= 5/6 (n^2+n)/(n^2-4) (gamma_n - 6/(n(n+1)))
//   LM   (1D, open bulk):      gamma_m >= 1/(2^9 sqrt6 n) (min_{n/2<=l<=n} gamma_l - 4 sqrt6 / n^(3/2))
//   MAIN (D >= 3, periodic):   gamma_N >= gamma_{B_n} - 1/n - 2/n^2
//
// gamma_n in GM/LM is the gap of the open chain on n sites; B_n = [0, n]^D is
// the open box with n + 1 sites per side.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gapcert/error.hpp"
#include "gapcert/lattice.hpp"
#include "gapcert/operator.hpp"
#include "gapcert/spectral.hpp"

namespace gapcert {

enum class Theorem { GM, LM, Main };

inline std::string to_string(Theorem t) {
  switch (t) {
    case Theorem::GM: return "gm";
    case Theorem::LM: return "lm";
    case Theorem::Main: return "main";
  }
  return "?";
}

inline Theorem parse_theorem(const std::string& s) {
  if (s == "gm") return Theorem::GM;
  if (s == "lm") return Theorem::LM;
  if (s == "main") return Theorem::Main;
  throw ConfigError("unknown theorem '" + s + "' (expected gm, lm or main)");
}

// ---------------------------------------------------------------------------
// Thresholds and implied bounds

inline double threshold_main(int n) {
  if (n < 3) throw ConfigError("main criterion requires n >= 3");
  const double x = n;
  return 1.0 / x + 2.0 / (x * x);
}

inline double implied_bound_main(double local_gap, int n) { return local_gap - threshold_main(n); }

inline double threshold_gm(int n) {
  if (n <= 2) throw ConfigError("GM criterion requires n > 2");
  const double x = n;
  return 6.0 / (x * (x + 1.0));
}

inline double prefactor_gm(int n) {
  if (n <= 2) throw ConfigError("GM criterion requires n > 2");
  const double x = n;
  return 5.0 / 6.0 * (x * x + x) / (x * x - 4.0);
}

inline double bound_gm(double gamma_n, int n) { return prefactor_gm(n) * (gamma_n - threshold_gm(n)); }

inline double threshold_lm(int n) {
  if (n <= 3) throw ConfigError("LM criterion requires n > 3");
  return 4.0 * std::sqrt(6.0) / std::pow(static_cast<double>(n), 1.5);
}

inline double prefactor_lm(int n) {
  if (n <= 3) throw ConfigError("LM criterion requires n > 3");
  return 1.0 / (512.0 * std::sqrt(6.0) * n);
}

inline double bound_lm(double min_gamma, int n) { return prefactor_lm(n) * (min_gamma - threshold_lm(n)); }

/// Smallest subsystem size entering the LM minimum: ceil(n/2).
inline int lm_min_size(int n) { return (n + 1) / 2; }

// ---------------------------------------------------------------------------
// Subsystems

struct Subsystem {
  LatticeGeometry geometry;
  std::vector<Site> sites;
  std::vector<Edge> edges;
  std::string boundary;
};

inline Subsystem open_chain(int m) {
  if (m < 2) throw ConfigError("chain needs at least two sites");
  auto g = LatticeGeometry::infinite(1);
  Subsystem s{g, {}, {}, "open"};
  for (int i = 0; i < m; ++i) s.sites.push_back(Site{{i}});
  for (int i = 0; i + 1 < m; ++i) s.edges.push_back(Edge{Site{{i}}, 0});
  return s;
}

inline Subsystem periodic_chain(int m) {
  auto g = LatticeGeometry::torus(1, m);
  return Subsystem{g, sites(g), periodic_edges(g), "periodic"};
}

/// B_n = [0, n]^D with open boundary.
inline Subsystem open_box(int D, int n) {
  auto g = LatticeGeometry::infinite(D);
  const BoxRegion box{g.origin(), n};
  return Subsystem{g, box_sites(box, g), box_edges(box, g), "open"};
}

/// Periodic box with `side` sites per axis.
inline Subsystem periodic_box(int D, int side) {
  auto g = LatticeGeometry::torus(D, side);
  return Subsystem{g, sites(g), periodic_edges(g), "periodic"};
}

inline ManyBodyOperator subsystem_hamiltonian(const NNInteraction& inter, const Subsystem& s,
                                              std::uint64_t matvec_limit = kDefaultMatvecLimit) {
  return build_hamiltonian(inter, s.edges, s.sites, s.geometry, matvec_limit);
}

inline GapReport subsystem_gap(const NNInteraction& inter, const Subsystem& s,
                               double kernel_tol = kKernelTol, const EigenSolveConfig& cfg = {}) {
  return spectral_gap(subsystem_hamiltonian(inter, s), kernel_tol, cfg);
}

// ---------------------------------------------------------------------------
// Certification

struct CertifyOptions {
  /// Run MAIN below D = 3; the result is flagged non-rigorous.
  bool allow_low_dimension = false;
  double kernel_tol = kKernelTol;
  EigenSolveConfig solver;
};

struct CriterionResult {
  Theorem theorem = Theorem::Main;
  int D = 1;
  int n = 0;
  double local_gap = 0.0;  // for LM: min over l in [ceil(n/2), n]
  int local_size = 0;      // subsystem size attaining local_gap (LM), n otherwise
  int kernel_dim = 0;
  double threshold = 0.0;
  double prefactor = 1.0;
  double margin = 0.0;  // local_gap - threshold
  double implied_lower_bound = 0.0;
  bool certified = false;
  bool rigorous = true;
  SolveMethod method = SolveMethod::Dense;
  Index dimension = 0;
  std::vector<std::pair<int, double>> size_gaps;
};

namespace detail {

inline GapReport checked_gap(const NNInteraction& inter, const Subsystem& s, const CertifyOptions& opt) {
  auto rep = subsystem_gap(inter, s, opt.kernel_tol, opt.solver);
  if (rep.kernel_dim == 0)
    throw ConfigError("subsystem Hamiltonian has trivial kernel (lowest eigenvalue " +
                      std::to_string(rep.eigenvalues.front()) +
                      "); the criteria only apply to frustration-free models");
  return rep;
}

}  // namespace detail

inline void validate_criterion(Theorem t, int D, int n, bool allow_low_dimension) {
  switch (t) {
    case Theorem::GM:
      if (D != 1) throw ConfigError("GM criterion is one-dimensional (D = 1)");
      if (n <= 2) throw ConfigError("GM criterion requires n > 2");
      break;
    case Theorem::LM:
      if (D != 1) throw ConfigError("LM criterion is one-dimensional (D = 1)");
      if (n <= 3) throw ConfigError("LM criterion requires n > 3");
      break;
    case Theorem::Main:
      if (n < 3) throw ConfigError("main criterion requires n >= 3");
      if (D < 1) throw ConfigError("lattice dimension must be >= 1");
      if (D < 3 && !allow_low_dimension)
        throw ConfigError("main criterion is stated for D >= 3; pass the low-dimension override to explore D = " +
                          std::to_string(D));
      break;
  }
}

/// Computes the local gap of the theorem's subsystem and evaluates the
/// criterion. Throws ConfigError on violated preconditions or a frustrated
/// subsystem.
inline CriterionResult certify(const NNInteraction& inter, Theorem t, int D, int n,
                               const CertifyOptions& opt = {}) {
  validate_criterion(t, D, n, opt.allow_low_dimension);
  CriterionResult r;
  r.theorem = t;
  r.D = D;
  r.n = n;
  r.local_size = n;
  switch (t) {
    case Theorem::GM: {
      const auto rep = detail::checked_gap(inter, open_chain(n), opt);
      r.local_gap = rep.gap;
      r.kernel_dim = rep.kernel_dim;
      r.method = rep.method;
      r.dimension = rep.dimension;
      r.threshold = threshold_gm(n);
      r.prefactor = prefactor_gm(n);
      r.size_gaps.emplace_back(n, rep.gap);
      break;
    }
    case Theorem::LM: {
      bool first = true;
      for (int l = lm_min_size(n); l <= n; ++l) {
        const auto rep = detail::checked_gap(inter, open_chain(l), opt);
        r.size_gaps.emplace_back(l, rep.gap);
        if (l == n) {
          r.kernel_dim = rep.kernel_dim;
          r.method = rep.method;
          r.dimension = rep.dimension;
        }
        if (first || rep.gap < r.local_gap) {
          r.local_gap = rep.gap;
          r.local_size = l;
          first = false;
        }
      }
      r.threshold = threshold_lm(n);
      r.prefactor = prefactor_lm(n);
      break;
    }
    case Theorem::Main: {
      const auto rep = detail::checked_gap(inter, open_box(D, n), opt);
      r.local_gap = rep.gap;
      r.kernel_dim = rep.kernel_dim;
      r.method = rep.method;
      r.dimension = rep.dimension;
      r.threshold = threshold_main(n);
      r.prefactor = 1.0;
      r.rigorous = D >= 3;
      r.size_gaps.emplace_back(n, rep.gap);
      break;
    }
  }
  r.margin = r.local_gap - r.threshold;
  r.implied_lower_bound = r.prefactor * r.margin;
  r.certified = r.implied_lower_bound > 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Gap scaling

struct ScalingFit {
  std::vector<int> ns;
  std::vector<double> gaps;
  double alpha = 0.0;      // gamma_n ~ C n^(-alpha)
  double prefactor = 0.0;  // C
  double r_squared = 1.0;
};

/// Least-squares fit of log gamma = log C - alpha log n.
inline ScalingFit fit_power_law(std::vector<int> ns, std::vector<double> gaps) {
  if (ns.size() != gaps.size()) throw ConfigError("scaling fit: size mismatch");
  if (ns.size() < 4) throw ConfigError("scaling fit needs at least 4 points");
  const auto npts = static_cast<double>(ns.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] <= 0) throw ConfigError("scaling fit: sizes must be positive");
    if (!(gaps[i] > 0.0)) throw ConfigError("scaling fit: gaps must be positive");
    mx += std::log(static_cast<double>(ns[i]));
    my += std::log(gaps[i]);
  }
  mx /= npts;
  my /= npts;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double dx = std::log(static_cast<double>(ns[i])) - mx;
    const double dy = std::log(gaps[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw ConfigError("scaling fit needs at least two distinct sizes");
  ScalingFit f;
  const double slope = sxy / sxx;
  f.alpha = slope == 0.0 ? 0.0 : -slope;
  f.prefactor = std::exp(my - slope * mx);
  const double ss_res = std::max(0.0, syy - slope * sxy);
  f.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  f.ns = std::move(ns);
  f.gaps = std::move(gaps);
  return f;
}

/// Gaps of open boxes with n sites per side (open chains of n sites for
/// D = 1), fitted to a power law in n.
inline ScalingFit gap_scaling_fit(const NNInteraction& inter, int D, const std::vector<int>& n_list,
                                  const EigenSolveConfig& cfg = {}, double kernel_tol = kKernelTol) {
  if (n_list.size() < 4) throw ConfigError("scaling fit needs at least 4 sizes");
  std::vector<double> gaps;
  for (int n : n_list) {
    if (n < 2) throw ConfigError("scaling fit sizes must be >= 2 sites per side");
    gaps.push_back(subsystem_gap(inter, open_box(D, n - 1), kernel_tol, cfg).gap);
  }
  return fit_power_law(n_list, gaps);
}

// ---------------------------------------------------------------------------
// One-dimensional theorem checks with both sides from diagonalization

/// Memoized gaps of open and periodic chains for one interaction.
class ChainGaps {
 public:
  explicit ChainGaps(NNInteraction inter, EigenSolveConfig cfg = {}, double kernel_tol = kKernelTol)
      : inter_(std::move(inter)), cfg_(cfg), kernel_tol_(kernel_tol) {}

  double open(int m) { return lookup(open_, m, false); }
  double periodic(int m) { return lookup(periodic_, m, true); }
  const NNInteraction& interaction() const { return inter_; }

 private:
  double lookup(std::map<int, double>& cache, int m, bool periodic) {
    if (auto it = cache.find(m); it != cache.end()) return it->second;
    const auto s = periodic ? periodic_chain(m) : open_chain(m);
    const double g = subsystem_gap(inter_, s, kernel_tol_, cfg_).gap;
    cache.emplace(m, g);
    return g;
  }

  NNInteraction inter_;
  EigenSolveConfig cfg_;
  double kernel_tol_;
  std::map<int, double> open_, periodic_;
};

struct TheoremCheck {
  int n = 0;
  int m = 0;
  double bulk_gap = 0.0;   // gamma_m^per (GM) or gamma_m (LM)
  double local_gap = 0.0;  // gamma_n (GM) or min_l gamma_l (LM)
  double bound = 0.0;
  double slack = 0.0;      // bulk_gap - bound
};

inline TheoremCheck gm_check(ChainGaps& gaps, int n, int m) {
  if (n <= 2 || m <= 2 * n) throw ConfigError("GM check requires n > 2 and m > 2n");
  TheoremCheck c{n, m};
  c.local_gap = gaps.open(n);
  c.bulk_gap = gaps.periodic(m);
  c.bound = bound_gm(c.local_gap, n);
  c.slack = c.bulk_gap - c.bound;
  return c;
}

inline TheoremCheck lm_check(ChainGaps& gaps, int n, int m) {
  if (n <= 3 || m <= 2 * n) throw ConfigError("LM check requires n > 3 and m > 2n");
  TheoremCheck c{n, m};
  c.local_gap = gaps.open(lm_min_size(n));
  for (int l = lm_min_size(n) + 1; l <= n; ++l) c.local_gap = std::min(c.local_gap, gaps.open(l));
  c.bulk_gap = gaps.open(m);
  c.bound = bound_lm(c.local_gap, n);
  c.slack = c.bulk_gap - c.bound;
  return c;
}

// ---------------------------------------------------------------------------
// Ingredients of the squaring argument

struct PerBoxResult {
  double gamma = 0.0;
  double witness = 0.0;  // min eig of H_B^2 - gamma H_B
};

/// (H_B)^2 >= gamma_B H_B for the open box B_n.
inline PerBoxResult per_box_bound(const NNInteraction& inter, int D, int n,
                                  const EigenSolveConfig& cfg = {}, double kernel_tol = kKernelTol) {
  auto H = std::make_shared<const ManyBodyOperator>(subsystem_hamiltonian(inter, open_box(D, n)));
  PerBoxResult r;
  r.gamma = spectral_gap(*H, kernel_tol, cfg).gap;
  CompositeOperator diff(H->dimension());
  diff.add_product(1.0, {H, H}).add(-r.gamma, H);
  r.witness = min_eigenvalue(diff, cfg);
  return r;
}

/// min eig of 2 H + Q_aligned on a periodic geometry: -Q_aligned <= 2 H.
inline double aligned_cauchy_schwarz_witness(const NNInteraction& inter, const LatticeGeometry& g,
                                             const EigenSolveConfig& cfg = {}) {
  const auto s = sites(g);
  const auto dec = build_QR(inter, periodic_edges(g), s, g);
  CompositeOperator op(dec.H.dimension());
  op.add(2.0, dec.H).add(1.0, dec.Q_aligned);
  return min_eigenvalue(op, cfg);
}

struct PropositionKeyReport {
  int D = 0, n = 0, N = 0;
  bool in_regime = false;          // N >= 2n + 1
  double gamma_box = 0.0;
  double counting_residual = 0.0;  // ||(sum_l H_{B_l} - n(n+1)^(D-1) H_N) v|| over trials
  double upper_coefficient_H = 0.0;
  double upper_coefficient_QR = 0.0;
  double lower_coefficient = 0.0;
  double witness_upper = 0.0;  // min eig of c1 H_N + c2 (Q + R) - A
  double witness_lower = 0.0;  // min eig of A - c0 gamma H_N
};

/// Envelope check for the full proposition: the bulk Lambda_N must fit the
/// matvec limit.
inline void require_proposition_key_feasible(int d, int D, int N, std::uint64_t matvec_limit) {
  const auto g = LatticeGeometry::lambda(D, N);
  const auto nsites = g.num_sites();
  const auto cap = static_cast<std::uint64_t>(std::floor(std::log(static_cast<double>(matvec_limit)) /
                                                         std::log(static_cast<double>(d))));
  if (nsites > cap)
    throw LimitError("Lambda_N with D=" + std::to_string(D) + ", N=" + std::to_string(N) + " has " +
                     std::to_string(nsites) + " sites (dimension " + std::to_string(d) + "^" +
                     std::to_string(nsites) + "); feasible envelope is (2N)^D <= " + std::to_string(cap) +
                     " sites for d=" + std::to_string(d));
}

/// Both operator inequalities of the key proposition on Lambda_N, with
/// A = sum_l (H_{B_l})^2. Outside N >= 2n + 1 the witnesses are still
/// reported but flagged out of regime.
inline PropositionKeyReport verify_proposition_key(const NNInteraction& inter, int D, int n, int N,
                                                   const EigenSolveConfig& cfg = {},
                                                   std::uint64_t matvec_limit = kDefaultMatvecLimit,
                                                   double kernel_tol = kKernelTol) {
  if (n < 1) throw ConfigError("box side n must be >= 1");
  require_proposition_key_feasible(inter.d, D, N, matvec_limit);
  const auto g = LatticeGeometry::lambda(D, N);
  if (n + 1 > g.side()) throw ConfigError("box B_n does not fit in Lambda_N");

  PropositionKeyReport rep;
  rep.D = D;
  rep.n = n;
  rep.N = N;
  rep.in_regime = N >= 2 * n + 1;

  const auto all = sites(g);
  const auto dec = build_QR(inter, periodic_edges(g), all, g, matvec_limit);
  const Index dim = dec.H.dimension();
  rep.gamma_box = spectral_gap(subsystem_hamiltonian(inter, open_box(D, n)), kernel_tol, cfg).gap;

  const double nn = n, n1 = n + 1.0;
  const double c_edge = nn * std::pow(n1, D - 1);
  rep.upper_coefficient_H = c_edge + 2.0 * std::pow(n1, D - 2);
  rep.upper_coefficient_QR = nn * nn * std::pow(n1, D - 2);
  rep.lower_coefficient = c_edge * rep.gamma_box;

  CompositeOperator A(dim), box_sum(dim);
  for (const auto& l : all) {
    auto Hb = std::make_shared<const ManyBodyOperator>(
        build_hamiltonian(inter, box_edges(BoxRegion{l, n}, g), all, g, matvec_limit));
    A.add_product(1.0, {Hb, Hb});
    box_sum.add(1.0, Hb);
  }
  auto H = std::make_shared<const ManyBodyOperator>(dec.H);

  box_sum.add(-c_edge, H);
  std::mt19937_64 rng(cfg.seed);
  for (int t = 0; t < 5; ++t)
    rep.counting_residual = std::max(rep.counting_residual, box_sum.apply(random_unit_vector(dim, rng)).norm());

  CompositeOperator upper(dim);
  upper.add(rep.upper_coefficient_H, H)
      .add(rep.upper_coefficient_QR, dec.Q)
      .add(rep.upper_coefficient_QR, dec.R)
      .add(-1.0, A);
  rep.witness_upper = min_eigenvalue(upper, cfg);

  CompositeOperator lower(dim);
  lower.add(1.0, A).add(-rep.lower_coefficient, H);
  rep.witness_lower = min_eigenvalue(lower, cfg);
  return rep;
}

}  // namespace gapcert
