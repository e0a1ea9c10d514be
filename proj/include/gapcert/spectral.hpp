#pragma once

// Lowest eigenvalues of Hermitian operators, spectral gaps above an exact
// (frustration-free) kernel, and operator-inequality witnesses.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gapcert/error.hpp"
#include "gapcert/operator.hpp"

namespace gapcert {

inline constexpr std::uint64_t kDefaultDensePathLimit = std::uint64_t{1} << 10;
inline constexpr double kKernelTol = 1e-8;
inline constexpr double kSolverTol = 1e-10;

/// Dense-path threshold; GAPCERT_DENSE_LIMIT overrides the built-in 2^10.
inline std::uint64_t default_dense_path_limit() {
  if (const char* env = std::getenv("GAPCERT_DENSE_LIMIT")) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return kDefaultDensePathLimit;
}

struct EigenSolveConfig {
  int k = 4;
  /// Cap on operator applications for the iterative path.
  long max_matvecs = 200000;
  /// Residual bound ||Hv - lambda v|| for an accepted eigenpair.
  double tol = kSolverTol;
  /// Krylov subspace size per restart cycle.
  int krylov_dim = 150;
  std::uint64_t seed = 20190219;
  std::uint64_t dense_limit = default_dense_path_limit();
  /// Upper bound for adaptive k escalation in spectral_gap.
  int max_k = 64;
};

enum class SolveMethod { Dense, Iterative };

inline std::string to_string(SolveMethod m) {
  return m == SolveMethod::Dense ? "dense" : "iterative";
}

struct EigenResult {
  std::vector<double> values;  // ascending
  std::vector<double> residuals;
  SolveMethod method = SolveMethod::Dense;
  bool converged = true;
  long matvecs = 0;
};

namespace detail {

template <LinearMap Op>
EigenResult dense_lowest(const Op& op, int k, std::uint64_t dense_limit) {
  const cmat m = dense_matrix(op, std::max<std::uint64_t>(dense_limit, 1));
  const cmat h = 0.5 * (m + m.adjoint());
  EigenResult res;
  res.method = SolveMethod::Dense;
  const Index n = h.rows();
  const Index kk = std::min<Index>(k, n);
  if (h.imag().cwiseAbs().maxCoeff() == 0.0) {
    const Eigen::MatrixXd r = h.real();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
    if (es.info() != Eigen::Success) throw SolverError("dense eigensolver failed");
    for (Index i = 0; i < kk; ++i) {
      const double lam = es.eigenvalues()(i);
      res.values.push_back(lam);
      res.residuals.push_back((r * es.eigenvectors().col(i) - lam * es.eigenvectors().col(i)).norm());
    }
  } else {
    Eigen::SelfAdjointEigenSolver<cmat> es(h);
    if (es.info() != Eigen::Success) throw SolverError("dense eigensolver failed");
    for (Index i = 0; i < kk; ++i) {
      const double lam = es.eigenvalues()(i);
      res.values.push_back(lam);
      res.residuals.push_back((h * es.eigenvectors().col(i) - lam * es.eigenvectors().col(i)).norm());
    }
  }
  return res;
}

// Lanczos with full reorthogonalization, explicit restarts and locking.
// Each cycle runs in the orthogonal complement of the locked vectors, so a
// degenerate eigenvalue is picked up once per cycle until its multiplicity
// is exhausted. After k pairs are locked, further cycles search the
// complement for anything below the current k-th value.
template <LinearMap Op>
EigenResult lanczos_lowest(const Op& op, int k, const EigenSolveConfig& cfg) {
  const Index dim = op.dimension();
  std::mt19937_64 rng(cfg.seed);
  EigenResult res;
  res.method = SolveMethod::Iterative;

  cmat X(dim, 0);
  std::vector<double> lvals, lres;

  auto project_out = [&](cvec& w) {
    if (X.cols() == 0) return;
    for (int pass = 0; pass < 2; ++pass) w.noalias() -= X * (X.adjoint() * w);
  };
  auto lock = [&](cvec y, double val, double r) {
    project_out(y);
    y.normalize();
    X.conservativeResize(Eigen::NoChange, X.cols() + 1);
    X.col(X.cols() - 1) = y;
    lvals.push_back(val);
    lres.push_back(r);
  };
  auto kth_locked = [&]() {
    std::vector<double> s = lvals;
    std::sort(s.begin(), s.end());
    return s[static_cast<std::size_t>(k) - 1];
  };

  cvec start;
  bool have_start = false;
  cvec w(dim), tmp(dim);

  while (true) {
    const Index remaining = dim - X.cols();
    if (remaining <= 0) break;
    const bool verifying = static_cast<int>(lvals.size()) >= k;
    const int want = verifying ? 1 : std::max(1, k - static_cast<int>(lvals.size()));
    if (res.matvecs >= cfg.max_matvecs) {
      res.converged = false;
      break;
    }

    cvec v0 = have_start ? start : random_unit_vector(dim, rng);
    project_out(v0);
    if (v0.norm() < 1e-8) {
      v0 = random_unit_vector(dim, rng);
      project_out(v0);
    }
    v0.normalize();
    have_start = false;

    const Index m_max = std::min<Index>(cfg.krylov_dim, remaining);
    cmat V(dim, m_max + 1);
    V.col(0) = v0;
    std::vector<double> alpha, beta;
    bool exhausted = false;
    Index m = 0;
    double scale = 0.0;
    for (Index j = 0; j < m_max; ++j) {
      tmp = V.col(j);
      w.setZero();
      op.apply_add(tmp, w, cplx{1.0});
      ++res.matvecs;
      project_out(w);
      const double a = std::real(tmp.dot(w));
      w -= a * tmp;
      if (j > 0) w -= beta.back() * V.col(j - 1);
      for (int pass = 0; pass < 2; ++pass) {
        const cvec h = V.leftCols(j + 1).adjoint() * w;
        w.noalias() -= V.leftCols(j + 1) * h;
        project_out(w);
      }
      alpha.push_back(a);
      m = j + 1;
      const double b = w.norm();
      scale = std::max(scale, std::abs(a) + b);
      if (b <= 1e-13 * std::max(scale, 1.0)) {
        exhausted = true;
        break;
      }
      beta.push_back(b);
      V.col(j + 1) = w / b;
      if (m >= want && (m % 10 == 0 || m == m_max)) {
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
        for (Index i = 0; i < m; ++i) T(i, i) = alpha[static_cast<std::size_t>(i)];
        for (Index i = 0; i + 1 < m; ++i) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        bool all = true;
        for (int i = 0; i < want && i < m; ++i)
          if (std::abs(b * es.eigenvectors()(m - 1, i)) > 0.1 * cfg.tol) all = false;
        if (all) break;
      }
    }

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (Index i = 0; i < m; ++i) T(i, i) = alpha[static_cast<std::size_t>(i)];
    for (Index i = 0; i + 1 < m; ++i) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    if (es.info() != Eigen::Success) throw SolverError("tridiagonal eigensolver failed");

    const Index take = exhausted ? m : std::min<Index>(want, m);
    int newly_locked = 0;
    for (Index i = 0; i < take; ++i) {
      const double theta = es.eigenvalues()(i);
      cvec y = V.leftCols(m) * es.eigenvectors().col(i).cast<cplx>();
      y.normalize();
      w.setZero();
      op.apply_add(y, w, cplx{1.0});
      ++res.matvecs;
      const double r = (w - theta * y).norm();
      if (r > cfg.tol) {
        start = y;
        have_start = true;
        break;
      }
      if (verifying) {
        if (theta < kth_locked() - cfg.tol) {
          lock(y, theta, r);
          ++newly_locked;
        }
        break;
      }
      lock(y, theta, r);
      ++newly_locked;
    }
    if (verifying && newly_locked == 0 && !have_start) break;
  }

  std::vector<std::size_t> order(lvals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return lvals[a] < lvals[b]; });
  for (std::size_t i = 0; i < order.size() && static_cast<int>(i) < k; ++i) {
    res.values.push_back(lvals[order[i]]);
    res.residuals.push_back(lres[order[i]]);
  }
  if (static_cast<int>(res.values.size()) < std::min<Index>(k, dim)) res.converged = false;
  return res;
}

}  // namespace detail

/// The k smallest eigenvalues with residuals. Dimensions up to
/// cfg.dense_limit use a full dense eigendecomposition.
template <LinearMap Op>
EigenResult lowest_eigenvalues(const Op& op, const EigenSolveConfig& cfg = {}) {
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  if (!(cfg.tol > 0.0)) throw ConfigError("solver tolerance must be positive");
  const Index dim = op.dimension();
  const int k = static_cast<int>(std::min<Index>(cfg.k, dim));
  if (static_cast<std::uint64_t>(dim) <= cfg.dense_limit) return detail::dense_lowest(op, k, cfg.dense_limit);
  return detail::lanczos_lowest(op, k, cfg);
}

struct GapReport {
  std::vector<double> eigenvalues;
  std::vector<double> residuals;
  int kernel_dim = 0;
  double gap = 0.0;
  double kernel_tol = kKernelTol;
  SolveMethod method = SolveMethod::Dense;
  Index dimension = 0;
};

/// Smallest eigenvalue strictly above kernel_tol. The number of requested
/// eigenvalues doubles (up to cfg.max_k) until one clears the kernel.
template <LinearMap Op>
GapReport spectral_gap(const Op& op, double kernel_tol = kKernelTol, EigenSolveConfig cfg = {}) {
  const Index dim = op.dimension();
  const bool dense = static_cast<std::uint64_t>(dim) <= cfg.dense_limit;
  const int requested = std::max(cfg.k, 1);
  int k = dense ? static_cast<int>(dim) : std::max(cfg.k, 2);
  while (true) {
    cfg.k = k;
    auto res = lowest_eigenvalues(op, cfg);
    if (!res.converged)
      throw SolverError("eigensolver did not converge within " + std::to_string(cfg.max_matvecs) +
                        " matvecs");
    const auto it = std::find_if(res.values.begin(), res.values.end(),
                                 [&](double v) { return v > kernel_tol; });
    if (it != res.values.end()) {
      GapReport rep;
      rep.kernel_dim = static_cast<int>(it - res.values.begin());
      rep.gap = *it;
      rep.kernel_tol = kernel_tol;
      rep.method = res.method;
      rep.dimension = dim;
      const std::size_t shown = std::min<std::size_t>(
          res.values.size(), static_cast<std::size_t>(std::max(requested, rep.kernel_dim + 2)));
      rep.eigenvalues.assign(res.values.begin(), res.values.begin() + static_cast<long>(shown));
      rep.residuals.assign(res.residuals.begin(), res.residuals.begin() + static_cast<long>(shown));
      return rep;
    }
    if (k >= dim) throw SolverError("operator has no eigenvalue above the kernel tolerance");
    if (k >= cfg.max_k)
      throw SolverError("all " + std::to_string(k) +
                        " computed eigenvalues lie in the kernel; raise max_k");
    k = static_cast<int>(std::min<Index>({static_cast<Index>(2 * k), static_cast<Index>(cfg.max_k), dim}));
  }
}

template <LinearMap Op>
double min_eigenvalue(const Op& op, EigenSolveConfig cfg = {}) {
  cfg.k = 1;
  const auto res = lowest_eigenvalues(op, cfg);
  if (!res.converged || res.values.empty()) throw SolverError("minimum eigenvalue did not converge");
  return res.values.front();
}

/// True iff the lowest eigenvalue is at most tol (nontrivial kernel).
template <LinearMap Op>
bool is_frustration_free(const Op& op, double tol = kKernelTol, const EigenSolveConfig& cfg = {}) {
  return min_eigenvalue(op, cfg) <= tol;
}

struct InequalityResult {
  bool passed = false;
  double witness = 0.0;  // minimum eigenvalue of lhs - rhs
};

/// lhs >= rhs in the operator order iff min eig(lhs - rhs) >= -tol.
inline InequalityResult check_operator_inequality(const CompositeOperator& lhs,
                                                  const CompositeOperator& rhs,
                                                  double tol = kWitnessTol,
                                                  const EigenSolveConfig& cfg = {}) {
  CompositeOperator diff(lhs.dimension());
  diff.add(1.0, lhs).add(-1.0, rhs);
  InequalityResult r;
  r.witness = min_eigenvalue(diff, cfg);
  r.passed = r.witness >= -tol;
  return r;
}

}  // namespace gapcert
