#include <gtest/gtest.h>

#include <random>

#include "gapcert/lattice.hpp"
#include "gapcert/models.hpp"
#include "gapcert/operator.hpp"
#include "oracle.hpp"

using namespace gapcert;

namespace {

cmat random_matrix(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  cmat m(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) m(i, j) = cplx(g(rng), g(rng));
  return m;
}

double max_abs(const cmat& m) { return m.cwiseAbs().maxCoeff(); }

// Bonds of a D-torus of side L with their direction, in the oracle's numbering.
struct Bond {
  int i, j, dir;
};

std::vector<Bond> directed_bonds(int D, int L) {
  std::vector<Bond> out;
  const auto plain = oracle::torus_bonds(D, L);
  for (std::size_t k = 0; k < plain.size(); ++k)
    out.push_back({plain[k].first, plain[k].second, static_cast<int>(k % static_cast<std::size_t>(D))});
  return out;
}

}  // namespace

TEST(ProjectionCheck, AcceptsProjectionsAndReportsDefects) {
  EXPECT_TRUE(projection_check(heisenberg_ferro().P));
  cmat notherm = cmat::Zero(2, 2);
  notherm(0, 1) = 1.0;
  EXPECT_GT(projection_defect(notherm).hermitian, 0.5);
  const cmat twice = 2.0 * cmat::Identity(2, 2);
  EXPECT_NEAR(projection_defect(twice).idempotent, 2.0 * std::sqrt(2.0), 1e-12);
  EXPECT_FALSE(projection_check(twice));
  EXPECT_THROW(projection_defect(cmat::Zero(2, 3)), ConfigError);
}

TEST(ProjectionCheck, CheckedInteractionNamesTheNorms) {
  try {
    NNInteraction::checked(2, 2.0 * cmat::Identity(4, 4));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("||P^2 - P||"), std::string::npos);
  }
  EXPECT_THROW(NNInteraction::checked(2, cmat::Identity(3, 3)), ConfigError);
  EXPECT_THROW(NNInteraction::checked(1, cmat::Identity(1, 1)), ConfigError);
}

TEST(HilbertDimension, OverflowIsALimitError) {
  EXPECT_EQ(hilbert_dimension(3, 4, 1000), 81u);
  EXPECT_THROW(hilbert_dimension(2, 11, 1024), LimitError);
  EXPECT_THROW(hilbert_dimension(2, 200, kDefaultMatvecLimit), LimitError);
  EXPECT_THROW(ManyBodyOperator(2, 40), LimitError);
}

TEST(ManyBody, TwoSiteTermMatchesDigitOracleAnyPlacement) {
  for (int d : {2, 3}) {
    const int L = d == 2 ? 5 : 4;
    const cmat local = random_matrix(d * d, 11 + d);
    for (auto pos : std::vector<std::vector<std::size_t>>{{0, 1}, {3, 1}, {0, static_cast<std::size_t>(L - 1)}}) {
      ManyBodyOperator op(d, static_cast<std::size_t>(L));
      op.add_term(pos, local);
      const cmat ref = oracle::embed(local, d, L, {static_cast<int>(pos[0]), static_cast<int>(pos[1])});
      EXPECT_LT(max_abs(dense_matrix(op) - ref), 1e-13) << "d=" << d;
    }
  }
}

TEST(ManyBody, ThreeSiteTermMatchesDigitOracle) {
  const cmat local = random_matrix(8, 5);
  ManyBodyOperator op(2, 6);
  op.add_term({4, 0, 2}, local);
  EXPECT_LT(max_abs(dense_matrix(op) - oracle::embed(local, 2, 6, {4, 0, 2})), 1e-13);
}

TEST(ManyBody, RejectsBadTerms) {
  ManyBodyOperator op(2, 3);
  EXPECT_THROW(op.add_term({0, 0}, cmat::Identity(4, 4)), ConfigError);
  EXPECT_THROW(op.add_term({0, 3}, cmat::Identity(4, 4)), ConfigError);
  EXPECT_THROW(op.add_term({0, 1}, cmat::Identity(3, 3)), ConfigError);
  EXPECT_THROW(op.add_term({}, cmat::Identity(1, 1)), ConfigError);
  EXPECT_THROW(op.apply(cvec::Zero(7)), ConfigError);
}

TEST(ManyBody, ApplyIsLinearAndScales) {
  ManyBodyOperator op(3, 3);
  op.add_term({0, 2}, aklt().P);
  std::mt19937_64 rng(3);
  const cvec x = random_unit_vector(op.dimension(), rng);
  cvec y = cvec::Zero(op.dimension());
  op.apply_add(x, y, cplx(0.0, 2.0));
  EXPECT_LT((y - cplx(0.0, 2.0) * op.apply(x)).norm(), 1e-14);
}

TEST(Composite, ProductsApplyRightToLeft) {
  auto a = std::make_shared<const ManyBodyOperator>([] {
    ManyBodyOperator op(2, 3);
    op.add_term({0, 1}, random_matrix(4, 1));
    return op;
  }());
  auto b = std::make_shared<const ManyBodyOperator>([] {
    ManyBodyOperator op(2, 3);
    op.add_term({1, 2}, random_matrix(4, 2));
    return op;
  }());
  CompositeOperator c(8);
  c.add_product(2.0, {a, b}).add_identity(-1.0).add(0.5, a);
  const cmat A = dense_matrix(*a), B = dense_matrix(*b);
  const cmat expect = 2.0 * A * B - cmat::Identity(8, 8) + 0.5 * A;
  EXPECT_LT(max_abs(dense_matrix(c) - expect), 1e-12);
  EXPECT_GT(max_abs(A * B - B * A), 1e-3);  // the order matters for these factors

  CompositeOperator twice(8);
  twice.add(2.0, c);
  EXPECT_LT(max_abs(dense_matrix(twice) - 2.0 * expect), 1e-12);
  EXPECT_THROW(c.add(1.0, CompositeOperator(4)), ConfigError);
}

TEST(DenseMatrix, RespectsLimit) {
  ManyBodyOperator op(2, 11);
  EXPECT_THROW(dense_matrix(op, 1024), LimitError);
}

TEST(Hamiltonian, TorusMatchesBondOracle) {
  const auto P = random_projection(2, 2, 17).P;
  for (auto [D, L] : std::vector<std::pair<int, int>>{{1, 7}, {2, 3}, {3, 2}}) {
    const auto g = LatticeGeometry::torus(D, L);
    const auto s = sites(g);
    const auto H = build_hamiltonian(NNInteraction::checked(2, P), periodic_edges(g), s, g);
    const cmat ref = oracle::bond_hamiltonian(P, 2, static_cast<int>(s.size()), oracle::torus_bonds(D, L));
    EXPECT_LT(max_abs(dense_matrix(H) - ref), 1e-12) << "D=" << D << " L=" << L;
  }
}

TEST(Hamiltonian, LambdaMatchesShiftedTorusOracle) {
  const auto inter = random_projection(2, 1, 4);
  for (auto [D, N] : std::vector<std::pair<int, int>>{{1, 3}, {2, 1}, {3, 1}}) {
    const auto g = LatticeGeometry::lambda(D, N);
    const auto s = sites(g);
    const auto H = build_hamiltonian(inter, periodic_edges(g), s, g);
    const cmat ref = oracle::bond_hamiltonian(inter.P, 2, static_cast<int>(s.size()), oracle::torus_bonds(D, 2 * N));
    EXPECT_LT(max_abs(dense_matrix(H) - ref), 1e-12) << "D=" << D << " N=" << N;
  }
}

TEST(Hamiltonian, OpenBoxMatchesBondOracle) {
  const auto inter = aklt();
  const auto g = LatticeGeometry::infinite(2);
  const BoxRegion box{g.origin(), 1};
  const auto H = build_hamiltonian(inter, box_edges(box, g), box_sites(box, g), g);
  EXPECT_LT(max_abs(dense_matrix(H) - oracle::bond_hamiltonian(inter.P, 3, 4, oracle::open_bonds(2, 2))), 1e-12);
}

TEST(Hamiltonian, ReversedInteractionIsNotSymmetrizedAway) {
  // A non-symmetric P must act on (base, head) in that order.
  const auto inter = random_projection(2, 1, 99);
  const auto g = LatticeGeometry::infinite(1);
  const std::vector<Site> s{Site{{0}}, Site{{1}}};
  const auto H = build_hamiltonian(inter, {Edge{Site{{0}}, 0}}, s, g);
  EXPECT_LT(max_abs(dense_matrix(H) - inter.P), 1e-14);
}

TEST(Decomposition, QAndRMatchPairOracle) {
  const auto inter = random_projection(3, 4, 23);
  const int D = 2, L = 2, nsites = 4;
  const auto g = LatticeGeometry::torus(D, L);
  const auto s = sites(g);
  const auto dec = build_QR(inter, periodic_edges(g), s, g);

  const auto bonds = directed_bonds(D, L);
  std::vector<cmat> h;
  for (const auto& b : bonds) h.push_back(oracle::embed(inter.P, 3, nsites, {b.i, b.j}));
  const Index dim = 81;
  cmat qa = cmat::Zero(dim, dim), qb = qa, r = qa;
  for (std::size_t a = 0; a < bonds.size(); ++a)
    for (std::size_t b = 0; b < bonds.size(); ++b) {
      if (a == b) continue;
      const bool touch = bonds[a].i == bonds[b].i || bonds[a].i == bonds[b].j || bonds[a].j == bonds[b].i ||
                         bonds[a].j == bonds[b].j;
      const cmat prod = h[a] * h[b];
      if (!touch)
        r += prod;
      else if (bonds[a].dir == bonds[b].dir)
        qa += prod;
      else
        qb += prod;
    }
  EXPECT_LT(max_abs(dense_matrix(dec.Q_aligned) - qa), 1e-11);
  EXPECT_LT(max_abs(dense_matrix(dec.Q_bent) - qb), 1e-11);
  EXPECT_LT(max_abs(dense_matrix(dec.Q) - qa - qb), 1e-11);
  EXPECT_LT(max_abs(dense_matrix(dec.R) - r), 1e-11);
}

TEST(Decomposition, SquareIdentityHoldsDensely) {
  const auto inter = random_projection(3, 4, 5);
  const auto g = LatticeGeometry::lambda(1, 2);
  const auto s = sites(g);
  const auto dec = build_QR(inter, periodic_edges(g), s, g);
  const cmat H = dense_matrix(dec.H);
  EXPECT_LT(max_abs(H * H - H - dense_matrix(dec.Q) - dense_matrix(dec.R)), 1e-11);
}

TEST(Decomposition, SquareIdentityVerifierPasses) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto inter = random_projection(2, 2, seed);
    const auto g = LatticeGeometry::lambda(2, 1);
    const auto s = sites(g);
    const auto rep = verify_square_identity(inter, periodic_edges(g), s, g, 20, kIdentityTol, seed);
    EXPECT_TRUE(rep.passed) << rep.max_residual;
    EXPECT_EQ(rep.trials, 20);
  }
}

TEST(Decomposition, SquareIdentityVerifierDetectsNonProjection) {
  // 2P is not idempotent, so H^2 != H + Q + R.
  NNInteraction bad{2, 2.0 * heisenberg_ferro().P};
  const auto g = LatticeGeometry::lambda(1, 2);
  const auto s = sites(g);
  const auto rep = verify_square_identity(bad, periodic_edges(g), s, g, 5);
  EXPECT_FALSE(rep.passed);
}

TEST(CauchySchwarz, WitnessNonNegativeForRandomPairs) {
  for (int d : {2, 3})
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto a = random_projection(d, 1 + static_cast<int>(s % (d * d - 1)), 2 * s);
      const auto b = random_projection(d, 1 + static_cast<int>((s + 1) % (d * d - 1)), 2 * s + 1);
      EXPECT_GE(cauchy_schwarz_witness(a, b), -1e-10);
    }
}

TEST(CauchySchwarz, WitnessAgreesWithOracleAndCanBeNegativeWithoutProjections) {
  const auto a = random_projection(2, 2, 8), b = random_projection(2, 3, 9);
  const cmat A = oracle::embed(a.P, 2, 3, {0, 1}), B = oracle::embed(b.P, 2, 3, {1, 2});
  const double ref = oracle::spectrum(A * B + B * A + A + B)(0);
  EXPECT_NEAR(cauchy_schwarz_witness(a, b), ref, 1e-12);
  EXPECT_THROW(cauchy_schwarz_witness(a, aklt()), ConfigError);
}
