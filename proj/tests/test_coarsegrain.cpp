#include <gtest/gtest.h>

#include "gapcert/coarsegrain.hpp"
#include "gapcert/models.hpp"
#include "oracle.hpp"

using namespace gapcert;

namespace {

cmat single_site(double a, double b) {
  cmat m = cmat::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

cmat plus_projector() { return cmat::Constant(2, 2, 0.5); }

FiniteRangeSpec spec_with(int R, std::vector<std::pair<std::vector<Site3>, cmat>> shapes) {
  FiniteRangeSpec s{2, R, {}};
  for (auto& [o, P] : shapes) s.shapes.push_back(InteractionShape::checked(2, o, P));
  return s;
}

BlockType block(bool x, bool y, bool z) { return BlockType{{x, y, z}}; }

}  // namespace

TEST(Shapes, Diameter) {
  const std::vector<Site3> pair{{0, 0, 0}, {1, 0, 0}};
  const std::vector<Site3> spread{{0, 0, 0}, {1, 1, 0}, {0, 0, 2}};
  EXPECT_EQ(diam1(pair), 1);
  EXPECT_EQ(diam1(spread), 4);
  EXPECT_EQ(diam1(std::vector<Site3>{{0, 0, 0}}), 0);
}

TEST(Shapes, RangeValidation) {
  EXPECT_FALSE(validate_range(heisenberg_ferro_fr(1)));
  EXPECT_TRUE(validate_range(heisenberg_ferro_fr(3)));
  EXPECT_TRUE(fits_cube_blocks(heisenberg_ferro_fr(1)));
  EXPECT_THROW(require_odd_range(2), ConfigError);
  EXPECT_THROW(require_odd_range(0), ConfigError);
  const auto wide = spec_with(1, {{{{0, 0, 0}, {2, 0, 0}}, heisenberg_ferro().P}});
  EXPECT_FALSE(fits_cube_blocks(wide));
  EXPECT_THROW(coarse_grain(wide), ConfigError);
}

TEST(Shapes, CheckedSortsOffsetsAndPermutesFactors) {
  const cmat a = single_site(1, 0), b = plus_projector();
  const auto s = InteractionShape::checked(2, {{1, 0, 0}, {0, 0, 0}}, detail::kron(a, b));
  ASSERT_EQ(s.offsets.size(), 2u);
  EXPECT_EQ(s.offsets[0], (Site3{0, 0, 0}));
  EXPECT_LT((s.projection - detail::kron(b, a)).norm(), 1e-15);

  const cmat c = single_site(0, 1);
  const auto t = InteractionShape::checked(2, {{0, 1, 0}, {0, 0, 0}, {1, 0, 0}}, detail::kron(detail::kron(a, b), c));
  // sorted: (0,0,0) was factor 1, (0,1,0) factor 0, (1,0,0) factor 2
  EXPECT_LT((t.projection - detail::kron(detail::kron(b, a), c)).norm(), 1e-15);
}

TEST(Shapes, CheckedRejectsBadInput) {
  const cmat P = heisenberg_ferro().P;
  EXPECT_THROW(InteractionShape::checked(2, {{1, 0, 0}, {2, 0, 0}}, P), ConfigError);
  EXPECT_THROW(InteractionShape::checked(2, {{0, 0, 0}, {0, 0, 0}}, P), ConfigError);
  EXPECT_THROW(InteractionShape::checked(2, {{0, 0, 0}}, P), ConfigError);
  EXPECT_THROW(InteractionShape::checked(2, {{0, 0, 0}, {1, 0, 0}}, 2.0 * P), ConfigError);
  EXPECT_THROW(InteractionShape::checked(2, {}, P), ConfigError);
}

TEST(Cubes, IndexingAndRegions) {
  EXPECT_EQ(cube_of({1, 0, 0}, 3), (Site3{0, 0, 0}));
  EXPECT_EQ(cube_of({2, 0, 0}, 3), (Site3{1, 0, 0}));
  EXPECT_EQ(cube_of({-2, 4, -1}, 3), (Site3{-1, 1, 0}));
  EXPECT_EQ(cube_of({-1, 0, 3}, 1), (Site3{-1, 0, 3}));
  EXPECT_EQ(cube_at({1, 0, 0}, 3).sites().size(), 27u);
  EXPECT_EQ(build_Cn_region(1, 1).size(), 8u);
  EXPECT_EQ(build_Cn_region(1, 3).size(), 216u);
  EXPECT_EQ(build_Cn_region(2, 3).size(), 729u);
  EXPECT_THROW(build_Cn_region(0, 1), ConfigError);
}

TEST(Cubes, CoverBlockOfTerms) {
  const std::vector<Site3> inside{{-1, -1, -1}, {1, 1, 1}};
  EXPECT_EQ(cover_block(inside, 3).second.cover_class(), CoverClass::OnSite);
  const std::vector<Site3> across{{1, 0, 0}, {2, 0, 0}};
  const auto [lo, t] = cover_block(across, 3);
  EXPECT_EQ(lo, (Site3{0, 0, 0}));
  EXPECT_EQ(t.name(), "face-x");
  const std::vector<Site3> corner{{0, 0, 0}, {1, 1, 1}};
  EXPECT_EQ(cover_block(corner, 1).second.cover_class(), CoverClass::CornerAdj);
  const std::vector<Site3> three{{0, 0, 0}, {2, 0, 0}};
  EXPECT_THROW(cover_block(three, 1), ConfigError);
  EXPECT_EQ(BlockType::all().size(), 8u);
}

TEST(RegionHamiltonian, UnitCubesMatchOpenBoxOracle) {
  const auto H = build_HCn(heisenberg_ferro_fr(1), 1);
  const cmat ref = oracle::bond_hamiltonian(heisenberg_ferro().P, 2, 8, oracle::open_bonds(3, 2));
  EXPECT_LT((dense_matrix(H) - ref).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(RegionHamiltonian, EmptySpecAndOnSiteShape) {
  const FiniteRangeSpec empty{2, 1, {}};
  EXPECT_LT(dense_matrix(build_HCn(empty, 1)).norm(), 1e-15);

  const auto onsite = spec_with(1, {{{{0, 0, 0}}, single_site(0, 1)}});
  const cmat H = dense_matrix(build_HCn(onsite, 1));
  for (Index i = 0; i < H.rows(); ++i)
    EXPECT_NEAR(H(i, i).real(), static_cast<double>(std::popcount(static_cast<unsigned>(i))), 1e-14);
  EXPECT_NEAR(H.norm(), oracle::spectrum(H).norm(), 1e-10);  // diagonal
}

TEST(GapBound, FiniteRangeFormula) {
  EXPECT_NEAR(gap_bound_fr(0.5, 2, 1.0, 0.5), 0.25, 1e-15);
  EXPECT_NEAR(gap_bound_fr(0.1, 10, 2.0, 3.0), -0.4, 1e-15);
  EXPECT_THROW(gap_bound_fr(0.5, 2, 0.0, 1.0), ConfigError);
  EXPECT_THROW(gap_bound_fr(0.5, 2, 1.0, -1.0), ConfigError);
  EXPECT_THROW(gap_bound_fr(0.5, 0, 1.0, 1.0), ConfigError);
}

TEST(CoarseGrain, UnitRangeIsIdentity) {
  for (const auto& spec : {heisenberg_ferro_fr(1),
                           spec_with(1, {{{{0, 0, 0}}, single_site(1, 0)},
                                         {{{0, 0, 0}, {0, 0, 1}}, detail::kron(plus_projector(), single_site(0, 1))}})}) {
    const auto cg = coarse_grain(spec);
    const auto rep = check_r1_identity(spec, cg);
    EXPECT_TRUE(rep.identical) << rep.detail;
    EXPECT_EQ(rep.coarse_terms, spec.shapes.size());
    EXPECT_EQ(cg.metaspin_dim, 2u);
  }
}

TEST(CoarseGrain, SharedSupportMergesIntoOneComponent) {
  const auto spec = spec_with(1, {{{{0, 0, 0}, {1, 0, 0}}, random_projection(2, 1, 1).P},
                                  {{{0, 0, 0}, {1, 0, 0}}, random_projection(2, 1, 2).P}});
  const auto cg = coarse_grain(spec);
  const auto& face = cg.at(block(true, false, false));
  ASSERT_EQ(face.components.size(), 1u);
  EXPECT_EQ(face.components[0].terms.size(), 2u);
  const cmat ref = oracle::spectrum(spec.shapes[0].projection + spec.shapes[1].projection).head(1);
  const cmat K = *face.components[0].kernel;
  EXPECT_NEAR(K.trace().real(), 2.0, 1e-10);  // two rank-1 terms on a 4-dim space
  EXPECT_LT(ref.norm(), 1e-10);
  EXPECT_FALSE(check_r1_identity(spec, cg).identical);
  EXPECT_TRUE(check_class_projections(cg).passed());
  const auto gs = verify_ground_space_preservation(spec, cg, {2, 2, 1});
  EXPECT_TRUE(gs.passed) << gs.residual;
}

TEST(CoarseGrain, RangeThreeNearestNeighbourClasses) {
  const auto spec = heisenberg_ferro_fr(3);
  const auto cg = coarse_grain(spec);
  EXPECT_EQ(cg.count(CoverClass::OnSite), 54u);
  EXPECT_EQ(cg.count(CoverClass::Face), 27u);
  EXPECT_EQ(cg.count(CoverClass::EdgeAdj), 0u);
  EXPECT_EQ(cg.count(CoverClass::CornerAdj), 0u);
  EXPECT_EQ(cg.at(block(true, false, false)).terms.size(), 9u);
  EXPECT_EQ(cg.at(block(true, false, false)).components.size(), 9u);
  EXPECT_TRUE(cg.at(block(true, false, false)).materialized());
  EXPECT_FALSE(cg.at(block(false, false, false)).materialized());

  const auto proj = check_class_projections(cg);
  EXPECT_TRUE(proj.passed());
  EXPECT_EQ(proj.unmaterialized, 1u);
  EXPECT_EQ(proj.checked, 27u);

  const auto cons = check_term_conservation(spec, cg, 3);
  EXPECT_TRUE(cons.ok());
  EXPECT_EQ(cons.original_terms, 27u * 27u * 3u);
  EXPECT_EQ(cons.per_class.at(CoverClass::OnSite), 27u * 54u);
  EXPECT_THROW(check_term_conservation(spec, cg, 2), ConfigError);
  EXPECT_THROW(verify_ground_space_preservation(spec, cg, {2, 1, 1}), LimitError);
}

TEST(CoarseGrain, DiagonalShapesProduceEdgeAndCornerClasses) {
  const cmat P = heisenberg_ferro().P;
  const auto spec = spec_with(1, {{{{0, 0, 0}, {1, 1, 0}}, P}, {{{0, 0, 0}, {1, 0, 0}}, P},
                                  {{{0, 0, 0}, {1, 1, 1}}, random_projection(2, 2, 5).P}});
  const auto cg = coarse_grain(spec);
  EXPECT_EQ(cg.count(CoverClass::EdgeAdj), 1u);
  EXPECT_EQ(cg.count(CoverClass::CornerAdj), 1u);
  EXPECT_EQ(cg.count(CoverClass::Face), 1u);
  EXPECT_TRUE(check_r1_identity(spec, cg).identical);
  EXPECT_TRUE(check_term_conservation(spec, cg, 3).ok());
  const auto gs = verify_ground_space_preservation(spec, cg, {2, 2, 2});
  EXPECT_TRUE(gs.passed) << gs.residual;
  EXPECT_EQ(gs.kernel_dim_original, gs.kernel_dim_coarse);
  EXPECT_GT(gs.kernel_dim_original, 0);
}

TEST(CoarseGrain, CoarseProjectionIsTensorOfComponentKernels) {
  // Two components with interleaved supports give I - K1 (x) K2 after
  // reordering the factors lexicographically.
  const cmat K1 = cmat::Identity(4, 4) - random_projection(2, 1, 3).P;
  const cmat K2 = cmat::Identity(4, 4) - random_projection(2, 2, 4).P;
  CoarseInteraction ci{block(true, false, false), {}, {}};
  ci.components.push_back({{{0, 0, 0}, {1, 0, 0}}, {0}, K1});
  ci.components.push_back({{{0, 1, 0}, {1, 1, 0}}, {1}, K2});
  const cmat M = coarse_projection(ci, 2);
  // support order: (0,0,0) (0,1,0) (1,0,0) (1,1,0)
  const cmat ref = cmat::Identity(16, 16) - oracle::embed(K1, 2, 4, {0, 2}) * oracle::embed(K2, 2, 4, {1, 3});
  EXPECT_LT((M - ref).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_TRUE(projection_check(M));

  ci.components.push_back({{{0, 0, 1}}, {2}, std::nullopt});
  EXPECT_FALSE(ci.materialized());
  EXPECT_THROW(coarse_projection(ci, 2), LimitError);
}

TEST(Adjacency, CubeNeighbourCounts) {
  const auto inf = metacube_adjacency();
  EXPECT_EQ(inf.face, 6);
  EXPECT_EQ(inf.edge, 12);
  EXPECT_EQ(inf.corner, 8);
  const auto t3 = metacube_adjacency(3);
  EXPECT_EQ(t3.face + t3.edge + t3.corner, 26);
  EXPECT_EQ(t3.face, 6);
  const auto t2 = metacube_adjacency(2);
  EXPECT_EQ(t2.face, 3);
  EXPECT_EQ(t2.edge, 3);
  EXPECT_EQ(t2.corner, 1);
  EXPECT_THROW(metacube_adjacency(-1), ConfigError);
}
