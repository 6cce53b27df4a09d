#include "pie/operators.hpp"

#include "oracle.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

using namespace pie;

namespace
{

const BasisSet &sphere0()
{
  static const TriangleMesh m = make_sphere(1.0, 0);
  static const BasisSet bs(m);
  return bs;
}

const BasisSet &sphere1()
{
  static const TriangleMesh m = make_sphere(1.0, 1);
  static const BasisSet bs(m);
  return bs;
}

MatrixC area_weighted(const BasisSet &bs, const MatrixC &M)
{
  MatrixC out = M;
  for (int p = 0; p < bs.num_triangles(); ++p)
  {
    out.row(p) *= bs.mesh->area(p);
  }
  return out;
}

bool bitwise_equal(const MatrixC &a, const MatrixC &b)
{
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(cplx) * a.size()) == 0;
}

}  // namespace

TEST(Lss, StaticSingleLayerIsSymmetricPositiveDefinite)
{
  const BasisSet &bs = sphere1();
  const KernelBlocks kb = assemble_kernel_blocks(bs, 0.0, KernelTag::Exterior);
  const MatrixC S = area_weighted(bs, kb.Lss.matrix);
  EXPECT_LT((S - S.transpose()).norm() / S.norm(), 1e-10);
  EXPECT_LT(S.imag().norm(), 1e-14 * S.norm());
  const Eigen::MatrixXd Sr = S.real();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Sr + Sr.transpose()));
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(Lss, UnsymmetrizedAssemblyIsNearlyReciprocal)
{
  const BasisSet &bs = sphere1();
  AssemblyOptions opt;
  opt.symmetrize = false;
  const KernelBlocks kb = assemble_kernel_blocks(bs, cplx(3.0, -1.0), KernelTag::Interior, opt);
  const MatrixC S = area_weighted(bs, kb.Lss.matrix);
  EXPECT_LT((S - S.transpose()).norm() / S.norm(), 1e-4);
}

TEST(Lss, EntriesMatchPairIntegralOracle)
{
  const BasisSet &bs = sphere0();
  const cplx k(0.0);
  const KernelBlocks kb = assemble_kernel_blocks(bs, k, KernelTag::Exterior);
  const TriangleMesh &m = *bs.mesh;
  // A far pair (opposite faces) and a pair sharing one vertex.
  int far = 0;
  double best = 0.0;
  for (int q = 1; q < m.num_triangles(); ++q)
  {
    const double d = (m.centroid(q) - m.centroid(0)).norm();
    if (d > best)
    {
      best = d;
      far = q;
    }
  }
  for (int q : {far})
  {
    const Triangle P = triangle_of(m, 0), Q = triangle_of(m, q);
    const cplx exact = oracle::subdivided_integral(
                         P, [&](const Vec3 &r)
                         { return oracle::subdivided_integral(
                             Q, [&](const Vec3 &rp) { return oracle::greens(k, (r - rp).norm()); }, 2); },
                         2) /
                       P.area;
    EXPECT_LT(oracle::rel(kb.Lss.matrix(0, q), exact), 1e-6) << q;
  }
}

TEST(Lss, StaticEntriesScaleWithCubeOfSize)
{
  const TriangleMesh m1 = make_sphere(1.0, 0);
  const TriangleMesh m3 = make_sphere(3.0, 0);
  const BasisSet b1(m1), b3(m3);
  const MatrixC S1 = area_weighted(b1, assemble_kernel_blocks(b1, 0.0, KernelTag::Exterior).Lss.matrix);
  const MatrixC S3 = area_weighted(b3, assemble_kernel_blocks(b3, 0.0, KernelTag::Exterior).Lss.matrix);
  EXPECT_LT((S3 - 27.0 * S1).norm() / S3.norm(), 1e-12);
}

TEST(Mpv, StaticRowSumsAreMinusHalf)
{
  const BasisSet &bs = sphere1();
  const KernelBlocks kb = assemble_kernel_blocks(bs, 0.0, KernelTag::Exterior);
  const VectorC rows = kb.Mpv.matrix.rowwise().sum();
  for (Eigen::Index p = 0; p < rows.size(); ++p)
  {
    EXPECT_NEAR(rows[p].real(), -0.5, 1e-6) << p;
    EXPECT_NEAR(rows[p].imag(), 0.0, 1e-12) << p;
  }
}

TEST(Mpv, FarEntryMatchesSubdividedOracle)
{
  const BasisSet &bs = sphere1();
  const TriangleMesh &m = *bs.mesh;
  const cplx k(2.0, -0.1);
  const KernelBlocks kb = assemble_kernel_blocks(bs, k, KernelTag::Interior);
  int far = 0;
  double best = 0.0;
  for (int q = 1; q < m.num_triangles(); ++q)
  {
    const double d = (m.centroid(q) - m.centroid(0)).norm();
    if (d > best)
    {
      best = d;
      far = q;
    }
  }
  const Triangle P = triangle_of(m, 0), Q = triangle_of(m, far);
  const Vec3c nq = m.normal(far).cast<cplx>();
  const cplx exact = oracle::subdivided_integral(
                       P, [&](const Vec3 &r)
                       { return oracle::subdivided_integral(
                           Q, [&](const Vec3 &rp) { return -dotu(nq, oracle::greens_grad(k, r, rp)); }, 1); },
                       1) /
                     P.area;
  EXPECT_LT(oracle::rel(kb.Mpv.matrix(0, far), exact), 1e-6);
  // Centroid approximation as a coarse sanity bound.
  const cplx approx = -dotu(nq, oracle::greens_grad(k, m.centroid(0), m.centroid(far))) * m.area(far);
  EXPECT_LT(oracle::rel(kb.Mpv.matrix(0, far), approx), 5e-2);
}

TEST(Mpv, TransposeFormSatisfiesAdjointIdentity)
{
  const BasisSet &bs = sphere0();
  const KernelBlocks kb = assemble_kernel_blocks(bs, cplx(1.5, -0.5), KernelTag::Interior);
  const MatrixC lhs = area_weighted(bs, kb.MpvT.matrix);
  const MatrixC rhs = area_weighted(bs, kb.Mpv.matrix).transpose();
  EXPECT_LT((lhs - rhs).norm() / rhs.norm(), 1e-14);
}

TEST(Operators, BlocksAreContinuousInK)
{
  const BasisSet &bs = sphere0();
  const KernelBlocks b0 = assemble_kernel_blocks(bs, 0.0, KernelTag::Interior);
  const double h = 1e-3;
  const KernelBlocks b1 = assemble_kernel_blocks(bs, cplx(h, -h), KernelTag::Interior);
  const KernelBlocks b2 = assemble_kernel_blocks(bs, cplx(2 * h, -2 * h), KernelTag::Interior);
  auto pairs = [](const KernelBlocks &b) -> std::vector<const MatrixC *>
  { return {&b.Ktt.matrix, &b.Mpv.matrix, &b.Lss.matrix, &b.Knt.matrix}; };
  const auto p0 = pairs(b0), p1 = pairs(b1), p2 = pairs(b2);
  for (size_t i = 0; i < p0.size(); ++i)
  {
    const double d1 = (*p1[i] - *p0[i]).norm(), d2 = (*p2[i] - *p0[i]).norm();
    EXPECT_LT(d1, 10 * h * p0[i]->norm()) << i;
    EXPECT_GT(d2 / d1, 1.9) << i;  // at least linear in k
  }
}

TEST(Operators, StronglyDampedSeparatedPairsAreExactlyZero)
{
  const BasisSet &bs = sphere1();
  const cplx k(1e5, -1e5);
  const KernelBlocks kb = assemble_kernel_blocks(bs, k, KernelTag::Interior);
  const TriangleMesh &m = *bs.mesh;
  int zeros = 0;
  for (int p = 0; p < m.num_triangles(); ++p)
  {
    for (int q = 0; q < m.num_triangles(); ++q)
    {
      if (detail::pair_negligible(triangle_of(m, p), triangle_of(m, q), k,
                                  default_negligible_threshold))
      {
        EXPECT_EQ(kb.Lss.matrix(p, q), cplx(0.0));
        EXPECT_EQ(kb.Mpv.matrix(p, q), cplx(0.0));
        ++zeros;
      }
    }
  }
  EXPECT_GT(zeros, m.num_triangles() * (m.num_triangles() - 20));
  EXPECT_TRUE(kb.Ltt.matrix.allFinite());
}

TEST(Operators, TangentialCurlIntegratesToZeroOverClosedSurface)
{
  // Σ_p A_p K^(nt)[p, b] = ∮ n̂·∇×L[g_b] dS = 0.
  const BasisSet &bs = sphere1();
  for (cplx k : {cplx(0.0), cplx(2.0, -0.3)})
  {
    const KernelBlocks kb = assemble_kernel_blocks(bs, k, KernelTag::Interior);
    const MatrixC W = area_weighted(bs, kb.Knt.matrix);
    const VectorC col = W.colwise().sum().transpose();
    const double scale = W.cwiseAbs().colwise().sum().maxCoeff();
    EXPECT_LT(col.cwiseAbs().maxCoeff(), 1e-5 * scale) << k;
  }
}

TEST(Operators, AllBlocksFiniteWithExpectedShape)
{
  const BasisSet &bs = sphere0();
  const KernelBlocks kb = assemble_kernel_blocks(bs, cplx(4.0, -4.0), KernelTag::Interior);
  for (const OperatorBlock *b : kb.all())
  {
    EXPECT_TRUE(b->matrix.allFinite()) << b->name;
    EXPECT_NO_THROW(check_dimensions(bs, *b)) << b->name;
  }
  OperatorBlock bad = kb.Lss;
  bad.matrix = MatrixC::Zero(3, 3);
  EXPECT_THROW(check_dimensions(bs, bad), AssemblyError);
}

TEST(Operators, SingleBlockEntryPointsAgreeWithFusedAssembly)
{
  const BasisSet &bs = sphere0();
  const cplx k(1.0, -0.2);
  const KernelBlocks kb = assemble_kernel_blocks(bs, k, KernelTag::Interior);
  EXPECT_TRUE(bitwise_equal(assemble_L(bs, TestFamily::AreaPulse, BasisFamily::UnitPulse, k,
                                       KernelTag::Interior).matrix,
                            kb.Lss.matrix));
  EXPECT_TRUE(bitwise_equal(assemble_K(bs, TestFamily::RotatedRwg, k, KernelTag::Interior).matrix,
                            kb.Ktt.matrix));
  EXPECT_TRUE(bitwise_equal(assemble_M(bs, k, KernelTag::Interior, true).matrix, kb.MpvT.matrix));
  EXPECT_THROW(assemble_L(bs, TestFamily::RotatedRwg, BasisFamily::AreaPulse, k, KernelTag::Interior),
               AssemblyError);
}

TEST(Operators, ThreadCountDoesNotChangeBits)
{
  const BasisSet &bs = sphere1();
  AssemblyOptions one, three;
  three.threads = 3;
  const cplx k(2.0, -1.0);
  const KernelBlocks a = assemble_kernel_blocks(bs, k, KernelTag::Interior, one);
  const KernelBlocks b = assemble_kernel_blocks(bs, k, KernelTag::Interior, three);
  const auto va = a.all(), vb = b.all();
  for (size_t i = 0; i < va.size(); ++i)
  {
    EXPECT_TRUE(bitwise_equal(va[i]->matrix, vb[i]->matrix)) << va[i]->name;
  }
}

TEST(ExteriorCache, ReturnsBlocksIdenticalToFreshAssembly)
{
  const BasisSet &bs = sphere0();
  ExteriorCache cache;
  const double omega = 2 * pi * 1e8;
  bool hit = true;
  const auto first = cache.get(bs, omega, {}, &hit);
  EXPECT_FALSE(hit);
  const auto second = cache.get(bs, omega, {}, &hit);
  EXPECT_TRUE(hit);
  EXPECT_EQ(first.get(), second.get());
  AssemblyOptions o;
  o.normal_blocks = false;
  const KernelBlocks fresh =
    assemble_kernel_blocks(bs, free_space_wavenumber(omega), KernelTag::Exterior, o);
  EXPECT_TRUE(bitwise_equal(first->Ltt.matrix, fresh.Ltt.matrix));
  EXPECT_TRUE(bitwise_equal(first->Mpv.matrix, fresh.Mpv.matrix));
  EXPECT_EQ(cache.size(), 1u);
}

TEST(Pieblk, RoundTripPreservesBitsAndTags)
{
  const BasisSet &bs = sphere0();
  const KernelBlocks kb = assemble_kernel_blocks(bs, cplx(1.0, -1.0), KernelTag::Interior);
  const auto path = std::filesystem::temp_directory_path() / "pie_test_block.pieblk";
  write_pieblk(path.string(), kb.Ktt);
  const PieBlock back = read_pieblk(path.string());
  EXPECT_TRUE(bitwise_equal(back.matrix, kb.Ktt.matrix));
  EXPECT_NE(back.row_tag.find("nxRWG"), std::string::npos);
  EXPECT_NE(back.col_tag.find("BC"), std::string::npos);
  std::filesystem::remove(path);
  EXPECT_THROW(read_pieblk(path.string()), Error);
}
