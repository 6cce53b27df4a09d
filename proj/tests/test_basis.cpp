#include "pie/basis.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace pie;

namespace
{

TriangleMesh unit_cube() { return make_box(1.0, 1.0, 1.0, 1.0); }

// In-plane unit normal of edge (a, b) of triangle t pointing away from the triangle.
Vec3 edge_outward(const TriangleMesh &m, int t, const Vec3 &a, const Vec3 &b)
{
  Vec3 u = (b - a).cross(m.normal(t)).normalized();
  if ((m.centroid(t) - a).dot(u) > 0.0)
  {
    u = -u;
  }
  return u;
}

Eigen::VectorXd singular_values(const Eigen::SparseMatrix<double> &A)
{
  return Eigen::BDCSVD<Eigen::MatrixXd>(Eigen::MatrixXd(A)).singularValues();
}

}  // namespace

TEST(Rwg, OneFunctionPerEdgeOnClosedMesh)
{
  const TriangleMesh m = unit_cube();
  const RwgBasis rwg(m);
  EXPECT_EQ(rwg.size(), 18);
  for (int i = 0; i < rwg.size(); ++i)
  {
    EXPECT_LT(rwg.triangle(i, 0), rwg.triangle(i, 1));
  }
}

TEST(Rwg, ZeroAtFreeVertex)
{
  const TriangleMesh m = make_sphere(1.0, 1);
  const RwgBasis rwg(m);
  for (int i = 0; i < rwg.size(); ++i)
  {
    for (int s = 0; s < 2; ++s)
    {
      const Vec3 p = m.vertex(rwg.free_vertex(i, s));
      EXPECT_LT(rwg.eval_on(i, rwg.triangle(i, s), p).norm(), 1e-12);
    }
  }
}

TEST(Rwg, UnitFluxAcrossOwnEdge)
{
  const TriangleMesh m = make_sphere(1.0, 1);
  const RwgBasis rwg(m);
  for (int i = 0; i < rwg.size(); ++i)
  {
    const Edge &E = m.edges()[rwg.edge(i)];
    const Vec3 a = m.vertex(E.v[0]), b = m.vertex(E.v[1]);
    const Vec3 mid = 0.5 * (a + b);
    const double l = E.length;
    const Vec3 u = edge_outward(m, E.tri_plus, a, b);
    EXPECT_NEAR(rwg.eval(i, mid).dot(u), 1.0 / l, 1e-12 / l);
    for (double s : {0.1, 0.37, 0.9})
    {
      const Vec3 r = a + s * (b - a);
      const Vec3 w = edge_outward(m, E.tri_minus, a, b);
      EXPECT_NEAR(rwg.eval_on(i, E.tri_plus, r).dot(u), 1.0 / l, 1e-12 / l);
      EXPECT_NEAR(rwg.eval_on(i, E.tri_minus, r).dot(-w), 1.0 / l, 1e-12 / l);
    }
  }
}

TEST(Rwg, DivergenceIsInverseArea)
{
  const TriangleMesh m = make_sphere(2.0, 1);
  const RwgBasis rwg(m);
  for (int i = 0; i < rwg.size(); ++i)
  {
    const int tp = rwg.triangle(i, 0), tm = rwg.triangle(i, 1);
    EXPECT_NEAR(rwg.divergence_on(i, tp), 1.0 / m.area(tp), 1e-12 / m.area(tp));
    EXPECT_NEAR(rwg.divergence_on(i, tm), -1.0 / m.area(tm), 1e-12 / m.area(tm));
    // Finite-difference divergence of the affine field in the plane of T+.
    const Vec3 c = m.centroid(tp);
    const Vec3 e1 = (m.corner(tp, 1) - m.corner(tp, 0)).normalized();
    const Vec3 e2 = m.normal(tp).cross(e1);
    const double h = 1e-4;
    const double fd = (rwg.eval_on(i, tp, c + h * e1) - rwg.eval_on(i, tp, c - h * e1)).dot(e1) /
                        (2 * h) +
                      (rwg.eval_on(i, tp, c + h * e2) - rwg.eval_on(i, tp, c - h * e2)).dot(e2) /
                        (2 * h);
    EXPECT_NEAR(fd, 1.0 / m.area(tp), 1e-8 / m.area(tp));
  }
}

TEST(Rwg, NormalComponentContinuousAcrossAllEdges)
{
  const TriangleMesh m = make_sphere(1.0, 2);
  const RwgBasis rwg(m);
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int e = 0; e < m.num_edges(); ++e)
  {
    const Edge &E = m.edges()[e];
    const Vec3 a = m.vertex(E.v[0]), b = m.vertex(E.v[1]);
    const Vec3 r = a + uni(gen) * (b - a);
    const Vec3 up = edge_outward(m, E.tri_plus, a, b);
    const Vec3 um = edge_outward(m, E.tri_minus, a, b);
    std::set<int> fns;
    for (const auto &[i, s] : rwg.on_triangle(E.tri_plus))
    {
      fns.insert(i);
    }
    for (const auto &[i, s] : rwg.on_triangle(E.tri_minus))
    {
      fns.insert(i);
    }
    for (int i : fns)
    {
      const double fp = rwg.eval_on(i, E.tri_plus, r).dot(up);
      const double fm = -rwg.eval_on(i, E.tri_minus, r).dot(um);
      const double scale = 1.0 / E.length;
      EXPECT_LT(std::abs(fp - fm), 1e-12 * scale) << "edge " << e << " fn " << i;
    }
  }
}

TEST(Rwg, StrictAndPermissiveEvaluation)
{
  const TriangleMesh m = unit_cube();
  const RwgBasis rwg(m);
  const Vec3 far(5.0, 5.0, 5.0);
  EXPECT_THROW(rwg.eval(0, far), OutOfSupport);
  EXPECT_EQ(rwg.eval(0, far, EvalMode::Permissive), Vec3::Zero());
  // A point on a triangle outside the support.
  for (int t = 0; t < m.num_triangles(); ++t)
  {
    if (t != rwg.triangle(0, 0) && t != rwg.triangle(0, 1))
    {
      const Vec3 c = m.centroid(t);
      const bool on_support = detail::point_on_triangle(m, rwg.triangle(0, 0), c) ||
                              detail::point_on_triangle(m, rwg.triangle(0, 1), c);
      if (!on_support)
      {
        EXPECT_THROW(rwg.eval(0, c), OutOfSupport);
        EXPECT_EQ(rwg.eval_on(0, t, c), Vec3::Zero());
      }
    }
  }
}

TEST(Rwg, ScaleCovariance)
{
  const TriangleMesh m = make_sphere(1.0, 1);
  const double s = 3.5;
  const TriangleMesh ms = m.scaled(s);
  const RwgBasis a(m), b(ms);
  ASSERT_EQ(a.size(), b.size());
  for (int i = 0; i < a.size(); ++i)
  {
    const int t = a.triangle(i, 0);
    const Vec3 r = m.corner(t, 0) * 0.2 + m.corner(t, 1) * 0.3 + m.corner(t, 2) * 0.5;
    const Vec3 fa = a.eval(i, r), fb = b.eval(i, s * r);
    EXPECT_LT((fb - fa / s).norm(), 1e-12 * fa.norm());
  }
}

TEST(Pulse, IntegralsAndPartition)
{
  const TriangleMesh m = make_sphere(1.0, 1);
  const PulseBasis p(m);
  EXPECT_EQ(p.size(), m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t)
  {
    EXPECT_DOUBLE_EQ(p.integral_unit(t), m.area(t));
    EXPECT_DOUBLE_EQ(p.integral_normalized(t), 1.0);
    const Vec3 r = 0.2 * m.corner(t, 0) + 0.3 * m.corner(t, 1) + 0.5 * m.corner(t, 2);
    double sum = 0.0;
    for (int q = 0; q < m.num_triangles(); ++q)
    {
      sum += p.unit(q, r);
    }
    EXPECT_EQ(sum, 1.0);
    EXPECT_DOUBLE_EQ(p.normalized(t, r), 1.0 / m.area(t));
  }
}

TEST(Divergence, ColumnsAndTotalCharge)
{
  const TriangleMesh m = make_sphere(1.0, 2);
  const RwgBasis rwg(m);
  const DivergenceMap dm = divergence_map(rwg);
  ASSERT_EQ(dm.rows(), m.num_triangles());
  ASSERT_EQ(dm.cols(), rwg.size());
  for (int e = 0; e < dm.cols(); ++e)
  {
    std::vector<std::pair<int, double>> nz;
    for (Eigen::SparseMatrix<double>::InnerIterator it(dm.D, e); it; ++it)
    {
      nz.push_back({int(it.row()), it.value()});
    }
    ASSERT_EQ(nz.size(), 2u);
    EXPECT_LT(nz[0].second * nz[1].second, 0.0);
    const int tp = rwg.triangle(e, 0), tm = rwg.triangle(e, 1);
    EXPECT_DOUBLE_EQ(dm.D.coeff(tp, e), 1.0 / m.area(tp));
    EXPECT_DOUBLE_EQ(dm.D.coeff(tm, e), -1.0 / m.area(tm));
  }
  std::mt19937 gen(3);
  std::normal_distribution<double> nd;
  Eigen::VectorXd u(rwg.size());
  for (auto &x : u)
  {
    x = nd(gen);
  }
  Eigen::VectorXd areas(m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t)
  {
    areas[t] = m.area(t);
  }
  const Eigen::VectorXd q = dm.D * u;
  EXPECT_LT(std::abs(areas.dot(q)), 1e-12 * u.norm());
}

TEST(Divergence, ScalesAsInverseArea)
{
  const TriangleMesh m = make_sphere(1.0, 1);
  const double s = 0.25;
  const TriangleMesh ms = m.scaled(s);
  const RwgBasis a(m), b(ms);
  const Eigen::MatrixXd Da(divergence_map(a).D), Db(divergence_map(b).D);
  EXPECT_LT((Db - Da / (s * s)).norm(), 1e-12 * Db.norm());
}

TEST(Bc, OneFunctionPerParentEdge)
{
  const TriangleMesh m = unit_cube();
  const BasisSet b(m);
  EXPECT_EQ(b.bc.size(), 18);
  EXPECT_EQ(b.refined.mesh.num_triangles(), 72);
}

TEST(Bc, SupportIsTheTwoVertexCells)
{
  for (int level : {0, 1})
  {
    const TriangleMesh m = level == 0 ? unit_cube() : make_sphere(1.0, 1);
    const BasisSet b(m);
    for (int e = 0; e < b.bc.size(); ++e)
    {
      const Edge &E = m.edges()[e];
      std::set<int> expect_fine, expect_parent, got_fine, got_parent;
      for (int tau = 0; tau < b.refined.mesh.num_triangles(); ++tau)
      {
        const int cv = b.refined.corner_vertex[tau];
        if (cv == E.v[0] || cv == E.v[1])
        {
          expect_fine.insert(tau);
        }
      }
      for (int t = 0; t < m.num_triangles(); ++t)
      {
        for (int v : m.triangles()[t])
        {
          if (v == E.v[0] || v == E.v[1])
          {
            expect_parent.insert(t);
          }
        }
      }
      for (const auto &p : b.bc.pieces(e))
      {
        if (std::abs(p.beta) > 0.0 || p.alpha.norm() > 0.0)
        {
          got_fine.insert(p.triangle);
          got_parent.insert(b.refined.parent_triangle[p.triangle]);
        }
      }
      EXPECT_EQ(got_fine, expect_fine) << "edge " << e;
      EXPECT_EQ(got_parent, expect_parent) << "edge " << e;
      std::set<int> ends{b.bc.source_vertex(e), b.bc.sink_vertex(e)};
      EXPECT_EQ(ends, (std::set<int>{E.v[0], E.v[1]}));
    }
  }
}

TEST(Bc, ChargeSpreadEquallyOverVertexCells)
{
  const TriangleMesh m = make_sphere(1.0, 1);
  const BasisSet b(m);
  const TriangleMesh &fm = b.refined.mesh;
  std::vector<int> cell_size(m.num_vertices(), 0);
  for (int tau = 0; tau < fm.num_triangles(); ++tau)
  {
    ++cell_size[b.refined.corner_vertex[tau]];
  }
  for (int e = 0; e < b.bc.size(); ++e)
  {
    double total = 0.0;
    for (const auto &p : b.bc.pieces(e))
    {
      const int cv = b.refined.corner_vertex[p.triangle];
      const double q = p.divergence() * fm.area(p.triangle);
      total += q;
      if (cv == b.bc.source_vertex(e))
      {
        EXPECT_NEAR(q, 1.0 / cell_size[cv], 1e-12);
      }
      else
      {
        EXPECT_NEAR(q, -1.0 / cell_size[cv], 1e-12);
      }
    }
    EXPECT_NEAR(total, 0.0, 1e-12);
  }
}

TEST(Bc, UnitFluxAcrossDualEdge)
{
  const TriangleMesh m = make_sphere(1.0, 1);
  const BasisSet b(m);
  const TriangleMesh &fm = b.refined.mesh;
  for (int e = 0; e < b.bc.size(); ++e)
  {
    const Edge &E = m.edges()[e];
    const int mid = b.refined.midpoint_vertex(e);
    double flux = 0.0;
    for (int t : {E.tri_plus, E.tri_minus})
    {
      const int g = b.refined.centroid_vertex(t);
      const Vec3 a = fm.vertex(mid), c = fm.vertex(g);
      // Fine triangle on the source side of the half dual edge.
      int src = -1;
      for (const auto &p : b.bc.pieces(e))
      {
        const auto &tv = fm.triangles()[p.triangle];
        const bool has_m = tv[0] == mid || tv[1] == mid || tv[2] == mid;
        const bool has_g = tv[0] == g || tv[1] == g || tv[2] == g;
        if (has_m && has_g && b.refined.corner_vertex[p.triangle] == b.bc.source_vertex(e))
        {
          src = int(&p - b.bc.pieces(e).data());
        }
      }
      ASSERT_GE(src, 0);
      const VectorPiece &p = b.bc.pieces(e)[src];
      const Vec3 u = edge_outward(fm, p.triangle, a, c);
      const auto &gl = gauss_legendre_cached(4);
      for (int q = 0; q < 4; ++q)
      {
        const Vec3 r = 0.5 * (a + c) + 0.5 * gl.x[q] * (c - a);
        flux += 0.5 * gl.w[q] * (c - a).norm() * p(r).dot(u);
      }
    }
    EXPECT_NEAR(flux, 1.0, 1e-12);
  }
}

TEST(Bc, RefinementMismatchDetected)
{
  const TriangleMesh a = make_sphere(1.0, 1);
  const TriangleMesh c = make_sphere(1.0, 2);
  const BarycentricMesh rc = barycentric_refine(c);
  EXPECT_THROW(build_bc(a, rc), RefinementMismatch);
  const TriangleMesh a2 = a.scaled(2.0);
  const BarycentricMesh ra2 = barycentric_refine(a2);
  EXPECT_THROW(build_bc(a, ra2), RefinementMismatch);
}

TEST(Gram, PulseGramIsIdentity)
{
  const TriangleMesh m = make_sphere(1.0, 1);
  const BasisSet b(m);
  const GramMatrices g = gram_matrices(b.rwg, b.bc, b.pulses);
  EXPECT_EQ(g.P.rows(), m.num_triangles());
  const Eigen::MatrixXd P(g.P);
  EXPECT_EQ(P, Eigen::MatrixXd::Identity(m.num_triangles(), m.num_triangles()));
  EXPECT_EQ(g.Ix.rows(), b.rwg.size());
  EXPECT_EQ(g.Ix.cols(), b.bc.size());
}

TEST(Gram, MixedGramMatchesQuadrature)
{
  const TriangleMesh m = unit_cube();
  const BasisSet b(m);
  const Eigen::MatrixXd Ix(mixed_gram(b.rwg, b.bc));
  const TriangleMesh &fm = b.refined.mesh;
  const TriangleRule &rule = TriangleRule::conical(6);
  for (int i = 0; i < b.rwg.size(); ++i)
  {
    for (int j = 0; j < b.bc.size(); ++j)
    {
      double v = 0.0;
      for (int tau = 0; tau < fm.num_triangles(); ++tau)
      {
        const int t = b.refined.parent_triangle[tau];
        const Vec3 &n = m.normal(t);
        v += integrate_smooth(triangle_of(fm, tau),
                              [&](const Vec3 &r)
                              {
                                return n.cross(b.rwg.eval_on(i, t, r))
                                  .dot(b.bc.eval(j, r, EvalMode::Permissive));
                              },
                              rule);
      }
      EXPECT_NEAR(Ix(i, j), v, 1e-12);
    }
  }
}

TEST(Gram, DisjointSupportsGiveZero)
{
  const TriangleMesh m = make_sphere(1.0, 2);
  const BasisSet b(m);
  const Eigen::MatrixXd Ix(mixed_gram(b.rwg, b.bc));
  for (int i = 0; i < b.rwg.size(); ++i)
  {
    const std::set<int> fv{m.triangles()[b.rwg.triangle(i, 0)].begin(),
                           m.triangles()[b.rwg.triangle(i, 0)].end()};
    std::set<int> supp(fv);
    for (int v : m.triangles()[b.rwg.triangle(i, 1)])
    {
      supp.insert(v);
    }
    for (int j = 0; j < b.bc.size(); ++j)
    {
      const Edge &E = m.edges()[j];
      if (!supp.count(E.v[0]) && !supp.count(E.v[1]))
      {
        EXPECT_EQ(Ix(i, j), 0.0);
      }
    }
  }
}

TEST(Gram, MixedGramInvertibleOnTestMeshes)
{
  std::vector<TriangleMesh> meshes;
  meshes.push_back(unit_cube());
  meshes.push_back(make_box(1.0, 0.5, 0.25, 0.2));
  for (int level : {0, 1, 2, 3})
  {
    meshes.push_back(make_sphere(1.0, level));
  }
  for (const auto &m : meshes)
  {
    const BasisSet b(m);
    const Eigen::VectorXd sv = singular_values(mixed_gram(b.rwg, b.bc));
    EXPECT_GT(sv.minCoeff(), 1e-6 * sv.maxCoeff()) << m.num_triangles() << " triangles";
  }
}

TEST(Gram, MixedGramConditionOnLevelTwoSphere)
{
  const TriangleMesh m = make_sphere(1.0, 2);
  const BasisSet b(m);
  const Eigen::VectorXd sv = singular_values(mixed_gram(b.rwg, b.bc));
  const double cond = sv.maxCoeff() / sv.minCoeff();
  RecordProperty("condition", std::to_string(cond));
  EXPECT_LT(cond, 100.0);
  // Regression baseline.
  EXPECT_NEAR(cond, 2.9193, 1e-3);
}
