#include "pie/mesh.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace pie;

namespace
{

TriangleMesh unit_cube() { return make_box(1.0, 1.0, 1.0, 1.0); }

Vec3 area_weighted_normal_sum(const TriangleMesh &m)
{
  Vec3 s = Vec3::Zero();
  for (int t = 0; t < m.num_triangles(); ++t)
  {
    s += m.area(t) * m.normal(t);
  }
  return s;
}

std::string temp_path(const std::string &name)
{
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Mesh, UnitCubeCounts)
{
  const TriangleMesh m = unit_cube();
  EXPECT_EQ(m.num_vertices(), 8);
  EXPECT_EQ(m.num_triangles(), 12);
  EXPECT_EQ(m.num_edges(), 18);
  EXPECT_NEAR(m.total_area(), 6.0, 1e-14);
  EXPECT_NEAR(m.signed_volume(), 1.0, 1e-14);
  EXPECT_NEAR(m.avg_edge_length(), (12.0 + 6.0 * std::sqrt(2.0)) / 18.0, 1e-14);
  EXPECT_NEAR(avg_edge_length(m), 1.138, 1e-3);
  EXPECT_TRUE(m.is_closed());
  EXPECT_EQ(m.num_components(), 1);
}

TEST(Mesh, EdgeTrianglesAreOrdered)
{
  const TriangleMesh m = make_sphere(1.0, 2);
  for (const Edge &e : m.edges())
  {
    EXPECT_LT(e.tri_plus, e.tri_minus);
    EXPECT_LT(e.v[0], e.v[1]);
  }
}

TEST(Mesh, ClosedSurfaceIdentities)
{
  for (const TriangleMesh &m : {unit_cube(), make_sphere(1.0, 3), make_box(1.0, 2.0, 0.5, 0.3)})
  {
    EXPECT_LT(area_weighted_normal_sum(m).norm(), 1e-10 * m.total_area());
    EXPECT_EQ(2 * m.num_edges(), 3 * m.num_triangles());
    EXPECT_GT(m.signed_volume(), 0.0);
  }
}

TEST(Mesh, SingleTriangleOpenMode)
{
  MeshOptions opts;
  opts.allow_open = true;
  const TriangleMesh m({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, std::sqrt(3.0) / 2, 0)}, {{0, 1, 2}}, opts);
  EXPECT_NEAR(m.avg_edge_length(), 1.0, 1e-15);
  EXPECT_FALSE(m.is_closed());
  EXPECT_THROW(TriangleMesh({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}, {{0, 1, 2}}), TopologyError);
}

TEST(Mesh, ScalingScalesEdgeLength)
{
  const TriangleMesh m = make_sphere(1.0, 1);
  EXPECT_NEAR(m.scaled(2.5).avg_edge_length() / m.avg_edge_length(), 2.5, 1e-13);
}

TEST(Mesh, RemovedTriangleIsRejected)
{
  const TriangleMesh m = unit_cube();
  auto tris = m.triangles();
  tris.pop_back();
  EXPECT_THROW(TriangleMesh(m.vertices(), tris), TopologyError);
}

TEST(Mesh, InconsistentOrientationIsRejected)
{
  const TriangleMesh m = unit_cube();
  auto tris = m.triangles();
  std::swap(tris[0][1], tris[0][2]);
  EXPECT_THROW(TriangleMesh(m.vertices(), tris), TopologyError);
}

TEST(Mesh, NonManifoldEdgeIsRejected)
{
  const TriangleMesh m = unit_cube();
  auto verts = m.vertices();
  auto tris = m.triangles();
  verts.emplace_back(5, 5, 5);
  tris.push_back({tris[0][0], tris[0][1], int(verts.size()) - 1});
  EXPECT_THROW(TriangleMesh(verts, tris), TopologyError);
}

TEST(Mesh, DegenerateTriangleIsRejected)
{
  MeshOptions opts;
  opts.allow_open = true;
  opts.weld = false;
  EXPECT_THROW(TriangleMesh({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)}, {{0, 1, 2}}, opts),
               DegenerateError);
}

TEST(Mesh, InwardOrientationIsRepaired)
{
  const TriangleMesh m = make_sphere(2.0, 1);
  auto tris = m.triangles();
  for (auto &t : tris)
  {
    std::swap(t[1], t[2]);
  }
  const TriangleMesh fixed(m.vertices(), tris);
  EXPECT_GT(fixed.signed_volume(), 0.0);
  EXPECT_NEAR(fixed.signed_volume(), m.signed_volume(), 1e-12);
}

TEST(Mesh, NativeRoundTripIsBitIdentical)
{
  const TriangleMesh m = make_sphere(1.0, 2).scaled(0.3);
  const std::string a = temp_path("pie_rt_a.mesh"), b = temp_path("pie_rt_b.mesh");
  write_mesh(a, m);
  const TriangleMesh r = load_mesh(a, MeshFormat::NativeAscii);
  write_mesh(b, r);
  ASSERT_EQ(r.num_vertices(), m.num_vertices());
  for (int i = 0; i < m.num_vertices(); ++i)
  {
    EXPECT_EQ(r.vertex(i), m.vertex(i));
  }
  EXPECT_EQ(r.triangles(), m.triangles());
  std::ifstream fa(a), fb(b);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Mesh, MalformedFilesRaiseParseError)
{
  std::istringstream bad1("pie-mesh 2\n0 0\n");
  EXPECT_THROW(read_native_mesh(bad1), ParseError);
  std::istringstream bad2("pie-mesh 1\n3 1\nv 0 0 0\nv 1 0 x\nv 0 1 0\nt 0 1 2\n");
  EXPECT_THROW(read_native_mesh(bad2), ParseError);
  std::istringstream bad3("pie-mesh 1\n3 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\nt 0 1 7\n");
  EXPECT_THROW(read_native_mesh(bad3), ParseError);
  EXPECT_THROW(load_mesh("/nonexistent/file.mesh", MeshFormat::NativeAscii), ParseError);
}

TEST(Mesh, StlIsWelded)
{
  const TriangleMesh cube = unit_cube();
  std::ostringstream out;
  out << "solid cube\n";
  for (int t = 0; t < cube.num_triangles(); ++t)
  {
    out << " facet normal 0 0 0\n  outer loop\n";
    for (int j = 0; j < 3; ++j)
    {
      const Vec3 p = cube.corner(t, j) + Vec3::Constant(1e-12);
      out << "   vertex " << p.x() << " " << p.y() << " " << p.z() << "\n";
    }
    out << "  endloop\n endfacet\n";
  }
  out << "endsolid cube\n";
  std::istringstream in(out.str());
  const TriangleMesh m = read_stl_ascii(in);
  EXPECT_EQ(m.num_vertices(), 8);
  EXPECT_EQ(m.num_edges(), 18);
  EXPECT_NEAR(m.signed_volume(), 1.0, 1e-9);
}

TEST(Sphere, CountsAndAreaMonotone)
{
  EXPECT_EQ(make_sphere(1.0, 0).num_vertices(), 12);
  EXPECT_EQ(make_sphere(1.0, 3).num_triangles(), 1280);
  double prev = 0.0;
  for (int level = 0; level <= 4; ++level)
  {
    const TriangleMesh m = make_sphere(1.0, level);
    EXPECT_EQ(m.num_triangles(), 20 * (1 << (2 * level)));
    EXPECT_GT(m.total_area(), prev);
    EXPECT_LT(m.total_area(), pi);
    prev = m.total_area();
    for (const auto &v : m.vertices())
    {
      EXPECT_NEAR(v.norm(), 0.5, 1e-15);
    }
  }
}

TEST(Box, DegenerateAndCounts)
{
  EXPECT_THROW(make_box(1.0, 1.0, 0.0, 0.1), InvalidGeometry);
  const TriangleMesh m = make_box(1.0, 1.0, 1.0, 1.0 / 16);
  EXPECT_EQ(m.num_triangles(), 6 * 16 * 16 * 2);
  EXPECT_NEAR(m.signed_volume(), 1.0, 1e-12);
}

TEST(Srr, DefaultArrayIsClosedWithFourComponents)
{
  const TriangleMesh m = make_srr_array(SrrParams{});
  EXPECT_TRUE(m.is_closed());
  EXPECT_EQ(m.num_components(), 4);
  EXPECT_GT(m.num_triangles(), 2500);
  EXPECT_LT(m.num_triangles(), 4500);
  EXPECT_GT(m.signed_volume(), 0.0);
  SrrParams bad;
  bad.width = 1.0e-6;
  EXPECT_THROW(make_srr_array(bad), InvalidGeometry);
  bad = SrrParams{};
  bad.gap = 9e-6;
  EXPECT_THROW(make_srr_array(bad), InvalidGeometry);
}

TEST(Barycentric, CountsMapsAndArea)
{
  const TriangleMesh cube = unit_cube();
  const BarycentricMesh b = barycentric_refine(cube);
  EXPECT_EQ(b.mesh.num_triangles(), 72);
  EXPECT_NEAR(b.mesh.total_area(), cube.total_area(), 1e-12 * cube.total_area());
  EXPECT_NEAR(b.mesh.signed_volume(), cube.signed_volume(), 1e-12);
  std::vector<double> child_area(cube.num_triangles(), 0.0);
  for (int c = 0; c < b.mesh.num_triangles(); ++c)
  {
    EXPECT_EQ(b.parent_triangle[c], c / 6);
    child_area[b.parent_triangle[c]] += b.mesh.area(c);
    EXPECT_GT(b.mesh.normal(c).dot(cube.normal(c / 6)), 1.0 - 1e-12);
  }
  for (int t = 0; t < cube.num_triangles(); ++t)
  {
    EXPECT_NEAR(child_area[t] / cube.area(t), 1.0, 1e-12);
  }
  for (int e = 0; e < cube.num_edges(); ++e)
  {
    for (int ce : b.parent_edge[e])
    {
      EXPECT_NEAR(b.mesh.edges()[ce].length, 0.5 * cube.edges()[e].length, 1e-14);
    }
  }
  const TriangleMesh s = make_sphere(1.0, 2);
  EXPECT_EQ(barycentric_refine(s).mesh.num_triangles(), 6 * s.num_triangles());
}
