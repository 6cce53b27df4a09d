#pragma once

// Closed, oriented triangle surface meshes: validation, connectivity, I/O, barycentric
// refinement and the geometry generators (icosphere, box, split-ring-resonator array).

#include "pie/core.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace pie
{

struct Edge
{
  std::array<int, 2> v;  // v[0] < v[1]
  int tri_plus = -1;     // lower triangle index; RWG current flows from tri_plus to tri_minus
  int tri_minus = -1;
  double length = 0.0;
};

struct MeshOptions
{
  bool allow_open = false;     // test-only mode for single-triangle quadrature checks
  bool weld = true;            // merge vertices closer than weld_tolerance x bbox diagonal
  double weld_tolerance = 1e-9;
  bool repair_orientation = true;
};

class TriangleMesh
{
public:
  TriangleMesh() = default;

  TriangleMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles,
               const MeshOptions &opts = {})
    : vertices_(std::move(vertices)), triangles_(std::move(triangles))
  {
    if (opts.weld)
    {
      Weld(opts.weld_tolerance);
    }
    Build(opts);
  }

  const std::vector<Vec3> &vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>> &triangles() const { return triangles_; }
  const std::vector<Edge> &edges() const { return edges_; }

  int num_vertices() const { return int(vertices_.size()); }
  int num_triangles() const { return int(triangles_.size()); }
  int num_edges() const { return int(edges_.size()); }
  bool is_closed() const { return closed_; }

  const Vec3 &vertex(int i) const { return vertices_[i]; }
  Vec3 corner(int t, int j) const { return vertices_[triangles_[t][j]]; }
  double area(int t) const { return area_[t]; }
  const Vec3 &centroid(int t) const { return centroid_[t]; }
  const Vec3 &normal(int t) const { return normal_[t]; }
  // Longest side; used as the triangle size in near-field criteria.
  double diameter(int t) const { return diameter_[t]; }

  // Edge index opposite local vertex j of triangle t.
  int triangle_edge(int t, int j) const { return tri_edges_[t][j]; }
  // +1 if t is the tri_plus of its edge opposite local vertex j, -1 otherwise.
  int triangle_edge_sign(int t, int j) const
  {
    return edges_[tri_edges_[t][j]].tri_plus == t ? 1 : -1;
  }

  double avg_edge_length() const { return avg_edge_length_; }
  double total_area() const { return std::accumulate(area_.begin(), area_.end(), 0.0); }

  double signed_volume() const
  {
    double vol = 0.0;
    for (int t = 0; t < num_triangles(); ++t)
    {
      vol += corner(t, 0).dot(corner(t, 1).cross(corner(t, 2)));
    }
    return vol / 6.0;
  }

  double bbox_diagonal() const
  {
    if (vertices_.empty())
    {
      return 0.0;
    }
    Vec3 lo = vertices_[0], hi = vertices_[0];
    for (const auto &v : vertices_)
    {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    return (hi - lo).norm();
  }

  // Number of edge-connected components.
  int num_components() const
  {
    std::vector<int> parent(num_triangles());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x)
    {
      while (parent[x] != x)
      {
        x = parent[x] = parent[parent[x]];
      }
      return x;
    };
    for (const auto &e : edges_)
    {
      if (e.tri_plus >= 0 && e.tri_minus >= 0)
      {
        parent[find(e.tri_plus)] = find(e.tri_minus);
      }
    }
    int count = 0;
    for (int t = 0; t < num_triangles(); ++t)
    {
      count += (find(t) == t);
    }
    return count;
  }

  TriangleMesh scaled(double s) const
  {
    auto v = vertices_;
    for (auto &x : v)
    {
      x *= s;
    }
    MeshOptions opts;
    opts.allow_open = !closed_;
    return TriangleMesh(std::move(v), triangles_, opts);
  }

private:
  void Weld(double rel_tol)
  {
    const double tol = rel_tol * bbox_diagonal();
    if (tol <= 0.0)
    {
      return;
    }
    using Key = std::tuple<long long, long long, long long>;
    std::map<Key, std::vector<int>> grid;
    std::vector<int> remap(vertices_.size());
    std::vector<Vec3> merged;
    auto key = [&](const Vec3 &p)
    {
      return Key{(long long)std::floor(p.x() / tol), (long long)std::floor(p.y() / tol),
                 (long long)std::floor(p.z() / tol)};
    };
    for (std::size_t i = 0; i < vertices_.size(); ++i)
    {
      const Vec3 &p = vertices_[i];
      const auto [kx, ky, kz] = key(p);
      int found = -1;
      for (long long dx = -1; dx <= 1 && found < 0; ++dx)
      {
        for (long long dy = -1; dy <= 1 && found < 0; ++dy)
        {
          for (long long dz = -1; dz <= 1 && found < 0; ++dz)
          {
            auto it = grid.find(Key{kx + dx, ky + dy, kz + dz});
            if (it == grid.end())
            {
              continue;
            }
            for (int j : it->second)
            {
              if ((merged[j] - p).norm() <= tol)
              {
                found = j;
                break;
              }
            }
          }
        }
      }
      if (found < 0)
      {
        found = int(merged.size());
        merged.push_back(p);
        grid[key(p)].push_back(found);
      }
      remap[i] = found;
    }
    if (merged.size() == vertices_.size())
    {
      return;
    }
    vertices_ = std::move(merged);
    for (auto &t : triangles_)
    {
      for (auto &i : t)
      {
        i = remap[i];
      }
    }
  }

  void Build(const MeshOptions &opts)
  {
    const int nt = num_triangles();
    if (nt == 0)
    {
      throw TopologyError("mesh has no triangles");
    }
    for (const auto &t : triangles_)
    {
      for (int i : t)
      {
        if (i < 0 || i >= num_vertices())
        {
          throw ParseError("triangle references vertex " + std::to_string(i) +
                           " out of range");
        }
      }
    }
    ComputeGeometry();

    // Connectivity: key (vmin, vmax) -> (triangle, local opposite vertex, direction).
    struct Half
    {
      int tri, local;
      bool forward;  // triangle traverses the edge from vmin to vmax
    };
    std::map<std::pair<int, int>, std::vector<Half>> halves;
    for (int t = 0; t < nt; ++t)
    {
      for (int j = 0; j < 3; ++j)
      {
        const int a = triangles_[t][(j + 1) % 3], b = triangles_[t][(j + 2) % 3];
        halves[{std::min(a, b), std::max(a, b)}].push_back({t, j, a < b});
      }
    }
    closed_ = true;
    for (const auto &[k, hs] : halves)
    {
      if (hs.size() > 2)
      {
        throw TopologyError("non-manifold edge (" + std::to_string(k.first) + ", " +
                            std::to_string(k.second) + ")");
      }
      if (hs.size() == 1)
      {
        closed_ = false;
      }
      else if (hs[0].forward == hs[1].forward)
      {
        throw TopologyError("inconsistent orientation across edge (" +
                            std::to_string(k.first) + ", " + std::to_string(k.second) + ")");
      }
    }
    if (!closed_ && !opts.allow_open)
    {
      throw TopologyError("surface is open (boundary edges present)");
    }
    if (closed_ && opts.repair_orientation && signed_volume() < 0.0)
    {
      for (auto &t : triangles_)
      {
        std::swap(t[1], t[2]);
      }
      Build(opts);
      return;
    }

    edges_.clear();
    tri_edges_.assign(nt, {-1, -1, -1});
    double total = 0.0;
    for (const auto &[k, hs] : halves)
    {
      Edge e;
      e.v = {k.first, k.second};
      e.length = (vertices_[k.first] - vertices_[k.second]).norm();
      e.tri_plus = hs[0].tri;
      e.tri_minus = hs.size() > 1 ? hs[1].tri : -1;
      if (e.tri_minus >= 0 && e.tri_minus < e.tri_plus)
      {
        std::swap(e.tri_plus, e.tri_minus);
      }
      const int idx = int(edges_.size());
      for (const auto &h : hs)
      {
        tri_edges_[h.tri][h.local] = idx;
      }
      total += e.length;
      edges_.push_back(e);
    }
    avg_edge_length_ = total / double(edges_.size());
  }

  void ComputeGeometry()
  {
    const int nt = num_triangles();
    area_.resize(nt);
    centroid_.resize(nt);
    normal_.resize(nt);
    diameter_.resize(nt);
    const double scale = bbox_diagonal();
    for (int t = 0; t < nt; ++t)
    {
      const Vec3 a = corner(t, 0), b = corner(t, 1), c = corner(t, 2);
      const Vec3 cr = (b - a).cross(c - a);
      const double twice = cr.norm();
      if (!(twice > 1e-14 * scale * scale))
      {
        throw DegenerateError("triangle " + std::to_string(t) + " has zero area");
      }
      area_[t] = 0.5 * twice;
      normal_[t] = cr / twice;
      centroid_[t] = (a + b + c) / 3.0;
      diameter_[t] = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
    }
  }

  std::vector<Vec3> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<Edge> edges_;
  std::vector<std::array<int, 3>> tri_edges_;
  std::vector<double> area_, diameter_;
  std::vector<Vec3> centroid_, normal_;
  double avg_edge_length_ = 0.0;
  bool closed_ = false;
};

inline double avg_edge_length(const TriangleMesh &mesh) { return mesh.avg_edge_length(); }

//
// 6-way barycentric refinement. Child vertex numbering: parent vertices, then one midpoint
// per parent edge, then one centroid per parent triangle. Child 6t+j lies in parent t.
//
struct BarycentricMesh
{
  TriangleMesh mesh;
  std::vector<int> parent_triangle;                 // child -> parent triangle
  std::vector<int> corner_vertex;                   // child -> parent vertex it touches
  std::vector<std::array<int, 2>> parent_edge;      // parent edge -> its two child edges
  int num_parent_vertices = 0, num_parent_edges = 0, num_parent_triangles = 0;

  int midpoint_vertex(int parent_edge_index) const
  {
    return num_parent_vertices + parent_edge_index;
  }
  int centroid_vertex(int parent_tri) const
  {
    return num_parent_vertices + num_parent_edges + parent_tri;
  }
};

inline BarycentricMesh barycentric_refine(const TriangleMesh &parent)
{
  BarycentricMesh out;
  const int nv = parent.num_vertices(), ne = parent.num_edges(), nt = parent.num_triangles();
  out.num_parent_vertices = nv;
  out.num_parent_edges = ne;
  out.num_parent_triangles = nt;
  std::vector<Vec3> verts = parent.vertices();
  verts.reserve(nv + ne + nt);
  for (const auto &e : parent.edges())
  {
    verts.push_back(0.5 * (parent.vertex(e.v[0]) + parent.vertex(e.v[1])));
  }
  for (int t = 0; t < nt; ++t)
  {
    verts.push_back(parent.centroid(t));
  }
  std::vector<std::array<int, 3>> tris;
  tris.reserve(6 * nt);
  out.parent_triangle.reserve(6 * nt);
  out.corner_vertex.reserve(6 * nt);
  for (int t = 0; t < nt; ++t)
  {
    const auto &pv = parent.triangles()[t];
    const int g = nv + ne + t;
    for (int j = 0; j < 3; ++j)
    {
      const int a = pv[j], b = pv[(j + 1) % 3];
      // Edge (a,b) is opposite local vertex j+2.
      const int m = nv + parent.triangle_edge(t, (j + 2) % 3);
      tris.push_back({a, m, g});
      out.corner_vertex.push_back(a);
      tris.push_back({m, b, g});
      out.corner_vertex.push_back(b);
      out.parent_triangle.push_back(t);
      out.parent_triangle.push_back(t);
    }
  }
  MeshOptions opts;
  opts.weld = false;
  opts.repair_orientation = false;
  opts.allow_open = !parent.is_closed();
  out.mesh = TriangleMesh(std::move(verts), std::move(tris), opts);

  std::map<std::pair<int, int>, int> lookup;
  for (int i = 0; i < out.mesh.num_edges(); ++i)
  {
    lookup[{out.mesh.edges()[i].v[0], out.mesh.edges()[i].v[1]}] = i;
  }
  out.parent_edge.resize(ne);
  for (int e = 0; e < ne; ++e)
  {
    const int m = nv + e;
    const int a = parent.edges()[e].v[0], b = parent.edges()[e].v[1];
    out.parent_edge[e] = {lookup.at({std::min(a, m), std::max(a, m)}),
                          lookup.at({std::min(b, m), std::max(b, m)})};
  }
  return out;
}

//
// File I/O.
//
enum class MeshFormat
{
  NativeAscii,
  StlAscii
};

inline MeshFormat parse_mesh_format(const std::string &s)
{
  if (s == "native-ascii" || s == "native" || s == "pie")
  {
    return MeshFormat::NativeAscii;
  }
  if (s == "stl-ascii" || s == "stl")
  {
    return MeshFormat::StlAscii;
  }
  throw ParseError("unknown mesh format '" + s + "'");
}

inline TriangleMesh read_native_mesh(std::istream &in, const MeshOptions &opts = {})
{
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "pie-mesh" || version != 1)
  {
    throw ParseError("missing 'pie-mesh 1' header");
  }
  long nv = -1, nt = -1;
  if (!(in >> nv >> nt) || nv < 0 || nt < 0)
  {
    throw ParseError("bad vertex/triangle counts");
  }
  std::vector<Vec3> verts(nv);
  std::vector<std::array<int, 3>> tris(nt);
  std::string tag;
  for (long i = 0; i < nv; ++i)
  {
    std::string xs, ys, zs;
    if (!(in >> tag >> xs >> ys >> zs) || tag != "v")
    {
      throw ParseError("bad vertex line " + std::to_string(i));
    }
    try
    {
      verts[i] = Vec3(std::stod(xs), std::stod(ys), std::stod(zs));
    }
    catch (const std::exception &)
    {
      throw ParseError("bad vertex coordinate on line " + std::to_string(i));
    }
  }
  for (long i = 0; i < nt; ++i)
  {
    if (!(in >> tag >> tris[i][0] >> tris[i][1] >> tris[i][2]) || tag != "t")
    {
      throw ParseError("bad triangle line " + std::to_string(i));
    }
  }
  return TriangleMesh(std::move(verts), std::move(tris), opts);
}

inline TriangleMesh read_stl_ascii(std::istream &in, const MeshOptions &opts = {})
{
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> tris;
  std::string tok;
  if (!(in >> tok) || tok != "solid")
  {
    throw ParseError("ASCII STL must start with 'solid'");
  }
  std::vector<Vec3> facet;
  while (in >> tok)
  {
    if (tok == "vertex")
    {
      double x, y, z;
      if (!(in >> x >> y >> z))
      {
        throw ParseError("bad STL vertex");
      }
      facet.emplace_back(x, y, z);
    }
    else if (tok == "endfacet")
    {
      if (facet.size() != 3)
      {
        throw ParseError("STL facet without exactly 3 vertices");
      }
      const int base = int(verts.size());
      verts.insert(verts.end(), facet.begin(), facet.end());
      tris.push_back({base, base + 1, base + 2});
      facet.clear();
    }
  }
  if (tris.empty())
  {
    throw ParseError("no facets in STL file");
  }
  MeshOptions o = opts;
  o.weld = true;
  return TriangleMesh(std::move(verts), std::move(tris), o);
}

inline TriangleMesh load_mesh(const std::string &path, MeshFormat format,
                              const MeshOptions &opts = {})
{
  std::ifstream in(path);
  if (!in)
  {
    throw ParseError("cannot open mesh file '" + path + "'");
  }
  return format == MeshFormat::NativeAscii ? read_native_mesh(in, opts)
                                           : read_stl_ascii(in, opts);
}

inline void write_native_mesh(std::ostream &out, const TriangleMesh &mesh)
{
  char buf[128];
  out << "pie-mesh 1\n" << mesh.num_vertices() << " " << mesh.num_triangles() << "\n";
  for (const auto &v : mesh.vertices())
  {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto &t : mesh.triangles())
  {
    out << "t " << t[0] << " " << t[1] << " " << t[2] << "\n";
  }
}

inline void write_mesh(const std::string &path, const TriangleMesh &mesh)
{
  std::ofstream out(path);
  if (!out)
  {
    throw ParseError("cannot write mesh file '" + path + "'");
  }
  write_native_mesh(out, mesh);
}

//
// Generators.
//
inline TriangleMesh make_sphere(double diameter, int refinement_level)
{
  if (refinement_level < 0 || !(diameter > 0.0))
  {
    throw InvalidGeometry("sphere needs diameter > 0 and refinement_level >= 0");
  }
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                         {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                         {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto &p : v)
  {
    p.normalize();
  }
  for (int level = 0; level < refinement_level; ++level)
  {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b)
    {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end())
      {
        return it->second;
      }
      v.push_back((v[a] + v[b]).normalized());
      return mid[key] = int(v.size()) - 1;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(4 * f.size());
    for (const auto &t : f)
    {
      const int ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (auto &p : v)
  {
    p *= 0.5 * diameter;
  }
  return TriangleMesh(std::move(v), std::move(f));
}

namespace detail
{

// Closed surface of a union of cells on a rectilinear grid. Each exposed cell face becomes
// two triangles; shared grid points give a watertight, consistently oriented mesh.
inline TriangleMesh voxel_surface(const std::vector<double> &xs, const std::vector<double> &ys,
                                  const std::vector<double> &zs,
                                  const std::vector<char> &solid)
{
  const int nx = int(xs.size()) - 1, ny = int(ys.size()) - 1, nz = int(zs.size()) - 1;
  auto cell = [&](int i, int j, int k) -> bool
  {
    if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz)
    {
      return false;
    }
    return solid[(std::size_t(k) * ny + j) * nx + i] != 0;
  };
  std::vector<Vec3> verts;
  std::unordered_map<long long, int> vid;
  auto vertex = [&](int i, int j, int k)
  {
    const long long key = ((long long)k * (ny + 1) + j) * (nx + 1) + i;
    auto it = vid.find(key);
    if (it != vid.end())
    {
      return it->second;
    }
    verts.emplace_back(xs[i], ys[j], zs[k]);
    return vid[key] = int(verts.size()) - 1;
  };
  std::vector<std::array<int, 3>> tris;
  auto quad = [&](std::array<std::array<int, 3>, 4> c, const Vec3 &outward)
  {
    std::array<int, 4> id;
    for (int q = 0; q < 4; ++q)
    {
      id[q] = vertex(c[q][0], c[q][1], c[q][2]);
    }
    const Vec3 n = (verts[id[1]] - verts[id[0]]).cross(verts[id[2]] - verts[id[0]]);
    if (n.dot(outward) < 0.0)
    {
      std::swap(id[1], id[3]);
    }
    tris.push_back({id[0], id[1], id[2]});
    tris.push_back({id[0], id[2], id[3]});
  };
  for (int k = 0; k < nz; ++k)
  {
    for (int j = 0; j < ny; ++j)
    {
      for (int i = 0; i < nx; ++i)
      {
        if (!cell(i, j, k))
        {
          continue;
        }
        if (!cell(i - 1, j, k))
        {
          quad({{{i, j, k}, {i, j + 1, k}, {i, j + 1, k + 1}, {i, j, k + 1}}}, Vec3(-1, 0, 0));
        }
        if (!cell(i + 1, j, k))
        {
          quad({{{i + 1, j, k}, {i + 1, j + 1, k}, {i + 1, j + 1, k + 1}, {i + 1, j, k + 1}}},
               Vec3(1, 0, 0));
        }
        if (!cell(i, j - 1, k))
        {
          quad({{{i, j, k}, {i + 1, j, k}, {i + 1, j, k + 1}, {i, j, k + 1}}}, Vec3(0, -1, 0));
        }
        if (!cell(i, j + 1, k))
        {
          quad({{{i, j + 1, k}, {i + 1, j + 1, k}, {i + 1, j + 1, k + 1}, {i, j + 1, k + 1}}},
               Vec3(0, 1, 0));
        }
        if (!cell(i, j, k - 1))
        {
          quad({{{i, j, k}, {i + 1, j, k}, {i + 1, j + 1, k}, {i, j + 1, k}}}, Vec3(0, 0, -1));
        }
        if (!cell(i, j, k + 1))
        {
          quad({{{i, j, k + 1}, {i + 1, j, k + 1}, {i + 1, j + 1, k + 1}, {i, j + 1, k + 1}}},
               Vec3(0, 0, 1));
        }
      }
    }
  }
  return TriangleMesh(std::move(verts), std::move(tris));
}

// Grid through all breakpoints, each interval split into ceil(len / target) equal parts.
inline std::vector<double> graded_axis(std::vector<double> breaks, double target)
{
  std::sort(breaks.begin(), breaks.end());
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i)
  {
    const double a = breaks[i], b = breaks[i + 1];
    if (b - a <= 1e-12 * std::max(std::abs(a), std::abs(b)))
    {
      continue;
    }
    const int n = std::max(1, int(std::ceil((b - a) / target - 1e-9)));
    for (int k = 0; k < n; ++k)
    {
      out.push_back(a + (b - a) * k / n);
    }
  }
  out.push_back(breaks.back());
  return out;
}

}  // namespace detail

inline TriangleMesh make_box(double lx, double ly, double lz, double target_edge)
{
  if (!(lx > 0.0 && ly > 0.0 && lz > 0.0 && target_edge > 0.0))
  {
    throw InvalidGeometry("box dimensions and target_edge must be positive");
  }
  const auto xs = detail::graded_axis({-0.5 * lx, 0.5 * lx}, target_edge);
  const auto ys = detail::graded_axis({-0.5 * ly, 0.5 * ly}, target_edge);
  const auto zs = detail::graded_axis({-0.5 * lz, 0.5 * lz}, target_edge);
  std::vector<char> solid((xs.size() - 1) * (ys.size() - 1) * (zs.size() - 1), 1);
  return detail::voxel_surface(xs, ys, zs, solid);
}

// Square split rings ("C" shapes) with the gap cut in the +x arm, arranged on a grid in the
// xy-plane with the bottom face at z = 0.
struct SrrParams
{
  double size = 2e-6;    // outer side length
  double width = 0.2e-6; // trace width
  double height = 0.1e-6;
  double gap = 0.2e-6;
  double pitch = 4e-6;   // center-to-center spacing
  int nx = 2, ny = 2;
  double target_edge = 0.1e-6;
};

inline TriangleMesh make_srr_array(const SrrParams &p)
{
  if (!(p.size > 0 && p.width > 0 && p.height > 0 && p.gap > 0 && p.target_edge > 0 &&
        p.nx > 0 && p.ny > 0))
  {
    throw InvalidGeometry("SRR parameters must be positive");
  }
  if (p.gap >= 4.0 * p.size)
  {
    throw InvalidGeometry("gap must be shorter than the ring perimeter");
  }
  if (p.width >= 0.5 * p.size)
  {
    throw InvalidGeometry("width must be below half the ring size");
  }
  if (p.gap >= p.size - 2.0 * p.width)
  {
    throw InvalidGeometry("gap does not fit in the ring arm");
  }
  if ((p.nx > 1 || p.ny > 1) && p.pitch <= p.size)
  {
    throw InvalidGeometry("pitch must exceed ring size so rings do not touch");
  }
  std::vector<double> bx, by;
  std::vector<Vec3> centers;
  for (int i = 0; i < p.nx; ++i)
  {
    for (int j = 0; j < p.ny; ++j)
    {
      const double cx = (i - 0.5 * (p.nx - 1)) * p.pitch;
      const double cy = (j - 0.5 * (p.ny - 1)) * p.pitch;
      centers.emplace_back(cx, cy, 0.0);
      const double h = 0.5 * p.size;
      for (double d : {-h, -h + p.width, h - p.width, h})
      {
        bx.push_back(cx + d);
        by.push_back(cy + d);
      }
      by.push_back(cy - 0.5 * p.gap);
      by.push_back(cy + 0.5 * p.gap);
    }
  }
  const auto xs = detail::graded_axis(bx, p.target_edge);
  const auto ys = detail::graded_axis(by, p.target_edge);
  const auto zs = detail::graded_axis({0.0, p.height}, p.target_edge);
  const int nx = int(xs.size()) - 1, ny = int(ys.size()) - 1, nz = int(zs.size()) - 1;
  std::vector<char> solid(std::size_t(nx) * ny * nz, 0);
  for (int j = 0; j < ny; ++j)
  {
    for (int i = 0; i < nx; ++i)
    {
      const double x = 0.5 * (xs[i] + xs[i + 1]), y = 0.5 * (ys[j] + ys[j + 1]);
      bool in = false;
      for (const auto &c : centers)
      {
        const double dx = x - c.x(), dy = y - c.y(), h = 0.5 * p.size;
        const bool outer = std::abs(dx) < h && std::abs(dy) < h;
        const bool hole = std::abs(dx) < h - p.width && std::abs(dy) < h - p.width;
        const bool cut = dx > h - p.width && std::abs(dy) < 0.5 * p.gap;
        in = in || (outer && !hole && !cut);
      }
      for (int k = 0; k < nz; ++k)
      {
        solid[(std::size_t(k) * ny + j) * nx + i] = in;
      }
    }
  }
  return detail::voxel_surface(xs, ys, zs, solid);
}

}  // namespace pie
