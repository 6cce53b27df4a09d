#pragma once

// RWG, Buffa-Christiansen and pulse bases, the discrete surface divergence and Gram matrices.

#include "pie/mesh.hpp"
#include "pie/quadrature.hpp"

#include <Eigen/Sparse>

#include <array>
#include <vector>

namespace pie
{

// Restriction of a vector basis function to one triangle: f(r) = beta * r + alpha.
struct VectorPiece
{
  int triangle = -1;
  double beta = 0.0;
  Vec3 alpha = Vec3::Zero();

  Vec3 operator()(const Vec3 &r) const { return beta * r + alpha; }
  // Surface divergence of beta * r on a flat triangle.
  double divergence() const { return 2.0 * beta; }
  AffineSource source() const { return {beta, alpha, divergence()}; }
};

enum class EvalMode
{
  Strict,      // raise OutOfSupport away from the support
  Permissive,  // return zero away from the support
};

namespace detail
{

// True if r lies on triangle t within a small relative tolerance.
inline bool point_on_triangle(const TriangleMesh &mesh, int t, const Vec3 &r, double tol = 1e-9)
{
  const Vec3 a = mesh.corner(t, 0), b = mesh.corner(t, 1), c = mesh.corner(t, 2);
  const Vec3 &n = mesh.normal(t);
  const double d = mesh.diameter(t);
  if (std::abs((r - a).dot(n)) > tol * d)
  {
    return false;
  }
  const double inv = 1.0 / (2.0 * mesh.area(t));
  const double l0 = (b - r).cross(c - r).dot(n) * inv;
  const double l1 = (c - r).cross(a - r).dot(n) * inv;
  const double l2 = 1.0 - l0 - l1;
  return l0 >= -tol && l1 >= -tol && l2 >= -tol;
}

}  // namespace detail

//
// Edge-length-normalized RWG: f_e = ±(r − p±)/(2A±) on T±. One function per interior edge.
//
class RwgBasis
{
public:
  RwgBasis() = default;
  explicit RwgBasis(const TriangleMesh &mesh) : mesh_(&mesh)
  {
    on_triangle_.assign(mesh.num_triangles(), {});
    for (int e = 0; e < mesh.num_edges(); ++e)
    {
      const Edge &E = mesh.edges()[e];
      if (E.tri_minus < 0)
      {
        continue;
      }
      const int i = int(edges_.size());
      edges_.push_back(e);
      std::array<VectorPiece, 2> pc;
      std::array<int, 2> fv{};
      for (int s = 0; s < 2; ++s)
      {
        const int t = s == 0 ? E.tri_plus : E.tri_minus;
        const double sign = s == 0 ? 1.0 : -1.0;
        int free = -1;
        for (int j = 0; j < 3; ++j)
        {
          if (mesh.triangle_edge(t, j) == e)
          {
            free = mesh.triangles()[t][j];
          }
        }
        fv[s] = free;
        const double b = sign / (2.0 * mesh.area(t));
        pc[s] = {t, b, -b * mesh.vertex(free)};
        on_triangle_[t].push_back({i, s});
      }
      pieces_.push_back(pc);
      free_vertex_.push_back(fv);
    }
  }

  const TriangleMesh &mesh() const { return *mesh_; }
  int size() const { return int(edges_.size()); }
  int edge(int i) const { return edges_[i]; }
  const std::array<VectorPiece, 2> &pieces(int i) const { return pieces_[i]; }
  // side 0 for T+, 1 for T−.
  int free_vertex(int i, int side) const { return free_vertex_[i][side]; }
  int triangle(int i, int side) const { return pieces_[i][side].triangle; }
  // (function index, side) pairs supported on triangle t.
  const std::vector<std::array<int, 2>> &on_triangle(int t) const { return on_triangle_[t]; }

  Vec3 eval(int i, const Vec3 &r, EvalMode mode = EvalMode::Strict) const
  {
    for (const auto &p : pieces_[i])
    {
      if (detail::point_on_triangle(*mesh_, p.triangle, r))
      {
        return p(r);
      }
    }
    if (mode == EvalMode::Strict)
    {
      throw OutOfSupport("point is not on either triangle of RWG " + std::to_string(i));
    }
    return Vec3::Zero();
  }

  // Value on a known triangle; zero if t is outside the support.
  Vec3 eval_on(int i, int t, const Vec3 &r) const
  {
    for (const auto &p : pieces_[i])
    {
      if (p.triangle == t)
      {
        return p(r);
      }
    }
    return Vec3::Zero();
  }

  double divergence_on(int i, int t) const
  {
    for (const auto &p : pieces_[i])
    {
      if (p.triangle == t)
      {
        return p.divergence();
      }
    }
    return 0.0;
  }

private:
  const TriangleMesh *mesh_ = nullptr;
  std::vector<int> edges_;
  std::vector<std::array<VectorPiece, 2>> pieces_;
  std::vector<std::array<int, 2>> free_vertex_;
  std::vector<std::vector<std::array<int, 2>>> on_triangle_;
};

//
// Buffa-Christiansen functions as combinations of RWGs on the barycentric refinement.
// Each parent edge e gets a function carrying unit flux across the dual edge c+ → m_e → c−,
// with charge spread equally over the fine triangles around the source and sink vertices.
//
class BcBasis
{
public:
  struct Term
  {
    int fine_edge;
    double coef;
  };

  BcBasis() = default;

  const TriangleMesh &parent() const { return *parent_; }
  const BarycentricMesh &refined() const { return *refined_; }
  const RwgBasis &fine_rwg() const { return fine_; }
  int size() const { return int(terms_.size()); }
  const std::vector<Term> &terms(int i) const { return terms_[i]; }
  // Affine pieces on fine triangles, one per fine triangle in the support.
  const std::vector<VectorPiece> &pieces(int i) const { return pieces_[i]; }
  // Parent vertices the function flows from and to.
  int source_vertex(int i) const { return ends_[i][0]; }
  int sink_vertex(int i) const { return ends_[i][1]; }
  // (function index, piece index) pairs supported on fine triangle τ.
  const std::vector<std::array<int, 2>> &on_fine_triangle(int tau) const
  {
    return on_fine_[tau];
  }

  Vec3 eval(int i, const Vec3 &r, EvalMode mode = EvalMode::Strict) const
  {
    const TriangleMesh &fm = refined_->mesh;
    for (const auto &p : pieces_[i])
    {
      if (detail::point_on_triangle(fm, p.triangle, r))
      {
        return p(r);
      }
    }
    if (mode == EvalMode::Strict)
    {
      throw OutOfSupport("point is outside the support of BC function " + std::to_string(i));
    }
    return Vec3::Zero();
  }

  friend BcBasis build_bc(const TriangleMesh &parent, const BarycentricMesh &refined);

private:
  const TriangleMesh *parent_ = nullptr;
  const BarycentricMesh *refined_ = nullptr;
  RwgBasis fine_;
  std::vector<std::vector<Term>> terms_;
  std::vector<std::vector<VectorPiece>> pieces_;
  std::vector<std::array<int, 2>> ends_;
  std::vector<std::vector<std::array<int, 2>>> on_fine_;
};

inline BcBasis build_bc(const TriangleMesh &parent, const BarycentricMesh &refined)
{
  const TriangleMesh &fm = refined.mesh;
  const int nv = parent.num_vertices(), ne = parent.num_edges(), nt = parent.num_triangles();
  if (refined.num_parent_vertices != nv || refined.num_parent_edges != ne ||
      refined.num_parent_triangles != nt || fm.num_triangles() != 6 * nt ||
      fm.num_vertices() != nv + ne + nt || int(refined.parent_edge.size()) != ne)
  {
    throw RefinementMismatch("barycentric mesh does not match the parent mesh");
  }
  for (int v = 0; v < nv; ++v)
  {
    if ((fm.vertex(v) - parent.vertex(v)).norm() > 1e-12 * parent.bbox_diagonal())
    {
      throw RefinementMismatch("parent vertex " + std::to_string(v) + " moved in refinement");
    }
  }
  if (!parent.is_closed())
  {
    throw TopologyError("Buffa-Christiansen functions need a closed surface");
  }

  BcBasis bc;
  bc.parent_ = &parent;
  bc.refined_ = &refined;
  bc.fine_ = RwgBasis(fm);

  // Fine triangles around each parent vertex, and the fine edge index of each vertex pair.
  std::vector<std::vector<int>> around(nv);
  for (int tau = 0; tau < fm.num_triangles(); ++tau)
  {
    around[refined.corner_vertex[tau]].push_back(tau);
  }
  std::map<std::pair<int, int>, int> edge_of;
  for (int i = 0; i < fm.num_edges(); ++i)
  {
    edge_of[{fm.edges()[i].v[0], fm.edges()[i].v[1]}] = i;
  }
  auto fine_edge = [&](int a, int b)
  {
    auto it = edge_of.find({std::min(a, b), std::max(a, b)});
    if (it == edge_of.end())
    {
      throw RefinementMismatch("missing fine edge");
    }
    return it->second;
  };
  auto has_vertex = [&](int tau, int v)
  {
    const auto &tv = fm.triangles()[tau];
    return tv[0] == v || tv[1] == v || tv[2] == v;
  };
  // Fine triangle around vertex v containing both a and b.
  auto find_tri = [&](int v, int a, int b)
  {
    for (int tau : around[v])
    {
      if (has_vertex(tau, a) && has_vertex(tau, b))
      {
        return tau;
      }
    }
    throw RefinementMismatch("missing fine triangle");
  };

  bc.terms_.resize(ne);
  bc.ends_.resize(ne);
  for (int e = 0; e < ne; ++e)
  {
    const Edge &E = parent.edges()[e];
    const int m = refined.midpoint_vertex(e);
    const int gp = refined.centroid_vertex(E.tri_plus), gm = refined.centroid_vertex(E.tri_minus);
    const Vec3 n = (parent.normal(E.tri_plus) + parent.normal(E.tri_minus)).normalized();
    const Vec3 d = n.cross(parent.centroid(E.tri_minus) - parent.centroid(E.tri_plus));
    const Vec3 mid = fm.vertex(m);
    int v1 = E.v[0], v2 = E.v[1];
    if ((parent.vertex(v1) - mid).dot(d) > 0.0)
    {
      std::swap(v1, v2);
    }
    bc.ends_[e] = {v1, v2};
    auto &terms = bc.terms_[e];

    // Walk around v starting in (v, m, g+); flux through spoke j toward the next triangle.
    auto walk = [&](int v, bool source)
    {
      const int count = int(around[v].size());
      int tau = find_tri(v, m, gp);
      int spoke_in = m;
      for (int j = 1; j < count; ++j)
      {
        const auto &tv = fm.triangles()[tau];
        int spoke_out = -1;
        for (int q : tv)
        {
          if (q != v && q != spoke_in)
          {
            spoke_out = q;
          }
        }
        const int fe = fine_edge(v, spoke_out);
        const Edge &F = fm.edges()[fe];
        const int next = F.tri_plus == tau ? F.tri_minus : F.tri_plus;
        const double flux = source ? double(j) / count - 0.5 : 0.5 - double(j) / count;
        terms.push_back({fe, F.tri_plus == tau ? flux : -flux});
        tau = next;
        spoke_in = spoke_out;
      }
      if (tau != find_tri(v, m, gm))
      {
        throw RefinementMismatch("fine triangles around a vertex do not form a fan");
      }
    };
    walk(v1, true);
    walk(v2, false);
    for (int g : {gp, gm})
    {
      const int fe = fine_edge(m, g);
      const int src_side = find_tri(v1, m, g);
      terms.push_back({fe, fm.edges()[fe].tri_plus == src_side ? 0.5 : -0.5});
    }
  }

  // Collapse to affine pieces on fine triangles.
  std::vector<int> fine_index_of_edge(fm.num_edges(), -1);
  for (int i = 0; i < bc.fine_.size(); ++i)
  {
    fine_index_of_edge[bc.fine_.edge(i)] = i;
  }
  bc.pieces_.resize(ne);
  bc.on_fine_.assign(fm.num_triangles(), {});
  for (int e = 0; e < ne; ++e)
  {
    std::map<int, VectorPiece> acc;
    for (const auto &tm : bc.terms_[e])
    {
      for (const auto &p : bc.fine_.pieces(fine_index_of_edge[tm.fine_edge]))
      {
        auto &a = acc[p.triangle];
        a.triangle = p.triangle;
        a.beta += tm.coef * p.beta;
        a.alpha += tm.coef * p.alpha;
      }
    }
    for (const auto &[tau, p] : acc)
    {
      bc.on_fine_[tau].push_back({e, int(bc.pieces_[e].size())});
      bc.pieces_[e].push_back(p);
    }
  }
  return bc;
}

//
// Piecewise-constant scalar functions: unit pulses h_t and area-normalized pulses h̃_t = h_t/A_t.
//
class PulseBasis
{
public:
  PulseBasis() = default;
  explicit PulseBasis(const TriangleMesh &mesh) : mesh_(&mesh) {}

  const TriangleMesh &mesh() const { return *mesh_; }
  int size() const { return mesh_->num_triangles(); }

  double unit(int t, const Vec3 &r) const
  {
    return detail::point_on_triangle(*mesh_, t, r) ? 1.0 : 0.0;
  }
  double normalized(int t, const Vec3 &r) const { return unit(t, r) / mesh_->area(t); }
  double integral_unit(int t) const { return mesh_->area(t); }
  double integral_normalized(int) const { return 1.0; }

private:
  const TriangleMesh *mesh_ = nullptr;
};

//
// D[t, e] = surface divergence of f_e on triangle t.
//
struct DivergenceMap
{
  Eigen::SparseMatrix<double> D;

  int rows() const { return int(D.rows()); }
  int cols() const { return int(D.cols()); }
};

inline DivergenceMap divergence_map(const RwgBasis &rwg)
{
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * rwg.size());
  for (int i = 0; i < rwg.size(); ++i)
  {
    for (const auto &p : rwg.pieces(i))
    {
      trip.emplace_back(p.triangle, i, p.divergence());
    }
  }
  DivergenceMap dm;
  dm.D.resize(rwg.mesh().num_triangles(), rwg.size());
  dm.D.setFromTriplets(trip.begin(), trip.end());
  return dm;
}

struct GramMatrices
{
  Eigen::SparseMatrix<double> Ix;  // ∫ (n̂ × f_m) · g_n
  Eigen::SparseMatrix<double> P;   // ∫ h̃_m h_n
};

// ∫ (n̂ × f_m) · g_n dS, integrated exactly per fine triangle.
inline Eigen::SparseMatrix<double> mixed_gram(const RwgBasis &rwg, const BcBasis &bc)
{
  const BarycentricMesh &bm = bc.refined();
  const TriangleMesh &fm = bm.mesh;
  const TriangleRule &rule = TriangleRule::three_point();
  std::vector<Eigen::Triplet<double>> trip;
  for (int tau = 0; tau < fm.num_triangles(); ++tau)
  {
    const int t = bm.parent_triangle[tau];
    const Triangle T = triangle_of(fm, tau);
    const Vec3 &n = rwg.mesh().normal(t);
    for (const auto &[m, side] : rwg.on_triangle(t))
    {
      const VectorPiece &f = rwg.pieces(m)[side];
      for (const auto &[b, pi] : bc.on_fine_triangle(tau))
      {
        const VectorPiece &g = bc.pieces(b)[pi];
        const double v = integrate_smooth(T, [&](const Vec3 &r) { return n.cross(f(r)).dot(g(r)); },
                                          rule);
        trip.emplace_back(m, b, v);
      }
    }
  }
  Eigen::SparseMatrix<double> Ix(rwg.size(), bc.size());
  Ix.setFromTriplets(trip.begin(), trip.end());
  return Ix;
}

// ∫ h̃_m h_n dS; diagonal with unit entries.
inline Eigen::SparseMatrix<double> pulse_gram(const PulseBasis &pulses)
{
  Eigen::SparseMatrix<double> P(pulses.size(), pulses.size());
  P.setIdentity();
  return P;
}

inline GramMatrices gram_matrices(const RwgBasis &rwg, const BcBasis &bc, const PulseBasis &pulses)
{
  if (&rwg.mesh() != &bc.parent() || &pulses.mesh() != &rwg.mesh())
  {
    throw DimensionMismatch("bases are built on different meshes");
  }
  return {mixed_gram(rwg, bc), pulse_gram(pulses)};
}

//
// All bases on one closed mesh. Holds the barycentric refinement; not copyable since the
// bases keep pointers into it.
//
struct BasisSet
{
  const TriangleMesh *mesh;
  BarycentricMesh refined;
  RwgBasis rwg;
  BcBasis bc;
  PulseBasis pulses;
  DivergenceMap div;

  explicit BasisSet(const TriangleMesh &m)
    : mesh(&m), refined(barycentric_refine(m)), rwg(m), pulses(m), div(divergence_map(rwg))
  {
    bc = build_bc(m, refined);
  }
  BasisSet(const BasisSet &) = delete;
  BasisSet &operator=(const BasisSet &) = delete;

  int num_edges() const { return rwg.size(); }
  int num_triangles() const { return pulses.size(); }
};

}  // namespace pie
