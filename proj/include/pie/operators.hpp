#pragma once

// Dense Galerkin blocks of the L, K and M operators for one kernel (interior or exterior).

#include "pie/basis.hpp"
#include "pie/media.hpp"
#include "pie/quadrature.hpp"

#include <atomic>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace pie
{

enum class TestFamily
{
  RotatedRwg,  // n̂ × RWG
  AreaPulse,   // h̃
};

enum class BasisFamily
{
  Rwg,
  Bc,
  UnitPulse,
  UnitPulseNormal,  // h n̂'
  AreaPulse,
};

enum class KernelTag
{
  Interior,
  Exterior,
};

enum class OperatorTag
{
  L,
  Kpv,
  Mpv,
  MpvTransposeForm,
};

inline const char *to_string(TestFamily f)
{
  return f == TestFamily::RotatedRwg ? "nxRWG" : "area-pulse";
}
inline const char *to_string(BasisFamily f)
{
  switch (f)
  {
    case BasisFamily::Rwg: return "RWG";
    case BasisFamily::Bc: return "BC";
    case BasisFamily::UnitPulse: return "unit-pulse";
    case BasisFamily::UnitPulseNormal: return "unit-pulse-n";
    case BasisFamily::AreaPulse: return "area-pulse";
  }
  return "?";
}
inline const char *to_string(KernelTag k) { return k == KernelTag::Interior ? "interior" : "exterior"; }
inline const char *to_string(OperatorTag o)
{
  switch (o)
  {
    case OperatorTag::L: return "L";
    case OperatorTag::Kpv: return "Kpv";
    case OperatorTag::Mpv: return "Mpv";
    case OperatorTag::MpvTransposeForm: return "MpvT";
  }
  return "?";
}

struct OperatorBlock
{
  std::string name;
  MatrixC matrix;
  TestFamily test = TestFamily::AreaPulse;
  BasisFamily basis = BasisFamily::UnitPulse;
  KernelTag kernel = KernelTag::Exterior;
  OperatorTag op = OperatorTag::L;

  Eigen::Index rows() const { return matrix.rows(); }
  Eigen::Index cols() const { return matrix.cols(); }

  void check_finite() const
  {
    if (!matrix.allFinite())
    {
      throw AssemblyError("non-finite entry in block " + name + " (" + to_string(kernel) + ")");
    }
  }
};

// Expected block dimension for a family on a given basis set.
inline Eigen::Index family_size(const BasisSet &b, TestFamily f)
{
  return f == TestFamily::RotatedRwg ? b.num_edges() : b.num_triangles();
}
inline Eigen::Index family_size(const BasisSet &b, BasisFamily f)
{
  return (f == BasisFamily::Rwg || f == BasisFamily::Bc) ? b.num_edges() : b.num_triangles();
}

inline void check_dimensions(const BasisSet &b, const OperatorBlock &blk)
{
  if (blk.rows() != family_size(b, blk.test) || blk.cols() != family_size(b, blk.basis))
  {
    throw AssemblyError("block " + blk.name + " has dimensions inconsistent with its families");
  }
}

struct AssemblyOptions
{
  QuadratureOptions quad;
  int threads = 1;
  int near_test_order = 4;   // conical order of the test rule on near, non-touching pairs
  int touching_child_degree = 5;  // rule degree on each barycentric child for touching pairs
  int mid_test_degree = 5;   // test rule degree for pairs inside the far threshold
  int far_test_degree = 2;   // test rule degree beyond it
  int stokes_points = 4;     // Gauss points per half edge in the contour form of K^(nt)
  bool symmetrize = true;    // average L^(ss), L^(tt) with their transposes
  bool normal_blocks = true; // assemble L^(nt), K^(nt), M^T-form (interior only needs them)
};

//
// All blocks of one kernel. Conventions:
//   Ltt[m,n]  = ∫ f_m · L[f_n]            Ktt[m,n] = ∫ f_m · K[g_n]
//   Ltn[m,q]  = ∫ f_m · L[n̂' h_q]         Lnt[p,n] = ∫ h̃_p n̂ · L[f_n]
//   Knt[p,n]  = ∫ h̃_p n̂ · K[g_n]          Lss[p,q] = ∫ h̃_p L[h_q]
//   Mpv[p,q]  = ∫ h̃_p ⨍ n̂'·∇'G h_q       MpvT[p,q] = ∫ h̃_p ⨍ n̂·∇G h_q
// Testing f_m against the tangential part equals testing n̂×(·) with n̂×f_m.
//
struct KernelBlocks
{
  KernelTag kernel = KernelTag::Exterior;
  cplx k = 0.0;
  OperatorBlock Ltt, Ktt, Ltn, Lnt, Knt, Lss, Mpv, MpvT;

  std::vector<const OperatorBlock *> all() const
  {
    std::vector<const OperatorBlock *> v{&Ltt, &Ktt, &Ltn, &Lss, &Mpv};
    if (Lnt.matrix.size() > 0)
    {
      v.push_back(&Lnt);
      v.push_back(&Knt);
      v.push_back(&MpvT);
    }
    return v;
  }
};

namespace detail
{

// Colours triangles so that no two triangles of one colour share an edge.
inline std::vector<std::vector<int>> edge_disjoint_colouring(const TriangleMesh &mesh)
{
  const int nt = mesh.num_triangles();
  std::vector<int> colour(nt, -1);
  int ncol = 0;
  for (int t = 0; t < nt; ++t)
  {
    std::vector<bool> used(ncol + 1, false);
    for (int j = 0; j < 3; ++j)
    {
      const Edge &E = mesh.edges()[mesh.triangle_edge(t, j)];
      for (int o : {E.tri_plus, E.tri_minus})
      {
        if (o >= 0 && o != t && colour[o] >= 0)
        {
          used[colour[o]] = true;
        }
      }
    }
    int c = 0;
    while (used[c])
    {
      ++c;
    }
    colour[t] = c;
    ncol = std::max(ncol, c + 1);
  }
  std::vector<std::vector<int>> groups(ncol);
  for (int t = 0; t < nt; ++t)
  {
    groups[colour[t]].push_back(t);
  }
  return groups;
}

// Runs body(item) for every item of every group; groups run one after another.
template <class Body>
void parallel_groups(const std::vector<std::vector<int>> &groups, int threads, Body &&body)
{
  threads = std::max(1, threads);
  for (const auto &g : groups)
  {
    if (threads == 1 || g.size() < 2)
    {
      for (int t : g)
      {
        body(t);
      }
      continue;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    auto worker = [&]
    {
      for (size_t i = next++; i < g.size(); i = next++)
      {
        try
        {
          body(g[i]);
        }
        catch (...)
        {
          std::lock_guard lock(err_mutex);
          if (!err)
          {
            err = std::current_exception();
          }
        }
      }
    };
    std::vector<std::thread> pool;
    const int nw = std::min<int>(threads, int(g.size()));
    for (int w = 1; w < nw; ++w)
    {
      pool.emplace_back(worker);
    }
    worker();
    for (auto &th : pool)
    {
      th.join();
    }
    if (err)
    {
      std::rethrow_exception(err);
    }
  }
}

// Normalized test points (weights sum to one) on a test triangle.
struct TestPoints
{
  std::vector<Vec3> r;
  std::vector<double> w;

  int size() const { return int(w.size()); }
};

inline TestPoints points_of(const Triangle &P, const TriangleRule &rule)
{
  TestPoints tp;
  for (int q = 0; q < rule.size(); ++q)
  {
    tp.r.push_back(P.point(rule.bary[q]));
    tp.w.push_back(rule.w[q]);
  }
  return tp;
}

// Per-triangle test point sets for the pair categories.
struct TestPointTable
{
  std::vector<TestPoints> touching, near, mid, far;
  std::vector<Triangle> tri;
  std::map<int, std::vector<TestPoints>> bumped;  // by rule degree

  TestPointTable(const BasisSet &bs, const AssemblyOptions &opt)
  {
    const TriangleMesh &mesh = *bs.mesh;
    const int nt = mesh.num_triangles();
    const TriangleRule &child = TriangleRule::of_degree(opt.touching_child_degree);
    for (int t = 0; t < nt; ++t)
    {
      tri.push_back(triangle_of(mesh, t));
      near.push_back(points_of(tri[t], TriangleRule::conical_cached(opt.near_test_order)));
      mid.push_back(points_of(tri[t], TriangleRule::of_degree(opt.mid_test_degree)));
      far.push_back(points_of(tri[t], TriangleRule::of_degree(opt.far_test_degree)));
      TestPoints c;
      for (int j = 0; j < 6; ++j)
      {
        const Triangle C = triangle_of(bs.refined.mesh, 6 * t + j);
        for (int q = 0; q < child.size(); ++q)
        {
          c.r.push_back(C.point(child.bary[q]));
          c.w.push_back(child.w[q] * C.area / tri[t].area);
        }
      }
      touching.push_back(std::move(c));
    }
  }

  void prepare_bumped(int degree)
  {
    if (bumped.count(degree))
    {
      return;
    }
    std::vector<TestPoints> v;
    for (const auto &T : tri)
    {
      v.push_back(points_of(T, TriangleRule::of_degree(degree)));
    }
    bumped[degree] = std::move(v);
  }
};

inline int bumped_degree(const Triangle &P, cplx k)
{
  const double kd = std::abs(k) * P.diameter;
  return kd > 1.0 ? std::min(30, 5 + int(std::ceil(2.0 * kd))) : 0;
}

// Test points for a (test, source) pair.
inline const TestPoints &test_points_for(const TestPointTable &tab, int p, const Triangle &Q,
                                         bool touching, cplx k, const AssemblyOptions &opt)
{
  const Triangle &P = tab.tri[p];
  if (touching)
  {
    return tab.touching[p];
  }
  const double ratio = (P.centroid - Q.centroid).norm() / std::max(P.diameter, Q.diameter);
  if (ratio < opt.quad.near_threshold)
  {
    return tab.near[p];
  }
  const double dmin = (P.centroid - Q.centroid).norm() - P.reach - Q.reach;
  const bool faint = dmin > 0.0 && std::exp(k.imag() * dmin) < opt.quad.accuracy_floor;
  const int deg = faint ? 0 : bumped_degree(P, k);
  if (deg > 0)
  {
    return tab.bumped.at(deg)[p];
  }
  return ratio < opt.quad.far_threshold ? tab.mid[p] : tab.far[p];
}

inline bool pair_negligible(const Triangle &P, const Triangle &Q, cplx k, double threshold)
{
  const double dmin = (P.centroid - Q.centroid).norm() - P.reach - Q.reach;
  return dmin > 0.0 && std::exp(k.imag() * dmin) < threshold;
}

inline bool share_vertex(const std::array<int, 3> &a, const std::array<int, 3> &b)
{
  for (int x : a)
  {
    for (int y : b)
    {
      if (x == y)
      {
        return true;
      }
    }
  }
  return false;
}

inline OperatorBlock make_block(std::string name, Eigen::Index rows, Eigen::Index cols, TestFamily t,
                                BasisFamily b, KernelTag kt, OperatorTag op)
{
  OperatorBlock blk;
  blk.name = std::move(name);
  blk.matrix = MatrixC::Zero(rows, cols);
  blk.test = t;
  blk.basis = b;
  blk.kernel = kt;
  blk.op = op;
  return blk;
}

}  // namespace detail

inline KernelBlocks assemble_kernel_blocks(const BasisSet &bs, cplx k, KernelTag tag,
                                           const AssemblyOptions &opt = {})
{
  const TriangleMesh &mesh = *bs.mesh;
  const TriangleMesh &fine = bs.refined.mesh;
  const int ne = bs.num_edges(), nt = bs.num_triangles(), nf = fine.num_triangles();
  const auto Tt = TestFamily::RotatedRwg, Ta = TestFamily::AreaPulse;

  KernelBlocks kb;
  kb.kernel = tag;
  kb.k = k;
  kb.Ltt = detail::make_block("Ltt", ne, ne, Tt, BasisFamily::Rwg, tag, OperatorTag::L);
  kb.Ktt = detail::make_block("Ktt", ne, ne, Tt, BasisFamily::Bc, tag, OperatorTag::Kpv);
  kb.Ltn = detail::make_block("Ltn", ne, nt, Tt, BasisFamily::UnitPulseNormal, tag, OperatorTag::L);
  kb.Lss = detail::make_block("Lss", nt, nt, Ta, BasisFamily::UnitPulse, tag, OperatorTag::L);
  kb.Mpv = detail::make_block("Mpv", nt, nt, Ta, BasisFamily::UnitPulse, tag, OperatorTag::Mpv);
  if (opt.normal_blocks)
  {
    kb.Lnt = detail::make_block("Lnt", nt, ne, Ta, BasisFamily::Rwg, tag, OperatorTag::L);
    kb.Knt = detail::make_block("Knt", nt, ne, Ta, BasisFamily::Bc, tag, OperatorTag::Kpv);
    kb.MpvT = detail::make_block("MpvT", nt, nt, Ta, BasisFamily::UnitPulse, tag,
                                 OperatorTag::MpvTransposeForm);
  }

  detail::TestPointTable tab(bs, opt);
  for (int t = 0; t < nt; ++t)
  {
    const int deg = detail::bumped_degree(tab.tri[t], k);
    if (deg > 0)
    {
      tab.prepare_bumped(deg);
    }
  }
  const std::vector<Triangle> &ptri = tab.tri;
  std::vector<Triangle> ftri(nf);
  for (int t = 0; t < nf; ++t)
  {
    ftri[t] = triangle_of(fine, t);
  }
  const double thr = opt.quad.negligible_threshold;
  const auto &gl = gauss_legendre_cached(opt.stokes_points);

  auto test_triangle = [&](int p)
  {
    const Triangle &P = ptri[p];
    const Vec3 &np = P.n;
    const auto &tests = bs.rwg.on_triangle(p);
    std::vector<Vec3> fm(tests.size());

    // Parent sources: RWG and pulse bases.
    for (int q = 0; q < nt; ++q)
    {
      const Triangle &Q = ptri[q];
      if (detail::pair_negligible(P, Q, k, thr))
      {
        continue;
      }
      const bool touching = detail::share_vertex(mesh.triangles()[p], mesh.triangles()[q]);
      const detail::TestPoints &tp = detail::test_points_for(tab, p, Q, touching, k, opt);
      const auto &srcs = bs.rwg.on_triangle(q);
      cplx lss = 0.0, mpv = 0.0;
      for (int w = 0; w < tp.size(); ++w)
      {
        const Vec3 &r = tp.r[w];
        const double wn = tp.w[w];
        const double wa = wn * P.area;
        const Moments mo = source_moments(Q, r, k, opt.quad);
        lss += wn * mo.I0;
        mpv -= wn * dotu(Q.n.cast<cplx>(), mo.Ig);
        for (size_t i = 0; i < tests.size(); ++i)
        {
          fm[i] = bs.rwg.pieces(tests[i][0])[tests[i][1]](r);
          kb.Ltn.matrix(tests[i][0], q) += wa * fm[i].dot(Q.n) * mo.I0;
        }
        for (const auto &[n, side] : srcs)
        {
          const VectorPiece &src = bs.rwg.pieces(n)[side];
          const Vec3c lv = src.beta * mo.I1 + src(r).cast<cplx>() * mo.I0;
          if (opt.normal_blocks)
          {
            kb.Lnt.matrix(p, n) += wn * dotu(np.cast<cplx>(), lv);
          }
          for (size_t i = 0; i < tests.size(); ++i)
          {
            kb.Ltt.matrix(tests[i][0], n) += wa * dotu(fm[i].cast<cplx>(), lv);
          }
        }
      }
      kb.Lss.matrix(p, q) = lss;
      kb.Mpv.matrix(p, q) = mpv;
    }

    // Fine sources: BC basis.
    for (int tau = 0; tau < nf; ++tau)
    {
      const Triangle &Q = ftri[tau];
      if (detail::pair_negligible(P, Q, k, thr))
      {
        continue;
      }
      const auto &srcs = bs.bc.on_fine_triangle(tau);
      if (srcs.empty())
      {
        continue;
      }
      const int parent = bs.refined.parent_triangle[tau];
      const bool touching = detail::share_vertex(mesh.triangles()[p], mesh.triangles()[parent]);
      const bool stokes = opt.normal_blocks && touching;
      const detail::TestPoints &tp = detail::test_points_for(tab, p, Q, touching, k, opt);
      for (int w = 0; w < tp.size(); ++w)
      {
        const Vec3 &r = tp.r[w];
        const double wn = tp.w[w];
        const double wa = wn * P.area;
        const Moments mo = source_moments(Q, r, k, opt.quad);
        for (size_t i = 0; i < tests.size(); ++i)
        {
          fm[i] = bs.rwg.pieces(tests[i][0])[tests[i][1]](r);
        }
        for (const auto &[b, pc] : srcs)
        {
          const Vec3c kv = crossu(mo.Ig, bs.bc.pieces(b)[pc](r).cast<cplx>());
          if (opt.normal_blocks && !stokes)
          {
            kb.Knt.matrix(p, b) += wn * dotu(np.cast<cplx>(), kv);
          }
          for (size_t i = 0; i < tests.size(); ++i)
          {
            kb.Ktt.matrix(tests[i][0], b) += wa * dotu(fm[i].cast<cplx>(), kv);
          }
        }
      }
      if (stokes)
      {
        // ∫_p n̂·∇×L[g] dS = ∮_∂p L[g]·dl, split at edge midpoints.
        for (int j = 0; j < 3; ++j)
        {
          const Vec3 a = P.v[j], c = P.v[(j + 1) % 3];
          const Vec3 tangent = c - a;
          for (int half = 0; half < 2; ++half)
          {
            const Vec3 s0 = a + 0.5 * half * tangent;
            for (int g = 0; g < opt.stokes_points; ++g)
            {
              const Vec3 r = s0 + 0.25 * (gl.x[g] + 1.0) * tangent;
              const double wl = 0.25 * gl.w[g] / P.area;
              const Moments mo = source_moments(Q, r, k, opt.quad);
              for (const auto &[b, pc] : srcs)
              {
                const VectorPiece &g_b = bs.bc.pieces(b)[pc];
                const Vec3c lv = g_b.beta * mo.I1 + g_b(r).cast<cplx>() * mo.I0;
                kb.Knt.matrix(p, b) += wl * dotu(tangent.cast<cplx>(), lv);
              }
            }
          }
        }
      }
    }
  };

  detail::parallel_groups(detail::edge_disjoint_colouring(mesh), opt.threads, test_triangle);

  Eigen::VectorXd area(nt);
  for (int t = 0; t < nt; ++t)
  {
    area[t] = mesh.area(t);
  }
  if (opt.normal_blocks)
  {
    // A_p MpvT[p,q] = A_q Mpv[q,p].
    kb.MpvT.matrix = area.cwiseInverse().cast<cplx>().asDiagonal() * kb.Mpv.matrix.transpose() *
                     area.cast<cplx>().asDiagonal();
  }
  if (opt.symmetrize)
  {
    MatrixC S = area.cast<cplx>().asDiagonal() * kb.Lss.matrix;
    S = (0.5 * (S + S.transpose())).eval();
    kb.Lss.matrix = area.cwiseInverse().cast<cplx>().asDiagonal() * S;
    kb.Ltt.matrix = (0.5 * (kb.Ltt.matrix + kb.Ltt.matrix.transpose())).eval();
  }
  for (const auto *blk : kb.all())
  {
    blk->check_finite();
    check_dimensions(bs, *blk);
  }
  return kb;
}

//
// Derived blocks.
//
// (DᵀL^(ss))[e,q] = ∫ ∇·f_e L[h_q]: pulse-tested L^(ss) rows differenced over T±.
inline MatrixC div_transpose_lss(const BasisSet &bs, const MatrixC &Lss)
{
  MatrixC out(bs.num_edges(), Lss.cols());
  for (int e = 0; e < bs.num_edges(); ++e)
  {
    out.row(e) = Lss.row(bs.rwg.triangle(e, 0)) - Lss.row(bs.rwg.triangle(e, 1));
  }
  return out;
}

// L^(ss) D: ∫ h̃_p L[∇·f_n].
inline MatrixC lss_div(const BasisSet &bs, const MatrixC &Lss)
{
  MatrixC out = MatrixC::Zero(Lss.rows(), bs.num_edges());
  for (int e = 0; e < bs.num_edges(); ++e)
  {
    for (const auto &p : bs.rwg.pieces(e))
    {
      out.col(e) += p.divergence() * Lss.col(p.triangle);
    }
  }
  return out;
}

// L^(nn)[p,q] = n̂_p·n̂_q L^(ss)[p,q].
inline MatrixC lnn_from_lss(const BasisSet &bs, const MatrixC &Lss)
{
  const int nt = bs.num_triangles();
  MatrixC out(nt, nt);
  for (int q = 0; q < nt; ++q)
  {
    for (int p = 0; p < nt; ++p)
    {
      out(p, q) = bs.mesh->normal(p).dot(bs.mesh->normal(q)) * Lss(p, q);
    }
  }
  return out;
}

// L^(ss) with area-normalized basis: columns divided by A_q.
inline MatrixC lss_area_basis(const BasisSet &bs, const MatrixC &Lss)
{
  MatrixC out = Lss;
  for (int q = 0; q < bs.num_triangles(); ++q)
  {
    out.col(q) /= bs.mesh->area(q);
  }
  return out;
}

//
// Single-block entry points.
//
inline OperatorBlock assemble_L(const BasisSet &bs, TestFamily test, BasisFamily basis, cplx k,
                                KernelTag tag, const AssemblyOptions &opt = {})
{
  AssemblyOptions o = opt;
  o.normal_blocks = test == TestFamily::AreaPulse;
  KernelBlocks kb = assemble_kernel_blocks(bs, k, tag, o);
  OperatorBlock out;
  if (test == TestFamily::RotatedRwg && basis == BasisFamily::Rwg)
  {
    out = std::move(kb.Ltt);
  }
  else if (test == TestFamily::RotatedRwg && basis == BasisFamily::UnitPulseNormal)
  {
    out = std::move(kb.Ltn);
  }
  else if (test == TestFamily::AreaPulse && basis == BasisFamily::Rwg)
  {
    out = std::move(kb.Lnt);
  }
  else if (test == TestFamily::AreaPulse && basis == BasisFamily::UnitPulse)
  {
    out = std::move(kb.Lss);
  }
  else if (test == TestFamily::AreaPulse && basis == BasisFamily::UnitPulseNormal)
  {
    out = kb.Lss;
    out.name = "Lnn";
    out.basis = BasisFamily::UnitPulseNormal;
    out.matrix = lnn_from_lss(bs, kb.Lss.matrix);
  }
  else if (test == TestFamily::AreaPulse && basis == BasisFamily::AreaPulse)
  {
    out = kb.Lss;
    out.name = "Lss_area";
    out.basis = BasisFamily::AreaPulse;
    out.matrix = lss_area_basis(bs, kb.Lss.matrix);
  }
  else
  {
    throw AssemblyError(std::string("no L block for test ") + to_string(test) + " and basis " +
                        to_string(basis));
  }
  return out;
}

inline OperatorBlock assemble_K(const BasisSet &bs, TestFamily test, cplx k, KernelTag tag,
                                const AssemblyOptions &opt = {})
{
  AssemblyOptions o = opt;
  o.normal_blocks = test == TestFamily::AreaPulse;
  KernelBlocks kb = assemble_kernel_blocks(bs, k, tag, o);
  return test == TestFamily::RotatedRwg ? std::move(kb.Ktt) : std::move(kb.Knt);
}

inline OperatorBlock assemble_M(const BasisSet &bs, cplx k, KernelTag tag, bool transpose_form,
                                const AssemblyOptions &opt = {})
{
  AssemblyOptions o = opt;
  o.normal_blocks = transpose_form;
  KernelBlocks kb = assemble_kernel_blocks(bs, k, tag, o);
  return transpose_form ? std::move(kb.MpvT) : std::move(kb.Mpv);
}

//
// Exterior blocks depend only on k₀ and the mesh; cached per frequency.
//
class ExteriorCache
{
public:
  std::shared_ptr<const KernelBlocks> get(const BasisSet &bs, double omega,
                                          const AssemblyOptions &opt, bool *hit = nullptr)
  {
    const auto key = std::bit_cast<std::uint64_t>(omega);
    if (&bs != basis_)
    {
      map_.clear();
      basis_ = &bs;
    }
    auto it = map_.find(key);
    if (hit)
    {
      *hit = it != map_.end();
    }
    if (it != map_.end())
    {
      return it->second;
    }
    AssemblyOptions o = opt;
    o.normal_blocks = false;
    auto blocks = std::make_shared<const KernelBlocks>(
      assemble_kernel_blocks(bs, free_space_wavenumber(omega), KernelTag::Exterior, o));
    map_[key] = blocks;
    return blocks;
  }
  size_t size() const { return map_.size(); }
  void clear() { map_.clear(); }

private:
  const BasisSet *basis_ = nullptr;
  std::map<std::uint64_t, std::shared_ptr<const KernelBlocks>> map_;
};

//
// Binary dump: "PIEBLK1\0", u64 rows, u64 cols, u32 length + row tag, u32 length + column tag,
// then rows*cols little-endian (re, im) double pairs in column-major order.
//
inline void write_pieblk(const std::string &path, const MatrixC &m, const std::string &row_tag,
                         const std::string &col_tag)
{
  static_assert(std::endian::native == std::endian::little, "dump format is little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    throw Error("cannot write " + path);
  }
  out.write("PIEBLK1\0", 8);
  const std::uint64_t r = m.rows(), c = m.cols();
  out.write(reinterpret_cast<const char *>(&r), 8);
  out.write(reinterpret_cast<const char *>(&c), 8);
  for (const auto &tag : {row_tag, col_tag})
  {
    const std::uint32_t n = std::uint32_t(tag.size());
    out.write(reinterpret_cast<const char *>(&n), 4);
    out.write(tag.data(), n);
  }
  out.write(reinterpret_cast<const char *>(m.data()), std::streamsize(m.size() * sizeof(cplx)));
}

inline void write_pieblk(const std::string &path, const OperatorBlock &b)
{
  write_pieblk(path, b.matrix,
               std::string(to_string(b.test)) + ";" + to_string(b.kernel) + ";" + to_string(b.op),
               to_string(b.basis));
}

struct PieBlock
{
  MatrixC matrix;
  std::string row_tag, col_tag;
};

inline PieBlock read_pieblk(const std::string &path)
{
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 7) != "PIEBLK1")
  {
    throw ParseError(path + " is not a PIEBLK1 file");
  }
  std::uint64_t r = 0, c = 0;
  in.read(reinterpret_cast<char *>(&r), 8);
  in.read(reinterpret_cast<char *>(&c), 8);
  PieBlock b;
  for (auto *tag : {&b.row_tag, &b.col_tag})
  {
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char *>(&n), 4);
    tag->resize(n);
    in.read(tag->data(), n);
  }
  b.matrix.resize(Eigen::Index(r), Eigen::Index(c));
  in.read(reinterpret_cast<char *>(b.matrix.data()), std::streamsize(r * c * sizeof(cplx)));
  if (!in)
  {
    throw ParseError(path + " is truncated");
  }
  return b;
}

}  // namespace pie
