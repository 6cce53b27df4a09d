#pragma once

// The scaled 6×6 block system coupling interior and exterior potential equations, its
// right-hand side and the dense direct solve.

#include "pie/operators.hpp"

#include <array>
#include <cstdio>
#include <filesystem>

namespace pie
{

struct PlaneWaveExcitation
{
  cplx E0 = 1.0;
  Vec3 khat{0.0, 0.0, 1.0};
  Vec3 ehat{1.0, 0.0, 0.0};
  double frequency = 1e8;

  double omega() const { return 2.0 * pi * frequency; }
  double k0() const { return free_space_wavenumber(omega()); }

  void validate() const
  {
    if (!(frequency > 0.0) || !std::isfinite(frequency))
    {
      throw ConfigError("excitation frequency must be positive");
    }
    if (std::abs(khat.norm() - 1.0) > 1e-12 || std::abs(ehat.norm() - 1.0) > 1e-12)
    {
      throw ConfigError("propagation and polarization directions must be unit vectors");
    }
    if (std::abs(khat.dot(ehat)) > 1e-12)
    {
      throw ConfigError("polarization must be orthogonal to the propagation direction");
    }
  }

  // Normalizes both directions and removes the component of e along k.
  static PlaneWaveExcitation make(cplx E0, const Vec3 &k, const Vec3 &e, double frequency)
  {
    PlaneWaveExcitation x;
    x.E0 = E0;
    x.frequency = frequency;
    if (k.norm() == 0.0)
    {
      throw ConfigError("zero propagation direction");
    }
    x.khat = k.normalized();
    const Vec3 ep = e - e.dot(x.khat) * x.khat;
    if (ep.norm() < 1e-12 * std::max(1.0, e.norm()))
    {
      throw ConfigError("polarization is parallel to the propagation direction");
    }
    x.ehat = ep.normalized();
    x.validate();
    return x;
  }

  cplx phase(const Vec3 &r) const { return std::exp(-J * k0() * khat.dot(r)); }
  Vec3c E(const Vec3 &r) const { return (E0 * phase(r)) * ehat.cast<cplx>(); }
  Vec3c H(const Vec3 &r) const
  {
    return (E0 * phase(r) / constants::eta0) * khat.cross(ehat).cast<cplx>();
  }
  // Lorenz-gauge potentials with φ_inc = 0.
  Vec3c A(const Vec3 &r) const { return (J / omega()) * E(r); }
};

struct IncidentPotentials
{
  VectorC b_inc;    // ∫ f_m · A_inc
  VectorC Phi_inc;  // ∫ h̃_p φ_inc
};

inline IncidentPotentials incident_potentials(const PlaneWaveExcitation &exc, const BasisSet &bs)
{
  exc.validate();
  const TriangleMesh &mesh = *bs.mesh;
  IncidentPotentials ip;
  ip.b_inc = VectorC::Zero(bs.num_edges());
  ip.Phi_inc = VectorC::Zero(bs.num_triangles());
  const double k0 = exc.k0();
  for (int t = 0; t < mesh.num_triangles(); ++t)
  {
    const Triangle T = triangle_of(mesh, t);
    const double kd = k0 * T.diameter;
    const TriangleRule &rule =
      TriangleRule::of_degree(kd > 1.0 ? std::min(30, 5 + int(std::ceil(2.0 * kd))) : 5);
    for (int q = 0; q < rule.size(); ++q)
    {
      const Vec3 r = T.point(rule.bary[q]);
      const Vec3c a = exc.A(r);
      const double w = rule.w[q] * T.area;
      for (const auto &[n, side] : bs.rwg.on_triangle(t))
      {
        ip.b_inc[n] += w * dotu(bs.rwg.pieces(n)[side](r).cast<cplx>(), a);
      }
    }
  }
  return ip;
}

struct SystemScaling
{
  double xi = 1.0;
  double c0 = constants::c0;
  double eta0 = constants::eta0;
  cplx gamma = 0.0;
  cplx gamma0 = 0.0;
  cplx k = 0.0;
  double k0 = 0.0;
  double mu_ratio = 1.0;
  double omega = 0.0;
};

struct BlockSystem
{
  MatrixC matrix;
  VectorC rhs;
  SystemScaling scaling;
  int ne = 0, nt = 0;

  Eigen::Index size() const { return matrix.rows(); }

  // Offsets of the six unknown (and equation) blocks.
  std::array<Eigen::Index, 7> offsets() const
  {
    return {0, ne, 2 * ne, 2 * ne + nt, 2 * ne + 2 * nt, 2 * ne + 3 * nt, 2 * ne + 4 * nt};
  }
  Eigen::Index block_size(int i) const
  {
    const auto o = offsets();
    return o[i + 1] - o[i];
  }
  auto block(int i, int j) { return matrix.block(offsets()[i], offsets()[j], block_size(i), block_size(j)); }
  auto block(int i, int j) const
  {
    return matrix.block(offsets()[i], offsets()[j], block_size(i), block_size(j));
  }
  auto rhs_block(int i) { return rhs.segment(offsets()[i], block_size(i)); }
  auto rhs_block(int i) const { return rhs.segment(offsets()[i], block_size(i)); }
};

// Which of the 36 blocks are structurally nonzero.
inline constexpr std::array<std::array<bool, 6>, 6> block_pattern{{
  {true, true, true, false, true, false},
  {true, true, true, true, false, false},
  {true, false, true, false, true, false},
  {true, true, true, true, false, false},
  {false, false, true, true, true, true},
  {false, false, true, false, false, true},
}};

inline void check_blocks(const BasisSet &bs, const KernelBlocks &kb, bool normal)
{
  const Eigen::Index ne = bs.num_edges(), nt = bs.num_triangles();
  auto need = [&](const OperatorBlock &b, Eigen::Index r, Eigen::Index c)
  {
    if (b.rows() != r || b.cols() != c)
    {
      throw DimensionMismatch("block " + b.name + " (" + to_string(b.kernel) + ") is " +
                              std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                              ", expected " + std::to_string(r) + "x" + std::to_string(c));
    }
  };
  need(kb.Ltt, ne, ne);
  need(kb.Ktt, ne, ne);
  need(kb.Ltn, ne, nt);
  need(kb.Lss, nt, nt);
  need(kb.Mpv, nt, nt);
  if (normal)
  {
    need(kb.Lnt, nt, ne);
    need(kb.Knt, nt, ne);
    need(kb.MpvT, nt, nt);
  }
}

inline BlockSystem assemble_system(const BasisSet &bs, const KernelBlocks &interior,
                                   const KernelBlocks &exterior, const MaterialParams &mat,
                                   const IncidentPotentials &inc, double xi)
{
  mat.validate();
  check_blocks(bs, interior, true);
  check_blocks(bs, exterior, false);
  const int ne = bs.num_edges(), nt = bs.num_triangles();
  if (inc.b_inc.size() != ne || inc.Phi_inc.size() != nt)
  {
    throw DimensionMismatch("incident vectors do not match the basis counts");
  }
  if (!(xi > 0.0))
  {
    throw DimensionMismatch("edge-length scale must be positive");
  }
  SystemScaling sc;
  sc.xi = xi;
  sc.omega = mat.omega;
  sc.gamma = mat.gamma();
  sc.gamma0 = J * mat.omega * constants::eps0 * constants::mu0;
  sc.k = wavenumber(mat);
  sc.k0 = free_space_wavenumber(mat.omega);
  sc.mu_ratio = mat.mu / constants::mu0;
  if (sc.gamma == 0.0)
  {
    throw MaterialError("γ = (jωε + σ)μ vanishes");
  }
  const double c0 = sc.c0, eta0 = sc.eta0, k0 = sc.k0;
  const cplx g = sc.gamma, g0 = sc.gamma0, k = sc.k;
  const double mr = sc.mu_ratio;

  BlockSystem S;
  S.ne = ne;
  S.nt = nt;
  S.scaling = sc;
  const Eigen::Index N = 2 * Eigen::Index(ne) + 4 * Eigen::Index(nt);
  S.matrix = MatrixC::Zero(N, N);
  S.rhs = VectorC::Zero(N);

  const MatrixC Ix = MatrixC(mixed_gram(bs.rwg, bs.bc).cast<cplx>());
  const MatrixC P = MatrixC::Identity(nt, nt);

  // Row 1: exterior tangential.
  S.block(0, 0) = exterior.Ltt.matrix / xi;
  S.block(0, 1) = exterior.Ktt.matrix - 0.5 * Ix;
  S.block(0, 2) = (J * k0 / xi) * exterior.Ltn.matrix;
  S.block(0, 4) = div_transpose_lss(bs, exterior.Lss.matrix) / xi;
  S.rhs_block(0) = -inc.b_inc / xi;

  // Row 2: interior tangential.
  S.block(1, 0) = (mr / xi) * interior.Ltt.matrix;
  S.block(1, 1) = interior.Ktt.matrix + 0.5 * Ix;
  S.block(1, 2) = (c0 * g / xi) * interior.Ltn.matrix;
  S.block(1, 3) = div_transpose_lss(bs, interior.Lss.matrix) / xi;

  // Row 3: exterior divergence.
  S.block(2, 0) = lss_div(bs, exterior.Lss.matrix);
  S.block(2, 2) = (J * k0) * (0.5 * P - exterior.Mpv.matrix);
  S.block(2, 4) = (k0 * k0) * exterior.Lss.matrix;
  S.rhs_block(2) = g0 * inc.Phi_inc;

  // Row 4: interior normal.
  S.block(3, 0) = mr * interior.Lnt.matrix;
  S.block(3, 1) = xi * interior.Knt.matrix;
  S.block(3, 2) = (c0 * g) * lnn_from_lss(bs, interior.Lss.matrix);
  S.block(3, 3) = 0.5 * P - interior.MpvT.matrix;

  // Row 5: interior scalar, with the interior normal derivative of φ eliminated.
  S.block(4, 2) = -(interior.Mpv.matrix + 0.5 * P);
  S.block(4, 3) = (k * k / (g * c0)) * interior.Lss.matrix;
  S.block(4, 4) = (-mat.mu * k0 * k0 / (g * eta0)) * interior.Lss.matrix;
  S.block(4, 5) = (mat.mu * g0 / (g * eta0)) * lss_area_basis(bs, interior.Lss.matrix);

  // Row 6: exterior scalar.
  S.block(5, 2) = 0.5 * P - exterior.Mpv.matrix;
  S.block(5, 5) = lss_area_basis(bs, exterior.Lss.matrix) / c0;
  S.rhs_block(5) = inc.Phi_inc / c0;

  if (!S.matrix.allFinite() || !S.rhs.allFinite())
  {
    throw AssemblyError("non-finite entry in the block system");
  }
  return S;
}

struct Solution
{
  VectorC u_a0, u_b, Phi, u_d, u_d0, ndgPhi0;
  double residual = 0.0;
  double rcond = 0.0;
  int refinement_steps = 0;
  double omega = 0.0;

  double condition_estimate() const { return rcond > 0.0 ? 1.0 / rcond : INFINITY; }

  std::vector<std::pair<std::string, const VectorC *>> parts() const
  {
    return {{"u_a0", &u_a0}, {"u_b", &u_b}, {"Phi", &Phi},
            {"u_d", &u_d},   {"u_d0", &u_d0}, {"ndgPhi0", &ndgPhi0}};
  }
};

struct SolveOptions
{
  double max_residual = 1e-8;
  double refine_below = 1e-13;  // iterative refinement runs while the residual exceeds this
  int max_refinement = 2;
};

inline Solution unscale(const BlockSystem &S, const VectorC &x)
{
  const auto o = S.offsets();
  Solution sol;
  sol.u_a0 = x.segment(o[0], S.ne);
  sol.u_b = S.scaling.xi * x.segment(o[1], S.ne);
  sol.Phi = S.scaling.c0 * x.segment(o[2], S.nt);
  sol.u_d = x.segment(o[3], S.nt);
  sol.u_d0 = x.segment(o[4], S.nt);
  sol.ndgPhi0 = x.segment(o[5], S.nt);
  sol.omega = S.scaling.omega;
  return sol;
}

// LU with partial pivoting; the matrix is kept for the residual.
inline Solution solve(const BlockSystem &S, const SolveOptions &opt = {})
{
  if (S.matrix.rows() != S.matrix.cols() || S.rhs.size() != S.matrix.rows())
  {
    throw DimensionMismatch("system matrix and right-hand side sizes differ");
  }
  MatrixC work = S.matrix;
  Eigen::PartialPivLU<Eigen::Ref<MatrixC>> lu(work);
  const auto &U = lu.matrixLU();
  for (Eigen::Index i = 0; i < U.rows(); ++i)
  {
    if (!(std::abs(U(i, i)) > 0.0) || !std::isfinite(std::abs(U(i, i))))
    {
      throw SingularMatrix("zero or non-finite pivot at row " + std::to_string(i));
    }
  }
  const double rcond = lu.rcond();
  if (!std::isfinite(rcond) || rcond <= 0.0)
  {
    throw SingularMatrix("condition estimate is not finite");
  }
  const double bnorm = S.rhs.norm();
  VectorC x = lu.solve(S.rhs);
  double res = 0.0;
  int steps = 0;
  if (bnorm > 0.0)
  {
    VectorC r = S.rhs - S.matrix * x;
    res = r.norm() / bnorm;
    while (res > opt.refine_below && steps < opt.max_refinement)
    {
      VectorC x1 = x + lu.solve(r);
      VectorC r1 = S.rhs - S.matrix * x1;
      const double res1 = r1.norm() / bnorm;
      ++steps;
      if (!(res1 < res))
      {
        break;
      }
      x = std::move(x1);
      r = std::move(r1);
      res = res1;
    }
  }
  else
  {
    x.setZero();
  }
  if (!x.allFinite())
  {
    throw SingularMatrix("non-finite solution");
  }
  if (res > opt.max_residual)
  {
    throw ResidualTooLarge("relative residual " + std::to_string(res) + " exceeds " +
                           std::to_string(opt.max_residual));
  }
  Solution sol = unscale(S, x);
  sol.residual = res;
  sol.rcond = rcond;
  sol.refinement_steps = steps;
  return sol;
}

// Coefficient vector as CSV: index, real, imag.
inline void write_vector_csv(const std::string &path, const VectorC &v)
{
  std::FILE *f = std::fopen(path.c_str(), "w");
  if (!f)
  {
    throw Error("cannot write " + path);
  }
  std::fprintf(f, "index,real,imag\n");
  for (Eigen::Index i = 0; i < v.size(); ++i)
  {
    std::fprintf(f, "%lld,%.17g,%.17g\n", static_cast<long long>(i), v[i].real(), v[i].imag());
  }
  std::fclose(f);
}

inline void write_solution_csv(const std::filesystem::path &dir, const std::string &prefix,
                               const Solution &sol)
{
  for (const auto &[name, v] : sol.parts())
  {
    write_vector_csv((dir / (prefix + name + ".csv")).string(), *v);
  }
}

inline void dump_system(const std::filesystem::path &dir, const BlockSystem &S)
{
  write_pieblk((dir / "system_matrix.pieblk").string(), S.matrix, "equations", "unknowns");
  write_pieblk((dir / "system_rhs.pieblk").string(), MatrixC(S.rhs), "equations", "rhs");
}

}  // namespace pie
