#pragma once

// Scattered potentials and fields from the exterior representation, far-field amplitudes,
// bistatic RCS, cross sections, probe lines and surface currents.

#include "pie/mie.hpp"
#include "pie/system.hpp"

#include <thread>

namespace pie
{

using Mat3c = Eigen::Matrix<cplx, 3, 3>;

struct PostOptions
{
  int threads = 1;
  double min_distance_factor = 0.05;  // PointTooClose below this fraction of the nearest diameter
  double subdivide_ratio = 1.5;       // centre distance / diameter below which sources are split
  int max_subdivision = 10;
  int far_rule_degree = 5;
};

struct FieldSamples
{
  std::vector<Vec3> points;
  std::vector<Vec3c> E, H;
};

struct ScatteredPotentials
{
  std::vector<Vec3c> A, curlA, grad_phi;
  std::vector<cplx> phi;
};

namespace detail
{

struct KernelEval
{
  cplx G;
  Vec3c grad;  // ∇_r G
  Mat3c hess;  // ∇_r ∇_r G
};

inline KernelEval kernel_eval(cplx k, const Vec3 &d)
{
  const double R = d.norm();
  const cplx G = std::exp(-J * k * R) / (4.0 * pi * R);
  const cplx a = J * k + 1.0 / R;
  const cplx G1 = -a * G;                    // G'(R)
  const cplx G2 = (a * a + 1.0 / (R * R)) * G;  // G''(R)
  const Vec3c u = (d / R).cast<cplx>();
  KernelEval e;
  e.G = G;
  e.grad = G1 * u;
  e.hess = (G2 - G1 / R) * (u * u.transpose()) + (G1 / R) * Mat3c::Identity();
  return e;
}

// Calls f(r', w) over T, splitting T into four while r is close relative to its size.
template <class F>
void integrate_adaptive(const Triangle &T, const Vec3 &r, cplx k, const PostOptions &opt, F &&f,
                        int depth = 0)
{
  const double ratio = (r - T.centroid).norm() / T.diameter;
  if (ratio < opt.subdivide_ratio && depth < opt.max_subdivision)
  {
    const Vec3 m01 = 0.5 * (T.v[0] + T.v[1]), m12 = 0.5 * (T.v[1] + T.v[2]),
               m20 = 0.5 * (T.v[2] + T.v[0]);
    for (const Triangle &C : {Triangle(T.v[0], m01, m20), Triangle(m01, T.v[1], m12),
                              Triangle(m20, m12, T.v[2]), Triangle(m12, m20, m01)})
    {
      integrate_adaptive(C, r, k, opt, f, depth + 1);
    }
    return;
  }
  int degree = ratio < 3.0 ? 10 : (ratio < 6.0 ? 6 : 4);
  const double kd = std::abs(k) * T.diameter;
  if (kd > 1.0)
  {
    degree = std::max(degree, std::min(30, int(std::ceil(2.0 * kd)) + 4));
  }
  const TriangleRule &rule = TriangleRule::of_degree(degree);
  for (int q = 0; q < rule.size(); ++q)
  {
    f(T.point(rule.bary[q]), rule.w[q] * T.area);
  }
}

template <class Body>
void parallel_for(int n, int threads, Body &&body)
{
  threads = std::max(1, std::min(threads, n));
  if (threads == 1)
  {
    for (int i = 0; i < n; ++i)
    {
      body(i);
    }
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex m;
  auto worker = [&]
  {
    for (int i = next++; i < n; i = next++)
    {
      try
      {
        body(i);
      }
      catch (...)
      {
        std::lock_guard lock(m);
        if (!err)
        {
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t)
  {
    pool.emplace_back(worker);
  }
  worker();
  for (auto &t : pool)
  {
    t.join();
  }
  if (err)
  {
    std::rethrow_exception(err);
  }
}

}  // namespace detail

// Complex affine vector density c·r' + v.
struct AffineDensity
{
  cplx c = 0.0;
  Vec3c v = Vec3c::Zero();

  Vec3c operator()(const Vec3 &r) const { return c * r.cast<cplx>() + v; }
  void add(cplx coef, const VectorPiece &p)
  {
    c += coef * p.beta;
    v += coef * p.alpha.cast<cplx>();
  }
};

//
// Surface densities of the exterior representation, expanded per triangle:
//   A_sc = L₀[a₀] + K₀[A_t] − ∇L₀[A_n0] + γ₀ L₀[n̂ φ]
//   φ_sc = −L₀[n̂·∇φ₀] + ∫ n̂'·∇'G φ
//
class ExteriorField
{
public:
  ExteriorField(const BasisSet &bs, const Solution &sol, const PostOptions &opt = {})
    : bs_(&bs), opt_(opt), omega_(sol.omega), k0_(free_space_wavenumber(sol.omega))
  {
    const TriangleMesh &mesh = *bs.mesh;
    const int nt = mesh.num_triangles();
    if (sol.u_a0.size() != bs.num_edges() || sol.u_b.size() != bs.num_edges() ||
        sol.Phi.size() != nt || sol.u_d0.size() != nt || sol.ndgPhi0.size() != nt)
    {
      throw DimensionMismatch("solution does not match the basis set");
    }
    gamma0_ = J * omega_ * constants::eps0 * constants::mu0;
    tri_.resize(nt);
    a0_.resize(nt);
    for (int t = 0; t < nt; ++t)
    {
      tri_[t] = triangle_of(mesh, t);
      for (const auto &[n, side] : bs.rwg.on_triangle(t))
      {
        a0_[t].add(sol.u_a0[n], bs.rwg.pieces(n)[side]);
      }
      a0_[t].v += gamma0_ * sol.Phi[t] * tri_[t].n.cast<cplx>();
    }
    phi_ = sol.Phi;
    an0_ = sol.u_d0;
    psi_.resize(nt);
    for (int t = 0; t < nt; ++t)
    {
      psi_[t] = sol.ndgPhi0[t] / mesh.area(t);
    }
    const TriangleMesh &fine = bs.refined.mesh;
    ftri_.resize(fine.num_triangles());
    at_.resize(fine.num_triangles());
    for (int tau = 0; tau < fine.num_triangles(); ++tau)
    {
      ftri_[tau] = triangle_of(fine, tau);
      for (const auto &[b, pc] : bs.bc.on_fine_triangle(tau))
      {
        at_[tau].add(sol.u_b[b], bs.bc.pieces(b)[pc]);
      }
    }
    build_far_points();
  }

  double omega() const { return omega_; }
  double k0() const { return k0_; }
  double extent() const { return bs_->mesh->bbox_diagonal(); }

  void check_point(const Vec3 &r) const
  {
    for (const Triangle &T : tri_)
    {
      const double d = detail::point_triangle_distance(r, T);
      if (d < opt_.min_distance_factor * T.diameter)
      {
        throw PointTooClose("observation point (" + std::to_string(r.x()) + ", " +
                            std::to_string(r.y()) + ", " + std::to_string(r.z()) +
                            ") lies within " + std::to_string(d) + " m of the surface");
      }
    }
  }

  struct PointValue
  {
    Vec3c A = Vec3c::Zero(), curlA = Vec3c::Zero(), grad_phi = Vec3c::Zero();
    cplx phi = 0.0;
  };

  PointValue evaluate(const Vec3 &r) const
  {
    check_point(r);
    PointValue pv;
    const cplx k = k0_;
    for (size_t t = 0; t < tri_.size(); ++t)
    {
      const Triangle &T = tri_[t];
      const Vec3c n = T.n.cast<cplx>();
      const AffineDensity &a = a0_[t];
      const cplx an = an0_[t], ps = psi_[t], ph = phi_[t];
      detail::integrate_adaptive(T, r, k, opt_, [&](const Vec3 &rp, double w)
      {
        const detail::KernelEval e = detail::kernel_eval(k, r - rp);
        const Vec3c va = a(rp);
        pv.A += w * (e.G * va - e.grad * an);
        pv.curlA += w * crossu(e.grad, va);
        pv.phi += w * (-e.G * ps - ph * dotu(n, e.grad));
        pv.grad_phi += w * (-e.grad * ps - ph * (e.hess * n));
      });
    }
    for (size_t tau = 0; tau < ftri_.size(); ++tau)
    {
      const AffineDensity &g = at_[tau];
      if (g.c == 0.0 && g.v.isZero(0.0))
      {
        continue;
      }
      detail::integrate_adaptive(ftri_[tau], r, k, opt_, [&](const Vec3 &rp, double w)
      {
        const detail::KernelEval e = detail::kernel_eval(k, r - rp);
        const Vec3c gv = g(rp);
        pv.A += w * crossu(e.grad, gv);
        pv.curlA += w * (e.hess * gv + (k * k) * e.G * gv);
      });
    }
    return pv;
  }

  ScatteredPotentials potentials(const std::vector<Vec3> &pts) const
  {
    ScatteredPotentials out;
    out.A.resize(pts.size());
    out.curlA.resize(pts.size());
    out.grad_phi.resize(pts.size());
    out.phi.resize(pts.size());
    detail::parallel_for(int(pts.size()), opt_.threads, [&](int i)
    {
      const PointValue v = evaluate(pts[i]);
      out.A[i] = v.A;
      out.curlA[i] = v.curlA;
      out.grad_phi[i] = v.grad_phi;
      out.phi[i] = v.phi;
    });
    return out;
  }

  // E = −jωA − ∇φ, H = ∇×A/μ₀.
  FieldSamples scattered_fields(const std::vector<Vec3> &pts) const
  {
    const ScatteredPotentials p = potentials(pts);
    FieldSamples f;
    f.points = pts;
    for (size_t i = 0; i < pts.size(); ++i)
    {
      f.E.push_back(-J * omega_ * p.A[i] - p.grad_phi[i]);
      f.H.push_back(p.curlA[i] / constants::mu0);
    }
    return f;
  }

  // Far-zone amplitude F with E_sc ≈ F e^{−jk₀R}/R along r̂.
  Vec3c far_amplitude(const Vec3 &rhat_in) const
  {
    const Vec3 rhat = rhat_in.normalized();
    Vec3c sa = Vec3c::Zero(), sg = Vec3c::Zero();
    for (const auto &p : far_a_)
    {
      sa += std::exp(J * k0_ * rhat.dot(p.r)) * p.v;
    }
    for (const auto &p : far_g_)
    {
      sg += std::exp(J * k0_ * rhat.dot(p.r)) * p.v;
    }
    const Vec3c rc = rhat.cast<cplx>();
    Vec3c A = sa - J * k0_ * crossu(rc, sg);
    A -= dotu(rc, A) * rc;
    return (-J * omega_ / (4.0 * pi)) * A;
  }

private:
  struct FarPoint
  {
    Vec3 r;
    Vec3c v;
  };

  void build_far_points()
  {
    auto fill = [&](const std::vector<Triangle> &tris, const std::vector<AffineDensity> &dens,
                    std::vector<FarPoint> &out)
    {
      for (size_t t = 0; t < tris.size(); ++t)
      {
        const Triangle &T = tris[t];
        const double kd = k0_ * T.diameter;
        const int deg = kd > 1.0 ? std::min(30, opt_.far_rule_degree + int(std::ceil(2.0 * kd)))
                                 : opt_.far_rule_degree;
        const TriangleRule &rule = TriangleRule::of_degree(deg);
        for (int q = 0; q < rule.size(); ++q)
        {
          const Vec3 rp = T.point(rule.bary[q]);
          out.push_back({rp, (rule.w[q] * T.area) * dens[t](rp)});
        }
      }
    };
    fill(tri_, a0_, far_a_);
    fill(ftri_, at_, far_g_);
  }

  const BasisSet *bs_;
  PostOptions opt_;
  double omega_, k0_;
  cplx gamma0_;
  std::vector<Triangle> tri_, ftri_;
  std::vector<AffineDensity> a0_, at_;
  VectorC phi_, an0_, psi_;
  std::vector<FarPoint> far_a_, far_g_;
};

// Observation direction for a cut angle θ measured from the forward direction.
inline Vec3 cut_direction(const PlaneWaveExcitation &exc, RcsCut cut, double theta)
{
  const Vec3 u = cut == RcsCut::EPlane ? exc.ehat : exc.khat.cross(exc.ehat);
  return std::cos(theta) * exc.khat + std::sin(theta) * u;
}

inline double sigma_from_amplitude(const Vec3c &F, cplx E0)
{
  return 4.0 * pi * F.squaredNorm() / std::norm(E0);
}

inline RcsCurve bistatic_rcs(const ExteriorField &field, const PlaneWaveExcitation &exc, RcsCut cut,
                             const std::vector<double> &angles_deg)
{
  for (size_t i = 1; i < angles_deg.size(); ++i)
  {
    if (!(angles_deg[i] > angles_deg[i - 1]))
    {
      throw GridMismatch("RCS angles must be strictly increasing");
    }
  }
  RcsCurve c;
  c.cut = cut;
  c.angles_deg = angles_deg;
  for (double a : angles_deg)
  {
    const Vec3c F = field.far_amplitude(cut_direction(exc, cut, a * pi / 180.0));
    c.rcs_dbsm.push_back(to_dbsm(sigma_from_amplitude(F, exc.E0)));
  }
  return c;
}

// σ(θ) from the field at a finite distance R: 4πR²|E_sc|²/|E₀|².
inline RcsCurve bistatic_rcs_at_range(const ExteriorField &field, const PlaneWaveExcitation &exc,
                                      RcsCut cut, const std::vector<double> &angles_deg, double R)
{
  std::vector<Vec3> pts;
  for (double a : angles_deg)
  {
    pts.push_back(R * cut_direction(exc, cut, a * pi / 180.0));
  }
  const FieldSamples f = field.scattered_fields(pts);
  RcsCurve c;
  c.cut = cut;
  c.angles_deg = angles_deg;
  for (const auto &E : f.E)
  {
    c.rcs_dbsm.push_back(to_dbsm(4.0 * pi * R * R * E.squaredNorm() / std::norm(exc.E0)));
  }
  return c;
}

// Extinction from the forward amplitude; scattering by Gauss–Legendre × trapezoid over 4π.
inline CrossSections cross_sections(const ExteriorField &field, const PlaneWaveExcitation &exc,
                                    int n_theta = 0)
{
  if (n_theta <= 0)
  {
    n_theta = std::max(24, int(std::ceil(field.k0() * field.extent())) + 24);
  }
  const int n_phi = 2 * n_theta;
  const Vec3 e1 = exc.ehat, e2 = exc.khat.cross(exc.ehat), e3 = exc.khat;
  const GaussLegendre gl = gauss_legendre(n_theta);
  double sca = 0.0;
  for (int i = 0; i < n_theta; ++i)
  {
    const double ct = gl.x[i], st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    double ring = 0.0;
    for (int j = 0; j < n_phi; ++j)
    {
      const double ph = 2.0 * pi * j / n_phi;
      const Vec3 rhat = st * std::cos(ph) * e1 + st * std::sin(ph) * e2 + ct * e3;
      ring += field.far_amplitude(rhat).squaredNorm();
    }
    sca += gl.w[i] * ring * (2.0 * pi / n_phi);
  }
  CrossSections c;
  c.sca = sca / std::norm(exc.E0);
  const Vec3c F0 = field.far_amplitude(exc.khat);
  const cplx proj = dotu(exc.ehat.cast<cplx>(), F0) * std::conj(exc.E0) / std::norm(exc.E0);
  c.ext = -(4.0 * pi / field.k0()) * proj.imag();
  c.abs = c.ext - c.sca;
  return c;
}

struct ProbeLine
{
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
  int n_samples = 2;

  std::vector<Vec3> points() const
  {
    if (n_samples < 2)
    {
      throw ConfigError("a probe line needs at least two samples");
    }
    std::vector<Vec3> p;
    for (int i = 0; i < n_samples; ++i)
    {
      p.push_back(start + (end - start) * (double(i) / (n_samples - 1)));
    }
    return p;
  }
};

// Total fields (incident plus scattered) along a line.
inline FieldSamples near_field_probe(const ExteriorField &field, const PlaneWaveExcitation &exc,
                                     const ProbeLine &line)
{
  FieldSamples f = field.scattered_fields(line.points());
  for (size_t i = 0; i < f.points.size(); ++i)
  {
    f.E[i] += exc.E(f.points[i]);
    f.H[i] += exc.H(f.points[i]);
  }
  return f;
}

struct SurfaceCurrent
{
  VectorC coefficients;            // RWG coefficients of J_s = n̂ × H
  std::vector<Vec3> centroids;
  std::vector<double> magnitude;   // |J_s| at triangle centroids
};

inline SurfaceCurrent surface_current(const BasisSet &bs, const Solution &sol)
{
  SurfaceCurrent sc;
  sc.coefficients = sol.u_a0 / constants::mu0;
  const TriangleMesh &mesh = *bs.mesh;
  for (int t = 0; t < mesh.num_triangles(); ++t)
  {
    const Vec3 c = mesh.centroid(t);
    Vec3c j = Vec3c::Zero();
    for (const auto &[n, side] : bs.rwg.on_triangle(t))
    {
      j += sc.coefficients[n] * bs.rwg.pieces(n)[side](c).cast<cplx>();
    }
    sc.centroids.push_back(c);
    sc.magnitude.push_back(j.norm());
  }
  return sc;
}

//
// CSV output; fixed formatting so repeated runs are byte-identical.
//
namespace detail
{
inline std::FILE *open_csv(const std::string &path)
{
  std::FILE *f = std::fopen(path.c_str(), "w");
  if (!f)
  {
    throw Error("cannot write " + path);
  }
  return f;
}
}  // namespace detail

inline void write_rcs_csv(const std::string &path, const RcsCurve &c)
{
  std::FILE *f = detail::open_csv(path);
  std::fprintf(f, "angle_deg,rcs_dbsm\n");
  for (size_t i = 0; i < c.angles_deg.size(); ++i)
  {
    std::fprintf(f, "%.6f,%.10f\n", c.angles_deg[i], c.rcs_dbsm[i]);
  }
  std::fclose(f);
}

inline RcsCurve read_rcs_csv(const std::string &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw ParseError("cannot read " + path);
  }
  RcsCurve c;
  std::string line;
  std::getline(in, line);
  if (line.rfind("angle_deg", 0) != 0)
  {
    throw ParseError(path + ": missing angle_deg,rcs_dbsm header");
  }
  int lineno = 1;
  while (std::getline(in, line))
  {
    ++lineno;
    if (line.empty())
    {
      continue;
    }
    double a = 0, v = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf", &a, &v) != 2)
    {
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed row");
    }
    c.angles_deg.push_back(a);
    c.rcs_dbsm.push_back(v);
  }
  return c;
}

inline void write_probe_csv(const std::string &path, const FieldSamples &s, const Vec3 &start)
{
  std::FILE *f = detail::open_csv(path);
  std::fprintf(f, "s_m,x,y,z,abs_E\n");
  for (size_t i = 0; i < s.points.size(); ++i)
  {
    const Vec3 &p = s.points[i];
    std::fprintf(f, "%.9e,%.9e,%.9e,%.9e,%.10e\n", (p - start).norm(), p.x(), p.y(), p.z(),
                 s.E[i].norm());
  }
  std::fclose(f);
}

inline void write_current_csv(const std::string &path, const SurfaceCurrent &sc)
{
  std::FILE *f = detail::open_csv(path);
  std::fprintf(f, "triangle_index,cx,cy,cz,abs_J\n");
  for (size_t t = 0; t < sc.centroids.size(); ++t)
  {
    const Vec3 &c = sc.centroids[t];
    std::fprintf(f, "%zu,%.9e,%.9e,%.9e,%.10e\n", t, c.x(), c.y(), c.z(), sc.magnitude[t]);
  }
  std::fclose(f);
}

}  // namespace pie
