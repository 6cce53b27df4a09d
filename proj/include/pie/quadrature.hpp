#pragma once

// Triangle quadrature rules and the potential integrals of flat triangles: analytic static
// 1/R and R moments, singularity subtraction for mildly lossy kernels and a polar scheme
// about the projected observation point for strongly damped kernels.

#include "pie/media.hpp"
#include "pie/mesh.hpp"

#include <algorithm>

namespace pie
{

struct Triangle
{
  std::array<Vec3, 3> v;
  Vec3 n, centroid;
  double area = 0.0, diameter = 0.0;
  double reach = 0.0;  // largest centroid-to-vertex distance

  Triangle() = default;
  Triangle(const Vec3 &a, const Vec3 &b, const Vec3 &c) : v{a, b, c}
  {
    const Vec3 cr = (b - a).cross(c - a);
    const double twice = cr.norm();
    if (!(twice > 0.0))
    {
      throw DegenerateError("triangle with zero area");
    }
    area = 0.5 * twice;
    n = cr / twice;
    centroid = (a + b + c) / 3.0;
    diameter = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
    reach = std::max({(a - centroid).norm(), (b - centroid).norm(), (c - centroid).norm()});
  }

  Vec3 point(const std::array<double, 3> &l) const
  {
    return l[0] * v[0] + l[1] * v[1] + l[2] * v[2];
  }
};

inline Triangle triangle_of(const TriangleMesh &mesh, int t)
{
  return Triangle(mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2));
}

// Symmetric rules on the reference triangle; weights sum to one and are scaled by the area.
struct TriangleRule
{
  int degree = 0;
  std::vector<std::array<double, 3>> bary;
  std::vector<double> w;

  int size() const { return int(w.size()); }

  static const TriangleRule &centroid()
  {
    static const TriangleRule r{1, {{1.0 / 3, 1.0 / 3, 1.0 / 3}}, {1.0}};
    return r;
  }

  static const TriangleRule &three_point()
  {
    static const TriangleRule r{2,
                                {{2.0 / 3, 1.0 / 6, 1.0 / 6},
                                 {1.0 / 6, 2.0 / 3, 1.0 / 6},
                                 {1.0 / 6, 1.0 / 6, 2.0 / 3}},
                                {1.0 / 3, 1.0 / 3, 1.0 / 3}};
    return r;
  }

  static const TriangleRule &seven_point()
  {
    static const TriangleRule r = []
    {
      const double a = 0.0597158717897698, b = 0.4701420641051151;
      const double c = 0.7974269853530873, d = 0.1012865073234563;
      const double wa = 0.1323941527885062, wc = 0.1259391805448271;
      return TriangleRule{5,
                          {{1.0 / 3, 1.0 / 3, 1.0 / 3},
                           {a, b, b},
                           {b, a, b},
                           {b, b, a},
                           {c, d, d},
                           {d, c, d},
                           {d, d, c}},
                          {0.225, wa, wa, wa, wc, wc, wc}};
    }();
    return r;
  }

  // Collapsed Gauss-Legendre product rule with n² points, exact to degree 2n − 2.
  static TriangleRule conical(int n)
  {
    const auto &gl = gauss_legendre_cached(n);
    TriangleRule r;
    r.degree = 2 * n - 2;
    for (int i = 0; i < n; ++i)
    {
      const double u = 0.5 * (1.0 + gl.x[i]);
      for (int j = 0; j < n; ++j)
      {
        const double s = 0.5 * (1.0 + gl.x[j]);
        const double x = u, y = s * (1.0 - u);
        r.bary.push_back({1.0 - x - y, x, y});
        r.w.push_back(0.5 * gl.w[i] * gl.w[j] * (1.0 - u));
      }
    }
    return r;
  }

  static const TriangleRule &conical_cached(int n)
  {
    static const std::vector<TriangleRule> table = []
    {
      std::vector<TriangleRule> t(17);
      for (int i = 1; i <= 16; ++i)
      {
        t[i] = conical(i);
      }
      return t;
    }();
    if (n < 1 || n > 16)
    {
      throw QuadratureFailure("conical rule order out of range: " + std::to_string(n));
    }
    return table[n];
  }

  // Cheapest available rule exact to at least the given degree.
  static const TriangleRule &of_degree(int degree)
  {
    if (degree <= 1)
    {
      return centroid();
    }
    if (degree == 2)
    {
      return three_point();
    }
    if (degree <= 5)
    {
      return seven_point();
    }
    const int n = (degree + 3) / 2;
    return conical_cached(n);
  }
};

template <class F>
auto integrate_smooth(const Triangle &T, F &&f, const TriangleRule &rule)
{
  using R = std::decay_t<decltype(f(T.v[0]))>;
  R sum = f(T.point(rule.bary[0])) * rule.w[0];
  for (int q = 1; q < rule.size(); ++q)
  {
    sum += f(T.point(rule.bary[q])) * rule.w[q];
  }
  return R(sum * T.area);
}

// Composite Gauss-Legendre sum over [a, b] split into equal panels.
template <class F>
void composite_gauss(double a, double b, int panels, int order, F &&f)
{
  const auto &gl = gauss_legendre_cached(order);
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p)
  {
    const double lo = a + p * h;
    for (int i = 0; i < order; ++i)
    {
      f(lo + 0.5 * h * (1.0 + gl.x[i]), 0.5 * h * gl.w[i]);
    }
  }
}

//
// Analytic integrals over a flat triangle for observation point r (any position).
//
struct StaticMoments
{
  double inv_r = 0.0;   // ∫ 1/R
  Vec3 inv_r1;          // ∫ (r' − r)/R
  Vec3 inv_r_grad;      // ∫ ∇_r (1/R)
  double r = 0.0;       // ∫ R
  Vec3 r1;              // ∫ R (r' − r)
};

inline StaticMoments static_moments(const Triangle &T, const Vec3 &r)
{
  StaticMoments m;
  m.inv_r1.setZero();
  m.inv_r_grad.setZero();
  m.r1.setZero();
  const Vec3 &n = T.n;
  double h = (r - T.v[0]).dot(n);
  if (std::abs(h) < 1e-10 * T.diameter)
  {
    h = 0.0;
  }
  const double ah = std::abs(h);
  const Vec3 rho0 = r - h * n;
  const double tiny = 1e-12 * T.diameter;
  Vec3 edge_rho = Vec3::Zero();  // Σ m̂ (R0² f + s⁺R⁺ − s⁻R⁻) / 2
  Vec3 edge_f = Vec3::Zero();    // Σ m̂ f
  Vec3 edge_r3 = Vec3::Zero();   // Σ m̂ ∫ R³ dl
  double sum_tf = 0.0, sum_beta = 0.0, sum_tline = 0.0;
  for (int i = 0; i < 3; ++i)
  {
    const Vec3 &a = T.v[i];
    const Vec3 &b = T.v[(i + 1) % 3];
    const Vec3 l = (b - a).normalized();
    const Vec3 mh = l.cross(n);
    const double t = (a - rho0).dot(mh);
    const double sm = (a - rho0).dot(l), sp = (b - rho0).dot(l);
    const double R02 = t * t + h * h;
    const double R0 = std::sqrt(R02);
    const double Rm = std::sqrt(sm * sm + R02), Rp = std::sqrt(sp * sp + R02);
    double f = 0.0;
    if (R0 > tiny)
    {
      f = std::asinh(sp / R0) - std::asinh(sm / R0);
    }
    double beta = 0.0;
    if (std::abs(t) > tiny)
    {
      beta = std::atan(t * sp / (R02 + ah * Rp)) - std::atan(t * sm / (R02 + ah * Rm));
    }
    const double line_r = 0.5 * (sp * Rp - sm * Rm + R02 * f);  // ∫ R dl
    const double line_r3 = (sp * (2 * sp * sp + 5 * R02) * Rp - sm * (2 * sm * sm + 5 * R02) * Rm) / 8.0 +
                           3.0 * R02 * R02 * f / 8.0;          // ∫ R³ dl
    sum_tf += t * f;
    sum_beta += beta;
    sum_tline += t * line_r;
    edge_f += mh * f;
    edge_rho += mh * line_r;
    edge_r3 += mh * line_r3;
  }
  const double sgn = h > 0.0 ? 1.0 : (h < 0.0 ? -1.0 : 0.0);
  m.inv_r = sum_tf - ah * sum_beta;
  m.inv_r1 = edge_rho - h * n * m.inv_r;
  m.inv_r_grad = -edge_f - n * (sgn * sum_beta);
  m.r = (h * h * m.inv_r + sum_tline) / 3.0;
  m.r1 = edge_r3 / 3.0 - h * n * m.r;
  return m;
}

// ∫_T 1/(4π|r − r'|) dS'.
inline double self_term_static(const Triangle &T, const Vec3 &r)
{
  return static_moments(T, r).inv_r / (4.0 * pi);
}

//
// Dynamic moments for a source triangle seen from observation point r and wavenumber k:
// I0 = ∫ G, I1 = ∫ G (r' − r), Ig = ∫ ∇_r G (principal value when r lies on the triangle).
//
struct Moments
{
  cplx I0 = 0.0;
  Vec3c I1 = Vec3c::Zero();
  Vec3c Ig = Vec3c::Zero();

  Moments &operator+=(const Moments &o)
  {
    I0 += o.I0;
    I1 += o.I1;
    Ig += o.Ig;
    return *this;
  }
};

struct QuadratureOptions
{
  double near_threshold = 2.5;   // centre distance / source diameter below which singular schemes run
  double mid_threshold = 4.0;
  double far_threshold = 8.0;
  double subtraction_limit = 1.0;  // |k|·diameter up to which the static-subtraction scheme is used
  double negligible_threshold = default_negligible_threshold;
  double accuracy_floor = 1e-10;  // decay bound below which rules are not raised with |k|
  int remainder_order = 6;       // conical order for the smooth remainder of the subtraction scheme
  double fast_remainder_limit = 0.5;  // |k|·diameter below which the cubic term is also extracted
  int fast_remainder_order = 4;  // conical order of that remainder rule
  int polar_order = 12;          // Gauss points per panel in the polar scheme
  int mid_rule_degree = 6;       // smooth-rule degree in [near_threshold, mid_threshold)
  int outer_rule_degree = 4;     // in [mid_threshold, far_threshold)
  int far_rule_degree = 2;       // beyond far_threshold
};

namespace detail
{

inline double point_triangle_distance(const Vec3 &p, const Triangle &T)
{
  // Closest point by Voronoi region of the triangle.
  const Vec3 &a = T.v[0], &b = T.v[1], &c = T.v[2];
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return ap.norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return bp.norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return cp.norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
  {
    return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).norm();
  }
  const double den = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * den) + ac * (vc * den))).norm();
}

inline cplx exp_minus_jkr(cplx k, double R) { return std::exp(-J * k * R); }

// Taylor remainders of the kernel with z = −jkR. For first = 3 returns
// g(R) = (e^z − 1 − z − z²/2)/(4πR) and g'(R); first = 4 also removes z³/6.
inline std::pair<cplx, cplx> remainder_kernel(cplx k, double R, int first = 3)
{
  const cplx z = -J * k * R;
  const cplx mjk = -J * k;
  cplx p = 0.0, dp = 0.0;  // p = Σ_{n≥first} z^{n−1}/n!, dp = dp/dz
  if (std::norm(z) < 2.25)
  {
    double fact = 1.0;
    cplx zp = 1.0;  // z^{first−2}
    for (int i = 2; i <= first; ++i)
    {
      fact *= i;
      if (i < first)
      {
        zp *= z;
      }
    }
    cplx term = zp * z / fact;                    // z^{n−1}/n!
    cplx dterm = double(first - 1) * zp / fact;   // (n−1) z^{n−2}/n!
    for (int nn = first; nn < 40; ++nn)
    {
      p += term;
      dp += dterm;
      term *= z / double(nn + 1);
      dterm *= z * double(nn) / (double(nn - 1) * double(nn + 1));
      if (std::norm(term) < 1e-36 * std::norm(p))
      {
        break;
      }
    }
  }
  else
  {
    const cplx ez = std::exp(z);
    if (first == 3)
    {
      p = (ez - 1.0 - z - 0.5 * z * z) / z;
      dp = (z * ez - ez + 1.0 - 0.5 * z * z) / (z * z);
    }
    else
    {
      p = (ez - 1.0 - z - 0.5 * z * z - z * z * z / 6.0) / z;
      dp = (z * ez - ez + 1.0 - 0.5 * z * z - z * z * z / 3.0) / (z * z);
    }
  }
  return {mjk * p / (4.0 * pi), mjk * mjk * dp / (4.0 * pi)};
}

inline void far_moments(const Triangle &T, const Vec3 &r, cplx k, const TriangleRule &rule,
                        Moments &m)
{
  for (int q = 0; q < rule.size(); ++q)
  {
    const Vec3 rp = T.point(rule.bary[q]);
    const Vec3 d = rp - r;
    const double R = d.norm();
    const cplx g = exp_minus_jkr(k, R) / (4.0 * pi * R);
    const cplx wg = rule.w[q] * T.area * g;
    const cplx dg = (-J * k - 1.0 / R) * wg / R;  // w A G'(R)/R
    m.I0 += wg;
    m.I1 += wg * d.cast<cplx>();
    m.Ig -= dg * d.cast<cplx>();
  }
}

inline void subtraction_moments(const Triangle &T, const Vec3 &r, cplx k,
                                const QuadratureOptions &opt, Moments &m)
{
  const StaticMoments s = static_moments(T, r);
  const double f4 = 1.0 / (4.0 * pi);
  const cplx k2 = k * k;
  const Vec3 cr = T.centroid - r;
  m.I0 += f4 * s.inv_r - J * k * f4 * T.area - k2 * f4 * 0.5 * s.r;
  m.I1 += (f4 * s.inv_r1).cast<cplx>() - (J * k * f4 * T.area) * cr.cast<cplx>() -
          (k2 * f4 * 0.5) * s.r1.cast<cplx>();
  m.Ig += (f4 * s.inv_r_grad).cast<cplx>() + (k2 * f4 * 0.5) * s.inv_r1.cast<cplx>();
  if (k == 0.0)
  {
    return;
  }
  if (std::abs(k) * T.diameter <= opt.fast_remainder_limit)
  {
    // Cubic term (−jk)³R²/(24π) is polynomial; the R³-type rest is integrated directly.
    const cplx c3 = std::pow(-J * k, 3) / (24.0 * pi);
    const TriangleRule &rule = TriangleRule::conical_cached(opt.fast_remainder_order);
    Vec3 s1 = Vec3::Zero();
    double s0 = 0.0;
    for (int q = 0; q < rule.size(); ++q)
    {
      const Vec3 d = T.point(rule.bary[q]) - r;
      const double w = rule.w[q] * T.area;
      s0 += w * d.squaredNorm();
      s1 += (w * d.squaredNorm()) * d;
      const auto [g, dg] = remainder_kernel(k, d.norm(), 4);
      m.I0 += w * g;
      m.I1 += (w * g) * d.cast<cplx>();
      if (d.norm() > 0.0)
      {
        m.Ig -= (w * dg / d.norm()) * d.cast<cplx>();
      }
    }
    m.I0 += c3 * s0;
    m.I1 += c3 * s1.cast<cplx>();
    m.Ig -= (2.0 * c3 * T.area) * cr.cast<cplx>();
    return;
  }
  // Remainder on signed sub-triangles collapsed at the projection of r, so the residual
  // R³ kink sits at a collapsed vertex of a Gauss product rule.
  const TriangleRule &rule = TriangleRule::conical_cached(opt.remainder_order);
  const double h = (r - T.v[0]).dot(T.n);
  const Vec3 rho0 = r - h * T.n;
  auto add = [&](const Vec3 &rp, double w)
  {
    const Vec3 d = rp - r;
    const double R = d.norm();
    const auto [g, dg] = remainder_kernel(k, R);
    m.I0 += w * g;
    m.I1 += (w * g) * d.cast<cplx>();
    if (R > 0.0)
    {
      m.Ig -= (w * dg / R) * d.cast<cplx>();
    }
  };
  if (std::abs(h) > T.diameter || (rho0 - T.centroid).norm() > T.diameter)
  {
    const TriangleRule &plain = TriangleRule::conical_cached(opt.remainder_order + 2);
    for (int q = 0; q < plain.size(); ++q)
    {
      add(T.point(plain.bary[q]), plain.w[q] * T.area);
    }
    return;
  }
  for (int i = 0; i < 3; ++i)
  {
    const Vec3 &a = T.v[i];
    const Vec3 &b = T.v[(i + 1) % 3];
    const double sub_area = 0.5 * (a - rho0).cross(b - rho0).dot(T.n);
    if (std::abs(sub_area) < 1e-14 * T.area)
    {
      continue;
    }
    for (int q = 0; q < rule.size(); ++q)
    {
      const auto &l = rule.bary[q];
      add(l[0] * a + l[1] * rho0 + l[2] * b, rule.w[q] * sub_area);
    }
  }
}

// Polar integration about the projection of r, one signed sub-triangle per edge. Angular
// coordinate u with s = |t| sinh u along each edge; radial integrals closed-form where
// possible, otherwise by Gauss rules in ρ = |h| sinh v truncated once the kernel has decayed.
// The radial integrand is the same for every angle, so it is integrated once, cumulatively,
// over the sorted radial limits. Edge portions beyond the decay range see the converged radial
// integral and are integrated over angle in closed form.
inline void polar_moments(const Triangle &T, const Vec3 &r, cplx k, const QuadratureOptions &opt,
                          Moments &m)
{
  const Vec3 &n = T.n;
  double h = (r - T.v[0]).dot(n);
  const bool coplanar = std::abs(h) < 1e-10 * T.diameter;
  if (coplanar)
  {
    h = 0.0;
  }
  const double ah = std::abs(h);
  const Vec3 rho0 = r - h * n;
  const double kim = -k.imag();
  const double kabs = std::abs(k);
  const double decay_cut = kim > 0.0 ? 45.0 / kim : std::numeric_limits<double>::infinity();
  if (!coplanar && std::exp(-kim * ah) < opt.negligible_threshold)
  {
    return;
  }
  const double sgn_h = h > 0.0 ? 1.0 : (h < 0.0 ? -1.0 : 0.0);
  const cplx e_h = exp_minus_jkr(k, ah);
  const double f4 = 1.0 / (4.0 * pi);
  const Vec3c nc = n.cast<cplx>();
  const auto &gl = gauss_legendre_cached(opt.polar_order);

  struct Node
  {
    double wth;
    double vm;
    Vec3 uh;
  };
  thread_local std::vector<Node> nodes;
  nodes.clear();
  double theta_out = 0.0;  // signed angle seen beyond the decay range
  Vec3 uh_out = Vec3::Zero();

  for (int i = 0; i < 3; ++i)
  {
    const Vec3 &a = T.v[i];
    const Vec3 &b = T.v[(i + 1) % 3];
    const Vec3 l = (b - a).normalized();
    const Vec3 mh = l.cross(n);
    const double t = (a - rho0).dot(mh);
    const double at = std::abs(t);
    if (at < 1e-12 * T.diameter)
    {
      continue;
    }
    const double sgn_t = t > 0.0 ? 1.0 : -1.0;
    const Vec3 foot = rho0 + t * mh;
    const double u1 = std::asinh((a - rho0).dot(l) / at);
    const double u2 = std::asinh((b - rho0).dot(l) / at);

    // |u| < uc is where the edge lies within the decay range.
    double uc = std::numeric_limits<double>::infinity();
    if (std::isfinite(decay_cut))
    {
      const double q = (ah + decay_cut) / at;
      uc = q >= 1.0 ? std::acosh(q) : -1.0;
    }
    auto outer = [&](double ua, double ub)
    {
      if (ub <= ua)
      {
        return;
      }
      theta_out += sgn_t * (std::atan(std::sinh(ub)) - std::atan(std::sinh(ua)));
      uh_out += sgn_t * ((sgn_t * (std::tanh(ub) - std::tanh(ua))) * mh +
                         (1.0 / std::cosh(ua) - 1.0 / std::cosh(ub)) * l);
    };
    const double ui1 = std::max(u1, -uc), ui2 = std::min(u2, uc);
    if (ui2 <= ui1)
    {
      outer(u1, u2);
      continue;
    }
    outer(u1, ui1);
    outer(ui2, u2);

    // Angular panels: width <= 1 and a phase change of at most 6 rad in e^{-jkRm}.
    cplx line = 0.0;
    double u = ui1;
    while (u < ui2)
    {
      double du = 1.0;
      if (kabs > 0.0)
      {
        const double umax = std::max(std::abs(u), std::abs(std::min(ui2, u + du)));
        const double rate = kabs * at * std::max(std::sinh(umax), 0.1);
        du = std::min(du, 6.0 / rate);
      }
      du = std::max(du, 1e-3 * (ui2 - ui1));
      const double ub = std::min(ui2, u + du);
      for (int q = 0; q < opt.polar_order; ++q)
      {
        const double uq = u + 0.5 * (ub - u) * (1.0 + gl.x[q]);
        const double wq = 0.5 * (ub - u) * gl.w[q];
        const double eu = std::exp(uq);
        const double ch = 0.5 * (eu + 1.0 / eu);
        const double sh = 0.5 * (eu - 1.0 / eu);
        const double rhom = at * ch;
        const double wth = sgn_t * wq / ch;
        const Vec3 edge_pt = foot + (at * sh) * l;
        const Vec3 uh = (edge_pt - rho0) / rhom;
        const double Rm = std::sqrt(rhom * rhom + h * h);
        const double dR = Rm - ah;
        const cplx z = -J * k * dR;
        const cplx ez = std::exp(z);
        const cplx A = e_h * dR * (std::abs(z) < 0.5 ? phi1(z) : (ez - 1.0) / z) * f4;
        if (coplanar)
        {
          const cplx B = rhom * rhom * (phi1(z) - phi2(z)) * f4;
          line += wq * ez * f4;
          m.I1 += (wth * B) * uh.cast<cplx>();
        }
        else
        {
          nodes.push_back({wth, std::asinh(rhom / ah), uh});
        }
        const cplx Cn = h * e_h * ez * f4 / Rm - sgn_h * e_h * f4;
        m.I0 += wth * A;
        m.I1 -= (wth * h * A) * nc;
        m.Ig += (wth * Cn) * nc;
      }
      u = ub;
    }
    // Coplanar in-plane gradient from the boundary form −∮ G m̂ dl, with ds = ρ du.
    m.Ig -= line * mh.cast<cplx>();
  }

  // Converged radial limits for the outer angular portions.
  const cplx A_inf = e_h * f4 / (J * k);
  const cplx Cn_inf = -sgn_h * e_h * f4;
  const bool any_outer = theta_out != 0.0 || uh_out.squaredNorm() > 0.0;
  if (coplanar)
  {
    if (any_outer)
    {
      m.I0 += theta_out * A_inf;
      m.I1 += (-f4 / (k * k)) * uh_out.cast<cplx>();
    }
    return;
  }

  // Cumulative radial integrals B(v) = ∫ρ²G dv and Gin(v) = ∫ρ²(−jk − 1/R)G/R dv.
  const double v_dec = std::isfinite(decay_cut) ? std::acosh(1.0 + decay_cut / ah)
                                                : std::numeric_limits<double>::infinity();
  thread_local std::vector<int> order;
  order.resize(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i)
  {
    order[i] = int(i);
  }
  std::sort(order.begin(), order.end(), [&](int x, int y) { return nodes[x].vm < nodes[y].vm; });
  double v = 0.0;
  cplx B = 0.0, Gin = 0.0;
  auto advance = [&](double target)
  {
    target = std::min(target, v_dec);
    while (v < target)
    {
      double dv = 1.0;
      if (kabs > 0.0)
      {
        const double Rv = ah * std::cosh(v);
        const double step = std::acosh(std::min((Rv + 6.0 / kabs) / ah, 1e300)) - v;
        dv = std::min(dv, std::max(step, 1e-6));
      }
      const double vb = std::min(target, v + dv);
      // Partial panels between neighbouring limits get proportionally fewer points.
      const int np = std::clamp(int(std::ceil(opt.polar_order * (vb - v) / dv)),
                                std::min(4, opt.polar_order), opt.polar_order);
      const auto &gr = gauss_legendre_cached(np);
      for (int p = 0; p < np; ++p)
      {
        const double vp = v + 0.5 * (vb - v) * (1.0 + gr.x[p]);
        const double wp = 0.5 * (vb - v) * gr.w[p];
        const double ev = std::exp(vp);
        const double rho = 0.5 * ah * (ev - 1.0 / ev);
        const double R = 0.5 * ah * (ev + 1.0 / ev);
        const cplx er = exp_minus_jkr(k, R) * f4;
        B += wp * er * rho * rho;
        Gin += wp * rho * rho * (-J * k - 1.0 / R) * er / R;
      }
      v = vb;
    }
  };
  for (int idx : order)
  {
    const Node &nd = nodes[idx];
    advance(nd.vm);
    const Vec3c uh = nd.uh.cast<cplx>();
    m.I1 += (nd.wth * B) * uh;
    m.Ig -= (nd.wth * Gin) * uh;
  }
  if (any_outer)
  {
    advance(v_dec);
    const Vec3c uo = uh_out.cast<cplx>();
    m.I0 += theta_out * A_inf;
    m.I1 += B * uo - (h * A_inf * theta_out) * nc;
    m.Ig += (theta_out * Cn_inf) * nc - Gin * uo;
  }
}

}  // namespace detail

// Moments with automatic scheme selection by distance relative to the source size.
inline Moments source_moments(const Triangle &T, const Vec3 &r, cplx k,
                              const QuadratureOptions &opt = {})
{
  Moments m;
  const double dc = (r - T.centroid).norm();
  const double d = dc / T.diameter;
  const double kim = -k.imag();
  double dmin = std::max(0.0, dc - T.reach);
  if (kim * T.diameter > 4.0 && std::exp(-kim * dmin) >= opt.negligible_threshold)
  {
    dmin = detail::point_triangle_distance(r, T);
  }
  if (dmin > 0.0 && std::exp(-kim * dmin) < opt.negligible_threshold)
  {
    return m;
  }
  const double kd = std::abs(k) * T.diameter;
  if (d < opt.near_threshold)
  {
    if (kd <= opt.subtraction_limit)
    {
      detail::subtraction_moments(T, r, k, opt, m);
    }
    else
    {
      detail::polar_moments(T, r, k, opt, m);
    }
    return m;
  }
  // Smooth bands; rule order also grows with the number of wavelengths across the source.
  int degree = d < opt.mid_threshold ? opt.mid_rule_degree
                                     : (d < opt.far_threshold ? opt.outer_rule_degree : opt.far_rule_degree);
  if (kd > 1.0 && !(dmin > 0.0 && std::exp(-kim * dmin) < opt.accuracy_floor))
  {
    degree = std::max(degree, std::min(30, int(std::ceil(2.0 * kd)) + (d < opt.far_threshold ? 6 : 2)));
  }
  detail::far_moments(T, r, k, TriangleRule::of_degree(degree), m);
  return m;
}

//
// Pair integrals between a test triangle and a source triangle for affine source functions.
//
enum class KernelPart
{
  LScalar,  // ∫∫ t(r) G s
  LVector,  // ∫∫ t(r)·G s(r')
  KGrad,    // ∫∫ t(r)·(∇G × s(r'))
  MNormal   // ∫∫ t(r) n̂'·∇'G s
};

// Affine vector source s(r') = beta·r' + alpha, or a constant scalar source (value).
struct AffineSource
{
  double beta = 0.0;
  Vec3 alpha = Vec3::Zero();
  double value = 1.0;

  Vec3 operator()(const Vec3 &rp) const { return beta * rp + alpha; }
};

template <class TestFn>
cplx pair_integral(KernelPart part, const Triangle &P, const Triangle &Q, TestFn &&test,
                   const AffineSource &src, cplx k, const QuadratureOptions &opt = {},
                   const TriangleRule &test_rule = TriangleRule::seven_point())
{
  cplx sum = 0.0;
  for (int q = 0; q < test_rule.size(); ++q)
  {
    const Vec3 r = P.point(test_rule.bary[q]);
    const double w = test_rule.w[q] * P.area;
    const Moments m = source_moments(Q, r, k, opt);
    using Ret = std::decay_t<decltype(test(r))>;
    if constexpr (std::is_arithmetic_v<Ret> || std::is_same_v<Ret, cplx>)
    {
      if (part == KernelPart::LScalar)
      {
        sum += w * cplx(test(r)) * src.value * m.I0;
      }
      else if (part == KernelPart::MNormal)
      {
        sum -= w * cplx(test(r)) * src.value * dotu(Q.n.cast<cplx>(), m.Ig);
      }
      else
      {
        throw AssemblyError("vector kernel part needs a vector test function");
      }
    }
    else
    {
      const Vec3c tv = Vec3(test(r)).cast<cplx>();
      if (part == KernelPart::LVector)
      {
        sum += w * dotu(tv, src.beta * m.I1 + src(r).cast<cplx>() * m.I0);
      }
      else if (part == KernelPart::KGrad)
      {
        sum += w * dotu(tv, crossu(m.Ig, src(r).cast<cplx>()));
      }
      else
      {
        throw AssemblyError("scalar kernel part needs a scalar test function");
      }
    }
  }
  return sum;
}

}  // namespace pie
