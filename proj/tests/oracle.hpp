#pragma once

// Independent brute-force integrators used as test oracles.

#include "pie/quadrature.hpp"

#include <random>

namespace oracle
{

using pie::cplx;
using pie::Vec3;

// Polar integration about the projection of r onto the plane of T. Plain angle coordinate,
// geometric radial grading towards the singular point, high-order Gauss-Legendre panels.
template <class F>
auto polar_integral(const pie::Triangle &T, const Vec3 &r, F &&f)
{
  const auto &gl = pie::gauss_legendre_cached(24);
  const double h = (r - T.v[0]).dot(T.n);
  const Vec3 rho0 = r - h * T.n;
  using Ret = std::decay_t<decltype(f(Vec3()))>;
  Ret sum;
  if constexpr (std::is_arithmetic_v<Ret> || std::is_same_v<Ret, cplx>)
  {
    sum = Ret(0);
  }
  else
  {
    sum = Ret::Zero();
  }
  for (int i = 0; i < 3; ++i)
  {
    const Vec3 a = T.v[i] - rho0, b = T.v[(i + 1) % 3] - rho0;
    const double ar = a.norm(), br = b.norm();
    if (ar < 1e-14 || br < 1e-14)
    {
      continue;
    }
    const double sgn = a.cross(b).dot(T.n) > 0 ? 1.0 : -1.0;
    const double th = std::acos(std::clamp(a.dot(b) / (ar * br), -1.0, 1.0));
    if (th < 1e-14)
    {
      continue;
    }
    const Vec3 e1 = a / ar;
    const Vec3 e2 = sgn * T.n.cross(e1);
    const int tpanels = 16;
    for (int p = 0; p < tpanels; ++p)
    {
      const double t0 = th * p / tpanels, t1 = th * (p + 1) / tpanels;
      for (int q = 0; q < 24; ++q)
      {
        const double t = t0 + 0.5 * (t1 - t0) * (1 + gl.x[q]);
        const double wt = 0.5 * (t1 - t0) * gl.w[q];
        const Vec3 dir = std::cos(t) * e1 + std::sin(t) * e2;
        // Ray from origin hits line a + s(b − a).
        const Vec3 ba = b - a;
        const double den = dir.cross(ba).dot(T.n);
        const double s = a.cross(dir).dot(T.n) / den;
        const double rhom = (a + s * ba).norm();
        double lo = rhom;
        for (int j = 0; j < 40; ++j)
        {
          const double hi = lo;
          lo = (j == 39) ? 0.0 : 0.5 * hi;
          for (int k = 0; k < 24; ++k)
          {
            const double rho = lo + 0.5 * (hi - lo) * (1 + gl.x[k]);
            const double wr = 0.5 * (hi - lo) * gl.w[k];
            sum += f(rho0 + rho * dir) * (sgn * wt * wr * rho);
          }
        }
      }
    }
  }
  return sum;
}

// Recursive 4-way subdivision with a 16-point conical rule on regular integrands.
template <class F>
std::decay_t<std::invoke_result_t<F, const Vec3 &>> subdivided_integral(const pie::Triangle &T, F &&f, int depth)
{
  if (depth == 0)
  {
    return pie::integrate_smooth(T, f, pie::TriangleRule::conical_cached(8));
  }
  const Vec3 ab = 0.5 * (T.v[0] + T.v[1]), bc = 0.5 * (T.v[1] + T.v[2]),
             ca = 0.5 * (T.v[2] + T.v[0]);
  using R = std::decay_t<decltype(f(T.v[0]))>;
  return R(subdivided_integral(pie::Triangle(T.v[0], ab, ca), f, depth - 1) +
         subdivided_integral(pie::Triangle(ab, T.v[1], bc), f, depth - 1) +
         subdivided_integral(pie::Triangle(ca, bc, T.v[2]), f, depth - 1) +
         subdivided_integral(pie::Triangle(ab, bc, ca), f, depth - 1));
}

inline cplx greens(cplx k, double R) { return std::exp(-pie::J * k * R) / (4 * pie::pi * R); }

inline pie::Vec3c greens_grad(cplx k, const Vec3 &r, const Vec3 &rp)
{
  const Vec3 d = r - rp;
  const double R = d.norm();
  return (d / R).cast<cplx>() * ((-pie::J * k - 1.0 / R) * greens(k, R));
}

inline double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

template <class V>
double relv(const V &a, const V &b)
{
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace oracle
