#pragma once

// Mie series for a homogeneous lossy sphere under plane-wave incidence.
//
// Coefficients follow the e^{−iωt} convention of the classical literature (passive media have
// Im m ≥ 0); m is therefore formed from the conjugate of the solver's e^{+jωt} wavenumber.
// Everything is computed from ratios (logarithmic derivatives and ψ_n/ξ_n), so neither ψ_n
// nor ξ_n is ever formed and tiny or huge size parameters stay finite.

#include "pie/media.hpp"

#include <string>
#include <vector>

namespace pie
{

enum class RcsCut
{
  EPlane,  // plane containing the polarization and the propagation direction
  HPlane,
};

inline const char *to_string(RcsCut c) { return c == RcsCut::EPlane ? "E-plane" : "H-plane"; }

struct RcsCurve
{
  RcsCut cut = RcsCut::EPlane;
  std::vector<double> angles_deg;
  std::vector<double> rcs_dbsm;
};

inline double to_dbsm(double sigma) { return 10.0 * std::log10(sigma); }

template <class Real>
struct BasicMieSolution
{
  using C = std::complex<Real>;
  std::vector<C> a, b;  // a[n-1], b[n-1] for n = 1..N_max
  Real radius = 0;
  Real x = 0;           // k₀a
  C m{0, 0};            // relative index, Im m ≥ 0
  bool pec = false;

  int nmax() const { return int(a.size()); }
  Real k0() const { return x / radius; }
};

using MieSolution = BasicMieSolution<double>;

inline int mie_nmax(double x) { return int(std::ceil(x + 4.0 * std::cbrt(x) + 20.0)); }

namespace detail
{

// Core routine on size parameter x, relative index m (null for a perfect conductor).
template <class Real>
BasicMieSolution<Real> mie_series(Real radius, Real x, const std::complex<Real> *m, int nmax)
{
  using C = std::complex<Real>;
  if (!(radius > 0) || !(x > 0))
  {
    throw ConvergenceError("Mie series needs positive radius and size parameter");
  }
  BasicMieSolution<Real> s;
  s.radius = radius;
  s.x = x;
  s.pec = m == nullptr;
  if (m)
  {
    s.m = *m;
  }
  const C I(0, 1);

  // D_n(x) and D_n(mx) by downward recurrence.
  auto downward = [&](C z, int nstart)
  {
    std::vector<C> D(nmax + 1);
    C d(0, 0);
    for (int n = nstart; n > nmax; --n)
    {
      const C nz = Real(n) / z;
      d = nz - Real(1) / (d + nz);
    }
    D[nmax] = d;
    for (int n = nmax; n >= 1; --n)
    {
      const C nz = Real(n) / z;
      D[n - 1] = nz - Real(1) / (D[n] + nz);
    }
    return D;
  };
  const Real mx_abs = m ? std::abs(*m * x) : Real(0);
  const int nstart = std::max<int>(nmax, int(std::ceil(double(std::max(Real(x), mx_abs))))) + 15;
  const std::vector<C> Dx = downward(C(x, 0), nstart);
  std::vector<C> Dmx;
  if (m)
  {
    Dmx = downward(*m * x, nstart);
  }

  // G_n = ξ_n'/ξ_n upward from G_0 = i; T_n = ψ_n/ξ_n from T_0 = sin x/(−i e^{ix}).
  C G = I;
  C T = std::sin(x) / (-I * std::exp(I * x));
  for (int n = 1; n <= nmax; ++n)
  {
    const Real nx = Real(n) / x;
    // ψ_n/ψ_{n−1} = 1/(D_n + n/x), likewise for ξ with G_n; G_n + n/x is kept unexpanded.
    const C Gs = Real(1) / (nx - G);
    T *= Gs / (Dx[n] + nx);
    G = Gs - nx;
    C an, bn;
    if (m)
    {
      const C dm = Dmx[n];
      an = T * (dm / *m - Dx[n]) / (dm / *m - G);
      bn = T * (*m * dm - Dx[n]) / (*m * dm - G);
    }
    else
    {
      an = T * Dx[n] / G;
      bn = T;
    }
    if (!std::isfinite(double(std::abs(an))) || !std::isfinite(double(std::abs(bn))))
    {
      throw ConvergenceError("Mie recurrence produced a non-finite coefficient at n = " +
                             std::to_string(n));
    }
    s.a.push_back(an);
    s.b.push_back(bn);
  }
  return s;
}

template <class Real>
void angular_functions(int nmax, Real mu, std::vector<Real> &pi_n, std::vector<Real> &tau_n)
{
  pi_n.assign(nmax + 1, Real(0));
  tau_n.assign(nmax + 1, Real(0));
  if (nmax >= 1)
  {
    pi_n[1] = 1;
    tau_n[1] = mu;
  }
  for (int n = 2; n <= nmax; ++n)
  {
    pi_n[n] = (Real(2 * n - 1) * mu * pi_n[n - 1] - Real(n) * pi_n[n - 2]) / Real(n - 1);
    tau_n[n] = Real(n) * mu * pi_n[n] - Real(n + 1) * pi_n[n - 1];
  }
}

}  // namespace detail

// Relative index in the e^{−iωt} convention from the solver's material model.
inline cplx mie_relative_index(const MaterialParams &mat)
{
  return std::conj(wavenumber(mat)) / free_space_wavenumber(mat.omega);
}

inline MieSolution mie_coefficients(double radius, const MaterialParams &mat, int nmax = 0)
{
  mat.validate();
  const double x = free_space_wavenumber(mat.omega) * radius;
  const cplx m = mie_relative_index(mat);
  return detail::mie_series<double>(radius, x, &m, nmax > 0 ? nmax : mie_nmax(x));
}

inline MieSolution mie_coefficients_pec(double radius, double frequency, int nmax = 0)
{
  const double x = free_space_wavenumber(2.0 * pi * frequency) * radius;
  return detail::mie_series<double>(radius, x, nullptr, nmax > 0 ? nmax : mie_nmax(x));
}

// The same series in extended precision, for cross-checks.
inline BasicMieSolution<long double> mie_coefficients_extended(double radius,
                                                              const MaterialParams &mat,
                                                              int nmax = 0)
{
  mat.validate();
  using LC = std::complex<long double>;
  const long double x = (long double)(mat.omega) / (long double)(constants::c0) * radius;
  const cplx md = mie_relative_index(mat);
  const LC m((long double)md.real(), (long double)md.imag());
  return detail::mie_series<long double>(radius, x, &m, nmax > 0 ? nmax : mie_nmax(double(x)));
}

// Scattering amplitudes S₁(θ), S₂(θ), θ from the forward direction.
template <class Real>
std::pair<std::complex<Real>, std::complex<Real>> mie_amplitudes(const BasicMieSolution<Real> &s,
                                                                 Real theta)
{
  std::vector<Real> p, t;
  detail::angular_functions<Real>(s.nmax(), std::cos(theta), p, t);
  std::complex<Real> S1(0, 0), S2(0, 0);
  for (int n = s.nmax(); n >= 1; --n)
  {
    const Real f = Real(2 * n + 1) / Real(n * (n + 1));
    S1 += f * (s.a[n - 1] * p[n] + s.b[n - 1] * t[n]);
    S2 += f * (s.a[n - 1] * t[n] + s.b[n - 1] * p[n]);
  }
  return {S1, S2};
}

// Bistatic cross section σ(θ) = 4π|S|²/k₀² in m²; S₂ on the E-plane, S₁ on the H-plane.
template <class Real>
Real mie_sigma(const BasicMieSolution<Real> &s, RcsCut cut, Real theta)
{
  const auto [S1, S2] = mie_amplitudes(s, theta);
  const Real k = s.k0();
  const Real v = std::norm(cut == RcsCut::EPlane ? S2 : S1);
  return Real(4) * std::acos(Real(-1)) * v / (k * k);
}

inline RcsCurve mie_bistatic_rcs(const MieSolution &s, RcsCut cut,
                                 const std::vector<double> &angles_deg)
{
  RcsCurve c;
  c.cut = cut;
  c.angles_deg = angles_deg;
  for (double a : angles_deg)
  {
    c.rcs_dbsm.push_back(to_dbsm(mie_sigma(s, cut, a * pi / 180.0)));
  }
  return c;
}

struct CrossSections
{
  double sca = 0.0, ext = 0.0, abs = 0.0;  // m²
};

inline CrossSections mie_cross_sections(const MieSolution &s)
{
  double qs = 0.0, qe = 0.0;
  for (int n = s.nmax(); n >= 1; --n)
  {
    qs += (2 * n + 1) * (std::norm(s.a[n - 1]) + std::norm(s.b[n - 1]));
    qe += (2 * n + 1) * (s.a[n - 1] + s.b[n - 1]).real();
  }
  const double f = 2.0 * pi / (s.k0() * s.k0());
  CrossSections c;
  c.sca = f * qs;
  c.ext = f * qe;
  c.abs = c.ext - c.sca;
  return c;
}

// Uniform angle grid from lo to hi degrees inclusive.
inline std::vector<double> angle_grid(double lo, double hi, double step)
{
  std::vector<double> v;
  const int n = int(std::floor((hi - lo) / step + 1e-9));
  for (int i = 0; i <= n; ++i)
  {
    v.push_back(lo + i * step);
  }
  return v;
}

}  // namespace pie
