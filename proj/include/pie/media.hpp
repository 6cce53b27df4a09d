#pragma once

// Material parameters, complex wavenumbers and the scalar Helmholtz Green's function.

#include "pie/core.hpp"

namespace pie
{

struct MaterialParams
{
  double epsilon = constants::eps0;
  double mu = constants::mu0;
  double sigma = 0.0;
  double omega = 2.0 * pi * 1e8;

  static MaterialParams relative(double eps_r, double mu_r, double sigma, double frequency)
  {
    return {eps_r * constants::eps0, mu_r * constants::mu0, sigma, 2.0 * pi * frequency};
  }
  static MaterialParams vacuum(double frequency) { return relative(1.0, 1.0, 0.0, frequency); }

  double frequency() const { return omega / (2.0 * pi); }

  // Complex admittivity s = jωε + σ.
  cplx admittivity() const { return cplx(sigma, omega * epsilon); }
  // γ = (jωε + σ)μ.
  cplx gamma() const { return admittivity() * mu; }

  void validate() const
  {
    if (!(omega > 0.0) || !std::isfinite(omega))
    {
      throw MaterialError("angular frequency must be positive");
    }
    if (!(epsilon > 0.0) || !(mu > 0.0))
    {
      throw MaterialError("permittivity and permeability must be positive");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
    {
      throw MaterialError("conductivity must be non-negative");
    }
  }
};

// k with k² = −jωμ(jωε + σ) and Im k ≤ 0.
inline cplx wavenumber(const MaterialParams &m)
{
  if (!(m.omega > 0.0))
  {
    throw MaterialError("wavenumber needs omega > 0");
  }
  const cplx k2 = -J * m.omega * m.mu * m.admittivity();
  cplx k = std::sqrt(k2);
  if (k.imag() > 0.0 || (k.imag() == 0.0 && k.real() < 0.0))
  {
    k = -k;
  }
  return k;
}

inline double free_space_wavenumber(double omega) { return omega / constants::c0; }

// Penetration depth −1/Im k; infinite for lossless media.
inline double skin_depth(const MaterialParams &m)
{
  const double ki = wavenumber(m).imag();
  return ki < 0.0 ? -1.0 / ki : std::numeric_limits<double>::infinity();
}

// Good-conductor approximation sqrt(2 / (ωμσ)).
inline double skin_depth_good_conductor(const MaterialParams &m)
{
  return m.sigma > 0.0 ? std::sqrt(2.0 / (m.omega * m.mu * m.sigma))
                       : std::numeric_limits<double>::infinity();
}

inline constexpr double default_negligible_threshold = 1e-30;

class GreensKernel
{
public:
  GreensKernel() = default;
  explicit GreensKernel(cplx k, double scale = 1.0) : k_(k), scale_(scale) {}

  cplx k() const { return k_; }
  // Length scale used to decide when R counts as zero.
  double scale() const { return scale_; }

  cplx operator()(double R) const { return std::exp(-J * k_ * R) / (4.0 * pi * R); }

  cplx greens(const Vec3 &r, const Vec3 &rp) const
  {
    return (*this)(checked_distance(r, rp));
  }

  // Gradient with respect to the observation point r.
  Vec3c greens_grad(const Vec3 &r, const Vec3 &rp) const
  {
    const Vec3 d = r - rp;
    const double R = checked_distance(r, rp);
    const cplx g = (*this)(R);
    return to_complex(d / R) * ((-J * k_ - 1.0 / R) * g);
  }

  // Hessian ∂_i∂_j G with respect to the observation point.
  Eigen::Matrix3cd greens_hessian(const Vec3 &r, const Vec3 &rp) const
  {
    const Vec3 d = r - rp;
    const double R = checked_distance(r, rp);
    const cplx g = (*this)(R);
    const cplx a = J * k_ + 1.0 / R;
    const cplx gp = -a * g;
    const cplx gpp = g * (a * a + 1.0 / (R * R));
    const Vec3 u = d / R;
    const Eigen::Matrix3d uu = u * u.transpose();
    return gpp * uu.cast<cplx>() + (gp / R) * (Eigen::Matrix3d::Identity() - uu).cast<cplx>();
  }

  bool negligible(double R, double threshold = default_negligible_threshold) const
  {
    return R > 0.0 && std::exp(k_.imag() * R) < threshold;
  }

private:
  double checked_distance(const Vec3 &r, const Vec3 &rp) const
  {
    const double R = (r - rp).norm();
    if (R < 1e-14 * scale_)
    {
      throw SingularEvaluation("Green's function evaluated at coincident points");
    }
    return R;
  }

  cplx k_ = 0.0;
  double scale_ = 1.0;
};

inline bool negligible_interaction(const GreensKernel &kernel, double R,
                                   double threshold = default_negligible_threshold)
{
  return kernel.negligible(R, threshold);
}

}  // namespace pie
