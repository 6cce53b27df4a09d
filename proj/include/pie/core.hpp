#pragma once

// Common types, physical constants, error hierarchy and small numerical helpers.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <complex>
#include <numbers>
#include <utility>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <vector>

namespace pie
{

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Vec3c = Eigen::Vector3cd;
using MatrixC = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using VectorC = Eigen::Matrix<cplx, Eigen::Dynamic, 1>;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx J{0.0, 1.0};

namespace constants
{
inline constexpr double c0 = 299792458.0;      // m/s
inline constexpr double mu0 = 1.25663706212e-6; // H/m
inline constexpr double eps0 = 1.0 / (mu0 * c0 * c0);
inline constexpr double eta0 = mu0 * c0;
}  // namespace constants

//
// Errors. Every module throws a subclass of pie::Error so callers can attach stage context.
//
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

#define PIE_DEFINE_ERROR(Name)                                                             \
  class Name : public Error                                                                \
  {                                                                                        \
  public:                                                                                  \
    explicit Name(const std::string &what) : Error(std::string(#Name ": ") + what) {}      \
  }

PIE_DEFINE_ERROR(ParseError);
PIE_DEFINE_ERROR(TopologyError);
PIE_DEFINE_ERROR(DegenerateError);
PIE_DEFINE_ERROR(InvalidGeometry);
PIE_DEFINE_ERROR(OutOfSupport);
PIE_DEFINE_ERROR(RefinementMismatch);
PIE_DEFINE_ERROR(SingularEvaluation);
PIE_DEFINE_ERROR(QuadratureFailure);
PIE_DEFINE_ERROR(AssemblyError);
PIE_DEFINE_ERROR(DimensionMismatch);
PIE_DEFINE_ERROR(MaterialError);
PIE_DEFINE_ERROR(SingularMatrix);
PIE_DEFINE_ERROR(ResidualTooLarge);
PIE_DEFINE_ERROR(PointTooClose);
PIE_DEFINE_ERROR(ConvergenceError);
PIE_DEFINE_ERROR(ConfigError);
PIE_DEFINE_ERROR(GridMismatch);

#undef PIE_DEFINE_ERROR

inline Vec3c to_complex(const Vec3 &v) { return v.cast<cplx>(); }

// Bilinear (unconjugated) product.
inline cplx dotu(const Vec3c &a, const Vec3c &b)
{
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

// Eigen's cross() conjugates complex results; this one does not.
inline Vec3c crossu(const Vec3c &a, const Vec3c &b)
{
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// (e^z - 1) / z, accurate near z = 0.
inline cplx phi1(cplx z)
{
  if (std::abs(z) < 0.5)
  {
    cplx term = 1.0, sum = 1.0;
    for (int n = 1; n < 20; ++n)
    {
      term *= z / double(n + 1);
      sum += term;
    }
    return sum;
  }
  return (std::exp(z) - 1.0) / z;
}

// (e^z - 1 - z) / z^2, accurate near z = 0.
inline cplx phi2(cplx z)
{
  if (std::abs(z) < 1.0)
  {
    cplx term = 0.5, sum = 0.5;
    for (int n = 1; n < 25; ++n)
    {
      term *= z / double(n + 2);
      sum += term;
    }
    return sum;
  }
  return (std::exp(z) - 1.0 - z) / (z * z);
}

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
struct GaussLegendre
{
  std::vector<double> x, w;
};

inline GaussLegendre gauss_legendre(int n)
{
  // Returns {P_n(z), P_n'(z)}.
  auto legendre = [n](double z)
  {
    double p0 = 1.0, p1 = z;
    for (int k = 2; k <= n; ++k)
    {
      const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    return std::pair{p1, n * (z * p1 - p0) / (z * z - 1.0)};
  };
  GaussLegendre gl;
  gl.x.assign(n, 0.0);
  gl.w.assign(n, 0.0);
  if (n == 1)
  {
    gl.w[0] = 2.0;
    return gl;
  }
  for (int i = 0; i < n / 2; ++i)
  {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it)
    {
      const auto [p, dp] = legendre(z);
      const double dz = p / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16)
      {
        break;
      }
    }
    const double dp = legendre(z).second;
    const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
    gl.x[i] = -z;
    gl.x[n - 1 - i] = z;
    gl.w[i] = wi;
    gl.w[n - 1 - i] = wi;
  }
  if (n % 2 == 1)
  {
    gl.w[n / 2] = 2.0 / (legendre(0.0).second * legendre(0.0).second);
  }
  return gl;
}

// Cached rules; safe for concurrent reads once constructed (function-local statics).
inline const GaussLegendre &gauss_legendre_cached(int n)
{
  static const std::vector<GaussLegendre> table = []
  {
    std::vector<GaussLegendre> t(33);
    for (int i = 1; i <= 32; ++i)
    {
      t[i] = gauss_legendre(i);
    }
    return t;
  }();
  if (n < 1 || n > 32)
  {
    throw QuadratureFailure("Gauss-Legendre order out of cached range: " + std::to_string(n));
  }
  return table[n];
}

}  // namespace pie
