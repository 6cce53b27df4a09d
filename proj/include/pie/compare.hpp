#pragma once

// dB-domain comparison of two RCS curves on the same angular grid.

#include "pie/mie.hpp"

#include <limits>

namespace pie
{

enum class CompareMetric
{
  MaxDbDiff,
  L2Db,  // root-mean-square dB difference
};

inline CompareMetric parse_metric(const std::string &s)
{
  if (s == "max-db-diff")
  {
    return CompareMetric::MaxDbDiff;
  }
  if (s == "l2-db")
  {
    return CompareMetric::L2Db;
  }
  throw ConfigError("unknown metric '" + s + "' (expected max-db-diff or l2-db)");
}

inline const char *to_string(CompareMetric m) { return m == CompareMetric::MaxDbDiff ? "max-db-diff" : "l2-db"; }

struct CompareReport
{
  double max_db = 0.0;
  double l2_db = 0.0;
  double worst_angle = 0.0;
  size_t compared = 0;

  double value(CompareMetric m) const { return m == CompareMetric::MaxDbDiff ? max_db : l2_db; }
};

// Angles where the reference b lies more than mask_db below its peak are skipped.
inline CompareReport compare_rcs(const RcsCurve &a, const RcsCurve &b,
                                 double mask_db = std::numeric_limits<double>::infinity())
{
  if (a.angles_deg.size() != b.angles_deg.size() || a.rcs_dbsm.size() != a.angles_deg.size() ||
      b.rcs_dbsm.size() != b.angles_deg.size())
  {
    throw GridMismatch("curves have " + std::to_string(a.angles_deg.size()) + " and " +
                       std::to_string(b.angles_deg.size()) + " samples");
  }
  for (size_t i = 0; i < a.angles_deg.size(); ++i)
  {
    if (std::abs(a.angles_deg[i] - b.angles_deg[i]) > 1e-6)
    {
      throw GridMismatch("angle " + std::to_string(i) + " differs: " + std::to_string(a.angles_deg[i]) +
                         " vs " + std::to_string(b.angles_deg[i]));
    }
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : b.rcs_dbsm)
  {
    peak = std::max(peak, v);
  }
  CompareReport r;
  double sq = 0.0;
  for (size_t i = 0; i < a.angles_deg.size(); ++i)
  {
    if (b.rcs_dbsm[i] < peak - mask_db)
    {
      continue;
    }
    const double d = std::abs(a.rcs_dbsm[i] - b.rcs_dbsm[i]);
    if (d > r.max_db || r.compared == 0)
    {
      r.max_db = d;
      r.worst_angle = a.angles_deg[i];
    }
    sq += d * d;
    ++r.compared;
  }
  r.l2_db = r.compared ? std::sqrt(sq / double(r.compared)) : 0.0;
  return r;
}

}  // namespace pie
