#pragma once

// Run configuration: YAML schema, validation and provenance hash. See README.md for the schema.

#include "pie/pipeline.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace pie
{

struct GeometryConfig
{
  std::string type = "sphere";  // sphere | box | srr | file
  double diameter = 1.0;
  int level = 3;
  Vec3 box_size{1.0, 1.0, 1.0};
  double target_edge = 0.25;
  SrrParams srr;
  std::string path;
  std::string format = "native";
};

struct RcsOutput
{
  std::vector<RcsCut> cuts{RcsCut::EPlane, RcsCut::HPlane};
  double start = 0.0, stop = 180.0, step = 1.0;

  std::vector<double> angles() const { return angle_grid(start, stop, step); }
};

struct ProbeOutput
{
  std::string name;
  ProbeLine line;
};

struct OutputConfig
{
  std::optional<RcsOutput> rcs = RcsOutput{};
  bool cross_sections = true;
  std::vector<ProbeOutput> probes;
  bool surface_current = false;
  bool solution = false;     // coefficient vectors
  bool dump_system = false;  // PIEBLK1 system matrix and right-hand side
  bool dump_blocks = false;  // PIEBLK1 kernel blocks
};

struct RunConfig
{
  GeometryConfig geometry;
  double eps_r = 1.0, mu_r = 1.0, sigma = 0.0;
  cplx E0 = 1.0;
  Vec3 direction{0.0, 0.0, 1.0};
  Vec3 polarization{1.0, 0.0, 0.0};
  std::vector<double> frequencies;
  std::vector<double> conductivities;  // empty: use sigma
  OutputConfig outputs;
  SolverOptions solver;
  std::string hash;  // of the source text
  std::filesystem::path base_dir;  // relative mesh paths resolve here

  std::vector<double> sigmas() const { return conductivities.empty() ? std::vector<double>{sigma} : conductivities; }

  PlaneWaveExcitation excitation(double f) const { return PlaneWaveExcitation::make(E0, direction, polarization, f); }
  MaterialParams material(double f, double s) const { return MaterialParams::relative(eps_r, mu_r, s, f); }
};

// FNV-1a, 64 bit, as 16 hex digits.
inline std::string fnv1a_hex(const std::string &text)
{
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text)
  {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail
{

inline void allow_keys(const YAML::Node &n, const std::string &where, std::initializer_list<const char *> keys)
{
  if (!n.IsMap())
  {
    throw ConfigError("'" + where + "' must be a mapping");
  }
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto &kv : n)
  {
    const std::string k = kv.first.as<std::string>();
    if (!ok.count(k))
    {
      throw ConfigError("unknown key '" + k + "' in '" + where + "'");
    }
  }
}

template <class T>
void read(const YAML::Node &n, const char *key, T &out)
{
  if (const YAML::Node v = n[key])
  {
    try
    {
      out = v.as<T>();
    }
    catch (const YAML::Exception &e)
    {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

inline Vec3 vec3(const YAML::Node &n, const char *what)
{
  if (!n.IsSequence() || n.size() != 3)
  {
    throw ConfigError(std::string("'") + what + "' must be a list of three numbers");
  }
  try
  {
    return {n[0].as<double>(), n[1].as<double>(), n[2].as<double>()};
  }
  catch (const YAML::Exception &)
  {
    throw ConfigError(std::string("'") + what + "' must be a list of three numbers");
  }
}

inline void read_vec3(const YAML::Node &n, const char *key, Vec3 &out)
{
  if (const YAML::Node v = n[key])
  {
    out = vec3(v, key);
  }
}

inline std::vector<double> number_list(const YAML::Node &n, const char *what)
{
  std::vector<double> out;
  if (n.IsScalar())
  {
    out.push_back(n.as<double>());
    return out;
  }
  if (n.IsMap())
  {
    // {start, stop, per_decade}: logarithmic grid including both ends.
    allow_keys(n, what, {"start", "stop", "per_decade"});
    double a = 0, b = 0;
    int per = 1;
    read(n, "start", a);
    read(n, "stop", b);
    read(n, "per_decade", per);
    if (!(a > 0 && b >= a && per > 0))
    {
      throw ConfigError(std::string("'") + what + "' range needs 0 < start <= stop and per_decade > 0");
    }
    const int steps = int(std::lround(per * std::log10(b / a)));
    for (int i = 0; i <= steps; ++i)
    {
      out.push_back(a * std::pow(10.0, double(i) / per));
    }
    if (steps > 0)
    {
      out.back() = b;
    }
    return out;
  }
  if (!n.IsSequence())
  {
    throw ConfigError(std::string("'") + what + "' must be a number or a list");
  }
  try
  {
    for (const auto &v : n)
    {
      out.push_back(v.as<double>());
    }
  }
  catch (const YAML::Exception &)
  {
    throw ConfigError(std::string("'") + what + "' must contain numbers");
  }
  return out;
}

inline RcsCut parse_cut(const std::string &s)
{
  if (s == "E-plane" || s == "E" || s == "e-plane" || s == "eplane")
  {
    return RcsCut::EPlane;
  }
  if (s == "H-plane" || s == "H" || s == "h-plane" || s == "hplane")
  {
    return RcsCut::HPlane;
  }
  throw ConfigError("unknown RCS cut '" + s + "'");
}

inline void parse_geometry(const YAML::Node &n, GeometryConfig &g)
{
  allow_keys(n, "geometry", {"type", "diameter", "level", "size", "target_edge", "path", "format", "width",
                             "height", "gap", "pitch", "nx", "ny"});
  read(n, "type", g.type);
  if (g.type == "sphere")
  {
    read(n, "diameter", g.diameter);
    read(n, "level", g.level);
  }
  else if (g.type == "box" || g.type == "cube")
  {
    if (const YAML::Node s = n["size"])
    {
      g.box_size = s.IsScalar() ? Vec3::Constant(s.as<double>()) : vec3(s, "size");
    }
    read(n, "target_edge", g.target_edge);
  }
  else if (g.type == "srr")
  {
    read(n, "size", g.srr.size);
    read(n, "width", g.srr.width);
    read(n, "height", g.srr.height);
    read(n, "gap", g.srr.gap);
    read(n, "pitch", g.srr.pitch);
    read(n, "nx", g.srr.nx);
    read(n, "ny", g.srr.ny);
    read(n, "target_edge", g.srr.target_edge);
  }
  else if (g.type == "file")
  {
    read(n, "path", g.path);
    read(n, "format", g.format);
    if (g.path.empty())
    {
      throw ConfigError("geometry type 'file' needs a path");
    }
  }
  else
  {
    throw ConfigError("unknown geometry type '" + g.type + "'");
  }
}

inline void parse_outputs(const YAML::Node &n, OutputConfig &o)
{
  allow_keys(n, "outputs", {"rcs", "cross_sections", "probes", "surface_current", "solution", "dump_system",
                            "dump_blocks"});
  if (const YAML::Node r = n["rcs"])
  {
    if (r.IsScalar() && !r.as<bool>())
    {
      o.rcs.reset();
    }
    else if (!r.IsScalar())
    {
      allow_keys(r, "outputs.rcs", {"cuts", "start", "stop", "step"});
      RcsOutput rc;
      if (const YAML::Node c = r["cuts"])
      {
        rc.cuts.clear();
        for (const auto &v : c)
        {
          rc.cuts.push_back(parse_cut(v.as<std::string>()));
        }
      }
      read(r, "start", rc.start);
      read(r, "stop", rc.stop);
      read(r, "step", rc.step);
      o.rcs = rc;
    }
  }
  read(n, "cross_sections", o.cross_sections);
  read(n, "surface_current", o.surface_current);
  read(n, "solution", o.solution);
  read(n, "dump_system", o.dump_system);
  read(n, "dump_blocks", o.dump_blocks);
  if (const YAML::Node ps = n["probes"])
  {
    if (!ps.IsSequence())
    {
      throw ConfigError("'outputs.probes' must be a list");
    }
    for (const auto &p : ps)
    {
      allow_keys(p, "outputs.probes[]", {"name", "start", "end", "samples"});
      ProbeOutput po;
      po.name = "probe" + std::to_string(o.probes.size());
      read(p, "name", po.name);
      if (!p["start"] || !p["end"])
      {
        throw ConfigError("a probe needs start and end points");
      }
      po.line.start = vec3(p["start"], "start");
      po.line.end = vec3(p["end"], "end");
      po.line.n_samples = 101;
      read(p, "samples", po.line.n_samples);
      o.probes.push_back(po);
    }
  }
}

inline void parse_quadrature(const YAML::Node &n, AssemblyOptions &a, PostOptions &p)
{
  allow_keys(n, "quadrature", {"near_threshold", "mid_threshold", "far_threshold", "polar_order",
                               "mid_rule_degree", "outer_rule_degree", "far_rule_degree", "remainder_order",
                               "negligible_threshold", "accuracy_floor", "near_test_order", "mid_test_degree",
                               "far_test_degree", "touching_child_degree", "stokes_points",
                               "field_rule_degree"});
  QuadratureOptions &q = a.quad;
  read(n, "near_threshold", q.near_threshold);
  read(n, "mid_threshold", q.mid_threshold);
  read(n, "far_threshold", q.far_threshold);
  read(n, "polar_order", q.polar_order);
  read(n, "mid_rule_degree", q.mid_rule_degree);
  read(n, "outer_rule_degree", q.outer_rule_degree);
  read(n, "far_rule_degree", q.far_rule_degree);
  read(n, "remainder_order", q.remainder_order);
  read(n, "negligible_threshold", q.negligible_threshold);
  read(n, "accuracy_floor", q.accuracy_floor);
  read(n, "near_test_order", a.near_test_order);
  read(n, "mid_test_degree", a.mid_test_degree);
  read(n, "far_test_degree", a.far_test_degree);
  read(n, "touching_child_degree", a.touching_child_degree);
  read(n, "stokes_points", a.stokes_points);
  read(n, "field_rule_degree", p.far_rule_degree);
}

}  // namespace detail

inline void validate(const RunConfig &c)
{
  if (c.frequencies.empty())
  {
    throw ConfigError("the frequency list is empty");
  }
  for (double f : c.frequencies)
  {
    if (!(f > 0.0) || !std::isfinite(f))
    {
      throw ConfigError("frequencies must be positive and finite");
    }
  }
  for (double s : c.sigmas())
  {
    if (!(s >= 0.0) || !std::isfinite(s))
    {
      throw ConfigError("conductivities must be non-negative and finite");
    }
  }
  if (!(c.eps_r >= 1.0) || !std::isfinite(c.eps_r))
  {
    throw ConfigError("eps_r must be at least 1");
  }
  if (!(c.mu_r > 0.0) || !std::isfinite(c.mu_r))
  {
    throw ConfigError("mu_r must be positive");
  }
  (void)c.excitation(c.frequencies.front());
  if (c.outputs.rcs)
  {
    const RcsOutput &r = *c.outputs.rcs;
    if (!(r.step > 0.0) || !(r.stop >= r.start) || r.cuts.empty())
    {
      throw ConfigError("RCS output needs step > 0, stop >= start and at least one cut");
    }
  }
  for (const ProbeOutput &p : c.outputs.probes)
  {
    if (p.line.n_samples < 2)
    {
      throw ConfigError("probe '" + p.name + "' needs at least two samples");
    }
  }
  const GeometryConfig &g = c.geometry;
  if (g.type == "sphere" && (!(g.diameter > 0.0) || g.level < 0 || g.level > 6))
  {
    throw ConfigError("sphere needs diameter > 0 and 0 <= level <= 6");
  }
  if ((g.type == "box" || g.type == "cube") && !((g.box_size.array() > 0.0).all() && g.target_edge > 0.0))
  {
    throw ConfigError("box needs positive size and target_edge");
  }
  if (c.solver.assembly.threads < 1)
  {
    throw ConfigError("threads must be at least 1");
  }
}

inline RunConfig parse_config(const std::string &text, const std::filesystem::path &base_dir = ".")
{
  YAML::Node root;
  try
  {
    root = YAML::Load(text);
  }
  catch (const YAML::Exception &e)
  {
    throw ConfigError(std::string("YAML: ") + e.what());
  }
  if (!root || root.IsNull())
  {
    throw ConfigError("empty configuration");
  }
  detail::allow_keys(root, "<root>", {"geometry", "material", "excitation", "sweep", "outputs", "quadrature", "solver"});
  RunConfig c;
  c.hash = fnv1a_hex(text);
  c.base_dir = base_dir;
  if (const YAML::Node g = root["geometry"])
  {
    detail::parse_geometry(g, c.geometry);
  }
  if (const YAML::Node m = root["material"])
  {
    detail::allow_keys(m, "material", {"eps_r", "mu_r", "sigma"});
    detail::read(m, "eps_r", c.eps_r);
    detail::read(m, "mu_r", c.mu_r);
    detail::read(m, "sigma", c.sigma);
  }
  if (const YAML::Node e = root["excitation"])
  {
    detail::allow_keys(e, "excitation", {"E0", "direction", "polarization"});
    if (const YAML::Node a = e["E0"])
    {
      if (a.IsSequence() && a.size() == 2)
      {
        c.E0 = {a[0].as<double>(), a[1].as<double>()};
      }
      else
      {
        double re = 1.0;
        detail::read(e, "E0", re);
        c.E0 = re;
      }
    }
    detail::read_vec3(e, "direction", c.direction);
    detail::read_vec3(e, "polarization", c.polarization);
  }
  const YAML::Node s = root["sweep"];
  if (!s)
  {
    throw ConfigError("missing 'sweep' section");
  }
  detail::allow_keys(s, "sweep", {"frequencies", "conductivities"});
  if (s["frequencies"])
  {
    c.frequencies = detail::number_list(s["frequencies"], "sweep.frequencies");
  }
  if (s["conductivities"])
  {
    c.conductivities = detail::number_list(s["conductivities"], "sweep.conductivities");
  }
  if (const YAML::Node o = root["outputs"])
  {
    detail::parse_outputs(o, c.outputs);
  }
  if (const YAML::Node q = root["quadrature"])
  {
    detail::parse_quadrature(q, c.solver.assembly, c.solver.post);
  }
  if (const YAML::Node v = root["solver"])
  {
    detail::allow_keys(v, "solver", {"max_residual", "max_refinement", "reuse_exterior"});
    detail::read(v, "max_residual", c.solver.solve.max_residual);
    detail::read(v, "max_refinement", c.solver.solve.max_refinement);
    detail::read(v, "reuse_exterior", c.solver.reuse_exterior);
  }
  validate(c);
  return c;
}

inline RunConfig load_config(const std::filesystem::path &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw ConfigError("cannot read configuration '" + path.string() + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

inline TriangleMesh build_mesh(const RunConfig &c)
{
  const GeometryConfig &g = c.geometry;
  return with_stage("mesh", [&]
  {
    if (g.type == "sphere")
    {
      return make_sphere(g.diameter, g.level);
    }
    if (g.type == "box" || g.type == "cube")
    {
      return make_box(g.box_size.x(), g.box_size.y(), g.box_size.z(), g.target_edge);
    }
    if (g.type == "srr")
    {
      return make_srr_array(g.srr);
    }
    std::filesystem::path p(g.path);
    if (p.is_relative())
    {
      p = c.base_dir / p;
    }
    return load_mesh(p.string(), parse_mesh_format(g.format));
  });
}

}  // namespace pie
