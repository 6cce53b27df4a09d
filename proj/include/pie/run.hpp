#pragma once

// Batch driver behind the CLI: sweeps, result files, JSON summary and logging.

#include "pie/compare.hpp"
#include "pie/config.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>

namespace pie
{

using json = nlohmann::ordered_json;

struct RunOptions
{
  int threads = 1;
};

inline std::string point_tag(size_t i)
{
  char buf[16];
  std::snprintf(buf, sizeof buf, "p%03zu", i);
  return buf;
}

inline const char *cut_slug(RcsCut c) { return c == RcsCut::EPlane ? "eplane" : "hplane"; }

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json mesh_info(const TriangleMesh &m)
{
  json j;
  j["triangles"] = m.num_triangles();
  j["edges"] = m.num_edges();
  j["vertices"] = m.num_vertices();
  j["components"] = m.num_components();
  j["closed"] = m.is_closed();
  j["area_m2"] = m.total_area();
  j["volume_m3"] = m.signed_volume();
  j["avg_edge_m"] = m.avg_edge_length();
  j["bbox_diagonal_m"] = m.bbox_diagonal();
  j["unknowns"] = 2 * m.num_edges() + 4 * m.num_triangles();
  return j;
}

inline void apply_threads(RunConfig &cfg, int threads)
{
  if (threads < 1)
  {
    throw ConfigError("--threads must be at least 1");
  }
  cfg.solver.assembly.threads = threads;
  cfg.solver.post.threads = threads;
}

inline void prepare_out_dir(const std::filesystem::path &dir)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto probe = dir / ".pie_write_test";
  std::FILE *f = std::fopen(probe.string().c_str(), "w");
  if (ec || !f)
  {
    throw ConfigError("output directory '" + dir.string() + "' is not writable");
  }
  std::fclose(f);
  std::filesystem::remove(probe);
}

inline void dump_kernel_blocks(const std::filesystem::path &dir, const KernelBlocks &kb, const char *prefix)
{
  for (const OperatorBlock *b : kb.all())
  {
    write_pieblk((dir / (std::string(prefix) + "_" + b->name + ".pieblk")).string(), *b);
  }
}

// Executes every (f, σ) point of the config and writes the files listed in the returned summary.
inline json run(RunConfig cfg, const std::filesystem::path &out_dir, const RunOptions &ro = {})
{
  apply_threads(cfg, ro.threads);
  validate(cfg);
  prepare_out_dir(out_dir);
  Stopwatch total;

  Stopwatch sw;
  TriangleMesh mesh = build_mesh(cfg);
  const double mesh_time = sw.seconds();
  spdlog::info("mesh: {} triangles, {} edges ({:.2f} s)", mesh.num_triangles(), mesh.num_edges(), mesh_time);

  Solver solver(std::move(mesh), cfg.solver);
  solver.set_block_hook([](const std::string &what, double s) { spdlog::debug("  block {}: {:.3f} s", what, s); });
  spdlog::info("basis: N = {}, xi = {:.6g} m ({:.2f} s)", solver.unknowns(), solver.xi(), solver.basis_time());

  json summary;
  summary["config_hash"] = cfg.hash;
  summary["geometry"] = cfg.geometry.type;
  summary["mesh"] = mesh_info(solver.mesh());
  summary["N"] = solver.unknowns();
  summary["xi"] = solver.xi();
  summary["threads"] = ro.threads;
  summary["points"] = json::array();

  size_t index = 0;
  for (double f : cfg.frequencies)
  {
    for (double s : cfg.sigmas())
    {
      const std::string tag = point_tag(index++);
      const MaterialParams mat = cfg.material(f, s);
      const PlaneWaveExcitation exc = cfg.excitation(f);
      BlockSystem S;
      KernelBlocks interior;
      const bool keep = cfg.outputs.dump_system || cfg.outputs.dump_blocks;
      PointResult r = solver.solve(mat, exc, keep ? &S : nullptr, cfg.outputs.dump_blocks ? &interior : nullptr);
      if (index == 1)
      {
        r.times.mesh = mesh_time;
        r.times.basis = solver.basis_time();
      }

      json files = json::array();
      Stopwatch post;
      const json extra = with_stage("post", [&]
      {
        const ExteriorField field = solver.field(r);
        if (cfg.outputs.rcs)
        {
          for (RcsCut cut : cfg.outputs.rcs->cuts)
          {
            const std::string name = tag + "_rcs_" + cut_slug(cut) + ".csv";
            write_rcs_csv((out_dir / name).string(), bistatic_rcs(field, r.excitation, cut, cfg.outputs.rcs->angles()));
            files.push_back(name);
          }
        }
        for (const ProbeOutput &p : cfg.outputs.probes)
        {
          const std::string name = tag + "_probe_" + p.name + ".csv";
          write_probe_csv((out_dir / name).string(), near_field_probe(field, r.excitation, p.line), p.line.start);
          files.push_back(name);
        }
        if (cfg.outputs.surface_current)
        {
          const std::string name = tag + "_current.csv";
          write_current_csv((out_dir / name).string(), surface_current(solver.basis(), r.solution));
          files.push_back(name);
        }
        if (cfg.outputs.solution)
        {
          write_solution_csv(out_dir, tag + "_", r.solution);
          for (const auto &[part, v] : r.solution.parts())
          {
            files.push_back(tag + "_" + part + ".csv");
          }
        }
        json point;
        if (cfg.outputs.cross_sections)
        {
          const CrossSections cs = cross_sections(field, r.excitation);
          point["cross_sections"] = {{"ext", cs.ext}, {"sca", cs.sca}, {"abs", cs.abs}};
        }
        return point;
      });
      r.times.post = post.seconds();
      if (cfg.outputs.dump_system)
      {
        const auto d = out_dir / (tag + "_system");
        std::filesystem::create_directories(d);
        dump_system(d, S);
        files.push_back(tag + "_system/");
      }
      if (cfg.outputs.dump_blocks)
      {
        const auto d = out_dir / (tag + "_blocks");
        std::filesystem::create_directories(d);
        dump_kernel_blocks(d, interior, "interior");
        dump_kernel_blocks(d, *solver.exterior_blocks(mat.omega), "exterior");
        files.push_back(tag + "_blocks/");
      }

      const cplx k = wavenumber(mat);
      json p;
      p["tag"] = tag;
      p["frequency_hz"] = f;
      p["sigma_s_per_m"] = s;
      p["k_inside"] = {k.real(), k.imag()};
      p["skin_depth_m"] = finite_or_null(skin_depth(mat));
      p["condition_estimate"] = finite_or_null(r.solution.condition_estimate());
      p["residual"] = r.solution.residual;
      p["refinement_steps"] = r.solution.refinement_steps;
      p["exterior_reused"] = r.exterior_reused;
      if (extra.contains("cross_sections"))
      {
        p["cross_sections"] = extra["cross_sections"];
      }
      json t;
      for (const auto &[name, v] : r.times.items())
      {
        t[name] = v;
      }
      p["times_s"] = t;
      p["files"] = files;
      summary["points"].push_back(p);
      spdlog::info("{} f = {:.6g} Hz, sigma = {:.6g} S/m: exterior {:.2f} s{}, interior {:.2f} s, system {:.2f} s, "
                   "solve {:.2f} s, post {:.2f} s, residual {:.2e}, cond {:.2e}",
                   tag, f, s, r.times.exterior, r.exterior_reused ? " (reused)" : "", r.times.interior,
                   r.times.system, r.times.solve, r.times.post, r.solution.residual,
                   r.solution.condition_estimate());
    }
  }
  summary["total_time_s"] = total.seconds();
  std::ofstream((out_dir / "summary.json").string()) << summary.dump(2) << "\n";
  return summary;
}

// Mie-series RCS for each (f, σ) point of a sphere config, named like the solver output.
inline json run_mie(const RunConfig &cfg, const std::filesystem::path &out_dir)
{
  validate(cfg);
  if (cfg.geometry.type != "sphere")
  {
    throw ConfigError("the mie subcommand needs a sphere geometry");
  }
  prepare_out_dir(out_dir);
  const RcsOutput rc = cfg.outputs.rcs.value_or(RcsOutput{});
  json summary;
  summary["config_hash"] = cfg.hash;
  summary["points"] = json::array();
  size_t index = 0;
  for (double f : cfg.frequencies)
  {
    for (double s : cfg.sigmas())
    {
      const std::string tag = point_tag(index++);
      const MieSolution mie = mie_coefficients(0.5 * cfg.geometry.diameter, cfg.material(f, s));
      json files = json::array();
      for (RcsCut cut : rc.cuts)
      {
        const std::string name = tag + "_mie_rcs_" + cut_slug(cut) + ".csv";
        write_rcs_csv((out_dir / name).string(), mie_bistatic_rcs(mie, cut, rc.angles()));
        files.push_back(name);
      }
      const CrossSections cs = mie_cross_sections(mie);
      summary["points"].push_back({{"tag", tag},
                                   {"frequency_hz", f},
                                   {"sigma_s_per_m", s},
                                   {"nmax", mie.nmax()},
                                   {"cross_sections", {{"ext", cs.ext}, {"sca", cs.sca}, {"abs", cs.abs}}},
                                   {"files", files}});
      spdlog::info("{} Mie f = {:.6g} Hz, sigma = {:.6g} S/m, {} terms", tag, f, s, mie.nmax());
    }
  }
  std::ofstream((out_dir / "mie_summary.json").string()) << summary.dump(2) << "\n";
  return summary;
}

}  // namespace pie
