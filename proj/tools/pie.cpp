#include "pie/run.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace pie;

namespace
{

int dump_first_point(const RunConfig &cfg0, const std::filesystem::path &out, int threads)
{
  RunConfig cfg = cfg0;
  apply_threads(cfg, threads);
  prepare_out_dir(out);
  Solver solver(build_mesh(cfg), cfg.solver);
  const double f = cfg.frequencies.front(), s = cfg.sigmas().front();
  const MaterialParams mat = cfg.material(f, s);
  KernelBlocks interior;
  const BlockSystem S = solver.system(mat, cfg.excitation(f), nullptr, nullptr, &interior);
  dump_system(out, S);
  dump_kernel_blocks(out, interior, "interior");
  dump_kernel_blocks(out, *solver.exterior_blocks(mat.omega), "exterior");
  json j;
  j["config_hash"] = cfg.hash;
  j["frequency_hz"] = f;
  j["sigma_s_per_m"] = s;
  j["N"] = S.size();
  j["ne"] = S.ne;
  j["nt"] = S.nt;
  j["xi"] = S.scaling.xi;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Potential-based boundary element solver for lossy penetrable scatterers"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "per-block timings");

  std::string config, out_dir = "out", mesh_path, mesh_format = "native", metric = "max-db-diff";
  std::string csv_a, csv_b;
  int threads = 1;
  double tol = std::numeric_limits<double>::infinity(), mask_db = std::numeric_limits<double>::infinity();

  auto *run_cmd = app.add_subcommand("run", "run every (frequency, conductivity) point of a config");
  run_cmd->add_option("--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out-dir", out_dir, "output directory");
  run_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  auto *mie_cmd = app.add_subcommand("mie", "Mie-series RCS for a sphere config");
  mie_cmd->add_option("--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);
  mie_cmd->add_option("--out-dir", out_dir, "output directory");

  auto *cmp_cmd = app.add_subcommand("compare", "compare two RCS CSV files in dB");
  cmp_cmd->add_option("a", csv_a, "first CSV")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("b", csv_b, "reference CSV (sets the mask peak)")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--metric", metric, "max-db-diff or l2-db");
  cmp_cmd->add_option("--tol", tol, "exit with status 1 when the metric exceeds this");
  cmp_cmd->add_option("--mask-db", mask_db, "ignore angles this far below the reference peak");

  auto *info_cmd = app.add_subcommand("mesh-info", "mesh statistics of a config geometry or a mesh file");
  auto *info_cfg = info_cmd->add_option("--config", config, "YAML run configuration")->check(CLI::ExistingFile);
  auto *info_mesh = info_cmd->add_option("--mesh", mesh_path, "mesh file")->check(CLI::ExistingFile);
  info_cmd->add_option("--format", mesh_format, "native or stl");
  info_cfg->excludes(info_mesh);

  auto *dump_cmd = app.add_subcommand("dump-system", "write the system and kernel blocks of the first point");
  dump_cmd->add_option("--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--out-dir", out_dir, "output directory");
  dump_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S.%e] %v");

  try
  {
    if (*run_cmd)
    {
      const json s = run(load_config(config), out_dir, {threads});
      std::cout << "N = " << s["N"] << ", " << s["points"].size() << " point(s), summary in "
                << (std::filesystem::path(out_dir) / "summary.json").string() << "\n";
      return 0;
    }
    if (*mie_cmd)
    {
      run_mie(load_config(config), out_dir);
      return 0;
    }
    if (*cmp_cmd)
    {
      const CompareMetric m = parse_metric(metric);
      const CompareReport r = compare_rcs(read_rcs_csv(csv_a), read_rcs_csv(csv_b), mask_db);
      json j;
      j["metric"] = to_string(m);
      j["value_db"] = r.value(m);
      j["max_db"] = r.max_db;
      j["l2_db"] = r.l2_db;
      j["worst_angle_deg"] = r.worst_angle;
      j["compared"] = r.compared;
      j["tol"] = finite_or_null(tol);
      j["pass"] = r.value(m) <= tol;
      std::cout << j.dump() << "\n";
      return r.value(m) <= tol ? 0 : 1;
    }
    if (*info_cmd)
    {
      if (config.empty() && mesh_path.empty())
      {
        throw ConfigError("mesh-info needs --config or --mesh");
      }
      const TriangleMesh m = config.empty() ? load_mesh(mesh_path, parse_mesh_format(mesh_format))
                                            : build_mesh(load_config(config));
      std::cout << mesh_info(m).dump(2) << "\n";
      return 0;
    }
    if (*dump_cmd)
    {
      return dump_first_point(load_config(config), out_dir, threads);
    }
  }
  catch (const GridMismatch &e)
  {
    spdlog::error("{}", e.what());
    return 3;
  }
  catch (const Error &e)
  {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
