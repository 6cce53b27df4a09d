#pragma once

// Mesh → assemble → solve for one geometry over a set of (f, σ) points.

#include "pie/post.hpp"

#include <chrono>
#include <functional>
#include <memory>

namespace pie
{

// A module error annotated with the pipeline stage it came from.
class StageError : public Error
{
public:
  StageError(std::string stage, const std::string &what)
    : Error(stage + ": " + what), stage_(std::move(stage))
  {
  }
  const std::string &stage() const { return stage_; }

private:
  std::string stage_;
};

struct StageTimes
{
  double mesh = 0.0, basis = 0.0, exterior = 0.0, interior = 0.0, system = 0.0, solve = 0.0, post = 0.0;

  double total() const { return mesh + basis + exterior + interior + system + solve + post; }
  std::vector<std::pair<const char *, double>> items() const
  {
    return {{"mesh", mesh},     {"basis", basis}, {"exterior", exterior}, {"interior", interior},
            {"system", system}, {"solve", solve}, {"post", post}};
  }
};

class Stopwatch
{
public:
  double seconds() const
  {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

template <class F>
auto with_stage(const char *stage, F &&f) -> decltype(f())
{
  try
  {
    return f();
  }
  catch (const StageError &)
  {
    throw;
  }
  catch (const Error &e)
  {
    throw StageError(stage, e.what());
  }
}

struct SolverOptions
{
  AssemblyOptions assembly;
  SolveOptions solve;
  PostOptions post;
  bool reuse_exterior = true;
};

struct PointResult
{
  MaterialParams material;
  PlaneWaveExcitation excitation;
  Solution solution;
  StageTimes times;
  bool exterior_reused = false;
  Eigen::Index unknowns = 0;

  double frequency() const { return excitation.frequency; }
  double sigma() const { return material.sigma; }
};

class Solver
{
public:
  // Called after each assembled block group with its name and wall time.
  using BlockHook = std::function<void(const std::string &, double)>;

  explicit Solver(TriangleMesh mesh, SolverOptions opt = {})
    : mesh_(std::make_unique<TriangleMesh>(std::move(mesh))), opt_(std::move(opt))
  {
    Stopwatch sw;
    bs_ = with_stage("basis", [&] { return std::make_unique<BasisSet>(*mesh_); });
    basis_time_ = sw.seconds();
  }

  const TriangleMesh &mesh() const { return *mesh_; }
  const BasisSet &basis() const { return *bs_; }
  const SolverOptions &options() const { return opt_; }
  double xi() const { return mesh_->avg_edge_length(); }
  double basis_time() const { return basis_time_; }
  Eigen::Index unknowns() const { return 2 * Eigen::Index(bs_->num_edges()) + 4 * Eigen::Index(bs_->num_triangles()); }
  size_t cached_frequencies() const { return cache_.size(); }

  void set_block_hook(BlockHook h) { hook_ = std::move(h); }

  BlockSystem system(const MaterialParams &mat, const PlaneWaveExcitation &exc, StageTimes *times = nullptr,
                     bool *reused = nullptr, KernelBlocks *interior_out = nullptr)
  {
    StageTimes local;
    StageTimes &t = times ? *times : local;
    Stopwatch sw;
    std::shared_ptr<const KernelBlocks> ext;
    bool hit = false;
    with_stage("exterior", [&]
    {
      if (opt_.reuse_exterior)
      {
        ext = cache_.get(*bs_, mat.omega, opt_.assembly, &hit);
      }
      else
      {
        AssemblyOptions o = opt_.assembly;
        o.normal_blocks = false;
        ext = std::make_shared<const KernelBlocks>(
          assemble_kernel_blocks(*bs_, free_space_wavenumber(mat.omega), KernelTag::Exterior, o));
      }
      return 0;
    });
    t.exterior = sw.seconds();
    if (reused)
    {
      *reused = hit;
    }
    notify(hit ? "exterior (cached)" : "exterior", t.exterior);

    sw = Stopwatch();
    KernelBlocks in = with_stage("interior", [&]
                                 { return assemble_kernel_blocks(*bs_, wavenumber(mat), KernelTag::Interior, opt_.assembly); });
    t.interior = sw.seconds();
    notify("interior", t.interior);

    sw = Stopwatch();
    BlockSystem S = with_stage("system", [&]
                               { return assemble_system(*bs_, in, *ext, mat, incident_potentials(exc, *bs_), xi()); });
    t.system = sw.seconds();
    notify("system", t.system);
    if (interior_out)
    {
      *interior_out = std::move(in);
    }
    return S;
  }

  std::shared_ptr<const KernelBlocks> exterior_blocks(double omega)
  {
    return cache_.get(*bs_, omega, opt_.assembly);
  }

  // The assembled system and interior blocks are moved out when requested.
  PointResult solve(const MaterialParams &mat, const PlaneWaveExcitation &exc, BlockSystem *keep_system = nullptr,
                    KernelBlocks *keep_interior = nullptr)
  {
    PointResult r;
    r.material = mat;
    r.excitation = exc;
    r.excitation.frequency = mat.frequency();
    with_stage("excitation", [&] { r.excitation.validate(); mat.validate(); return 0; });
    BlockSystem S = system(mat, r.excitation, &r.times, &r.exterior_reused, keep_interior);
    r.unknowns = S.size();
    Stopwatch sw;
    r.solution = with_stage("solve", [&] { return pie::solve(S, opt_.solve); });
    r.times.solve = sw.seconds();
    if (keep_system)
    {
      *keep_system = std::move(S);
    }
    return r;
  }

  ExteriorField field(const PointResult &r) const
  {
    return with_stage("post", [&] { return ExteriorField(*bs_, r.solution, opt_.post); });
  }

  void drop_cache() { cache_.clear(); }

private:
  void notify(const std::string &what, double s) const
  {
    if (hook_)
    {
      hook_(what, s);
    }
  }

  std::unique_ptr<TriangleMesh> mesh_;
  std::unique_ptr<BasisSet> bs_;
  SolverOptions opt_;
  ExteriorCache cache_;
  BlockHook hook_;
  double basis_time_ = 0.0;
};

}  // namespace pie
