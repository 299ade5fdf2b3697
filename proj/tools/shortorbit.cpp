// shortorbit: short periodic billiard trajectories by penalized action continuation.
//
//   shortorbit find     --domain ball.json --out runs/ball
//   shortorbit shoot    --domain ellipse.json --start 0.3 0.1 --dir 0.7 0.4 --max-bounces 100
//   shortorbit inradius --domain dumbbell.json
//   shortorbit verify   --domain disk.json --trajectory runs/ball/trajectory.json

#include "shortorbit/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace shortorbit;

namespace {

struct Flags {
  std::string config, domain, out, trajectory;
  std::optional<double> d0, eps_start, eps_ratio, eps_end, grid_density;
  std::optional<int> nodes, seeds, jobs, max_bounces;
  std::optional<std::uint64_t> rng_seed;
  std::vector<double> start, dir;
};

void add_common(CLI::App *sub, Flags &f) {
  sub->add_option("--config", f.config, "JSON run config; flags override its fields")->check(CLI::ExistingFile);
  sub->add_option("--domain", f.domain, "domain spec JSON");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--grid-density", f.grid_density, "inradius grid samples per unit length");
}

void add_find(CLI::App *sub, Flags &f) {
  sub->add_option("--d0", f.d0, "penalty cutoff d0 in (0, 1/2); default from the reach estimate");
  sub->add_option("--N", f.nodes, "initial node count");
  sub->add_option("--eps-start", f.eps_start, "first eps of the schedule");
  sub->add_option("--eps-ratio", f.eps_ratio, "geometric ratio of the schedule, in (0, 1)");
  sub->add_option("--eps-end", f.eps_end, "last eps of the schedule");
  sub->add_option("--seeds", f.seeds, "number of multistart seeds");
  sub->add_option("--rng-seed", f.rng_seed, "seed of the random seed loops");
  sub->add_option("--jobs", f.jobs, "OpenMP threads over branches");
}

io::RunConfig resolve(const Flags &f) {
  io::RunConfig cfg = f.config.empty() ? io::RunConfig{} : io::read_run_config(f.config);
  if (!f.domain.empty()) cfg.domain_file = f.domain;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.trajectory.empty()) cfg.trajectory_file = f.trajectory;
  if (f.d0) cfg.d0 = *f.d0;
  if (f.eps_start) cfg.schedule.eps_start = *f.eps_start;
  if (f.eps_ratio) cfg.schedule.ratio = *f.eps_ratio;
  if (f.eps_end) cfg.schedule.eps_end = *f.eps_end;
  if (f.grid_density) cfg.grid_density = *f.grid_density;
  if (f.nodes) cfg.nodes = *f.nodes;
  if (f.seeds) cfg.seeds = *f.seeds;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (f.max_bounces) cfg.max_bounces = *f.max_bounces;
  if (f.rng_seed) cfg.rng_seed = *f.rng_seed;
  auto to_vec = [](const std::vector<double> &v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
  };
  if (!f.start.empty()) cfg.start = to_vec(f.start);
  if (!f.dir.empty()) cfg.dir = to_vec(f.dir);
  return cfg;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Short periodic billiard trajectories in smooth domains"};
  app.require_subcommand(1);
  Flags f;

  auto *find = app.add_subcommand("find", "multistart continuation to a billiard trajectory, with bound checks");
  add_common(find, f);
  add_find(find, f);

  auto *shoot = app.add_subcommand("shoot", "straight-line flow with specular reflection");
  add_common(shoot, f);
  shoot->add_option("--start", f.start, "start point")->expected(1, kMaxDim);
  shoot->add_option("--dir", f.dir, "initial direction")->expected(1, kMaxDim);
  shoot->add_option("--max-bounces", f.max_bounces, "number of reflections");

  auto *inradius = app.add_subcommand("inradius", "largest inscribed ball");
  add_common(inradius, f);

  auto *verify = app.add_subcommand("verify", "reflection law, crosscheck and bounds of a stored trajectory");
  add_common(verify, f);
  verify->add_option("--trajectory", f.trajectory, "trajectory JSON written by find");

  CLI11_PARSE(app, argc, argv);

  io::RunConfig cfg;
  try {
    cfg = resolve(f);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code(e.code());
  }
  if (find->parsed()) return cli::cmd_find(cfg, std::cerr);
  if (shoot->parsed()) return cli::cmd_shoot(cfg, std::cerr);
  if (inradius->parsed()) return cli::cmd_inradius(cfg, std::cerr);
  return cli::cmd_verify(cfg, std::cerr);
}
