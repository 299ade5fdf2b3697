#pragma once

#include "shortorbit/billiard.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace shortorbit::io {

using nlohmann::json;

// Domain spec files: {"dim": n, "shape": name, "params": {...}}. Unknown or missing
// fields raise SchemaError.
DomainSpec domain_spec_from_json(const json &j);
json to_json(const DomainSpec &spec);
DomainSpec read_domain_spec(const std::filesystem::path &file);

json read_json(const std::filesystem::path &file);
/// Pretty-printed, trailing newline, keys in insertion order.
void write_json(const std::filesystem::path &file, const json &j);
void write_text(const std::filesystem::path &file, const std::string &text);

json vec_json(const Vec &v);
Vec vec_from_json(const json &j, int dim, const char *what);

/// Options shared by the subcommands; the config file and the flags both fill it.
struct RunConfig {
  std::filesystem::path domain_file;
  std::filesystem::path output_dir = ".";
  std::uint64_t rng_seed = 1;
  std::optional<double> d0;
  int nodes = 0;
  Schedule schedule;
  int seeds = 4;
  int jobs = 0;
  double grid_density = 0.0;
  double energy = 0.5;
  ExtractOptions extract;
  double residual_tol = 1e-3;

  // shoot
  std::optional<Vec> start;
  std::optional<Vec> dir;
  int max_bounces = 10;

  // verify
  std::filesystem::path trajectory_file;
};

/// Reads a run config; relative paths are resolved against the file's directory.
RunConfig read_run_config(const std::filesystem::path &file);
/// Checks ranges and file existence. Throws InvalidArgument.
void validate(const RunConfig &cfg, const std::string &command);

json to_json(const BoundaryPoint &b);
json to_json(const ReflectionResidual &r);
json to_json(const BilliardTrajectory &traj);
/// Stored trajectories: bounce points are read back, normals and lengths recomputed by the caller.
std::vector<Vec> trajectory_points_from_json(const json &j, int dim);

json to_json(const Crosscheck &c);
json to_json(const BoundsReport &b);
json to_json(const RefineResult &r);
json orbit_catalog_json(const std::vector<RefineResult> &catalog);
json to_json(const Shot &shot);
json to_json(const ContinuationTrace &trace);

/// Table eps, tau, kinetic_integral per stage of every branch.
std::string trace_csv(const std::vector<ContinuationTrace> &branches);

/// 2D picture: boundary contour from marching squares plus the given polylines.
std::string svg(const Domain &domain, const std::vector<std::vector<Vec>> &polylines, bool close_polylines);

} // namespace shortorbit::io
