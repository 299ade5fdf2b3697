#pragma once

#include "shortorbit/solver.hpp"

#include <optional>
#include <string>
#include <vector>

namespace shortorbit {

/// Geometric eps schedule eps_start, eps_start * ratio, ... down to eps_end (inclusive
/// up to a relative slack of 1e-9).
struct Schedule {
  double eps_start = 1e-1;
  double ratio = 0.25;
  double eps_end = 1e-6;

  static Schedule make(double eps_start, double ratio, double eps_end);
  [[nodiscard]] std::vector<double> values() const;
};

struct ContinuationOptions {
  double energy = 0.5;
  int base_nodes = 0;            ///< <= 0: 256 for n = 2, 128 for n >= 3
  SolveOptions solve;
  double stdev_target = 5e-5;    ///< refine N until the node-energy stdev is below this
  int max_refinements = 4;
  double feasible_fraction = 0.5; ///< skip stages with eps * min U above this fraction of E
  int max_nodes = 1 << 17;
};

enum class StageStatus { Converged, Skipped, Failed };
std::string to_string(StageStatus s);

struct Stage {
  double eps = 0.0;
  StageStatus status = StageStatus::Skipped;
  std::optional<CriticalPoint> point;
  double tau = 0.0;
  double kinetic_integral = 0.0;
  int n_nodes = 0;
  int refinements = 0;
  std::string message;
};

struct ContinuationTrace {
  Schedule schedule;
  double d0 = 0.0;
  double energy = 0.5;
  std::string seed_kind;
  int seed_index = -1;
  std::vector<Stage> stages;
  bool completed = false;
  std::optional<ErrorCode> failure;
  std::string failure_message;
  double tau_floor = 0.0;

  /// Last converged stage, if any.
  [[nodiscard]] const Stage *final_stage() const;
};

/// Tracks one branch from `seed` along the schedule. Never throws for stage failures;
/// those end the trace with `failure` set (StageDiverged, TauCollapse, TauBlowup).
ContinuationTrace trace_continuation(const Domain &domain, double d0, const Schedule &schedule,
                                     const DiscreteLoop &seed, const ContinuationOptions &opts = {});

/// As trace_continuation, but a failed branch raises its error.
ContinuationTrace run_continuation(const Domain &domain, double d0, const Schedule &schedule,
                                   const DiscreteLoop &seed, const ContinuationOptions &opts = {});

struct MultistartOptions {
  ContinuationOptions continuation;
  int seeds = 8;
  std::uint64_t rng_seed = 1;
  int jobs = 0; ///< <= 0: OpenMP default
};

struct MultistartResult {
  std::vector<ContinuationTrace> branches; ///< sorted: completed first, then final kinetic integral
  int best = -1;                           ///< index into branches, -1 if none completed
};

/// Seeds at the first feasible stage, one continuation per seed (in parallel), merged
/// deterministically.
MultistartResult run_multistart(const Domain &domain, double d0, const Schedule &schedule,
                                const MultistartOptions &opts = {});

struct ReflectionResidual {
  double normal_flip_err = 0.0;
  double tangential_err = 0.0;
  double speed_err = 0.0;
};

struct BilliardTrajectory {
  std::vector<BoundaryPoint> bounce_points;
  std::vector<double> segment_lengths; ///< segment i joins bounce i to bounce i+1
  double total_length = 0.0;
  int bounce_count = 0;
  std::vector<ReflectionResidual> reflection_residuals;
  bool closed = true;

  // Extraction diagnostics; zero when the trajectory was built directly.
  double eps = 0.0;
  double tau = 0.0;
  double max_speed_error = 0.0;
};

struct ExtractOptions {
  double bounce_dist_factor = 3.0;   ///< bounce windows: dist < factor * sqrt(eps)
  double curvature_factor = 10.0;    ///< ... and acceleration above factor * median
  double speed_zone_factor = 10.0;   ///< speed is checked where dist >= factor * sqrt(eps)
  double speed_tol = 0.02;
  double max_final_eps = 1e-5;
};

/// Billiard trajectory from the last stage of a trace: bounce detection, projection of
/// bounce points and straight chords between them. Throws NoBouncesFound, SpeedNotUnit.
BilliardTrajectory extract_billiard(const ContinuationTrace &trace, const Domain &domain,
                                    const ExtractOptions &opts = {});

/// Residuals of the mirror law for unit directions in and out at outward normal nu.
ReflectionResidual reflection_residual(const Vec &u_in, const Vec &u_out, const Vec &nu);

/// Per-bounce residuals of a closed polygonal trajectory. Throws TangentialBounce.
std::vector<ReflectionResidual> reflection_check(const BilliardTrajectory &traj);

/// Polygon through the given bounce points with lengths and residuals filled in.
BilliardTrajectory make_trajectory(const Domain &domain, const std::vector<Vec> &points);

struct BoundsReport {
  int bounce_count = 0;
  double total_length = 0.0;
  double inradius = 0.0;
  double ratio = 0.0;
  int bounce_limit = 0;        ///< n + 1
  bool bounce_ok = false;
  bool convex = false;
  bool ratio_floor_ok = true;  ///< ratio >= 4 - 0.01; only asserted on convex domains
  double max_reflection_residual = 0.0;
};

BoundsReport verify_bounds(const BilliardTrajectory &traj, const Domain &domain);

/// max over the last three converged stages of |tau_k - limit| / sqrt(eps_k).
double tau_stability_constant(const ContinuationTrace &trace, double limit);

/// Every segment stays in the closed domain: 64 samples each, signed_dist <= tol.
bool segments_inside(const BilliardTrajectory &traj, const Domain &domain, double tol = 1e-8);

} // namespace shortorbit
