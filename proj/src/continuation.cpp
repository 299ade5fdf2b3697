#include "shortorbit/continuation.hpp"

#include "shortorbit/seeds.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace shortorbit {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline int wrap(int i, int n) { return (i % n + n) % n; }

int default_nodes(int dim) { return dim == 2 ? 256 : 128; }

} // namespace

Schedule Schedule::make(double eps_start, double ratio, double eps_end) {
  if (!(eps_start > 0.0) || !std::isfinite(eps_start)) fail(ErrorCode::InvalidArgument, "eps_start must be positive");
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorCode::InvalidArgument, "eps ratio must lie in (0, 1)");
  if (!(eps_end > 0.0) || eps_end > eps_start) fail(ErrorCode::InvalidArgument, "eps_end must lie in (0, eps_start]");
  return {eps_start, ratio, eps_end};
}

std::vector<double> Schedule::values() const {
  std::vector<double> out;
  double eps = eps_start;
  while (eps >= eps_end * (1.0 - 1e-9)) {
    out.push_back(eps);
    eps *= ratio;
  }
  return out;
}

std::string to_string(StageStatus s) {
  switch (s) {
  case StageStatus::Converged: return "converged";
  case StageStatus::Skipped: return "skipped";
  case StageStatus::Failed: return "failed";
  }
  return "unknown";
}

const Stage *ContinuationTrace::final_stage() const {
  for (auto it = stages.rbegin(); it != stages.rend(); ++it)
    if (it->status == StageStatus::Converged) return &*it;
  return nullptr;
}

ContinuationTrace trace_continuation(const Domain &domain, double d0, const Schedule &schedule,
                                     const DiscreteLoop &seed, const ContinuationOptions &opts) {
  ContinuationTrace trace;
  trace.schedule = schedule;
  trace.d0 = d0;
  trace.energy = opts.energy;
  trace.tau_floor = 0.1 * domain.inradius_estimate();

  SolveOptions inner = opts.solve;
  inner.compute_index = false;

  auto stop = [&](Stage st, ErrorCode code, const std::string &msg) {
    st.status = StageStatus::Failed;
    st.message = msg;
    trace.stages.push_back(std::move(st));
    trace.failure = code;
    trace.failure_message = msg;
    return trace;
  };

  DiscreteLoop loop = seed;
  double prev_stdev = 0.0;
  double best_kinetic = std::numeric_limits<double>::infinity();
  for (double eps : schedule.values()) {
    Stage st;
    st.eps = eps;
    PenaltyConfig cfg = PenaltyConfig::make(d0, eps);
    if (eps * cfg.u_floor() > opts.feasible_fraction * opts.energy) {
      st.message = "eps * min U = " + fmt(eps * cfg.u_floor()) + " leaves too little kinetic energy";
      trace.stages.push_back(std::move(st));
      continue;
    }
    // The node-energy spread at fixed N grows roughly like eps^(-3/8); start each stage
    // from the size the previous stage suggests.
    if (prev_stdev > 0.0) {
      double grow = std::pow(1.0 / schedule.ratio, 0.375) * std::sqrt(prev_stdev / (0.8 * opts.stdev_target));
      int next = static_cast<int>(std::ceil(loop.size() * std::max(grow, 1.0)));
      next = std::min(next + next % 2, opts.max_nodes);
      if (next > loop.size()) loop = resample(loop, next);
    }
    CriticalPoint cp;
    try {
      cp = find_critical_point(domain, cfg, loop, opts.energy, inner);
      while (cp.energy_stdev > opts.stdev_target && st.refinements < opts.max_refinements) {
        const int big_n = cp.loop.size();
        int next = static_cast<int>(std::ceil(big_n * std::sqrt(cp.energy_stdev / opts.stdev_target) * 1.1));
        next = std::min(next + next % 2, opts.max_nodes);
        if (next <= big_n) break;
        cp = find_critical_point(domain, cfg, resample(cp.loop, next), opts.energy, inner);
        ++st.refinements;
      }
      if (opts.solve.compute_index)
        cp.morse_index_fixed_tau = morse_index_fixed_tau(domain, cfg, cp, opts.energy, opts.solve.index_eig_tol);
    } catch (const Error &e) {
      return stop(std::move(st), ErrorCode::StageDiverged, "stage eps = " + fmt(eps) + ": " + e.what());
    }
    st.tau = cp.loop.tau;
    st.kinetic_integral = cp.kinetic_integral;
    st.n_nodes = cp.loop.size();
    best_kinetic = std::min(best_kinetic, cp.kinetic_integral);
    loop = cp.loop;
    prev_stdev = cp.energy_stdev;
    st.point = std::move(cp);
    if (st.tau < trace.tau_floor)
      return stop(std::move(st), ErrorCode::TauCollapse,
                  "tau = " + fmt(st.tau) + " fell below 0.1 r = " + fmt(trace.tau_floor) + " at eps = " + fmt(eps));
    if (st.tau > 196.0 * best_kinetic + 1.0)
      return stop(std::move(st), ErrorCode::TauBlowup,
                  "tau = " + fmt(st.tau) + " exceeds 196 * kinetic + 1 at eps = " + fmt(eps));
    st.status = StageStatus::Converged;
    trace.stages.push_back(std::move(st));
  }
  if (!trace.final_stage()) {
    trace.failure = ErrorCode::InvalidArgument;
    trace.failure_message = "no stage of the schedule is feasible at this d0";
    return trace;
  }
  trace.completed = true;
  return trace;
}

ContinuationTrace run_continuation(const Domain &domain, double d0, const Schedule &schedule,
                                   const DiscreteLoop &seed, const ContinuationOptions &opts) {
  ContinuationTrace trace = trace_continuation(domain, d0, schedule, seed, opts);
  if (trace.failure) fail(*trace.failure, trace.failure_message);
  return trace;
}

MultistartResult run_multistart(const Domain &domain, double d0, const Schedule &schedule,
                                const MultistartOptions &opts) {
  const auto &copts = opts.continuation;
  double first = -1.0;
  for (double eps : schedule.values()) {
    PenaltyConfig cfg = PenaltyConfig::make(d0, eps);
    if (eps * cfg.u_floor() <= copts.feasible_fraction * copts.energy) {
      first = eps;
      break;
    }
  }
  if (first < 0) fail(ErrorCode::InvalidArgument, "no stage of the schedule is feasible at d0 = " + fmt(d0));
  const int base = copts.base_nodes > 0 ? copts.base_nodes : default_nodes(domain.dim());
  std::vector<Seed> seeds =
      make_seeds(domain, PenaltyConfig::make(d0, first), copts.energy, base, opts.seeds, opts.rng_seed);

  MultistartResult out;
  out.branches.resize(seeds.size());
  const int count = static_cast<int>(seeds.size());
  const int jobs = opts.jobs > 0 ? opts.jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
  for (int i = 0; i < count; ++i) {
    ContinuationTrace t;
    try {
      t = trace_continuation(domain, d0, schedule, seeds[static_cast<std::size_t>(i)].loop, copts);
    } catch (const Error &e) {
      t.schedule = schedule;
      t.d0 = d0;
      t.failure = e.code();
      t.failure_message = e.what();
    }
    t.seed_kind = seeds[static_cast<std::size_t>(i)].kind;
    t.seed_index = i;
    out.branches[static_cast<std::size_t>(i)] = std::move(t);
  }

  auto key = [](const ContinuationTrace &t) {
    const Stage *s = t.completed ? t.final_stage() : nullptr;
    double k = s ? s->kinetic_integral : std::numeric_limits<double>::infinity();
    int idx = s && s->point ? s->point->morse_index_fixed_tau : std::numeric_limits<int>::max();
    return std::make_tuple(!t.completed, k, idx, t.seed_index);
  };
  std::sort(out.branches.begin(), out.branches.end(),
            [&](const ContinuationTrace &a, const ContinuationTrace &b) { return key(a) < key(b); });
  if (!out.branches.empty() && out.branches.front().completed) out.best = 0;
  return out;
}

ReflectionResidual reflection_residual(const Vec &u_in, const Vec &u_out, const Vec &nu) {
  ReflectionResidual r;
  const double in_n = u_in.dot(nu);
  const double out_n = u_out.dot(nu);
  r.normal_flip_err = std::abs(out_n + in_n);
  r.tangential_err = ((u_out - out_n * nu) - (u_in - in_n * nu)).norm();
  r.speed_err = std::abs(u_out.norm() - u_in.norm());
  return r;
}

namespace {

std::vector<ReflectionResidual> residuals_of(const BilliardTrajectory &traj, bool strict) {
  const int k = static_cast<int>(traj.bounce_points.size());
  std::vector<ReflectionResidual> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const Vec &prev = traj.bounce_points[static_cast<std::size_t>(wrap(i - 1, k))].point;
    const Vec &next = traj.bounce_points[static_cast<std::size_t>(wrap(i + 1, k))].point;
    const BoundaryPoint &b = traj.bounce_points[static_cast<std::size_t>(i)];
    Vec u_in = (b.point - prev).normalized();
    Vec u_out = (next - b.point).normalized();
    if (strict) {
      const double out_n = u_out.dot(b.normal);
      if (std::abs(out_n) <= 1e-6)
        fail(ErrorCode::TangentialBounce, "outgoing direction is tangential at bounce " + std::to_string(i));
      if (out_n > 0)
        fail(ErrorCode::InvalidArgument, "outgoing direction leaves the domain at bounce " + std::to_string(i));
    }
    out.push_back(reflection_residual(u_in, u_out, b.normal));
  }
  return out;
}

} // namespace

std::vector<ReflectionResidual> reflection_check(const BilliardTrajectory &traj) {
  if (!traj.closed) fail(ErrorCode::InvalidArgument, "reflection check needs a closed trajectory");
  if (traj.bounce_points.size() < 2) fail(ErrorCode::InvalidArgument, "a closed trajectory needs two bounces");
  return residuals_of(traj, true);
}

BilliardTrajectory make_trajectory(const Domain &domain, const std::vector<Vec> &points) {
  BilliardTrajectory traj;
  const int k = static_cast<int>(points.size());
  for (const Vec &p : points) {
    DistanceSample ds = domain.distance(p);
    traj.bounce_points.push_back({p, ds.normal});
  }
  for (int i = 0; i < k; ++i) {
    double len = (points[static_cast<std::size_t>(wrap(i + 1, k))] - points[static_cast<std::size_t>(i)]).norm();
    traj.segment_lengths.push_back(len);
    traj.total_length += len;
  }
  traj.bounce_count = k;
  if (k >= 2) traj.reflection_residuals = residuals_of(traj, false);
  return traj;
}

BilliardTrajectory extract_billiard(const ContinuationTrace &trace, const Domain &domain, const ExtractOptions &opts) {
  const Stage *stage = trace.final_stage();
  if (!stage || !stage->point) fail(ErrorCode::InvalidArgument, "trace has no converged stage");
  if (stage->eps > opts.max_final_eps)
    fail(ErrorCode::InvalidArgument, "final stage eps = " + fmt(stage->eps) + " is above " + fmt(opts.max_final_eps));
  const DiscreteLoop &loop = stage->point->loop;
  const int big_n = loop.size();
  const double root_eps = std::sqrt(stage->eps);
  const double n2 = static_cast<double>(big_n) * big_n / (loop.tau * loop.tau);

  std::vector<double> dist(static_cast<std::size_t>(big_n));
  std::vector<double> accel(static_cast<std::size_t>(big_n));
  for (int i = 0; i < big_n; ++i) {
    dist[static_cast<std::size_t>(i)] = -domain.signed_dist(loop.points.col(i));
    accel[static_cast<std::size_t>(i)] =
        (loop.points.col(wrap(i + 1, big_n)) - 2.0 * loop.points.col(i) + loop.points.col(wrap(i - 1, big_n))).norm() *
        n2;
  }
  std::vector<double> sorted = accel;
  std::nth_element(sorted.begin(), sorted.begin() + big_n / 2, sorted.end());
  const double median = sorted[static_cast<std::size_t>(big_n / 2)];

  std::vector<char> flag(static_cast<std::size_t>(big_n));
  for (int i = 0; i < big_n; ++i)
    flag[static_cast<std::size_t>(i)] = dist[static_cast<std::size_t>(i)] < opts.bounce_dist_factor * root_eps &&
                                        accel[static_cast<std::size_t>(i)] > opts.curvature_factor * median;

  // Cyclic runs of flagged nodes; start the scan at an unflagged node.
  int origin = -1;
  for (int i = 0; i < big_n && origin < 0; ++i)
    if (!flag[static_cast<std::size_t>(i)]) origin = i;
  if (origin < 0) fail(ErrorCode::NoBouncesFound, "every node is in a bounce window");
  std::vector<std::pair<int, int>> windows; // [first, last] in unwrapped indices
  for (int j = 0; j < big_n; ++j) {
    int i = origin + j;
    if (!flag[static_cast<std::size_t>(wrap(i, big_n))]) continue;
    if (!windows.empty() && windows.back().second == i - 1)
      windows.back().second = i;
    else
      windows.emplace_back(i, i);
  }
  if (windows.empty())
    fail(ErrorCode::NoBouncesFound, "no node comes within " + fmt(opts.bounce_dist_factor) + " sqrt(eps) of the boundary");

  const int k = static_cast<int>(windows.size());
  // Straight pieces between windows, fitted on their middle halves.
  struct Line {
    Vec point;
    Vec dir;
  };
  std::vector<Line> lines(static_cast<std::size_t>(k)); // line i runs from window i to window i+1
  for (int w = 0; w < k; ++w) {
    int a = windows[static_cast<std::size_t>(w)].second + 1;
    int b = windows[static_cast<std::size_t>((w + 1) % k)].first - 1;
    if (w + 1 == k) b += big_n;
    int len = b - a + 1;
    int lo = a + len / 4;
    int hi = std::max(lo + 1, b - len / 4);
    Vec mean = Vec::Zero(domain.dim());
    for (int i = lo; i <= hi; ++i) mean += loop.points.col(wrap(i, big_n));
    mean /= static_cast<double>(hi - lo + 1);
    Vec dir = loop.points.col(wrap(hi, big_n)) - loop.points.col(wrap(lo, big_n));
    if (dir.norm() == 0) dir = loop.points.col(wrap(b, big_n)) - loop.points.col(wrap(a, big_n));
    lines[static_cast<std::size_t>(w)] = {mean, dir.normalized()};
  }

  std::vector<Vec> bounces;
  for (int w = 0; w < k; ++w) {
    const auto [first, last] = windows[static_cast<std::size_t>(w)];
    int closest = first;
    for (int i = first; i <= last; ++i)
      if (dist[static_cast<std::size_t>(wrap(i, big_n))] < dist[static_cast<std::size_t>(wrap(closest, big_n))])
        closest = i;
    Vec guess = loop.points.col(wrap(closest, big_n));
    // Where the incoming and outgoing lines meet; near head-on bounces they are
    // almost collinear and the turning node is the better estimate.
    const Line &in = lines[static_cast<std::size_t>(wrap(w - 1, k))];
    const Line &out = lines[static_cast<std::size_t>(w)];
    const double c = in.dir.dot(out.dir);
    if (k > 1 && 1.0 - c * c > 1e-6) {
      Vec r = out.point - in.point;
      double bb = in.dir.dot(r);
      double dd = out.dir.dot(r);
      double s = (bb - c * dd) / (1.0 - c * c);
      double t = (c * bb - dd) / (1.0 - c * c);
      Vec meet = 0.5 * (in.point + s * in.dir + out.point + t * out.dir);
      if (meet.allFinite() && (meet - guess).norm() < 10.0 * opts.bounce_dist_factor * root_eps) guess = meet;
    }
    bounces.push_back(domain.distance(guess).nearest);
  }

  BilliardTrajectory traj = make_trajectory(domain, bounces);
  traj.eps = stage->eps;
  traj.tau = loop.tau;

  const double zone = opts.speed_zone_factor * root_eps;
  std::vector<double> speeds = edge_speeds(loop);
  for (int i = 0; i < big_n; ++i) {
    if (dist[static_cast<std::size_t>(i)] < zone || dist[static_cast<std::size_t>(wrap(i + 1, big_n))] < zone) continue;
    traj.max_speed_error = std::max(traj.max_speed_error, std::abs(speeds[static_cast<std::size_t>(i)] - 1.0));
  }
  if (traj.max_speed_error > opts.speed_tol)
    fail(ErrorCode::SpeedNotUnit, "segment speed deviates from 1 by " + fmt(traj.max_speed_error));
  return traj;
}

BoundsReport verify_bounds(const BilliardTrajectory &traj, const Domain &domain) {
  BoundsReport r;
  r.bounce_count = traj.bounce_count;
  r.total_length = traj.total_length;
  r.inradius = domain.inradius_estimate();
  r.ratio = traj.total_length / r.inradius;
  r.bounce_limit = domain.dim() + 1;
  r.bounce_ok = traj.bounce_count >= 1 && traj.bounce_count <= r.bounce_limit;
  r.convex = domain.is_convex();
  r.ratio_floor_ok = !r.convex || r.ratio >= 4.0 - 0.01;
  for (const auto &res : traj.reflection_residuals)
    r.max_reflection_residual = std::max({r.max_reflection_residual, res.normal_flip_err, res.tangential_err, res.speed_err});
  return r;
}

double tau_stability_constant(const ContinuationTrace &trace, double limit) {
  double worst = 0.0;
  int seen = 0;
  for (auto it = trace.stages.rbegin(); it != trace.stages.rend() && seen < 3; ++it) {
    if (it->status != StageStatus::Converged) continue;
    worst = std::max(worst, std::abs(it->tau - limit) / std::sqrt(it->eps));
    ++seen;
  }
  return worst;
}

bool segments_inside(const BilliardTrajectory &traj, const Domain &domain, double tol) {
  const int k = static_cast<int>(traj.bounce_points.size());
  for (int i = 0; i < k; ++i) {
    const Vec &a = traj.bounce_points[static_cast<std::size_t>(i)].point;
    const Vec &b = traj.bounce_points[static_cast<std::size_t>(wrap(i + 1, k))].point;
    for (int s = 0; s < 64; ++s) {
      Vec p = a + (b - a) * ((s + 0.5) / 64.0);
      if (domain.signed_dist(p) > tol) return false;
    }
  }
  return true;
}

} // namespace shortorbit
