#include "shortorbit/cli.hpp"

#include <cmath>
#include <ostream>

namespace shortorbit::cli {

using io::json;

namespace {

Domain load_domain(const io::RunConfig &cfg) {
  DomainOptions opts;
  opts.grid_density = cfg.grid_density;
  return Domain::build(io::read_domain_spec(cfg.domain_file), opts);
}

double max_residual(const std::vector<ReflectionResidual> &rs) {
  double m = 0.0;
  for (const auto &r : rs) m = std::max({m, r.normal_flip_err, r.tangential_err, r.speed_err});
  return m;
}

json geometry_json(const Domain &domain, double d0, bool d0_override) {
  return {{"inradius", domain.inradius_estimate()},
          {"witness", io::vec_json(domain.inradius_witness())},
          {"collar_width", domain.collar_width()},
          {"reach", domain.reach()},
          {"curvature_reach", domain.curvature_reach()},
          {"convex", domain.is_convex()},
          {"d0", d0},
          {"d0_source", d0_override ? "override" : "reach_estimate"}};
}

template <class F> int guarded(std::ostream &log, F &&body) {
  try {
    return body();
  } catch (const Error &e) {
    log << "error: " << e.what() << '\n';
    return exit_code(e.code());
  }
}

} // namespace

int exit_code(ErrorCode code) {
  switch (code) {
  case ErrorCode::EmptyInterior: return EmptyInteriorExit;
  case ErrorCode::TangentialIncidence: return TangentialIncidenceExit;
  case ErrorCode::SchemaError: return SchemaErrorExit;
  case ErrorCode::StageDiverged:
  case ErrorCode::TauCollapse:
  case ErrorCode::TauBlowup:
  case ErrorCode::NoBouncesFound:
  case ErrorCode::SpeedNotUnit: return ContinuationFailed;
  default: return CheckFailed;
  }
}

int cmd_inradius(const io::RunConfig &cfg, std::ostream &log) {
  return guarded(log, [&] {
    io::validate(cfg, "inradius");
    Domain domain = load_domain(cfg);
    json j = {{"shape", domain.shape_name()},
              {"dim", domain.dim()},
              {"radius", domain.inradius_estimate()},
              {"witness", io::vec_json(domain.inradius_witness())},
              {"grid_density", cfg.grid_density}};
    io::write_json(cfg.output_dir / "inradius.json", j);
    log << "inradius " << domain.inradius_estimate() << " at " << domain.inradius_witness().transpose() << '\n';
    return int(Ok);
  });
}

int cmd_find(const io::RunConfig &cfg, std::ostream &log) {
  return guarded(log, [&] {
    io::validate(cfg, "find");
    Domain domain = load_domain(cfg);
    const int n = domain.dim();
    const double d0 = cfg.d0.value_or(domain.suggested_d0());

    MultistartOptions mo;
    mo.seeds = cfg.seeds;
    mo.rng_seed = cfg.rng_seed;
    mo.jobs = cfg.jobs;
    mo.continuation.energy = cfg.energy;
    mo.continuation.base_nodes = cfg.nodes;

    json report;
    report["domain"] = io::to_json(domain.spec());
    report["geometry"] = geometry_json(domain, d0, cfg.d0.has_value());
    report["d0"] = d0;
    report["schedule"] = {{"eps_start", cfg.schedule.eps_start},
                          {"ratio", cfg.schedule.ratio},
                          {"eps_end", cfg.schedule.eps_end},
                          {"values", cfg.schedule.values()}};
    report["energy"] = cfg.energy;
    report["seeds"] = cfg.seeds;
    report["rng_seed"] = cfg.rng_seed;
    report["bounce_dist_factor"] = cfg.extract.bounce_dist_factor;

    log << "domain " << domain.shape_name() << " n=" << n << " r=" << domain.inradius_estimate() << " d0=" << d0 << '\n';
    MultistartResult ms = run_multistart(domain, d0, cfg.schedule, mo);

    report["branches"] = json::array();
    for (const auto &b : ms.branches) report["branches"].push_back(io::to_json(b));
    io::write_text(cfg.output_dir / "trace.csv", io::trace_csv(ms.branches));

    // First completed branch, in kinetic-integral order, whose limit extracts cleanly.
    std::optional<BilliardTrajectory> traj;
    int chosen = -1;
    json extraction = json::array();
    for (std::size_t i = 0; i < ms.branches.size() && !traj; ++i) {
      if (!ms.branches[i].completed) continue;
      try {
        traj = extract_billiard(ms.branches[i], domain, cfg.extract);
        chosen = static_cast<int>(i);
      } catch (const Error &e) {
        extraction.push_back({{"branch", i}, {"error", to_string(e.code())}, {"message", e.what()}});
      }
    }
    report["extraction_failures"] = extraction;

    if (!traj) {
      report["status"] = "continuation_failed";
      report["best"] = nullptr;
      report["checks"] = json::object();
      report["pass"] = false;
      io::write_json(cfg.output_dir / "report.json", report);
      log << "no branch reached a billiard limit\n";
      return int(ContinuationFailed);
    }

    const ContinuationTrace &trace = ms.branches[static_cast<std::size_t>(chosen)];
    traj->reflection_residuals = reflection_check(*traj);
    BoundsReport bounds = verify_bounds(*traj, domain);
    Crosscheck cc = crosscheck(*traj, domain);
    const double stability = tau_stability_constant(trace, traj->total_length);
    const double tau_gap = std::abs(traj->tau - traj->total_length) / traj->total_length;
    const bool inside = segments_inside(*traj, domain);

    bool morse_ok = true;
    bool ceiling_ok = true;
    double min_k = std::numeric_limits<double>::infinity();
    double max_el = 0.0, max_sd = 0.0;
    for (const Stage &s : trace.stages) {
      if (!s.point) continue;
      min_k = std::min(min_k, s.kinetic_integral);
      morse_ok = morse_ok && s.point->morse_index_fixed_tau >= 0 && s.point->morse_index_fixed_tau <= n + 1;
      ceiling_ok = ceiling_ok && s.tau <= 196.0 * min_k + 1.0;
      max_el = std::max(max_el, s.point->el_residual);
      max_sd = std::max(max_sd, s.point->energy_stdev);
    }

    json best = io::to_json(*traj);
    best["branch"] = chosen;
    best["seed_index"] = trace.seed_index;
    best["length"] = traj->total_length;
    best["ratio"] = bounds.ratio;
    best["tau_length_rel_err"] = tau_gap;
    best["tau_stability_constant"] = stability;
    best["max_el_residual"] = max_el;
    best["max_energy_stdev"] = max_sd;
    best["bounds"] = io::to_json(bounds);
    best["crosscheck"] = io::to_json(cc);
    report["best"] = best;
    report["orbit_catalog"] = io::orbit_catalog_json(orbit_catalog(domain));

    json checks = {{"bounce_count", bounds.bounce_ok},
                   {"ratio_floor", bounds.ratio_floor_ok},
                   {"reflection_residuals", max_residual(traj->reflection_residuals) <= cfg.residual_tol},
                   {"crosscheck", cc.pass},
                   {"tau_length", tau_gap <= 0.01},
                   {"segments_inside", inside},
                   {"morse_index", morse_ok},
                   {"tau_ceiling", ceiling_ok}};
    bool pass = true;
    for (const auto &[name, ok] : checks.items()) pass = pass && ok.get<bool>();
    report["checks"] = checks;
    report["pass"] = pass;
    report["status"] = pass ? "ok" : "bounds_failed";

    io::write_json(cfg.output_dir / "report.json", report);
    io::write_json(cfg.output_dir / "trajectory.json", io::to_json(*traj));
    if (n == 2) {
      std::vector<Vec> poly;
      for (const auto &b : traj->bounce_points) poly.push_back(b.point);
      io::write_text(cfg.output_dir / "trajectory.svg", io::svg(domain, {poly}, true));
    }
    log << "length " << traj->total_length << " bounces " << traj->bounce_count << " ratio " << bounds.ratio
        << (pass ? " (all checks pass)" : " (checks failed)") << '\n';
    return int(pass ? Ok : CheckFailed);
  });
}

int cmd_shoot(const io::RunConfig &cfg, std::ostream &log) {
  return guarded(log, [&] {
    io::validate(cfg, "shoot");
    Domain domain = load_domain(cfg);
    if (cfg.start->size() != domain.dim() || cfg.dir->size() != domain.dim())
      fail(ErrorCode::InvalidArgument, "start and dir must have the domain's dimension");
    Shot shot = shoot(domain, *cfg.start, *cfg.dir, cfg.max_bounces);
    io::write_json(cfg.output_dir / "shot.json", io::to_json(shot));
    if (domain.dim() == 2) io::write_text(cfg.output_dir / "shot.svg", io::svg(domain, {shot.polyline}, false));
    log << shot.bounces.size() << " bounces, length " << shot.length << '\n';
    return int(Ok);
  });
}

int cmd_verify(const io::RunConfig &cfg, std::ostream &log) {
  return guarded(log, [&] {
    io::validate(cfg, "verify");
    Domain domain = load_domain(cfg);
    std::vector<Vec> points = io::trajectory_points_from_json(io::read_json(cfg.trajectory_file), domain.dim());
    BilliardTrajectory traj = make_trajectory(domain, points);

    json verdict;
    verdict["residual_tol"] = cfg.residual_tol;
    bool pass = false;
    try {
      traj.reflection_residuals = reflection_check(traj);
      double flip = 0, tang = 0, speed = 0;
      for (const auto &r : traj.reflection_residuals) {
        flip = std::max(flip, r.normal_flip_err);
        tang = std::max(tang, r.tangential_err);
        speed = std::max(speed, r.speed_err);
      }
      verdict["max_normal_flip_err"] = flip;
      verdict["max_tangential_err"] = tang;
      verdict["max_speed_err"] = speed;
      pass = std::max({flip, tang, speed}) <= cfg.residual_tol;
      verdict["error"] = nullptr;
    } catch (const Error &e) {
      verdict["error"] = e.what();
    }
    verdict["trajectory"] = io::to_json(traj);
    verdict["bounds"] = io::to_json(verify_bounds(traj, domain));
    verdict["crosscheck"] = io::to_json(crosscheck(traj, domain));
    verdict["pass"] = pass;
    io::write_json(cfg.output_dir / "verdict.json", verdict);
    log << (pass ? "pass" : "fail") << '\n';
    return int(pass ? Ok : CheckFailed);
  });
}

} // namespace shortorbit::cli
