#include "shortorbit/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace shortorbit::io {

namespace {

[[noreturn]] void schema_fail(const std::string &what) { fail(ErrorCode::SchemaError, what); }

void only_keys(const json &j, const char *where, std::initializer_list<const char *> allowed) {
  if (!j.is_object()) schema_fail(std::string(where) + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto &[key, value] : j.items())
    if (!ok.count(key)) schema_fail(std::string(where) + ": unknown field '" + key + "'");
}

const json &field(const json &j, const char *key, const char *where) {
  auto it = j.find(key);
  if (it == j.end()) schema_fail(std::string(where) + ": missing field '" + key + "'");
  return *it;
}

double number(const json &j, const char *what) {
  if (!j.is_number()) schema_fail(std::string(what) + " must be a number");
  return j.get<double>();
}

int integer(const json &j, const char *what) {
  if (!j.is_number_integer()) schema_fail(std::string(what) + " must be an integer");
  return j.get<int>();
}

double num_field(const json &j, const char *key, const char *where) { return number(field(j, key, where), key); }

Vec vec_field(const json &j, const char *key, int dim, const char *where) {
  return vec_from_json(field(j, key, where), dim, key);
}

json residuals_json(const std::vector<ReflectionResidual> &rs) {
  json out = json::array();
  for (const auto &r : rs) out.push_back(to_json(r));
  return out;
}

} // namespace

json vec_json(const Vec &v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vec vec_from_json(const json &j, int dim, const char *what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    schema_fail(std::string(what) + " must be an array of " + std::to_string(dim) + " numbers");
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = number(j[static_cast<std::size_t>(i)], what);
  return v;
}

DomainSpec domain_spec_from_json(const json &j) {
  only_keys(j, "domain", {"dim", "shape", "params"});
  DomainSpec spec;
  spec.dim = integer(field(j, "dim", "domain"), "dim");
  if (spec.dim < 1 || spec.dim > kMaxDim) schema_fail("dim must be in [1, " + std::to_string(kMaxDim) + "]");
  const json &shape = field(j, "shape", "domain");
  if (!shape.is_string()) schema_fail("shape must be a string");
  const std::string name = shape.get<std::string>();
  const json &p = field(j, "params", "domain");
  const int n = spec.dim;
  if (name == "ball") {
    only_keys(p, "ball params", {"center", "radius"});
    spec.shape = Ball{vec_field(p, "center", n, "ball"), num_field(p, "radius", "ball")};
  } else if (name == "ellipsoid") {
    only_keys(p, "ellipsoid params", {"center", "semi_axes"});
    spec.shape = Ellipsoid{vec_field(p, "center", n, "ellipsoid"), vec_field(p, "semi_axes", n, "ellipsoid")};
  } else if (name == "smoothed_box") {
    only_keys(p, "smoothed_box params", {"center", "half_widths", "corner_radius"});
    spec.shape = SmoothedBox{vec_field(p, "center", n, "smoothed_box"), vec_field(p, "half_widths", n, "smoothed_box"),
                             num_field(p, "corner_radius", "smoothed_box")};
  } else if (name == "metaball_union") {
    only_keys(p, "metaball_union params", {"balls"});
    const json &balls = field(p, "balls", "metaball_union");
    if (!balls.is_array() || balls.empty()) schema_fail("balls must be a nonempty array");
    MetaballUnion mu;
    for (const auto &b : balls) {
      only_keys(b, "metaball", {"center", "radius", "blend"});
      mu.balls.push_back({vec_field(b, "center", n, "metaball"), num_field(b, "radius", "metaball"),
                          num_field(b, "blend", "metaball")});
    }
    spec.shape = mu;
  } else if (name == "dumbbell") {
    only_keys(p, "dumbbell params", {"centers", "radii", "neck_half_width", "blend"});
    const json &centers = field(p, "centers", "dumbbell");
    const json &radii = field(p, "radii", "dumbbell");
    if (!centers.is_array() || centers.size() != 2) schema_fail("centers must hold two points");
    if (!radii.is_array() || radii.size() != 2) schema_fail("radii must hold two numbers");
    Dumbbell db;
    for (std::size_t i = 0; i < 2; ++i) {
      db.centers[i] = vec_from_json(centers[i], n, "centers");
      db.radii[i] = number(radii[i], "radii");
    }
    db.neck_half_width = num_field(p, "neck_half_width", "dumbbell");
    db.blend = num_field(p, "blend", "dumbbell");
    spec.shape = db;
  } else {
    schema_fail("unknown shape '" + name + "'");
  }
  return spec;
}

json to_json(const DomainSpec &spec) {
  json j;
  j["dim"] = spec.dim;
  std::visit(
      [&](const auto &s) {
        using T = std::decay_t<decltype(s)>;
        json p;
        if constexpr (std::is_same_v<T, Ball>) {
          j["shape"] = "ball";
          p["center"] = vec_json(s.center);
          p["radius"] = s.radius;
        } else if constexpr (std::is_same_v<T, Ellipsoid>) {
          j["shape"] = "ellipsoid";
          p["center"] = vec_json(s.center);
          p["semi_axes"] = vec_json(s.semi_axes);
        } else if constexpr (std::is_same_v<T, SmoothedBox>) {
          j["shape"] = "smoothed_box";
          p["center"] = vec_json(s.center);
          p["half_widths"] = vec_json(s.half_widths);
          p["corner_radius"] = s.corner_radius;
        } else if constexpr (std::is_same_v<T, MetaballUnion>) {
          j["shape"] = "metaball_union";
          p["balls"] = json::array();
          for (const auto &b : s.balls)
            p["balls"].push_back({{"center", vec_json(b.center)}, {"radius", b.radius}, {"blend", b.blend}});
        } else {
          j["shape"] = "dumbbell";
          p["centers"] = {vec_json(s.centers[0]), vec_json(s.centers[1])};
          p["radii"] = {s.radii[0], s.radii[1]};
          p["neck_half_width"] = s.neck_half_width;
          p["blend"] = s.blend;
        }
        j["params"] = p;
      },
      spec.shape);
  return j;
}

json read_json(const std::filesystem::path &file) {
  std::ifstream in(file);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    schema_fail(file.string() + ": " + e.what());
  }
}

DomainSpec read_domain_spec(const std::filesystem::path &file) { return domain_spec_from_json(read_json(file)); }

void write_text(const std::filesystem::path &file, const std::string &text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(ErrorCode::InvalidArgument, "cannot write " + file.string());
  out << text;
}

void write_json(const std::filesystem::path &file, const json &j) { write_text(file, j.dump(2) + "\n"); }

RunConfig read_run_config(const std::filesystem::path &file) {
  const json j = read_json(file);
  only_keys(j, "config",
            {"domain", "output_dir", "rng_seed", "d0", "N", "eps_start", "eps_ratio", "eps_end", "seeds", "jobs",
             "grid_density", "energy", "bounce_dist_factor", "speed_tol", "residual_tol", "start", "dir",
             "max_bounces", "trajectory"});
  const std::filesystem::path base = file.parent_path();
  auto path_of = [&](const char *key) {
    const json &v = j.at(key);
    if (!v.is_string()) schema_fail(std::string(key) + " must be a string");
    std::filesystem::path p = v.get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  RunConfig cfg;
  if (j.contains("domain")) cfg.domain_file = path_of("domain");
  if (j.contains("output_dir")) cfg.output_dir = path_of("output_dir");
  if (j.contains("trajectory")) cfg.trajectory_file = path_of("trajectory");
  if (j.contains("rng_seed")) {
    if (!j["rng_seed"].is_number_unsigned()) schema_fail("rng_seed must be a nonnegative integer");
    cfg.rng_seed = j["rng_seed"].get<std::uint64_t>();
  }
  if (j.contains("d0")) cfg.d0 = number(j["d0"], "d0");
  if (j.contains("N")) cfg.nodes = integer(j["N"], "N");
  if (j.contains("eps_start")) cfg.schedule.eps_start = number(j["eps_start"], "eps_start");
  if (j.contains("eps_ratio")) cfg.schedule.ratio = number(j["eps_ratio"], "eps_ratio");
  if (j.contains("eps_end")) cfg.schedule.eps_end = number(j["eps_end"], "eps_end");
  if (j.contains("seeds")) cfg.seeds = integer(j["seeds"], "seeds");
  if (j.contains("jobs")) cfg.jobs = integer(j["jobs"], "jobs");
  if (j.contains("grid_density")) cfg.grid_density = number(j["grid_density"], "grid_density");
  if (j.contains("energy")) cfg.energy = number(j["energy"], "energy");
  if (j.contains("bounce_dist_factor")) cfg.extract.bounce_dist_factor = number(j["bounce_dist_factor"], "bounce_dist_factor");
  if (j.contains("speed_tol")) cfg.extract.speed_tol = number(j["speed_tol"], "speed_tol");
  if (j.contains("residual_tol")) cfg.residual_tol = number(j["residual_tol"], "residual_tol");
  if (j.contains("max_bounces")) cfg.max_bounces = integer(j["max_bounces"], "max_bounces");
  // start/dir dimensions are checked against the domain later.
  auto free_vec = [&](const char *key) {
    const json &v = j.at(key);
    if (!v.is_array() || v.empty() || v.size() > static_cast<std::size_t>(kMaxDim))
      schema_fail(std::string(key) + " must be a short array of numbers");
    return vec_from_json(v, static_cast<int>(v.size()), key);
  };
  if (j.contains("start")) cfg.start = free_vec("start");
  if (j.contains("dir")) cfg.dir = free_vec("dir");
  return cfg;
}

void validate(const RunConfig &cfg, const std::string &command) {
  auto bad = [](const std::string &what) { fail(ErrorCode::InvalidArgument, what); };
  if (cfg.domain_file.empty()) bad("no domain file given");
  if (!std::filesystem::exists(cfg.domain_file)) bad("domain file " + cfg.domain_file.string() + " does not exist");
  if (cfg.d0 && !(*cfg.d0 > 0.0 && *cfg.d0 < 0.5)) bad("d0 must lie in (0, 1/2)");
  if (cfg.nodes != 0 && cfg.nodes < 16) bad("N must be at least 16");
  if (!(cfg.schedule.eps_start > 0.0)) bad("eps-start must be positive");
  if (!(cfg.schedule.ratio > 0.0 && cfg.schedule.ratio < 1.0)) bad("eps-ratio must lie in (0, 1)");
  if (!(cfg.schedule.eps_end > 0.0 && cfg.schedule.eps_end <= cfg.schedule.eps_start))
    bad("eps-end must lie in (0, eps-start]");
  if (cfg.seeds < 1) bad("seeds must be at least 1");
  if (cfg.grid_density < 0.0) bad("grid-density must be positive");
  if (!(cfg.energy > 0.0)) bad("energy must be positive");
  if (command == "shoot") {
    if (!cfg.start || !cfg.dir) bad("shoot needs --start and --dir");
    if (cfg.max_bounces < 1) bad("max-bounces must be at least 1");
  }
  if (command == "verify") {
    if (cfg.trajectory_file.empty()) bad("verify needs --trajectory");
    if (!std::filesystem::exists(cfg.trajectory_file))
      bad("trajectory file " + cfg.trajectory_file.string() + " does not exist");
  }
}

json to_json(const BoundaryPoint &b) { return {{"point", vec_json(b.point)}, {"normal", vec_json(b.normal)}}; }

json to_json(const ReflectionResidual &r) {
  return {{"normal_flip_err", r.normal_flip_err}, {"tangential_err", r.tangential_err}, {"speed_err", r.speed_err}};
}

json to_json(const BilliardTrajectory &traj) {
  json j;
  j["dim"] = traj.bounce_points.empty() ? 0 : static_cast<int>(traj.bounce_points.front().point.size());
  j["closed"] = traj.closed;
  j["bounce_count"] = traj.bounce_count;
  j["total_length"] = traj.total_length;
  j["bounce_points"] = json::array();
  for (const auto &b : traj.bounce_points) j["bounce_points"].push_back(to_json(b));
  j["segment_lengths"] = traj.segment_lengths;
  j["reflection_residuals"] = residuals_json(traj.reflection_residuals);
  j["eps"] = traj.eps;
  j["tau"] = traj.tau;
  j["max_speed_error"] = traj.max_speed_error;
  return j;
}

std::vector<Vec> trajectory_points_from_json(const json &j, int dim) {
  only_keys(j, "trajectory",
            {"dim", "closed", "bounce_count", "total_length", "bounce_points", "segment_lengths",
             "reflection_residuals", "eps", "tau", "max_speed_error"});
  if (integer(field(j, "dim", "trajectory"), "dim") != dim) schema_fail("trajectory dimension does not match the domain");
  const json &bps = field(j, "bounce_points", "trajectory");
  if (!bps.is_array() || bps.size() < 2) schema_fail("bounce_points must hold at least two entries");
  std::vector<Vec> points;
  for (const auto &b : bps) {
    only_keys(b, "bounce point", {"point", "normal"});
    points.push_back(vec_field(b, "point", dim, "bounce point"));
  }
  return points;
}

json to_json(const Crosscheck &c) {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["pass"] = c.pass;
  j["displacement"] = finite_or_null(c.displacement);
  j["length_difference"] = finite_or_null(c.length_difference);
  j["refined_length"] = c.refined_length;
  j["refined_bounces"] = json::array();
  for (const Vec &v : c.refined.polygon.vertices) j["refined_bounces"].push_back(vec_json(v));
  j["refined_grad_norm"] = c.refined.grad_norm;
  return j;
}

json to_json(const BoundsReport &b) {
  return {{"bounce_count", b.bounce_count},
          {"bounce_limit", b.bounce_limit},
          {"bounce_ok", b.bounce_ok},
          {"total_length", b.total_length},
          {"inradius", b.inradius},
          {"ratio", b.ratio},
          {"convex", b.convex},
          {"ratio_floor_ok", b.ratio_floor_ok},
          {"max_reflection_residual", b.max_reflection_residual}};
}

json to_json(const RefineResult &r) {
  json j;
  j["k"] = r.polygon.k();
  j["vertices"] = json::array();
  for (const Vec &v : r.polygon.vertices) j["vertices"].push_back(vec_json(v));
  j["length"] = r.length;
  j["grad_norm"] = r.grad_norm;
  j["max_bisector_err"] = r.max_bisector_err;
  j["residuals"] = residuals_json(r.residuals);
  return j;
}

json orbit_catalog_json(const std::vector<RefineResult> &catalog) {
  json out = json::array();
  for (const auto &r : catalog) out.push_back(to_json(r));
  return out;
}

json to_json(const Shot &shot) {
  json j;
  j["dim"] = shot.polyline.empty() ? 0 : static_cast<int>(shot.polyline.front().size());
  j["length"] = shot.length;
  j["polyline"] = json::array();
  for (const Vec &p : shot.polyline) j["polyline"].push_back(vec_json(p));
  j["directions"] = json::array();
  for (const Vec &d : shot.directions) j["directions"].push_back(vec_json(d));
  j["bounces"] = json::array();
  for (const auto &b : shot.bounces) j["bounces"].push_back(to_json(b));
  return j;
}

json to_json(const ContinuationTrace &trace) {
  json j;
  j["seed_index"] = trace.seed_index;
  j["seed_kind"] = trace.seed_kind;
  j["completed"] = trace.completed;
  j["failure"] = trace.failure ? json(to_string(*trace.failure)) : json(nullptr);
  j["failure_message"] = trace.failure_message;
  j["tau_floor"] = trace.tau_floor;
  const Stage *last = trace.final_stage();
  j["final_kinetic_integral"] = last ? json(last->kinetic_integral) : json(nullptr);
  j["stages"] = json::array();
  double min_k = std::numeric_limits<double>::infinity();
  for (const Stage &s : trace.stages) {
    json st;
    st["eps"] = s.eps;
    st["status"] = to_string(s.status);
    st["message"] = s.message;
    if (s.point) {
      const CriticalPoint &cp = *s.point;
      min_k = std::min(min_k, s.kinetic_integral);
      st["tau"] = s.tau;
      st["kinetic_integral"] = s.kinetic_integral;
      st["n_nodes"] = s.n_nodes;
      st["refinements"] = s.refinements;
      st["el_residual"] = cp.el_residual;
      st["energy_stdev"] = cp.energy_stdev;
      st["energy_residual"] = cp.energy_residual;
      st["grad_norm"] = cp.grad_norm;
      st["morse_index"] = cp.morse_index_fixed_tau;
      st["newton_iterations"] = cp.iterations;
      st["tau_ceiling"] = 196.0 * min_k + 1.0;
    }
    j["stages"].push_back(st);
  }
  return j;
}

std::string trace_csv(const std::vector<ContinuationTrace> &branches) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "branch,seed_index,seed_kind,stage,eps,status,tau,kinetic_integral,n_nodes,morse_index\n";
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const auto &t = branches[b];
    for (std::size_t s = 0; s < t.stages.size(); ++s) {
      const Stage &st = t.stages[s];
      os << b << ',' << t.seed_index << ',' << t.seed_kind << ',' << s << ',' << st.eps << ',' << to_string(st.status)
         << ',';
      if (st.point)
        os << st.tau << ',' << st.kinetic_integral << ',' << st.n_nodes << ',' << st.point->morse_index_fixed_tau;
      else
        os << ",,,";
      os << '\n';
    }
  }
  return os.str();
}

std::string svg(const Domain &domain, const std::vector<std::vector<Vec>> &polylines, bool close_polylines) {
  if (domain.dim() != 2) fail(ErrorCode::InvalidArgument, "svg output is only available for planar domains");
  BoundingBox box = domain.bounding_box();
  const Vec pad = 0.05 * (box.hi - box.lo);
  const Vec lo = box.lo - pad;
  const Vec hi = box.hi + pad;
  const double width = 640.0;
  const double px = width / (hi[0] - lo[0]);
  const double height = px * (hi[1] - lo[1]);
  auto sx = [&](double x) { return (x - lo[0]) * px; };
  auto sy = [&](double y) { return (hi[1] - y) * px; };

  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
     << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Marching squares on signed_dist.
  const int cells = 240;
  const double hx = (hi[0] - lo[0]) / cells;
  const double hy = (hi[1] - lo[1]) / cells;
  std::vector<double> f(static_cast<std::size_t>((cells + 1) * (cells + 1)));
  auto at = [&](int i, int j) -> double & { return f[static_cast<std::size_t>(j * (cells + 1) + i)]; };
  for (int j = 0; j <= cells; ++j)
    for (int i = 0; i <= cells; ++i) {
      Vec q(2);
      q << lo[0] + i * hx, lo[1] + j * hy;
      at(i, j) = domain.signed_dist(q);
    }
  os << "<path fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" d=\"";
  for (int j = 0; j < cells; ++j)
    for (int i = 0; i < cells; ++i) {
      const double x0 = lo[0] + i * hx, y0 = lo[1] + j * hy;
      const double c[4] = {at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)};
      const double cx[4] = {x0, x0 + hx, x0 + hx, x0};
      const double cy[4] = {y0, y0, y0 + hy, y0 + hy};
      std::vector<std::pair<double, double>> cross;
      for (int e = 0; e < 4; ++e) {
        const int a = e, b = (e + 1) % 4;
        if ((c[a] < 0) != (c[b] < 0)) {
          const double t = c[a] / (c[a] - c[b]);
          cross.emplace_back(cx[a] + t * (cx[b] - cx[a]), cy[a] + t * (cy[b] - cy[a]));
        }
      }
      for (std::size_t k = 0; k + 1 < cross.size(); k += 2)
        os << 'M' << sx(cross[k].first) << ',' << sy(cross[k].second) << 'L' << sx(cross[k + 1].first) << ','
           << sy(cross[k + 1].second);
    }
  os << "\"/>\n";

  for (const auto &line : polylines) {
    if (line.empty()) continue;
    os << "<path fill=\"none\" stroke=\"crimson\" stroke-width=\"1.5\" d=\"";
    for (std::size_t i = 0; i < line.size(); ++i)
      os << (i == 0 ? 'M' : 'L') << sx(line[i][0]) << ',' << sy(line[i][1]);
    if (close_polylines) os << 'Z';
    os << "\"/>\n";
    for (const Vec &p : line)
      os << "<circle cx=\"" << sx(p[0]) << "\" cy=\"" << sy(p[1]) << "\" r=\"3\" fill=\"crimson\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

} // namespace shortorbit::io
