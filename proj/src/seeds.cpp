#include "shortorbit/seeds.hpp"

#include "shortorbit/rng.hpp"

#include <cmath>
#include <numbers>

namespace shortorbit {

namespace {

Vec random_unit(Rng &rng, int n) {
  Vec v(n);
  do {
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
  } while (v.norm() < 1e-6);
  return v.normalized();
}

Vec random_orthogonal(Rng &rng, const Vec &u) {
  const int n = static_cast<int>(u.size());
  if (n == 1) return Vec::Zero(1);
  while (true) {
    Vec v = random_unit(rng, n);
    v -= v.dot(u) * u;
    if (v.norm() > 1e-3) return v.normalized();
  }
}

} // namespace

DiscreteLoop sweep_loop(const Domain &domain, const Vec &center, const Vec &dir, double margin, int n_nodes,
                        double wobble, const Vec &side) {
  const double reach_fwd = domain.ray_hit(center, dir, 1e6);
  const double reach_back = domain.ray_hit(center, -dir, 1e6);
  const double fwd = reach_fwd > 2 * margin ? reach_fwd - margin : 0.5 * reach_fwd;
  const double back = reach_back > 2 * margin ? reach_back - margin : 0.5 * reach_back;
  const double half = fwd + back;
  const Vec start = center - back * dir;
  DiscreteLoop loop;
  loop.points.resize(domain.dim(), n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    double s = 2.0 * half * i / n_nodes;
    double along = s <= half ? s : 2.0 * half - s;
    Vec p = start + along * dir;
    if (wobble != 0.0) p += wobble * std::sin(2.0 * std::numbers::pi * i / n_nodes) * side;
    loop.points.col(i) = p;
  }
  loop.tau = 2.0 * half;
  return loop;
}

DiscreteLoop ellipse_loop(const Vec &center, const Vec &u, const Vec &v, double a, double b, int n_nodes) {
  DiscreteLoop loop;
  loop.points.resize(center.size(), n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    double t = 2.0 * std::numbers::pi * i / n_nodes;
    loop.points.col(i) = center + a * std::cos(t) * u + b * std::sin(t) * v;
  }
  // Ramanujan's perimeter approximation; speed only needs to be near 1.
  double h = (a - b) * (a - b) / ((a + b) * (a + b));
  loop.tau = std::numbers::pi * (a + b) * (1.0 + 3.0 * h / (10.0 + std::sqrt(4.0 - 3.0 * h)));
  return loop;
}

std::vector<Seed> make_seeds(const Domain &domain, const PenaltyConfig &cfg, double energy, int n_nodes, int count,
                             std::uint64_t rng_seed) {
  const int n = domain.dim();
  const Vec &w = domain.inradius_witness();
  const double r_in = domain.inradius_estimate();
  double margin = turning_distance(cfg, energy);
  if (!std::isfinite(margin))
    fail(ErrorCode::InvalidArgument, "energy is below eps * min U; no motion is possible at this eps");
  margin = std::max(margin, 1e-3 * r_in);

  std::vector<Seed> seeds;
  // Coordinate axes first: they keep the mirror symmetries of the test shapes. The
  // direction to the nearest boundary point follows when it is not already covered.
  std::vector<Vec> dirs;
  for (int k = 0; k < n; ++k) dirs.push_back(Vec::Unit(n, k));
  Vec nearest_dir = domain.distance(w).nearest - w;
  if (nearest_dir.norm() > 0) {
    nearest_dir.normalize();
    bool fresh = true;
    for (const auto &d : dirs) fresh = fresh && std::abs(d.dot(nearest_dir)) < 0.99;
    if (fresh) dirs.push_back(nearest_dir);
  }
  for (const auto &d : dirs) {
    if (static_cast<int>(seeds.size()) >= count) break;
    seeds.push_back({sweep_loop(domain, w, d, margin, n_nodes), "sweep"});
  }

  Rng rng(rng_seed);
  int attempts = 0;
  while (static_cast<int>(seeds.size()) < count && attempts++ < 100 * count) {
    Vec u = random_unit(rng, n);
    Vec v = random_orthogonal(rng, u);
    Seed s;
    if (seeds.size() % 2 == 0) {
      double wobble = 0.05 * r_in * rng.uniform(0.5, 1.0);
      s = {sweep_loop(domain, w, u, margin, n_nodes, wobble, v), "perturbed_sweep"};
    } else {
      double a = r_in * rng.uniform(0.3, 0.8);
      double b = a * rng.uniform(0.1, 1.0);
      s = {ellipse_loop(w, u, v, a, b, n_nodes), "ellipse"};
    }
    if (loop_inside(domain, s.loop)) seeds.push_back(std::move(s));
  }
  return seeds;
}

} // namespace shortorbit
