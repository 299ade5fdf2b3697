#pragma once

#include "shortorbit/billiard.hpp"
#include "shortorbit/rng.hpp"

#include <string>
#include <vector>

namespace fixtures {

using namespace shortorbit;

inline Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

inline DomainSpec disk(double r = 1.0) { return {2, Ball{v2(0, 0), r}}; }
inline DomainSpec ball3(double r = 1.0) { return {3, Ball{v3(0, 0, 0), r}}; }
inline DomainSpec ellipse() { return {2, Ellipsoid{v2(0, 0), v2(2, 1)}}; }
inline DomainSpec box() { return {2, SmoothedBox{v2(0, 0), v2(2, 1), 0.2}}; }
inline DomainSpec dumbbell() {
  Dumbbell db;
  db.centers = {v2(-2.5, 0), v2(2.5, 0)};
  db.radii = {1.0, 1.0};
  db.neck_half_width = 0.2;
  db.blend = 0.05;
  return {2, db};
}
inline DomainSpec metaballs() {
  MetaballUnion mu;
  mu.balls = {{v2(-0.6, 0), 1.0, 0.0}, {v2(0.6, 0), 1.0, 0.1}};
  return {2, mu};
}
inline DomainSpec ellipsoid3() { return {3, Ellipsoid{v3(0, 0, 0), v3(1.5, 1.0, 0.8)}}; }

struct Named {
  std::string name;
  DomainSpec spec;
};

/// The four domains the property suites sweep over.
inline std::vector<Named> suite() {
  return {{"disk", disk()}, {"ellipse", ellipse()}, {"box", box()}, {"dumbbell", dumbbell()}};
}

/// Random interior point with interior distance in [lo, hi], by rejection.
inline Vec interior_point(const Domain &d, Rng &rng, double lo, double hi) {
  BoundingBox b = d.bounding_box();
  const int n = d.dim();
  for (;;) {
    Vec q(n);
    for (int i = 0; i < n; ++i) q[i] = rng.uniform(b.lo[i], b.hi[i]);
    double dist = -d.signed_dist(q);
    if (dist >= lo && dist <= hi) return q;
  }
}

/// Smooth random loop inside the domain: a few Fourier modes around a random interior point,
/// scaled down until every node sits deeper than `margin`.
inline DiscreteLoop random_loop(const Domain &d, Rng &rng, int n_nodes, double margin) {
  const int n = d.dim();
  for (;;) {
    Vec c = interior_point(d, rng, 2.0 * margin, 1e9);
    Eigen::MatrixXd coef(n, 6);
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < 6; ++m) coef(i, m) = rng.normal() / (1.0 + m);
    for (double amp = 0.5 * d.inradius_estimate(); amp > 1e-3; amp *= 0.5) {
      DiscreteLoop loop;
      loop.points.resize(n, n_nodes);
      for (int k = 0; k < n_nodes; ++k) {
        double t = 2.0 * 3.141592653589793 * k / n_nodes;
        Vec p = c;
        for (int m = 0; m < 3; ++m)
          p += amp * (coef.col(2 * m) * std::cos((m + 1) * t) + coef.col(2 * m + 1) * std::sin((m + 1) * t));
        loop.points.col(k) = p;
      }
      loop.tau = rng.uniform(1.0, 5.0);
      bool ok = true;
      for (int k = 0; k < n_nodes && ok; ++k) ok = -d.signed_dist(loop.points.col(k)) > margin;
      if (ok) return loop;
    }
  }
}

} // namespace fixtures
