#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fixtures;

namespace {

Vec unit_random(Rng &rng, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v / v.norm();
}

// Conserved quantity of the ellipse billiard, expanded by hand: with foci (+-c, 0),
// ((p - F1) x u)((p - F2) x u) = (p x u)^2 - c^2 u_y^2.
double focal_product(double a, double b, const Vec &p, const Vec &u) {
  const double c2 = a * a - b * b;
  const double cross = p[0] * u[1] - p[1] * u[0];
  return cross * cross - c2 * u[1] * u[1];
}

} // namespace

TEST_CASE("reflect examples") {
  CHECK((reflect(v2(0, 1), v2(0, 1)) - v2(0, -1)).norm() == 0.0);
  const double s = 1.0 / std::sqrt(2.0);
  CHECK((reflect(v2(s, s), v2(0, 1)) - v2(s, -s)).norm() <= 1e-16);
  BoundaryPoint top{v2(0, 1), v2(0, 1)};
  CHECK((reflect(top, v2(s, s)) - v2(s, -s)).norm() <= 1e-16);
  try {
    static_cast<void>(reflect(top, v2(1, 1e-12)));
    FAIL("expected TangentialIncidence");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::TangentialIncidence);
  }
  CHECK_THROWS_AS(static_cast<void>(reflect(top, v2(0, -1))), Error);
}

TEST_CASE("random reflections conserve speed and the tangential part") {
  Rng rng(99);
  double worst_speed = 0.0, worst_tan = 0.0, worst_flip = 0.0, worst_inv = 0.0;
  for (int k = 0; k < 1000000; ++k) {
    const int n = (k % 2 == 0) ? 2 : 3;
    Vec nu = unit_random(rng, n);
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    Vec w = reflect(v, nu);
    const double vn = v.dot(nu), wn = w.dot(nu);
    worst_speed = std::max(worst_speed, std::abs(w.norm() - v.norm()) / v.norm());
    worst_tan = std::max(worst_tan, ((w - wn * nu) - (v - vn * nu)).norm() / v.norm());
    worst_flip = std::max(worst_flip, std::abs(wn + vn) / v.norm());
    worst_inv = std::max(worst_inv, (reflect(w, nu) - v).norm() / v.norm());
  }
  CHECK(worst_speed <= 1e-14);
  CHECK(worst_tan <= 1e-14);
  CHECK(worst_flip <= 1e-14);
  CHECK(worst_inv <= 1e-14);
}

TEST_CASE("shoot along closed-form orbits") {
  SUBCASE("disk diameter") {
    Domain d = Domain::build(disk());
    Shot s = shoot(d, v2(0, 0), v2(1, 0), 3);
    REQUIRE(s.bounces.size() == 3);
    CHECK((s.bounces[0].point - v2(1, 0)).norm() < 1e-10);
    CHECK((s.bounces[1].point - v2(-1, 0)).norm() < 1e-10);
    CHECK((s.bounces[2].point - s.bounces[0].point).norm() < 1e-10);
    const double period = (s.bounces[1].point - s.bounces[0].point).norm() +
                          (s.bounces[2].point - s.bounces[1].point).norm();
    CHECK(period == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(s.length == doctest::Approx(5.0).epsilon(1e-10));
    CHECK(s.polyline.size() == 4);
  }
  SUBCASE("ellipse minor axis") {
    Domain d = Domain::build(ellipse());
    Shot s = shoot(d, v2(0, 0), v2(0, 1), 2);
    REQUIRE(s.bounces.size() == 2);
    CHECK((s.bounces[0].point - v2(0, 1)).norm() < 1e-10);
    CHECK((s.bounces[1].point - v2(0, -1)).norm() < 1e-10);
    // The refiner leaves the axis pair in place.
    RefineResult r = refine_polygon(d, {{s.bounces[0].point, s.bounces[1].point}});
    CHECK((r.polygon.vertices[0] - s.bounces[0].point).norm() <= 1e-8);
    CHECK(r.length == doctest::Approx(4.0).epsilon(1e-10));
  }
  SUBCASE("errors") {
    Domain d = Domain::build(disk());
    try {
      static_cast<void>(shoot(d, v2(1.5, 0), v2(1, 0), 2));
      FAIL("expected PointOutsideDomain");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::PointOutsideDomain);
    }
    // A ray running along the straight neck of the dumbbell touches the wall tangentially.
    Domain db = Domain::build(dumbbell());
    try {
      static_cast<void>(shoot(db, v2(-2.5, 0.2), v2(1, 0), 2));
      FAIL("expected TangentialIncidence");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::TangentialIncidence);
    }
  }
}

TEST_CASE("ellipse billiard keeps its focal invariant") {
  Domain d = Domain::build(ellipse());
  const Ellipsoid &e = std::get<Ellipsoid>(d.spec().shape);
  for (const Vec &dir : {v2(0.3, 0.7), v2(-0.9, 0.2), v2(0.05, 1.0)}) {
    Vec u0 = dir / dir.norm();
    Shot s = shoot(d, v2(0.3, 0.2), u0, 1000);
    REQUIRE(s.bounces.size() == 1000);
    const double first = focal_product(2, 1, s.bounces[0].point, s.directions[1]);
    CHECK(confocal_invariant(e, s.bounces[0].point, s.directions[1]) ==
          doctest::Approx(first).epsilon(1e-12).scale(1.0));
    double drift_100 = 0.0, drift = 0.0, speed = 0.0;
    for (std::size_t i = 0; i < s.bounces.size(); ++i) {
      const double dev = std::abs(focal_product(2, 1, s.bounces[i].point, s.directions[i + 1]) - first);
      if (i < 100) drift_100 = std::max(drift_100, dev);
      drift = std::max(drift, dev);
      speed = std::max(speed, std::abs(s.directions[i + 1].norm() - 1.0));
    }
    CHECK(drift_100 <= 1e-6);
    CHECK(drift <= 1e-6);
    CHECK(speed <= 1e-12);
  }
}

TEST_CASE("refine: closed-form orbits") {
  SUBCASE("diameters of balls") {
    for (double r : {1.0, 2.5}) {
      Domain d = Domain::build(disk(r));
      RefineResult res = refine_polygon(d, {{v2(0.999 * r, 0.03 * r), v2(-r, -0.01 * r)}});
      CHECK(res.length == doctest::Approx(4.0 * r).epsilon(1e-10));
      CHECK(res.grad_norm <= 1e-10 * res.length);
    }
    Domain b = Domain::build(ball3());
    RefineResult res = refine_polygon(b, {{v3(0.98, 0.1, 0.05), v3(-0.97, 0.05, -0.1)}});
    CHECK(res.length == doctest::Approx(4.0).epsilon(1e-10));
  }
  SUBCASE("ellipse minor axis, with a finite-difference length gradient at the axis") {
    Domain d = Domain::build(ellipse());
    RefineResult res = refine_polygon(d, {{v2(0.1, 0.99), v2(-0.05, -0.99)}});
    CHECK(res.length == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(std::abs(res.polygon.vertices[0][0]) <= 1e-8);
    // Length of the 2-gon through (2 cos s, sin s) and (2 cos t, sin t), differentiated numerically.
    auto len = [](double s, double t) {
      return 2.0 * std::hypot(2 * std::cos(s) - 2 * std::cos(t), std::sin(s) - std::sin(t));
    };
    const double h = 1e-6, s = std::numbers::pi / 2, t = -std::numbers::pi / 2;
    CHECK(std::abs((len(s + h, t) - len(s - h, t)) / (2 * h)) <= 1e-8);
    CHECK(std::abs((len(s, t + h) - len(s, t - h)) / (2 * h)) <= 1e-8);
  }
  SUBCASE("equilateral triangle in the disk") {
    for (double r : {1.0, 2.0}) {
      Domain d = Domain::build(disk(r));
      RefineResult res = refine_polygon(d, {{v2(r, 0.1), v2(-0.4 * r, 0.9 * r), v2(-0.6 * r, -0.7 * r)}});
      CHECK(res.length == doctest::Approx(3.0 * std::sqrt(3.0) * r).epsilon(1e-10));
      CHECK(res.max_bisector_err <= 1e-9);
      for (const auto &rr : res.residuals) {
        CHECK(rr.normal_flip_err <= 1e-9);
        CHECK(rr.tangential_err <= 1e-9);
        CHECK(rr.speed_err <= 1e-9);
      }
    }
  }
  SUBCASE("smoothed box and dumbbell, reflection law at the fixed point") {
    for (const auto &[name, spec] : suite()) {
      CAPTURE(name);
      Domain d = Domain::build(spec);
      Vec w = d.inradius_witness();
      const double r = d.inradius_estimate();
      RefineResult res = refine_polygon(d, {{w + v2(0.05, 0.9 * r), w + v2(-0.05, -0.9 * r)}});
      CHECK(res.max_bisector_err <= 1e-9);
      CHECK(res.grad_norm <= 1e-10 * res.length);
      CHECK(res.length == doctest::Approx(4.0 * r).epsilon(1e-6));
    }
  }
  SUBCASE("collapsed edge") {
    Domain d = Domain::build(disk());
    try {
      static_cast<void>(refine_polygon(d, {{v2(1, 0), v2(1, 0), v2(-1, 0)}}));
      FAIL("expected CollapsedEdge");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::CollapsedEdge);
    }
  }
}

TEST_CASE("crosscheck of built trajectories") {
  Domain d = Domain::build(disk());
  const double a = std::numbers::pi + 1e-4;
  Crosscheck near = crosscheck(make_trajectory(d, {v2(1, 0), v2(std::cos(a), std::sin(a))}), d);
  CHECK(near.pass);
  CHECK(near.refined_length == doctest::Approx(4.0).epsilon(1e-10));
  CHECK(near.displacement <= 1e-4);
  const double b = std::numbers::pi + 0.3;
  Crosscheck far = crosscheck(make_trajectory(d, {v2(1, 0), v2(std::cos(b), std::sin(b))}), d);
  CHECK_FALSE(far.pass);
  CHECK(far.displacement > 1e-3 * 4.0);
}

TEST_CASE("orbit catalog") {
  Domain d = Domain::build(disk());
  std::vector<RefineResult> cat = orbit_catalog(d);
  bool has2 = false, has3 = false;
  for (const auto &r : cat) {
    CHECK(r.polygon.k() >= 2);
    CHECK(r.polygon.k() <= 3);
    CHECK(r.max_bisector_err <= 1e-9);
    if (r.polygon.k() == 2) has2 = std::abs(r.length - 4.0) <= 1e-10;
    if (r.polygon.k() == 3) has3 = std::abs(r.length - 3.0 * std::sqrt(3.0)) <= 1e-10;
  }
  CHECK(has2);
  CHECK(has3);
  Domain b = Domain::build(ball3());
  for (const auto &r : orbit_catalog(b)) {
    CHECK(r.polygon.k() <= 4);
    CHECK(r.max_bisector_err <= 1e-9);
  }
}
