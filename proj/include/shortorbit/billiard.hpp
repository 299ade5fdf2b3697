#pragma once

#include "shortorbit/continuation.hpp"

#include <vector>

namespace shortorbit {

/// Mirror image of v_in in the plane with unit normal nu: v_in - 2 <v_in, nu> nu.
Vec reflect(const Vec &v_in, const Vec &nu);

/// Reflection at a boundary point. v_in must point into the wall (<v_in, normal> > 0);
/// throws TangentialIncidence when |<v_in, normal>| <= 1e-9 |v_in|.
Vec reflect(const BoundaryPoint &at, const Vec &v_in);

struct Shot {
  std::vector<Vec> polyline;           ///< start, then every bounce point
  std::vector<BoundaryPoint> bounces;
  std::vector<Vec> directions;         ///< directions[i] leaves polyline[i]
  double length = 0.0;
};

/// Straight-line flow with specular reflection, sphere tracing between bounces.
/// Throws MarchStall, TangentialIncidence, PointOutsideDomain.
Shot shoot(const Domain &domain, const Vec &start, const Vec &dir, int max_bounces);

/// Closed polygon with vertices on the boundary. refine_polygon parametrizes each vertex
/// by tangent coordinates around its current position, re-anchored every step.
struct BouncePolygon {
  std::vector<Vec> vertices;

  [[nodiscard]] int k() const noexcept { return static_cast<int>(vertices.size()); }
  [[nodiscard]] double length() const;
};

struct RefineOptions {
  double grad_tol = 1e-10; ///< relative to the length
  int max_iters = 60;
  double pinv_tol = 1e-9;  ///< eigenvalues below this times the largest are dropped
};

struct RefineResult {
  BouncePolygon polygon;
  double length = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  std::vector<ReflectionResidual> residuals;
  double max_bisector_err = 0.0; ///< angle bisector vs normal, sine of the angle
};

/// Newton on the gradient of the length over boundary k-gons. Throws NoConvergence,
/// CollapsedEdge.
RefineResult refine_polygon(const Domain &domain, const BouncePolygon &seed, const RefineOptions &opts = {});

struct Crosscheck {
  double displacement = 0.0;      ///< max distance between matched bounce points
  double length_difference = 0.0;
  double refined_length = 0.0;
  bool pass = false;
  RefineResult refined;
};

/// Refines the bounce points of `traj` and compares; passes when both the displacement and
/// the length difference are within 1e-3 of the length.
Crosscheck crosscheck(const BilliardTrajectory &traj, const Domain &domain);

/// Product of the angular momenta of the line through p with direction u about the two
/// foci of a 2D ellipse; constant along any billiard trajectory in it.
double confocal_invariant(const Ellipsoid &ellipse, const Vec &p, const Vec &u);

/// Length-critical k-gons for k = 2 .. n+1 seeded around the inradius witness. Polygons
/// that fail to refine are left out; duplicates (same k and length to 1e-8) are dropped.
std::vector<RefineResult> orbit_catalog(const Domain &domain);

} // namespace shortorbit
