#pragma once

#include "shortorbit/types.hpp"

#include <array>
#include <memory>
#include <variant>
#include <vector>

namespace shortorbit {

// Shapes. All lengths share one abstract unit.

struct Ball {
  Vec center;
  double radius = 1.0;
};

struct Ellipsoid {
  Vec center;
  Vec semi_axes;
};

/// Box with all edges and corners rounded by `corner_radius` (exact SDF).
struct SmoothedBox {
  Vec center;
  Vec half_widths;
  double corner_radius = 0.0;
};

struct Metaball {
  Vec center;
  double radius = 1.0;
  double blend = 0.0; ///< smooth-min width used when this ball joins the union; ignored for the first
};

/// Union of balls joined left to right by log-sum-exp smooth minima.
struct MetaballUnion {
  std::vector<Metaball> balls;
};

/// Two balls joined by a capsule neck along the segment between their centers.
struct Dumbbell {
  std::array<Vec, 2> centers;
  std::array<double, 2> radii{1.0, 1.0};
  double neck_half_width = 0.2;
  double blend = 0.05;
};

using Shape = std::variant<Ball, Ellipsoid, SmoothedBox, MetaballUnion, Dumbbell>;

struct DomainSpec {
  int dim = 2;
  Shape shape;
};

struct BoundaryPoint {
  Vec point;
  Vec normal; ///< unit, outward
};

/// Signed distance together with the nearest boundary point it was measured to.
struct DistanceSample {
  double signed_dist = 0.0;
  Vec nearest;
  Vec normal; ///< outward unit normal at `nearest`; equals the gradient of signed_dist at q
};

struct BoundingBox {
  Vec lo;
  Vec hi;
};

struct InradiusResult {
  double radius = 0.0;
  Vec witness;
};

struct DomainOptions {
  double grid_density = 0.0;     ///< inradius grid; <= 0 picks ~40 samples across the shortest extent
  int boundary_samples = 100;    ///< samples used for the reach estimate
  double cloud_spacing = 0.0;    ///< composite shapes only; <= 0 picks a default from the feature sizes
};

namespace detail {
struct BoundaryCloud;
}

/// Immutable implicit domain with derived metric data (inradius, reach, collar, d0).
class Domain {
public:
  static Domain build(DomainSpec spec, const DomainOptions &opts = {});

  [[nodiscard]] int dim() const noexcept { return spec_.dim; }
  [[nodiscard]] const DomainSpec &spec() const noexcept { return spec_; }
  [[nodiscard]] const Shape &shape() const noexcept { return spec_.shape; }
  [[nodiscard]] bool is_convex() const noexcept;
  [[nodiscard]] const char *shape_name() const noexcept;

  /// Negative inside, positive outside; Euclidean distance to the boundary.
  [[nodiscard]] double signed_dist(const Vec &q) const;
  [[nodiscard]] DistanceSample distance(const Vec &q) const;
  [[nodiscard]] Vec gradient(const Vec &q) const { return distance(q).normal; }
  /// Hessian of signed_dist; analytic for balls, central differences of the gradient otherwise.
  [[nodiscard]] Mat hessian(const Vec &q) const;

  /// Cheap membership test (strict interior).
  [[nodiscard]] bool inside(const Vec &q) const;
  /// A value b with interior distance >= b for every interior q. Exact for analytic shapes.
  [[nodiscard]] double interior_dist_lower_bound(const Vec &q) const;

  /// Nearest boundary point. Valid inside the tube of the inner and outer reach (a superset
  /// of the collar); throws OutsideCollar beyond it.
  [[nodiscard]] BoundaryPoint boundary_project(const Vec &q) const;

  [[nodiscard]] BoundingBox bounding_box() const;
  [[nodiscard]] double inradius_estimate() const noexcept { return inradius_.radius; }
  [[nodiscard]] const Vec &inradius_witness() const noexcept { return inradius_.witness; }
  [[nodiscard]] double collar_width() const noexcept { return collar_width_; }
  /// Inner reach: the largest t such that every inward normal segment of length t is distance-minimizing.
  [[nodiscard]] double reach() const noexcept { return reach_; }
  [[nodiscard]] double curvature_reach() const noexcept { return curvature_reach_; }
  [[nodiscard]] double suggested_d0() const noexcept { return d0_; }
  /// Length scale used for finite-difference steps and tolerances.
  [[nodiscard]] double scale() const noexcept { return scale_; }

  /// Deterministic boundary samples (ray casts from the witness, or a strided cloud subsample).
  [[nodiscard]] std::vector<BoundaryPoint> boundary_samples(int count) const;
  /// First boundary crossing of the ray start + t dir, t > 0, refined to 1e-10. A ray running
  /// parallel to the wall within 1e-6 of it returns the first such contact. Throws MarchStall.
  [[nodiscard]] double ray_hit(const Vec &start, const Vec &dir, double t_max) const;

private:
  Domain() = default;
  void derive(const DomainOptions &opts);

  DomainSpec spec_;
  std::shared_ptr<const detail::BoundaryCloud> cloud_;
  InradiusResult inradius_;
  double collar_width_ = 0.0;
  double reach_ = 0.0;
  double outer_reach_ = 0.0;
  double curvature_reach_ = 0.0;
  double d0_ = 0.0;
  double scale_ = 1.0;

  friend InradiusResult inradius(const Domain &, double);
};

/// Largest inscribed ball: grid scan, three 4x refinements, then Nelder-Mead polish.
InradiusResult inradius(const Domain &domain, double grid_density);

/// Nearest point on the axis-aligned ellipsoid with the given semi-axes to y (coordinates relative to center).
Vec ellipsoid_nearest_point(const Vec &semi_axes, const Vec &y);

} // namespace shortorbit
