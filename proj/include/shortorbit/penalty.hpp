#pragma once

#include "shortorbit/geometry.hpp"

namespace shortorbit {

/// Parameters of the boundary penalty eps * U, U = k(dist)^-2.
struct PenaltyConfig {
  double d0 = 0.1;
  double eps = 1e-3;

  /// Value of k on [2 d0, inf). Derived, not user-settable.
  [[nodiscard]] double k_plateau() const noexcept { return 1.5 * d0; }
  /// Smallest value U attains anywhere.
  [[nodiscard]] double u_floor() const noexcept { return 1.0 / (k_plateau() * k_plateau()); }

  /// Validated constructor: 0 < d0 < 1/2, eps >= 0.
  static PenaltyConfig make(double d0, double eps);
};

struct KValue {
  double k = 0.0;
  double dk = 0.0;
  double d2k = 0.0;
};

/// Cutoff profile: identity on [0, d0], constant 1.5 d0 beyond 2 d0. On [d0, 2 d0]
/// k' = 1 - S((x - d0)/d0) with S the quintic smoothstep, so k is C^3 and 0 <= k' <= 1.
KValue k_profile(const PenaltyConfig &cfg, double x);

struct PotentialValue {
  double dist = 0.0; ///< interior distance to the boundary
  double u = 0.0;
  Vec grad;
  Mat hess; ///< empty unless requested
  bool plateau = false;
};

/// U, grad U and (optionally) hess U at an interior point. Throws OutsideDomain.
PotentialValue potential_U(const Domain &domain, const PenaltyConfig &cfg, const Vec &q, bool with_hessian = true);

struct PhasePoint {
  Vec q;
  Vec p;
};

/// H(q, p) = eps U(q) + |p|^2 / 2.
double hamiltonian(const Domain &domain, const PenaltyConfig &cfg, const PhasePoint &z);

/// L(q, v) = |v|^2 / 2 - eps U(q).
double lagrangian(const Domain &domain, const PenaltyConfig &cfg, const Vec &q, const Vec &v);

/// Interior distance at which eps U equals `energy`, i.e. the turning point of a
/// trajectory hitting the wall head-on. Returns 0 when eps = 0 and +inf when the
/// plateau value already exceeds the energy.
double turning_distance(const PenaltyConfig &cfg, double energy);

} // namespace shortorbit
