#include "shortorbit/penalty.hpp"

#include <cmath>
#include <limits>

namespace shortorbit {

PenaltyConfig PenaltyConfig::make(double d0, double eps) {
  if (!(d0 > 0.0 && d0 < 0.5)) fail(ErrorCode::InvalidArgument, "d0 must lie in (0, 1/2)");
  if (!(eps >= 0.0) || !std::isfinite(eps)) fail(ErrorCode::InvalidArgument, "eps must be finite and >= 0");
  return PenaltyConfig{d0, eps};
}

KValue k_profile(const PenaltyConfig &cfg, double x) {
  const double d0 = cfg.d0;
  if (x <= d0) return {x, 1.0, 0.0};
  if (x >= 2.0 * d0) return {cfg.k_plateau(), 0.0, 0.0};
  const double s = (x - d0) / d0;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double smooth = s3 * (10.0 + s * (-15.0 + 6.0 * s));
  const double dsmooth = 30.0 * s2 * (1.0 - s) * (1.0 - s);
  // Antiderivative of the smoothstep: s^6 - 3 s^5 + 5/2 s^4.
  const double integral = s2 * s2 * (2.5 + s * (-3.0 + s));
  return {d0 + d0 * (s - integral), 1.0 - smooth, -dsmooth / d0};
}

PotentialValue potential_U(const Domain &domain, const PenaltyConfig &cfg, const Vec &q, bool with_hessian) {
  const int n = domain.dim();
  PotentialValue out;
  if (domain.interior_dist_lower_bound(q) >= 2.0 * cfg.d0) {
    out.plateau = true;
    out.dist = 2.0 * cfg.d0; // lower bound only; U does not depend on it here
    out.u = cfg.u_floor();
    out.grad = Vec::Zero(n);
    if (with_hessian) out.hess = Mat::Zero(n, n);
    return out;
  }
  DistanceSample ds = domain.distance(q);
  const double dist = -ds.signed_dist;
  if (!(dist > 0.0)) fail(ErrorCode::OutsideDomain, "penalty potential evaluated outside the domain");
  out.dist = dist;
  KValue kv = k_profile(cfg, dist);
  const double inv_k = 1.0 / kv.k;
  const double inv_k2 = inv_k * inv_k;
  out.u = inv_k2;
  if (kv.dk == 0.0 && kv.d2k == 0.0) {
    out.plateau = true;
    out.grad = Vec::Zero(n);
    if (with_hessian) out.hess = Mat::Zero(n, n);
    return out;
  }
  const double du = -2.0 * inv_k2 * inv_k * kv.dk;
  const double d2u = 6.0 * inv_k2 * inv_k2 * kv.dk * kv.dk - 2.0 * inv_k2 * inv_k * kv.d2k;
  // grad dist = -normal, hess dist = -hess signed_dist.
  out.grad = -du * ds.normal;
  if (with_hessian) out.hess = d2u * ds.normal * ds.normal.transpose() - du * domain.hessian(q);
  return out;
}

double hamiltonian(const Domain &domain, const PenaltyConfig &cfg, const PhasePoint &z) {
  if (cfg.eps == 0.0) {
    if (!domain.inside(z.q)) fail(ErrorCode::OutsideDomain, "phase point outside the domain");
    return 0.5 * z.p.squaredNorm();
  }
  return cfg.eps * potential_U(domain, cfg, z.q, false).u + 0.5 * z.p.squaredNorm();
}

double lagrangian(const Domain &domain, const PenaltyConfig &cfg, const Vec &q, const Vec &v) {
  if (cfg.eps == 0.0) {
    if (!domain.inside(q)) fail(ErrorCode::OutsideDomain, "point outside the domain");
    return 0.5 * v.squaredNorm();
  }
  return 0.5 * v.squaredNorm() - cfg.eps * potential_U(domain, cfg, q, false).u;
}

double turning_distance(const PenaltyConfig &cfg, double energy) {
  if (cfg.eps == 0.0) return 0.0;
  const double target_k = std::sqrt(cfg.eps / energy);
  if (target_k >= cfg.k_plateau()) return std::numeric_limits<double>::infinity();
  if (target_k <= cfg.d0) return target_k;
  // k is increasing on [d0, 2 d0]; bisect.
  double lo = cfg.d0;
  double hi = 2.0 * cfg.d0;
  for (int it = 0; it < 100; ++it) {
    double mid = 0.5 * (lo + hi);
    (k_profile(cfg, mid).k < target_k ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

} // namespace shortorbit
