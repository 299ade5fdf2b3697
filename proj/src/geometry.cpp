#include "shortorbit/geometry.hpp"

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace shortorbit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt_point(const Vec &q) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < q.size(); ++i) os << (i ? ", " : "") << q[i];
  os << ")";
  return os.str();
}

void require_finite(const Vec &q) {
  if (!q.allFinite()) fail(ErrorCode::NonFinite, "non-finite query point " + fmt_point(q));
}

Mat identity(int n) { return Mat::Identity(n, n); }

// ---------------------------------------------------------------------------
// Implicit functions for composite shapes. Every component is an exact SDF and
// the smooth minimum keeps the result 1-Lipschitz, so |F(q)| <= dist(q, {F=0}).

struct Implicit {
  double f = 0.0;
  Vec g;
  Mat h;
};

Implicit ball_sdf(const Vec &c, double r, const Vec &q, bool hess) {
  const int n = static_cast<int>(q.size());
  Vec d = q - c;
  double len = d.norm();
  Implicit out;
  if (len < 1e-300) {
    out.f = -r;
    out.g = Vec::Unit(n, 0);
    if (hess) out.h = Mat::Zero(n, n);
    return out;
  }
  out.f = len - r;
  out.g = d / len;
  if (hess) out.h = (identity(n) - out.g * out.g.transpose()) / len;
  return out;
}

Implicit capsule_sdf(const Vec &a, const Vec &b, double w, const Vec &q, bool hess) {
  const int n = static_cast<int>(q.size());
  Vec ab = b - a;
  double len2 = ab.squaredNorm();
  double t = std::clamp((q - a).dot(ab) / len2, 0.0, 1.0);
  Vec p = a + t * ab;
  Vec d = q - p;
  double len = d.norm();
  Implicit out;
  if (len < 1e-300) {
    out.f = -w;
    out.g = Vec::Zero(n);
    if (hess) out.h = Mat::Zero(n, n);
    return out;
  }
  out.f = len - w;
  out.g = d / len;
  if (hess) {
    Mat proj = identity(n) - out.g * out.g.transpose();
    if (t > 0.0 && t < 1.0) {
      Vec u = ab / std::sqrt(len2);
      proj -= u * u.transpose();
    }
    out.h = proj / len;
  }
  return out;
}

Implicit smooth_min(const Implicit &a, const Implicit &b, double blend, bool hess) {
  if (blend <= 0.0) return a.f <= b.f ? a : b;
  double m = std::min(a.f, b.f);
  double diff = std::abs(a.f - b.f) / blend;
  Implicit out;
  out.f = m - blend * std::log1p(std::exp(-diff));
  double wa = 1.0 / (1.0 + std::exp((a.f - b.f) / blend));
  double wb = 1.0 - wa;
  out.g = wa * a.g + wb * b.g;
  if (hess) {
    out.h = wa * a.h + wb * b.h -
            (wa * a.g * a.g.transpose() + wb * b.g * b.g.transpose() - out.g * out.g.transpose()) / blend;
  }
  return out;
}

Implicit eval_implicit(const Shape &shape, const Vec &q, bool hess) {
  if (const auto *mb = std::get_if<MetaballUnion>(&shape)) {
    Implicit acc = ball_sdf(mb->balls[0].center, mb->balls[0].radius, q, hess);
    for (std::size_t i = 1; i < mb->balls.size(); ++i) {
      const auto &ball = mb->balls[i];
      acc = smooth_min(acc, ball_sdf(ball.center, ball.radius, q, hess), ball.blend, hess);
    }
    return acc;
  }
  const auto &db = std::get<Dumbbell>(shape);
  Implicit acc = smooth_min(ball_sdf(db.centers[0], db.radii[0], q, hess),
                            ball_sdf(db.centers[1], db.radii[1], q, hess), db.blend, hess);
  return smooth_min(acc, capsule_sdf(db.centers[0], db.centers[1], db.neck_half_width, q, hess), db.blend, hess);
}

bool is_composite(const Shape &shape) {
  return std::holds_alternative<MetaballUnion>(shape) || std::holds_alternative<Dumbbell>(shape);
}

BoundingBox shape_bbox(const Shape &shape, int n) {
  BoundingBox box{Vec::Constant(n, kInf), Vec::Constant(n, -kInf)};
  auto grow = [&](const Vec &c, const Vec &half) {
    box.lo = box.lo.cwiseMin(c - half);
    box.hi = box.hi.cwiseMax(c + half);
  };
  std::visit(
      [&](const auto &s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          grow(s.center, Vec::Constant(n, s.radius));
        } else if constexpr (std::is_same_v<T, Ellipsoid>) {
          grow(s.center, s.semi_axes);
        } else if constexpr (std::is_same_v<T, SmoothedBox>) {
          grow(s.center, s.half_widths);
        } else if constexpr (std::is_same_v<T, MetaballUnion>) {
          double pad = 0.0;
          for (const auto &b : s.balls) pad += b.blend * std::numbers::ln2;
          for (const auto &b : s.balls) grow(b.center, Vec::Constant(n, b.radius + pad));
        } else {
          double pad = s.blend * std::log(3.0);
          double neck = s.neck_half_width + pad;
          for (int i = 0; i < 2; ++i) grow(s.centers[i], Vec::Constant(n, std::max(s.radii[i] + pad, neck)));
        }
      },
      shape);
  return box;
}

Vec onto_surface(const Shape &shape, Vec x) {
  for (int it = 0; it < 30; ++it) {
    Implicit ev = eval_implicit(shape, x, false);
    double g2 = ev.g.squaredNorm();
    if (g2 < 1e-20 || std::abs(ev.f) < 1e-15) break;
    x -= ev.f * ev.g / g2;
  }
  return x;
}

// Fallback near focal points, where the KKT Jacobian is singular: tangential
// descent of |x - q| along the surface. Only the distance value matters there.
Vec descend_on_surface(const Shape &shape, const Vec &q, Vec x) {
  const int n = static_cast<int>(q.size());
  x = onto_surface(shape, x);
  double best = (x - q).norm();
  double factor = 1.0;
  for (int it = 0; it < 200 && factor > 1e-8; ++it) {
    Vec g = eval_implicit(shape, x, false).g.normalized();
    Vec tangential = (identity(n) - g * g.transpose()) * (q - x);
    Vec trial = onto_surface(shape, x + factor * tangential);
    double d = (trial - q).norm();
    if (d < best) {
      best = d;
      x = trial;
      if (tangential.norm() < 1e-15) break;
    } else {
      factor *= 0.5;
    }
  }
  return x;
}

// Closest point on the zero set of F to q, by Newton on the KKT system of
// min |x - q|^2 s.t. F(x) = 0, started from x0.
Vec project_implicit(const Shape &shape, const Vec &q, Vec x, double scale) {
  const int n = static_cast<int>(q.size());
  Implicit ev = eval_implicit(shape, x, true);
  double mu = (q - x).dot(ev.g) / std::max(ev.g.squaredNorm(), 1e-300);
  auto residual = [&](const Vec &xx, double mm, const Implicit &e) {
    Eigen::VectorXd r(n + 1);
    r.head(n) = xx - q + mm * e.g;
    r[n] = e.f;
    return r;
  };
  Eigen::VectorXd r = residual(x, mu, ev);
  for (int it = 0; it < 60; ++it) {
    double rn = r.norm();
    if (rn <= 1e-15 * scale) break;
    Eigen::MatrixXd jac(n + 1, n + 1);
    jac.topLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n) + mu * ev.h;
    jac.topRightCorner(n, 1) = ev.g;
    jac.bottomLeftCorner(1, n) = ev.g.transpose();
    jac(n, n) = 0.0;
    Eigen::VectorXd step = jac.partialPivLu().solve(-r);
    if (!step.allFinite()) break;
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      Vec xn = x + alpha * step.head(n);
      double mn = mu + alpha * step[n];
      Implicit en = eval_implicit(shape, xn, true);
      Eigen::VectorXd rr = residual(xn, mn, en);
      if (rr.norm() < rn || (rr.norm() <= rn * (1 + 1e-12) && step.head(n).norm() < 1e-13 * scale)) {
        x = xn;
        mu = mn;
        ev = en;
        r = rr;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted || alpha * step.head(n).norm() < 1e-16 * scale) break;
  }
  if (r.norm() > 1e-9 * scale) x = descend_on_surface(shape, q, x);
  if (std::abs(eval_implicit(shape, x, false).f) > 1e-9 * scale)
    fail(ErrorCode::NoConvergence, "boundary projection did not converge from " + fmt_point(q));
  return x;
}

} // namespace

// ---------------------------------------------------------------------------

namespace detail {

/// Dense sample of the zero set of a composite implicit function, bucketed for nearest queries.
struct BoundaryCloud {
  std::vector<Vec> points;
  Vec origin;
  double cell = 1.0;
  std::array<int, kMaxDim> dims{};
  std::vector<std::vector<int>> buckets;
  int n = 0;

  [[nodiscard]] int flat(const std::array<int, kMaxDim> &idx) const {
    int f = 0;
    for (int d = n - 1; d >= 0; --d) f = f * dims[d] + idx[d];
    return f;
  }

  [[nodiscard]] const Vec &nearest(const Vec &q) const {
    std::array<int, kMaxDim> center{};
    for (int d = 0; d < n; ++d)
      center[d] = std::clamp(static_cast<int>(std::floor((q[d] - origin[d]) / cell)), 0, dims[d] - 1);
    int best = -1;
    double best_d2 = kInf;
    int max_ring = *std::max_element(dims.begin(), dims.begin() + n);
    for (int ring = 0; ring <= max_ring; ++ring) {
      std::array<int, kMaxDim> off{};
      for (int d = 0; d < n; ++d) off[d] = -ring;
      while (true) {
        int cheb = 0;
        for (int d = 0; d < n; ++d) cheb = std::max(cheb, std::abs(off[d]));
        if (cheb == ring) {
          std::array<int, kMaxDim> idx{};
          bool ok = true;
          for (int d = 0; d < n && ok; ++d) {
            idx[d] = center[d] + off[d];
            ok = idx[d] >= 0 && idx[d] < dims[d];
          }
          if (ok) {
            for (int pi : buckets[flat(idx)]) {
              double d2 = (points[pi] - q).squaredNorm();
              if (d2 < best_d2 || (d2 == best_d2 && pi < best)) {
                best_d2 = d2;
                best = pi;
              }
            }
          }
        }
        int d = 0;
        while (d < n && ++off[d] > ring) off[d++] = -ring;
        if (d == n) break;
      }
      // Anything in ring+1 is at least ring*cell away (q may sit outside the grid, hence the extra ring).
      if (best >= 0 && std::sqrt(best_d2) <= (ring - 1) * cell) break;
    }
    return points[best];
  }
};

} // namespace detail

namespace {

std::shared_ptr<const detail::BoundaryCloud> build_cloud(const Shape &shape, int n, double spacing) {
  auto cloud = std::make_shared<detail::BoundaryCloud>();
  cloud->n = n;
  BoundingBox box = shape_bbox(shape, n);
  Vec lo = box.lo.array() - 2 * spacing;
  Vec hi = box.hi.array() + 2 * spacing;
  std::array<int, kMaxDim> counts{};
  long total = 1;
  for (int d = 0; d < n; ++d) {
    counts[d] = static_cast<int>(std::ceil((hi[d] - lo[d]) / spacing)) + 1;
    total *= counts[d];
  }
  std::vector<double> values(static_cast<std::size_t>(total));
  auto unflatten = [&](long f) {
    std::array<int, kMaxDim> idx{};
    for (int d = 0; d < n; ++d) {
      idx[d] = static_cast<int>(f % counts[d]);
      f /= counts[d];
    }
    return idx;
  };
  auto corner = [&](const std::array<int, kMaxDim> &idx) {
    Vec p(n);
    for (int d = 0; d < n; ++d) p[d] = lo[d] + idx[d] * spacing;
    return p;
  };
#pragma omp parallel for schedule(static)
  for (long f = 0; f < total; ++f) values[static_cast<std::size_t>(f)] = eval_implicit(shape, corner(unflatten(f)), false).f;

  auto flat_of = [&](const std::array<int, kMaxDim> &idx) {
    long f = 0;
    for (int d = n - 1; d >= 0; --d) f = f * counts[d] + idx[d];
    return f;
  };
  // Cells whose corners straddle the zero set seed one projected point each.
  for (long f = 0; f < total; ++f) {
    auto idx = unflatten(f);
    bool interior_cell = true;
    for (int d = 0; d < n; ++d) interior_cell = interior_cell && idx[d] + 1 < counts[d];
    if (!interior_cell) continue;
    bool has_neg = false;
    bool has_pos = false;
    for (int mask = 0; mask < (1 << n); ++mask) {
      auto c = idx;
      for (int d = 0; d < n; ++d) c[d] += (mask >> d) & 1;
      double v = values[static_cast<std::size_t>(flat_of(c))];
      has_neg = has_neg || v < 0;
      has_pos = has_pos || v >= 0;
    }
    if (!(has_neg && has_pos)) continue;
    Vec x = corner(idx).array() + 0.5 * spacing;
    for (int it = 0; it < 30; ++it) {
      Implicit ev = eval_implicit(shape, x, false);
      double g2 = ev.g.squaredNorm();
      if (g2 < 1e-20) break;
      x -= ev.f * ev.g / g2;
      if (std::abs(ev.f) < 1e-14) break;
    }
    cloud->points.push_back(x);
  }
  if (cloud->points.empty()) fail(ErrorCode::EmptyInterior, "composite shape has no boundary");

  cloud->cell = 4 * spacing;
  cloud->origin = lo;
  std::size_t buckets = 1;
  for (int d = 0; d < n; ++d) {
    cloud->dims[d] = static_cast<int>(std::ceil((hi[d] - lo[d]) / cloud->cell)) + 1;
    buckets *= static_cast<std::size_t>(cloud->dims[d]);
  }
  cloud->buckets.resize(buckets);
  for (int i = 0; i < static_cast<int>(cloud->points.size()); ++i) {
    std::array<int, kMaxDim> idx{};
    for (int d = 0; d < n; ++d)
      idx[d] = std::clamp(static_cast<int>(std::floor((cloud->points[i][d] - lo[d]) / cloud->cell)), 0,
                          cloud->dims[d] - 1);
    cloud->buckets[static_cast<std::size_t>(cloud->flat(idx))].push_back(i);
  }
  return cloud;
}

double default_cloud_spacing(const Shape &shape, int n) {
  double feature = kInf;
  if (const auto *mb = std::get_if<MetaballUnion>(&shape)) {
    for (const auto &b : mb->balls) feature = std::min(feature, b.radius);
  } else {
    const auto &db = std::get<Dumbbell>(shape);
    feature = std::min({db.radii[0], db.radii[1], db.neck_half_width});
  }
  return feature * (n <= 2 ? 0.1 : 0.25);
}

void validate(const DomainSpec &spec) {
  const int n = spec.dim;
  if (n < 1 || n > kMaxDim) fail(ErrorCode::InvalidArgument, "dim must be in [1, " + std::to_string(kMaxDim) + "]");
  auto check_vec = [&](const Vec &v, const char *what) {
    if (v.size() != n) fail(ErrorCode::InvalidArgument, std::string(what) + " has wrong dimension");
    if (!v.allFinite()) fail(ErrorCode::NonFinite, what);
  };
  auto check_pos = [&](double v, const char *what) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::InvalidArgument, std::string(what) + " must be positive");
  };
  std::visit(
      [&](const auto &s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          check_vec(s.center, "center");
          check_pos(s.radius, "radius");
        } else if constexpr (std::is_same_v<T, Ellipsoid>) {
          check_vec(s.center, "center");
          check_vec(s.semi_axes, "semi_axes");
          for (int i = 0; i < n; ++i) check_pos(s.semi_axes[i], "semi_axes");
        } else if constexpr (std::is_same_v<T, SmoothedBox>) {
          check_vec(s.center, "center");
          check_vec(s.half_widths, "half_widths");
          check_pos(s.corner_radius, "corner_radius");
          for (int i = 0; i < n; ++i)
            if (!(s.half_widths[i] > s.corner_radius))
              fail(ErrorCode::InvalidArgument, "half_widths must exceed corner_radius");
        } else if constexpr (std::is_same_v<T, MetaballUnion>) {
          if (s.balls.empty()) fail(ErrorCode::InvalidArgument, "metaball_union needs at least one ball");
          for (const auto &b : s.balls) {
            check_vec(b.center, "center");
            check_pos(b.radius, "radius");
            if (b.blend < 0) fail(ErrorCode::InvalidArgument, "blend must be >= 0");
          }
        } else {
          check_vec(s.centers[0], "centers");
          check_vec(s.centers[1], "centers");
          check_pos(s.radii[0], "radii");
          check_pos(s.radii[1], "radii");
          check_pos(s.neck_half_width, "neck_half_width");
          check_pos(s.blend, "blend");
          if ((s.centers[0] - s.centers[1]).norm() <= 0) fail(ErrorCode::InvalidArgument, "dumbbell centers coincide");
          if (s.neck_half_width >= std::min(s.radii[0], s.radii[1]))
            fail(ErrorCode::InvalidArgument, "neck_half_width must be smaller than both radii");
        }
      },
      spec.shape);
}

} // namespace

// ---------------------------------------------------------------------------

Vec ellipsoid_nearest_point(const Vec &semi_axes, const Vec &y_in) {
  const int n = static_cast<int>(y_in.size());
  // Work in the first orthant with axes sorted in decreasing order.
  std::array<int, kMaxDim> order{};
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.begin() + n, [&](int a, int b) { return semi_axes[a] > semi_axes[b]; });
  std::array<double, kMaxDim> e{}, y{}, x{};
  for (int i = 0; i < n; ++i) {
    e[i] = semi_axes[order[i]];
    y[i] = std::abs(y_in[order[i]]);
  }

  int m = n;
  while (m > 0) {
    const int last = m - 1;
    if (y[last] > 1e-12 * e[last]) {
      // Root of sum_i (e_i y_i / (t + e_i^2))^2 = 1 on t > -e_last^2; convex decreasing, so Newton
      // started left of the root increases monotonically onto it.
      auto secular = [&](double t, double &deriv) {
        double f = -1.0;
        deriv = 0.0;
        for (int i = 0; i < m; ++i) {
          if (y[i] == 0.0) continue;
          double r = e[i] * y[i] / (t + e[i] * e[i]);
          f += r * r;
          deriv -= 2.0 * r * r / (t + e[i] * e[i]);
        }
        return f;
      };
      double t = -e[last] * e[last] + e[last] * y[last];
      for (int it = 0; it < 50; ++it) {
        double deriv = 0.0;
        double f = secular(t, deriv);
        if (f <= 0.0 || deriv == 0.0) break;
        double tn = t - f / deriv;
        if (!(tn > t)) break;
        t = tn;
      }
      for (int i = 0; i < m; ++i) x[i] = y[i] == 0.0 ? 0.0 : e[i] * e[i] * y[i] / (t + e[i] * e[i]);
      // Components with t + e_i^2 near zero lose digits; polish with the bordered KKT Newton system
      // x - y + t x/e^2 = 0, |x/e|^2 = 1, which stays well conditioned there.
      auto kkt_residual = [&](const std::array<double, kMaxDim> &xx, double tt) {
        Eigen::VectorXd r(m + 1);
        double c = -1.0;
        for (int i = 0; i < m; ++i) {
          r[i] = xx[i] - y[i] + tt * xx[i] / (e[i] * e[i]);
          c += (xx[i] / e[i]) * (xx[i] / e[i]);
        }
        r[m] = 0.5 * c;
        return r;
      };
      Eigen::VectorXd res = kkt_residual(x, t);
      for (int it = 0; it < 4 && res.norm() > 0.0; ++it) {
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m + 1, m + 1);
        for (int i = 0; i < m; ++i) {
          jac(i, i) = 1.0 + t / (e[i] * e[i]);
          jac(i, m) = x[i] / (e[i] * e[i]);
          jac(m, i) = x[i] / (e[i] * e[i]);
        }
        Eigen::VectorXd step = jac.partialPivLu().solve(-res);
        if (!step.allFinite()) break;
        std::array<double, kMaxDim> xn = x;
        for (int i = 0; i < m; ++i) xn[i] += step[i];
        double tn = t + step[m];
        Eigen::VectorXd rn = kkt_residual(xn, tn);
        if (!(rn.norm() < res.norm())) break;
        x = xn;
        t = tn;
        res = rn;
      }
      break;
    }
    // y on the smallest-axis plane: the nearest point may leave the plane.
    double sum = 0.0;
    bool off_plane = true;
    std::array<double, kMaxDim> cand{};
    for (int i = 0; i < last; ++i) {
      if (y[i] == 0.0) continue;
      double denom = e[i] * e[i] - e[last] * e[last];
      if (denom <= 0.0) {
        off_plane = false;
        break;
      }
      cand[i] = e[i] * e[i] * y[i] / denom;
      sum += (cand[i] / e[i]) * (cand[i] / e[i]);
    }
    if (off_plane && sum < 1.0) {
      for (int i = 0; i < last; ++i) x[i] = cand[i];
      x[last] = e[last] * std::sqrt(1.0 - sum);
      break;
    }
    x[last] = 0.0;
    --m;
  }

  Vec out(n);
  for (int i = 0; i < n; ++i) out[order[i]] = std::copysign(x[i], y_in[order[i]] < 0 ? -1.0 : 1.0);
  return out;
}

// ---------------------------------------------------------------------------

Domain Domain::build(DomainSpec spec, const DomainOptions &opts) {
  validate(spec);
  Domain dom;
  dom.spec_ = std::move(spec);
  if (is_composite(dom.spec_.shape)) {
    double spacing = opts.cloud_spacing > 0 ? opts.cloud_spacing : default_cloud_spacing(dom.spec_.shape, dom.dim());
    dom.cloud_ = build_cloud(dom.spec_.shape, dom.dim(), spacing);
  }
  dom.derive(opts);
  return dom;
}

bool Domain::is_convex() const noexcept {
  return std::holds_alternative<Ball>(spec_.shape) || std::holds_alternative<Ellipsoid>(spec_.shape) ||
         std::holds_alternative<SmoothedBox>(spec_.shape);
}

const char *Domain::shape_name() const noexcept {
  switch (spec_.shape.index()) {
  case 0: return "ball";
  case 1: return "ellipsoid";
  case 2: return "smoothed_box";
  case 3: return "metaball_union";
  default: return "dumbbell";
  }
}

BoundingBox Domain::bounding_box() const { return shape_bbox(spec_.shape, dim()); }

DistanceSample Domain::distance(const Vec &q) const {
  require_finite(q);
  const int n = dim();
  if (q.size() != n) fail(ErrorCode::InvalidArgument, "query point has wrong dimension");
  DistanceSample out;
  std::visit(
      [&](const auto &s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          Vec d = q - s.center;
          double len = d.norm();
          out.normal = len > 0 ? Vec(d / len) : Vec(Vec::Unit(n, 0));
          out.signed_dist = len - s.radius;
          out.nearest = s.center + s.radius * out.normal;
        } else if constexpr (std::is_same_v<T, Ellipsoid>) {
          Vec y = q - s.center;
          Vec x = ellipsoid_nearest_point(s.semi_axes, y);
          Vec grad = x.cwiseQuotient(s.semi_axes.cwiseProduct(s.semi_axes));
          out.normal = grad.normalized();
          double level = y.cwiseQuotient(s.semi_axes).squaredNorm() - 1.0;
          double len = (y - x).norm();
          out.signed_dist = level > 0 ? len : -len;
          out.nearest = s.center + x;
        } else if constexpr (std::is_same_v<T, SmoothedBox>) {
          Vec p = q - s.center;
          Vec sgn = p.unaryExpr([](double v) { return v < 0 ? -1.0 : 1.0; });
          Vec core = p.cwiseAbs() - (s.half_widths.array() - s.corner_radius).matrix();
          Vec pos = core.cwiseMax(0.0);
          double pos_len = pos.norm();
          int arg = 0;
          double maxc = core.maxCoeff(&arg);
          if (pos_len > 0) {
            out.signed_dist = pos_len - s.corner_radius;
            out.normal = sgn.cwiseProduct(pos) / pos_len;
          } else {
            out.signed_dist = maxc - s.corner_radius;
            out.normal = Vec::Zero(n);
            out.normal[arg] = sgn[arg];
          }
          out.nearest = q - out.signed_dist * out.normal;
        } else {
          Vec seed = cloud_->nearest(q);
          Vec x = project_implicit(spec_.shape, q, seed, scale_);
          Implicit at_x = eval_implicit(spec_.shape, x, false);
          out.normal = at_x.g.normalized();
          double len = (q - x).norm();
          out.signed_dist = eval_implicit(spec_.shape, q, false).f > 0 ? len : -len;
          out.nearest = x;
        }
      },
      spec_.shape);
  return out;
}

double Domain::signed_dist(const Vec &q) const { return distance(q).signed_dist; }

Mat Domain::hessian(const Vec &q) const {
  const int n = dim();
  if (const auto *ball = std::get_if<Ball>(&spec_.shape)) {
    Vec d = q - ball->center;
    double len = d.norm();
    if (len == 0) return Mat::Zero(n, n);
    Vec u = d / len;
    return (identity(n) - u * u.transpose()) / len;
  }
  const double step = 1e-5 * scale_;
  Mat h(n, n);
  for (int j = 0; j < n; ++j) {
    Vec e = Vec::Unit(n, j) * step;
    h.col(j) = (gradient(q + e) - gradient(q - e)) / (2 * step);
  }
  return 0.5 * (h + h.transpose());
}

bool Domain::inside(const Vec &q) const {
  if (!q.allFinite()) return false;
  if (cloud_) return eval_implicit(spec_.shape, q, false).f < 0.0;
  return signed_dist(q) < 0.0;
}

double Domain::interior_dist_lower_bound(const Vec &q) const {
  if (cloud_) return -eval_implicit(spec_.shape, q, false).f;
  return -signed_dist(q);
}

BoundaryPoint Domain::boundary_project(const Vec &q) const {
  DistanceSample ds = distance(q);
  // The nearest point is unique inside the tube of the inner and outer reach, which
  // contains the collar.
  const double tube = ds.signed_dist < 0 ? reach_ : outer_reach_;
  if (tube > 0 && !(std::abs(ds.signed_dist) < 0.99 * tube)) {
    std::ostringstream os;
    os << "point " << fmt_point(q) << " at signed distance " << ds.signed_dist << " outside the projection tube "
       << 0.99 * tube;
    fail(ErrorCode::OutsideCollar, os.str());
  }
  BoundaryPoint bp{ds.nearest, ds.normal};
  // One polish pass makes the projection idempotent to roundoff.
  DistanceSample again = distance(bp.point);
  if (std::abs(again.signed_dist) > 1e-10 * std::max(1.0, scale_))
    fail(ErrorCode::NoConvergence, "projection of " + fmt_point(q) + " is not on the boundary");
  bp.point = again.nearest;
  bp.normal = again.normal;
  return bp;
}

double Domain::ray_hit(const Vec &start, const Vec &dir, double t_max) const {
  // Sphere tracing on a lower bound of the interior distance.
  auto level = [&](double t) -> double {
    Vec p = start + t * dir;
    if (cloud_) return eval_implicit(spec_.shape, p, false).f;
    return signed_dist(p);
  };
  double t = 0.0;
  double t_prev = 0.0;
  int steps = 0;
  while (true) {
    double f = level(t);
    if (f >= 0.0 && t > 0.0) break;
    // Creeping along the wall parallel to it: the ray touches the boundary tangentially.
    if (t > 0.0 && std::abs(f) < 1e-6 * std::max(1.0, scale_)) {
      Vec p = start + t * dir;
      Vec g = cloud_ ? eval_implicit(spec_.shape, p, false).g : distance(p).normal;
      if (std::abs(g.dot(dir)) <= 1e-9 * g.norm() * dir.norm()) return t;
    }
    if (++steps > 2'000'000 || t > t_max)
      fail(ErrorCode::MarchStall, "ray march from " + fmt_point(start) + " did not reach the boundary");
    t_prev = t;
    t += std::max(std::abs(f), 1e-6 * std::max(1.0, scale_));
  }
  double lo = t_prev;
  double hi = t;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
    double mid = 0.5 * (lo + hi);
    double fm = level(mid);
    if (fm < 0) {
      lo = mid;
    } else {
      hi = mid;
    }
    // Newton polish once the bracket is tight.
    if (hi - lo < 1e-6 * std::max(1.0, scale_)) {
      double tn = 0.5 * (lo + hi);
      for (int k = 0; k < 8; ++k) {
        Vec p = start + tn * dir;
        double f = level(tn);
        Vec g = cloud_ ? eval_implicit(spec_.shape, p, false).g : distance(p).normal;
        double df = g.dot(dir);
        if (df == 0) break;
        double next = tn - f / df;
        if (next <= lo || next >= hi) break;
        tn = next;
        if (std::abs(f) < 1e-14) break;
      }
      if (std::abs(level(tn)) < 1e-12) return tn;
    }
  }
  return 0.5 * (lo + hi);
}

std::vector<BoundaryPoint> Domain::boundary_samples(int count) const {
  std::vector<BoundaryPoint> out;
  const int n = dim();
  if (cloud_) {
    const auto &pts = cloud_->points;
    std::size_t stride = std::max<std::size_t>(1, pts.size() / static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < pts.size() && static_cast<int>(out.size()) < count; i += stride) {
      DistanceSample ds = distance(pts[i]);
      out.push_back({ds.nearest, ds.normal});
    }
    return out;
  }
  BoundingBox box = bounding_box();
  double diag = (box.hi - box.lo).norm();
  const Vec &w = inradius_.witness;
  for (int k = 0; k < count; ++k) {
    Vec dir(n);
    if (n == 1) {
      dir[0] = k % 2 ? -1.0 : 1.0;
    } else if (n == 2) {
      double a = 2 * std::numbers::pi * k / count;
      dir << std::cos(a), std::sin(a);
    } else {
      // Fibonacci sphere in the first three coordinates.
      dir.setZero();
      double z = 1.0 - (2.0 * k + 1.0) / count;
      double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
      double phi = k * std::numbers::pi * (3.0 - std::sqrt(5.0));
      dir[0] = rxy * std::cos(phi);
      dir[1] = rxy * std::sin(phi);
      dir[2] = z;
    }
    double t = ray_hit(w, dir, 2 * diag);
    DistanceSample ds = distance(w + t * dir);
    out.push_back({ds.nearest, ds.normal});
  }
  return out;
}

void Domain::derive(const DomainOptions &opts) {
  BoundingBox box = bounding_box();
  double shortest = (box.hi - box.lo).minCoeff();
  scale_ = 0.5 * shortest;
  double density = opts.grid_density > 0 ? opts.grid_density : 40.0 / shortest;
  inradius_ = inradius(*this, density);
  scale_ = inradius_.radius;

  const int n = dim();
  std::vector<BoundaryPoint> samples = boundary_samples(opts.boundary_samples);

  // Curvature bound: largest positive principal curvature among the samples.
  double kappa_max = 0.0;
  for (const auto &bp : samples) {
    Mat h = hessian(bp.point);
    Mat proj = identity(n) - bp.normal * bp.normal.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(proj * h * proj));
    kappa_max = std::max(kappa_max, es.eigenvalues().maxCoeff());
  }
  curvature_reach_ = kappa_max > 0 ? 1.0 / kappa_max : kInf;

  // Medial-ball radius along each normal: largest t with |signed_dist(b -+ t nu)| = t.
  auto medial = [&](const BoundaryPoint &bp, double sign, double t_cap) {
    double lo = 0.0;
    double hi = t_cap;
    auto tangent = [&](double t) {
      double sd = signed_dist(bp.point - sign * t * bp.normal);
      return std::abs(std::abs(sd) - t) <= 1e-9 * scale_ && (sd < 0) == (sign > 0);
    };
    if (tangent(hi)) return hi;
    for (int it = 0; it < 40; ++it) {
      double mid = 0.5 * (lo + hi);
      (tangent(mid) ? lo : hi) = mid;
    }
    return lo;
  };
  double inner = kInf;
  double outer = kInf;
  for (const auto &bp : samples) {
    inner = std::min(inner, medial(bp, 1.0, inradius_.radius));
    outer = std::min(outer, medial(bp, -1.0, inradius_.radius));
  }
  reach_ = std::min(curvature_reach_, inner);
  outer_reach_ = outer;
  collar_width_ = std::min({0.4 * inradius_.radius, 0.9 * reach_, 0.9 * outer});
  d0_ = std::min({0.25, collar_width_ / 2.0, reach_ / 4.0});
}

// ---------------------------------------------------------------------------

namespace {

struct NmContext {
  const Domain *domain;
  int n;
};

double nm_objective(const gsl_vector *x, void *params) {
  const auto *ctx = static_cast<const NmContext *>(params);
  Vec q(ctx->n);
  for (int i = 0; i < ctx->n; ++i) q[i] = gsl_vector_get(x, static_cast<std::size_t>(i));
  if (!ctx->domain->inside(q)) return 1e30;
  return ctx->domain->signed_dist(q);
}

} // namespace

InradiusResult inradius(const Domain &domain, double grid_density) {
  if (!(grid_density > 0) || !std::isfinite(grid_density))
    fail(ErrorCode::InvalidArgument, "grid_density must be positive");
  const int n = domain.dim();
  BoundingBox box = domain.bounding_box();
  Vec mid = 0.5 * (box.lo + box.hi);

  // Odd counts centered on the box midpoint so symmetric shapes sample their center exactly.
  auto scan = [&](const Vec &center, const std::array<int, kMaxDim> &half_counts, double spacing, double &best_val,
                  Vec &best_pt) {
    long total = 1;
    for (int d = 0; d < n; ++d) total *= 2L * half_counts[d] + 1;
    std::vector<double> vals(static_cast<std::size_t>(total), kInf);
    auto point_of = [&](long f) {
      Vec p(n);
      for (int d = 0; d < n; ++d) {
        long c = 2L * half_counts[d] + 1;
        p[d] = center[d] + static_cast<double>(f % c - half_counts[d]) * spacing;
        f /= c;
      }
      return p;
    };
#pragma omp parallel for schedule(static)
    for (long f = 0; f < total; ++f) {
      Vec p = point_of(f);
      if (domain.inside(p)) vals[static_cast<std::size_t>(f)] = domain.signed_dist(p);
    }
    // Ties (flat distance ridges) resolve toward the bounding-box center.
    const double tie = std::isfinite(best_val) ? 1e-12 * std::max(1.0, std::abs(best_val)) : 0.0;
    for (long f = 0; f < total; ++f) {
      double v = vals[static_cast<std::size_t>(f)];
      if (v == kInf || v > best_val + tie) continue;
      Vec p = point_of(f);
      if (v < best_val - tie || (p - mid).squaredNorm() < (best_pt - mid).squaredNorm()) {
        best_val = std::min(v, best_val);
        best_pt = p;
      }
    }
  };

  double spacing = 1.0 / grid_density;
  std::array<int, kMaxDim> half{};
  for (int d = 0; d < n; ++d) half[d] = static_cast<int>(std::ceil(0.5 * (box.hi[d] - box.lo[d]) / spacing));
  double best = kInf;
  Vec best_pt = mid;
  scan(mid, half, spacing, best, best_pt);
  if (!(best < 0)) fail(ErrorCode::EmptyInterior, "no grid point lies inside the domain");

  for (int round = 0; round < 3; ++round) {
    spacing /= 4.0;
    std::array<int, kMaxDim> local{};
    for (int d = 0; d < n; ++d) local[d] = 4;
    Vec center = best_pt;
    scan(center, local, spacing, best, best_pt);
  }

  // Nelder-Mead polish of -r; only ever improves on the incumbent.
  static const gsl_error_handler_t *previous_handler = gsl_set_error_handler_off();
  (void)previous_handler;
  NmContext ctx{&domain, n};
  gsl_multimin_function fn{&nm_objective, static_cast<std::size_t>(n), &ctx};
  gsl_vector *x = gsl_vector_alloc(static_cast<std::size_t>(n));
  gsl_vector *step = gsl_vector_alloc(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    gsl_vector_set(x, static_cast<std::size_t>(i), best_pt[i]);
    gsl_vector_set(step, static_cast<std::size_t>(i), spacing);
  }
  gsl_multimin_fminimizer *nm = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, static_cast<std::size_t>(n));
  gsl_multimin_fminimizer_set(nm, &fn, x, step);
  for (int it = 0; it < 500; ++it) {
    if (gsl_multimin_fminimizer_iterate(nm) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(nm), 1e-12 * std::max(1.0, -best)) == GSL_SUCCESS) break;
  }
  if (nm->fval < best - 1e-14 * std::max(1.0, std::abs(best))) {
    best = nm->fval;
    for (int i = 0; i < n; ++i) best_pt[i] = gsl_vector_get(nm->x, static_cast<std::size_t>(i));
  }
  gsl_multimin_fminimizer_free(nm);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return {-best, best_pt};
}

} // namespace shortorbit
