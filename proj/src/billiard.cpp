#include "shortorbit/billiard.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace shortorbit {

namespace {

inline int wrap(int i, int n) { return (i % n + n) % n; }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Orthonormal basis of the complement of unit nu, as columns.
Mat tangent_frame(const Vec &nu) {
  const int n = static_cast<int>(nu.size());
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd(nu)).householderQ();
  return q.rightCols(n - 1);
}

double polygon_length(const std::vector<Vec> &v) {
  const int k = static_cast<int>(v.size());
  double len = 0.0;
  for (int i = 0; i < k; ++i) len += (v[static_cast<std::size_t>(wrap(i + 1, k))] - v[static_cast<std::size_t>(i)]).norm();
  return len;
}

struct Config {
  std::vector<Vec> v;
  std::vector<Vec> nu;
  std::vector<Mat> frame;
  Eigen::VectorXd grad;
  double length = 0.0;
  double min_edge = 0.0;
};

Config make_config(const Domain &domain, std::vector<Vec> v) {
  Config c;
  const int k = static_cast<int>(v.size());
  const int n = domain.dim();
  c.v = std::move(v);
  c.grad.resize(k * (n - 1));
  c.min_edge = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    Vec nu = domain.distance(c.v[static_cast<std::size_t>(i)]).normal;
    c.nu.push_back(nu);
    c.frame.push_back(tangent_frame(nu));
  }
  for (int i = 0; i < k; ++i) {
    const Vec &prev = c.v[static_cast<std::size_t>(wrap(i - 1, k))];
    const Vec &cur = c.v[static_cast<std::size_t>(i)];
    const Vec &next = c.v[static_cast<std::size_t>(wrap(i + 1, k))];
    c.min_edge = std::min(c.min_edge, (next - cur).norm());
    Vec d = (cur - prev).normalized() - (next - cur).normalized();
    c.grad.segment(i * (n - 1), n - 1) = c.frame[static_cast<std::size_t>(i)].transpose() * d;
  }
  c.length = polygon_length(c.v);
  return c;
}

std::vector<Vec> moved(const Domain &domain, const Config &c, const Eigen::VectorXd &step) {
  const int k = static_cast<int>(c.v.size());
  const int m = static_cast<int>(c.frame.front().cols());
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    Vec y = c.v[static_cast<std::size_t>(i)] + c.frame[static_cast<std::size_t>(i)] * step.segment(i * m, m);
    out.push_back(domain.distance(y).nearest);
  }
  return out;
}

// Second differences of the length in the tangent charts.
Eigen::MatrixXd length_hessian(const Domain &domain, const Config &c, double h) {
  const Eigen::Index dim = c.grad.size();
  Eigen::MatrixXd hess(dim, dim);
  auto len_at = [&](const Eigen::VectorXd &s) { return polygon_length(moved(domain, c, s)); };
  Eigen::VectorXd s = Eigen::VectorXd::Zero(dim);
  const double l0 = c.length;
  for (Eigen::Index a = 0; a < dim; ++a) {
    s.setZero();
    s[a] = h;
    double plus = len_at(s);
    s[a] = -h;
    double minus = len_at(s);
    hess(a, a) = (plus - 2.0 * l0 + minus) / (h * h);
    for (Eigen::Index b = 0; b < a; ++b) {
      double acc = 0.0;
      for (int sa : {1, -1})
        for (int sb : {1, -1}) {
          s.setZero();
          s[a] = sa * h;
          s[b] = sb * h;
          acc += sa * sb * len_at(s);
        }
      hess(a, b) = hess(b, a) = acc / (4.0 * h * h);
    }
  }
  return hess;
}

Eigen::VectorXd pinv_solve(const Eigen::MatrixXd &hess, const Eigen::VectorXd &rhs, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
  const Eigen::VectorXd &lam = es.eigenvalues();
  const double cut = rel_tol * lam.cwiseAbs().maxCoeff();
  Eigen::VectorXd coef = es.eigenvectors().transpose() * rhs;
  for (Eigen::Index i = 0; i < lam.size(); ++i) coef[i] = std::abs(lam[i]) > cut ? coef[i] / lam[i] : 0.0;
  return es.eigenvectors() * coef;
}

} // namespace

Vec reflect(const Vec &v_in, const Vec &nu) { return v_in - 2.0 * v_in.dot(nu) * nu; }

Vec reflect(const BoundaryPoint &at, const Vec &v_in) {
  const double along = v_in.dot(at.normal);
  if (std::abs(along) <= 1e-9 * v_in.norm())
    fail(ErrorCode::TangentialIncidence, "direction is tangent to the boundary at the bounce point");
  if (along < 0) fail(ErrorCode::InvalidArgument, "direction points away from the wall");
  return reflect(v_in, at.normal);
}

Shot shoot(const Domain &domain, const Vec &start, const Vec &dir, int max_bounces) {
  if (start.size() != domain.dim() || dir.size() != domain.dim())
    fail(ErrorCode::InvalidArgument, "start and direction must match the domain dimension");
  if (!domain.inside(start)) fail(ErrorCode::PointOutsideDomain, "shot starts outside the domain");
  if (!(dir.norm() > 0)) fail(ErrorCode::InvalidArgument, "direction must be nonzero");
  BoundingBox box = domain.bounding_box();
  const double t_max = 2.0 * (box.hi - box.lo).norm() + 1.0;
  Shot shot;
  Vec p = start;
  Vec u = dir / dir.norm();
  shot.polyline.push_back(p);
  shot.directions.push_back(u);
  for (int b = 0; b < max_bounces; ++b) {
    double t = domain.ray_hit(p, u, t_max);
    if (t < 1e-9 * domain.scale())
      fail(ErrorCode::MarchStall, "ray left the boundary point at a grazing angle (bounce " + std::to_string(b) + ")");
    Vec hit = p + t * u;
    BoundaryPoint bp{hit, domain.distance(hit).normal};
    u = reflect(bp, u);
    shot.length += t;
    shot.polyline.push_back(hit);
    shot.bounces.push_back(bp);
    shot.directions.push_back(u);
    p = hit;
  }
  return shot;
}

double BouncePolygon::length() const { return polygon_length(vertices); }

RefineResult refine_polygon(const Domain &domain, const BouncePolygon &seed, const RefineOptions &opts) {
  const int k = seed.k();
  const int n = domain.dim();
  if (k < 2) fail(ErrorCode::InvalidArgument, "a bounce polygon needs at least two vertices");
  std::vector<Vec> start;
  for (const Vec &v : seed.vertices) {
    if (v.size() != n) fail(ErrorCode::InvalidArgument, "polygon vertex dimension does not match the domain");
    start.push_back(domain.distance(v).nearest);
  }
  const double r = domain.inradius_estimate();
  const double min_edge = 1e-6 * r;
  const double h = 1e-4 * domain.scale();
  const double max_move = 0.1 * r;

  Config cur = make_config(domain, start);
  RefineResult out;
  for (int it = 0;; ++it) {
    if (cur.min_edge < min_edge)
      fail(ErrorCode::CollapsedEdge, "polygon edge shrank to " + fmt(cur.min_edge));
    if (cur.grad.norm() <= opts.grad_tol * cur.length) break;
    if (it >= opts.max_iters)
      fail(ErrorCode::NoConvergence, "polygon refinement did not converge (|grad| = " + fmt(cur.grad.norm()) + ")");
    out.iterations = it + 1;

    Eigen::MatrixXd hess = length_hessian(domain, cur, h);
    Eigen::VectorXd step = -pinv_solve(hess, cur.grad, opts.pinv_tol);
    auto cap = [&](Eigen::VectorXd s) {
      double worst = 0.0;
      for (int i = 0; i < k; ++i) worst = std::max(worst, s.segment(i * (n - 1), n - 1).norm());
      if (worst > max_move) s *= max_move / worst;
      return s;
    };
    auto attempt = [&](const Eigen::VectorXd &dir, Config &next) {
      for (double alpha = 1.0; alpha > 1e-8; alpha *= 0.5) {
        next = make_config(domain, moved(domain, cur, alpha * dir));
        if (next.grad.norm() < cur.grad.norm()) return true;
      }
      return false;
    };
    Config next;
    if (!attempt(cap(step), next)) {
      // Gauss-Newton on the gradient residual, damped.
      Eigen::MatrixXd normal = hess * hess;
      normal.diagonal().array() += 1e-6 * normal.diagonal().cwiseAbs().maxCoeff();
      Eigen::VectorXd gn = -normal.ldlt().solve(hess * cur.grad);
      if (!attempt(cap(gn), next)) {
        if (cur.grad.norm() <= 10.0 * opts.grad_tol * cur.length) break;
        fail(ErrorCode::NoConvergence, "no refinement step reduces |grad| = " + fmt(cur.grad.norm()));
      }
    }
    cur = std::move(next);
  }

  out.polygon.vertices = cur.v;
  out.length = cur.length;
  out.grad_norm = cur.grad.norm();
  BilliardTrajectory traj = make_trajectory(domain, cur.v);
  out.residuals = traj.reflection_residuals;
  for (int i = 0; i < k; ++i) {
    const Vec &prev = cur.v[static_cast<std::size_t>(wrap(i - 1, k))];
    const Vec &c = cur.v[static_cast<std::size_t>(i)];
    const Vec &next = cur.v[static_cast<std::size_t>(wrap(i + 1, k))];
    Vec bis = (prev - c).normalized() + (next - c).normalized();
    bis.normalize();
    const Vec &nu = cur.nu[static_cast<std::size_t>(i)];
    out.max_bisector_err = std::max(out.max_bisector_err, (bis - bis.dot(nu) * nu).norm());
  }
  return out;
}

Crosscheck crosscheck(const BilliardTrajectory &traj, const Domain &domain) {
  Crosscheck c;
  BouncePolygon seed;
  for (const auto &b : traj.bounce_points) seed.vertices.push_back(b.point);
  try {
    c.refined = refine_polygon(domain, seed);
  } catch (const Error &) {
    c.displacement = std::numeric_limits<double>::infinity();
    c.length_difference = std::numeric_limits<double>::infinity();
    return c;
  }
  c.refined_length = c.refined.length;
  for (std::size_t i = 0; i < seed.vertices.size(); ++i)
    c.displacement = std::max(c.displacement, (c.refined.polygon.vertices[i] - seed.vertices[i]).norm());
  c.length_difference = std::abs(c.refined.length - traj.total_length);
  const double tol = 1e-3 * traj.total_length;
  c.pass = c.displacement <= tol && c.length_difference <= tol;
  return c;
}

double confocal_invariant(const Ellipsoid &ellipse, const Vec &p, const Vec &u) {
  if (ellipse.semi_axes.size() != 2) fail(ErrorCode::InvalidArgument, "the confocal invariant is defined for ellipses");
  const int major = ellipse.semi_axes[0] >= ellipse.semi_axes[1] ? 0 : 1;
  const double a = ellipse.semi_axes[major];
  const double b = ellipse.semi_axes[1 - major];
  Vec f = Vec::Zero(2);
  f[major] = std::sqrt(a * a - b * b);
  auto cross = [](const Vec &x, const Vec &y) { return x[0] * y[1] - x[1] * y[0]; };
  Vec w = u.normalized();
  return cross(p - ellipse.center - f, w) * cross(p - ellipse.center + f, w);
}

std::vector<RefineResult> orbit_catalog(const Domain &domain) {
  const int n = domain.dim();
  const Vec &w = domain.inradius_witness();
  BoundingBox box = domain.bounding_box();
  const double t_max = 2.0 * (box.hi - box.lo).norm() + 1.0;
  auto hit = [&](const Vec &dir) { return Vec(w + domain.ray_hit(w, dir, t_max) * dir); };

  std::vector<std::vector<Vec>> shapes;
  for (int a = 0; a < n; ++a) {
    Vec e = Vec::Unit(n, a);
    shapes.push_back({e, -e});
  }
  for (int k = 3; k <= n + 1; ++k) {
    std::vector<Vec> dirs;
    if (k == 3) {
      for (int j = 0; j < 3; ++j) {
        double ang = std::numbers::pi / 2 + 2.0 * std::numbers::pi * j / 3.0;
        Vec d = Vec::Zero(n);
        d[0] = std::cos(ang);
        d[1] = std::sin(ang);
        dirs.push_back(d);
      }
    } else {
      const double s = 1.0 / std::sqrt(3.0);
      const double signs[4][3] = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
      for (const auto &sg : signs) {
        Vec d = Vec::Zero(n);
        for (int i = 0; i < 3; ++i) d[i] = sg[i] * s;
        dirs.push_back(d);
      }
    }
    shapes.push_back(dirs);
  }

  std::vector<RefineResult> out;
  for (const auto &dirs : shapes) {
    BouncePolygon seed;
    try {
      for (const Vec &d : dirs) seed.vertices.push_back(hit(d));
      RefineResult r = refine_polygon(domain, seed);
      bool dup = false;
      for (const auto &o : out)
        dup = dup || (o.polygon.k() == r.polygon.k() && std::abs(o.length - r.length) <= 1e-8 * r.length);
      if (!dup) out.push_back(std::move(r));
    } catch (const Error &) {
    }
  }
  return out;
}

} // namespace shortorbit
