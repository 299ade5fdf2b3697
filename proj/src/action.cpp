#include "shortorbit/action.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

namespace shortorbit {

namespace {

struct NodeFailure {
  ErrorCode code = ErrorCode::PointOutsideDomain;
  std::string what;
};

void eval_node(const Domain &domain, const PenaltyConfig &cfg, const DiscreteLoop &loop, bool with_hessian, int i,
               NodeTerms &out) {
  const int n = loop.dim();
  Vec q = loop.points.col(i);
  if (!domain.inside(q)) fail(ErrorCode::PointOutsideDomain, "loop node " + std::to_string(i) + " left the domain");
  if (cfg.eps == 0.0) {
    out.u[static_cast<std::size_t>(i)] = 0.0;
    out.dist[static_cast<std::size_t>(i)] = domain.interior_dist_lower_bound(q);
    out.grad.col(i).setZero();
    if (with_hessian) out.hess[static_cast<std::size_t>(i)] = Mat::Zero(n, n);
    return;
  }
  PotentialValue pv = potential_U(domain, cfg, q, with_hessian);
  out.u[static_cast<std::size_t>(i)] = pv.u;
  out.dist[static_cast<std::size_t>(i)] = pv.dist;
  out.grad.col(i) = pv.grad;
  if (with_hessian) out.hess[static_cast<std::size_t>(i)] = pv.hess;
}

inline int wrap(int i, int n) { return (i % n + n) % n; }

} // namespace

NodeTerms evaluate_nodes(const Domain &domain, const PenaltyConfig &cfg, const DiscreteLoop &loop, bool with_hessian,
                         Parallel mode) {
  const int big_n = loop.size();
  NodeTerms out;
  out.u.assign(static_cast<std::size_t>(big_n), 0.0);
  out.dist.assign(static_cast<std::size_t>(big_n), 0.0);
  out.grad.resize(loop.dim(), big_n);
  if (with_hessian) out.hess.resize(static_cast<std::size_t>(big_n));

  if (mode == Parallel::Serial) {
    for (int i = 0; i < big_n; ++i) eval_node(domain, cfg, loop, with_hessian, i, out);
    return out;
  }

  // Exceptions may not leave the parallel region; keep the lowest failing index.
  std::atomic<int> first_bad{big_n};
  std::vector<NodeFailure> failures(static_cast<std::size_t>(big_n));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < big_n; ++i) {
    try {
      eval_node(domain, cfg, loop, with_hessian, i, out);
    } catch (const Error &e) {
      failures[static_cast<std::size_t>(i)] = {e.code(), e.what()};
      int cur = first_bad.load();
      while (i < cur && !first_bad.compare_exchange_weak(cur, i)) {
      }
    }
  }
  if (first_bad.load() < big_n) {
    const auto &f = failures[static_cast<std::size_t>(first_bad.load())];
    throw Error(f.code, f.what);
  }
  return out;
}

bool loop_inside(const Domain &domain, const DiscreteLoop &loop) {
  if (!(loop.tau > 0.0) || !loop.points.allFinite()) return false;
  for (int i = 0; i < loop.size(); ++i)
    if (!domain.inside(loop.points.col(i))) return false;
  return true;
}

double action(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms, double energy) {
  const int big_n = loop.size();
  const double h = 1.0 / big_n;
  const double tau = loop.tau;
  double kinetic = 0.0;
  double potential = 0.0;
  for (int i = 0; i < big_n; ++i) {
    kinetic += (loop.points.col(wrap(i + 1, big_n)) - loop.points.col(i)).squaredNorm();
    potential += energy - cfg.eps * terms.u[static_cast<std::size_t>(i)];
  }
  return kinetic / (2.0 * tau * h) + tau * h * potential;
}

double action(const Domain &domain, const PenaltyConfig &cfg, const DiscreteLoop &loop, double energy) {
  return action(cfg, loop, evaluate_nodes(domain, cfg, loop, false), energy);
}

ActionGradient action_grad(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms, double energy) {
  const int big_n = loop.size();
  const double h = 1.0 / big_n;
  const double tau = loop.tau;
  ActionGradient g;
  g.d_points.resize(loop.dim(), big_n);
  double kinetic = 0.0;
  double potential = 0.0;
  for (int i = 0; i < big_n; ++i) {
    const auto prev = loop.points.col(wrap(i - 1, big_n));
    const auto next = loop.points.col(wrap(i + 1, big_n));
    const auto cur = loop.points.col(i);
    g.d_points.col(i) = (2.0 * cur - prev - next) / (tau * h) - tau * h * cfg.eps * terms.grad.col(i);
    kinetic += (next - cur).squaredNorm();
    potential += energy - cfg.eps * terms.u[static_cast<std::size_t>(i)];
  }
  g.d_tau = -kinetic / (2.0 * tau * tau * h) + h * potential;
  return g;
}

ActionGradient action_grad(const Domain &domain, const PenaltyConfig &cfg, const DiscreteLoop &loop, double energy) {
  return action_grad(cfg, loop, evaluate_nodes(domain, cfg, loop, false), energy);
}

namespace {

void push_node_blocks(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms,
                      std::vector<Eigen::Triplet<double>> &trips) {
  const int big_n = loop.size();
  const int n = loop.dim();
  const double h = 1.0 / big_n;
  const double tau = loop.tau;
  const double stiff = 1.0 / (tau * h);
  for (int i = 0; i < big_n; ++i) {
    const Mat &hu = terms.hess[static_cast<std::size_t>(i)];
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        double v = -tau * h * cfg.eps * hu(a, b);
        if (a == b) v += 2.0 * stiff;
        if (v != 0.0) trips.emplace_back(i * n + a, i * n + b, v);
      }
      trips.emplace_back(i * n + a, wrap(i + 1, big_n) * n + a, -stiff);
      trips.emplace_back(i * n + a, wrap(i - 1, big_n) * n + a, -stiff);
    }
  }
}

} // namespace

Eigen::SparseMatrix<double> fixed_tau_hessian(const PenaltyConfig &cfg, const DiscreteLoop &loop,
                                              const NodeTerms &terms) {
  if (terms.hess.size() != static_cast<std::size_t>(loop.size()))
    fail(ErrorCode::HessianAssemblyFailure, "node hessians were not evaluated");
  const int dof = loop.size() * loop.dim();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(dof) * static_cast<std::size_t>(loop.dim() + 2));
  push_node_blocks(cfg, loop, terms, trips);
  Eigen::SparseMatrix<double> hmat(dof, dof);
  hmat.setFromTriplets(trips.begin(), trips.end());
  return hmat;
}

Eigen::SparseMatrix<double> action_hessian(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms) {
  if (terms.hess.size() != static_cast<std::size_t>(loop.size()))
    fail(ErrorCode::HessianAssemblyFailure, "node hessians were not evaluated");
  const int big_n = loop.size();
  const int n = loop.dim();
  const int dof = big_n * n;
  const double h = 1.0 / big_n;
  const double tau = loop.tau;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(dof) * static_cast<std::size_t>(n + 4));
  push_node_blocks(cfg, loop, terms, trips);
  double kinetic = 0.0;
  for (int i = 0; i < big_n; ++i) {
    const auto prev = loop.points.col(wrap(i - 1, big_n));
    const auto next = loop.points.col(wrap(i + 1, big_n));
    const auto cur = loop.points.col(i);
    Eigen::VectorXd mixed = -(2.0 * cur - prev - next) / (tau * tau * h) - h * cfg.eps * terms.grad.col(i);
    for (int a = 0; a < n; ++a) {
      trips.emplace_back(i * n + a, dof, mixed[a]);
      trips.emplace_back(dof, i * n + a, mixed[a]);
    }
    kinetic += (next - cur).squaredNorm();
  }
  trips.emplace_back(dof, dof, kinetic / (tau * tau * tau * h));
  Eigen::SparseMatrix<double> hmat(dof + 1, dof + 1);
  hmat.setFromTriplets(trips.begin(), trips.end());
  return hmat;
}

double kinetic_integral(const DiscreteLoop &loop) {
  const int big_n = loop.size();
  double sum = 0.0;
  for (int i = 0; i < big_n; ++i) sum += (loop.points.col(wrap(i + 1, big_n)) - loop.points.col(i)).squaredNorm();
  return sum * big_n / loop.tau;
}

std::vector<double> edge_speeds(const DiscreteLoop &loop) {
  const int big_n = loop.size();
  std::vector<double> out(static_cast<std::size_t>(big_n));
  for (int i = 0; i < big_n; ++i)
    out[static_cast<std::size_t>(i)] =
        (loop.points.col(wrap(i + 1, big_n)) - loop.points.col(i)).norm() * big_n / loop.tau;
  return out;
}

double el_residual(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms) {
  const int big_n = loop.size();
  const double n2 = static_cast<double>(big_n) * big_n;
  const double tau2 = loop.tau * loop.tau;
  double worst = 0.0;
  for (int i = 0; i < big_n; ++i) {
    Eigen::VectorXd r = (loop.points.col(wrap(i + 1, big_n)) - 2.0 * loop.points.col(i) +
                         loop.points.col(wrap(i - 1, big_n))) *
                            n2 +
                        tau2 * cfg.eps * terms.grad.col(i);
    worst = std::max(worst, r.norm());
  }
  return worst;
}

std::vector<double> node_energies(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms) {
  const int big_n = loop.size();
  std::vector<double> speeds = edge_speeds(loop);
  std::vector<double> out(static_cast<std::size_t>(big_n));
  for (int i = 0; i < big_n; ++i) {
    double before = speeds[static_cast<std::size_t>(wrap(i - 1, big_n))];
    double after = speeds[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] =
        0.25 * (before * before + after * after) + cfg.eps * terms.u[static_cast<std::size_t>(i)];
  }
  return out;
}

DiscreteLoop resample(const DiscreteLoop &loop, int new_size) {
  if (new_size < 2) fail(ErrorCode::InvalidArgument, "resample needs at least two nodes");
  const int old_n = loop.size();
  DiscreteLoop out;
  out.tau = loop.tau;
  out.points.resize(loop.dim(), new_size);
  for (int j = 0; j < new_size; ++j) {
    double s = static_cast<double>(j) * old_n / new_size;
    int i0 = static_cast<int>(std::floor(s));
    double frac = s - i0;
    i0 = wrap(i0, old_n);
    out.points.col(j) = (1.0 - frac) * loop.points.col(i0) + frac * loop.points.col(wrap(i0 + 1, old_n));
  }
  return out;
}

} // namespace shortorbit
