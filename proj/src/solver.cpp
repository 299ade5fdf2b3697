#include "shortorbit/solver.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <optional>

namespace shortorbit {

namespace {

struct State {
  DiscreteLoop loop;
  NodeTerms terms;
  ActionGradient grad;
  double gnorm = 0.0;
};

Eigen::VectorXd flatten(const ActionGradient &g) {
  const Eigen::Index dof = g.d_points.size();
  Eigen::VectorXd out(dof + 1);
  out.head(dof) = g.d_points.reshaped();
  out[dof] = g.d_tau;
  return out;
}

DiscreteLoop displaced(const DiscreteLoop &loop, const Eigen::VectorXd &step, double alpha) {
  DiscreteLoop out = loop;
  const Eigen::Index dof = loop.points.size();
  out.points.reshaped() += alpha * step.head(dof);
  out.tau += alpha * step[dof];
  return out;
}

double max_node_step(const Eigen::VectorXd &step, int n) {
  const Eigen::Index nodes = (step.size() - 1) / n;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < nodes; ++i) worst = std::max(worst, step.segment(i * n, n).norm());
  return worst;
}

// Evaluates gradient data at a trial loop; false if the loop is not admissible.
bool try_state(const Domain &domain, const PenaltyConfig &cfg, double energy, DiscreteLoop loop, State &out) {
  if (!loop_inside(domain, loop)) return false;
  try {
    out.terms = evaluate_nodes(domain, cfg, loop, false);
  } catch (const Error &) {
    return false;
  }
  out.grad = action_grad(cfg, loop, out.terms, energy);
  out.gnorm = out.grad.norm();
  out.loop = std::move(loop);
  return std::isfinite(out.gnorm);
}

Eigen::SparseMatrix<double> hessian_at(const Domain &domain, const PenaltyConfig &cfg, const DiscreteLoop &loop) {
  return action_hessian(cfg, loop, evaluate_nodes(domain, cfg, loop, true));
}

// Newton direction for grad A = 0 with the symmetric indefinite Hessian.
bool newton_direction(const Eigen::SparseMatrix<double> &hmat, const Eigen::VectorXd &g, Eigen::VectorXd &step) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(hmat);
  if (ldlt.info() == Eigen::Success) {
    step = ldlt.solve(-g);
    if (ldlt.info() == Eigen::Success && step.allFinite()) return true;
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(hmat);
  lu.factorize(hmat);
  if (lu.info() != Eigen::Success) return false;
  step = lu.solve(-g);
  return lu.info() == Eigen::Success && step.allFinite();
}

// Solves min |H s + g|^2 + mu |s|^2 through the quasi-definite system
// [-I H; H mu I] [r; s] = [-g; 0], which avoids forming H^2.
class DampedSolver {
public:
  explicit DampedSolver(const Eigen::SparseMatrix<double> &hmat) : m_(hmat.rows()) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(2 * hmat.nonZeros() + 2 * m_));
    for (Eigen::Index i = 0; i < m_; ++i) {
      trips.emplace_back(i, i, -1.0);
      trips.emplace_back(m_ + i, m_ + i, 1.0);
    }
    for (Eigen::Index k = 0; k < hmat.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(hmat, k); it; ++it) {
        trips.emplace_back(it.row(), m_ + it.col(), it.value());
        trips.emplace_back(m_ + it.row(), it.col(), it.value());
        scale2_ = std::max(scale2_, it.value() * it.value());
      }
    k_.resize(2 * m_, 2 * m_);
    k_.setFromTriplets(trips.begin(), trips.end());
    ldlt_.analyzePattern(k_);
  }

  [[nodiscard]] double scale2() const { return scale2_; }

  bool solve(double mu, const Eigen::VectorXd &g, Eigen::VectorXd &step) {
    for (Eigen::Index i = 0; i < m_; ++i) k_.coeffRef(m_ + i, m_ + i) = mu;
    ldlt_.factorize(k_);
    if (ldlt_.info() != Eigen::Success) return false;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * m_);
    rhs.head(m_) = -g;
    Eigen::VectorXd sol = ldlt_.solve(rhs);
    if (ldlt_.info() != Eigen::Success || !sol.allFinite()) return false;
    step = sol.tail(m_);
    return true;
  }

private:
  Eigen::Index m_;
  double scale2_ = 0.0;
  Eigen::SparseMatrix<double> k_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

} // namespace

void annotate(const Domain &domain, const PenaltyConfig &cfg, double energy, CriticalPoint &cp) {
  NodeTerms terms = evaluate_nodes(domain, cfg, cp.loop, false);
  cp.action_value = action(cfg, cp.loop, terms, energy);
  cp.grad_norm = action_grad(cfg, cp.loop, terms, energy).norm();
  cp.el_residual = el_residual(cfg, cp.loop, terms);
  std::vector<double> e = node_energies(cfg, cp.loop, terms);
  double mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
  double var = 0.0;
  double worst = 0.0;
  for (double v : e) {
    var += (v - mean) * (v - mean);
    worst = std::max(worst, std::abs(v - energy));
  }
  cp.energy_stdev = std::sqrt(var / static_cast<double>(e.size()));
  cp.energy_residual = worst;
  cp.kinetic_integral = kinetic_integral(cp.loop);
}

CriticalPoint find_critical_point(const Domain &domain, const PenaltyConfig &cfg, const DiscreteLoop &seed,
                                  double energy, const SolveOptions &opts) {
  const int big_n = seed.size();
  const int n = seed.dim();
  if (n != domain.dim()) fail(ErrorCode::InvalidArgument, "seed dimension does not match the domain");
  if (big_n < 32 || big_n % 2 != 0) fail(ErrorCode::InvalidArgument, "N must be even and >= 32");
  if (!(energy > 0.0)) fail(ErrorCode::InvalidArgument, "energy must be positive");
  if (!(seed.tau > 0.0)) fail(ErrorCode::DegenerateTau, "seed period must be positive");

  const double tol = opts.tol > 0 ? opts.tol : 1e-8 * big_n;
  const double tau_floor = 1e-6;

  State cur;
  if (!loop_inside(domain, seed)) fail(ErrorCode::PointOutsideDomain, "seed loop leaves the domain");
  cur.loop = seed;
  cur.terms = evaluate_nodes(domain, cfg, seed, false);
  cur.grad = action_grad(cfg, seed, cur.terms, energy);
  cur.gnorm = cur.grad.norm();

  auto converged = [&](const State &s) {
    return s.gnorm <= tol && el_residual(cfg, s.loop, s.terms) <= opts.el_tol;
  };

  CriticalPoint result;
  double radius = opts.trust_radius > 0 ? opts.trust_radius : 0.1 * domain.scale();

  if (!converged(cur)) {
    // L-BFGS warm start on phi = |g|^2 / 2, whose gradient is H g.
    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;
    Eigen::VectorXd g = flatten(cur.grad);
    Eigen::VectorXd merit_grad = hessian_at(domain, cfg, cur.loop) * g;
    for (int it = 0; it < opts.lbfgs_iters && !converged(cur); ++it) {
      Eigen::VectorXd q = merit_grad;
      std::vector<double> alphas;
      for (auto m = memory.rbegin(); m != memory.rend(); ++m) {
        double a = m->first.dot(q) / m->second.dot(m->first);
        alphas.push_back(a);
        q -= a * m->second;
      }
      if (!memory.empty()) q *= memory.back().first.dot(memory.back().second) / memory.back().second.squaredNorm();
      int k = static_cast<int>(alphas.size()) - 1;
      for (auto &m : memory) {
        double b = m.second.dot(q) / m.second.dot(m.first);
        q += (alphas[static_cast<std::size_t>(k--)] - b) * m.first;
      }
      Eigen::VectorXd dir = -q;
      if (dir.dot(merit_grad) >= 0) dir = -merit_grad;
      double node_step = max_node_step(dir, n);
      if (node_step > radius) dir *= radius / node_step;
      if (std::abs(dir[dir.size() - 1]) > 0.25 * cur.loop.tau) dir *= 0.25 * cur.loop.tau / std::abs(dir[dir.size() - 1]);

      const double phi = 0.5 * cur.gnorm * cur.gnorm;
      const double slope = dir.dot(merit_grad);
      State trial;
      bool accepted = false;
      for (double alpha = 1.0; alpha > 1e-10; alpha *= 0.5) {
        if (try_state(domain, cfg, energy, displaced(cur.loop, dir, alpha), trial) &&
            0.5 * trial.gnorm * trial.gnorm <= phi + 1e-4 * alpha * slope) {
          accepted = true;
          Eigen::VectorXd s = alpha * dir;
          Eigen::VectorXd g_new = flatten(trial.grad);
          Eigen::VectorXd mg_new = hessian_at(domain, cfg, trial.loop) * g_new;
          Eigen::VectorXd y = mg_new - merit_grad;
          if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
            memory.emplace_back(s, y);
            if (memory.size() > 8) memory.pop_front();
          }
          merit_grad = mg_new;
          cur = std::move(trial);
          break;
        }
      }
      if (!accepted) break;
      ++result.lbfgs_iterations;
    }

    double mu = 0.0;
    std::deque<double> history;
    while (!converged(cur)) {
      // A soft mode whose valley curves away from the Newton tangent makes progress
      // geometric with ratio near 1; stop early instead of exhausting max_iters.
      history.push_back(cur.gnorm);
      if (history.size() > 25) {
        history.pop_front();
        if (cur.gnorm > tol && history.back() > 0.5 * history.front())
          fail(ErrorCode::NoConvergence, "Newton stagnated at |grad| = " + std::to_string(cur.gnorm));
      }
      if (result.iterations >= opts.max_iters)
        fail(ErrorCode::NoConvergence, "Newton did not converge in " + std::to_string(opts.max_iters) +
                                           " iterations (|grad| = " + std::to_string(cur.gnorm) + ")");
      ++result.iterations;
      Eigen::SparseMatrix<double> hmat = hessian_at(domain, cfg, cur.loop);
      Eigen::VectorXd g = flatten(cur.grad);
      auto fits = [&](const Eigen::VectorXd &s) {
        return max_node_step(s, n) <= radius && std::abs(s[s.size() - 1]) <= 0.25 * cur.loop.tau;
      };

      Eigen::VectorXd newton;
      const bool have_newton = newton_direction(hmat, g, newton);
      std::optional<DampedSolver> damped;
      State trial;
      bool accepted = false;
      bool used_newton = false;
      for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
        Eigen::VectorXd step;
        if (have_newton && fits(newton)) {
          step = newton;
          used_newton = true;
        } else {
          // Trust region on max node displacement: raise the damping until the step fits.
          if (!damped) damped.emplace(hmat);
          used_newton = false;
          mu = std::max(mu, 1e-14 * damped->scale2());
          for (int k = 0; k < 80; ++k) {
            if (damped->solve(mu, g, step) && fits(step)) break;
            mu *= 10.0;
          }
          if (have_newton && fits(step)) {
            // Dogleg toward the Newton point: the damped step settles the stiff modes,
            // the remainder moves along the soft ones as far as the region allows.
            const Eigen::VectorXd rest = newton - step;
            double lo = 0.0;
            double hi = 1.0;
            for (int k = 0; k < 40; ++k) {
              double mid = 0.5 * (lo + hi);
              (fits(step + mid * rest) ? lo : hi) = mid;
            }
            step += lo * rest;
          }
        }
        if (try_state(domain, cfg, energy, displaced(cur.loop, step, 1.0), trial) &&
            trial.gnorm < (1.0 - 1e-4) * cur.gnorm) {
          accepted = true;
          const double moved = max_node_step(step, n);
          if (used_newton) {
            mu = 0.0;
            radius = std::max(radius, 2.0 * moved);
          } else {
            mu *= 0.1;
            radius *= 2.0;
          }
        } else {
          radius = std::min(radius, max_node_step(step, n)) * 0.25;
          if (radius < 1e-14 * domain.scale()) break;
        }
      }
      if (!accepted) {
        // Roundoff floor. Second differences of stored points are quantized at N^2 ulp(|x|),
        // so long fine loops can stall above el_tol; past el_floor_tol the point is rejected.
        if (cur.gnorm <= tol) {
          const double el = el_residual(cfg, cur.loop, cur.terms);
          if (el <= opts.el_floor_tol) break;
          char msg[96];
          std::snprintf(msg, sizeof msg, "EL residual %.3e at the roundoff floor (N = %d)", el, big_n);
          fail(ErrorCode::NoConvergence, msg);
        }
        fail(ErrorCode::LeftDomain, "no admissible step reduces |grad| (|grad| = " + std::to_string(cur.gnorm) + ")");
      }
      cur = std::move(trial);
      if (cur.loop.tau < tau_floor) fail(ErrorCode::DegenerateTau, "period collapsed below 1e-6");
    }
  }

  result.loop = std::move(cur.loop);
  annotate(domain, cfg, energy, result);
  if (opts.compute_index) result.morse_index_fixed_tau = morse_index_fixed_tau(domain, cfg, result, energy, opts.index_eig_tol);
  return result;
}

double largest_abs_eigenvalue(const Eigen::SparseMatrix<double> &m, int iterations) {
  Eigen::VectorXd v(m.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd w = m * v;
    double norm = w.norm();
    if (norm == 0.0) return 0.0;
    lambda = norm;
    v = w / norm;
  }
  return lambda;
}

int morse_index(const Eigen::SparseMatrix<double> &hessian, double rel_tol) {
  const double scale = largest_abs_eigenvalue(hessian);
  Eigen::SparseMatrix<double> shifted = hessian;
  for (Eigen::Index i = 0; i < shifted.rows(); ++i) shifted.coeffRef(i, i) += rel_tol * scale;
  // Sylvester: the inertia of D in P A P^T = L D L^T equals that of A.
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) fail(ErrorCode::HessianAssemblyFailure, "LDL^T of the shifted Hessian failed");
  const Eigen::VectorXd d = ldlt.vectorD();
  if (!d.allFinite()) fail(ErrorCode::HessianAssemblyFailure, "non-finite pivots in the shifted Hessian");
  return static_cast<int>((d.array() < 0.0).count());
}

int morse_index_fixed_tau(const Domain &domain, const PenaltyConfig &cfg, const CriticalPoint &at, double /*energy*/,
                          double rel_tol) {
  NodeTerms terms = evaluate_nodes(domain, cfg, at.loop, true);
  return morse_index(fixed_tau_hessian(cfg, at.loop, terms), rel_tol);
}

} // namespace shortorbit
