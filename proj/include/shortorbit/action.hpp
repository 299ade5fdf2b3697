#pragma once

#include "shortorbit/penalty.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <vector>

namespace shortorbit {

/// Closed loop sampled at N uniform parameter values on R/Z, plus its free period.
/// Column i of `points` is Gamma(i/N); Gamma(1) wraps to column 0.
struct DiscreteLoop {
  Eigen::MatrixXd points; ///< dim x N
  double tau = 1.0;

  [[nodiscard]] int size() const noexcept { return static_cast<int>(points.cols()); }
  [[nodiscard]] int dim() const noexcept { return static_cast<int>(points.rows()); }
  [[nodiscard]] Vec node(int i) const { return points.col(i); }
};

/// Per-node penalty data. Columns of `grad` are grad U at each node; `hess` is
/// filled only when requested.
struct NodeTerms {
  std::vector<double> u;
  std::vector<double> dist;
  Eigen::MatrixXd grad;
  std::vector<Mat> hess;
};

enum class Parallel { Serial, OpenMP };

/// U and its derivatives at every node. The serial kernel is the reference; the
/// OpenMP kernel must agree with it bitwise. Throws PointOutsideDomain.
NodeTerms evaluate_nodes(const Domain &domain, const PenaltyConfig &cfg, const DiscreteLoop &loop, bool with_hessian,
                         Parallel mode = Parallel::OpenMP);

/// True iff every node is strictly inside the domain.
bool loop_inside(const Domain &domain, const DiscreteLoop &loop);

// The discrete free-time action with h = 1/N and D_i = Gamma_{i+1} - Gamma_i:
//
//   A(Gamma, tau) = sum_i [ |D_i|^2 / (2 tau h) + tau h (E - eps U(Gamma_i)) ],
//
// i.e. tau * int [ |Gamma'|^2 / (2 tau^2) - eps U + E ] dt with forward-difference
// velocities and the periodic rectangle (= trapezoidal) rule. Derivatives below are
// exact derivatives of this sum.

double action(const Domain &domain, const PenaltyConfig &cfg, const DiscreteLoop &loop, double energy);
double action(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms, double energy);

struct ActionGradient {
  Eigen::MatrixXd d_points; ///< dim x N
  double d_tau = 0.0;

  [[nodiscard]] double norm() const { return std::sqrt(d_points.squaredNorm() + d_tau * d_tau); }
};

ActionGradient action_grad(const Domain &domain, const PenaltyConfig &cfg, const DiscreteLoop &loop, double energy);
ActionGradient action_grad(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms, double energy);

/// Hessian in (Gamma, tau), ordered node-major with tau last. `terms` must carry hessians.
Eigen::SparseMatrix<double> action_hessian(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms);
/// Hessian in Gamma at fixed tau.
Eigen::SparseMatrix<double> fixed_tau_hessian(const PenaltyConfig &cfg, const DiscreteLoop &loop,
                                              const NodeTerms &terms);

// Diagnostics of a (near-)critical loop.

/// int |d gamma/dt|^2 dt over one period: |D|^2 summed, times N / tau.
double kinetic_integral(const DiscreteLoop &loop);
/// Speed of each edge, |D_i| N / tau.
std::vector<double> edge_speeds(const DiscreteLoop &loop);
/// max_i | (Gamma_{i+1} - 2 Gamma_i + Gamma_{i-1}) N^2 + tau^2 eps grad U_i |.
double el_residual(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms);
/// Node energy: mean of the two adjacent edge kinetic energies plus eps U.
std::vector<double> node_energies(const PenaltyConfig &cfg, const DiscreteLoop &loop, const NodeTerms &terms);

/// Periodic linear resampling onto a new node count.
DiscreteLoop resample(const DiscreteLoop &loop, int new_size);

} // namespace shortorbit
