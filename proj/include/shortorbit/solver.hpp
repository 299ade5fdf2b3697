#pragma once

#include "shortorbit/action.hpp"

#include <cstdint>

namespace shortorbit {

struct SolveOptions {
  double tol = 0.0;          ///< gradient-norm tolerance; <= 0 means 1e-8 * N
  double el_tol = 1e-7;      ///< max per-node Euler-Lagrange residual
  double el_floor_tol = 1e-6; ///< EL bound still accepted when no step can reduce |grad| further
  int max_iters = 200;       ///< Newton iterations
  int lbfgs_iters = 10;      ///< warm-start iterations on |grad|^2 / 2
  double index_eig_tol = 1e-7; ///< negative-eigenvalue threshold, relative to the largest |eigenvalue|
  bool compute_index = true;
  double trust_radius = 0.0; ///< initial max node displacement; <= 0 means 0.1 * domain scale
};

/// A converged critical point of the discrete free-time action with its diagnostics.
struct CriticalPoint {
  DiscreteLoop loop;
  double action_value = 0.0;
  double grad_norm = 0.0;
  double el_residual = 0.0;
  double energy_residual = 0.0; ///< max_i |E_i - E|
  double energy_stdev = 0.0;
  double kinetic_integral = 0.0;
  int morse_index_fixed_tau = -1; ///< -1 when not computed
  int iterations = 0;             ///< Newton iterations
  int lbfgs_iterations = 0;
};

CriticalPoint find_critical_point(const Domain &domain, const PenaltyConfig &cfg, const DiscreteLoop &seed,
                                  double energy, const SolveOptions &opts = {});

/// Number of eigenvalues below -rel_tol * max|eigenvalue| of the fixed-tau Hessian,
/// counted from the LDL^T inertia of the shifted matrix.
int morse_index_fixed_tau(const Domain &domain, const PenaltyConfig &cfg, const CriticalPoint &at, double energy,
                          double rel_tol = 1e-7);
int morse_index(const Eigen::SparseMatrix<double> &hessian, double rel_tol);

/// Power-iteration estimate of the largest eigenvalue magnitude of a symmetric matrix.
double largest_abs_eigenvalue(const Eigen::SparseMatrix<double> &m, int iterations = 200);

/// Fills the diagnostic fields of `cp` from its loop.
void annotate(const Domain &domain, const PenaltyConfig &cfg, double energy, CriticalPoint &cp);

} // namespace shortorbit
