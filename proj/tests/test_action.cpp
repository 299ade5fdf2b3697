#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fixtures;

namespace {

DiscreteLoop constant_loop(const Vec &q, int n_nodes, double tau) {
  DiscreteLoop loop;
  loop.points = q.replicate(1, n_nodes);
  loop.tau = tau;
  return loop;
}

DiscreteLoop circle_loop(const Vec &c, double rho, int n_nodes, double tau) {
  DiscreteLoop loop;
  loop.points.resize(2, n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    double t = 2 * std::numbers::pi * i / n_nodes;
    loop.points.col(i) = c + rho * v2(std::cos(t), std::sin(t));
  }
  loop.tau = tau;
  return loop;
}

// Central differences of the action in every coordinate, tau last.
Eigen::VectorXd fd_gradient(const Domain &d, const PenaltyConfig &cfg, const DiscreteLoop &loop, double energy,
                            double h) {
  const int n = loop.dim(), m = loop.size();
  Eigen::VectorXd g(n * m + 1);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < n; ++k) {
      DiscreteLoop plus = loop, minus = loop;
      plus.points(k, i) += h;
      minus.points(k, i) -= h;
      g[i * n + k] = (action(d, cfg, plus, energy) - action(d, cfg, minus, energy)) / (2 * h);
    }
  DiscreteLoop plus = loop, minus = loop;
  plus.tau += h;
  minus.tau -= h;
  g[n * m] = (action(d, cfg, plus, energy) - action(d, cfg, minus, energy)) / (2 * h);
  return g;
}

Eigen::VectorXd flat(const ActionGradient &g) {
  const Eigen::Index size = g.d_points.size();
  Eigen::VectorXd out(size + 1);
  out.head(size) = Eigen::Map<const Eigen::VectorXd>(g.d_points.data(), size);
  out[size] = g.d_tau;
  return out;
}

} // namespace

TEST_CASE("action of a constant loop on the plateau") {
  Domain d = Domain::build(disk());
  PenaltyConfig cfg = PenaltyConfig::make(0.25, 0.01);
  DiscreteLoop loop = constant_loop(v2(0, 0), 64, 1.0);
  double expected = 0.5 - 0.01 / (0.375 * 0.375);
  CHECK(action(d, cfg, loop, 0.5) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.42889).epsilon(1e-5));
  ActionGradient g = action_grad(d, cfg, loop, 0.5);
  CHECK(g.d_points.norm() == 0.0);
  CHECK(g.d_tau == doctest::Approx(0.5 - 0.01 / (0.375 * 0.375)).epsilon(1e-14));
}

TEST_CASE("kinetic-only action") {
  Domain d = Domain::build(disk());
  PenaltyConfig cfg = PenaltyConfig::make(0.25, 0.0);
  Rng rng(1);
  for (int k = 0; k < 10; ++k) {
    DiscreteLoop loop = random_loop(d, rng, 64, 0.05);
    double a = action(d, cfg, loop, 0.0);
    CHECK(a >= 0.0);
    CHECK(a == doctest::Approx(0.5 * kinetic_integral(loop)).epsilon(1e-13));
  }
}

TEST_CASE("circle loop: closed form and grid convergence") {
  Domain d = Domain::build(disk());
  PenaltyConfig cfg = PenaltyConfig::make(0.25, 0.0);
  const double rho = 0.2, tau = 1.3, energy = 0.5;
  const double continuum = tau * (0.5 / (tau * tau) * std::pow(2 * std::numbers::pi * rho, 2) + energy);
  std::vector<double> errs;
  for (int n_nodes : {32, 64, 128, 256}) {
    DiscreteLoop loop = circle_loop(v2(0, 0), rho, n_nodes, tau);
    double chord = 2 * rho * std::sin(std::numbers::pi / n_nodes);
    double discrete = tau * (0.5 / (tau * tau) * n_nodes * n_nodes * chord * chord + energy);
    double a = action(d, cfg, loop, energy);
    CHECK(a == doctest::Approx(discrete).epsilon(1e-13));
    errs.push_back(std::abs(a - continuum));
  }
  for (std::size_t i = 0; i + 1 < errs.size(); ++i) CHECK(std::log2(errs[i] / errs[i + 1]) >= 1.8);
}

TEST_CASE("action gradient against central differences") {
  SUBCASE("random smooth loop, N = 64") {
    Domain d = Domain::build(ellipse());
    PenaltyConfig cfg = PenaltyConfig::make(d.suggested_d0(), 1e-2);
    Rng rng(17);
    DiscreteLoop loop = random_loop(d, rng, 64, 0.3 * cfg.d0);
    Eigen::VectorXd g = flat(action_grad(d, cfg, loop, 0.5));
    Eigen::VectorXd fd = fd_gradient(d, cfg, loop, 0.5, 1e-6);
    CHECK((g - fd).norm() / g.norm() <= 1e-6);
  }
  SUBCASE("20 loops on each suite domain") {
    for (const auto &[name, spec] : suite()) {
      CAPTURE(name);
      Domain d = Domain::build(spec);
      PenaltyConfig cfg = PenaltyConfig::make(d.suggested_d0(), 1e-2);
      Rng rng(23);
      double worst = 0.0;
      for (int k = 0; k < 20; ++k) {
        DiscreteLoop loop = random_loop(d, rng, 48, 0.3 * cfg.d0);
        Eigen::VectorXd g = flat(action_grad(d, cfg, loop, 0.5));
        Eigen::VectorXd fd = fd_gradient(d, cfg, loop, 0.5, 1e-6);
        worst = std::max(worst, (g - fd).norm() / g.norm());
      }
      CHECK(worst <= 1e-5);
    }
  }
}

TEST_CASE("action Hessian spot checks") {
  for (const auto &[name, spec] : suite()) {
    CAPTURE(name);
    Domain d = Domain::build(spec);
    PenaltyConfig cfg = PenaltyConfig::make(d.suggested_d0(), 1e-2);
    Rng rng(31);
    DiscreteLoop loop = random_loop(d, rng, 48, 0.3 * cfg.d0);
    const int n = loop.dim(), m = loop.size();
    NodeTerms terms = evaluate_nodes(d, cfg, loop, true);
    Eigen::MatrixXd hess = Eigen::MatrixXd(action_hessian(cfg, loop, terms));
    Eigen::MatrixXd fixed = Eigen::MatrixXd(fixed_tau_hessian(cfg, loop, terms));
    CHECK((hess.topLeftCorner(n * m, n * m) - fixed).norm() == 0.0);
    CHECK((hess - hess.transpose()).norm() <= 1e-12 * hess.norm());

    const double h = 1e-6;
    std::vector<int> cols = {0, 1, n * m / 2, n * m - 1, n * m};
    for (int k = 0; k < 4; ++k) cols.push_back(static_cast<int>(rng.uniform() * n * m));
    for (int c : cols) {
      DiscreteLoop plus = loop, minus = loop;
      if (c == n * m) {
        plus.tau += h;
        minus.tau -= h;
      } else {
        plus.points(c % n, c / n) += h;
        minus.points(c % n, c / n) -= h;
      }
      Eigen::VectorXd fd = (flat(action_grad(d, cfg, plus, 0.5)) - flat(action_grad(d, cfg, minus, 0.5))) / (2 * h);
      CHECK((fd - hess.col(c)).norm() / hess.col(c).norm() <= 1e-3);
    }
  }
}

TEST_CASE("serial and OpenMP node kernels agree bitwise") {
  for (const auto &[name, spec] : suite()) {
    CAPTURE(name);
    Domain d = Domain::build(spec);
    PenaltyConfig cfg = PenaltyConfig::make(d.suggested_d0(), 1e-2);
    Rng rng(41);
    DiscreteLoop loop = random_loop(d, rng, 512, 0.3 * cfg.d0);
    NodeTerms a = evaluate_nodes(d, cfg, loop, true, Parallel::Serial);
    NodeTerms b = evaluate_nodes(d, cfg, loop, true, Parallel::OpenMP);
    CHECK(a.u == b.u);
    CHECK(a.dist == b.dist);
    CHECK((a.grad.array() == b.grad.array()).all());
    bool same = true;
    for (std::size_t i = 0; i < a.hess.size(); ++i) same = same && (a.hess[i].array() == b.hess[i].array()).all();
    CHECK(same);
  }
}

TEST_CASE("loops leaving the domain are rejected") {
  Domain d = Domain::build(disk());
  PenaltyConfig cfg = PenaltyConfig::make(0.25, 0.01);
  DiscreteLoop loop = circle_loop(v2(0, 0), 0.5, 32, 3.0);
  CHECK(loop_inside(d, loop));
  loop.points.col(3) = v2(1.2, 0);
  CHECK_FALSE(loop_inside(d, loop));
  CHECK_THROWS_AS(action(d, cfg, loop, 0.5), Error);
  CHECK_THROWS_AS(action_grad(d, cfg, loop, 0.5), Error);
}

TEST_CASE("loop diagnostics") {
  Domain d = Domain::build(disk());
  PenaltyConfig cfg = PenaltyConfig::make(0.25, 0.0);
  const int n_nodes = 64;
  const double rho = 0.3;
  const double chord = 2 * rho * std::sin(std::numbers::pi / n_nodes);
  DiscreteLoop loop = circle_loop(v2(0, 0), rho, n_nodes, n_nodes * chord); // unit edge speed
  for (double s : edge_speeds(loop)) CHECK(s == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(kinetic_integral(loop) == doctest::Approx(loop.tau).epsilon(1e-13));
  NodeTerms terms = evaluate_nodes(d, cfg, loop, false);
  for (double e : node_energies(cfg, loop, terms)) CHECK(e == doctest::Approx(0.5).epsilon(1e-13));
  // A circle at unit speed is not critical without a central force: the residual is the
  // centripetal second difference.
  CHECK(el_residual(cfg, loop, terms) == doctest::Approx(chord * chord * n_nodes * n_nodes / rho).epsilon(1e-3));

  DiscreteLoop same = resample(loop, n_nodes);
  CHECK((same.points - loop.points).norm() == 0.0);
  DiscreteLoop fine = resample(loop, 2 * n_nodes);
  CHECK(fine.size() == 2 * n_nodes);
  CHECK(fine.tau == loop.tau);
  CHECK((fine.points.col(0) - loop.points.col(0)).norm() == 0.0);
  CHECK((fine.points.col(1) - 0.5 * (loop.points.col(0) + loop.points.col(1))).norm() < 1e-15);
}
