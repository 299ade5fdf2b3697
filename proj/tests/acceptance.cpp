// Acceptance run: every criterion at its stated tolerance, one PASS/FAIL line each.
#include "fixtures.hpp"

#include "shortorbit/cli.hpp"
#include "shortorbit/io.hpp"
#include "shortorbit/seeds.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace fixtures;
namespace fs = std::filesystem;
using io::json;

namespace {

const fs::path kConfigs = SHORTORBIT_CONFIGS;

struct Run {
  int exit_code = -1;
  double seconds = 0.0;
  json report;
  int dim = 0;
};

fs::path work_dir() {
  fs::path dir = fs::temp_directory_path() / "shortorbit_acceptance";
  fs::create_directories(dir);
  return dir;
}

Run find(const std::string &config, const fs::path &out) {
  io::RunConfig cfg;
  cfg.domain_file = kConfigs / (config + ".json");
  cfg.output_dir = out;
  cfg.seeds = 4;
  cfg.rng_seed = 1;
  fs::remove_all(out);
  std::ostringstream log;
  auto t0 = std::chrono::steady_clock::now();
  Run r;
  r.exit_code = cli::cmd_find(cfg, log);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (fs::exists(out / "report.json")) r.report = io::read_json(out / "report.json");
  r.dim = io::read_domain_spec(cfg.domain_file).dim;
  return r;
}

std::string slurp(const fs::path &file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void report(int id, const std::string &name, bool pass, const std::string &detail) {
  std::printf("%s  %2d  %-28s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

const json &best(const Run &r) { return r.report.at("best"); }

double max_residual(const json &traj) {
  double m = 0.0;
  for (const auto &r : traj.at("reflection_residuals"))
    for (const char *k : {"normal_flip_err", "tangential_err", "speed_err"}) m = std::max(m, r.at(k).get<double>());
  return m;
}

bool has_best(const Run &r) { return r.report.is_object() && r.report.contains("best") && r.report["best"].is_object(); }

// Central differences of the action, tau last.
Eigen::VectorXd fd_gradient(const Domain &d, const PenaltyConfig &cfg, const DiscreteLoop &loop, double h) {
  const int n = loop.dim(), m = loop.size();
  Eigen::VectorXd g(n * m + 1);
  for (int i = 0; i <= n * m; ++i) {
    DiscreteLoop plus = loop, minus = loop;
    if (i == n * m) {
      plus.tau += h;
      minus.tau -= h;
    } else {
      plus.points(i % n, i / n) += h;
      minus.points(i % n, i / n) -= h;
    }
    g[i] = (action(d, cfg, plus, 0.5) - action(d, cfg, minus, 0.5)) / (2 * h);
  }
  return g;
}

Eigen::VectorXd flat(const ActionGradient &g) {
  const Eigen::Index size = g.d_points.size();
  Eigen::VectorXd out(size + 1);
  out.head(size) = Eigen::Map<const Eigen::VectorXd>(g.d_points.data(), size);
  out[size] = g.d_tau;
  return out;
}

int dense_index(const Eigen::SparseMatrix<double> &h, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(h), Eigen::EigenvaluesOnly);
  const double cut = rel_tol * es.eigenvalues().cwiseAbs().maxCoeff();
  return static_cast<int>((es.eigenvalues().array() < -cut).count());
}

// ((p - F1) x u)((p - F2) x u) for foci (+-c, 0), expanded by hand.
double focal_product(double a, double b, const Vec &p, const Vec &u) {
  const double cross = p[0] * u[1] - p[1] * u[0];
  return cross * cross - (a * a - b * b) * u[1] * u[1];
}

} // namespace

int main() {
  const fs::path dir = work_dir();
  std::map<std::string, Run> runs;
  for (const char *c : {"disk", "ball3", "disk_r2", "ellipse", "box", "dumbbell"}) {
    runs[c] = find(c, dir / c);
    std::fprintf(stderr, "find %-9s exit %d in %.1f s\n", c, runs[c].exit_code, runs[c].seconds);
  }

  // 1. Unit balls in 2 and 3 dimensions.
  {
    bool pass = true;
    std::string detail;
    for (const char *c : {"disk", "ball3"}) {
      const Run &r = runs[c];
      bool ok = r.exit_code == 0 && has_best(r) && r.seconds <= 60.0;
      if (ok) {
        const double len = best(r).at("length");
        const int k = best(r).at("bounce_count");
        const double ratio = best(r).at("ratio");
        ok = len >= 3.999 && len <= 4.001 && k == 2 && k <= r.dim + 1 && std::abs(ratio - 4.0) <= 1e-3;
        detail += fmt("%s: L=%.6f k=%d ratio=%.6f %.1fs; ", c, len, k, ratio, r.seconds);
      } else {
        detail += fmt("%s: exit %d %.1fs; ", c, r.exit_code, r.seconds);
      }
      pass = pass && ok;
    }
    report(1, "ball n=2,3", pass, detail);
  }

  // 2. Scaling r = 1 -> r = 2.
  {
    const Run &a = runs["disk"], &b = runs["disk_r2"];
    bool pass = has_best(a) && has_best(b);
    std::string detail = "missing report";
    if (pass) {
      const double la = best(a).at("length"), lb = best(b).at("length");
      const double rel = std::abs(lb - 2.0 * la) / (2.0 * la);
      pass = rel <= 1e-3 && best(a).at("bounce_count") == best(b).at("bounce_count");
      detail = fmt("L(r=1)=%.6f L(r=2)=%.6f rel=%.2e", la, lb, rel);
    }
    report(2, "scaling r=2", pass, detail);
  }

  // 3. Ellipse and smoothed box: the shortest orbit spans the minimum width.
  {
    bool pass = true;
    std::string detail;
    for (const char *c : {"ellipse", "box"}) {
      const Run &r = runs[c];
      bool ok = has_best(r);
      if (ok) {
        const json &b = best(r);
        const double len = b.at("length");
        const double disp = b.at("crosscheck").at("displacement");
        const double res = max_residual(b);
        ok = std::abs(len - 4.0) <= 0.005 * 4.0 && b.at("bounce_count") == 2 && res <= 1e-3 && disp <= 1e-3 * len;
        detail += fmt("%s: L=%.6f k=%d res=%.1e disp=%.1e; ", c, len, b.at("bounce_count").get<int>(), res, disp);
      } else {
        detail += fmt("%s: exit %d; ", c, r.exit_code);
      }
      pass = pass && ok;
    }
    report(3, "ellipse and smoothed box", pass, detail);
  }

  // 4. Dumbbell.
  {
    const Run &r = runs["dumbbell"];
    bool pass = has_best(r);
    std::string detail = fmt("exit %d", r.exit_code);
    if (pass) {
      const json &b = best(r);
      const int k = b.at("bounce_count");
      const double ratio = b.at("ratio");
      const bool xc = b.at("crosscheck").at("pass");
      pass = k <= 3 && ratio <= 10.0 && xc;
      detail = fmt("k=%d ratio=%.6f crosscheck=%s", k, ratio, xc ? "pass" : "fail");
    }
    report(4, "dumbbell", pass, detail);
  }

  // 5. Gradient suite.
  {
    auto t0 = std::chrono::steady_clock::now();
    double worst_g = 0.0, worst_h = 0.0;
    for (const auto &[name, spec] : suite()) {
      Domain d = Domain::build(spec);
      PenaltyConfig cfg = PenaltyConfig::make(d.suggested_d0(), 1e-2);
      Rng rng(23);
      for (int k = 0; k < 20; ++k) {
        DiscreteLoop loop = random_loop(d, rng, 48, 0.3 * cfg.d0);
        Eigen::VectorXd g = flat(action_grad(d, cfg, loop, 0.5));
        worst_g = std::max(worst_g, (g - fd_gradient(d, cfg, loop, 1e-6)).norm() / g.norm());
        if (k < 3) {
          const int nm = loop.dim() * loop.size();
          NodeTerms terms = evaluate_nodes(d, cfg, loop, true);
          Eigen::MatrixXd hess = Eigen::MatrixXd(action_hessian(cfg, loop, terms));
          for (int c : {0, nm / 3, nm - 1, nm}) {
            const double h = 1e-6;
            DiscreteLoop plus = loop, minus = loop;
            if (c == nm) {
              plus.tau += h;
              minus.tau -= h;
            } else {
              plus.points(c % loop.dim(), c / loop.dim()) += h;
              minus.points(c % loop.dim(), c / loop.dim()) -= h;
            }
            Eigen::VectorXd fd = (flat(action_grad(d, cfg, plus, 0.5)) - flat(action_grad(d, cfg, minus, 0.5))) / (2 * h);
            worst_h = std::max(worst_h, (fd - hess.col(c)).norm() / hess.col(c).norm());
          }
        }
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(5, "gradient suite", worst_g <= 1e-5 && worst_h <= 1e-3 && secs <= 120.0,
           fmt("grad rel=%.2e hess rel=%.2e %.1fs", worst_g, worst_h, secs));
  }

  // 6. EL residual and energy spread at every converged stage of every branch.
  {
    double el = 0.0, sd = 0.0;
    int points = 0, rejected = 0;
    for (const auto &[name, r] : runs) {
      if (!r.report.is_object()) continue;
      for (const auto &br : r.report.at("branches"))
        for (const auto &st : br.at("stages")) {
          if (st.at("status") == "failed" && st.at("message").get<std::string>().find("roundoff floor") != std::string::npos)
            ++rejected;
          if (st.at("status") != "converged") continue;
          el = std::max(el, st.at("el_residual").get<double>());
          sd = std::max(sd, st.at("energy_stdev").get<double>());
          ++points;
        }
    }
    report(6, "EL and energy invariants", points > 0 && el <= 1e-6 && sd <= 1e-4,
           fmt("%d critical points, max EL=%.2e max stdev=%.2e; %d stages rejected at the EL roundoff floor", points,
               el, sd, rejected));
  }

  // 7. Morse index along the selected branch, and the dense oracle on N = 32 instances.
  {
    bool branch_ok = true;
    int worst = 0;
    for (const auto &[name, r] : runs) {
      if (!has_best(r)) {
        branch_ok = false;
        continue;
      }
      const json &br = r.report.at("branches").at(best(r).at("branch").get<std::size_t>());
      for (const auto &st : br.at("stages")) {
        if (st.at("status") != "converged") continue;
        const int m = st.at("morse_index");
        worst = std::max(worst, m);
        branch_ok = branch_ok && m <= r.dim + 1;
      }
    }
    int compared = 0, mismatches = 0;
    for (const auto &[name, spec] : suite()) {
      Domain d = Domain::build(spec);
      for (double eps : {3e-2, 1e-2}) {
        PenaltyConfig cfg = PenaltyConfig::make(d.suggested_d0(), eps);
        if (!std::isfinite(turning_distance(cfg, 0.5))) continue;
        for (const auto &s : make_seeds(d, cfg, 0.5, 32, 3, 5)) {
          try {
            CriticalPoint cp = find_critical_point(d, cfg, s.loop, 0.5);
            NodeTerms terms = evaluate_nodes(d, cfg, cp.loop, true);
            ++compared;
            mismatches += cp.morse_index_fixed_tau != dense_index(fixed_tau_hessian(cfg, cp.loop, terms), 1e-7);
          } catch (const Error &) {
          }
        }
      }
    }
    report(7, "Morse index", branch_ok && compared > 0 && mismatches == 0,
           fmt("max selected-branch index %d; dense oracle %d/%d agree", worst, compared - mismatches, compared));
  }

  // 8. tau against the billiard length, and chord speeds.
  {
    bool pass = true;
    double gap = 0.0, speed = 0.0;
    for (const auto &[name, r] : runs) {
      if (!has_best(r)) {
        pass = false;
        continue;
      }
      gap = std::max(gap, best(r).at("tau_length_rel_err").get<double>());
      speed = std::max(speed, best(r).at("max_speed_error").get<double>());
    }
    report(8, "tau-length identity", pass && gap <= 0.01 && speed <= 0.02,
           fmt("max |tau-L|/L=%.2e max speed err=%.2e", gap, speed));
  }

  // 9. Period ceiling at every stage.
  {
    bool pass = true;
    double margin = 0.0;
    int stages = 0;
    for (const auto &[name, r] : runs) {
      if (!r.report.is_object()) continue;
      for (const auto &br : r.report.at("branches"))
        for (const auto &st : br.at("stages")) {
          if (st.at("status") != "converged") continue;
          const double tau = st.at("tau"), k = st.at("kinetic_integral");
          pass = pass && tau <= 196.0 * k + 1.0;
          margin = std::max(margin, tau / (196.0 * k + 1.0));
          ++stages;
        }
    }
    report(9, "period ceiling", pass && stages > 0, fmt("%d stages, max tau/ceiling=%.3f", stages, margin));
  }

  // 10. Reflection oracle.
  {
    Rng rng(99);
    double worst_speed = 0.0, worst_tan = 0.0;
    for (int k = 0; k < 1000000; ++k) {
      const int n = 2 + k % 2;
      Vec nu(n), v(n);
      for (int i = 0; i < n; ++i) {
        nu[i] = rng.normal();
        v[i] = rng.normal();
      }
      nu /= nu.norm();
      Vec w = reflect(v, nu);
      worst_speed = std::max(worst_speed, std::abs(w.norm() - v.norm()) / v.norm());
      worst_tan = std::max(worst_tan, ((w - w.dot(nu) * nu) - (v - v.dot(nu) * nu)).norm() / v.norm());
    }
    Domain d = Domain::build(ellipse());
    Vec u0 = v2(0.3, 0.7);
    Shot s = shoot(d, v2(0.3, 0.2), u0 / u0.norm(), 1000);
    const double first = focal_product(2, 1, s.bounces[0].point, s.directions[1]);
    double drift = 0.0;
    for (std::size_t i = 0; i < s.bounces.size(); ++i)
      drift = std::max(drift, std::abs(focal_product(2, 1, s.bounces[i].point, s.directions[i + 1]) - first));
    report(10, "reflection oracle", worst_speed <= 1e-12 && worst_tan <= 1e-12 && drift <= 1e-6,
           fmt("speed=%.1e tangential=%.1e invariant drift=%.1e over %zu bounces", worst_speed, worst_tan, drift,
               s.bounces.size()));
  }

  // 11. Determinism.
  {
    Run again = find("disk", dir / "disk_again");
    const std::string a = slurp(dir / "disk" / "report.json"), b = slurp(dir / "disk_again" / "report.json");
    report(11, "determinism", !a.empty() && a == b, fmt("report.json %zu bytes, identical=%s", a.size(), a == b ? "yes" : "no"));
  }

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
