// Node kernel: serial reference against the OpenMP loop, on a closed-form and a composite domain.
#include "shortorbit/action.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace shortorbit;

namespace {

DomainSpec domain_for(int which) {
  if (which == 0) {
    Vec c = Vec::Zero(2), a(2);
    a << 2, 1;
    return {2, Ellipsoid{c, a}};
  }
  Dumbbell db;
  Vec l(2), r(2);
  l << -2.5, 0;
  r << 2.5, 0;
  db.centers = {l, r};
  db.radii = {1.0, 1.0};
  db.neck_half_width = 0.2;
  db.blend = 0.05;
  return {2, db};
}

// Ellipse-shaped loop at 0.8 of the inradius around the witness.
DiscreteLoop loop_in(const Domain &d, int n_nodes) {
  DiscreteLoop loop;
  loop.points.resize(2, n_nodes);
  const double r = 0.8 * d.inradius_estimate();
  for (int i = 0; i < n_nodes; ++i) {
    double t = 2.0 * 3.141592653589793 * i / n_nodes;
    loop.points(0, i) = d.inradius_witness()[0] + r * std::cos(t);
    loop.points(1, i) = d.inradius_witness()[1] + 0.9 * r * std::sin(t);
  }
  loop.tau = 6.0;
  return loop;
}

void run(benchmark::State &state, Parallel mode) {
  Domain d = Domain::build(domain_for(static_cast<int>(state.range(0))));
  PenaltyConfig cfg = PenaltyConfig::make(d.suggested_d0(), 1e-3);
  DiscreteLoop loop = loop_in(d, static_cast<int>(state.range(1)));
  for (auto _ : state) {
    NodeTerms t = evaluate_nodes(d, cfg, loop, true, mode);
    benchmark::DoNotOptimize(t.u.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
  state.SetLabel(state.range(0) == 0 ? "ellipse" : "dumbbell");
}

void BM_NodesSerial(benchmark::State &state) { run(state, Parallel::Serial); }
void BM_NodesOpenMP(benchmark::State &state) { run(state, Parallel::OpenMP); }

} // namespace

BENCHMARK(BM_NodesSerial)->ArgsProduct({{0, 1}, {1024, 16384}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_NodesOpenMP)->ArgsProduct({{0, 1}, {1024, 16384}})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
