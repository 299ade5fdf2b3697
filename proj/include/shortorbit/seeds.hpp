#pragma once

#include "shortorbit/action.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace shortorbit {

struct Seed {
  DiscreteLoop loop;
  std::string kind; ///< "sweep", "perturbed_sweep" or "ellipse"
};

/// Back-and-forth sweep through `center` along `dir`, turning `margin` short of the wall,
/// traversed at unit-ish speed. Optional transverse wobble of amplitude `wobble` along `side`.
DiscreteLoop sweep_loop(const Domain &domain, const Vec &center, const Vec &dir, double margin, int n_nodes,
                        double wobble = 0.0, const Vec &side = Vec());

/// Planar ellipse center + a cos(2 pi t) u + b sin(2 pi t) v, period = perimeter.
DiscreteLoop ellipse_loop(const Vec &center, const Vec &u, const Vec &v, double a, double b, int n_nodes);

/// Multistart seeds around the inradius witness. The first seeds sweep along the coordinate
/// axes and the direction to the nearest boundary point; the rest alternate between
/// perturbed sweeps and ellipses in random 2-planes. Deterministic in `rng_seed`.
std::vector<Seed> make_seeds(const Domain &domain, const PenaltyConfig &cfg, double energy, int n_nodes, int count,
                             std::uint64_t rng_seed);

} // namespace shortorbit
