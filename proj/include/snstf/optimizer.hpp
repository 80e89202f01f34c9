#pragma once

#include "snstf/analysis.hpp"
#include "snstf/params.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace snstf {

struct ParamBound {
  double lo = 0.0;
  double hi = 0.0;
  bool fixed = false;
};

// Search box over the protocol parameters. mu_b1 carries no bound: it is
// always derived from the intensity constraint, so every candidate satisfies
// the equality exactly. lambda is searched on an outer log grid because it
// changes the discrete slice-acceptance statistics rather than smooth rates.
struct SearchSpace {
  ParamBound mu_a1, mu_a2, mu_b2;
  ParamBound eps_a, eps_b;
  ParamBound p_a1, p_b1, p_a2, p_b2;
  ParamBound lambda;
  double n_total = 0.0;
  double f = 1.1;
  int lambda_grid = 7; // outer-loop resolution when lambda is free

  ProtocolParams at_midpoint() const;
};

// Expected key rate of a parameter point over the closed-form channel model:
// expected_tally -> decoy_bounds -> expected pairing -> aopp_chain -> key_rate.
// Invalid parameters or infeasible statistics evaluate to 0.
double objective(const ProtocolParams& params, const ChannelModel& channel);

struct OptimizeResult {
  ProtocolParams params;
  double rate = 0.0;
  std::uint64_t evaluations = 0;
};

// Nelder-Mead over the free dimensions with a midpoint start plus seeded
// random restarts; the best of every evaluated candidate is returned.
// Throws std::invalid_argument on inverted bounds or budget < dimension + 1.
OptimizeResult optimize(const SearchSpace& space, const ChannelModel& channel,
                        std::uint64_t budget, std::uint64_t seed = 1);

struct SweepPoint {
  double distance_km = 0.0;
  double loss_db = 0.0;
  OptimizeResult best;
  PlobBounds plob;
};

// Re-optimizes at each distance of a symmetric channel (half the fiber on
// each arm, attenuation taken from `base`).
std::vector<SweepPoint> sweep_distance(const SearchSpace& space,
                                       const ChannelModel& base,
                                       double from_km, double to_km, int steps,
                                       std::uint64_t budget_per_point,
                                       std::uint64_t seed = 1);

// CSV: distance, loss, best parameter set, rate and both PLOB references.
void write_sweep_csv(const std::vector<SweepPoint>& points, std::ostream& os);

} // namespace snstf
