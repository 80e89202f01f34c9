#pragma once

#include "snstf/counts.hpp"
#include "snstf/params.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

namespace snstf {

// Counter-based deterministic random stream: every draw is a pure function of
// (seed, stream, counter, lane), so disjoint index ranges can be generated
// concurrently and merge into the same sequence regardless of partitioning.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(seed) {}

  std::uint64_t raw(std::uint64_t stream, std::uint64_t counter,
                    std::uint32_t lane) const;
  // uniform in [0,1)
  double uniform(std::uint64_t stream, std::uint64_t counter,
                 std::uint32_t lane) const;
  // standard normal (Box-Muller over lanes lane, lane+1)
  double gauss(std::uint64_t stream, std::uint64_t counter,
               std::uint32_t lane) const;
  // Poisson via inversion/Knuth; mean must be modest (reference counts)
  std::uint64_t poisson(std::uint64_t stream, std::uint64_t counter,
                        std::uint32_t lane0, double mean) const;

  std::uint64_t seed() const { return key_; }

 private:
  std::uint64_t key_;
};

struct PulsePairOutcome {
  std::uint64_t timestamp_index = 0;
  CellKey cell;
  bool click_left = false;
  bool click_right = false;
  // private phases; meaningful only for non-vacuum decoy pulses
  double theta_a = 0.0;
  double theta_b = 0.0;
  // per-block reference phase estimate, used for X-window post-selection
  double psi_ab = 0.0;

  bool heralded() const { return click_left != click_right; }
};

struct PhaseEstimate {
  std::uint64_t n1 = 0, n2 = 0, m1 = 0, m2 = 0;
  double delta_hat = 0.0;
  std::uint64_t block_start_index = 0;
};

// Click probabilities (left, right) for a single pulse pair with relative
// phase dphi. Right detector carries the +cos interference term. Misalignment
// e_dx enters as the probability of a sign-swapped interference term, so the
// returned values are the e_dx-weighted mixture. Throws on negative intensity.
std::pair<double, double> detector_rates(double mu_a, double mu_b, double dphi,
                                         const ChannelModel& channel);

// Phase-slice acceptance: 1 - |cos(theta_a - theta_b - psi_ab)| <= lambda.
bool xwindow_postselect(double theta_a, double theta_b, double psi_ab,
                        double lambda);

// Fraction of uniformly random relative phases accepted by the slice.
double slice_acceptance_fraction(double lambda);

// Inverts n1/(n1+n2) = (1+cos d)/2 and m1/(m1+m2) = (1-sin d)/2 into the
// unique d in [0, 2pi), ratio arguments clamped into [-1,1]. Accepts
// real-valued counts so exact expected values invert exactly. Throws if
// either region has zero total counts.
double estimate_phase(double n1, double n2, double m1, double m2);

// Noise-free expected region counts at relative phase delta, total counts
// per region pair k. Helper for tests and for the reference-pulse simulation.
struct RefCounts { double n1, n2, m1, m2; };
RefCounts expected_ref_counts(double delta, double k);

// Closed-form expected tally for the full 16-cell table, phase-averaged where
// sources are phase-randomized; X-slice statistics use e_dx and the slice
// geometry. Throws on invalid inputs.
SourceTally expected_tally(const ProtocolParams& params, const ChannelModel& channel);

// Phase-averaged one-detector-heralded probability for arm intensities
// (mu_a, mu_b) after channel losses; exposed for the decoy oracle tests.
double phase_averaged_heralded(double mu_a, double mu_b, const ChannelModel& channel);

// --- Monte-Carlo event generation ---------------------------------------

class EventSimulator {
 public:
  EventSimulator(const ProtocolParams& params, const ChannelModel& channel,
                 std::uint64_t seed);

  // Generates pulse pairs for indices [begin, end). The visitor is invoked
  // for every one-detector-heralded outcome, in index order. Per-cell sent
  // counts and the number of slice-accepted decoy-decoy pairs (which needs
  // the non-heralded pairs too) are accumulated into the out-parameters.
  void run_range(std::uint64_t begin, std::uint64_t end,
                 std::array<std::uint64_t, kNumCells>& sent,
                 std::uint64_t& x_sent_in_slice,
                 const std::function<void(const PulsePairOutcome&)>& visitor) const;

  // Channel phase at a pulse-pair index (piecewise-linear between per-block
  // Brownian anchors; deterministic in (seed, index)).
  double channel_phase(std::uint64_t index) const;
  // Reference-pulse phase estimate for the block containing `index`.
  double block_psi(std::uint64_t block) const;
  std::uint64_t block_of(std::uint64_t index) const { return index / pairs_per_block_; }
  std::uint64_t pairs_per_block() const { return pairs_per_block_; }

  PhaseEstimate simulate_phase_estimate(std::uint64_t block) const;

 private:
  double anchor(std::uint64_t block_boundary) const;

  ProtocolParams params_;
  ChannelModel channel_;
  CounterRng rng_;
  std::array<double, kNumCells> cum_prob_{};
  double eta_a_ = 0, eta_b_ = 0;
  std::uint64_t pairs_per_block_ = 1;
  double anchor_sigma_ = 0.0;
  double ref_mean_per_region_ = 0.0;
};

} // namespace snstf
