#pragma once

#include "snstf/counts.hpp"
#include "snstf/optics.hpp"
#include "snstf/params.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace snstf {

// Builds the 16-cell tally from heralded events plus the sent-side counters
// produced alongside them. X-window classification: a heralded decoy-decoy
// pair inside the phase slice is effective; it is an error when the clicked
// detector contradicts the side implied by cos(theta_a - theta_b - psi_ab)
// (right detector correct for positive cosine).
SourceTally accumulate(std::span<const PulsePairOutcome> events,
                       const std::array<std::uint64_t, kNumCells>& sent,
                       std::uint64_t x_sent_in_slice,
                       const ProtocolParams& params);

// Z-window sifting. Bit convention: Alice writes 1 when sending, Bob writes 0
// when sending, so send/not-send events agree and send-send or
// notsend-notsend events are the bit errors. Strings are retained while
// n_t <= string_cap.
SiftedKeys sift_z(std::span<const PulsePairOutcome> events,
                  std::size_t string_cap = std::size_t(1) << 28);

// Fused simulate + accumulate + sift pipeline, partitioned across threads.
// The result is bit-identical for any thread count.
struct SimulationResult {
  SourceTally tally;
  SiftedKeys sifted;
  std::vector<PulsePairOutcome> heralded;
  std::array<std::uint64_t, kNumCells> sent{};
  std::uint64_t x_sent_in_slice = 0;
};

SimulationResult run_simulation(const ProtocolParams& params,
                                const ChannelModel& channel,
                                std::uint64_t n_pairs, std::uint64_t seed,
                                int n_threads = 1,
                                std::size_t string_cap = std::size_t(1) << 28,
                                bool keep_events = false);

// Event-stream file: '#' header lines carrying seed, params hash, pair count
// and per-cell sent counts, then one row per heralded event
// (index, cell code, L/R, and the phases for decoy-pulse pairs).
void write_event_stream(std::ostream& os, const SimulationResult& sim,
                        std::uint64_t seed, std::uint64_t n_pairs,
                        std::uint64_t params_hash);

struct EventStream {
  std::vector<PulsePairOutcome> events;
  std::array<std::uint64_t, kNumCells> sent{};
  std::uint64_t x_sent_in_slice = 0;
  std::uint64_t seed = 0;
  std::uint64_t n_pairs = 0;
  std::uint64_t params_hash = 0;
};

// Throws std::runtime_error naming the record index on malformed rows.
EventStream load_event_stream(const std::string& path);

} // namespace snstf
