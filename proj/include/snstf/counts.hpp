#pragma once

#include "snstf/params.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace snstf {

// 16-cell sent/heralded table plus the X-window slice statistics.
// Counts are doubles so the same type carries observed and expected tallies.
struct SourceTally {
  std::array<double, kNumCells> sent{};
  std::array<double, kNumCells> heralded{};
  double x_sent_in_slice = 0;  // N_X: decoy-decoy pairs inside the phase slice
  double x_effective = 0;      // one-detector-heralded events among those
  double x_errors = 0;         // m_X: wrong-side clicks among the effective ones

  double total_sent() const;
  double& sent_for(const CellKey& c) { return sent[c.code()]; }
  double& heralded_for(const CellKey& c) { return heralded[c.code()]; }

  // field-wise addition; associative and commutative
  void merge(const SourceTally& other);
};

struct SiftedKeys {
  double n_t = 0;   // Z-window heralded count
  double n_t0 = 0;  // Bob's bit-0 (Bob sent) count
  double n_t1 = 0;  // Bob's bit-1 (Bob not-send) count
  double e_count = 0;
  // retained only in simulation mode, below the size cap
  std::vector<std::uint8_t> bits_alice;
  std::vector<std::uint8_t> bits_bob;

  double qber() const { return n_t > 0 ? e_count / n_t : 0.0; }
  void merge(const SiftedKeys& other);
};

struct XErrorRates {
  double t_x = 0;     // m_X / N_X
  double qber_x = 0;  // x_errors / x_effective
};

// Throws std::runtime_error on zero denominators.
XErrorRates x_error_rate(const SourceTally& tally);

// Z-window sifted statistics derived from the 4 Z cells of a tally.
// Bit convention: sender writes 1 when sending (Alice) and 0 when sending
// (Bob), so send/not-send cross events are correct and send-send /
// notsend-notsend are errors.
SiftedKeys sifted_from_tally(const SourceTally& tally);

// Counts file: 16 rows "<label> <sent> <gain>" followed by a trailer block of
// "name value" lines (x_effective, x_errors, n_t, n_t0, n_t1, e_count).
SourceTally load_counts_file(const std::string& path, SiftedKeys* sifted = nullptr);
void write_counts_file(const SourceTally& tally, const SiftedKeys& sifted,
                       std::ostream& os);

} // namespace snstf
