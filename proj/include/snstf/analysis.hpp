#pragma once

#include "snstf/counts.hpp"
#include "snstf/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace snstf {

enum class ChernoffForm { Multiplicative, None };

struct ChernoffConfig {
  double failure_prob = 1e-10;
  ChernoffForm form = ChernoffForm::Multiplicative;

  // expected value -> bracket on the realized value
  double upper(double x_expected) const;  // phi^U
  double lower(double x_expected) const;  // phi^L
  // observed value -> bracket on the expected value
  double inverse_upper(double observed) const;
  double inverse_lower(double observed) const;
};

const char* chernoff_form_name(ChernoffForm form);

struct DecoyOptions {
  ChernoffConfig chernoff;
  // use the as-printed scaling of the untagged-bit-0 count (s10 instead of
  // the symmetric s01); kept selectable for comparison
  bool as_printed_s9 = false;
};

// Pooled counting-rate statistics of one source pair, restricted to the
// publicly announceable cells (both-signal-window cells are excluded, since
// the send decisions in those windows stay private).
struct PooledRate {
  double sent = 0;
  double heralded = 0;
  double rate() const { return sent > 0 ? heralded / sent : 0.0; }
};

struct DecoyEstimates {
  PooledRate s_oo, s_ox, s_xo, s_oy, s_yo;
  double s01_low = 0, s10_low = 0, s1_low = 0;
  double n10_low = 0, n01_low = 0;
  double n_x = 0;      // decoy-decoy pairs in the slice (denominator of T_X)
  double t_x_up = 0;   // expected-value upper bound on T_X
  double e1ph_up = 0;  // expected phase-flip error upper bound, in [0, 0.5]+
  std::vector<std::string> warnings; // clamping events, surfaced not hidden
};

// Decoy-state lower bounds on the single-photon contributions and the upper
// bound on the phase-flip error. Observed rates are converted to expected
// values through the inverse Chernoff bounds before entering the formulas.
// If the tally does not carry N_X it is derived from the slice geometry.
DecoyEstimates decoy_bounds(const SourceTally& tally, const ProtocolParams& params,
                            const DecoyOptions& options = {});

// AOPP pairing statistics: realized (from aopp_simulate) or expected (from
// the Z-cell composition of a tally).
struct PairingStats {
  double n_g = 0;      // pairs Bob formed (0-bits paired with 1-bits)
  double n_odd = 0;    // odd-parity pairs under random two-by-two grouping
  double nt_prime = 0; // surviving bits after parity sifting
  double e_prime = 0;  // bit error rate of the surviving bits
};

PairingStats expected_pairing_stats(const SourceTally& tally);

// Monte-Carlo AOPP on actual bit strings; deterministic under seed.
// Throws std::invalid_argument on length mismatch.
PairingStats aopp_simulate(const std::vector<std::uint8_t>& bits_alice,
                           const std::vector<std::uint8_t>& bits_bob,
                           std::uint64_t seed);

struct AoppChain {
  double n_g = 0, n_odd = 0;
  double u = 0;
  double n1_low = 0, n10_low = 0, n01_low = 0; // realized-value lower bounds
  double n = 0, k = 0, r = 0;
  double m_bar = 0, e_tau = 0, m_bar_s = 0;
  double n1_prime = 0, e1ph_prime = 0;
  double nt_prime = 0, e_prime = 0;
};

// The zigzag finite-key chain through the AOPP transformation. Throws
// std::runtime_error when the statistics cannot support the bound
// (k <= 0 or 2n - r <= 0).
AoppChain aopp_chain(const DecoyEstimates& est, const SiftedKeys& sifted,
                     const PairingStats& pairing, const ProtocolParams& params,
                     const ChernoffConfig& chernoff = {});

struct PlobBounds {
  double absolute = 0; // -log2(1 - eta_channel), ideal detectors
  double relative = 0; // with Charlie's detection efficiency included
};

PlobBounds plob_bounds(const ChannelModel& channel);

struct KeyRateReport {
  double key_length = 0;   // bits, clamped at 0
  double rate_per_pulse = 0;
  double rate_bps = 0;
  PlobBounds plob;
  double ratio_absolute = 0;
  double ratio_relative = 0;
  std::string zero_reason; // non-empty when the key length clamped to 0
};

KeyRateReport key_rate(const AoppChain& chain, const ProtocolParams& params,
                       const ChannelModel& channel);

double binary_entropy(double x);

// FNV-1a, used to fingerprint input files in report metadata.
std::uint64_t fnv1a_hash(const std::string& data);
std::uint64_t hash_file(const std::string& path);

// Full analysis report with every intermediate, serializable to JSON/CSV.
struct AnalysisReport {
  ProtocolParams params;
  ChannelModel channel;
  SourceTally tally;
  SiftedKeys sifted;
  DecoyEstimates decoy;
  AoppChain chain;
  KeyRateReport rate;
  DecoyOptions options;
  std::vector<std::pair<std::string, std::uint64_t>> input_hashes;

  std::string to_json() const;
  std::string to_csv() const;
};

// Runs decoy_bounds -> aopp_chain -> key_rate on a tally.
AnalysisReport analyze(const SourceTally& tally, const SiftedKeys& sifted,
                       const PairingStats& pairing, const ProtocolParams& params,
                       const ChannelModel& channel, const DecoyOptions& options = {});

} // namespace snstf
