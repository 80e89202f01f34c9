#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace snstf {

// All protocol-side knobs: source intensities, window/send probabilities,
// phase-slice width, pulse budget and the failure-probability split.
struct ProtocolParams {
  double mu_a1 = 0.0;  // Alice decoy intensity
  double mu_b1 = 0.0;  // Bob decoy intensity
  double mu_a2 = 0.0;  // Alice signal intensity
  double mu_b2 = 0.0;  // Bob signal intensity
  double eps_a = 0.0;  // Alice signal-window send probability
  double eps_b = 0.0;  // Bob signal-window send probability
  double p_a1 = 0.0;   // Alice decoy-window non-vacuum probability
  double p_b1 = 0.0;   // Bob decoy-window non-vacuum probability
  double p_a2 = 0.0;   // Alice signal-window probability
  double p_b2 = 0.0;   // Bob signal-window probability
  double lambda = 0.0; // phase-slice half-width parameter, in [0,1]
  double n_total = 0.0; // total pulse pairs
  double f = 1.1;       // error-correction efficiency
  double eps_sec = 1e-10;
  double eps_cor = 1e-10;
  double eps_pa = 1e-10;
  double eps_hat = 1e-10;
};

// Channel and detection model. clock_hz/duty only enter the bits-per-second
// conversion of the final rate.
struct ChannelModel {
  double alpha_ac = 0.0; // dB/km, Alice->Charlie
  double alpha_bc = 0.0; // dB/km, Bob->Charlie
  double l_ac = 0.0;     // km
  double l_bc = 0.0;     // km
  double eta_d = 1.0;    // Charlie overall detection efficiency
  double p_dark = 0.0;   // dark/noise count probability per pulse per detector
  double e_dx = 0.0;     // X-window misalignment probability
  double drift_rate = 0.0; // relative phase drift, rad/ms
  double mu_ref = 0.0;     // reference-pulse intensity, photons/pulse
  double t_est = 20.0;     // phase-estimation integration time, us
  double clock_hz = 312.5e6;
  double duty = 0.224;

  // end-to-end transmittance of one arm including detection efficiency
  double eta_arm_a() const;
  double eta_arm_b() const;
  double total_loss_db() const { return alpha_ac * l_ac + alpha_bc * l_bc; }
};

enum class Window : std::uint8_t { Signal, Decoy };
enum class Intensity : std::uint8_t { Vacuum, DecoyLevel, SignalLevel };

// One of the 16 source combinations of Table-style tallies. Per-party index
// order matches the published row order: Z_O, X_O, X_1, Z.
struct CellKey {
  Window a_window = Window::Signal;
  Intensity a_intensity = Intensity::Vacuum;
  Window b_window = Window::Signal;
  Intensity b_intensity = Intensity::Vacuum;

  bool valid() const;
  int code() const;                 // 0..15, 4*alice_index + bob_index
  static CellKey from_code(int code);
  static CellKey from_indices(int a_idx, int b_idx);
  int a_index() const;              // 0=Z_O, 1=X_O, 2=X_1, 3=Z
  int b_index() const;
  std::string label() const;        // e.g. "X_A1X_B1", as in the counts file
  static int index_from_party_label(const std::string& lbl, bool alice);
};

inline constexpr int kNumCells = 16;

struct ValidationReport {
  std::vector<std::string> violations;
  double s1_residual = 0.0; // |lhs/rhs - 1| of the intensity constraint
  bool ok() const { return violations.empty(); }
};

// Right-hand side of the asymmetric-security intensity constraint
// mu_a1/mu_b1 = eps_a(1-eps_b) mu_a2 e^{-mu_a2} / (eps_b(1-eps_a) mu_b2 e^{-mu_b2}).
double security_constraint_rhs(const ProtocolParams& p);

// mu_b1 consistent with the constraint for the given remaining parameters
double derive_mu_b1(const ProtocolParams& p);

ValidationReport validate(const ProtocolParams& p);

// Probability that a single pulse pair falls in the given cell.
// Throws std::invalid_argument for inconsistent cells.
double cell_probability(const ProtocolParams& p, const CellKey& cell);

// Per-party marginal probability of choice index 0..3.
double party_choice_probability(const ProtocolParams& p, bool alice, int idx);

struct WindowProbFit {
  double p_a1 = 0, p_b1 = 0, p_a2 = 0, p_b2 = 0, eps_a = 0, eps_b = 0;
  double max_rel_residual = 0; // worst relative error over the 16 product equations
};

// Recovers window/send probabilities from the 16 sent counts (indexed by cell
// code). Closed-form from the marginals, refined by damped Gauss-Newton on the
// relative residuals. Throws std::runtime_error on degenerate counts.
WindowProbFit derive_window_probs(const std::array<double, kNumCells>& sent,
                                  double n_total);

// Flat key-value parameter files ("name = value", '#' comments).
ProtocolParams load_protocol_params(const std::string& path);
ChannelModel load_channel_model(const std::string& path);
void save_protocol_params(const ProtocolParams& p, std::ostream& os);

} // namespace snstf
