#include "snstf/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace snstf {

namespace {

constexpr std::uint64_t kStreamPair = 1;
constexpr std::uint64_t kStreamDrift = 2;
constexpr std::uint64_t kStreamRef = 3;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double click_probability(double nbar, double p_dark) {
  return p_dark + (1.0 - p_dark) * (-std::expm1(-nbar));
}

} // namespace

std::uint64_t CounterRng::raw(std::uint64_t stream, std::uint64_t counter,
                              std::uint32_t lane) const {
  std::uint64_t h = splitmix(key_ ^ (stream * 0xD6E8FEB86659FD93ull));
  h = splitmix(h ^ counter);
  return splitmix(h + lane);
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t counter,
                           std::uint32_t lane) const {
  return double(raw(stream, counter, lane) >> 11) * 0x1.0p-53;
}

double CounterRng::gauss(std::uint64_t stream, std::uint64_t counter,
                         std::uint32_t lane) const {
  const double u1 = uniform(stream, counter, lane);
  const double u2 = uniform(stream, counter, lane + 1);
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(kTwoPi * u2);
}

std::uint64_t CounterRng::poisson(std::uint64_t stream, std::uint64_t counter,
                                  std::uint32_t lane0, double mean) const {
  if (mean <= 0.0) return 0;
  // split large means so the Knuth product stays in range
  std::uint64_t total = 0;
  std::uint32_t lane = lane0;
  while (mean > 500.0) {
    total += poisson(stream, counter, lane, 500.0);
    lane += 700;
    mean -= 500.0;
  }
  const double limit = std::exp(-mean);
  double prod = 1.0;
  std::uint64_t k = 0;
  do {
    prod *= uniform(stream, counter, lane++);
    if (prod < limit) break;
    ++k;
  } while (lane < lane0 + 4000);
  return total + k;
}

std::pair<double, double> detector_rates(double mu_a, double mu_b, double dphi,
                                         const ChannelModel& channel) {
  if (mu_a < 0.0 || mu_b < 0.0)
    throw std::invalid_argument("detector_rates: negative intensity");
  const double xa = mu_a * channel.eta_arm_a();
  const double xb = mu_b * channel.eta_arm_b();
  const double interf = 2.0 * std::sqrt(xa * xb) * std::cos(dphi);
  auto probs = [&](double sign) {
    const double n_right = (xa + xb + sign * interf) / 2.0;
    const double n_left = (xa + xb - sign * interf) / 2.0;
    return std::pair{click_probability(n_left, channel.p_dark),
                     click_probability(n_right, channel.p_dark)};
  };
  auto [l_plus, r_plus] = probs(+1.0);
  auto [l_minus, r_minus] = probs(-1.0);
  const double e = channel.e_dx;
  return {(1.0 - e) * l_plus + e * l_minus, (1.0 - e) * r_plus + e * r_minus};
}

bool xwindow_postselect(double theta_a, double theta_b, double psi_ab,
                        double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("xwindow_postselect: lambda must be in [0,1]");
  return 1.0 - std::abs(std::cos(theta_a - theta_b - psi_ab)) <= lambda;
}

double slice_acceptance_fraction(double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("slice_acceptance_fraction: lambda must be in [0,1]");
  return 2.0 / std::numbers::pi * std::acos(1.0 - lambda);
}

double estimate_phase(double n1, double n2, double m1, double m2) {
  if (!(n1 + n2 > 0.0) || !(m1 + m2 > 0.0))
    throw std::runtime_error("insufficient reference counts");
  const double c = std::clamp(2.0 * n1 / (n1 + n2) - 1.0, -1.0, 1.0);
  const double s = std::clamp(1.0 - 2.0 * m1 / (m1 + m2), -1.0, 1.0);
  double d = std::atan2(s, c);
  if (d < 0.0) d += kTwoPi;
  return d;
}

RefCounts expected_ref_counts(double delta, double k) {
  return {k * (1.0 + std::cos(delta)) / 2.0, k * (1.0 - std::cos(delta)) / 2.0,
          k * (1.0 - std::sin(delta)) / 2.0, k * (1.0 + std::sin(delta)) / 2.0};
}

namespace {

// P(exactly one click) at a fixed relative phase
double one_click(double xa, double xb, double cos_dphi, double p_dark) {
  const double interf = std::sqrt(xa * xb) * cos_dphi;
  const double p_r = click_probability((xa + xb) / 2.0 + interf, p_dark);
  const double p_l = click_probability((xa + xb) / 2.0 - interf, p_dark);
  return p_l * (1.0 - p_r) + p_r * (1.0 - p_l);
}

} // namespace

double phase_averaged_heralded(double mu_a, double mu_b, const ChannelModel& channel) {
  if (mu_a < 0.0 || mu_b < 0.0)
    throw std::invalid_argument("phase_averaged_heralded: negative intensity");
  const double xa = mu_a * channel.eta_arm_a();
  const double xb = mu_b * channel.eta_arm_b();
  if (xa == 0.0 && xb == 0.0) {
    const double p = channel.p_dark;
    return 2.0 * p * (1.0 - p);
  }
  if (xa == 0.0 || xb == 0.0) {
    const double p = click_probability((xa + xb) / 2.0, channel.p_dark);
    return 2.0 * p * (1.0 - p);
  }
  constexpr int kSteps = 512;
  double sum = 0.0;
  for (int i = 0; i < kSteps; ++i) {
    const double th = kTwoPi * (i + 0.5) / kSteps;
    sum += one_click(xa, xb, std::cos(th), channel.p_dark);
  }
  return sum / kSteps;
}

SourceTally expected_tally(const ProtocolParams& params, const ChannelModel& channel) {
  auto rep = validate(params);
  if (!rep.ok())
    throw std::invalid_argument("expected_tally: invalid params: " + rep.violations.front());

  const double n = params.n_total;
  const double mus_a[4] = {0.0, 0.0, params.mu_a1, params.mu_a2};
  const double mus_b[4] = {0.0, 0.0, params.mu_b1, params.mu_b2};

  SourceTally t;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const int code = 4 * a + b;
      const double prob = party_choice_probability(params, true, a) *
                          party_choice_probability(params, false, b);
      t.sent[code] = prob * n;
      t.heralded[code] = phase_averaged_heralded(mus_a[a], mus_b[b], channel) * t.sent[code];
    }

  // X-slice statistics for the decoy-decoy cell
  const int xcell = 4 * 2 + 2;
  const double xa = params.mu_a1 * channel.eta_arm_a();
  const double xb = params.mu_b1 * channel.eta_arm_b();
  const double frac = slice_acceptance_fraction(params.lambda);
  t.x_sent_in_slice = t.sent[xcell] * frac;
  if (frac > 0.0 && xa > 0.0 && xb > 0.0) {
    const double th_max = std::acos(1.0 - params.lambda);
    constexpr int kSteps = 256;
    double eff = 0.0, err = 0.0;
    // accepted phases sit near 0 and near pi; the two bands are symmetric in
    // effective counts but the correct click side flips
    for (int i = 0; i < kSteps; ++i) {
      const double th = th_max * (i + 0.5) / kSteps;
      for (double c : {std::cos(th), std::cos(std::numbers::pi - th)}) {
        const double interf = std::sqrt(xa * xb) * c;
        const double p_r = click_probability((xa + xb) / 2.0 + interf, channel.p_dark);
        const double p_l = click_probability((xa + xb) / 2.0 - interf, channel.p_dark);
        eff += p_l * (1.0 - p_r) + p_r * (1.0 - p_l);
        const double wrong = c > 0.0 ? p_l * (1.0 - p_r) : p_r * (1.0 - p_l);
        const double right = c > 0.0 ? p_r * (1.0 - p_l) : p_l * (1.0 - p_r);
        err += (1.0 - channel.e_dx) * wrong + channel.e_dx * right;
      }
    }
    t.x_effective = t.x_sent_in_slice * eff / (2 * kSteps);
    t.x_errors = t.x_sent_in_slice * err / (2 * kSteps);
  } else if (frac > 0.0) {
    // no interference: either side equally likely, half the heralds are errors
    const double p = click_probability((xa + xb) / 2.0, channel.p_dark);
    t.x_effective = t.x_sent_in_slice * 2.0 * p * (1.0 - p);
    t.x_errors = t.x_effective / 2.0;
  }
  return t;
}

// --- EventSimulator -------------------------------------------------------

EventSimulator::EventSimulator(const ProtocolParams& params,
                               const ChannelModel& channel, std::uint64_t seed)
    : params_(params), channel_(channel), rng_(seed) {
  double cum = 0.0;
  for (int c = 0; c < kNumCells; ++c) {
    cum += party_choice_probability(params, true, c / 4) *
           party_choice_probability(params, false, c % 4);
    cum_prob_[c] = cum;
  }
  cum_prob_[kNumCells - 1] = 1.0; // guard against rounding
  eta_a_ = channel.eta_arm_a();
  eta_b_ = channel.eta_arm_b();
  pairs_per_block_ = std::max<std::uint64_t>(
      1, std::uint64_t(channel.t_est * 1e-6 * channel.clock_hz));
  const double block_ms = double(pairs_per_block_) / channel.clock_hz * 1e3;
  // drift_rate is a drift speed (mean |dphase/dt|); the per-block Brownian
  // increment is sized so its mean magnitude matches drift_rate * block_ms
  anchor_sigma_ = channel.drift_rate * block_ms * std::sqrt(std::numbers::pi / 2.0);
  if (channel.mu_ref > 0.0) {
    // reference pulses run at 200 MHz in two quarter-cycle regions
    const double n_ref = 200e6 * channel.t_est * 1e-6 * 0.25;
    const double x_sum = channel.mu_ref * (eta_a_ + eta_b_);
    ref_mean_per_region_ = n_ref * (-std::expm1(-x_sum));
  }
}

// dyadic Brownian bridge over block boundaries, O(depth) per query
double EventSimulator::anchor(std::uint64_t k) const {
  if (anchor_sigma_ == 0.0) return 0.0;
  constexpr int kDepth = 40;
  constexpr std::uint64_t kSpan = 1ull << kDepth;
  k &= kSpan - 1; // wraps far beyond any practical run length
  std::uint64_t lo = 0, hi = kSpan;
  double w_lo = 0.0;
  double w_hi = anchor_sigma_ * std::sqrt(double(kSpan)) * rng_.gauss(kStreamDrift, 1, 0);
  std::uint64_t node = 1;
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    const double w_mid = 0.5 * (w_lo + w_hi) +
                         anchor_sigma_ * std::sqrt(double(hi - lo) / 4.0) *
                             rng_.gauss(kStreamDrift, node + 1, 0);
    if (k < mid) {
      hi = mid;
      w_hi = w_mid;
      node = 2 * node;
    } else {
      lo = mid;
      w_lo = w_mid;
      node = 2 * node + 1;
    }
    if (k == lo) return w_lo;
  }
  return k == lo ? w_lo : w_hi;
}

double EventSimulator::channel_phase(std::uint64_t index) const {
  if (anchor_sigma_ == 0.0) return 0.0;
  const std::uint64_t blk = index / pairs_per_block_;
  const double frac = double(index % pairs_per_block_) / double(pairs_per_block_);
  const double a0 = anchor(blk);
  const double a1 = anchor(blk + 1);
  return a0 + frac * (a1 - a0);
}

PhaseEstimate EventSimulator::simulate_phase_estimate(std::uint64_t block) const {
  PhaseEstimate est;
  est.block_start_index = block * pairs_per_block_;
  const double mid = channel_phase(est.block_start_index + pairs_per_block_ / 2);
  if (ref_mean_per_region_ <= 0.0) {
    // no reference model configured: estimation is taken as ideal
    est.delta_hat = mid - kTwoPi * std::floor(mid / kTwoPi);
    return est;
  }
  const RefCounts mean = expected_ref_counts(mid, ref_mean_per_region_);
  est.n1 = rng_.poisson(kStreamRef, block, 0, mean.n1);
  est.n2 = rng_.poisson(kStreamRef, block, 5000, mean.n2);
  est.m1 = rng_.poisson(kStreamRef, block, 10000, mean.m1);
  est.m2 = rng_.poisson(kStreamRef, block, 15000, mean.m2);
  if (est.n1 + est.n2 == 0 || est.m1 + est.m2 == 0)
    est.delta_hat = mid - kTwoPi * std::floor(mid / kTwoPi);
  else
    est.delta_hat = estimate_phase(double(est.n1), double(est.n2),
                                   double(est.m1), double(est.m2));
  return est;
}

double EventSimulator::block_psi(std::uint64_t block) const {
  return simulate_phase_estimate(block).delta_hat;
}

void EventSimulator::run_range(
    std::uint64_t begin, std::uint64_t end,
    std::array<std::uint64_t, kNumCells>& sent, std::uint64_t& x_sent_in_slice,
    const std::function<void(const PulsePairOutcome&)>& visitor) const {
  const double mus_a[4] = {0.0, 0.0, params_.mu_a1, params_.mu_a2};
  const double mus_b[4] = {0.0, 0.0, params_.mu_b1, params_.mu_b2};
  const double pd = channel_.p_dark;
  const double e_dx = channel_.e_dx;
  const bool drifting = anchor_sigma_ != 0.0;

  std::uint64_t cached_block = ~0ull;
  double cached_psi = 0.0, blk_a0 = 0.0, blk_a1 = 0.0;

  for (std::uint64_t i = begin; i < end; ++i) {
    const double u_cell = rng_.uniform(kStreamPair, i, 0);
    int code = 0;
    while (u_cell >= cum_prob_[code]) ++code;
    ++sent[code];
    const int a_idx = code / 4, b_idx = code % 4;
    const double mu_a = mus_a[a_idx], mu_b = mus_b[b_idx];

    double p_left = pd, p_right = pd;
    double theta_a = 0.0, theta_b = 0.0;
    const bool decoy_pair = (a_idx == 2 && b_idx == 2);
    bool need_psi = decoy_pair;
    double psi = 0.0;

    if (mu_a > 0.0 || mu_b > 0.0) {
      const double xa = mu_a * eta_a_;
      const double xb = mu_b * eta_b_;
      if (mu_a > 0.0) theta_a = kTwoPi * rng_.uniform(kStreamPair, i, 1);
      if (mu_b > 0.0) theta_b = kTwoPi * rng_.uniform(kStreamPair, i, 2);
      double interf = 0.0;
      if (mu_a > 0.0 && mu_b > 0.0) {
        double delta = 0.0;
        if (drifting || need_psi) {
          const std::uint64_t blk = i / pairs_per_block_;
          if (blk != cached_block) {
            cached_block = blk;
            blk_a0 = anchor(blk);
            blk_a1 = anchor(blk + 1);
            cached_psi = block_psi(blk);
          }
          const double frac = double(i % pairs_per_block_) / double(pairs_per_block_);
          delta = blk_a0 + frac * (blk_a1 - blk_a0);
          psi = cached_psi;
        }
        double c = std::cos(theta_a - theta_b - delta);
        if (e_dx > 0.0 && rng_.uniform(kStreamPair, i, 3) < e_dx) c = -c;
        interf = std::sqrt(xa * xb) * c;
      }
      p_right = click_probability((xa + xb) / 2.0 + interf, pd);
      p_left = click_probability((xa + xb) / 2.0 - interf, pd);
    }

    if (decoy_pair && xwindow_postselect(theta_a, theta_b, psi, params_.lambda))
      ++x_sent_in_slice;

    const bool click_l = rng_.uniform(kStreamPair, i, 4) < p_left;
    const bool click_r = rng_.uniform(kStreamPair, i, 5) < p_right;
    if (click_l != click_r) {
      PulsePairOutcome out;
      out.timestamp_index = i;
      out.cell = CellKey::from_code(code);
      out.click_left = click_l;
      out.click_right = click_r;
      out.theta_a = theta_a;
      out.theta_b = theta_b;
      out.psi_ab = psi;
      visitor(out);
    }
  }
}

} // namespace snstf
