#include "snstf/analysis.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace snstf {

namespace {

double ln_inv(double eps) {
  if (eps <= 0.0 || eps >= 1.0)
    throw std::invalid_argument("failure probability must be in (0,1)");
  return std::log(1.0 / eps);
}

} // namespace

const char* chernoff_form_name(ChernoffForm form) {
  switch (form) {
    case ChernoffForm::Multiplicative: return "multiplicative";
    case ChernoffForm::None: return "none";
  }
  return "?";
}

double ChernoffConfig::upper(double x) const {
  if (form == ChernoffForm::None) return x;
  const double a = ln_inv(failure_prob);
  if (x <= 0.0) return 0.0;
  // x(1+delta) with delta solving exp(-delta^2 x / (2+delta)) = eps
  return x + 0.5 * (a + std::sqrt(a * a + 8.0 * a * x));
}

double ChernoffConfig::lower(double x) const {
  if (form == ChernoffForm::None) return x;
  const double a = ln_inv(failure_prob);
  if (x <= 0.0) return 0.0;
  return std::max(0.0, x - std::sqrt(2.0 * a * x));
}

double ChernoffConfig::inverse_upper(double observed) const {
  if (form == ChernoffForm::None) return observed;
  const double a = ln_inv(failure_prob);
  if (observed < 0.0) observed = 0.0;
  // largest expected value whose lower() can still produce `observed`
  return observed + a + std::sqrt(a * a + 2.0 * a * observed);
}

double ChernoffConfig::inverse_lower(double observed) const {
  if (form == ChernoffForm::None) return observed;
  const double a = ln_inv(failure_prob);
  if (observed <= 0.0) return 0.0;
  // smallest expected value whose upper() can still reach `observed`
  return observed + 0.5 * (a - std::sqrt(a * a + 8.0 * a * observed));
}

namespace {

// Pools sent/heralded counts of a source pair over its announceable cells.
// Cells where both parties chose the signal window never get announced, so
// they are excluded even when the pulses match the requested sources.
// Per-party source selector: 0 = vacuum (Z_O or X_O), 1 = decoy level (X_1),
// 2 = signal level (Z).
PooledRate pool_cells(const SourceTally& t, int src_a, int src_b) {
  static const std::vector<int> kIdx[3] = {{0, 1}, {2}, {3}};
  PooledRate p;
  for (int a : kIdx[src_a])
    for (int b : kIdx[src_b]) {
      const bool both_signal = (a == 0 || a == 3) && (b == 0 || b == 3);
      if (both_signal) continue;
      const int code = 4 * a + b;
      p.sent += t.sent[code];
      p.heralded += t.heralded[code];
    }
  return p;
}

double rate_expected_low(const PooledRate& p, const ChernoffConfig& ch) {
  return p.sent > 0 ? ch.inverse_lower(p.heralded) / p.sent : 0.0;
}

double rate_expected_up(const PooledRate& p, const ChernoffConfig& ch) {
  return p.sent > 0 ? ch.inverse_upper(p.heralded) / p.sent : 0.0;
}

} // namespace

DecoyEstimates decoy_bounds(const SourceTally& tally, const ProtocolParams& p,
                            const DecoyOptions& opt) {
  DecoyEstimates est;
  const ChernoffConfig& ch = opt.chernoff;
  est.s_oo = pool_cells(tally, 0, 0);
  est.s_ox = pool_cells(tally, 0, 1);
  est.s_xo = pool_cells(tally, 1, 0);
  est.s_oy = pool_cells(tally, 0, 2);
  est.s_yo = pool_cells(tally, 2, 0);

  // counting-rate lower bounds: plus-signed rates bounded from below,
  // minus-signed rates from above, each through the inverse Chernoff map
  const double soo_up = rate_expected_up(est.s_oo, ch);
  double s01 = (p.mu_b2 * p.mu_b2 * std::exp(p.mu_b1) * rate_expected_low(est.s_ox, ch) -
                p.mu_b1 * p.mu_b1 * std::exp(p.mu_b2) * rate_expected_up(est.s_oy, ch) -
                (p.mu_b2 * p.mu_b2 - p.mu_b1 * p.mu_b1) * soo_up) /
               (p.mu_b2 * p.mu_b1 * (p.mu_b2 - p.mu_b1));
  double s10 = (p.mu_a2 * p.mu_a2 * std::exp(p.mu_a1) * rate_expected_low(est.s_xo, ch) -
                p.mu_a1 * p.mu_a1 * std::exp(p.mu_a2) * rate_expected_up(est.s_yo, ch) -
                (p.mu_a2 * p.mu_a2 - p.mu_a1 * p.mu_a1) * soo_up) /
               (p.mu_a2 * p.mu_a1 * (p.mu_a2 - p.mu_a1));
  if (s01 < 0.0) {
    est.warnings.push_back("s01 lower bound clamped to 0 (statistical fluctuation)");
    s01 = 0.0;
  }
  if (s10 < 0.0) {
    est.warnings.push_back("s10 lower bound clamped to 0 (statistical fluctuation)");
    s10 = 0.0;
  }
  est.s01_low = s01;
  est.s10_low = s10;
  est.s1_low = (p.mu_a1 * s10 + p.mu_b1 * s01) / (p.mu_a1 + p.mu_b1);

  const double scale = p.n_total * p.p_a2 * p.p_b2;
  est.n10_low = scale * p.eps_a * (1.0 - p.eps_b) * p.mu_a2 * std::exp(-p.mu_a2) * s10;
  est.n01_low = scale * p.eps_b * (1.0 - p.eps_a) * p.mu_b2 * std::exp(-p.mu_b2) *
                (opt.as_printed_s9 ? s10 : s01);

  est.n_x = tally.x_sent_in_slice;
  if (est.n_x <= 0.0) {
    // fall back to the slice geometry: uniformly random relative phases land
    // inside 1-|cos t|<=lambda with probability (2/pi) acos(1-lambda)
    est.n_x = tally.sent[4 * 2 + 2] * 2.0 * std::acos(1.0 - p.lambda) / M_PI;
  }
  if (est.n_x > 0.0) {
    est.t_x_up = ch.inverse_upper(tally.x_errors) / est.n_x;
    const double vac = std::exp(-p.mu_a1 - p.mu_b1);
    double e1 = (est.t_x_up - vac * rate_expected_low(est.s_oo, ch) / 2.0) /
                (vac * (p.mu_a1 + p.mu_b1) * est.s1_low);
    if (!std::isfinite(e1)) e1 = 1.0;
    if (e1 < 0.0) {
      est.warnings.push_back("e1ph upper bound clamped to 0");
      e1 = 0.0;
    }
    est.e1ph_up = e1;
  } else {
    est.e1ph_up = 0.0;
  }
  return est;
}

PairingStats expected_pairing_stats(const SourceTally& tally) {
  const SiftedKeys s = sifted_from_tally(tally);
  PairingStats ps;
  if (s.n_t <= 0) return ps;
  ps.n_g = std::min(s.n_t0, s.n_t1);
  const double p1 = s.n_t1 / s.n_t;
  ps.n_odd = (s.n_t / 2.0) * 2.0 * p1 * (1.0 - p1);
  // Alice-bit composition inside Bob's 0 and 1 pools: Z_A x Z_B and
  // Z_AO x Z_BO are the error cells
  const double a1_given_b0 = tally.heralded[4 * 3 + 3] / s.n_t0;
  const double a1_given_b1 = tally.heralded[4 * 3 + 0] / s.n_t1;
  const double p_keep = a1_given_b0 * (1.0 - a1_given_b1) +
                        (1.0 - a1_given_b0) * a1_given_b1;
  ps.nt_prime = ps.n_g * p_keep;
  ps.e_prime = p_keep > 0 ? a1_given_b0 * (1.0 - a1_given_b1) / p_keep : 0.0;
  return ps;
}

PairingStats aopp_simulate(const std::vector<std::uint8_t>& bits_alice,
                           const std::vector<std::uint8_t>& bits_bob,
                           std::uint64_t seed) {
  if (bits_alice.size() != bits_bob.size())
    throw std::invalid_argument("aopp_simulate: string length mismatch");
  const std::size_t n = bits_bob.size();
  std::mt19937_64 rng(seed);

  std::vector<std::uint32_t> zeros, ones;
  for (std::size_t i = 0; i < n; ++i)
    (bits_bob[i] ? ones : zeros).push_back(std::uint32_t(i));
  std::shuffle(zeros.begin(), zeros.end(), rng);
  std::shuffle(ones.begin(), ones.end(), rng);

  PairingStats ps;
  const std::size_t n_g = std::min(zeros.size(), ones.size());
  ps.n_g = double(n_g);
  double kept = 0, kept_err = 0;
  for (std::size_t i = 0; i < n_g; ++i) {
    const std::uint32_t i0 = zeros[i], i1 = ones[i];
    // Alice announces the parity; odd parity survives on both sides
    if (((bits_alice[i0] ^ bits_alice[i1]) & 1) == 0) continue;
    kept += 1.0;
    // keep one bit of the surviving pair at random; within an odd-parity
    // pair exactly one side of the pair carries a bit error, so the kept
    // bit is an error iff the chosen position disagrees
    const std::uint32_t pick = (rng() & 1) ? i1 : i0;
    if (bits_alice[pick] != bits_bob[pick]) kept_err += 1.0;
  }
  ps.nt_prime = kept;
  ps.e_prime = kept > 0 ? kept_err / kept : 0.0;

  // independent random two-by-two grouping of Bob's string for n_odd
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = std::uint32_t(i);
  std::shuffle(perm.begin(), perm.end(), rng);
  double odd = 0;
  for (std::size_t i = 0; i + 1 < n; i += 2)
    if ((bits_bob[perm[i]] ^ bits_bob[perm[i + 1]]) & 1) odd += 1.0;
  ps.n_odd = odd;
  return ps;
}

AoppChain aopp_chain(const DecoyEstimates& est, const SiftedKeys& sifted,
                     const PairingStats& pairing, const ProtocolParams& params,
                     const ChernoffConfig& ch) {
  if (pairing.n_odd <= 0.0)
    throw std::runtime_error("aopp_chain: n_odd must be positive");
  if (sifted.n_t <= 0.0 || sifted.n_t0 <= 0.0 || sifted.n_t1 <= 0.0)
    throw std::runtime_error("aopp_chain: empty sifted-key statistics");
  (void)params;

  AoppChain c;
  c.n_g = pairing.n_g;
  c.n_odd = pairing.n_odd;
  c.nt_prime = pairing.nt_prime;
  c.e_prime = pairing.e_prime;
  c.u = c.n_g / (2.0 * c.n_odd);

  c.n1_low = ch.lower(est.n10_low + est.n01_low);
  c.n10_low = ch.lower(est.n10_low);
  c.n01_low = ch.lower(est.n01_low);

  const double frac = c.n1_low / sifted.n_t;
  c.n = ch.lower(frac * frac * c.u * sifted.n_t / 2.0);
  c.k = c.u * c.n1_low - 2.0 * c.n;
  if (c.k <= 0.0)
    throw std::runtime_error("aopp_chain: nonpositive pair surplus k, "
                             "insufficient statistics for AOPP bound");

  // r is defined implicitly; with a constant trace distance the fixed point
  // lands immediately, but iterate anyway so a level-dependent epsilon would
  // still converge
  const double eps_rk = 1e-10;
  double r = (2.0 * c.n + c.k) / c.k * std::log(3.0 * c.k * c.k / eps_rk);
  for (int it = 0; it < 200; ++it) {
    const double next = (2.0 * c.n + c.k) / c.k * std::log(3.0 * c.k * c.k / eps_rk);
    if (std::abs(next - r) <= 1e-9 * std::abs(r)) { r = next; break; }
    r = 0.5 * (r + next);
  }
  c.r = r;
  if (2.0 * c.n - c.r <= 0.0)
    throw std::runtime_error("insufficient statistics for AOPP bound");

  c.m_bar = ch.upper(2.0 * c.n * est.e1ph_up);
  c.e_tau = c.m_bar / (2.0 * c.n - c.r);
  c.m_bar_s = ch.upper((c.n - c.r) * c.e_tau * (1.0 - c.e_tau)) + c.r;

  c.n1_prime = ch.lower((c.n01_low / sifted.n_t0) * (c.n10_low / sifted.n_t1) * c.n_g);
  c.e1ph_prime = c.n1_prime > 0.0 ? 2.0 * c.m_bar_s / c.n1_prime : 1.0;
  return c;
}

PlobBounds plob_bounds(const ChannelModel& channel) {
  PlobBounds b;
  const double eta = std::pow(10.0, -channel.total_loss_db() / 10.0);
  b.absolute = -std::log2(1.0 - eta);
  b.relative = -std::log2(1.0 - eta * channel.eta_d);
  return b;
}

double binary_entropy(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

KeyRateReport key_rate(const AoppChain& chain, const ProtocolParams& params,
                       const ChannelModel& channel) {
  KeyRateReport rep;
  rep.plob = plob_bounds(channel);
  if (chain.e1ph_prime > 0.5) {
    rep.zero_reason = "phase-flip error bound above 1/2";
  } else {
    double len = chain.n1_prime * (1.0 - binary_entropy(chain.e1ph_prime)) -
                 params.f * chain.nt_prime * binary_entropy(chain.e_prime) -
                 2.0 * std::log2(2.0 / params.eps_cor) -
                 2.0 * std::log2(1.0 / (std::sqrt(2.0) * params.eps_pa * params.eps_hat));
    if (len <= 0.0) {
      rep.zero_reason = "finite-size costs exceed extractable entropy";
      len = 0.0;
    }
    rep.key_length = len;
  }
  if (params.n_total > 0.0) rep.rate_per_pulse = rep.key_length / params.n_total;
  rep.rate_bps = rep.rate_per_pulse * channel.clock_hz * channel.duty;
  if (rep.plob.absolute > 0.0) rep.ratio_absolute = rep.rate_per_pulse / rep.plob.absolute;
  if (rep.plob.relative > 0.0) rep.ratio_relative = rep.rate_per_pulse / rep.plob.relative;
  return rep;
}

std::uint64_t fnv1a_hash(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hash(ss.str());
}

AnalysisReport analyze(const SourceTally& tally, const SiftedKeys& sifted,
                       const PairingStats& pairing, const ProtocolParams& params,
                       const ChannelModel& channel, const DecoyOptions& options) {
  AnalysisReport rep;
  rep.params = params;
  rep.channel = channel;
  rep.tally = tally;
  rep.sifted = sifted;
  rep.options = options;
  rep.decoy = decoy_bounds(tally, params, options);
  rep.chain = aopp_chain(rep.decoy, sifted, pairing, params, options.chernoff);
  rep.rate = key_rate(rep.chain, params, channel);
  return rep;
}

namespace {

nlohmann::json pooled_json(const PooledRate& p) {
  return {{"sent", p.sent}, {"heralded", p.heralded}, {"rate", p.rate()}};
}

} // namespace

std::string AnalysisReport::to_json() const {
  nlohmann::json j;
  j["metadata"]["chernoff_form"] = chernoff_form_name(options.chernoff.form);
  j["metadata"]["failure_prob_per_use"] = options.chernoff.failure_prob;
  j["metadata"]["epsilon_budget"] = {{"eps_sec", params.eps_sec},
                                     {"eps_cor", params.eps_cor},
                                     {"eps_pa", params.eps_pa},
                                     {"eps_hat", params.eps_hat}};
  j["metadata"]["as_printed_s9"] = options.as_printed_s9;
  for (const auto& [name, hash] : input_hashes) {
    std::ostringstream hs;
    hs << std::hex << hash;
    j["metadata"]["input_hashes"][name] = hs.str();
  }

  auto& cells = j["tally"]["cells"];
  for (int c = 0; c < kNumCells; ++c)
    cells[CellKey::from_code(c).label()] = {{"sent", tally.sent[c]},
                                            {"heralded", tally.heralded[c]}};
  j["tally"]["x_sent_in_slice"] = tally.x_sent_in_slice;
  j["tally"]["x_effective"] = tally.x_effective;
  j["tally"]["x_errors"] = tally.x_errors;

  j["sifted"] = {{"n_t", sifted.n_t}, {"n_t0", sifted.n_t0},
                 {"n_t1", sifted.n_t1}, {"e_count", sifted.e_count},
                 {"qber", sifted.qber()}};

  auto& d = j["decoy"];
  d["S_oo"] = pooled_json(decoy.s_oo);
  d["S_ox"] = pooled_json(decoy.s_ox);
  d["S_xo"] = pooled_json(decoy.s_xo);
  d["S_oy"] = pooled_json(decoy.s_oy);
  d["S_yo"] = pooled_json(decoy.s_yo);
  d["s01_low"] = decoy.s01_low;
  d["s10_low"] = decoy.s10_low;
  d["s1_low"] = decoy.s1_low;
  d["n10_low"] = decoy.n10_low;
  d["n01_low"] = decoy.n01_low;
  d["n_x"] = decoy.n_x;
  d["t_x_up"] = decoy.t_x_up;
  d["e1ph_up"] = decoy.e1ph_up;
  d["warnings"] = decoy.warnings;

  auto& a = j["aopp"];
  a["n_g"] = chain.n_g;
  a["n_odd"] = chain.n_odd;
  a["u"] = chain.u;
  a["n1_low"] = chain.n1_low;
  a["n10_low"] = chain.n10_low;
  a["n01_low"] = chain.n01_low;
  a["n"] = chain.n;
  a["k"] = chain.k;
  a["r"] = chain.r;
  a["m_bar"] = chain.m_bar;
  a["e_tau"] = chain.e_tau;
  a["m_bar_s"] = chain.m_bar_s;
  a["n1_prime"] = chain.n1_prime;
  a["e1ph_prime"] = chain.e1ph_prime;
  a["nt_prime"] = chain.nt_prime;
  a["e_prime"] = chain.e_prime;

  auto& k = j["key"];
  k["key_length"] = rate.key_length;
  k["rate_per_pulse"] = rate.rate_per_pulse;
  k["rate_bps"] = rate.rate_bps;
  k["plob_absolute"] = rate.plob.absolute;
  k["plob_relative"] = rate.plob.relative;
  k["ratio_absolute"] = rate.ratio_absolute;
  k["ratio_relative"] = rate.ratio_relative;
  if (!rate.zero_reason.empty()) k["zero_reason"] = rate.zero_reason;
  return j.dump(2) + "\n";
}

std::string AnalysisReport::to_csv() const {
  std::ostringstream os;
  os.precision(12);
  os << "name,value\n";
  auto row = [&os](const std::string& name, double v) {
    os << name << "," << v << "\n";
  };
  os << "chernoff_form," << chernoff_form_name(options.chernoff.form) << "\n";
  row("failure_prob_per_use", options.chernoff.failure_prob);
  for (int c = 0; c < kNumCells; ++c) {
    const std::string lbl = CellKey::from_code(c).label();
    row("sent_" + lbl, tally.sent[c]);
    row("heralded_" + lbl, tally.heralded[c]);
  }
  row("x_sent_in_slice", tally.x_sent_in_slice);
  row("x_effective", tally.x_effective);
  row("x_errors", tally.x_errors);
  row("n_t", sifted.n_t);
  row("n_t0", sifted.n_t0);
  row("n_t1", sifted.n_t1);
  row("e_count", sifted.e_count);
  row("qber", sifted.qber());
  row("S_oo_rate", decoy.s_oo.rate());
  row("S_ox_rate", decoy.s_ox.rate());
  row("S_xo_rate", decoy.s_xo.rate());
  row("S_oy_rate", decoy.s_oy.rate());
  row("S_yo_rate", decoy.s_yo.rate());
  row("s01_low", decoy.s01_low);
  row("s10_low", decoy.s10_low);
  row("s1_low", decoy.s1_low);
  row("n10_low", decoy.n10_low);
  row("n01_low", decoy.n01_low);
  row("n_x", decoy.n_x);
  row("t_x_up", decoy.t_x_up);
  row("e1ph_up", decoy.e1ph_up);
  row("n_g", chain.n_g);
  row("n_odd", chain.n_odd);
  row("u", chain.u);
  row("n1_low", chain.n1_low);
  row("aopp_n", chain.n);
  row("aopp_k", chain.k);
  row("aopp_r", chain.r);
  row("m_bar", chain.m_bar);
  row("e_tau", chain.e_tau);
  row("m_bar_s", chain.m_bar_s);
  row("n1_prime", chain.n1_prime);
  row("e1ph_prime", chain.e1ph_prime);
  row("nt_prime", chain.nt_prime);
  row("e_prime", chain.e_prime);
  row("key_length", rate.key_length);
  row("rate_per_pulse", rate.rate_per_pulse);
  row("rate_bps", rate.rate_bps);
  row("plob_absolute", rate.plob.absolute);
  row("plob_relative", rate.plob.relative);
  row("ratio_absolute", rate.ratio_absolute);
  row("ratio_relative", rate.ratio_relative);
  return os.str();
}

} // namespace snstf
