#include "snstf/analysis.hpp"
#include "snstf/optimizer.hpp"
#include "snstf/optics.hpp"
#include "snstf/tally.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitInfeasible = 3;

struct RunConfig {
  std::string mode;
  std::string params_path;
  std::string channel_path;
  std::string counts_path;
  std::string out_dir;
  std::uint64_t seed = 1;
  std::uint64_t n_pairs = 0;
  double sweep_from = 0, sweep_to = 0;
  int sweep_steps = 0;
  std::string chernoff_form = "multiplicative";
  bool as_printed_s9 = false;
};

snstf::DecoyOptions decoy_options(const RunConfig& cfg) {
  snstf::DecoyOptions opt;
  opt.as_printed_s9 = cfg.as_printed_s9;
  if (cfg.chernoff_form == "none")
    opt.chernoff.form = snstf::ChernoffForm::None;
  else if (cfg.chernoff_form != "multiplicative")
    throw std::runtime_error("unknown chernoff form: " + cfg.chernoff_form);
  return opt;
}

void write_reports(const snstf::AnalysisReport& rep, const std::string& out_dir) {
  if (out_dir.empty()) return;
  std::filesystem::create_directories(out_dir);
  std::ofstream js(out_dir + "/report.json");
  js << rep.to_json();
  std::ofstream cs(out_dir + "/report.csv");
  cs << rep.to_csv();
}

void print_summary(const snstf::AnalysisReport& rep) {
  std::cout.precision(6);
  const auto& c = rep.chain;
  const auto& r = rep.rate;
  std::cout << "untagged bits (pre-pairing)   n1      = "
            << rep.decoy.n10_low + rep.decoy.n01_low << "\n"
            << "phase-flip error (pre)        e1ph    = " << rep.decoy.e1ph_up << "\n"
            << "untagged bits (post-pairing)  n1'     = " << c.n1_prime << "\n"
            << "phase-flip error (post)       e1ph'   = " << c.e1ph_prime << "\n"
            << "sifted qber                   E       = " << rep.sifted.qber() << "\n"
            << "post-pairing qber             E'      = " << c.e_prime << "\n"
            << "key length                            = " << r.key_length << "\n"
            << "key rate per pulse            R       = " << r.rate_per_pulse << "\n"
            << "key rate                              = " << r.rate_bps << " bps\n"
            << "plob absolute / relative              = " << r.plob.absolute
            << " / " << r.plob.relative << "\n";
  for (const auto& w : rep.decoy.warnings) std::cout << "warning: " << w << "\n";
  if (!r.zero_reason.empty()) std::cout << "zero key: " << r.zero_reason << "\n";
}

int run_replay(const RunConfig& cfg) {
  auto params = snstf::load_protocol_params(cfg.params_path);
  auto channel = snstf::load_channel_model(cfg.channel_path);
  snstf::SiftedKeys sifted;
  auto tally = snstf::load_counts_file(cfg.counts_path, &sifted);

  double heralded_total = 0;
  for (double g : tally.heralded) heralded_total += g;
  if (heralded_total <= 0.0) {
    std::cout << "no effective events; key rate 0\n";
    return kExitOk;
  }

  auto pairing = snstf::expected_pairing_stats(tally);
  snstf::AnalysisReport rep;
  try {
    rep = snstf::analyze(tally, sifted, pairing, params, channel, decoy_options(cfg));
  } catch (const std::exception& e) {
    std::cerr << "analysis infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  }
  rep.input_hashes = {{"params", snstf::hash_file(cfg.params_path)},
                      {"channel", snstf::hash_file(cfg.channel_path)},
                      {"counts", snstf::hash_file(cfg.counts_path)}};
  write_reports(rep, cfg.out_dir);
  print_summary(rep);
  if (rep.rate.key_length <= 0.0) {
    std::cerr << "analysis infeasible: " << rep.rate.zero_reason << "\n";
    return kExitInfeasible;
  }
  return kExitOk;
}

int run_simulate(const RunConfig& cfg) {
  if (cfg.n_pairs < 1) {
    std::cerr << "simulate mode needs --pairs >= 1\n";
    return kExitInput;
  }
  auto params = snstf::load_protocol_params(cfg.params_path);
  auto channel = snstf::load_channel_model(cfg.channel_path);
  params.n_total = double(cfg.n_pairs);

  const int threads = int(std::max(1u, std::thread::hardware_concurrency()));
  auto sim = snstf::run_simulation(params, channel, cfg.n_pairs, cfg.seed, threads);

  snstf::PairingStats pairing;
  if (!sim.sifted.bits_bob.empty())
    pairing = snstf::aopp_simulate(sim.sifted.bits_alice, sim.sifted.bits_bob, cfg.seed);
  else
    pairing = snstf::expected_pairing_stats(sim.tally);

  snstf::AnalysisReport rep;
  rep.params = params;
  rep.channel = channel;
  rep.tally = sim.tally;
  rep.sifted = sim.sifted;
  rep.options = decoy_options(cfg);
  rep.decoy = snstf::decoy_bounds(sim.tally, params, rep.options);
  try {
    rep.chain = snstf::aopp_chain(rep.decoy, sim.sifted, pairing, params,
                                  rep.options.chernoff);
    rep.rate = snstf::key_rate(rep.chain, params, channel);
  } catch (const std::exception& e) {
    // finite-size bounds can be infeasible at small n_pairs; still report
    rep.chain.n_g = pairing.n_g;
    rep.chain.n_odd = pairing.n_odd;
    rep.chain.nt_prime = pairing.nt_prime;
    rep.chain.e_prime = pairing.e_prime;
    rep.rate = snstf::KeyRateReport{};
    rep.rate.plob = snstf::plob_bounds(channel);
    rep.rate.zero_reason = e.what();
  }
  rep.input_hashes = {{"params", snstf::hash_file(cfg.params_path)},
                      {"channel", snstf::hash_file(cfg.channel_path)}};
  write_reports(rep, cfg.out_dir);
  if (!cfg.out_dir.empty()) {
    std::ofstream cf(cfg.out_dir + "/counts.txt");
    snstf::write_counts_file(sim.tally, sim.sifted, cf);
  }
  print_summary(rep);
  return kExitOk;
}

snstf::SearchSpace space_around(const snstf::ProtocolParams& p) {
  snstf::SearchSpace s;
  auto box = [](double v, double rel, double cap) {
    snstf::ParamBound b;
    b.lo = v * (1.0 - rel);
    b.hi = std::min(cap, v * (1.0 + rel));
    return b;
  };
  s.mu_a1 = box(p.mu_a1, 0.15, 10.0);
  s.mu_a2 = box(p.mu_a2, 0.15, 10.0);
  s.mu_b2 = box(p.mu_b2, 0.15, 10.0);
  s.eps_a = box(p.eps_a, 0.15, 0.999);
  s.eps_b = box(p.eps_b, 0.15, 0.999);
  s.p_a1 = box(p.p_a1, 0.1, 0.999);
  s.p_b1 = box(p.p_b1, 0.1, 0.999);
  s.p_a2 = box(p.p_a2, 0.1, 0.999);
  s.p_b2 = box(p.p_b2, 0.1, 0.999);
  s.lambda = {p.lambda, p.lambda, true};
  s.n_total = p.n_total;
  s.f = p.f;
  return s;
}

int run_optimize(const RunConfig& cfg) {
  auto params = snstf::load_protocol_params(cfg.params_path);
  auto channel = snstf::load_channel_model(cfg.channel_path);
  auto space = space_around(params);
  auto best = snstf::optimize(space, channel, 2000, cfg.seed);
  std::cout.precision(6);
  std::cout << "best rate per pulse = " << best.rate << " after "
            << best.evaluations << " evaluations\n";
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream pf(cfg.out_dir + "/optimized_params.txt");
    snstf::save_protocol_params(best.params, pf);
  }
  return best.rate > 0.0 ? kExitOk : kExitInfeasible;
}

int run_sweep(const RunConfig& cfg) {
  if (cfg.sweep_steps < 1 || cfg.sweep_to < cfg.sweep_from) {
    std::cerr << "sweep mode needs --sweep-from/--sweep-to/--sweep-steps\n";
    return kExitInput;
  }
  auto params = snstf::load_protocol_params(cfg.params_path);
  auto channel = snstf::load_channel_model(cfg.channel_path);
  auto space = space_around(params);
  auto points = snstf::sweep_distance(space, channel, cfg.sweep_from,
                                      cfg.sweep_to, cfg.sweep_steps, 400, cfg.seed);
  std::ostringstream csv;
  snstf::write_sweep_csv(points, csv);
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].best.rate > points[i - 1].best.rate * (1.0 + 1e-9))
      csv << "# warning: rate not monotone between " << points[i - 1].distance_km
          << " and " << points[i].distance_km << " km\n";
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream f(cfg.out_dir + "/sweep.csv");
    f << csv.str();
  }
  std::cout << csv.str();
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"sns-tf-qkd analysis pipeline"};
  app.add_option("--mode", cfg.mode, "replay | simulate | optimize | sweep")
      ->required();
  app.add_option("--params", cfg.params_path, "protocol parameter file");
  app.add_option("--channel", cfg.channel_path, "channel model file");
  app.add_option("--counts", cfg.counts_path, "counts table (replay mode)");
  app.add_option("--out", cfg.out_dir, "output directory for reports");
  app.add_option("--seed", cfg.seed, "random seed");
  app.add_option("--pairs", cfg.n_pairs, "pulse pairs to simulate");
  app.add_option("--sweep-from", cfg.sweep_from, "sweep start distance, km");
  app.add_option("--sweep-to", cfg.sweep_to, "sweep end distance, km");
  app.add_option("--sweep-steps", cfg.sweep_steps, "sweep point count");
  app.add_option("--chernoff-form", cfg.chernoff_form, "multiplicative | none");
  app.add_flag("--as-printed-s9", cfg.as_printed_s9,
               "scale the untagged-0 count by s10 instead of s01");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (cfg.mode == "replay") {
      if (cfg.params_path.empty() || cfg.channel_path.empty() || cfg.counts_path.empty()) {
        std::cerr << "replay mode needs --params, --channel and --counts\n";
        return kExitInput;
      }
      return run_replay(cfg);
    }
    if (cfg.mode == "simulate") {
      if (cfg.params_path.empty() || cfg.channel_path.empty()) {
        std::cerr << "simulate mode needs --params and --channel\n";
        return kExitInput;
      }
      return run_simulate(cfg);
    }
    if (cfg.mode == "optimize") {
      if (cfg.params_path.empty() || cfg.channel_path.empty()) {
        std::cerr << "optimize mode needs --params and --channel\n";
        return kExitInput;
      }
      return run_optimize(cfg);
    }
    if (cfg.mode == "sweep") {
      if (cfg.params_path.empty() || cfg.channel_path.empty()) {
        std::cerr << "sweep mode needs --params and --channel\n";
        return kExitInput;
      }
      return run_sweep(cfg);
    }
    std::cerr << "unknown mode: " << cfg.mode << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}
