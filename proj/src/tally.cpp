#include "snstf/tally.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace snstf {

SourceTally accumulate(std::span<const PulsePairOutcome> events,
                       const std::array<std::uint64_t, kNumCells>& sent,
                       std::uint64_t x_sent_in_slice,
                       const ProtocolParams& params) {
  SourceTally t;
  for (int c = 0; c < kNumCells; ++c) t.sent[c] = double(sent[c]);
  t.x_sent_in_slice = double(x_sent_in_slice);
  for (std::size_t idx = 0; idx < events.size(); ++idx) {
    const auto& ev = events[idx];
    if (!ev.cell.valid() || !ev.heralded())
      throw std::runtime_error("malformed event record at index " + std::to_string(idx));
    const int code = ev.cell.code();
    t.heralded[code] += 1.0;
    if (code == 4 * 2 + 2 &&
        xwindow_postselect(ev.theta_a, ev.theta_b, ev.psi_ab, params.lambda)) {
      t.x_effective += 1.0;
      const bool right_correct = std::cos(ev.theta_a - ev.theta_b - ev.psi_ab) > 0.0;
      if (ev.click_right != right_correct) t.x_errors += 1.0;
    }
  }
  return t;
}

SiftedKeys sift_z(std::span<const PulsePairOutcome> events, std::size_t string_cap) {
  SiftedKeys s;
  for (const auto& ev : events) {
    const int a = ev.cell.a_index(), b = ev.cell.b_index();
    if ((a != 0 && a != 3) || (b != 0 && b != 3)) continue;
    const std::uint8_t bit_a = a == 3 ? 1 : 0; // Alice: 1 = send
    const std::uint8_t bit_b = b == 3 ? 0 : 1; // Bob: 0 = send
    s.n_t += 1;
    (bit_b ? s.n_t1 : s.n_t0) += 1;
    if (bit_a != bit_b) s.e_count += 1;
    if (std::size_t(s.n_t) <= string_cap) {
      s.bits_alice.push_back(bit_a);
      s.bits_bob.push_back(bit_b);
    }
  }
  if (std::size_t(s.n_t) > string_cap) {
    s.bits_alice.clear();
    s.bits_bob.clear();
  }
  return s;
}

SimulationResult run_simulation(const ProtocolParams& params,
                                const ChannelModel& channel,
                                std::uint64_t n_pairs, std::uint64_t seed,
                                int n_threads, std::size_t string_cap,
                                bool keep_events) {
  if (n_pairs < 1) throw std::invalid_argument("run_simulation: n_pairs must be >= 1");
  auto rep = validate(params);
  if (!rep.ok())
    throw std::invalid_argument("run_simulation: invalid params: " + rep.violations.front());

  EventSimulator sim(params, channel, seed);
  n_threads = std::max(1, n_threads);

  struct Chunk {
    std::array<std::uint64_t, kNumCells> sent{};
    std::uint64_t x_slice = 0;
    std::vector<PulsePairOutcome> events;
  };
  std::vector<Chunk> chunks(n_threads);
  std::vector<std::thread> workers;
  const std::uint64_t per = (n_pairs + n_threads - 1) / n_threads;
  for (int w = 0; w < n_threads; ++w) {
    const std::uint64_t begin = std::min<std::uint64_t>(w * per, n_pairs);
    const std::uint64_t end = std::min<std::uint64_t>(begin + per, n_pairs);
    workers.emplace_back([&, w, begin, end] {
      auto& ch = chunks[w];
      sim.run_range(begin, end, ch.sent, ch.x_slice,
                    [&](const PulsePairOutcome& out) { ch.events.push_back(out); });
    });
  }
  for (auto& th : workers) th.join();

  SimulationResult res;
  std::vector<PulsePairOutcome> all;
  for (auto& ch : chunks) {
    for (int c = 0; c < kNumCells; ++c) res.sent[c] += ch.sent[c];
    res.x_sent_in_slice += ch.x_slice;
    all.insert(all.end(), ch.events.begin(), ch.events.end());
  }
  res.tally = accumulate(all, res.sent, res.x_sent_in_slice, params);
  res.sifted = sift_z(all, string_cap);
  if (keep_events) res.heralded = std::move(all);
  return res;
}

void write_event_stream(std::ostream& os, const SimulationResult& sim,
                        std::uint64_t seed, std::uint64_t n_pairs,
                        std::uint64_t params_hash) {
  os << "# snstf-events v1\n";
  os << "# seed " << seed << "\n# params_hash " << params_hash
     << "\n# n_pairs " << n_pairs << "\n";
  for (int c = 0; c < kNumCells; ++c)
    os << "# sent " << CellKey::from_code(c).label() << " " << sim.sent[c] << "\n";
  os << "# x_sent_in_slice " << sim.x_sent_in_slice << "\n";
  os.precision(17);
  for (const auto& ev : sim.heralded) {
    os << ev.timestamp_index << " " << ev.cell.code() << " "
       << (ev.click_left ? 'L' : 'R');
    const int a = ev.cell.a_index(), b = ev.cell.b_index();
    if (a == 2 || b == 2)
      os << " " << ev.theta_a << " " << ev.theta_b << " " << ev.psi_ab;
    os << "\n";
  }
}

EventStream load_event_stream(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event stream: " + path);
  EventStream es;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "seed") hs >> es.seed;
      else if (key == "params_hash") hs >> es.params_hash;
      else if (key == "n_pairs") hs >> es.n_pairs;
      else if (key == "x_sent_in_slice") hs >> es.x_sent_in_slice;
      else if (key == "sent") {
        std::string label;
        std::uint64_t v = 0;
        hs >> label >> v;
        for (int c = 0; c < kNumCells; ++c)
          if (CellKey::from_code(c).label() == label) es.sent[c] = v;
      }
      continue;
    }
    ++record;
    std::istringstream ls(line);
    PulsePairOutcome ev;
    int code = -1;
    char side = 0;
    if (!(ls >> ev.timestamp_index >> code >> side) || code < 0 ||
        code >= kNumCells || (side != 'L' && side != 'R'))
      throw std::runtime_error(path + ": malformed event record " + std::to_string(record));
    ev.cell = CellKey::from_code(code);
    ev.click_left = side == 'L';
    ev.click_right = !ev.click_left;
    const int a = ev.cell.a_index(), b = ev.cell.b_index();
    if (a == 2 || b == 2) {
      if (!(ls >> ev.theta_a >> ev.theta_b >> ev.psi_ab))
        throw std::runtime_error(path + ": missing phases in event record " +
                                 std::to_string(record));
    }
    es.events.push_back(ev);
  }
  return es;
}

} // namespace snstf
