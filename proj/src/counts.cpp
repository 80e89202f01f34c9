#include "snstf/counts.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace snstf {

double SourceTally::total_sent() const {
  return std::accumulate(sent.begin(), sent.end(), 0.0);
}

void SourceTally::merge(const SourceTally& other) {
  for (int i = 0; i < kNumCells; ++i) {
    sent[i] += other.sent[i];
    heralded[i] += other.heralded[i];
  }
  x_sent_in_slice += other.x_sent_in_slice;
  x_effective += other.x_effective;
  x_errors += other.x_errors;
}

void SiftedKeys::merge(const SiftedKeys& other) {
  n_t += other.n_t;
  n_t0 += other.n_t0;
  n_t1 += other.n_t1;
  e_count += other.e_count;
  bits_alice.insert(bits_alice.end(), other.bits_alice.begin(), other.bits_alice.end());
  bits_bob.insert(bits_bob.end(), other.bits_bob.begin(), other.bits_bob.end());
}

XErrorRates x_error_rate(const SourceTally& tally) {
  if (!(tally.x_sent_in_slice > 0)) throw std::runtime_error("x_error_rate: N_X is zero");
  if (!(tally.x_effective > 0)) throw std::runtime_error("x_error_rate: no effective X events");
  return {tally.x_errors / tally.x_sent_in_slice, tally.x_errors / tally.x_effective};
}

SiftedKeys sifted_from_tally(const SourceTally& tally) {
  // Z cells: party index 0 = signal-window vacuum, 3 = signal-window send.
  const double g00 = tally.heralded[4 * 0 + 0]; // notsend-notsend -> error
  const double g03 = tally.heralded[4 * 0 + 3]; // A notsend, B send -> Bob bit 0
  const double g30 = tally.heralded[4 * 3 + 0]; // A send, B notsend -> Bob bit 1
  const double g33 = tally.heralded[4 * 3 + 3]; // send-send -> error
  SiftedKeys s;
  s.n_t = g00 + g03 + g30 + g33;
  s.n_t0 = g03 + g33;
  s.n_t1 = g00 + g30;
  s.e_count = g00 + g33;
  return s;
}

SourceTally load_counts_file(const std::string& path, SiftedKeys* sifted) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open counts file: " + path);
  SourceTally tally;
  std::array<bool, kNumCells> seen{};
  std::map<std::string, double> trailer;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    const auto where = path + ":" + std::to_string(lineno);

    // a data row starts with a cell label; anything else is a trailer entry
    int a_idx = -1;
    std::string bob_part;
    for (const char* al : {"Z_AO", "X_AO", "X_A1", "Z_A"}) {
      if (first.rfind(al, 0) == 0) {
        int idx = CellKey::index_from_party_label(al, true);
        std::string rest = first.substr(std::string(al).size());
        if (CellKey::index_from_party_label(rest, false) >= 0) {
          a_idx = idx;
          bob_part = rest;
          break;
        }
      }
    }
    if (a_idx >= 0) {
      const int b_idx = CellKey::index_from_party_label(bob_part, false);
      double sent = 0, gain = 0;
      if (!(ls >> sent >> gain))
        throw std::runtime_error(where + ": row '" + first + "' needs <sent> <gain> columns");
      if (sent < 0 || gain < 0)
        throw std::runtime_error(where + ": negative count in row '" + first + "'");
      if (gain > sent)
        throw std::runtime_error(where + ": gain exceeds sent in row '" + first + "'");
      const int code = 4 * a_idx + b_idx;
      if (seen[code]) throw std::runtime_error(where + ": duplicate row '" + first + "'");
      seen[code] = true;
      tally.sent[code] = sent;
      tally.heralded[code] = gain;
    } else {
      double value = 0;
      if (!(ls >> value))
        throw std::runtime_error(where + ": trailer entry '" + first + "' needs a value");
      if (value < 0) throw std::runtime_error(where + ": negative count for '" + first + "'");
      trailer[first] = value;
    }
  }
  for (int c = 0; c < kNumCells; ++c)
    if (!seen[c])
      throw std::runtime_error(path + ": missing row " + CellKey::from_code(c).label());

  auto get = [&](const char* name, double fallback) {
    auto it = trailer.find(name);
    return it == trailer.end() ? fallback : it->second;
  };
  tally.x_effective = get("x_effective", 0);
  tally.x_errors = get("x_errors", 0);
  tally.x_sent_in_slice = get("x_sent_in_slice", 0);
  if (tally.x_errors > tally.x_effective)
    throw std::runtime_error(path + ": x_errors exceeds x_effective");

  if (sifted) {
    SiftedKeys derived = sifted_from_tally(tally);
    sifted->n_t = get("n_t", derived.n_t);
    sifted->n_t0 = get("n_t0", derived.n_t0);
    sifted->n_t1 = get("n_t1", derived.n_t1);
    sifted->e_count = get("e_count", derived.e_count);
  }
  return tally;
}

void write_counts_file(const SourceTally& tally, const SiftedKeys& sifted,
                       std::ostream& os) {
  os.precision(17);
  for (int c = 0; c < kNumCells; ++c) {
    os << CellKey::from_code(c).label() << " "
       << std::llround(tally.sent[c]) << " "
       << std::llround(tally.heralded[c]) << "\n";
  }
  os << "x_sent_in_slice " << std::llround(tally.x_sent_in_slice) << "\n"
     << "x_effective " << std::llround(tally.x_effective) << "\n"
     << "x_errors " << std::llround(tally.x_errors) << "\n"
     << "n_t " << std::llround(sifted.n_t) << "\n"
     << "n_t0 " << std::llround(sifted.n_t0) << "\n"
     << "n_t1 " << std::llround(sifted.n_t1) << "\n"
     << "e_count " << std::llround(sifted.e_count) << "\n";
}

} // namespace snstf
