#include "snstf/tally.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace snstf;

namespace {

ProtocolParams field_params() {
  return load_protocol_params(std::string(SNSTF_DATA_DIR) + "/fieldtest_params.txt");
}
ChannelModel field_channel() {
  return load_channel_model(std::string(SNSTF_DATA_DIR) + "/fieldtest_channel.txt");
}

PulsePairOutcome make_event(std::uint64_t idx, int a, int b, bool left) {
  PulsePairOutcome e;
  e.timestamp_index = idx;
  e.cell = CellKey::from_indices(a, b);
  e.click_left = left;
  e.click_right = !left;
  return e;
}

} // namespace

TEST_CASE("Z sifting applies the send conventions") {
  std::vector<PulsePairOutcome> ev;
  ev.push_back(make_event(0, 3, 3, true));  // send-send: bits 1/0, error
  ev.push_back(make_event(1, 0, 0, true));  // notsend-notsend: bits 0/1, error
  ev.push_back(make_event(2, 3, 0, true));  // A send, B notsend: bits 1/1
  ev.push_back(make_event(3, 0, 3, true));  // A notsend, B send: bits 0/0
  ev.push_back(make_event(4, 2, 2, true));  // X window, ignored here
  const auto s = sift_z(ev);
  CHECK(s.n_t == 4);
  CHECK(s.n_t0 == 2);
  CHECK(s.n_t1 == 2);
  CHECK(s.e_count == 2);
  REQUIRE(s.bits_alice.size() == 4);
  CHECK(s.bits_alice[0] == 1);
  CHECK(s.bits_bob[0] == 0);
  CHECK(s.bits_alice[2] == 1);
  CHECK(s.bits_bob[2] == 1);
}

TEST_CASE("accumulate rejects malformed events") {
  std::array<std::uint64_t, kNumCells> sent{};
  PulsePairOutcome bad;
  bad.cell = CellKey::from_indices(0, 0);
  bad.click_left = true;
  bad.click_right = true; // double click is not a heralded event
  std::vector<PulsePairOutcome> ev{bad};
  CHECK_THROWS_AS(accumulate(ev, sent, 0, field_params()), std::runtime_error);
}

TEST_CASE("simulation is independent of thread partitioning") {
  auto params = field_params();
  params.n_total = 300000;
  const auto channel = field_channel();
  const auto r1 = run_simulation(params, channel, 300000, 1234, 1);
  const auto r4 = run_simulation(params, channel, 300000, 1234, 4);
  for (int c = 0; c < kNumCells; ++c) {
    CHECK(r1.sent[c] == r4.sent[c]);
    CHECK(r1.tally.heralded[c] == r4.tally.heralded[c]);
  }
  CHECK(r1.x_sent_in_slice == r4.x_sent_in_slice);
  CHECK(r1.tally.x_effective == r4.tally.x_effective);
  CHECK(r1.tally.x_errors == r4.tally.x_errors);
  CHECK(r1.sifted.n_t == r4.sifted.n_t);
  CHECK(r1.sifted.bits_alice == r4.sifted.bits_alice);
  CHECK(r1.sifted.bits_bob == r4.sifted.bits_bob);
}

TEST_CASE("event stream round trip") {
  auto params = field_params();
  params.n_total = 200000;
  const auto channel = field_channel();
  auto sim = run_simulation(params, channel, 200000, 77, 2, std::size_t(1) << 28, true);
  std::ostringstream os;
  write_event_stream(os, sim, 77, 200000, 123456);
  {
    std::ofstream f("events_roundtrip.txt");
    f << os.str();
  }
  const auto es = load_event_stream("events_roundtrip.txt");
  CHECK(es.seed == 77);
  CHECK(es.n_pairs == 200000);
  CHECK(es.params_hash == 123456);
  REQUIRE(es.events.size() == sim.heralded.size());
  for (std::size_t i = 0; i < es.events.size(); ++i) {
    CHECK(es.events[i].timestamp_index == sim.heralded[i].timestamp_index);
    CHECK(es.events[i].cell.code() == sim.heralded[i].cell.code());
    CHECK(es.events[i].click_left == sim.heralded[i].click_left);
  }
  for (int c = 0; c < kNumCells; ++c) CHECK(es.sent[c] == sim.sent[c]);
  CHECK(es.x_sent_in_slice == sim.x_sent_in_slice);

  // replaying the stream rebuilds the identical tally
  const auto replayed = accumulate(es.events, es.sent, es.x_sent_in_slice, params);
  for (int c = 0; c < kNumCells; ++c)
    CHECK(replayed.heralded[c] == sim.tally.heralded[c]);
  CHECK(replayed.x_effective == sim.tally.x_effective);
  CHECK(replayed.x_errors == sim.tally.x_errors);
}
