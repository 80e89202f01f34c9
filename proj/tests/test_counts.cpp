#include "snstf/counts.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace snstf;

namespace {

const std::string kCounts = std::string(SNSTF_DATA_DIR) + "/fieldtest_counts.txt";

void write_tmp(const std::string& path, const std::string& body) {
  std::ofstream f(path);
  f << body;
}

} // namespace

TEST_CASE("bundled counts table loads") {
  SiftedKeys sifted;
  const auto tally = load_counts_file(kCounts, &sifted);
  CHECK(tally.total_sent() == doctest::Approx(5.59e12).epsilon(2e-3));
  CHECK(sifted.n_t == doctest::Approx(27921308));
  CHECK(sifted.qber() == doctest::Approx(0.2784).epsilon(1e-3));
  const auto xr = x_error_rate(tally);
  CHECK(xr.qber_x == doctest::Approx(0.0962).epsilon(1e-3));
}

TEST_CASE("sifted statistics derive from the Z cells") {
  const auto tally = load_counts_file(kCounts);
  const auto s = sifted_from_tally(tally);
  CHECK(s.n_t == doctest::Approx(27921308));
  CHECK(s.n_t0 == doctest::Approx(18035297));
  CHECK(s.n_t1 == doctest::Approx(9886011));
  CHECK(s.e_count == doctest::Approx(7773409));
}

TEST_CASE("counts parse errors name the offending row") {
  write_tmp("bad_counts.txt", "Z_AOZ_BO 100 -5\n");
  CHECK_THROWS_WITH_AS(load_counts_file("bad_counts.txt"),
                       doctest::Contains("negative count"), std::runtime_error);

  write_tmp("bad_counts2.txt", "Z_AOZ_BO 100 200\n");
  CHECK_THROWS_WITH_AS(load_counts_file("bad_counts2.txt"),
                       doctest::Contains("gain exceeds sent"), std::runtime_error);

  write_tmp("bad_counts3.txt", "Z_AOZ_BO 100 5\n");
  CHECK_THROWS_WITH_AS(load_counts_file("bad_counts3.txt"),
                       doctest::Contains("missing row"), std::runtime_error);
}

TEST_CASE("tally merge is associative and commutative") {
  const auto base = load_counts_file(kCounts);
  SourceTally a = base, b = base, c = base;
  for (int i = 0; i < kNumCells; ++i) {
    b.heralded[i] *= 0.5;
    c.sent[i] *= 2.0;
  }
  SourceTally ab = a;
  ab.merge(b);
  SourceTally ab_c = ab;
  ab_c.merge(c);
  SourceTally bc = b;
  bc.merge(c);
  SourceTally a_bc = a;
  a_bc.merge(bc);
  SourceTally ba = b;
  ba.merge(a);
  for (int i = 0; i < kNumCells; ++i) {
    CHECK(ab_c.heralded[i] == doctest::Approx(a_bc.heralded[i]).epsilon(1e-12));
    CHECK(ab.sent[i] == doctest::Approx(ba.sent[i]).epsilon(1e-12));
  }
}

TEST_CASE("counts file round trip") {
  SiftedKeys sifted;
  const auto tally = load_counts_file(kCounts, &sifted);
  std::ostringstream os;
  write_counts_file(tally, sifted, os);
  write_tmp("counts_roundtrip.txt", os.str());
  SiftedKeys sifted2;
  const auto tally2 = load_counts_file("counts_roundtrip.txt", &sifted2);
  for (int i = 0; i < kNumCells; ++i) {
    CHECK(tally2.sent[i] == tally.sent[i]);
    CHECK(tally2.heralded[i] == tally.heralded[i]);
  }
  CHECK(tally2.x_effective == tally.x_effective);
  CHECK(tally2.x_errors == tally.x_errors);
  CHECK(sifted2.n_t == sifted.n_t);
  CHECK(sifted2.e_count == sifted.e_count);
}
