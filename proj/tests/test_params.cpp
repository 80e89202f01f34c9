#include "snstf/params.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace snstf;

namespace {

ProtocolParams field_params() {
  return load_protocol_params(std::string(SNSTF_DATA_DIR) + "/fieldtest_params.txt");
}

} // namespace

TEST_CASE("bundled parameter set validates") {
  const auto p = field_params();
  const auto rep = validate(p);
  for (const auto& v : rep.violations) CAPTURE(v);
  CHECK(rep.ok());
  CHECK(rep.s1_residual == doctest::Approx(3.43e-4).epsilon(0.05));
}

TEST_CASE("validation reports violated invariants") {
  auto p = field_params();
  p.mu_a1 = p.mu_a2 + 0.1;
  auto rep = validate(p);
  REQUIRE_FALSE(rep.ok());
  bool found = false;
  for (const auto& v : rep.violations)
    if (v.find("decoy intensity must be strictly below signal intensity") != std::string::npos)
      found = true;
  CHECK(found);

  p = field_params();
  p.p_a2 = 1.4;
  rep = validate(p);
  REQUIRE_FALSE(rep.ok());
  found = false;
  for (const auto& v : rep.violations)
    if (v.find("probability out of range") != std::string::npos) found = true;
  CHECK(found);
}

TEST_CASE("derive_mu_b1 satisfies the intensity constraint exactly") {
  auto p = field_params();
  p.mu_b1 = derive_mu_b1(p);
  CHECK(std::abs(p.mu_a1 / p.mu_b1 / security_constraint_rhs(p) - 1.0) < 1e-12);
}

TEST_CASE("cell probabilities form a distribution") {
  const auto p = field_params();
  double total = 0;
  for (int c = 0; c < kNumCells; ++c)
    total += cell_probability(p, CellKey::from_code(c));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  for (bool alice : {true, false}) {
    double marg = 0;
    for (int i = 0; i < 4; ++i) marg += party_choice_probability(p, alice, i);
    CHECK(marg == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("cell label round trip") {
  for (int c = 0; c < kNumCells; ++c) {
    const auto cell = CellKey::from_code(c);
    CHECK(cell.code() == c);
    CHECK(CellKey::from_indices(cell.a_index(), cell.b_index()).code() == c);
  }
  CHECK(CellKey::from_code(4 * 2 + 2).label() == "X_A1X_B1");
}

TEST_CASE("window probabilities recovered from sent counts") {
  const auto p = field_params();
  std::array<double, kNumCells> sent{};
  for (int c = 0; c < kNumCells; ++c)
    sent[c] = p.n_total * cell_probability(p, CellKey::from_code(c));
  const auto fit = derive_window_probs(sent, p.n_total);
  CHECK(fit.p_a2 == doctest::Approx(p.p_a2).epsilon(1e-9));
  CHECK(fit.p_b2 == doctest::Approx(p.p_b2).epsilon(1e-9));
  CHECK(fit.eps_a == doctest::Approx(p.eps_a).epsilon(1e-9));
  CHECK(fit.eps_b == doctest::Approx(p.eps_b).epsilon(1e-9));
  CHECK(fit.p_a1 == doctest::Approx(p.p_a1).epsilon(1e-9));
  CHECK(fit.p_b1 == doctest::Approx(p.p_b1).epsilon(1e-9));
  CHECK(fit.max_rel_residual < 1e-9);
}

TEST_CASE("parameter file round trip") {
  const auto p = field_params();
  std::ostringstream os;
  save_protocol_params(p, os);
  const std::string tmp = "params_roundtrip.txt";
  {
    std::ofstream f(tmp);
    f << os.str();
  }
  const auto q = load_protocol_params(tmp);
  CHECK(q.mu_a1 == doctest::Approx(p.mu_a1).epsilon(1e-14));
  CHECK(q.eps_b == doctest::Approx(p.eps_b).epsilon(1e-14));
  CHECK(q.lambda == doctest::Approx(p.lambda).epsilon(1e-14));
  CHECK(q.n_total == doctest::Approx(p.n_total).epsilon(1e-14));
}
