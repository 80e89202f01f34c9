#include "snstf/optimizer.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace snstf;

namespace {

ProtocolParams field_params() {
  return load_protocol_params(std::string(SNSTF_DATA_DIR) + "/fieldtest_params.txt");
}
ChannelModel field_channel() {
  return load_channel_model(std::string(SNSTF_DATA_DIR) + "/fieldtest_channel.txt");
}

SearchSpace fixed_space(const ProtocolParams& p) {
  SearchSpace s;
  s.mu_a1 = {p.mu_a1, p.mu_a1, true};
  s.mu_a2 = {p.mu_a2, p.mu_a2, true};
  s.mu_b2 = {p.mu_b2, p.mu_b2, true};
  s.eps_a = {p.eps_a, p.eps_a, true};
  s.eps_b = {p.eps_b, p.eps_b, true};
  s.p_a1 = {p.p_a1, p.p_a1, true};
  s.p_b1 = {p.p_b1, p.p_b1, true};
  s.p_a2 = {p.p_a2, p.p_a2, true};
  s.p_b2 = {p.p_b2, p.p_b2, true};
  s.lambda = {p.lambda, p.lambda, true};
  s.n_total = p.n_total;
  s.f = p.f;
  return s;
}

} // namespace

TEST_CASE("objective at the published operating point") {
  const double r = objective(field_params(), field_channel());
  CHECK(r == doctest::Approx(4.80e-8).epsilon(0.10));
}

TEST_CASE("objective is zero for dead detectors and invalid params") {
  auto dead = field_channel();
  dead.eta_d = 0.0;
  CHECK(objective(field_params(), dead) == 0.0);
  auto bad = field_params();
  bad.mu_a1 = bad.mu_a2 + 1.0;
  CHECK(objective(bad, field_channel()) == 0.0);
}

TEST_CASE("objective is smooth around the operating point") {
  const auto p0 = field_params();
  const auto ch = field_channel();
  const double r0 = objective(p0, ch);
  double best = 0.0;
  auto perturb = [&](double ProtocolParams::* f) {
    for (double sign : {-1.0, 1.0}) {
      auto p = p0;
      p.*f *= 1.0 + sign * 0.01;
      p.mu_b1 = derive_mu_b1(p);
      best = std::max(best, objective(p, ch));
    }
  };
  perturb(&ProtocolParams::mu_a1);
  perturb(&ProtocolParams::mu_a2);
  perturb(&ProtocolParams::mu_b2);
  perturb(&ProtocolParams::eps_a);
  perturb(&ProtocolParams::eps_b);
  perturb(&ProtocolParams::p_a2);
  CHECK(best > 0.0);
  CHECK(std::abs(best / r0 - 1.0) < 0.25);
}

TEST_CASE("single-point space returns that point") {
  const auto p = field_params();
  const auto res = optimize(fixed_space(p), field_channel(), 50, 3);
  CHECK(res.params.mu_a1 == doctest::Approx(p.mu_a1));
  CHECK(res.params.eps_b == doctest::Approx(p.eps_b));
  CHECK(res.rate == doctest::Approx(objective(p, field_channel())).epsilon(1e-9));
}

TEST_CASE("every candidate satisfies the intensity constraint") {
  auto p = field_params();
  auto s = fixed_space(p);
  s.mu_a2 = {p.mu_a2 * 0.9, p.mu_a2 * 1.1, false};
  s.eps_a = {p.eps_a * 0.9, p.eps_a * 1.1, false};
  const auto res = optimize(s, field_channel(), 60, 3);
  CHECK(std::abs(res.params.mu_a1 / res.params.mu_b1 /
                     security_constraint_rhs(res.params) -
                 1.0) < 1e-12);
  CHECK(res.rate >= objective(s.at_midpoint(), field_channel()) * (1.0 - 1e-12));
}

TEST_CASE("inverted bounds are rejected") {
  auto s = fixed_space(field_params());
  s.mu_a2 = {0.5, 0.4, false};
  CHECK_THROWS_AS(optimize(s, field_channel(), 100, 1), std::invalid_argument);
}
