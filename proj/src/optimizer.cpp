#include "snstf/optimizer.hpp"

#include "snstf/optics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

namespace snstf {

namespace {

struct Dim {
  ParamBound bound;
  double ProtocolParams::* field;
};

std::vector<Dim> all_dims(const SearchSpace& s) {
  return {{s.mu_a1, &ProtocolParams::mu_a1}, {s.mu_a2, &ProtocolParams::mu_a2},
          {s.mu_b2, &ProtocolParams::mu_b2}, {s.eps_a, &ProtocolParams::eps_a},
          {s.eps_b, &ProtocolParams::eps_b}, {s.p_a1, &ProtocolParams::p_a1},
          {s.p_b1, &ProtocolParams::p_b1},   {s.p_a2, &ProtocolParams::p_a2},
          {s.p_b2, &ProtocolParams::p_b2}};
}

void check_bound(const ParamBound& b) {
  if (b.lo > b.hi) throw std::invalid_argument("optimize: empty feasible region");
}

ProtocolParams base_params(const SearchSpace& s) {
  ProtocolParams p;
  p.n_total = s.n_total;
  p.f = s.f;
  for (const auto& d : all_dims(s)) p.*(d.field) = 0.5 * (d.bound.lo + d.bound.hi);
  p.lambda = 0.5 * (s.lambda.lo + s.lambda.hi);
  p.mu_b1 = derive_mu_b1(p);
  return p;
}

} // namespace

ProtocolParams SearchSpace::at_midpoint() const { return base_params(*this); }

double objective(const ProtocolParams& params, const ChannelModel& channel) {
  if (!validate(params).ok()) return 0.0;
  try {
    const SourceTally tally = expected_tally(params, channel);
    const SiftedKeys sifted = sifted_from_tally(tally);
    const PairingStats pairing = expected_pairing_stats(tally);
    const DecoyEstimates est = decoy_bounds(tally, params);
    const AoppChain chain = aopp_chain(est, sifted, pairing, params);
    return key_rate(chain, params, channel).rate_per_pulse;
  } catch (const std::exception&) {
    return 0.0;
  }
}

namespace {

class BoxObjective {
 public:
  BoxObjective(const SearchSpace& space, const ChannelModel& channel,
               double lambda_value)
      : space_(space), channel_(channel), lambda_(lambda_value) {
    for (const auto& d : all_dims(space))
      if (!d.bound.fixed && d.bound.hi > d.bound.lo) free_.push_back(d);
  }

  int dim() const { return int(free_.size()); }

  ProtocolParams decode(const Eigen::VectorXd& x) const {
    ProtocolParams p;
    p.n_total = space_.n_total;
    p.f = space_.f;
    for (const auto& d : all_dims(space_))
      p.*(d.field) = d.bound.fixed ? d.bound.lo : 0.5 * (d.bound.lo + d.bound.hi);
    for (int i = 0; i < dim(); ++i) {
      const auto& b = free_[std::size_t(i)].bound;
      p.*(free_[std::size_t(i)].field) = std::clamp(x[i], b.lo, b.hi);
    }
    p.lambda = lambda_;
    p.mu_b1 = derive_mu_b1(p);
    return p;
  }

  Eigen::VectorXd encode(const ProtocolParams& p) const {
    Eigen::VectorXd x(dim());
    for (int i = 0; i < dim(); ++i) x[i] = p.*(free_[std::size_t(i)].field);
    return x;
  }

  Eigen::VectorXd lo() const {
    Eigen::VectorXd x(dim());
    for (int i = 0; i < dim(); ++i) x[i] = free_[std::size_t(i)].bound.lo;
    return x;
  }

  Eigen::VectorXd hi() const {
    Eigen::VectorXd x(dim());
    for (int i = 0; i < dim(); ++i) x[i] = free_[std::size_t(i)].bound.hi;
    return x;
  }

  // negated rate, so the simplex search minimizes
  double operator()(const Eigen::VectorXd& x) {
    const ProtocolParams p = decode(x);
    const double r = objective(p, channel_);
    ++evaluations_;
    if (r > best_rate_) {
      best_rate_ = r;
      best_params_ = p;
    }
    return -r;
  }

  std::uint64_t evaluations() const { return evaluations_; }
  double best_rate() const { return best_rate_; }
  const ProtocolParams& best_params() const { return best_params_; }

 private:
  SearchSpace space_;
  ChannelModel channel_;
  double lambda_;
  std::vector<Dim> free_;
  std::uint64_t evaluations_ = 0;
  double best_rate_ = -1.0;
  ProtocolParams best_params_;
};

void nelder_mead(BoxObjective& f, const Eigen::VectorXd& start,
                 std::uint64_t budget) {
  const int n = int(start.size());
  if (n == 0 || budget == 0) {
    if (budget > 0) f(start);
    return;
  }
  const Eigen::VectorXd lo = f.lo(), hi = f.hi();
  const Eigen::VectorXd span = hi - lo;

  std::vector<Eigen::VectorXd> v;
  std::vector<double> fv;
  v.push_back(start.cwiseMax(lo).cwiseMin(hi));
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd p = v[0];
    const double step = 0.08 * span[i];
    p[i] = p[i] + step <= hi[i] ? p[i] + step : p[i] - step;
    v.push_back(p);
  }
  std::uint64_t used = 0;
  for (const auto& p : v) {
    if (used >= budget) return;
    fv.push_back(f(p));
    ++used;
  }

  auto order = [&] {
    std::vector<int> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::vector<Eigen::VectorXd> v2;
    std::vector<double> f2;
    for (int i : idx) {
      v2.push_back(v[i]);
      f2.push_back(fv[i]);
    }
    v.swap(v2);
    fv.swap(f2);
  };
  auto clampv = [&](Eigen::VectorXd p) { return p.cwiseMax(lo).cwiseMin(hi); };

  while (used < budget) {
    order();
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += v[std::size_t(i)];
    centroid /= n;

    const Eigen::VectorXd refl = clampv(centroid + (centroid - v.back()));
    const double fr = f(refl);
    ++used;
    if (fr < fv[0]) {
      if (used >= budget) break;
      const Eigen::VectorXd exp_ = clampv(centroid + 2.0 * (centroid - v.back()));
      const double fe = f(exp_);
      ++used;
      v.back() = fe < fr ? exp_ : refl;
      fv.back() = std::min(fe, fr);
      continue;
    }
    if (fr < fv[std::size_t(n) - 1]) {
      v.back() = refl;
      fv.back() = fr;
      continue;
    }
    if (used >= budget) break;
    const Eigen::VectorXd contr = clampv(centroid + 0.5 * (v.back() - centroid));
    const double fc = f(contr);
    ++used;
    if (fc < fv.back()) {
      v.back() = contr;
      fv.back() = fc;
      continue;
    }
    for (std::size_t i = 1; i < v.size() && used < budget; ++i) {
      v[i] = clampv(v[0] + 0.5 * (v[i] - v[0]));
      fv[i] = f(v[i]);
      ++used;
    }
  }
}

} // namespace

OptimizeResult optimize(const SearchSpace& space, const ChannelModel& channel,
                        std::uint64_t budget, std::uint64_t seed) {
  for (const auto& d : all_dims(space)) check_bound(d.bound);
  check_bound(space.lambda);

  std::vector<double> lambdas;
  if (space.lambda.fixed || space.lambda.hi <= space.lambda.lo) {
    lambdas.push_back(space.lambda.lo);
  } else {
    const int g = std::max(2, space.lambda_grid);
    const double llo = std::log(std::max(space.lambda.lo, 1e-6));
    const double lhi = std::log(space.lambda.hi);
    for (int i = 0; i < g; ++i)
      lambdas.push_back(std::exp(llo + (lhi - llo) * i / (g - 1)));
  }

  OptimizeResult result;
  std::uint64_t total_evals = 0;
  std::mt19937_64 rng(seed);
  const int restarts = 3;

  for (double lam : lambdas) {
    BoxObjective f(space, channel, lam);
    if (budget < std::uint64_t(f.dim()) + 1)
      throw std::invalid_argument("optimize: budget below dimension + 1");
    const std::uint64_t per_run =
        std::max<std::uint64_t>(std::uint64_t(f.dim()) + 1,
                                budget / (lambdas.size() * (restarts + 1)));

    ProtocolParams mid = space.at_midpoint();
    mid.lambda = lam;
    nelder_mead(f, f.encode(mid), per_run);
    for (int r = 0; r < restarts; ++r) {
      Eigen::VectorXd x(f.dim());
      const Eigen::VectorXd lo = f.lo(), hi = f.hi();
      for (int i = 0; i < f.dim(); ++i) {
        std::uniform_real_distribution<double> u(lo[i], hi[i]);
        x[i] = u(rng);
      }
      nelder_mead(f, x, per_run);
    }
    total_evals += f.evaluations();
    if (f.best_rate() > result.rate) {
      result.rate = f.best_rate();
      result.params = f.best_params();
    }
    result.evaluations = total_evals;
  }
  if (result.rate <= 0.0) {
    // everything infeasible: still return the best decoded point seen
    result.params = space.at_midpoint();
    result.rate = std::max(0.0, objective(result.params, channel));
    ++result.evaluations;
  }
  return result;
}

std::vector<SweepPoint> sweep_distance(const SearchSpace& space,
                                       const ChannelModel& base,
                                       double from_km, double to_km, int steps,
                                       std::uint64_t budget_per_point,
                                       std::uint64_t seed) {
  if (steps < 1) throw std::invalid_argument("sweep_distance: steps must be >= 1");
  std::vector<SweepPoint> out;
  for (int i = 0; i < steps; ++i) {
    const double dist =
        steps == 1 ? from_km : from_km + (to_km - from_km) * i / (steps - 1);
    ChannelModel ch = base;
    ch.l_ac = dist / 2.0;
    ch.l_bc = dist / 2.0;
    SweepPoint pt;
    pt.distance_km = dist;
    pt.loss_db = ch.total_loss_db();
    pt.best = optimize(space, ch, budget_per_point, seed + std::uint64_t(i));
    pt.plob = plob_bounds(ch);
    out.push_back(pt);
  }
  return out;
}

void write_sweep_csv(const std::vector<SweepPoint>& points, std::ostream& os) {
  os << "distance_km,loss_db,mu_a1,mu_b1,mu_a2,mu_b2,eps_a,eps_b,"
        "p_a1,p_b1,p_a2,p_b2,lambda,rate_per_pulse,plob_absolute,plob_relative\n";
  os.precision(10);
  for (const auto& pt : points) {
    const auto& p = pt.best.params;
    os << pt.distance_km << "," << pt.loss_db << "," << p.mu_a1 << ","
       << p.mu_b1 << "," << p.mu_a2 << "," << p.mu_b2 << "," << p.eps_a << ","
       << p.eps_b << "," << p.p_a1 << "," << p.p_b1 << "," << p.p_a2 << ","
       << p.p_b2 << "," << p.lambda << "," << pt.best.rate << ","
       << pt.plob.absolute << "," << pt.plob.relative << "\n";
  }
}

} // namespace snstf
