#include "snstf/params.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace snstf {

double ChannelModel::eta_arm_a() const {
  return std::pow(10.0, -alpha_ac * l_ac / 10.0) * eta_d;
}

double ChannelModel::eta_arm_b() const {
  return std::pow(10.0, -alpha_bc * l_bc / 10.0) * eta_d;
}

bool CellKey::valid() const {
  auto party_ok = [](Window w, Intensity i) {
    if (w == Window::Signal) return i == Intensity::Vacuum || i == Intensity::SignalLevel;
    return i == Intensity::Vacuum || i == Intensity::DecoyLevel;
  };
  return party_ok(a_window, a_intensity) && party_ok(b_window, b_intensity);
}

namespace {
int party_index(Window w, Intensity i) {
  if (w == Window::Signal) return i == Intensity::Vacuum ? 0 : 3;
  return i == Intensity::Vacuum ? 1 : 2;
}
void from_party_index(int idx, Window& w, Intensity& i) {
  switch (idx) {
    case 0: w = Window::Signal; i = Intensity::Vacuum; break;
    case 1: w = Window::Decoy; i = Intensity::Vacuum; break;
    case 2: w = Window::Decoy; i = Intensity::DecoyLevel; break;
    case 3: w = Window::Signal; i = Intensity::SignalLevel; break;
    default: throw std::invalid_argument("cell index out of range");
  }
}
const char* kAliceLabels[4] = {"Z_AO", "X_AO", "X_A1", "Z_A"};
const char* kBobLabels[4] = {"Z_BO", "X_BO", "X_B1", "Z_B"};
} // namespace

int CellKey::a_index() const { return party_index(a_window, a_intensity); }
int CellKey::b_index() const { return party_index(b_window, b_intensity); }

int CellKey::code() const { return 4 * a_index() + b_index(); }

CellKey CellKey::from_code(int code) {
  if (code < 0 || code >= kNumCells) throw std::invalid_argument("cell code out of range");
  return from_indices(code / 4, code % 4);
}

CellKey CellKey::from_indices(int a_idx, int b_idx) {
  CellKey c;
  from_party_index(a_idx, c.a_window, c.a_intensity);
  from_party_index(b_idx, c.b_window, c.b_intensity);
  return c;
}

std::string CellKey::label() const {
  return std::string(kAliceLabels[a_index()]) + kBobLabels[b_index()];
}

int CellKey::index_from_party_label(const std::string& lbl, bool alice) {
  const char** tab = alice ? kAliceLabels : kBobLabels;
  for (int i = 0; i < 4; ++i)
    if (lbl == tab[i]) return i;
  return -1;
}

double security_constraint_rhs(const ProtocolParams& p) {
  return p.eps_a * (1.0 - p.eps_b) * p.mu_a2 * std::exp(-p.mu_a2) /
         (p.eps_b * (1.0 - p.eps_a) * p.mu_b2 * std::exp(-p.mu_b2));
}

double derive_mu_b1(const ProtocolParams& p) {
  return p.mu_a1 / security_constraint_rhs(p);
}

ValidationReport validate(const ProtocolParams& p) {
  ValidationReport rep;
  auto bad = [&](const std::string& msg) { rep.violations.push_back(msg); };

  for (auto [v, name] : {std::pair{p.mu_a1, "mu_a1"}, {p.mu_b1, "mu_b1"},
                         {p.mu_a2, "mu_a2"}, {p.mu_b2, "mu_b2"}})
    if (!(v >= 0.0)) bad(std::string(name) + ": intensity must be >= 0");
  if (!(p.mu_a1 < p.mu_a2)) bad("decoy intensity must be strictly below signal intensity (Alice)");
  if (!(p.mu_b1 < p.mu_b2)) bad("decoy intensity must be strictly below signal intensity (Bob)");

  for (auto [v, name] : {std::pair{p.eps_a, "eps_a"}, {p.eps_b, "eps_b"},
                         {p.p_a1, "p_a1"}, {p.p_b1, "p_b1"},
                         {p.p_a2, "p_a2"}, {p.p_b2, "p_b2"},
                         {p.lambda, "lambda"}})
    if (!(v >= 0.0 && v <= 1.0)) bad(std::string(name) + ": probability out of range");

  if (!(p.n_total >= 1.0)) bad("n_total must be >= 1");
  if (!(p.f >= 1.0)) bad("f must be >= 1");
  for (auto [v, name] : {std::pair{p.eps_sec, "eps_sec"}, {p.eps_cor, "eps_cor"},
                         {p.eps_pa, "eps_pa"}, {p.eps_hat, "eps_hat"}})
    if (!(v > 0.0 && v < 1.0)) bad(std::string(name) + ": must be in (0,1)");

  if (rep.ok()) {
    const double rhs = security_constraint_rhs(p);
    rep.s1_residual = std::abs(p.mu_a1 / p.mu_b1 / rhs - 1.0);
    // published intensities are rounded, so only near-equality is required
    if (rep.s1_residual > 1e-3)
      bad("intensity security constraint violated (residual " +
          std::to_string(rep.s1_residual) + " > 1e-3)");
  }
  return rep;
}

double party_choice_probability(const ProtocolParams& p, bool alice, int idx) {
  const double p2 = alice ? p.p_a2 : p.p_b2;
  const double p1 = alice ? p.p_a1 : p.p_b1;
  const double eps = alice ? p.eps_a : p.eps_b;
  switch (idx) {
    case 0: return p2 * (1.0 - eps);        // signal window, vacuum
    case 1: return (1.0 - p2) * (1.0 - p1); // decoy window, vacuum
    case 2: return (1.0 - p2) * p1;         // decoy window, decoy pulse
    case 3: return p2 * eps;                // signal window, send
    default: throw std::invalid_argument("party index out of range");
  }
}

double cell_probability(const ProtocolParams& p, const CellKey& cell) {
  if (!cell.valid()) throw std::invalid_argument("invalid cell: intensity inconsistent with window");
  return party_choice_probability(p, true, cell.a_index()) *
         party_choice_probability(p, false, cell.b_index());
}

WindowProbFit derive_window_probs(const std::array<double, kNumCells>& sent,
                                  double n_total) {
  for (double s : sent)
    if (!(s > 0.0)) throw std::runtime_error("unidentifiable parameters: all 16 sent counts must be > 0");
  if (!(n_total > 0.0)) throw std::runtime_error("n_total must be > 0");

  double am[4] = {0, 0, 0, 0}, bm[4] = {0, 0, 0, 0};
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      am[a] += sent[4 * a + b];
      bm[b] += sent[4 * a + b];
    }
  for (int i = 0; i < 4; ++i) { am[i] /= n_total; bm[i] /= n_total; }

  auto split = [](const double m[4], double& p2, double& eps, double& p1) {
    p2 = m[0] + m[3];
    if (!(p2 > 0.0 && p2 < 1.0)) throw std::runtime_error("unidentifiable parameters: degenerate window split");
    eps = m[3] / p2;
    p1 = m[2] / (1.0 - p2);
  };

  // x = (p_a2, eps_a, p_a1, p_b2, eps_b, p_b1)
  Eigen::Matrix<double, 6, 1> x;
  split(am, x(0), x(1), x(2));
  split(bm, x(3), x(4), x(5));

  auto residuals = [&](const Eigen::Matrix<double, 6, 1>& v,
                       Eigen::Matrix<double, kNumCells, 1>& r) {
    ProtocolParams q;
    q.p_a2 = v(0); q.eps_a = v(1); q.p_a1 = v(2);
    q.p_b2 = v(3); q.eps_b = v(4); q.p_b1 = v(5);
    for (int c = 0; c < kNumCells; ++c) {
      const double model = cell_probability(q, CellKey::from_code(c)) * n_total;
      r(c) = model / sent[c] - 1.0;
    }
  };

  // Gauss-Newton on the relative residuals; the marginal solution is already
  // the least-squares optimum for exactly multiplicative counts.
  Eigen::Matrix<double, kNumCells, 1> r;
  residuals(x, r);
  for (int iter = 0; iter < 20; ++iter) {
    Eigen::Matrix<double, kNumCells, 6> J;
    const double h = 1e-7;
    for (int j = 0; j < 6; ++j) {
      auto xp = x;
      xp(j) += h;
      Eigen::Matrix<double, kNumCells, 1> rp;
      residuals(xp, rp);
      J.col(j) = (rp - r) / h;
    }
    Eigen::Matrix<double, 6, 1> step =
        J.colPivHouseholderQr().solve(-r);
    auto xn = (x + step).cwiseMax(1e-9).cwiseMin(1.0 - 1e-9).eval();
    Eigen::Matrix<double, kNumCells, 1> rn;
    residuals(xn, rn);
    if (rn.norm() >= r.norm()) break;
    x = xn;
    r = rn;
    if (step.norm() < 1e-12) break;
  }

  WindowProbFit fit;
  fit.p_a2 = x(0); fit.eps_a = x(1); fit.p_a1 = x(2);
  fit.p_b2 = x(3); fit.eps_b = x(4); fit.p_b1 = x(5);
  fit.max_rel_residual = r.cwiseAbs().maxCoeff();
  return fit;
}

namespace {

std::map<std::string, double> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open parameter file: " + path);
  std::map<std::string, double> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string name, eq;
    double value;
    if (!(ls >> name)) continue;
    if (!(ls >> eq >> value) || eq != "=")
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 'name = value'");
    kv[name] = value;
  }
  return kv;
}

double take(std::map<std::string, double>& kv, const std::string& name,
            double fallback, bool required = false) {
  auto it = kv.find(name);
  if (it == kv.end()) {
    if (required) throw std::runtime_error("missing parameter: " + name);
    return fallback;
  }
  double v = it->second;
  kv.erase(it);
  return v;
}

} // namespace

ProtocolParams load_protocol_params(const std::string& path) {
  auto kv = parse_kv_file(path);
  ProtocolParams p;
  p.mu_a1 = take(kv, "mu_a1", 0, true);
  p.mu_b1 = take(kv, "mu_b1", 0, true);
  p.mu_a2 = take(kv, "mu_a2", 0, true);
  p.mu_b2 = take(kv, "mu_b2", 0, true);
  p.eps_a = take(kv, "eps_a", 0, true);
  p.eps_b = take(kv, "eps_b", 0, true);
  p.p_a1 = take(kv, "p_a1", 0, true);
  p.p_b1 = take(kv, "p_b1", 0, true);
  p.p_a2 = take(kv, "p_a2", 0, true);
  p.p_b2 = take(kv, "p_b2", 0, true);
  p.lambda = take(kv, "lambda", 0, true);
  p.n_total = take(kv, "n_total", 0, true);
  p.f = take(kv, "f", 1.1);
  p.eps_sec = take(kv, "eps_sec", 1e-10);
  p.eps_cor = take(kv, "eps_cor", p.eps_sec);
  p.eps_pa = take(kv, "eps_pa", p.eps_sec);
  p.eps_hat = take(kv, "eps_hat", p.eps_sec);
  if (!kv.empty()) throw std::runtime_error("unknown parameter: " + kv.begin()->first);
  return p;
}

ChannelModel load_channel_model(const std::string& path) {
  auto kv = parse_kv_file(path);
  ChannelModel c;
  c.alpha_ac = take(kv, "alpha_ac", 0, true);
  c.alpha_bc = take(kv, "alpha_bc", 0, true);
  c.l_ac = take(kv, "l_ac", 0, true);
  c.l_bc = take(kv, "l_bc", 0, true);
  c.eta_d = take(kv, "eta_d", 1.0);
  c.p_dark = take(kv, "p_dark", 0.0);
  c.e_dx = take(kv, "e_dx", 0.0);
  c.drift_rate = take(kv, "drift_rate", 0.0);
  c.mu_ref = take(kv, "mu_ref", 0.0);
  c.t_est = take(kv, "t_est", 20.0);
  c.clock_hz = take(kv, "clock_hz", 312.5e6);
  c.duty = take(kv, "duty", 0.224);
  if (!kv.empty()) throw std::runtime_error("unknown parameter: " + kv.begin()->first);
  return c;
}

void save_protocol_params(const ProtocolParams& p, std::ostream& os) {
  os.precision(15);
  os << "mu_a1 = " << p.mu_a1 << "\nmu_b1 = " << p.mu_b1
     << "\nmu_a2 = " << p.mu_a2 << "\nmu_b2 = " << p.mu_b2
     << "\neps_a = " << p.eps_a << "\neps_b = " << p.eps_b
     << "\np_a1 = " << p.p_a1 << "\np_b1 = " << p.p_b1
     << "\np_a2 = " << p.p_a2 << "\np_b2 = " << p.p_b2
     << "\nlambda = " << p.lambda << "\nn_total = " << p.n_total
     << "\nf = " << p.f << "\neps_sec = " << p.eps_sec
     << "\neps_cor = " << p.eps_cor << "\neps_pa = " << p.eps_pa
     << "\neps_hat = " << p.eps_hat << "\n";
}

} // namespace snstf
