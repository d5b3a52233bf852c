// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ofet/analyses.hpp"
#include "ofet/extract.hpp"
#include "ofet/io.hpp"

using namespace ofet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects the failed sub-checks of one criterion and a short summary of the measured values.
class Verdict {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }

  bool passed() const { return failures_.empty(); }
  std::string detail() const {
    std::string out = notes_;
    for (const auto& f : failures_) out += (out.empty() ? "failed: " : "; failed: ") + f;
    return out;
  }

 private:
  std::vector<std::string> failures_;
  std::string notes_;
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path kFixtures = OFET_FIXTURE_DIR;
const fs::path kData = OFET_DATA_DIR;

Circuit fixture(const std::string& name) { return parse(slurp(kFixtures / name)); }

// ---------------------------------------------------------------------------
// 1. Linear networks against explicit inversion

struct RandomNetwork {
  std::string text;
  int nodes = 0;
  std::vector<double> expected;  // node voltages 1..nodes-1
};

RandomNetwork random_network(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(2, 10);
  std::uniform_real_distribution<double> logr(1.0, 6.0), val(-10.0, 10.0), unit(0.0, 1.0);
  RandomNetwork net;
  net.nodes = count(rng);
  const int n = net.nodes;

  struct Branch { int a, b; double value; };
  std::vector<Branch> rs, vs, is;
  for (int k = 1; k < n; ++k) {
    std::uniform_int_distribution<int> pick(0, k - 1);
    rs.push_back({k, pick(rng), std::pow(10.0, logr(rng))});
  }
  std::uniform_int_distribution<int> any(0, n - 1);
  const int extra = any(rng);
  for (int k = 0; k < extra; ++k) {
    const int a = any(rng), b = any(rng);
    if (a != b) rs.push_back({a, b, std::pow(10.0, logr(rng))});
  }
  for (int k = 1; k < n; ++k)
    if (unit(rng) < 0.3) vs.push_back({k, 0, val(rng)});
  for (int k = 0; k < 3; ++k) {
    const int a = any(rng), b = any(rng);
    if (a != b) is.push_back({a, b, 1e-3 * val(rng)});
  }

  auto name = [](int k) { return k == 0 ? std::string("0") : "n" + std::to_string(k); };
  std::ostringstream os;
  os << "random linear network\n";
  for (std::size_t k = 0; k < rs.size(); ++k)
    os << "R" << k << " " << name(rs[k].a) << " " << name(rs[k].b) << " " << format_number(rs[k].value) << "\n";
  for (std::size_t k = 0; k < vs.size(); ++k)
    os << "V" << k << " " << name(vs[k].a) << " 0 " << format_number(vs[k].value) << "\n";
  for (std::size_t k = 0; k < is.size(); ++k)
    os << "I" << k << " " << name(is[k].a) << " " << name(is[k].b) << " " << format_number(is[k].value) << "\n";
  os << ".end\n";
  net.text = os.str();

  // Nodal matrix with driven rows replaced by v_k = V_k, solved by explicit inverse.
  // Stamped and inverted in extended precision so the reference error stays far below 1e-12.
  using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  MatrixL G = MatrixL::Zero(n - 1, n - 1);
  VectorL rhs = VectorL::Zero(n - 1);
  for (const auto& r : rs) {
    const long double g = 1.0 / r.value;
    if (r.a) G(r.a - 1, r.a - 1) += g;
    if (r.b) G(r.b - 1, r.b - 1) += g;
    if (r.a && r.b) {
      G(r.a - 1, r.b - 1) -= g;
      G(r.b - 1, r.a - 1) -= g;
    }
  }
  for (const auto& s : is) {
    if (s.a) rhs[s.a - 1] -= s.value;
    if (s.b) rhs[s.b - 1] += s.value;
  }
  for (const auto& v : vs) {
    G.row(v.a - 1).setZero();
    G(v.a - 1, v.a - 1) = 1.0;
    rhs[v.a - 1] = v.value;
  }
  const Eigen::VectorXd x = (G.fullPivLu().inverse() * rhs).cast<double>();
  net.expected.assign(x.data(), x.data() + x.size());
  return net;
}

void linear_networks(Verdict& v) {
  std::mt19937_64 rng(20240605);
  std::vector<RandomNetwork> nets;
  for (int k = 0; k < 100; ++k) nets.push_back(random_network(rng));

  const auto t0 = Clock::now();
  double worst = 0.0;
  for (const auto& net : nets) {
    const Circuit c = parse(net.text);
    const auto op = dc_operating_point(c);
    double err = 0.0, scale = 0.0;
    for (int i = 1; i < net.nodes; ++i) {
      const double ref = net.expected[std::size_t(i - 1)];
      err = std::max(err, std::abs(op.voltage(c, "n" + std::to_string(i)) - ref));
      scale = std::max(scale, std::abs(ref));
    }
    worst = std::max(worst, err / std::max(scale, 1e-300));
  }
  const double t = seconds_since(t0);
  v.note("max rel error " + num(worst, 3));
  v.note("time " + num(t, 3) + " s");
  v.check(worst <= 1e-12, "relative error above 1e-12");
  v.check(t < 1.0, "runtime not below 1 s");
}

// ---------------------------------------------------------------------------
// 2. RC charging

const char* kRc = R"(rc charging
V1 in 0 5
R1 in out 1k
C1 out 0 1u
.ic v(out)=0
.end
)";

double rc_exact() { return 5.0 * (1.0 - std::exp(-1.0)); }

double rc_fixed_step_error(IntegrationMethod m, double h) {
  SolverConfig cfg;
  cfg.transient.adaptive = false;
  cfg.transient.method = m;
  const auto w = transient(parse(kRc), Tran{h, 1e-3}, cfg);
  return std::abs(w.column("v(out)").back() - rc_exact());
}

double loglog_slope(const std::vector<double>& hs, const std::function<double(double)>& err) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (double h : hs) {
    const double x = std::log(h), y = std::log(err(h));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = double(hs.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void rc_transient(Verdict& v) {
  SolverConfig cfg;
  cfg.transient.lte_tol = 1e-4;
  const auto w = transient(parse(kRc), Tran{1e-5, 1e-3}, cfg);
  double worst = 0.0;
  const auto& vout = w.column("v(out)");
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double exact = 5.0 * (1.0 - std::exp(-w.axis[i] / 1e-3));
    worst = std::max(worst, std::abs(vout[i] - exact) / 5.0);
  }
  const double end_err = std::abs(vout.back() - rc_exact()) / rc_exact();
  const double slope = loglog_slope({5e-5, 2.5e-5, 1.25e-5, 6.25e-6}, [](double h) {
    return rc_fixed_step_error(IntegrationMethod::Trapezoidal, h);
  });
  v.note("v(1 ms) rel error " + num(end_err, 3));
  v.note("max error " + num(worst, 3) + " of 5 V");
  v.note("trap slope " + num(slope, 4));
  v.check(end_err <= 1e-3, "v(tau) off by more than 0.1%");
  v.check(worst <= 1e-3, "trajectory off by more than 0.1% of the step");
  v.check(std::abs(slope - 2.0) <= 0.2, "trapezoidal slope outside 2 +- 0.2");
}

// ---------------------------------------------------------------------------
// 3. Model derivatives and continuity

OtftParams card(const std::string& name) {
  return fixture("models.lib").models.at(name);
}

OtftParams gamma_device() {
  OtftParams p;
  p.polarity = Polarity::N;
  p.mu0 = 1e-5;
  p.vth = 0.5;
  p.ss = 0.15;
  p.lambda = 0.02;
  p.gamma = 0.3;
  p.geom = {200e-6, 20e-6, 5e-6};
  return p;
}

void model_derivatives(Verdict& v) {
  const std::vector<OtftParams> devices{card("pch"), card("nch"), gamma_device()};
  const double h = 1e-7;
  double worst_fd = 0.0;
  int points = 0;
  for (const auto& p : devices) {
    for (int i = 0; i < 50; ++i) {
      for (int j = 0; j < 50; ++j) {
        const double vgs = -6.0 + 12.0 * i / 49.0, vds = -6.0 + 12.0 * j / 49.0;
        const auto d = evaluate<double>(p, vgs, vds);
        const double fd_gm = (drain_current(p, vgs + h, vds) - drain_current(p, vgs - h, vds)) / (2 * h);
        const double fd_gds = (drain_current(p, vgs, vds + h) - drain_current(p, vgs, vds - h)) / (2 * h);
        // Relative to the conductance, floored at 1% of |id| where the conductance itself vanishes.
        const double floor = 1e-2 * std::abs(d.id) + 1e-300;
        worst_fd = std::max(worst_fd, std::abs(d.gm - fd_gm) / std::max(std::abs(d.gm), floor));
        worst_fd = std::max(worst_fd, std::abs(d.gds - fd_gds) / std::max(std::abs(d.gds), floor));
        ++points;
      }
    }
  }

  const double eps = 1e-12;
  auto jump = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
  auto worst_of = [&](const DrainCurrent<double>& a, const DrainCurrent<double>& b) {
    return std::max({jump(a.id, b.id), jump(a.gm, b.gm), jump(a.gds, b.gds)});
  };
  double worst_jump = 0.0;
  for (const auto& p : devices) {
    const double dir = p.polarity == Polarity::N ? 1.0 : -1.0;
    for (double vds : {0.1, 1.0, 5.0})
      worst_jump = std::max(worst_jump, worst_of(evaluate<double>(p, p.vth - eps, dir * vds),
                                                 evaluate<double>(p, p.vth + eps, dir * vds)));
    const double s = (2.0 + p.gamma) * p.ss / kLn10;
    for (double over : {0.3, 1.5, 3.5}) {
      const double vgs = p.vth + dir * over;
      const double vov = s * std::log1p(std::exp(over / s));
      worst_jump = std::max(worst_jump, worst_of(evaluate<double>(p, vgs, dir * vov * (1 - eps)),
                                                 evaluate<double>(p, vgs, dir * vov * (1 + eps))));
    }
  }
  v.note(std::to_string(points) + " bias points");
  v.note("max FD rel error " + num(worst_fd, 3));
  v.note("max jump " + num(worst_jump, 3));
  v.check(worst_fd <= 1e-6, "gm/gds differ from finite differences by more than 1e-6");
  v.check(worst_jump < 1e-9, "discontinuity above 1e-9 at Vth or the saturation seam");
}

// ---------------------------------------------------------------------------
// 4. Extraction round-trip

OtftParams extraction_truth() {
  OtftParams p;
  p.polarity = Polarity::P;
  p.mu0 = 2.35e-5;
  p.vth = -0.4;
  p.ss = 0.2;
  p.geom = {380e-6, 35e-6, 5e-6};
  p.cox = 3.5e-4;
  return p;
}

IvSweep with_noise(IvSweep s, double rel, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, rel);
  for (auto& pt : s.points) pt.id *= 1.0 + n(rng);
  return s;
}

void extraction(Verdict& v) {
  const auto t0 = Clock::now();
  double mu_err = 0.0, vth_err = 0.0, ss_err = 0.0;
  for (double vth : {-0.4, 0.3, -1.5}) {
    for (double ss : {0.1, 0.2, 0.35}) {
      OtftParams p = extraction_truth();
      p.vth = vth;
      p.ss = ss;
      const auto sat = extract_saturation_mobility(synthesize_transfer(p, -60.0, 3.0, -15.0, 181));
      mu_err = std::max(mu_err, std::abs(sat.mu_sat / p.mu0 - 1.0));
      vth_err = std::max(vth_err, std::abs(sat.vth - vth));
      const double ss_meas = extract_subthreshold_swing(synthesize_transfer(p, -5.0, vth + 4.0, vth - 5.0, 181));
      ss_err = std::max(ss_err, std::abs(ss_meas / ss - 1.0));
    }
  }

  const OtftParams p = extraction_truth();
  const auto clean = synthesize_transfer(p, -60.0, 3.0, -15.0, 181);
  double mu_noise_err = 0.0;
  for (unsigned seed = 1; seed <= 10; ++seed)
    mu_noise_err = std::max(
        mu_noise_err, std::abs(extract_saturation_mobility(with_noise(clean, 0.01, seed)).mu_sat / p.mu0 - 1.0));

  OtftParams truth = p;
  truth.rc = 4e4;
  truth.lambda = 0.03;
  truth.gamma = 0.25;
  truth.ss = 0.25;
  std::vector<IvSweep> sweeps;
  sweeps.push_back(synthesize_transfer(truth, -5.0, 2.0, -5.0, 71));
  sweeps.push_back(synthesize_transfer(truth, -0.5, 2.0, -5.0, 71));
  for (double vgs : {-2.0, -3.5, -5.0}) sweeps.push_back(synthesize_output(truth, vgs, 0.0, -5.0, 51));
  FitOptions opt;
  OtftParams start = truth;
  start.mu0 *= 1.3;
  start.rc = 1e4;
  start.lambda = 0.01;
  start.gamma = 0.0;
  start.ss *= 0.7;
  opt.initial = start;
  const auto rep = fit_model(sweeps, FixedParams{truth.geom, truth.cox, truth.vth, Polarity::P}, opt);
  const double fit_err = std::max({std::abs(rep.params.mu0 / truth.mu0 - 1), std::abs(rep.params.rc / truth.rc - 1),
                                   std::abs(rep.params.ss / truth.ss - 1),
                                   std::abs(rep.params.lambda / truth.lambda - 1),
                                   std::abs(rep.params.gamma / truth.gamma - 1)});
  const double t = seconds_since(t0);

  v.note("mu " + num(100 * mu_err, 3) + "%");
  v.note("vth " + num(1e3 * vth_err, 3) + " mV");
  v.note("ss " + num(100 * ss_err, 3) + "%");
  v.note("noisy mu " + num(100 * mu_noise_err, 3) + "%");
  v.note("fit " + num(100 * fit_err, 3) + "%");
  v.note("time " + num(t, 3) + " s");
  v.check(mu_err <= 0.01, "noise-free mobility beyond 1%");
  v.check(vth_err <= 0.02, "threshold beyond 20 mV");
  v.check(ss_err <= 0.02, "swing beyond 2%");
  v.check(mu_noise_err <= 0.10, "noisy mobility beyond 10%");
  v.check(fit_err <= 0.05, "fit parameter beyond 5%");
  v.check(t < 10.0, "not below 10 s");
}

// ---------------------------------------------------------------------------
// 5. Calibrated single device

void calibrated_device(Verdict& v) {
  const auto sweeps = read_measurements(kData / "fig2_typical_p.csv");
  const IvSweep& measured = sweeps.front();
  FixedParams fixed{measured.geom, measured.cox, -0.06, Polarity::P};
  const FitReport fit = fit_model(sweeps, fixed);
  const double rel_rms = fit.rms_residual / fit.signal_scale;

  // The shipped card must be this fit, rounded.
  const OtftParams shipped = card("pch");
  const double card_dev = std::max({std::abs(shipped.mu0 / fit.params.mu0 - 1), std::abs(shipped.rc / fit.params.rc - 1),
                                    std::abs(shipped.ss / fit.params.ss - 1),
                                    std::abs(shipped.lambda - fit.params.lambda) / 0.01,
                                    std::abs(shipped.gamma - fit.params.gamma)});

  const IvSweep simulated = synthesize_transfer(fit.params, measured.fixed_bias, measured.points.front().v,
                                                measured.points.back().v, measured.points.size());
  const double mu_sim = extract_saturation_mobility(simulated).mu_sat * 1e4;
  const double mu_meas = extract_saturation_mobility(measured).mu_sat * 1e4;
  const double onoff_sim = on_off_ratio(simulated), onoff_meas = on_off_ratio(measured);
  const double ion = std::abs(terminal_current(fit.params, -5.0, -5.0));

  v.note("asinh rms " + num(100 * rel_rms, 3) + "%");
  v.note("mu " + num(mu_sim, 4) + " (data " + num(mu_meas, 4) + ") cm2/Vs");
  v.note("on/off " + num(onoff_sim, 3) + " (data " + num(onoff_meas, 3) + ")");
  v.note("Ion " + num(ion * 1e6, 4) + " uA");
  v.check(rel_rms < 0.05, "asinh residual RMS not below 5%");
  v.check(card_dev < 1e-3, "models.lib pch card differs from the fit");
  v.check(onoff_sim > 1e5 && onoff_meas > 1e5, "on/off not above 1e5");
  v.check(std::abs(mu_sim - 0.235) <= 0.020 && std::abs(mu_meas - 0.235) <= 0.020, "mobility outside 0.235 +- 0.020");
  v.check(ion >= 1e-6 && ion <= 1e-5, "on-current not of order 1-10 uA");
}

// ---------------------------------------------------------------------------
// 6. TLM

void tlm(Verdict& v) {
  const OtftParams p = card("pch");
  const double v_ov = 5.0;
  const auto d = synthesize_tlm(p, {2e-6, 5e-6, 15e-6, 35e-6}, v_ov, 0.5);
  const auto r = tlm_contact_resistance(d);
  const double rcw = p.rc * p.geom.W;
  const double err = std::abs(r.rc_w / rcw - 1.0);

  bool grows = true;
  double prev = 0.0;
  std::string shares;
  for (auto it = d.rows.rbegin(); it != d.rows.rend(); ++it) {
    const double share = rcw / it->r_total_w;
    grows = grows && share > prev;
    prev = share;
    shares += (shares.empty() ? "" : "/") + num(share, 2);
  }
  auto share_at = [&](double len) {
    for (const auto& row : d.rows)
      if (std::abs(row.length - len) < 1e-9) return rcw / row.r_total_w;
    return 0.0;
  };

  v.note("intercept error " + num(100 * err, 3) + "%");
  v.note("contact share at 35/15/5/2 um " + shares);
  v.check(err <= 0.05, "intercept beyond 5%");
  v.check(grows, "contact share does not grow as L shrinks");
  v.check(share_at(5e-6) > 0.5 && share_at(2e-6) > 0.5, "contacts not dominant below 15 um");
  v.check(share_at(35e-6) < 0.5, "contacts already dominant at 35 um");
}

// ---------------------------------------------------------------------------
// 7. Inverter gains

int crossings(const Waveform& w) {
  const auto& vout = w.column("v(out)");
  int n = 0;
  for (std::size_t i = 1; i < vout.size(); ++i)
    if ((vout[i - 1] > w.axis[i - 1]) != (vout[i] > w.axis[i])) ++n;
  return n;
}

// Same sweep with the input source reversed: sweeping x upwards drives vin = -x downwards.
double hysteresis(const Circuit& c, const SweepSpec& forward) {
  const Waveform up = dc_sweep(c, DcSweep{forward, {}});
  Circuit rev = c;
  auto& src = std::get<VoltageSource>(rev.find(forward.source)->body);
  std::swap(src.pos, src.neg);
  const Waveform down = dc_sweep(rev, DcSweep{{forward.source, -forward.stop, -forward.start, forward.step}, {}});
  const auto& a = up.column("v(out)");
  const auto& b = down.column("v(out)");
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[b.size() - 1 - i]));
  return worst;
}

void inverter_gains(Verdict& v) {
  const Circuit pseudo = fixture("pseudo_e_inverter.cir");
  const auto& pseudo_sweep = std::get<DcSweep>(pseudo.analyses.at(0)).primary;
  const Waveform pw = dc_sweep(pseudo, DcSweep{pseudo_sweep, {}});
  const auto pm = vtc_metrics(pw, pseudo_sweep.stop);

  const Circuit comp = fixture("complementary_inverter.cir");
  const auto& comp_sweep = std::get<DcSweep>(comp.analyses.at(0)).primary;
  const Waveform cw = dc_sweep(comp, DcSweep{comp_sweep, {}});
  const auto cm = vtc_metrics(cw, 3.0);

  const double hyst = std::max(hysteresis(pseudo, pseudo_sweep), hysteresis(comp, comp_sweep));
  v.note("pseudo-E gain " + num(pm.peak_gain, 4));
  v.note("complementary gain at 3 V " + num(cm.peak_gain, 4));
  v.note("crossings " + std::to_string(crossings(pw)) + "/" + std::to_string(crossings(cw)));
  v.note("hysteresis " + num(hyst, 3) + " V");
  v.check(pm.peak_gain >= 20.0, "pseudo-E gain below 20");
  v.check(cm.peak_gain >= 10.0, "complementary gain below 10");
  v.check(crossings(pw) == 1 && crossings(cw) == 1, "VTC does not cross vout = vin exactly once");
  // The model is memoryless; what remains is the Newton stopping point reached from
  // opposite warm starts, so the bound is set far below vntol rather than at 0.
  v.check(hyst <= 1e-9, "reverse sweep differs from forward sweep beyond solver resolution");
}

// ---------------------------------------------------------------------------
// 8. VCO trend

void vco_trend(Verdict& v) {
  const std::vector<double> vdd{3, 5, 10, 15, 20, 25, 30};
  OscillatorOptions opt;
  opt.tracking = {{"vss", -2.0}};
  const auto curve = vco_curve(fixture("pseudo_e_ro_r20.cir"), vdd, opt);
  bool increasing = true;
  std::string freqs;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    freqs += (freqs.empty() ? "" : "/") + num(*curve[i].result.frequency, 4);
    if (i > 0) increasing = increasing && *curve[i].result.frequency > *curve[i - 1].result.frequency;
  }
  const double ratio = *curve.back().result.frequency / *curve.front().result.frequency;

  Circuit comp = fixture("complementary_ro.cir");
  set_source_dc(comp, "vdd", 60.0);
  OscillatorOptions copt;
  const auto f60 = measure_oscillator(comp, copt).frequency;

  v.note("pseudo-E f " + freqs + " Hz");
  v.note("f(30)/f(3) " + num(ratio, 4));
  v.note("complementary f(60 V) " + (f60 ? num(*f60, 4) + " Hz" : std::string("none")));
  v.check(increasing, "pseudo-E frequency not strictly increasing");
  v.check(ratio >= 3.6 / 2 && ratio <= 3.6 * 2, "f(30)/f(3) outside a factor of 2 of 3.6");
  v.check(f60 && *f60 >= 1e3 && *f60 <= 1e4, "complementary RO at 60 V outside 1-10 kHz");
}

// ---------------------------------------------------------------------------
// 9. Neuron

void neuron(Verdict& v) {
  const Circuit c = fixture("neuron.cir");
  NeuronOptions opt;
  double slowest = 0.0;
  auto timed = [&](double amps) {
    const auto t0 = Clock::now();
    auto r = neuron_response(c, amps, opt);
    slowest = std::max(slowest, seconds_since(t0));
    return r;
  };
  const auto idle = timed(0.0);
  std::vector<double> rates;
  std::string text;
  for (double na : {9.0, 20.0, 50.0, 100.0, 500.0}) {
    rates.push_back(timed(na * 1e-9).train.rate);
    text += (text.empty() ? "" : "/") + num(rates.back(), 4);
  }
  bool increasing = true;
  for (std::size_t i = 1; i < rates.size(); ++i) increasing = increasing && rates[i] > rates[i - 1];

  v.note("rates at 9/20/50/100/500 nA " + text + " Hz");
  v.note("spikes at 0 nA " + std::to_string(idle.train.times.size()));
  v.note("slowest run " + num(slowest, 3) + " s");
  v.check(increasing, "rate not strictly increasing");
  v.check(rates.front() >= 1.0 && rates.back() <= 100.0, "endpoint rates outside 1-100 Hz");
  v.check(idle.train.times.empty(), "spikes without input");
  v.check(slowest < 30.0, "a transient took 30 s or more");
}

// ---------------------------------------------------------------------------
// 10. Logic

void logic(Verdict& v) {
  LogicSpec spec;
  spec.inputs = {"va", "vb"};
  spec.vdd = 5.0;
  const std::vector<std::pair<std::string, std::function<bool(bool, bool)>>> gates{
      {"nand", [](bool a, bool b) { return !(a && b); }},
      {"nor", [](bool a, bool b) { return !(a || b); }}};
  for (const auto& [name, truth] : gates) {
    const auto rows = logic_truth_table(fixture(name + ".cir"), spec);
    v.check(rows.size() == 4, name + " table does not have 4 rows");
    std::string outs;
    for (const auto& r : rows) {
      const bool expected = truth(r.inputs.at(0), r.inputs.at(1));
      const bool high = r.vout >= spec.high_fraction * spec.vdd;
      const bool low = r.vout <= spec.low_fraction * spec.vdd;
      v.check(high || low, name + " output in the forbidden band");
      v.check(expected ? high : low, name + " wrong output");
      outs += (outs.empty() ? "" : "/") + num(r.vout, 3);
    }
    v.note(name + " " + outs + " V");
  }
}

// ---------------------------------------------------------------------------
// 11. Strain

double vm_at(const Circuit& c, double vdd) {
  return vtc_metrics(dc_sweep(c, DcSweep{{"vin", 0.0, vdd, vdd / 1000.0}, {}}), vdd).switching_threshold;
}

void strain(Verdict& v) {
  const auto par = StrainOrientation::ParallelToChannelLength;
  const auto perp = StrainOrientation::PerpendicularToChannelLength;
  const OtftParams p = card("pch");
  const Circuit inv = fixture("complementary_inverter.cir");

  bool identical = apply_strain(p, {0.0, par}) == p && apply_strain(p, {0.0, perp}) == p;
  for (auto orient : {par, perp}) {
    const Circuit strained = with_strain(inv, {0.0, orient}, true);
    for (std::size_t i = 0; i < inv.elements.size(); ++i) {
      if (const auto* m = std::get_if<OtftInstance>(&inv.elements[i].body))
        identical = identical && strained.resolve(std::get<OtftInstance>(strained.elements[i].body)) == inv.resolve(*m);
      else
        identical = identical && strained.elements[i] == inv.elements[i];
    }
  }
  const auto base = vtc_metrics(dc_sweep(inv, std::get<DcSweep>(inv.analyses.at(0))), 3.0);
  const auto zero = vtc_metrics(dc_sweep(with_strain(inv, {0.0, par}), std::get<DcSweep>(inv.analyses.at(0))), 3.0);
  identical = identical && base.peak_gain == zero.peak_gain && base.switching_threshold == zero.switching_threshold &&
              base.noise_margin_high == zero.noise_margin_high && base.noise_margin_low == zero.noise_margin_low &&
              base.swing == zero.swing;

  const double mu_mult = apply_strain(p, {0.5, par}).mu0 / p.mu0;
  const double l_scale = apply_strain(p, {1.0, par}).geom.L / p.geom.L;

  const double vdd = 3.0;
  const double vm0 = vm_at(inv, vdd);
  double drift = 0.0;
  for (auto orient : {par, perp}) {
    const auto s = strain_study(inv, {0.1, 0.2, 0.3, 0.4, 0.5}, orient, [&](const Circuit& x) { return vm_at(x, vdd); });
    for (const auto& [eps, vm] : s) drift = std::max(drift, std::abs(vm - vm0));
  }

  v.note(std::string("zero strain ") + (identical ? "bit-exact" : "differs"));
  v.note("mu multiplier " + num(mu_mult, 15));
  v.note("L scale " + num(l_scale, 15));
  v.note("max VM drift " + num(100 * drift / vdd, 3) + "% of VDD");
  v.check(identical, "zero strain changes a result");
  v.check(std::abs(mu_mult - 0.67) <= 1e-12, "mobility multiplier at 0.5 is not 0.67");
  v.check(std::abs(l_scale - 1.42) <= 1e-12, "length scale at 1.0 is not 1.42");
  v.check(drift <= 0.1 * vdd, "VM drifts more than 10% of VDD");
}

// ---------------------------------------------------------------------------
// 12. Monte Carlo

void monte_carlo_yield(Verdict& v) {
  const Circuit c = fixture("complementary_inverter.cir");
  auto gain = [](const Circuit& x) {
    return vtc_metrics(dc_sweep(x, DcSweep{{"vin", 0.0, 3.0, 0.02}, {}}), 3.0).peak_gain;
  };
  McSpec spec;
  spec.count = 100;
  spec.seed = 20240605;
  spec.distributions = {{"vth_p", McDistribution::Kind::Normal, -0.06, 0.1}};
  spec.predicate = [](double g) { return g >= 5.0; };

  McSpec one = spec;
  one.threads = 1;
  const auto a = monte_carlo(c, spec, gain);
  const auto b = monte_carlo(c, one, gain);
  const bool reproducible = a.metric == b.metric && a.samples == b.samples && a.yield == b.yield;

  // Replay oracle: redraw, apply and evaluate every replica serially.
  int passed = 0;
  bool replay_matches = true;
  for (int i = 0; i < spec.count; ++i) {
    const auto drawn = draw_samples(c, spec, i);
    replay_matches = replay_matches && drawn == a.samples[std::size_t(i)];
    const double g = gain(apply_samples(c, drawn));
    replay_matches = replay_matches && g == a.metric[std::size_t(i)];
    passed += spec.predicate(g) ? 1 : 0;
  }
  const double replay_yield = double(passed) / spec.count;

  McSpec degenerate = spec;
  degenerate.count = 8;
  for (auto& d : degenerate.distributions) d.sigma = 0.0;
  degenerate.distributions.push_back({"mu", McDistribution::Kind::LogNormal, 0.0, 0.0});
  const auto z = monte_carlo(c, degenerate, gain);
  // vth_p with zero spread lands exactly on the card value -0.06.
  const double nominal = gain(c);
  bool exact = true;
  for (double m : z.metric) exact = exact && m == nominal;

  v.note("yield " + num(a.yield, 4) + " (replay " + num(replay_yield, 4) + ")");
  v.note("gain range " + num(*std::min_element(a.metric.begin(), a.metric.end()), 4) + "-" +
         num(*std::max_element(a.metric.begin(), a.metric.end()), 4));
  v.note(std::string("seed ") + (reproducible ? "reproducible" : "not reproducible"));
  v.note(std::string("sigma 0 ") + (exact ? "exact" : "inexact"));
  v.check(reproducible, "repeated run differs");
  v.check(replay_matches && a.yield == replay_yield, "yield differs from the replay oracle");
  v.check(exact, "sigma = 0 replicas differ from the nominal circuit");
}

// ---------------------------------------------------------------------------
// 13. Parser

void parser(Verdict& v) {
  int corpus = 0, fixed_points = 0;
  for (const auto& entry : fs::directory_iterator(kFixtures)) {
    if (!entry.is_regular_file()) continue;
    ++corpus;
    try {
      const Circuit c = parse(slurp(entry.path()));
      const std::string once = serialize(c);
      const Circuit again = parse(once);
      if (again == c && serialize(again) == once) ++fixed_points;
      else v.check(false, entry.path().filename().string() + " does not round-trip");
    } catch (const std::exception& e) {
      v.check(false, entry.path().filename().string() + ": " + e.what());
    }
  }
  const std::size_t flattened = fixture("complementary_ro.cir").otft_count();

  int malformed = 0, diagnosed = 0;
  for (const auto& entry : fs::directory_iterator(kFixtures / "malformed")) {
    ++malformed;
    try {
      parse(slurp(entry.path()));
      v.check(false, entry.path().filename().string() + " parsed without error");
    } catch (const NetlistError& e) {
      const auto& d = e.diagnostics();
      const bool numbered = !d.empty() && d.front().line > 0 && d.front().str().rfind("line ", 0) == 0;
      if (numbered) ++diagnosed;
      else v.check(false, entry.path().filename().string() + " lacks a line number");
    } catch (const std::exception& e) {
      v.check(false, entry.path().filename().string() + " raised " + e.what());
    }
  }

  v.note(std::to_string(fixed_points) + "/" + std::to_string(corpus) + " fixtures round-trip");
  v.note("RO flattens to " + std::to_string(flattened));
  v.note(std::to_string(diagnosed) + "/" + std::to_string(malformed) + " malformed diagnosed");
  v.check(corpus > 0 && malformed > 0, "empty corpus");
  v.check(flattened == 12, "RO does not flatten to 12 transistors");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, void (*)(Verdict&)>> criteria{
      {"linear-network oracle", linear_networks},
      {"RC transient oracle", rc_transient},
      {"model derivatives and continuity", model_derivatives},
      {"extraction round-trip", extraction},
      {"calibrated single device", calibrated_device},
      {"TLM contact resistance", tlm},
      {"inverter gains", inverter_gains},
      {"VCO trend", vco_trend},
      {"neuron f-I", neuron},
      {"logic truth tables", logic},
      {"strain", strain},
      {"Monte Carlo yield", monte_carlo_yield},
      {"netlist parser", parser},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    const double t = seconds_since(t0);
    failed += v.passed() ? 0 : 1;
    std::printf("%s %2zu %s [%.1f s]: %s\n", v.passed() ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), t,
                v.detail().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
