#include "ofet/extract.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

namespace ofet {

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Ordinary least squares of y on x over [first, first + count).
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y, std::size_t first,
                 std::size_t count) {
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = first; i < first + count; ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= double(count);
  ym /= double(count);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = first; i < first + count; ++i) {
    const double dx = x[i] - xm, dy = y[i] - ym;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  LineFit f;
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = ym - f.slope * xm;
  f.r2 = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

void require_transfer(const IvSweep& s, const char* op) {
  if (s.kind != SweepKind::Transfer)
    throw ExtractionError(std::string(op) + ": requires a transfer sweep");
}

// +1 when |ID| grows along increasing voltage, -1 otherwise.
double on_direction(const std::vector<IvPoint>& pts) {
  const auto& a = pts.front();
  const auto& b = pts.back();
  const double grow = std::abs(b.id) - std::abs(a.id);
  const double dv = b.v - a.v;
  return (grow * dv >= 0.0) ? 1.0 : -1.0;
}

}  // namespace

void IvSweep::validate() const {
  if (points.size() < 8)
    throw ExtractionError("sweep '" + device_id + "' has fewer than 8 points");
  const double dir = points[1].v - points[0].v;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double step = points[i].v - points[i - 1].v;
    if (!(step * dir > 0.0))
      throw ExtractionError("sweep '" + device_id + "' voltages are not strictly monotone");
  }
  if (!(geom.W > 0.0) || !(geom.L > 0.0) || !(cox > 0.0))
    throw ExtractionError("sweep '" + device_id + "' needs positive W, L and Cox");
}

std::vector<IvPoint> forward_branch(const std::vector<IvPoint>& points) {
  if (points.size() < 2) return points;
  std::size_t end = 2;
  const double dir = points[1].v - points[0].v;
  while (end < points.size() && (points[end].v - points[end - 1].v) * dir > 0.0) ++end;
  return {points.begin(), points.begin() + std::ptrdiff_t(end)};
}

SaturationFit extract_saturation_mobility(const IvSweep& s) {
  require_transfer(s, "extract_saturation_mobility");
  const auto& pts = s.points;
  const std::size_t n = pts.size();
  const std::size_t window = std::max<std::size_t>(3, std::size_t(std::lround(0.4 * double(n))));
  if (n < window) throw ExtractionError("extract_saturation_mobility: too few points in window");

  std::vector<double> x(n), y(n);
  bool any_current = false;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = pts[i].v;
    y[i] = std::sqrt(std::abs(pts[i].id));
    any_current = any_current || y[i] > 0.0;
  }
  if (!any_current) throw ExtractionError("extract_saturation_mobility: all currents are zero");

  const double expected_sign = on_direction(pts);
  std::optional<LineFit> best;
  std::size_t best_start = 0;
  for (std::size_t start = 0; start + window <= n; ++start) {
    const LineFit f = fit_line(x, y, start, window);
    if (!(f.slope * expected_sign > 0.0)) continue;
    if (!best || f.r2 > best->r2) {
      best = f;
      best_start = start;
    }
  }
  if (!best) throw ExtractionError("extract_saturation_mobility: sqrt|ID| is not monotone in any window");

  SaturationFit out;
  out.mu_sat = 2.0 * s.geom.L / (s.geom.W * s.cox) * best->slope * best->slope;
  out.vth = -best->intercept / best->slope;
  out.window = {x[best_start], x[best_start + window - 1]};
  out.r2 = best->r2;
  out.points = window;
  return out;
}

double extract_subthreshold_swing(const IvSweep& s) {
  require_transfer(s, "extract_subthreshold_swing");
  const auto& pts = s.points;
  double imax = 0.0, imin = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    const double a = std::abs(p.id);
    if (a > 0.0) {
      imax = std::max(imax, a);
      imin = std::min(imin, a);
    }
  }
  if (!(imax > 0.0) || std::log10(imax / imin) < 3.0)
    throw ExtractionError("extract_subthreshold_swing: less than 3 decades of current");

  constexpr std::size_t kWindow = 5;
  const std::size_t n = pts.size();
  std::vector<double> x(n), y(n);
  std::vector<bool> usable(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = pts[i].v;
    usable[i] = std::abs(pts[i].id) > 0.0;
    y[i] = usable[i] ? std::log10(std::abs(pts[i].id)) : 0.0;
  }

  const double expected_sign = on_direction(pts);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start + kWindow <= n; ++start) {
    bool ok = true;
    for (std::size_t i = start; i < start + kWindow; ++i) ok = ok && usable[i];
    if (!ok) continue;
    const LineFit f = fit_line(x, y, start, kWindow);
    if (!(f.slope * expected_sign > 0.0)) continue;
    best = std::min(best, 1.0 / std::abs(f.slope));
  }
  if (!std::isfinite(best))
    throw ExtractionError("extract_subthreshold_swing: no increasing subthreshold window");
  return best;
}

double on_off_ratio(const IvSweep& s, double floor) {
  require_transfer(s, "on_off_ratio");
  if (s.points.empty()) throw ExtractionError("on_off_ratio: empty sweep");
  double imax = 0.0, imin = std::numeric_limits<double>::infinity();
  for (const auto& p : s.points) {
    imax = std::max(imax, std::abs(p.id));
    imin = std::min(imin, std::abs(p.id));
  }
  if (imax == 0.0) return 1.0;
  return imax / std::max(imin, floor);
}

double max_transconductance_per_width(const IvSweep& s) {
  require_transfer(s, "max_transconductance_per_width");
  const auto& p = s.points;
  double gm = 0.0;
  for (std::size_t i = 1; i + 1 < p.size(); ++i)
    gm = std::max(gm, std::abs((p[i + 1].id - p[i - 1].id) / (p[i + 1].v - p[i - 1].v)));
  return gm / s.geom.W;
}

ExtractionReport extract_report(const IvSweep& transfer) {
  IvSweep branch = transfer;
  branch.points = forward_branch(transfer.points);
  branch.validate();

  ExtractionReport r;
  r.device_id = transfer.device_id;
  const auto sat = extract_saturation_mobility(branch);
  r.mu_sat = sat.mu_sat;
  r.vth = sat.vth;
  r.fit_window = sat.window;
  r.diagnostics.window_r2 = sat.r2;
  r.diagnostics.window_points = sat.points;
  r.ss = extract_subthreshold_swing(branch);
  r.on_off = on_off_ratio(branch);
  r.gm_max_per_width = max_transconductance_per_width(branch);
  return r;
}

// ---------------------------------------------------------------------------

TlmResult tlm_contact_resistance(const TlmDataset& d) {
  std::vector<double> lengths;
  for (const auto& row : d.rows) {
    if (!(row.r_total_w > 0.0)) throw ExtractionError("tlm: resistances must be > 0");
    if (!(row.length > 0.0)) throw ExtractionError("tlm: lengths must be > 0");
    lengths.push_back(row.length);
  }
  std::sort(lengths.begin(), lengths.end());
  lengths.erase(std::unique(lengths.begin(), lengths.end()), lengths.end());
  if (lengths.size() < 3) throw ExtractionError("tlm: need at least 3 distinct channel lengths");

  std::vector<double> x, y;
  for (const auto& row : d.rows) {
    x.push_back(row.length);
    y.push_back(row.r_total_w);
  }
  const LineFit f = fit_line(x, y, 0, x.size());
  TlmResult out;
  out.rc_w = f.intercept;
  out.r_sheet = f.slope;
  out.r2 = f.r2;
  out.negative_intercept = f.intercept < 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt fit

namespace {

struct DataPoint {
  double vgs, vds, target;  // target = asinh(ID / Is)
};

enum Slot { kLogMu = 0, kLogSs, kRc, kLambda, kGamma, kVth };

struct Problem {
  std::vector<DataPoint> data;
  OtftParams base;
  bool fit_vth = false;
  double rc_scale = 1.0;
  double is = 1e-9;

  int dims() const { return fit_vth ? 6 : 5; }

  OtftParams unpack(const Eigen::VectorXd& x) const {
    OtftParams p = base;
    p.mu0 = std::exp(x[kLogMu]);
    p.ss = std::exp(x[kLogSs]);
    p.rc = x[kRc] * rc_scale;
    p.lambda = x[kLambda];
    p.gamma = x[kGamma];
    if (fit_vth) p.vth = x[kVth];
    return p;
  }

  Eigen::VectorXd pack(const OtftParams& p) const {
    Eigen::VectorXd x(dims());
    x[kLogMu] = std::log(p.mu0);
    x[kLogSs] = std::log(p.ss);
    x[kRc] = p.rc / rc_scale;
    x[kLambda] = p.lambda;
    x[kGamma] = p.gamma;
    if (fit_vth) x[kVth] = p.vth;
    return x;
  }

  static bool bounded(int j) { return j == kRc || j == kLambda || j == kGamma; }

  void project(Eigen::VectorXd& x) const {
    for (int j = 0; j < dims(); ++j)
      if (bounded(j)) x[j] = std::max(0.0, x[j]);
  }

  // False when the model cannot be evaluated at x.
  bool residuals(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    const OtftParams p = unpack(x);
    r.resize(Eigen::Index(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double id = terminal_current(p, data[i].vgs, data[i].vds);
      r[Eigen::Index(i)] = std::asinh(id / is) - data[i].target;
      if (!std::isfinite(r[Eigen::Index(i)])) return false;
    }
    return true;
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd J(Eigen::Index(data.size()), dims());
    Eigen::VectorXd rp, rm;
    for (int j = 0; j < dims(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += h;
      const bool central = !bounded(j) || x[j] - h >= 0.0;
      if (central) xm[j] -= h;
      residuals(xp, rp);
      residuals(xm, rm);
      J.col(j) = (rp - rm) / (central ? 2.0 * h : h);
    }
    return J;
  }
};

std::vector<DataPoint> collect(const std::vector<IvSweep>& sweeps, double is) {
  std::vector<DataPoint> data;
  for (const auto& s : sweeps) {
    for (const auto& pt : forward_branch(s.points)) {
      const double vgs = s.kind == SweepKind::Transfer ? pt.v : s.fixed_bias;
      const double vds = s.kind == SweepKind::Transfer ? s.fixed_bias : pt.v;
      data.push_back({vgs, vds, std::asinh(pt.id / is)});
    }
  }
  return data;
}

void check_fit_inputs(const std::vector<IvSweep>& sweeps) {
  bool transfer = false, output = false;
  for (const auto& s : sweeps) {
    IvSweep branch = s;
    branch.points = forward_branch(s.points);
    branch.validate();
    transfer = transfer || s.kind == SweepKind::Transfer;
    output = output || s.kind == SweepKind::Output;
  }
  if (!transfer || !output)
    throw ExtractionError("fit_model: needs at least one transfer and one output sweep");
}

}  // namespace

OtftParams initial_guess(const std::vector<IvSweep>& sweeps, const FixedParams& fixed) {
  const IvSweep* transfer = nullptr;
  for (const auto& s : sweeps)
    if (s.kind == SweepKind::Transfer &&
        (!transfer || std::abs(s.fixed_bias) > std::abs(transfer->fixed_bias)))
      transfer = &s;
  if (!transfer) throw ExtractionError("initial_guess: no transfer sweep");

  IvSweep branch = *transfer;
  branch.points = forward_branch(transfer->points);
  const auto sat = extract_saturation_mobility(branch);

  OtftParams p;
  p.polarity = fixed.polarity;
  p.geom = fixed.geom;
  p.cox = fixed.cox;
  p.mu0 = sat.mu_sat;
  p.vth = fixed.vth.value_or(sat.vth);
  try {
    p.ss = extract_subthreshold_swing(branch);
  } catch (const ExtractionError&) {
    p.ss = 0.2;
  }
  p.rc = 0.0;
  p.lambda = 0.01;
  p.gamma = 0.0;
  return p;
}

FitReport fit_model(const std::vector<IvSweep>& sweeps, const FixedParams& fixed,
                    const FitOptions& options) {
  check_fit_inputs(sweeps);

  Problem prob;
  prob.is = options.current_scale;
  prob.data = collect(sweeps, prob.is);
  prob.fit_vth = !fixed.vth.has_value();
  prob.base = options.initial.value_or(initial_guess(sweeps, fixed));
  prob.base.polarity = fixed.polarity;
  prob.base.geom = fixed.geom;
  prob.base.cox = fixed.cox;
  if (fixed.vth) prob.base.vth = *fixed.vth;
  prob.base.validate();
  // Channel resistance at 1 V overdrive sets the contact-resistance unit.
  prob.rc_scale = fixed.geom.L / (fixed.geom.W * prob.base.mu0 * fixed.cox);

  double signal = 0.0;
  for (const auto& d : prob.data) signal = std::max(signal, std::abs(d.target));

  Eigen::VectorXd x = prob.pack(prob.base);
  Eigen::VectorXd r;
  if (!prob.residuals(x, r)) throw ExtractionError("fit_model: model not evaluable at initial guess");
  double cost = 0.5 * r.squaredNorm();

  auto report_at = [&](const Eigen::VectorXd& xv, double c, int iters, std::vector<double> hist) {
    FitReport rep;
    rep.params = prob.unpack(xv);
    rep.cost = c;
    rep.rms_residual = std::sqrt(2.0 * c / double(prob.data.size()));
    rep.signal_scale = signal;
    rep.iterations = iters;
    rep.cost_history = std::move(hist);
    return rep;
  };

  std::vector<double> history{cost};
  double damping = 1e-3;
  Eigen::MatrixXd J = prob.jacobian(x);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, cost))
      return report_at(x, cost, iter - 1, history);

    Eigen::MatrixXd M = A;
    for (int j = 0; j < A.rows(); ++j) M(j, j) += damping * std::max(A(j, j), 1e-12);
    Eigen::VectorXd step = M.ldlt().solve(-g);
    Eigen::VectorXd trial = x + step;
    prob.project(trial);

    Eigen::VectorXd rt;
    const bool ok = step.allFinite() && prob.residuals(trial, rt);
    const double trial_cost = ok ? 0.5 * rt.squaredNorm() : std::numeric_limits<double>::infinity();

    if (trial_cost < cost) {
      const double decrease = cost - trial_cost;
      const double moved = (trial - x).lpNorm<Eigen::Infinity>();
      x = trial;
      r = rt;
      cost = trial_cost;
      history.push_back(cost);
      damping = std::max(damping / 10.0, 1e-12);
      if (decrease <= 1e-12 * cost || moved <= 1e-10 || cost <= 1e-28)
        return report_at(x, cost, iter, history);
      J = prob.jacobian(x);
    } else {
      damping *= 10.0;
      if (damping > 1e16) return report_at(x, cost, iter, history);
    }
  }
  throw FitError("fit_model: no convergence within iteration limit",
                 report_at(x, cost, options.max_iterations, history));
}

// ---------------------------------------------------------------------------

const MetricSummary& BatchSummary::metric(const std::string& name) const {
  for (const auto& m : metrics)
    if (m.name == name) return m;
  throw Error("batch summary has no metric '" + name + "'");
}

namespace {

MetricSummary summarize(std::string name, std::vector<double> values, std::size_t bins, bool log_bins) {
  MetricSummary m;
  m.name = std::move(name);
  const double n = double(values.size());
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.stddev = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;

  std::vector<double> keyed = values;
  if (log_bins)
    for (double& v : keyed) v = std::log10(std::max(v, 1e-300));
  auto [lo_it, hi_it] = std::minmax_element(keyed.begin(), keyed.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    const double pad = 0.5 * std::max(std::abs(lo), 1e-300);
    lo -= pad;
    hi += pad;
  }
  bins = std::max<std::size_t>(bins, 1);
  m.histogram.log_bins = log_bins;
  m.histogram.counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) {
    const double e = lo + (hi - lo) * double(b) / double(bins);
    m.histogram.edges.push_back(log_bins ? std::pow(10.0, e) : e);
  }
  for (double v : keyed) {
    auto b = std::size_t((v - lo) / (hi - lo) * double(bins));
    m.histogram.counts[std::min(b, bins - 1)]++;
  }
  return m;
}

}  // namespace

BatchSummary batch_statistics(const std::vector<ExtractionReport>& reports, std::size_t bins) {
  if (reports.empty()) throw ExtractionError("batch_statistics: no reports");
  auto column = [&](auto member) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(r.*member);
    return v;
  };
  BatchSummary s;
  s.device_count = reports.size();
  s.metrics.push_back(summarize("mu_sat", column(&ExtractionReport::mu_sat), bins, false));
  s.metrics.push_back(summarize("vth", column(&ExtractionReport::vth), bins, false));
  s.metrics.push_back(summarize("ss", column(&ExtractionReport::ss), bins, false));
  s.metrics.push_back(summarize("on_off", column(&ExtractionReport::on_off), bins, true));
  s.metrics.push_back(
      summarize("gm_max_per_width", column(&ExtractionReport::gm_max_per_width), bins, false));
  return s;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = (n == 1) ? a : a + (b - a) * double(i) / double(n - 1);
  return v;
}

}  // namespace

IvSweep synthesize_transfer(const OtftParams& p, double vds, double vgs_start, double vgs_stop,
                            std::size_t points, std::string device_id) {
  IvSweep s;
  s.kind = SweepKind::Transfer;
  s.device_id = std::move(device_id);
  s.geom = p.geom;
  s.cox = p.cox;
  s.fixed_bias = vds;
  for (double v : linspace(vgs_start, vgs_stop, points)) s.points.push_back({v, terminal_current(p, v, vds)});
  return s;
}

IvSweep synthesize_output(const OtftParams& p, double vgs, double vds_start, double vds_stop,
                          std::size_t points, std::string device_id) {
  IvSweep s;
  s.kind = SweepKind::Output;
  s.device_id = std::move(device_id);
  s.geom = p.geom;
  s.cox = p.cox;
  s.fixed_bias = vgs;
  for (double v : linspace(vds_start, vds_stop, points)) s.points.push_back({v, terminal_current(p, vgs, v)});
  return s;
}

TlmDataset synthesize_tlm(const OtftParams& p, const std::vector<double>& lengths, double v_ov,
                          double vds) {
  const double sign = p.polarity == Polarity::P ? -1.0 : 1.0;
  TlmDataset d;
  d.v_ov = v_ov;
  for (double L : lengths) {
    OtftParams q = p;
    q.geom.L = L;
    const double vgs = q.vth + sign * v_ov;
    const double vd = sign * std::abs(vds);
    const double id = terminal_current(q, vgs, vd);
    d.rows.push_back({L, vd / id * q.geom.W});
  }
  return d;
}

}  // namespace ofet
