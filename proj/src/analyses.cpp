#include "ofet/analyses.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

namespace ofet {

namespace {

double lerp_root(double x0, double x1, double y0, double y1, double level) {
  if (y1 == y0) return x0;
  return x0 + (x1 - x0) * (level - y0) / (y1 - y0);
}

double interp(const std::vector<double>& x, const std::vector<double>& y, double at) {
  auto it = std::upper_bound(x.begin(), x.end(), at);
  if (it == x.begin()) return y.front();
  if (it == x.end()) return y.back();
  const auto i = static_cast<std::size_t>(it - x.begin());
  return lerp_root(y[i - 1], y[i], x[i - 1], x[i], at);
}

void check_axis(const Waveform& w) {
  if (w.rows() < 3) throw AnalysisError("VTC needs at least 3 sweep points");
  for (std::size_t i = 1; i < w.rows(); ++i)
    if (!(w.axis[i] > w.axis[i - 1])) throw AnalysisError("VTC sweep axis must be strictly increasing");
}

// Signed slope by central differences, one-sided at the ends.
std::vector<double> slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 == n ? n - 1 : i + 1;
    s[i] = (y[b] - y[a]) / (x[b] - x[a]);
  }
  return s;
}

Tran transient_card(double stop, double max_step) {
  Tran t;
  t.stop = stop;
  t.step = max_step;
  t.max_step = max_step;
  return t;
}

std::vector<double> crossing_times(const std::vector<double>& t, const std::vector<double>& v, std::size_t from,
                                   double level) {
  std::vector<double> out;
  for (std::size_t i = from; i + 1 < t.size(); ++i) {
    const double a = v[i] - level, b = v[i + 1] - level;
    if ((a < 0.0) != (b < 0.0)) out.push_back(lerp_root(t[i], t[i + 1], a, b, 0.0));
  }
  return out;
}

std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

double vth_base(const Circuit& c, const OtftInstance& inst, const DeviceSample& s) {
  return c.models.at(inst.model).vth + inst.dvth + s.dvth;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<double> vtc_gain(const Waveform& w, std::string_view output) {
  check_axis(w);
  auto s = slope(w.axis, w.column(output));
  for (double& g : s) g = std::abs(g);
  return s;
}

VtcMetrics vtc_metrics(const Waveform& w, double vdd, std::string_view output) {
  check_axis(w);
  if (!(vdd > 0.0)) throw DomainError("vtc_metrics: vdd must be positive");
  const auto& x = w.axis;
  const auto& y = w.column(output);
  const std::size_t n = x.size();

  VtcMetrics m;
  const auto g = vtc_gain(w, output);
  m.peak_gain = *std::max_element(g.begin(), g.end());
  const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
  m.swing = *hi_it - *lo_it;

  bool found = false;
  for (std::size_t i = 0; i + 1 < n && !found; ++i) {
    const double a = y[i] - x[i], b = y[i + 1] - x[i + 1];
    if (a == 0.0) {
      m.switching_threshold = x[i];
      found = true;
    } else if ((a < 0.0) != (b < 0.0)) {
      m.switching_threshold = lerp_root(x[i], x[i + 1], a, b, 0.0);
      found = true;
    }
  }
  if (!found && y.back() == x.back()) {
    m.switching_threshold = x.back();
    found = true;
  }
  if (!found) throw AnalysisError("VTC never crosses Vout = Vin");

  // Rounding in the differences must not turn a unity-gain line into a gain stage.
  constexpr double unity = 1.0 + 1e-9;
  if (m.peak_gain <= unity) {
    m.vil = m.vih = m.switching_threshold;
    m.voh = m.vol = m.switching_threshold;
    return m;
  }
  std::size_t first = 0, last = n - 1;
  while (g[first] <= unity) ++first;
  while (g[last] <= unity) --last;
  m.vil = first == 0 ? x.front() : lerp_root(x[first - 1], x[first], g[first - 1], g[first], 1.0);
  m.vih = last == n - 1 ? x.back() : lerp_root(x[last], x[last + 1], g[last], g[last + 1], 1.0);
  m.voh = interp(x, y, m.vil);
  m.vol = interp(x, y, m.vih);
  m.noise_margin_high = m.voh - m.vih;
  m.noise_margin_low = m.vil - m.vol;
  return m;
}

// ---------------------------------------------------------------------------

OscillationResult oscillation_frequency(const Waveform& w, std::string_view column) {
  OscillationResult r;
  const auto& v = w.column(column);
  const auto& t = w.axis;
  if (t.size() < 4) return r;

  const double t0 = t.front() + 0.3 * (t.back() - t.front());
  r.window = {t0, t.back()};
  const auto first = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), t0) - t.begin());
  if (t.size() - first < 4) return r;

  // Time-weighted mean over the window; steps are non-uniform.
  double area = 0.0;
  for (std::size_t i = first; i + 1 < t.size(); ++i) area += 0.5 * (v[i] + v[i + 1]) * (t[i + 1] - t[i]);
  const double span = t.back() - t[first];
  const double mean = span > 0.0 ? area / span : v[first];

  const auto [mn, mx] = std::minmax_element(v.begin() + static_cast<std::ptrdiff_t>(first), v.end());
  r.amplitude = *mx - *mn;
  if (r.amplitude <= 1e-6 * std::max(1.0, std::abs(mean))) return r;  // numerically flat

  const auto cross = crossing_times(t, v, first, mean);
  r.crossings = cross.size();
  if (cross.size() < 4) return r;
  r.frequency = double(cross.size() - 1) / (2.0 * (cross.back() - cross.front()));

  // Compare the last two quarters of the window.
  const double q = (t.back() - t[first]) / 4.0;
  const double a3 = t[first] + 2.0 * q, a4 = t[first] + 3.0 * q;
  auto peak_to_peak = [&](double from, double to) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = first; i < t.size(); ++i)
      if (t[i] >= from && t[i] <= to) {
        lo = std::min(lo, v[i]);
        hi = std::max(hi, v[i]);
      }
    return hi - lo;
  };
  auto rate = [&](double from, double to) -> std::optional<double> {
    std::vector<double> in;
    for (double c : cross)
      if (c >= from && c <= to) in.push_back(c);
    if (in.size() < 3) return std::nullopt;
    return double(in.size() - 1) / (in.back() - in.front());
  };
  const double p3 = peak_to_peak(a3, a4), p4 = peak_to_peak(a4, t.back());
  const auto r3 = rate(a3, a4), r4 = rate(a4, t.back());
  r.settled = p3 > 1e-9 && std::abs(p4 - p3) <= 0.1 * p3 && r3 && r4 && std::abs(*r4 - *r3) <= 0.1 * *r3;
  return r;
}

OscillationResult measure_oscillator(const Circuit& ro, const OscillatorOptions& opt) {
  if (!(opt.stop > 0.0) || opt.max_stop < opt.stop || opt.min_cycles < 2)
    throw DomainError("oscillator options: need 0 < stop <= max_stop and min_cycles >= 2");
  double stop = opt.stop;
  OscillationResult r;
  for (;;) {
    const Waveform w = transient(ro, transient_card(stop, stop / 2000.0), opt.solver);
    r = oscillation_frequency(w, opt.output);
    const double cycles = r.crossings / 2.0;
    if (r.settled && cycles >= opt.min_cycles) return r;
    if (stop >= opt.max_stop) return r;
    double next = 2.0 * stop;
    if (r.settled && r.frequency) next = std::max(next, 1.2 * opt.min_cycles / (0.7 * *r.frequency));
    stop = std::min(next, opt.max_stop);
  }
}

std::vector<VcoPoint> vco_curve(const Circuit& ro, const std::vector<double>& vdd, const OscillatorOptions& opt) {
  std::vector<VcoPoint> out;
  out.reserve(vdd.size());
  for (double v : vdd) {
    Circuit c = ro;
    set_source_dc(c, opt.supply, v);
    for (const auto& [name, factor] : opt.tracking) set_source_dc(c, name, factor * v);
    VcoPoint p{v, measure_oscillator(c, opt)};
    if (!p.result.settled || !p.result.frequency) {
      std::ostringstream os;
      os << "oscillator did not settle at VDD = " << v << " V";
      throw AnalysisError(os.str());
    }
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------

SpikeTrain detect_spikes(const Waveform& w, std::string_view column, double threshold, double refractory) {
  const auto& v = w.column(column);
  SpikeTrain s;
  for (double t : crossing_times(w.axis, v, 0, threshold)) {
    const auto i = static_cast<std::size_t>(std::lower_bound(w.axis.begin(), w.axis.end(), t) - w.axis.begin());
    if (i == 0 || !(v[i] >= threshold)) continue;  // downward crossing
    if (!s.times.empty() && t - s.times.back() < refractory) continue;
    if (!s.times.empty() && t <= s.times.back()) continue;
    s.times.push_back(t);
  }
  if (s.times.size() >= 2) {
    const std::size_t k = s.times.size() - 1;
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += s.times[i + 1] - s.times[i];
    s.isi_mean = sum / double(k);
    double ss = 0.0;
    for (std::size_t i = 0; i < k; ++i) ss += std::pow(s.times[i + 1] - s.times[i] - s.isi_mean, 2);
    s.isi_stddev = k > 1 ? std::sqrt(ss / double(k - 1)) : 0.0;
    s.rate = 1.0 / s.isi_mean;
  }
  return s;
}

FiPoint neuron_response(const Circuit& neuron, double current, const NeuronOptions& opt) {
  if (!(current >= 0.0)) throw DomainError("neuron excitation current must be non-negative");
  if (!(opt.first_stop > 0.0) || opt.max_stop < opt.first_stop || opt.min_spikes < 2)
    throw DomainError("neuron options: need 0 < first_stop <= max_stop and min_spikes >= 2");
  Circuit c = neuron;
  set_source_dc(c, opt.input, current);
  double stop = opt.first_stop;
  FiPoint p{current, {}};
  for (;;) {
    const Waveform w = transient(c, transient_card(stop, std::min(stop / 200.0, 2e-3)), opt.solver);
    p.train = detect_spikes(w, opt.membrane, opt.vdd / 2.0, opt.refractory);
    if (int(p.train.times.size()) >= opt.min_spikes || stop >= opt.max_stop) return p;
    double next = 2.0 * stop;
    if (p.train.rate > 0.0) next = std::max(next, 1.2 * (opt.min_spikes + 1) / p.train.rate);
    stop = std::min(next, opt.max_stop);
  }
}

std::vector<FiPoint> neuron_fi_curve(const Circuit& neuron, const std::vector<double>& currents,
                                     const NeuronOptions& opt) {
  std::vector<FiPoint> out;
  out.reserve(currents.size());
  for (double i : currents) out.push_back(neuron_response(neuron, i, opt));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<TruthRow> logic_truth_table(const Circuit& gate, const LogicSpec& spec) {
  if (spec.inputs.empty()) throw DomainError("logic gate needs at least one input");
  if (!(spec.vdd > 0.0) || !(spec.low_fraction < spec.high_fraction))
    throw DomainError("logic thresholds: need vdd > 0 and low < high");
  Circuit c = gate;
  set_source_dc(c, spec.supply, spec.vdd);
  const std::size_t k = spec.inputs.size();
  std::vector<TruthRow> rows;
  for (std::size_t code = 0; code < (std::size_t{1} << k); ++code) {
    TruthRow row;
    for (std::size_t j = 0; j < k; ++j) {
      const bool bit = (code >> (k - 1 - j)) & 1u;
      row.inputs.push_back(bit);
      set_source_dc(c, spec.inputs[j], bit ? spec.vdd : 0.0);
    }
    row.vout = dc_operating_point(c).voltage(c, spec.output);
    if (row.vout < spec.low_fraction * spec.vdd) {
      row.output = false;
    } else if (row.vout > spec.high_fraction * spec.vdd) {
      row.output = true;
    } else {
      std::ostringstream os;
      os << "output " << spec.output << " = " << row.vout << " V is in the forbidden band for inputs ";
      for (bool b : row.inputs) os << (b ? '1' : '0');
      throw AnalysisError(os.str());
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<double, double>> strain_study(const Circuit& c, const std::vector<double>& strains,
                                                    StrainOrientation orientation, const CircuitMetric& metric,
                                                    bool scale_interconnect) {
  std::vector<std::pair<double, double>> out;
  out.reserve(strains.size());
  for (double eps : strains) out.emplace_back(eps, metric(with_strain(c, {eps, orientation}, scale_interconnect)));
  return out;
}

void McSpec::validate() const {
  if (count < 1) throw DomainError("Monte Carlo count must be at least 1");
  for (const auto& d : distributions) {
    if (!(d.sigma >= 0.0)) throw DomainError("Monte Carlo sigma must be non-negative for " + d.parameter);
    if (d.parameter != "vth" && d.parameter != "vth_p" && d.parameter != "vth_n" && d.parameter != "dvth" &&
        d.parameter != "mu")
      throw DomainError("unknown Monte Carlo parameter '" + d.parameter + "'");
  }
}

double keyed_normal(std::uint64_t seed, std::uint64_t replica, std::uint64_t device, std::uint64_t stream) {
  std::seed_seq seq{lo(seed), hi(seed), lo(replica), hi(replica), lo(device), hi(device), lo(stream), hi(stream)};
  std::uint32_t w[4];
  seq.generate(std::begin(w), std::end(w));
  const std::uint64_t a = (std::uint64_t{w[0]} << 32) | w[1];
  const std::uint64_t b = (std::uint64_t{w[2]} << 32) | w[3];
  const double u1 = (double(a >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = double(b >> 11) * 0x1.0p-53;          // [0, 1)
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<DeviceSample> draw_samples(const Circuit& c, const McSpec& spec, int replica) {
  std::vector<DeviceSample> out;
  std::uint64_t device = 0;
  for (const auto& e : c.elements) {
    const auto* inst = std::get_if<OtftInstance>(&e.body);
    if (!inst) continue;
    DeviceSample s{e.name};
    const Polarity pol = c.models.at(inst->model).polarity;
    for (std::size_t k = 0; k < spec.distributions.size(); ++k) {
      const auto& d = spec.distributions[k];
      const double z = keyed_normal(spec.seed, std::uint64_t(replica), device, k);
      const double x = d.kind == McDistribution::Kind::LogNormal ? std::exp(d.mean + d.sigma * z)
                                                                 : d.mean + d.sigma * z;
      if (d.parameter == "dvth") {
        s.dvth += x;
      } else if (d.parameter == "mu") {
        s.mu_mult *= std::max(x, 1e-3);
      } else {
        // Absolute thresholds; plain "vth" follows the sign of its mean.
        const Polarity target = d.parameter == "vth_p"   ? Polarity::P
                                : d.parameter == "vth_n" ? Polarity::N
                                : d.mean < 0.0           ? Polarity::P
                                                         : Polarity::N;
        if (pol == target) s.dvth += x - vth_base(c, *inst, s);
      }
    }
    out.push_back(std::move(s));
    ++device;
  }
  return out;
}

Circuit apply_samples(const Circuit& c, const std::vector<DeviceSample>& samples) {
  Circuit out = c;
  std::size_t i = 0;
  for (auto& e : out.elements) {
    auto* inst = std::get_if<OtftInstance>(&e.body);
    if (!inst) continue;
    if (i >= samples.size() || samples[i].device != e.name)
      throw DomainError("Monte Carlo samples do not match transistor " + e.name);
    inst->dvth += samples[i].dvth;
    inst->mu_mult *= samples[i].mu_mult;
    ++i;
  }
  if (i != samples.size()) throw DomainError("Monte Carlo samples list more devices than the circuit");
  return out;
}

McResult monte_carlo(const Circuit& c, const McSpec& spec, const CircuitMetric& metric) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.count);
  McResult r;
  r.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.samples[i] = draw_samples(c, spec, int(i));
  r.metric.assign(n, std::numeric_limits<double>::quiet_NaN());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        r.metric[i] = metric(apply_samples(c, r.samples[i]));
      } catch (const Error&) {
        // Unsolvable replica counts as a failure; metric stays NaN.
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);

  std::size_t passed = 0;
  r.pass.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.pass[i] = !std::isnan(r.metric[i]) && spec.predicate(r.metric[i]);
    passed += r.pass[i];
  }
  r.yield = double(passed) / double(n);
  return r;
}

}  // namespace ofet
