#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ofet/analyses.hpp"

using namespace ofet;
namespace fs = std::filesystem;

namespace {

Circuit fixture(const std::string& name) {
  std::ifstream in(fs::path(OFET_FIXTURE_DIR) / name);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Waveform sampled(double stop, double rate, const std::function<double(double)>& f) {
  Waveform w;
  w.axis_name = "time";
  w.names = {"v(x)"};
  w.columns.resize(1);
  const auto n = static_cast<std::size_t>(std::llround(stop * rate));
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = double(i) / rate;
    w.axis.push_back(t);
    w.columns[0].push_back(f(t));
  }
  return w;
}

Waveform vtc(const std::vector<double>& vin, const std::vector<double>& vout) {
  Waveform w;
  w.axis_name = "vin";
  w.axis = vin;
  w.names = {"v(out)"};
  w.columns = {vout};
  return w;
}

double inverter_gain(const Circuit& c, double vdd, double step) {
  Circuit x = c;
  set_source_dc(x, "vdd", vdd);
  return vtc_metrics(dc_sweep(x, DcSweep{{"vin", 0.0, vdd, step}, {}}), vdd).peak_gain;
}

}  // namespace

// ---------------------------------------------------------------------------
// Oscillation frequency

TEST_CASE("10 Hz sine sampled at 1 kHz for 2 s") {
  const auto w = sampled(2.0, 1000.0, [](double t) { return 1.5 + std::sin(2 * std::numbers::pi * 10.0 * t); });
  const auto r = oscillation_frequency(w, "v(x)");
  REQUIRE(r.frequency);
  CHECK(*r.frequency == doctest::Approx(10.0).epsilon(0.005));
  CHECK(r.settled);
  CHECK(r.amplitude == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(r.window.first == doctest::Approx(0.6));
}

TEST_CASE("property: pure sines are measured within 0.5%") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> freq(1.0, 5000.0), periods(20.0, 80.0), spp(50.0, 200.0), phase(0.0, 6.28);
  for (int i = 0; i < 200; ++i) {
    const double f = freq(rng), ph = phase(rng);
    const double stop = periods(rng) / f / 0.7;  // at least 20 periods survive the startup cut
    const auto w = sampled(stop, spp(rng) * f, [&](double t) { return std::sin(2 * std::numbers::pi * f * t + ph); });
    const auto r = oscillation_frequency(w, "v(x)");
    CAPTURE(f);
    REQUIRE(r.frequency);
    CHECK(std::abs(*r.frequency / f - 1.0) < 0.005);
  }
}

TEST_CASE("constant record has no frequency") {
  const auto w = sampled(1.0, 1000.0, [](double) { return 2.5; });
  const auto r = oscillation_frequency(w, "v(x)");
  CHECK_FALSE(r.frequency);
  CHECK_FALSE(r.settled);
}

TEST_CASE("chirp is not settled") {
  // Instantaneous frequency 5 Hz rising to 45 Hz over 2 s.
  const auto w = sampled(2.0, 5000.0, [](double t) { return std::sin(2 * std::numbers::pi * (5.0 * t + 10.0 * t * t)); });
  CHECK_FALSE(oscillation_frequency(w, "v(x)").settled);
}

TEST_CASE("decaying oscillation is not settled") {
  const auto w = sampled(2.0, 2000.0, [](double t) { return std::exp(-2.0 * t) * std::sin(2 * std::numbers::pi * 20.0 * t); });
  CHECK_FALSE(oscillation_frequency(w, "v(x)").settled);
}

// ---------------------------------------------------------------------------
// VTC metrics

TEST_CASE("linear VTC: unity gain, VM at VDD/2, no noise margins") {
  std::vector<double> vin, vout;
  for (int i = 0; i <= 500; ++i) {
    vin.push_back(5.0 * i / 500);
    vout.push_back(5.0 - vin.back());
  }
  const auto m = vtc_metrics(vtc(vin, vout), 5.0);
  CHECK(m.peak_gain == doctest::Approx(1.0));
  CHECK(m.switching_threshold == doctest::Approx(2.5));
  CHECK(m.swing == doctest::Approx(5.0));
  CHECK(m.noise_margin_high == 0.0);
  CHECK(m.noise_margin_low == 0.0);
}

TEST_CASE("ideal step VTC: VM at the step, grid-limited gain") {
  const double dx = 0.01;
  std::vector<double> vin, vout;
  for (int i = 0; i <= 300; ++i) {
    vin.push_back(dx * i);
    vout.push_back(vin.back() < 1.2 - 1e-9 ? 3.0 : 0.0);
  }
  const auto m = vtc_metrics(vtc(vin, vout), 3.0);
  CHECK(m.switching_threshold == doctest::Approx(1.2).epsilon(dx));
  CHECK(m.peak_gain == doctest::Approx(3.0 / (2 * dx)));
  CHECK(m.swing == doctest::Approx(3.0));
}

TEST_CASE("complementary inverter at 3 V") {
  Circuit c = fixture("complementary_inverter.cir");
  const auto w = dc_sweep(c, std::get<DcSweep>(c.analyses.at(0)));
  const auto m = vtc_metrics(w, 3.0);
  CHECK(m.peak_gain >= 10.0);
  CHECK(m.switching_threshold > 0.0);
  CHECK(m.switching_threshold < 3.0);
  CHECK(m.swing <= 3.0);
  CHECK(w.column("v(out)").front() == doctest::Approx(3.0).epsilon(1e-3 / 3.0));
  CHECK(m.noise_margin_high > 0.0);
  CHECK(m.noise_margin_low > 0.0);
  const auto& vout = w.column("v(out)");
  int sign_changes = 0;
  for (std::size_t i = 1; i < vout.size(); ++i) {
    CHECK(vout[i] <= vout[i - 1] + 1e-9);
    if ((vout[i - 1] - w.axis[i - 1] > 0) != (vout[i] - w.axis[i] > 0)) ++sign_changes;
  }
  CHECK(sign_changes == 1);
}

// ---------------------------------------------------------------------------
// Logic

TEST_CASE("NAND truth table") {
  LogicSpec s;
  s.inputs = {"va", "vb"};
  const auto t = logic_truth_table(fixture("nand.cir"), s);
  REQUIRE(t.size() == 4);
  const bool expected[] = {true, true, true, false};
  for (int i = 0; i < 4; ++i) {
    CHECK(t[i].inputs == std::vector<bool>{bool(i & 2), bool(i & 1)});
    CHECK(t[i].output == expected[i]);
  }
}

TEST_CASE("NOR truth table") {
  LogicSpec s;
  s.inputs = {"va", "vb"};
  const auto t = logic_truth_table(fixture("nor.cir"), s);
  REQUIRE(t.size() == 4);
  const bool expected[] = {true, false, false, false};
  for (int i = 0; i < 4; ++i) CHECK(t[i].output == expected[i]);
}

TEST_CASE("inverter as a one-input gate") {
  LogicSpec s;
  s.inputs = {"vin"};
  s.vdd = 3.0;
  const auto t = logic_truth_table(fixture("complementary_inverter.cir"), s);
  REQUIRE(t.size() == 2);
  CHECK(t[0].output);
  CHECK_FALSE(t[1].output);
}

TEST_CASE("output in the forbidden band is an error") {
  const Circuit half = parse("half\nVDD vdd 0 5\nVA a 0 0\nR1 vdd out 1k\nR2 out 0 1k\nR3 a 0 1k\n");
  LogicSpec s;
  s.inputs = {"va"};
  CHECK_THROWS_AS(logic_truth_table(half, s), AnalysisError);
}

// ---------------------------------------------------------------------------
// Spikes and neuron

TEST_CASE("spike detection with refractory debounce") {
  // 4 Hz pulse train with ringing right after each rising edge.
  const auto w = sampled(2.0, 10000.0, [](double t) {
    const double phase = std::fmod(t + 0.125, 0.25);
    if (phase >= 0.0002 && phase < 0.0004) return 0.0;  // dip and re-cross 0.4 ms after the edge
    return phase < 0.01 ? 5.0 : 0.0;
  });
  const auto train = detect_spikes(w, "v(x)", 2.5, 1e-3);
  CHECK(train.times.size() == 8);
  CHECK(train.rate == doctest::Approx(4.0));
  CHECK(train.isi_stddev < 1e-9);
  CHECK(std::is_sorted(train.times.begin(), train.times.end()));
  CHECK(detect_spikes(w, "v(x)", 2.5, 0.0).times.size() > train.times.size());
}

TEST_CASE("neuron: zero input, zero spikes") {
  NeuronOptions o;
  o.max_stop = 1.0;
  const auto p = neuron_response(fixture("neuron.cir"), 0.0, o);
  CHECK(p.train.times.empty());
  CHECK(p.train.rate == 0.0);
}

TEST_CASE("neuron rate grows with input current") {
  const auto fi = neuron_fi_curve(fixture("neuron.cir"), {20e-9, 100e-9});
  REQUIRE(fi.size() == 2);
  CHECK(fi[0].train.rate > 0.0);
  CHECK(fi[1].train.rate > fi[0].train.rate);
}

// ---------------------------------------------------------------------------
// Oscillators

TEST_CASE("VCO curve is deterministic for repeated supplies") {
  const Circuit ro = fixture("complementary_ro.cir");
  const auto pts = vco_curve(ro, {10.0, 10.0});
  REQUIRE(pts.size() == 2);
  REQUIRE(pts[0].result.frequency);
  CHECK(*pts[0].result.frequency == *pts[1].result.frequency);
  // Gate-drain coupling lets the edges overshoot the rails slightly.
  CHECK(pts[0].result.amplitude <= 1.05 * 10.0);
}

// ---------------------------------------------------------------------------
// Strain

TEST_CASE("strain study at zero strain is the identity") {
  const Circuit c = fixture("complementary_inverter.cir");
  auto vm = [](const Circuit& x) {
    return vtc_metrics(dc_sweep(x, DcSweep{{"vin", 0.0, 3.0, 0.01}, {}}), 3.0).switching_threshold;
  };
  const auto s = strain_study(c, {0.0, 0.25, 0.5}, StrainOrientation::ParallelToChannelLength, vm);
  REQUIRE(s.size() == 3);
  CHECK(s[0].second == vm(c));
  for (const auto& [eps, v] : s) CHECK(std::abs(v - s[0].second) <= 0.1 * 3.0);
}

// ---------------------------------------------------------------------------
// Monte Carlo

TEST_CASE("keyed_normal is a standard normal stream") {
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = keyed_normal(1, std::uint64_t(i), 3, 0);
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
  CHECK(keyed_normal(1, 2, 3, 4) == keyed_normal(1, 2, 3, 4));
  CHECK(keyed_normal(1, 2, 3, 4) != keyed_normal(1, 2, 3, 5));
  CHECK(keyed_normal(1, 2, 3, 4) != keyed_normal(2, 2, 3, 4));
}

TEST_CASE("Monte Carlo") {
  const Circuit c = fixture("complementary_inverter.cir");
  auto gain = [](const Circuit& x) { return inverter_gain(x, 3.0, 0.02); };

  McSpec spec;
  spec.count = 12;
  spec.seed = 2024;
  spec.distributions = {{"vth_p", McDistribution::Kind::Normal, -0.06, 0.1},
                        {"mu", McDistribution::Kind::LogNormal, 0.0, 0.1}};
  spec.predicate = [](double g) { return g >= 5.0; };

  SUBCASE("sigma = 0 gives identical replicas") {
    McSpec zero = spec;
    for (auto& d : zero.distributions) d.sigma = 0.0;
    const auto r = monte_carlo(c, zero, gain);
    for (double m : r.metric) CHECK(m == r.metric.front());
    CHECK((r.yield == 0.0 || r.yield == 1.0));
  }
  SUBCASE("always-true predicate") {
    McSpec all = spec;
    all.predicate = [](double) { return true; };
    CHECK(monte_carlo(c, all, gain).yield == 1.0);
  }
  SUBCASE("seed reproducibility and thread independence") {
    McSpec one = spec, many = spec;
    one.threads = 1;
    many.threads = 4;
    const auto a = monte_carlo(c, one, gain);
    const auto b = monte_carlo(c, many, gain);
    CHECK(a.metric == b.metric);
    CHECK(a.samples == b.samples);
    CHECK(a.yield == b.yield);
    McSpec other = spec;
    other.seed = 2025;
    CHECK(monte_carlo(c, other, gain).samples != a.samples);
  }
  SUBCASE("yield equals replay of the recorded samples") {
    const auto r = monte_carlo(c, spec, gain);
    int passed = 0;
    for (int i = 0; i < spec.count; ++i) {
      CHECK(draw_samples(c, spec, i) == r.samples[std::size_t(i)]);
      const double g = gain(apply_samples(c, r.samples[std::size_t(i)]));
      CHECK(g == r.metric[std::size_t(i)]);
      passed += spec.predicate(g);
    }
    CHECK(r.yield == double(passed) / spec.count);
  }
  SUBCASE("threshold samples are absolute for the matching polarity") {
    const auto s = draw_samples(c, spec, 0);
    REQUIRE(s.size() == 2);
    const auto& mp = std::get<OtftInstance>(c.find("mp")->body);
    const double vth_p = c.resolve(mp).vth + s[0].dvth;
    CHECK(vth_p == doctest::Approx(-0.06 + 0.1 * keyed_normal(spec.seed, 0, 0, 0)));
    CHECK(s[1].dvth == 0.0);  // the n-device keeps its card threshold
  }
  SUBCASE("invalid specs") {
    McSpec bad = spec;
    bad.count = 0;
    CHECK_THROWS(bad.validate());
    bad = spec;
    bad.distributions[0].sigma = -1.0;
    CHECK_THROWS(bad.validate());
  }
}
