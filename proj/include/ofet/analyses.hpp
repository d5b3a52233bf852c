#pragma once

// Experiment drivers on top of the engine: inverter transfer metrics,
// oscillator frequency and VCO curves, neuron f-I curves, logic truth tables,
// strain studies and Monte Carlo yield.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ofet/engine.hpp"

namespace ofet {

class AnalysisError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Inverter transfer curve

struct VtcMetrics {
  double peak_gain = 0.0;        // max |dVout/dVin|
  double switching_threshold = 0.0;  // VM, Vout = Vin
  double noise_margin_high = 0.0;    // VOH - VIH
  double noise_margin_low = 0.0;     // VIL - VOL
  double swing = 0.0;                // max Vout - min Vout
  double vil = 0.0, vih = 0.0, voh = 0.0, vol = 0.0;
};

/// Metrics of a DC sweep whose axis is the input voltage. Noise margins come
/// from the outermost unity-gain points and are zero when the gain never
/// exceeds one.
VtcMetrics vtc_metrics(const Waveform& w, double vdd, std::string_view output = "v(out)");

/// Central-difference |dVout/dVin| at every sweep point.
std::vector<double> vtc_gain(const Waveform& w, std::string_view output = "v(out)");

// ---------------------------------------------------------------------------
// Oscillators

struct OscillationResult {
  std::optional<double> frequency;  // Hz
  double amplitude = 0.0;           // peak-to-peak over the analysis window, V
  bool settled = false;
  std::pair<double, double> window{0.0, 0.0};
  std::size_t crossings = 0;
};

/// Drops the first 30% of the record, counts mean crossings and reports
/// (crossings - 1) / (2 * span). A record flat to 1 ppm has no crossings. Settled requires the last quarter of the window
/// to match the preceding quarter within 10% in both amplitude and crossing rate.
OscillationResult oscillation_frequency(const Waveform& w, std::string_view column);

/// Transient settings for oscillator runs: a looser LTE target halves the step
/// count and moves the measured frequency by well under 0.1%.
inline SolverConfig oscillator_solver() {
  SolverConfig cfg;
  cfg.transient.lte_tol = 1e-3;
  return cfg;
}

struct OscillatorOptions {
  std::string supply = "vdd";     // source stepped over the VDD list
  std::vector<std::pair<std::string, double>> tracking;  // sources held at factor * VDD
  std::string output = "v(out)";  // observed column
  double stop = 20e-3;            // first transient length, s
  double max_stop = 2.0;          // give up beyond this, s
  int min_cycles = 12;
  SolverConfig solver = oscillator_solver();
};

struct VcoPoint {
  double vdd = 0.0;
  OscillationResult result;
};

/// Transient per supply value; stretches the run until `min_cycles` settled
/// periods are seen. Throws AnalysisError naming the VDD that never settles.
std::vector<VcoPoint> vco_curve(const Circuit& ro, const std::vector<double>& vdd,
                                const OscillatorOptions& opt = {});

/// Single-supply measurement used by vco_curve.
OscillationResult measure_oscillator(const Circuit& ro, const OscillatorOptions& opt);

// ---------------------------------------------------------------------------
// Neuron

struct SpikeTrain {
  std::vector<double> times;  // s
  double rate = 0.0;          // Hz, 1 / mean inter-spike interval
  double isi_mean = 0.0;
  double isi_stddev = 0.0;
};

/// Upward crossings of `threshold`, ignoring crossings closer than `refractory`
/// to the previous spike.
SpikeTrain detect_spikes(const Waveform& w, std::string_view column, double threshold, double refractory = 1e-3);

struct NeuronOptions {
  std::string input = "iex";      // current source carrying the excitation
  std::string membrane = "v(vm)";
  double vdd = 5.0;               // spike threshold is vdd / 2
  double refractory = 1e-3;
  double first_stop = 0.5;        // s; doubled until min_spikes are seen
  double max_stop = 8.0;
  int min_spikes = 4;
  SolverConfig solver;
};

struct FiPoint {
  double current = 0.0;
  SpikeTrain train;
};

FiPoint neuron_response(const Circuit& neuron, double current, const NeuronOptions& opt = {});
std::vector<FiPoint> neuron_fi_curve(const Circuit& neuron, const std::vector<double>& currents,
                                     const NeuronOptions& opt = {});

// ---------------------------------------------------------------------------
// Logic

struct LogicSpec {
  std::vector<std::string> inputs;  // voltage sources, most significant first
  std::string output = "out";       // node name
  std::string supply = "vdd";
  double vdd = 5.0;
  double low_fraction = 0.3;
  double high_fraction = 0.7;
};

struct TruthRow {
  std::vector<bool> inputs;
  double vout = 0.0;
  bool output = false;
};

/// DC operating point at every input combination. Throws AnalysisError when an
/// output lands in the forbidden band between the two thresholds.
std::vector<TruthRow> logic_truth_table(const Circuit& gate, const LogicSpec& spec);

// ---------------------------------------------------------------------------
// Strain and Monte Carlo

using CircuitMetric = std::function<double(const Circuit&)>;

/// Applies the strain to every transistor for each epsilon and evaluates the metric.
std::vector<std::pair<double, double>> strain_study(const Circuit& c, const std::vector<double>& strains,
                                                    StrainOrientation orientation, const CircuitMetric& metric,
                                                    bool scale_interconnect = false);

struct DeviceSample {
  std::string device;
  double dvth = 0.0;     // added to the instance threshold
  double mu_mult = 1.0;  // multiplies the instance mobility
  bool operator==(const DeviceSample&) const = default;
};

struct McSpec {
  int count = 1;
  std::uint64_t seed = 0;
  std::vector<McDistribution> distributions;
  std::function<bool(double)> predicate = [](double) { return true; };
  unsigned threads = 0;  // 0 picks the hardware concurrency

  /// Throws DomainError for count < 1 or negative sigma.
  void validate() const;
};

struct McResult {
  std::vector<double> metric;                      // NaN when the replica failed to solve
  std::vector<bool> pass;
  std::vector<std::vector<DeviceSample>> samples;  // per replica, per transistor
  double yield = 0.0;
};

/// Per-device variations for one replica, keyed by (seed, replica, device).
std::vector<DeviceSample> draw_samples(const Circuit& c, const McSpec& spec, int replica);

/// Circuit with recorded variations applied on top of the instance values.
Circuit apply_samples(const Circuit& c, const std::vector<DeviceSample>& samples);

McResult monte_carlo(const Circuit& c, const McSpec& spec, const CircuitMetric& metric);

/// Standard normal deviate from a 64-bit seed sequence, identical on every platform.
double keyed_normal(std::uint64_t seed, std::uint64_t replica, std::uint64_t device, std::uint64_t stream);

}  // namespace ofet
