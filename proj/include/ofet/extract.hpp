#pragma once

// Figure-of-merit extraction from I-V sweeps, TLM regression, least-squares
// model fitting and population statistics.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ofet/model.hpp"

namespace ofet {

class ExtractionError : public Error {
 public:
  using Error::Error;
};

enum class SweepKind { Transfer, Output };

struct IvPoint {
  double v = 0.0;   // swept voltage (VGS for transfer, VDS for output)
  double id = 0.0;  // drain current, A
};

struct IvSweep {
  SweepKind kind = SweepKind::Transfer;
  std::string device_id;
  DeviceGeometry geom;
  double cox = 0.0;         // F/m^2
  double fixed_bias = 0.0;  // VDS for transfer, VGS for output
  std::vector<IvPoint> points;

  /// Throws ExtractionError unless >= 8 points with strictly monotone voltages.
  void validate() const;
};

/// First monotone branch of a (possibly dual-sweep) measurement.
std::vector<IvPoint> forward_branch(const std::vector<IvPoint>& points);

struct ExtractionDiagnostics {
  double window_r2 = 0.0;
  std::size_t window_points = 0;
  double ss_window_r2 = 0.0;
};

struct ExtractionReport {
  std::string device_id;
  double mu_sat = 0.0;            // m^2/(V s)
  double vth = 0.0;               // V
  double ss = 0.0;                // V/decade
  double on_off = 1.0;
  double gm_max_per_width = 0.0;  // S/m
  std::pair<double, double> fit_window{0.0, 0.0};
  ExtractionDiagnostics diagnostics;
};

struct SaturationFit {
  double mu_sat = 0.0;
  double vth = 0.0;
  std::pair<double, double> window{0.0, 0.0};
  double r2 = 0.0;
  std::size_t points = 0;
};

/// sqrt|ID| vs VGS least squares over the contiguous 40% window of maximal R^2.
SaturationFit extract_saturation_mobility(const IvSweep& s);

/// Minimum of dVGS/dlog10|ID| over 5-point regression windows.
double extract_subthreshold_swing(const IvSweep& s);

inline constexpr double kDefaultCurrentFloor = 1e-13;

double on_off_ratio(const IvSweep& s, double floor = kDefaultCurrentFloor);

/// max |dID/dVGS| / W by central differences.
double max_transconductance_per_width(const IvSweep& s);

/// Runs every single-sweep extraction on one transfer sweep.
ExtractionReport extract_report(const IvSweep& transfer);

// ---------------------------------------------------------------------------
// Transfer-length method

struct TlmRow {
  double length = 0.0;       // m
  double r_total_w = 0.0;    // ohm m
};

struct TlmDataset {
  double v_ov = 0.0;
  std::vector<TlmRow> rows;
};

struct TlmResult {
  double rc_w = 0.0;     // intercept, ohm m
  double r_sheet = 0.0;  // slope, ohm/sq
  double r2 = 0.0;
  bool negative_intercept = false;
};

TlmResult tlm_contact_resistance(const TlmDataset& d);

// ---------------------------------------------------------------------------
// Model fitting

struct FixedParams {
  DeviceGeometry geom;
  double cox = 0.0;
  std::optional<double> vth;
  Polarity polarity = Polarity::P;
};

struct FitReport {
  OtftParams params;
  double cost = 0.0;          // 0.5 * sum of squared asinh residuals
  double rms_residual = 0.0;  // RMS asinh residual
  double signal_scale = 0.0;  // max |asinh(ID_meas / Is)|
  int iterations = 0;
  std::vector<double> cost_history;  // cost after every accepted step
};

class FitError : public Error {
 public:
  FitError(const std::string& what, FitReport best) : Error(what), best_(std::move(best)) {}
  const FitReport& best() const { return best_; }

 private:
  FitReport best_;
};

struct FitOptions {
  double current_scale = 1e-9;  // Is in asinh(ID / Is)
  int max_iterations = 200;
  /// Starting point; when absent it is seeded from the single-sweep extractions.
  std::optional<OtftParams> initial;
};

/// Levenberg-Marquardt fit of {mu0, Rc, SS, lambda, gamma} (and Vth when not
/// fixed) on asinh-weighted residuals over all sweeps of one device.
FitReport fit_model(const std::vector<IvSweep>& sweeps, const FixedParams& fixed,
                    const FitOptions& options = {});

/// Seed used by fit_model when no explicit initial guess is given.
OtftParams initial_guess(const std::vector<IvSweep>& sweeps, const FixedParams& fixed);

// ---------------------------------------------------------------------------
// Population statistics

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
  bool log_bins = false;
};

struct MetricSummary {
  std::string name;
  double mean = 0.0;
  double stddev = 0.0;
  Histogram histogram;
};

struct BatchSummary {
  std::size_t device_count = 0;
  std::vector<MetricSummary> metrics;  // mu_sat, vth, ss, on_off, gm_max_per_width

  const MetricSummary& metric(const std::string& name) const;
};

BatchSummary batch_statistics(const std::vector<ExtractionReport>& reports, std::size_t bins = 12);

// ---------------------------------------------------------------------------
// Forward-model synthesis

IvSweep synthesize_transfer(const OtftParams& p, double vds, double vgs_start, double vgs_stop,
                            std::size_t points, std::string device_id = "synthetic");
IvSweep synthesize_output(const OtftParams& p, double vgs, double vds_start, double vds_stop,
                          std::size_t points, std::string device_id = "synthetic");

/// Width-normalized total resistance at overdrive v_ov and drain bias vds for each length.
TlmDataset synthesize_tlm(const OtftParams& p, const std::vector<double>& lengths, double v_ov,
                          double vds);

}  // namespace ofet
