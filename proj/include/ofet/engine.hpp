#pragma once

// Modified nodal analysis: DC operating point with homotopy fallbacks, DC
// sweeps with continuation, and adaptive transient integration.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ofet/netlist.hpp"

namespace ofet {

struct TransientOptions {
  /// Overrides the method given on the .tran card when set.
  std::optional<IntegrationMethod> method;
  double lte_tol = 1e-4;     // relative, against max(|v|, 1 V)
  double min_step = 1e-15;   // s
  double max_step = 0.0;     // s; 0 means stop / 50 unless the card gives one
  bool adaptive = true;      // false: fixed step equal to the card's step

  bool operator==(const TransientOptions&) const = default;
};

struct SolverConfig {
  double abstol = 1e-12;  // A
  double reltol = 1e-4;
  double vntol = 1e-6;    // V
  int max_newton_iters = 100;
  double gmin = 1e-12;    // S, drain-source and gate-source on every transistor
  double damping = 0.5;   // V, largest Newton update per node and iteration
  TransientOptions transient;

  bool operator==(const SolverConfig&) const = default;

  /// Throws DomainError for non-positive tolerances.
  void validate() const;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual) : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Column-oriented record: an axis plus named columns "v(node)" and "i(source)".
/// Source currents follow SPICE: positive from the + node through the source.
struct Waveform {
  std::string axis_name;
  std::vector<double> axis;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return axis.size(); }
  bool has(std::string_view name) const;
  /// Throws Error when the column is missing.
  const std::vector<double>& column(std::string_view name) const;

  bool operator==(const Waveform&) const = default;
};

enum class Homotopy { None, GminStepping, SourceStepping };

struct OperatingPoint {
  std::vector<double> node_voltage;  // indexed like Circuit::nodes, ground first
  std::vector<std::pair<std::string, double>> source_current;
  Eigen::VectorXd unknowns;           // full MNA vector, internal nodes included
  int iterations = 0;
  Homotopy strategy = Homotopy::None;

  double voltage(const Circuit& c, std::string_view node) const;
  double current(std::string_view source) const;
};

/// Solves the DC operating point with sources at their t = 0 values.
/// Throws ConvergenceError when Newton, gmin stepping and source stepping all fail.
OperatingPoint dc_operating_point(const Circuit& c, const SolverConfig& cfg = {});

/// Sweeps the primary source of `sweep` with warm-started continuation.
/// A secondary sweep, if present, is ignored here; see dc_sweep_family.
Waveform dc_sweep(const Circuit& c, const DcSweep& sweep, const SolverConfig& cfg = {});

/// One primary sweep per value of the secondary source.
std::vector<std::pair<double, Waveform>> dc_sweep_family(const Circuit& c, const DcSweep& sweep,
                                                         const SolverConfig& cfg = {});

/// Integrates from the t = 0 operating point (honouring .ic) to tran.stop.
Waveform transient(const Circuit& c, const Tran& tran, const SolverConfig& cfg = {});

/// dVout/dVin by central difference (+-1 mV) around `bias` on source `input`.
double small_signal_gain(const Circuit& c, std::string_view input, std::string_view output_node,
                         double bias, const SolverConfig& cfg = {});

/// Jacobian and residual of the DC system at `x` (zero vector if empty), for
/// inspection and testing. The first `node_unknowns` rows are KCL equations.
struct MnaLinearization {
  Eigen::MatrixXd jacobian;
  Eigen::VectorXd residual;
  int node_unknowns = 0;
};
MnaLinearization linearize(const Circuit& c, const Eigen::VectorXd& x = {}, const SolverConfig& cfg = {});

/// Values visited by a sweep: start, start + step, ... up to stop.
std::vector<double> sweep_values(const SweepSpec& s);

}  // namespace ofet
