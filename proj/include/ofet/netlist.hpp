#pragma once

// SPICE-like netlist dialect: parsing with subcircuit flattening, validation and
// a canonical serializer.
//
// Grammar (case-insensitive, first line is the title):
//   R<name> n+ n- value [wire=1]          C<name> n+ n- value
//   V<name> n+ n- [dc] value | pulse(v1 v2 td tr tf pw per) | sin(vo va f [td [theta]])
//   I<name> n+ n- [dc] value | pulse(...)
//   M<name> d g s model [w=] [l=] [strain= dir=par|perp] [dvth=] [mumult=]
//   X<name> nodes... subckt [param=value...]
//   .model name otft(p|n) key=value...    .subckt name ports... [param=default...] / .ends
//   .param name=value   .op   .dc src start stop step [src2 start2 stop2 step2]
//   .tran step stop [maxstep] [method=be|trap]   .ic v(node)=value
//   .mc count [seed=n] [vth|vth_p|vth_n|dvth=normal(mean,sigma)] [mu=lognormal(mu_log,sigma_log)]
//   .end
// Engineering suffixes f p n u m k meg g t; '*' comment lines; ';' inline comments;
// '+' continuation lines.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ofet/model.hpp"

namespace ofet {

struct Diagnostic {
  enum class Severity { Error, Warning };
  enum class Code {
    UnknownCard,
    ArityMismatch,
    UndefinedModel,
    UndefinedSubckt,
    DuplicateElement,
    MalformedNumber,
    UndefinedParam,
    BadParameter,
    UnbalancedSubckt,
    RecursiveSubckt,
    InvalidValue,
    FloatingNode,
    UnknownSource,
  };

  Severity severity = Severity::Error;
  Code code = Code::UnknownCard;
  int line = 0;
  int column = 0;
  std::string message;

  std::string str() const;
};

const char* to_string(Diagnostic::Code code);

/// Parse failure; carries every diagnostic found in the text.
class NetlistError : public Error {
 public:
  explicit NetlistError(std::vector<Diagnostic> diags);
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  std::vector<Diagnostic> diags_;
};

// ---------------------------------------------------------------------------
// Sources

struct PulseSpec {
  double v1 = 0.0, v2 = 0.0, delay = 0.0, rise = 0.0, fall = 0.0, width = 0.0, period = 0.0;
  bool operator==(const PulseSpec&) const = default;
};

struct SinSpec {
  double offset = 0.0, amplitude = 0.0, frequency = 0.0, delay = 0.0, damping = 0.0;
  bool operator==(const SinSpec&) const = default;
};

struct SourceSpec {
  std::variant<double, PulseSpec, SinSpec> shape = 0.0;

  double value_at(double t) const;
  /// Corner times of a pulse within [0, stop].
  std::vector<double> breakpoints(double stop) const;
  bool operator==(const SourceSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Elements

struct Resistor {
  int a = 0, b = 0;
  double r = 0.0;
  bool wire = false;  // interconnect: resistance scales with substrate strain
  bool operator==(const Resistor&) const = default;
};

struct Capacitor {
  int a = 0, b = 0;
  double c = 0.0;
  bool operator==(const Capacitor&) const = default;
};

struct VoltageSource {
  int pos = 0, neg = 0;
  SourceSpec spec;
  bool operator==(const VoltageSource&) const = default;
};

struct CurrentSource {
  int pos = 0, neg = 0;
  SourceSpec spec;
  bool operator==(const CurrentSource&) const = default;
};

struct OtftInstance {
  int d = 0, g = 0, s = 0;
  std::string model;
  std::optional<double> w, l;
  std::optional<StrainState> strain;
  double dvth = 0.0;
  double mu_mult = 1.0;
  bool operator==(const OtftInstance&) const = default;
};

struct Element {
  std::string name;
  int line = 0;  // source line, informational only
  std::variant<Resistor, Capacitor, VoltageSource, CurrentSource, OtftInstance> body;

  bool operator==(const Element& o) const { return name == o.name && body == o.body; }
};

// ---------------------------------------------------------------------------
// Analyses

struct DcOp {
  bool operator==(const DcOp&) const = default;
};

struct SweepSpec {
  std::string source;
  double start = 0.0, stop = 0.0, step = 0.0;
  bool operator==(const SweepSpec&) const = default;
};

struct DcSweep {
  SweepSpec primary;
  std::optional<SweepSpec> secondary;
  bool operator==(const DcSweep&) const = default;
};

enum class IntegrationMethod { BackwardEuler, Trapezoidal };

struct Tran {
  double step = 0.0, stop = 0.0;
  std::optional<double> max_step;
  IntegrationMethod method = IntegrationMethod::Trapezoidal;
  bool operator==(const Tran&) const = default;
};

struct McDistribution {
  enum class Kind { Normal, LogNormal };
  std::string parameter;  // vth, vth_p, vth_n, dvth, mu
  Kind kind = Kind::Normal;
  double mean = 0.0;
  double sigma = 0.0;
  bool operator==(const McDistribution&) const = default;
};

struct Mc {
  int count = 1;
  std::uint64_t seed = 0;
  std::vector<McDistribution> distributions;
  bool operator==(const Mc&) const = default;
};

using AnalysisDirective = std::variant<DcOp, DcSweep, Tran, Mc>;

// ---------------------------------------------------------------------------

/// Flattened circuit. Node 0 is ground ("0"); subcircuit nodes are named
/// "<instance>.<node>" and subcircuit elements "<letter>.<instance>.<name>".
struct Circuit {
  std::string title;
  std::vector<std::string> nodes{"0"};
  std::vector<Element> elements;
  std::map<std::string, OtftParams> models;
  std::vector<AnalysisDirective> analyses;
  std::map<std::string, double> params;
  std::vector<std::pair<int, double>> initial_conditions;

  bool operator==(const Circuit&) const = default;

  /// Node index or -1.
  int node(std::string_view name) const;
  /// Adds the node if missing.
  int add_node(const std::string& name);
  const Element* find(std::string_view name) const;
  Element* find(std::string_view name);

  /// Model card with instance overrides, parameter deltas and strain applied.
  OtftParams resolve(const OtftInstance& inst) const;
  std::size_t otft_count() const;
};

using ParamOverrides = std::map<std::string, double>;

/// Throws NetlistError with line-numbered diagnostics.
/// Overrides replace top-level .param values of the same name.
Circuit parse(std::string_view text, const ParamOverrides& overrides = {});

/// Errors and warnings; an empty list means the circuit is simulatable.
std::vector<Diagnostic> validate(const Circuit& c);
bool has_errors(const std::vector<Diagnostic>& diags);

/// Canonical flattened netlist; parse(serialize(c)) == c.
std::string serialize(const Circuit& c);

/// Writes `.model` card text for a parameter set.
std::string model_card(const std::string& name, const OtftParams& p);

/// Applies substrate strain to every transistor and, when requested, scales
/// interconnect resistors by (1 + eps)^2 (constant-volume conductor).
Circuit with_strain(const Circuit& c, const StrainState& s, bool scale_interconnect = false);

/// Replaces a source waveform by a DC value. Throws if the source is missing.
void set_source_dc(Circuit& c, std::string_view name, double value);

/// Shortest round-trip decimal form.
std::string format_number(double v);

/// Parses a value with engineering suffix ("4.7k", "10meg", "2u"); nullopt if malformed.
std::optional<double> parse_number(std::string_view token);

}  // namespace ofet
