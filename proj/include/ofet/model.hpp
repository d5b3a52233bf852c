#pragma once

// Unified OTFT compact model: DC current with analytic derivatives, constant
// Meyer-like capacitances, dielectric stack capacitance and the strain transform.

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ofet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid numerical inputs (NaN voltages, negative strain, bad parameters).
class DomainError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m
inline constexpr double kLn10 = 2.302585092994045684;

// ---------------------------------------------------------------------------
// Dielectric stack

struct DielectricLayer {
  double k = 1.0;          // relative permittivity
  double thickness = 0.0;  // m
};

struct DielectricStack {
  std::vector<DielectricLayer> layers;
};

/// Series combination of all layers, eps0 / sum(t_i / k_i), in F/m^2.
double series_capacitance(const DielectricStack& stack);

// ---------------------------------------------------------------------------
// Device description

enum class Polarity { P, N };

struct DeviceGeometry {
  double W = 0.0;    // channel width, m
  double L = 0.0;    // channel length, m
  double LOV = 0.0;  // source/drain-gate overlap, m

  bool operator==(const DeviceGeometry&) const = default;
};

/// Compact-model card for one transistor. Voltages follow the device polarity:
/// a P-type device conducts for vgs < vth (vth typically slightly negative).
struct OtftParams {
  Polarity polarity = Polarity::P;
  double mu0 = 2.35e-5;    // m^2/(V s)
  double vth = 0.0;        // V
  double ss = 0.2;         // V/decade
  double lambda = 0.0;     // 1/V
  double gamma = 0.0;      // mobility power-law exponent
  double rc = 0.0;         // total contact resistance, ohm, for geom.W
  double cox = 3.5e-4;     // F/m^2
  DeviceGeometry geom{380e-6, 35e-6, 0.0};
  double smoothing = 3.0;  // triode/saturation interpolation order m

  bool operator==(const OtftParams&) const = default;

  /// Throws DomainError when an invariant is violated.
  void validate() const;
};

/// Drain current (into the drain terminal) and its partial derivatives.
template <typename Scalar>
struct DrainCurrent {
  Scalar id{};
  Scalar gm{};   // d id / d vgs
  Scalar gds{};  // d id / d vds
};

namespace detail {

// Forward-mode evaluation in the N-normalized frame, vds >= 0.
// The softplus width is (2 + gamma) * SS / ln10 so that the saturated
// subthreshold current, which scales as Vov^(2+gamma), has swing SS exactly.
template <typename Scalar>
DrainCurrent<Scalar> forward_current(const OtftParams& p, Scalar vgs, Scalar vds, Scalar vth) {
  using std::exp;
  using std::log1p;
  using std::pow;

  const Scalar gamma = Scalar(p.gamma);
  const Scalar m = Scalar(p.smoothing);
  const Scalar width = (Scalar(2) + gamma) * Scalar(p.ss) / Scalar(kLn10);
  const Scalar x = (vgs - vth) / width;

  Scalar vov, dvov;
  if (x > Scalar(0)) {
    vov = width * (x + log1p(exp(-x)));
    dvov = Scalar(1) / (Scalar(1) + exp(-x));
  } else {
    const Scalar ex = exp(x);
    vov = width * log1p(ex);
    dvov = ex / (Scalar(1) + ex);
  }

  DrainCurrent<Scalar> out;
  if (!(vov > Scalar(0)) || vds == Scalar(0)) {
    // Underflowed overdrive or zero bias: only the linear-regime slope survives.
    const Scalar k = Scalar(p.geom.W / p.geom.L * p.cox * p.mu0);
    const Scalar mu_rel = (vov > Scalar(0)) ? pow(vov, gamma) : Scalar(0);
    out.gds = k * mu_rel * vov;
    return out;
  }

  const Scalar mu = Scalar(p.mu0) * pow(vov, gamma);  // normalization voltage 1 V
  const Scalar dmu = (p.gamma == 0.0) ? Scalar(0) : gamma * mu / vov * dvov;

  // vde = vds / (1 + r^m)^(1/m), r = vds / vov, computed without overflow.
  const Scalar r = vds / vov;
  Scalar vde, dvde_dvds, dvde_dvov;
  if (r <= Scalar(1)) {
    const Scalar rm = pow(r, m);
    const Scalar base = Scalar(1) + rm;  // D^m
    const Scalar d = pow(base, Scalar(1) / m);
    vde = vds / d;
    dvde_dvds = Scalar(1) / (d * base);
    dvde_dvov = rm * r / (d * base);  // (r / D)^(m+1)
  } else {
    const Scalar rinv_m = pow(r, -m);
    const Scalar base = Scalar(1) + rinv_m;
    const Scalar s = pow(base, Scalar(-1) / m);  // vov / vde ratio inverse
    vde = vov * s;
    const Scalar t = s / base;  // base^(-(1+m)/m)
    dvde_dvds = rinv_m / r * t;
    dvde_dvov = t;
  }

  const Scalar q = (vov - vde / Scalar(2)) * vde;
  const Scalar dq_dvov = vde + (vov - vde) * dvde_dvov;
  const Scalar dq_dvds = (vov - vde) * dvde_dvds;

  const Scalar k = Scalar(p.geom.W / p.geom.L * p.cox);
  const Scalar clm = Scalar(1) + Scalar(p.lambda) * vds;

  out.id = k * mu * q * clm;
  out.gm = k * clm * (dmu * q + mu * dq_dvov * dvov);
  out.gds = k * mu * (dq_dvds * clm + q * Scalar(p.lambda));
  return out;
}

// N-normalized frame with source/drain exchange for negative vds.
template <typename Scalar>
DrainCurrent<Scalar> normalized_current(const OtftParams& p, Scalar vgs, Scalar vds, Scalar vth) {
  if (vds >= Scalar(0)) return forward_current(p, vgs, vds, vth);
  const auto rev = forward_current(p, vgs - vds, -vds, vth);
  DrainCurrent<Scalar> out;
  out.id = -rev.id;
  out.gm = -rev.gm;
  out.gds = rev.gm + rev.gds;
  return out;
}

}  // namespace detail

/// Evaluates the drain current and both small-signal conductances.
/// Contact resistance is not included (see terminal_current).
template <typename Scalar>
DrainCurrent<Scalar> evaluate(const OtftParams& p, Scalar vgs, Scalar vds) {
  using std::isnan;
  if (isnan(vgs) || isnan(vds)) throw DomainError("drain_current: NaN bias");
  if (p.polarity == Polarity::N) return detail::normalized_current(p, vgs, vds, Scalar(p.vth));
  auto r = detail::normalized_current(p, -vgs, -vds, Scalar(-p.vth));
  r.id = -r.id;
  return r;
}

inline double drain_current(const OtftParams& p, double vgs, double vds) {
  return evaluate<double>(p, vgs, vds).id;
}
inline double transconductance(const OtftParams& p, double vgs, double vds) {
  return evaluate<double>(p, vgs, vds).gm;
}
inline double output_conductance(const OtftParams& p, double vgs, double vds) {
  return evaluate<double>(p, vgs, vds).gds;
}

/// Terminal current including Rc/2 in series with source and drain.
/// Solves i = f(vgs - i Rc/2, vds - i Rc) by safeguarded Newton iteration.
double terminal_current(const OtftParams& p, double vgs, double vds);

struct Capacitances {
  double cgs = 0.0;
  double cgd = 0.0;
};

/// Bias-independent gate capacitances, Cox * W * (L/2 + LOV) each.
Capacitances device_capacitances(const OtftParams& p);

// ---------------------------------------------------------------------------
// Strain

enum class StrainOrientation { ParallelToChannelLength, PerpendicularToChannelLength };

struct StrainState {
  double epsilon = 0.0;
  StrainOrientation orientation = StrainOrientation::ParallelToChannelLength;

  bool operator==(const StrainState&) const = default;
};

/// Piecewise-linear table, held flat beyond both ends.
struct StrainTable {
  std::vector<std::pair<double, double>> points;

  double at(double x) const;
  bool operator==(const StrainTable&) const = default;
};

/// Measured strain response: substrate strain -> relative channel-length change
/// and mobility retention, for each stretch orientation.
struct StrainCalibration {
  int version = 1;
  StrainTable length_parallel;
  StrainTable length_perpendicular;
  StrainTable mobility_parallel;
  StrainTable mobility_perpendicular;

  bool operator==(const StrainCalibration&) const = default;

  /// The bundled default calibration (identical to data/strain_calibration.json).
  static const StrainCalibration& builtin();
  static StrainCalibration from_json(std::string_view text);
  static StrainCalibration load(const std::filesystem::path& path);
};

/// Geometry and mobility under substrate strain. The stretch axis takes the
/// same-orientation length entry; the orthogonal axis takes the other entry.
OtftParams apply_strain(const OtftParams& p, const StrainState& s,
                        const StrainCalibration& cal = StrainCalibration::builtin());

std::string to_string(Polarity p);

}  // namespace ofet
