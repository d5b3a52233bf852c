#include "ofet/model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ofet {

double series_capacitance(const DielectricStack& stack) {
  if (stack.layers.empty()) throw DomainError("dielectric stack has no layers");
  double sum = 0.0;
  for (const auto& layer : stack.layers) {
    if (!(layer.k > 0.0) || !(layer.thickness > 0.0))
      throw DomainError("dielectric layer needs k > 0 and thickness > 0");
    sum += layer.thickness / layer.k;
  }
  return kVacuumPermittivity / sum;
}

void OtftParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("invalid OTFT parameters: ") + what);
  };
  require(mu0 > 0.0, "mu0 must be > 0");
  require(ss > 0.0, "ss must be > 0");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(rc >= 0.0, "rc must be >= 0");
  require(cox > 0.0, "cox must be > 0");
  require(gamma >= 0.0, "gamma must be >= 0");
  require(std::isfinite(vth), "vth must be finite");
  require(geom.W > 0.0 && geom.L > 0.0, "W and L must be > 0");
  require(geom.LOV >= 0.0, "LOV must be >= 0");
  require(smoothing >= 1.0, "smoothing order must be >= 1");
}

double terminal_current(const OtftParams& p, double vgs, double vds) {
  if (std::isnan(vgs) || std::isnan(vds)) throw DomainError("terminal_current: NaN bias");
  if (p.rc == 0.0) return drain_current(p, vgs, vds);
  if (vds == 0.0) return 0.0;

  const double rs = 0.5 * p.rc;
  const double rc = p.rc;
  // Root has the sign of vds and |i| <= |vds| / Rc.
  double lo = std::min(0.0, vds / rc);
  double hi = std::max(0.0, vds / rc);
  double i = std::clamp(drain_current(p, vgs, vds), lo, hi);

  for (int iter = 0; iter < 200; ++iter) {
    const auto d = evaluate<double>(p, vgs - i * rs, vds - i * rc);
    const double g = i - d.id;
    if (g > 0.0) hi = i; else lo = i;
    const double dg = 1.0 + d.gm * rs + d.gds * rc;
    double next = i - g / dg;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - i) <= 1e-15 * std::abs(i) + 1e-30) return next;
    i = next;
    if (hi - lo <= 1e-15 * std::max(std::abs(lo), std::abs(hi))) break;
  }
  return i;
}

Capacitances device_capacitances(const OtftParams& p) {
  const double c = p.cox * p.geom.W * (0.5 * p.geom.L + p.geom.LOV);
  return {c, c};
}

// ---------------------------------------------------------------------------

double StrainTable::at(double x) const {
  if (points.empty()) return 0.0;
  if (x <= points.front().first) return points.front().second;
  if (x >= points.back().first) return points.back().second;
  auto it = std::upper_bound(points.begin(), points.end(), x,
                             [](double v, const auto& pt) { return v < pt.first; });
  const auto& [x1, y1] = *it;
  const auto& [x0, y0] = *(it - 1);
  return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
}

namespace {

// Keep in sync with data/strain_calibration.json.
constexpr std::string_view kBuiltinStrainJson = R"({
  "schema": "ofet-strain-calibration",
  "version": 1,
  "channel_length_change": {
    "parallel": [[0.0, 0.0], [1.0, 0.42]],
    "perpendicular": [[0.0, 0.0], [1.0, -0.32]]
  },
  "mobility_retention": {
    "parallel": [[0.0, 1.0], [0.5, 0.67]],
    "perpendicular": [[0.0, 1.0], [0.5, 1.0]]
  }
})";

StrainTable table_from(const nlohmann::json& arr, const char* name) {
  StrainTable t;
  for (const auto& pt : arr) {
    if (!pt.is_array() || pt.size() != 2)
      throw DomainError(std::string("strain table '") + name + "': points must be [strain, value]");
    t.points.emplace_back(pt[0].get<double>(), pt[1].get<double>());
  }
  if (t.points.empty()) throw DomainError(std::string("strain table '") + name + "' is empty");
  for (std::size_t i = 1; i < t.points.size(); ++i)
    if (!(t.points[i].first > t.points[i - 1].first))
      throw DomainError(std::string("strain table '") + name + "' must be strictly increasing");
  if (t.points.front().first < 0.0)
    throw DomainError(std::string("strain table '") + name + "' has negative strain");
  return t;
}

}  // namespace

StrainCalibration StrainCalibration::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("strain calibration: ") + e.what());
  }
  try {
    StrainCalibration cal;
    cal.version = j.at("version").get<int>();
    if (cal.version != 1) throw DomainError("strain calibration: unsupported version");
    const auto& len = j.at("channel_length_change");
    const auto& mob = j.at("mobility_retention");
    cal.length_parallel = table_from(len.at("parallel"), "channel_length_change.parallel");
    cal.length_perpendicular = table_from(len.at("perpendicular"), "channel_length_change.perpendicular");
    cal.mobility_parallel = table_from(mob.at("parallel"), "mobility_retention.parallel");
    cal.mobility_perpendicular = table_from(mob.at("perpendicular"), "mobility_retention.perpendicular");
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("strain calibration: ") + e.what());
  }
}

StrainCalibration StrainCalibration::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open strain calibration " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

const StrainCalibration& StrainCalibration::builtin() {
  static const StrainCalibration cal = from_json(kBuiltinStrainJson);
  return cal;
}

OtftParams apply_strain(const OtftParams& p, const StrainState& s, const StrainCalibration& cal) {
  if (!(s.epsilon >= 0.0)) throw DomainError("apply_strain: strain must be >= 0");
  const bool parallel = s.orientation == StrainOrientation::ParallelToChannelLength;
  const double dl = parallel ? cal.length_parallel.at(s.epsilon) : cal.length_perpendicular.at(s.epsilon);
  const double dw = parallel ? cal.length_perpendicular.at(s.epsilon) : cal.length_parallel.at(s.epsilon);
  const double retention =
      parallel ? cal.mobility_parallel.at(s.epsilon) : cal.mobility_perpendicular.at(s.epsilon);

  OtftParams out = p;
  out.geom.L = p.geom.L * (1.0 + dl);
  out.geom.LOV = p.geom.LOV * (1.0 + dl);
  out.geom.W = p.geom.W * (1.0 + dw);
  out.mu0 = p.mu0 * retention;
  // Contact resistance is fixed per unit width.
  out.rc = p.rc * (p.geom.W / out.geom.W);
  return out;
}

std::string to_string(Polarity p) { return p == Polarity::P ? "p" : "n"; }

}  // namespace ofet
