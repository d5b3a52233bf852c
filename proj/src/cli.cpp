#include "ofet/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "ofet/analyses.hpp"
#include "ofet/extract.hpp"
#include "ofet/io.hpp"
#include "ofet/netlist.hpp"

namespace ofet::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Tables and staged artifacts

template <class T>
std::string cell(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "1" : "0";
  } else if constexpr (std::is_integral_v<T>) {
    return std::to_string(v);
  } else if constexpr (std::is_floating_point_v<T>) {
    return std::isnan(v) ? std::string("nan") : format_number(v);
  } else {
    return std::string(v);
  }
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  template <class... T>
  void row(const T&... cells) {
    rows.push_back({cell(cells)...});
  }

  std::string str() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
      os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return os.str();
  }
};

std::string safe_stem(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  if (s.empty() || s.front() == '.') s.insert(s.begin(), '_');
  return s;
}

class Artifacts {
 public:
  explicit Artifacts(const RunConfig& cfg) : cfg_(cfg) {}

  void add(const std::string& name, std::string bytes) {
    if (name != safe_stem(name)) throw Error("artifact name '" + name + "' is not a plain file name");
    for (const auto& [n, b] : files_)
      if (n == name) throw Error("artifact '" + name + "' written twice");
    files_.emplace_back(name, std::move(bytes));
  }

  void table(const std::string& stem, const Table& t) { add(stem + ".csv", t.str()); }

  void waveform(const std::string& stem, const Waveform& w) {
    const bool binary = cfg_.wants(Format::Binary);
    if (cfg_.wants(Format::Csv) || !binary) {
      std::ostringstream os;
      write_waveform_csv(os, w);
      add(stem + ".csv", os.str());
    }
    if (binary) {
      std::ostringstream os(std::ios::binary);
      write_waveform_binary(os, w);
      add(stem + ".ofwf", os.str());
    }
  }

  void json_file(const std::string& stem, const json& j) { add(stem + ".json", j.dump(2) + "\n"); }

  /// Writes every staged file, then the manifest.
  void commit(Manifest manifest, std::ostream& out) {
    fs::create_directories(cfg_.out_dir);
    for (const auto& [name, bytes] : files_) {
      write(name, bytes);
      manifest.outputs.push_back({name, sha256_hex(bytes)});
      out << (cfg_.out_dir / name).string() << '\n';
    }
    if (cfg_.wants(Format::Manifest)) {
      write("manifest.json", manifest.to_json().dump(2) + "\n");
      out << (cfg_.out_dir / "manifest.json").string() << '\n';
    }
  }

 private:
  void write(const std::string& name, const std::string& bytes) const {
    std::ofstream f(cfg_.out_dir / name, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw InputError("cannot write " + (cfg_.out_dir / name).string());
  }

  const RunConfig& cfg_;
  std::vector<std::pair<std::string, std::string>> files_;
};

// ---------------------------------------------------------------------------
// Shared helpers

struct Context {
  RunConfig cfg;
  std::map<std::string, std::string> solver_overrides;
  std::string command;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  void log(const std::string& msg) const {
    if (cfg.verbosity > 0) *err << msg << '\n';
  }

  /// Driver default with every --solver.<key> applied on top.
  SolverConfig solver(SolverConfig base = {}) const {
    for (const auto& [key, text] : solver_overrides) {
      if (key == "method") {
        if (text == "be") base.transient.method = IntegrationMethod::BackwardEuler;
        else if (text == "trap") base.transient.method = IntegrationMethod::Trapezoidal;
        else throw UsageError("--solver.method must be be or trap");
        continue;
      }
      if (key == "adaptive") {
        if (text != "0" && text != "1") throw UsageError("--solver.adaptive must be 0 or 1");
        base.transient.adaptive = text == "1";
        continue;
      }
      const auto v = parse_number(text);
      if (!v) throw UsageError("--solver." + key + ": malformed number '" + text + "'");
      if (key == "abstol") base.abstol = *v;
      else if (key == "reltol") base.reltol = *v;
      else if (key == "vntol") base.vntol = *v;
      else if (key == "gmin") base.gmin = *v;
      else if (key == "damping") base.damping = *v;
      else if (key == "max_newton_iters") base.max_newton_iters = static_cast<int>(*v);
      else if (key == "lte_tol") base.transient.lte_tol = *v;
      else if (key == "min_step") base.transient.min_step = *v;
      else if (key == "max_step") base.transient.max_step = *v;
    }
    try {
      base.validate();
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
    return base;
  }

  Manifest manifest() const {
    Manifest m;
    m.command = command;
    m.seed = cfg.seed;
    return m;
  }
};

const std::vector<std::string>& solver_keys() {
  static const std::vector<std::string> keys{"abstol",  "reltol",  "vntol",    "max_newton_iters",
                                             "gmin",    "damping", "method",   "lte_tol",
                                             "min_step", "max_step", "adaptive"};
  return keys;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ManifestEntry input_entry(const fs::path& p, const fs::path& root = fs::current_path()) {
  return manifest_entry(p, root);
}

json to_json(const OscillationResult& r, std::string_view column) {
  json j;
  j["column"] = column;
  j["frequency_hz"] = r.frequency ? json(*r.frequency) : json(nullptr);
  j["amplitude_v"] = r.amplitude;
  j["settled"] = r.settled;
  j["window_s"] = {r.window.first, r.window.second};
  j["crossings"] = r.crossings;
  return j;
}

// ---------------------------------------------------------------------------
// extract

struct DeviceSweeps {
  std::string id;
  std::vector<IvSweep> sweeps;
};

std::vector<DeviceSweeps> load_devices(const std::vector<fs::path>& files) {
  std::vector<DeviceSweeps> devices;
  std::map<std::string, std::size_t> index;
  for (const auto& f : files) {
    if (!fs::exists(f)) throw InputError("cannot open " + f.string());
    for (auto& s : read_measurements(f)) {
      auto [it, fresh] = index.emplace(s.device_id, devices.size());
      if (fresh) devices.push_back({s.device_id, {}});
      devices[it->second].sweeps.push_back(std::move(s));
    }
  }
  return devices;
}

int cmd_extract(const Context& ctx, std::size_t bins) {
  const auto devices = load_devices(ctx.cfg.inputs);
  std::vector<ExtractionReport> reports;
  std::vector<std::pair<std::string, std::string>> failures;
  for (const auto& d : devices) {
    const auto it = std::find_if(d.sweeps.begin(), d.sweeps.end(),
                                 [](const IvSweep& s) { return s.kind == SweepKind::Transfer; });
    if (it == d.sweeps.end()) {
      failures.emplace_back(d.id, "no transfer sweep");
      continue;
    }
    try {
      reports.push_back(extract_report(*it));
      ctx.log("extracted " + d.id);
    } catch (const ExtractionError& e) {
      failures.emplace_back(d.id, e.what());
    }
  }

  Artifacts art(ctx.cfg);
  Table rep{{"device_id", "mu_sat_cm2_Vs", "vth_V", "ss_V_dec", "on_off", "gm_max_per_width_S_m", "window_lo_V",
             "window_hi_V", "window_r2"},
            {}};
  for (const auto& r : reports)
    rep.row(r.device_id, r.mu_sat * 1e4, r.vth, r.ss, r.on_off, r.gm_max_per_width, r.fit_window.first,
            r.fit_window.second, r.diagnostics.window_r2);
  art.table("extract_reports", rep);

  if (!reports.empty()) {
    const auto summary = batch_statistics(reports, bins);
    Table sum{{"metric", "mean", "stddev", "device_count"}, {}};
    Table hist{{"metric", "bin_lo", "bin_hi", "count", "log_bins"}, {}};
    for (const auto& m : summary.metrics) {
      // Mobility is reported in cm^2/(V s) like the per-device table.
      const double unit = m.name == "mu_sat" ? 1e4 : 1.0;
      sum.row(m.name, m.mean * unit, m.stddev * unit, summary.device_count);
      for (std::size_t b = 0; b < m.histogram.counts.size(); ++b)
        hist.row(m.name, m.histogram.edges[b] * unit, m.histogram.edges[b + 1] * unit, m.histogram.counts[b],
                 m.histogram.log_bins);
    }
    art.table("extract_summary", sum);
    art.table("extract_histograms", hist);
  }
  if (!failures.empty()) {
    Table fail{{"device_id", "reason"}, {}};
    for (const auto& [id, why] : failures) {
      std::string reason = why;
      std::replace(reason.begin(), reason.end(), ',', ';');
      fail.row(id, reason);
    }
    art.table("extract_failures", fail);
  }

  Manifest m = ctx.manifest();
  for (const auto& f : ctx.cfg.inputs) m.inputs.push_back(input_entry(f));
  m.parameters["bins"] = bins;
  art.commit(std::move(m), *ctx.out);

  if (!failures.empty()) {
    *ctx.err << "extraction failed for " << failures.size() << " of " << devices.size() << " devices:\n";
    for (const auto& [id, why] : failures) *ctx.err << "  " << id << ": " << why << '\n';
    return int(ExitCode::Numerical);
  }
  return int(ExitCode::Success);
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string polarity = "p";
  double vth = std::numeric_limits<double>::quiet_NaN();
  std::string name;
  std::string device;
};

int cmd_fit(const Context& ctx, const FitArgs& args) {
  if (args.polarity != "p" && args.polarity != "n") throw UsageError("--polarity must be p or n");
  auto devices = load_devices(ctx.cfg.inputs);
  if (!args.device.empty()) {
    std::erase_if(devices, [&](const DeviceSweeps& d) { return d.id != args.device; });
    if (devices.empty()) throw InputError("no device '" + args.device + "' in the input files");
  }
  if (devices.empty()) throw InputError("no measurements in the input files");
  if (!args.name.empty() && devices.size() > 1) throw UsageError("--name needs a single device (use --device)");

  Artifacts art(ctx.cfg);
  Table rep{{"device_id", "model", "mu0_m2_Vs", "vth_V", "ss_V_dec", "lambda_1_V", "gamma", "rc_ohm", "rms_asinh",
             "iterations"},
            {}};
  for (const auto& d : devices) {
    const auto has = [&](SweepKind k) {
      return std::any_of(d.sweeps.begin(), d.sweeps.end(), [&](const IvSweep& s) { return s.kind == k; });
    };
    if (!has(SweepKind::Transfer) || !has(SweepKind::Output))
      throw InputError("device '" + d.id + "': fit needs both transfer and output sweeps, missing " +
                       (has(SweepKind::Transfer) ? "output" : "transfer"));
    FixedParams fixed;
    fixed.geom = d.sweeps.front().geom;
    fixed.cox = d.sweeps.front().cox;
    fixed.polarity = args.polarity == "p" ? Polarity::P : Polarity::N;
    if (!std::isnan(args.vth)) fixed.vth = args.vth;

    ctx.log("fitting " + d.id);
    const FitReport fit = fit_model(d.sweeps, fixed);
    const std::string model = args.name.empty() ? safe_stem(d.id) : args.name;
    std::ostringstream card;
    card << "* model fitted to device " << d.id << ", rms asinh residual " << format_number(fit.rms_residual)
         << "\n"
         << model_card(model, fit.params) << "\n.end\n";
    parse(card.str());  // the card must be includable as written
    art.add(safe_stem(d.id) + ".lib", card.str());
    const auto& p = fit.params;
    rep.row(d.id, model, p.mu0, p.vth, p.ss, p.lambda, p.gamma, p.rc, fit.rms_residual, fit.iterations);
  }
  art.table("fit_report", rep);

  Manifest m = ctx.manifest();
  for (const auto& f : ctx.cfg.inputs) m.inputs.push_back(input_entry(f));
  m.parameters["polarity"] = args.polarity;
  m.parameters["vth_fixed"] = std::isnan(args.vth) ? json(nullptr) : json(args.vth);
  art.commit(std::move(m), *ctx.out);
  return int(ExitCode::Success);
}

// ---------------------------------------------------------------------------
// sim

struct SimArgs {
  std::vector<std::string> params;
  std::string probe = "v(out)";
  double mc_min = -std::numeric_limits<double>::infinity();
  double mc_max = std::numeric_limits<double>::infinity();
};

Waveform operating_point_row(const Circuit& c, const OperatingPoint& op) {
  Waveform w;
  w.axis_name = "op";
  w.axis = {0.0};
  for (std::size_t n = 1; n < c.nodes.size(); ++n) {
    w.names.push_back("v(" + c.nodes[n] + ")");
    w.columns.push_back({op.node_voltage[n]});
  }
  for (const auto& [name, i] : op.source_current) {
    w.names.push_back("i(" + name + ")");
    w.columns.push_back({i});
  }
  return w;
}

int cmd_sim(const Context& ctx, const SimArgs& args) {
  if (ctx.cfg.inputs.size() != 1) throw UsageError("sim takes exactly one netlist");
  const fs::path path = ctx.cfg.inputs.front();
  ParamOverrides overrides;
  for (const auto& kv : args.params) {
    const auto eq = kv.find('=');
    const auto v = eq == std::string::npos ? std::nullopt : parse_number(kv.substr(eq + 1));
    if (!v) throw UsageError("--param expects name=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return char(std::tolower(ch)); });
    overrides[key] = *v;
  }

  const Circuit c = parse(slurp(path), overrides);
  const auto diags = validate(c);
  for (const auto& d : diags) *ctx.err << path.string() << ": " << d.str() << '\n';
  if (has_errors(diags)) return int(ExitCode::Input);
  if (c.analyses.empty()) throw InputError(path.string() + ": no analysis directives");

  const SolverConfig solver = ctx.solver();
  const std::string stem = safe_stem(path.stem().string());
  Artifacts art(ctx.cfg);
  Manifest m = ctx.manifest();
  std::uint64_t mc_seed = ctx.cfg.seed;

  int k = 0;
  for (const auto& directive : c.analyses) {
    const std::string base = stem + "_" + std::to_string(++k);
    if (std::holds_alternative<DcOp>(directive)) {
      ctx.log(base + ": .op");
      art.waveform(base + "_op", operating_point_row(c, dc_operating_point(c, solver)));
    } else if (const auto* sw = std::get_if<DcSweep>(&directive)) {
      ctx.log(base + ": .dc " + sw->primary.source);
      if (!sw->secondary) {
        art.waveform(base + "_dc", dc_sweep(c, *sw, solver));
      } else {
        int j = 0;
        for (const auto& [value, w] : dc_sweep_family(c, *sw, solver)) {
          (void)value;
          art.waveform(base + "_dc_" + std::to_string(++j), w);
        }
      }
    } else if (const auto* tr = std::get_if<Tran>(&directive)) {
      ctx.log(base + ": .tran");
      const Waveform w = transient(c, *tr, solver);
      art.waveform(base + "_tran", w);
      if (w.has(args.probe)) art.json_file(base + "_tran_oscillation", to_json(oscillation_frequency(w, args.probe), args.probe));
    } else if (const auto* mc = std::get_if<Mc>(&directive)) {
      ctx.log(base + ": .mc");
      const std::string probe = args.probe;
      if (probe.size() < 4 || probe.rfind("v(", 0) != 0 || probe.back() != ')')
        throw UsageError("--probe must name a node voltage v(node) for .mc");
      const std::string node = probe.substr(2, probe.size() - 3);
      if (c.node(node) < 0) throw InputError(path.string() + ": .mc probe node '" + node + "' does not exist");
      McSpec spec;
      spec.count = mc->count;
      spec.seed = ctx.cfg.seed_given ? ctx.cfg.seed : mc->seed;
      spec.distributions = mc->distributions;
      const double lo = args.mc_min, hi = args.mc_max;
      spec.predicate = [lo, hi](double v) { return v >= lo && v <= hi; };
      mc_seed = spec.seed;
      const auto r = monte_carlo(c, spec, [&](const Circuit& x) { return dc_operating_point(x, solver).voltage(x, node); });
      Table rows{{"replica", probe, "pass"}, {}};
      for (std::size_t i = 0; i < r.metric.size(); ++i) rows.row(i, r.metric[i], bool(r.pass[i]));
      art.table(base + "_mc", rows);
      Table samples{{"replica", "device", "dvth_V", "mu_mult"}, {}};
      for (std::size_t i = 0; i < r.samples.size(); ++i)
        for (const auto& s : r.samples[i]) samples.row(i, s.device, s.dvth, s.mu_mult);
      art.table(base + "_mc_samples", samples);
      art.json_file(base + "_mc_yield", json{{"count", spec.count}, {"seed", spec.seed}, {"yield", r.yield}});
    }
  }

  m.seed = mc_seed;
  m.inputs.push_back(input_entry(path));
  m.parameters["solver"] = to_json(solver);
  m.parameters["params"] = overrides;
  m.parameters["probe"] = args.probe;
  art.commit(std::move(m), *ctx.out);
  return int(ExitCode::Success);
}

// ---------------------------------------------------------------------------
// reproduce

struct Fixtures {
  fs::path dir;
  std::vector<ManifestEntry> used;

  Circuit load(const std::string& name) {
    const fs::path p = dir / name;
    const Circuit c = parse(slurp(p));
    used.push_back(manifest_entry(p, dir.parent_path()));
    return c;
  }
};

constexpr StrainState parallel(double eps) { return {eps, StrainOrientation::ParallelToChannelLength}; }

double param(const Circuit& c, const std::string& name) {
  const auto it = c.params.find(name);
  if (it == c.params.end()) throw InputError("fixture '" + c.title + "' lacks .param " + name);
  return it->second;
}

void fig4f(const Context& ctx, Fixtures& fx, Artifacts& art, json& params) {
  const Circuit c = fx.load("pseudo_e_inverter.cir");
  const double vdd = param(c, "vdd");
  const auto& sweep = std::get<DcSweep>(c.analyses.at(0));
  const std::vector<double> strains{0.0, 0.5, 1.0};
  Table curves{{"vin_V"}, {}}, metrics{{"strain", "peak_gain", "vm_V", "nmh_V", "nml_V", "swing_V"}, {}};
  std::vector<Waveform> ws;
  for (double eps : strains) {
    ctx.log("fig4f: strain " + format_number(eps));
    ws.push_back(dc_sweep(with_strain(c, parallel(eps)), sweep, ctx.solver()));
    const auto mm = vtc_metrics(ws.back(), vdd);
    metrics.row(eps, mm.peak_gain, mm.switching_threshold, mm.noise_margin_high, mm.noise_margin_low, mm.swing);
    curves.header.push_back("vout_strain_" + format_number(eps) + "_V");
  }
  for (std::size_t i = 0; i < ws[0].rows(); ++i) {
    std::vector<std::string> r{cell(ws[0].axis[i])};
    for (const auto& w : ws) r.push_back(cell(w.column("v(out)")[i]));
    curves.rows.push_back(std::move(r));
  }
  art.table("fig4f_vtc", curves);
  art.table("fig4f_metrics", metrics);
  params["strains"] = strains;
  params["vdd"] = vdd;
}

std::vector<VcoPoint> pseudo_e_vco(const Context& ctx, const Circuit& ro, const std::vector<double>& vdd) {
  OscillatorOptions opt;
  opt.tracking = {{"vss", -2.0}};
  opt.solver = ctx.solver(oscillator_solver());
  return vco_curve(ro, vdd, opt);
}

const std::vector<double> kPseudoVdd{3, 5, 10, 15, 20, 25, 30};

void fig4h(const Context& ctx, Fixtures& fx, Artifacts& art, json& params) {
  Table t{{"w1_w2", "vdd_V", "frequency_Hz", "amplitude_V"}, {}};
  for (int ratio : {20, 10}) {
    const Circuit ro = fx.load("pseudo_e_ro_r" + std::to_string(ratio) + ".cir");
    ctx.log("fig4h: W1/W2 = " + std::to_string(ratio));
    for (const auto& p : pseudo_e_vco(ctx, ro, kPseudoVdd)) t.row(ratio, p.vdd, *p.result.frequency, p.result.amplitude);
  }
  art.table("fig4h_vco", t);
  params["vdd"] = kPseudoVdd;
  params["vss_tracking"] = -2.0;
}

void supp9(const Context& ctx, Fixtures& fx, Artifacts& art, json& params) {
  const Circuit ro = fx.load("pseudo_e_ro_r20.cir");
  Table t{{"vdd_V", "frequency_Hz", "amplitude_V"}, {}};
  ctx.log("supp9: pseudo-E RO VCO");
  for (const auto& p : pseudo_e_vco(ctx, ro, kPseudoVdd)) t.row(p.vdd, *p.result.frequency, p.result.amplitude);
  art.table("supp9_vco", t);
  params["vdd"] = kPseudoVdd;
  params["vss_tracking"] = -2.0;
}

const std::vector<double> kComplementaryVdd{3, 5, 7};

Waveform complementary_vtc(const Context& ctx, const Circuit& c, double vdd, double eps) {
  Circuit x = with_strain(c, parallel(eps));
  set_source_dc(x, "vdd", vdd);
  return dc_sweep(x, DcSweep{{"vin", 0.0, vdd, vdd / 1000.0}, {}}, ctx.solver());
}

void fig5d(const Context& ctx, Fixtures& fx, Artifacts& art, json& params) {
  const Circuit c = fx.load("complementary_inverter.cir");
  const std::vector<double> strains{0.0, 0.25, 0.5};
  Table curves{{"strain", "vdd_V", "vin_V", "vout_V"}, {}};
  Table metrics{{"strain", "vdd_V", "peak_gain", "vm_V", "nmh_V", "nml_V", "swing_V"}, {}};
  for (double eps : strains)
    for (double vdd : kComplementaryVdd) {
      ctx.log("fig5d: strain " + format_number(eps) + ", VDD " + format_number(vdd));
      const Waveform w = complementary_vtc(ctx, c, vdd, eps);
      const auto& vout = w.column("v(out)");
      for (std::size_t i = 0; i < w.rows(); ++i) curves.row(eps, vdd, w.axis[i], vout[i]);
      const auto mm = vtc_metrics(w, vdd);
      metrics.row(eps, vdd, mm.peak_gain, mm.switching_threshold, mm.noise_margin_high, mm.noise_margin_low,
                  mm.swing);
    }
  art.table("fig5d_vtc", curves);
  art.table("fig5d_metrics", metrics);
  params["strains"] = strains;
  params["vdd"] = kComplementaryVdd;
}

void fig5e(const Context& ctx, Fixtures& fx, Artifacts& art, json& params) {
  const Circuit c = fx.load("complementary_inverter.cir");
  Table curves{{"vdd_V", "vin_V", "vout_V", "gain"}, {}};
  Table peaks{{"vdd_V", "peak_gain", "vm_V"}, {}};
  for (double vdd : kComplementaryVdd) {
    ctx.log("fig5e: VDD " + format_number(vdd));
    const Waveform w = complementary_vtc(ctx, c, vdd, 0.0);
    const auto g = vtc_gain(w);
    const auto& vout = w.column("v(out)");
    for (std::size_t i = 0; i < w.rows(); ++i) curves.row(vdd, w.axis[i], vout[i], g[i]);
    const auto mm = vtc_metrics(w, vdd);
    peaks.row(vdd, mm.peak_gain, mm.switching_threshold);
  }
  art.table("fig5e_gain", curves);
  art.table("fig5e_peak", peaks);
  params["vdd"] = kComplementaryVdd;
}

void fig5g(const Context& ctx, Fixtures& fx, Artifacts& art, json& params) {
  const Circuit ro = fx.load("complementary_ro.cir");
  const std::vector<double> vdd{10, 20, 30, 40, 50, 60}, strains{0.0, 0.25};
  OscillatorOptions opt;
  opt.solver = ctx.solver(oscillator_solver());
  Table t{{"strain", "vdd_V", "frequency_Hz", "amplitude_V"}, {}};
  for (double eps : strains) {
    ctx.log("fig5g: strain " + format_number(eps));
    for (const auto& p : vco_curve(with_strain(ro, parallel(eps), true), vdd, opt))
      t.row(eps, p.vdd, *p.result.frequency, p.result.amplitude);
  }
  art.table("fig5g_vco", t);
  params["vdd"] = vdd;
  params["strains"] = strains;
  params["scale_interconnect"] = true;
}

void fig5m(const Context& ctx, Fixtures& fx, Artifacts& art, json& params) {
  const Circuit neuron = fx.load("neuron.cir");
  const std::vector<double> currents_na{0, 9, 20, 50, 100, 200, 500};
  NeuronOptions opt;
  opt.solver = ctx.solver();
  Table t{{"iex_nA", "rate_Hz", "spikes", "isi_mean_s", "isi_stddev_s"}, {}};
  for (double ina : currents_na) {
    ctx.log("fig5m: Iex " + format_number(ina) + " nA");
    const auto p = neuron_response(neuron, ina * 1e-9, opt);
    t.row(ina, p.train.rate, p.train.times.size(), p.train.isi_mean, p.train.isi_stddev);
  }
  art.table("fig5m_fi", t);
  // Membrane traces for the three currents shown alongside the f-I curve.
  for (double ina : {9.0, 20.0, 50.0}) {
    Circuit x = neuron;
    set_source_dc(x, opt.input, ina * 1e-9);
    Tran tran;
    tran.stop = 1.0;
    tran.step = 1e-4;
    tran.max_step = 2e-3;
    const Waveform w = transient(x, tran, opt.solver);
    Waveform vm;
    vm.axis_name = w.axis_name;
    vm.axis = w.axis;
    vm.names = {opt.membrane};
    vm.columns = {w.column(opt.membrane)};
    art.waveform("fig5m_vm_" + format_number(ina) + "nA", vm);
  }
  params["iex_nA"] = currents_na;
}

void supp10(const Context& ctx, Fixtures& fx, Artifacts& art, json& params) {
  Table t{{"gate", "a", "b", "vout_V", "output"}, {}};
  LogicSpec spec;
  spec.inputs = {"va", "vb"};
  for (const std::string gate : {"nand", "nor"}) {
    ctx.log("supp10: " + gate);
    for (const auto& r : logic_truth_table(fx.load(gate + ".cir"), spec))
      t.row(gate, bool(r.inputs[0]), bool(r.inputs[1]), r.vout, r.output);
  }
  art.table("supp10_truth", t);
  params["vdd"] = spec.vdd;
  params["thresholds"] = {spec.low_fraction, spec.high_fraction};
}

using FigureDriver = void (*)(const Context&, Fixtures&, Artifacts&, json&);

const std::map<std::string, FigureDriver>& figure_drivers() {
  static const std::map<std::string, FigureDriver> drivers{
      {"fig4f", fig4f}, {"fig4h", fig4h}, {"fig5d", fig5d}, {"fig5e", fig5e},
      {"fig5g", fig5g}, {"fig5m", fig5m}, {"supp9", supp9}, {"supp10", supp10}};
  return drivers;
}

int cmd_reproduce(const Context& ctx, const std::string& figure, const fs::path& fixture_dir) {
  const auto& drivers = figure_drivers();
  const auto it = drivers.find(figure);
  if (it == drivers.end()) {
    std::string valid;
    for (const auto& id : figure_ids()) valid += (valid.empty() ? "" : ", ") + id;
    throw UsageError("unknown figure id '" + figure + "'; valid ids: " + valid);
  }
  Fixtures fx{fixture_dir, {}};
  Artifacts art(ctx.cfg);
  json params = json::object();
  it->second(ctx, fx, art, params);

  Manifest m = ctx.manifest();
  m.inputs = fx.used;
  m.parameters["figure"] = figure;
  m.parameters["settings"] = params;
  m.parameters["solver_overrides"] = ctx.solver_overrides;
  art.commit(std::move(m), *ctx.out);
  return int(ExitCode::Success);
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids{"fig4f", "fig4h", "fig5d", "fig5e", "fig5g", "fig5m", "supp9", "supp10"};
  return ids;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Organic thin-film transistor circuit toolkit: parameter extraction, model fitting, "
               "circuit simulation and figure reproduction.",
               "ofet"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  std::string out_dir = "ofet_out";
  std::vector<std::string> formats{"csv", "manifest"};

  app.add_option("--out,-o", out_dir, "Output directory (default $OFET_OUT, else ./ofet_out)")->envname("OFET_OUT");
  auto* seed = app.add_option("--seed", ctx.cfg.seed, "Random seed recorded in the manifest; overrides .mc seeds");
  app.add_option("--format", formats, "Comma-separated artifact formats: csv, binary, manifest")
      ->delimiter(',')
      ->check(CLI::IsMember({"csv", "binary", "manifest"}));
  app.add_flag("-v,--verbose", ctx.cfg.verbosity, "Progress messages on stderr (repeat for more)");
  for (const auto& key : solver_keys())
    app.add_option("--solver." + key, ctx.solver_overrides[key], "Solver override: " + key)->group("Solver");

  std::vector<std::string> files;
  std::size_t bins = 12;
  auto* extract = app.add_subcommand("extract", "Figures of merit per device from measurement CSVs");
  extract->add_option("files", files, "Measurement CSV files")->required();
  extract->add_option("--bins", bins, "Histogram bins in the batch summary")->check(CLI::PositiveNumber);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit a compact-model card per device");
  fit->add_option("files", files, "Measurement CSV files with transfer and output sweeps")->required();
  fit->add_option("--polarity", fit_args.polarity, "Carrier type, p or n")->check(CLI::IsMember({"p", "n"}));
  fit->add_option("--vth", fit_args.vth, "Hold the threshold voltage fixed at this value");
  fit->add_option("--name", fit_args.name, "Model name in the emitted card (single device only)");
  fit->add_option("--device", fit_args.device, "Fit only this device id");

  SimArgs sim_args;
  auto* sim = app.add_subcommand("sim", "Run every analysis directive of a netlist");
  sim->add_option("netlist", files, "Netlist file")->required();
  sim->add_option("--param", sim_args.params, "Override a top-level .param (name=value), repeatable");
  sim->add_option("--probe", sim_args.probe, "Column for oscillation and Monte Carlo metrics");
  sim->add_option("--mc-min", sim_args.mc_min, "Monte Carlo pass band lower bound on the probe");
  sim->add_option("--mc-max", sim_args.mc_max, "Monte Carlo pass band upper bound on the probe");

  std::string figure;
  std::string fixture_dir = OFET_FIXTURE_DIR;
  auto* reproduce = app.add_subcommand("reproduce", "Regenerate a figure-analogue data set from the bundled fixtures");
  std::string ids;
  for (const auto& id : figure_ids()) ids += (ids.empty() ? "" : ", ") + id;
  reproduce->add_option("figure", figure, "Figure id: " + ids)->required();
  reproduce->add_option("--fixtures", fixture_dir, "Fixture directory");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  if (!argv.empty()) argv.pop_back();  // program name
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? int(ExitCode::Success) : int(ExitCode::Usage);
  }

  for (auto it = ctx.solver_overrides.begin(); it != ctx.solver_overrides.end();)
    it = it->second.empty() ? ctx.solver_overrides.erase(it) : std::next(it);
  ctx.cfg.out_dir = out_dir;
  ctx.cfg.seed_given = seed->count() > 0;
  ctx.cfg.formats = 0;
  for (const auto& f : formats)
    ctx.cfg.formats |= unsigned(f == "csv" ? Format::Csv : f == "binary" ? Format::Binary : Format::Manifest);
  for (const auto& f : files) ctx.cfg.inputs.emplace_back(f);
  for (std::size_t i = 1; i < args.size(); ++i) ctx.command += (i > 1 ? " " : "") + args[i];

  try {
    ctx.solver();  // reject bad overrides before any work
    if (extract->parsed()) return cmd_extract(ctx, bins);
    if (fit->parsed()) return cmd_fit(ctx, fit_args);
    if (sim->parsed()) return cmd_sim(ctx, sim_args);
    return cmd_reproduce(ctx, figure, fixture_dir);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return int(ExitCode::Usage);
  } catch (const NetlistError& e) {
    for (const auto& d : e.diagnostics()) err << (files.empty() ? "" : files.front() + ": ") << d.str() << '\n';
    return int(ExitCode::Input);
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return int(ExitCode::Input);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return int(ExitCode::Input);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return int(ExitCode::Input);
  } catch (const std::exception& e) {
    // Convergence, extraction, fit and analysis failures.
    err << "error: " << e.what() << '\n';
    return int(ExitCode::Numerical);
  }
}

}  // namespace ofet::cli
