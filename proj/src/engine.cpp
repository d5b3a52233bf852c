#include "ofet/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ofet {

void SolverConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("invalid solver config: ") + what);
  };
  require(abstol > 0.0, "abstol must be > 0");
  require(reltol > 0.0, "reltol must be > 0");
  require(vntol > 0.0, "vntol must be > 0");
  require(max_newton_iters > 0, "max_newton_iters must be > 0");
  require(gmin > 0.0, "gmin must be > 0");
  require(damping > 0.0, "damping must be > 0");
  require(transient.lte_tol > 0.0, "lte_tol must be > 0");
  require(transient.min_step > 0.0, "min_step must be > 0");
  require(transient.max_step >= 0.0, "max_step must be >= 0");
}

bool Waveform::has(std::string_view name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

const std::vector<double>& Waveform::column(std::string_view name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error("waveform has no column '" + std::string(name) + "'");
  return columns[std::size_t(it - names.begin())];
}

double OperatingPoint::voltage(const Circuit& c, std::string_view node) const {
  const int idx = c.node(node);
  if (idx < 0) throw Error("no node named '" + std::string(node) + "'");
  return node_voltage[std::size_t(idx)];
}

double OperatingPoint::current(std::string_view source) const {
  for (const auto& [name, i] : source_current)
    if (name == source) return i;
  throw Error("no voltage source named '" + std::string(source) + "'");
}

std::vector<double> sweep_values(const SweepSpec& s) {
  if (s.stop == s.start) return {s.start};
  if (!(s.step > 0.0) || s.stop < s.start) throw DomainError("sweep needs step > 0 and stop >= start");
  const auto n = static_cast<std::size_t>(std::floor((s.stop - s.start) / s.step + 1e-9));
  std::vector<double> out;
  out.reserve(n + 2);
  for (std::size_t k = 0; k <= n; ++k) out.push_back(s.start + double(k) * s.step);
  if (s.stop - out.back() > 1e-9 * s.step) out.push_back(s.stop);
  return out;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kGround = -1;

struct TwoTerminal {
  int a = kGround, b = kGround;
  double value = 0.0;
};

struct OtftDevice {
  int d = kGround, g = kGround, s = kGround;
  int di = kGround, si = kGround;  // intrinsic drain/source (same as d/s without Rc)
  OtftParams params;
  double g_contact = 0.0;          // conductance of each Rc/2 half
};

struct Source {
  std::string name;
  int p = kGround, n = kGround;
  int branch = -1;  // voltage sources only
  SourceSpec spec;
};

struct Clamp {
  int node = kGround;
  int branch = -1;
  double value = 0.0;
};

struct CapState {
  double v = 0.0;
  double i = 0.0;
};

struct Dynamics {
  IntegrationMethod method = IntegrationMethod::BackwardEuler;
  double h = 0.0;
  const std::vector<CapState>* history = nullptr;
};

struct Stimulus {
  double time = 0.0;
  double source_scale = 1.0;
  double shunt = 0.0;  // node-to-ground conductance used by gmin stepping
  bool clamps = false;
  const Dynamics* dynamics = nullptr;
};

class Mna {
 public:
  Mna(const Circuit& c, const SolverConfig& cfg) : gmin_(cfg.gmin), circuit_nodes_(int(c.nodes.size())) {
    int next = circuit_nodes_ - 1;
    auto ix = [](int node) { return node - 1; };  // ground (0) maps to -1

    for (const auto& e : c.elements) {
      std::visit(
          [&](const auto& b) {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, Resistor>) {
              resistors_.push_back({ix(b.a), ix(b.b), 1.0 / b.r});
            } else if constexpr (std::is_same_v<T, Capacitor>) {
              caps_.push_back({ix(b.a), ix(b.b), b.c});
            } else if constexpr (std::is_same_v<T, VoltageSource>) {
              vsources_.push_back({e.name, ix(b.pos), ix(b.neg), -1, b.spec});
            } else if constexpr (std::is_same_v<T, CurrentSource>) {
              isources_.push_back({e.name, ix(b.pos), ix(b.neg), -1, b.spec});
            } else {
              OtftDevice dev;
              dev.params = c.resolve(b);
              dev.params.validate();
              dev.d = ix(b.d);
              dev.g = ix(b.g);
              dev.s = ix(b.s);
              if (dev.params.rc > 0.0) {
                dev.di = next++;
                dev.si = next++;
                dev.g_contact = 2.0 / dev.params.rc;
              } else {
                dev.di = dev.d;
                dev.si = dev.s;
              }
              const auto cap = device_capacitances(dev.params);
              caps_.push_back({dev.g, dev.si, cap.cgs});
              caps_.push_back({dev.g, dev.di, cap.cgd});
              otfts_.push_back(std::move(dev));
            }
          },
          e.body);
    }
    node_unknowns_ = next;
    for (auto& v : vsources_) v.branch = next++;
    for (const auto& [node, value] : c.initial_conditions) clamps_.push_back({ix(node), next++, value});
    size_ = next;
  }

  int size() const { return size_; }
  int node_unknowns() const { return node_unknowns_; }
  int circuit_nodes() const { return circuit_nodes_; }
  const std::vector<Source>& vsources() const { return vsources_; }
  const std::vector<TwoTerminal>& caps() const { return caps_; }

  bool set_dc(std::string_view name, double value) {
    for (auto* list : {&vsources_, &isources_})
      for (auto& s : *list)
        if (s.name == name) {
          s.spec.shape = value;
          return true;
        }
    return false;
  }

  std::vector<double> breakpoints(double stop) const {
    std::vector<double> out;
    for (const auto* list : {&vsources_, &isources_})
      for (const auto& s : *list) {
        auto b = s.spec.breakpoints(stop);
        out.insert(out.end(), b.begin(), b.end());
      }
    out.push_back(stop);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  static double at(const VectorXd& x, int i) { return i == kGround ? 0.0 : x[i]; }

  double cap_current(std::size_t k, const VectorXd& x, const Dynamics& dyn) const {
    const auto& cp = caps_[k];
    const auto& hist = (*dyn.history)[k];
    const double v = at(x, cp.a) - at(x, cp.b);
    if (dyn.method == IntegrationMethod::BackwardEuler) return cp.value / dyn.h * (v - hist.v);
    return 2.0 * cp.value / dyn.h * (v - hist.v) - hist.i;
  }

  /// F(x) = currents leaving each node (KCL rows) and branch equations.
  /// `scale` receives the sum of |current| magnitudes per KCL row.
  void assemble(const VectorXd& x, const Stimulus& st, VectorXd& F, MatrixXd& J, VectorXd& scale) const {
    F.setZero(size_);
    J.setZero(size_, size_);
    scale.setZero(size_);

    auto conductance = [&](int a, int b, double g) {
      const double i = g * (at(x, a) - at(x, b));
      if (a != kGround) {
        F[a] += i;
        scale[a] += std::abs(i);
        J(a, a) += g;
        if (b != kGround) J(a, b) -= g;
      }
      if (b != kGround) {
        F[b] -= i;
        scale[b] += std::abs(i);
        J(b, b) += g;
        if (a != kGround) J(b, a) -= g;
      }
    };

    for (const auto& r : resistors_) conductance(r.a, r.b, r.value);

    for (const auto& dev : otfts_) {
      if (dev.g_contact > 0.0) {
        conductance(dev.d, dev.di, dev.g_contact);
        conductance(dev.si, dev.s, dev.g_contact);
      }
      conductance(dev.di, dev.si, gmin_);
      conductance(dev.g, dev.si, gmin_);
      const double vs = at(x, dev.si);
      const auto ch = evaluate<double>(dev.params, at(x, dev.g) - vs, at(x, dev.di) - vs);
      const double gsum = ch.gm + ch.gds;
      if (dev.di != kGround) {
        F[dev.di] += ch.id;
        scale[dev.di] += std::abs(ch.id);
        if (dev.g != kGround) J(dev.di, dev.g) += ch.gm;
        J(dev.di, dev.di) += ch.gds;
        if (dev.si != kGround) J(dev.di, dev.si) -= gsum;
      }
      if (dev.si != kGround) {
        F[dev.si] -= ch.id;
        scale[dev.si] += std::abs(ch.id);
        if (dev.g != kGround) J(dev.si, dev.g) -= ch.gm;
        if (dev.di != kGround) J(dev.si, dev.di) -= ch.gds;
        J(dev.si, dev.si) += gsum;
      }
    }

    if (st.dynamics) {
      const auto& dyn = *st.dynamics;
      const double factor = dyn.method == IntegrationMethod::BackwardEuler ? 1.0 : 2.0;
      for (std::size_t k = 0; k < caps_.size(); ++k) {
        const auto& cp = caps_[k];
        const double geq = factor * cp.value / dyn.h;
        const double i = cap_current(k, x, dyn);
        if (cp.a != kGround) {
          F[cp.a] += i;
          scale[cp.a] += std::abs(i);
          J(cp.a, cp.a) += geq;
          if (cp.b != kGround) J(cp.a, cp.b) -= geq;
        }
        if (cp.b != kGround) {
          F[cp.b] -= i;
          scale[cp.b] += std::abs(i);
          J(cp.b, cp.b) += geq;
          if (cp.a != kGround) J(cp.b, cp.a) -= geq;
        }
      }
    }

    for (const auto& s : isources_) {
      const double i = st.source_scale * s.spec.value_at(st.time);
      if (s.p != kGround) {
        F[s.p] += i;
        scale[s.p] += std::abs(i);
      }
      if (s.n != kGround) {
        F[s.n] -= i;
        scale[s.n] += std::abs(i);
      }
    }

    auto branch = [&](int p, int n, int k, double value) {
      const double i = x[k];
      if (p != kGround) {
        F[p] += i;
        scale[p] += std::abs(i);
        J(p, k) += 1.0;
        J(k, p) += 1.0;
      }
      if (n != kGround) {
        F[n] -= i;
        scale[n] += std::abs(i);
        J(n, k) -= 1.0;
        J(k, n) -= 1.0;
      }
      F[k] = at(x, p) - at(x, n) - value;
      scale[k] = std::abs(value);
    };

    for (const auto& s : vsources_) branch(s.p, s.n, s.branch, st.source_scale * s.spec.value_at(st.time));

    for (const auto& cl : clamps_) {
      if (st.clamps) {
        branch(cl.node, kGround, cl.branch, st.source_scale * cl.value);
      } else {
        F[cl.branch] = x[cl.branch];
        J(cl.branch, cl.branch) = 1.0;
      }
    }

    if (st.shunt > 0.0)
      for (int i = 0; i < node_unknowns_; ++i) {
        F[i] += st.shunt * x[i];
        J(i, i) += st.shunt;
      }
  }

 private:
  double gmin_;
  int circuit_nodes_;
  int node_unknowns_ = 0;
  int size_ = 0;
  std::vector<TwoTerminal> resistors_;
  std::vector<TwoTerminal> caps_;
  std::vector<OtftDevice> otfts_;
  std::vector<Source> vsources_;
  std::vector<Source> isources_;
  std::vector<Clamp> clamps_;
};

struct NewtonOutcome {
  bool converged = false;
  int iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
};

/// Damped Newton from `x`. When `free_first_step` is set the first update is
/// not clamped, which places supply rails exactly when starting from zero.
NewtonOutcome newton(const Mna& mna, VectorXd& x, const Stimulus& st, const SolverConfig& cfg,
                     bool free_first_step = false) {
  const int n = mna.size();
  const int nv = mna.node_unknowns();
  VectorXd F, scale, dx;
  MatrixXd J;
  NewtonOutcome out;
  double last_dv = std::numeric_limits<double>::infinity();

  for (int it = 0; it <= cfg.max_newton_iters; ++it) {
    mna.assemble(x, st, F, J, scale);
    bool residual_ok = true;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const bool kcl = i < nv;
      const double tol = kcl ? cfg.abstol + cfg.reltol * scale[i] : cfg.vntol + cfg.reltol * scale[i];
      if (!(std::abs(F[i]) <= tol)) residual_ok = false;
      if (kcl) worst = std::max(worst, std::abs(F[i]));
    }
    out.residual = worst;
    out.iterations = it;
    if (residual_ok && last_dv < cfg.vntol) {
      out.converged = true;
      return out;
    }
    if (it == cfg.max_newton_iters) break;

    dx = J.partialPivLu().solve(-F);
    if (!dx.allFinite()) return out;
    const bool clamp = !(free_first_step && it == 0);
    last_dv = 0.0;
    // Branch currents are left unclamped; node updates decide convergence.
    for (int i = 0; i < nv; ++i) {
      if (clamp) dx[i] = std::clamp(dx[i], -cfg.damping, cfg.damping);
      last_dv = std::max(last_dv, std::abs(dx[i]));
    }
    x += dx;
  }
  return out;
}

struct DcSolution {
  VectorXd x;
  int iterations = 0;
  Homotopy strategy = Homotopy::None;
};

/// Newton from the guess (or from zero), then gmin stepping, then source stepping.
DcSolution solve_dc(const Mna& mna, Stimulus st, const SolverConfig& cfg, const VectorXd* guess,
                    const std::string& where) {
  DcSolution sol;
  double last_residual = 0.0;

  {
    VectorXd x = guess ? *guess : VectorXd::Zero(mna.size());
    auto r = newton(mna, x, st, cfg, guess == nullptr);
    if (r.converged) return {x, r.iterations, Homotopy::None};
    last_residual = r.residual;
    sol.iterations += r.iterations;
  }

  {
    VectorXd x = VectorXd::Zero(mna.size());
    bool ok = true;
    bool first = true;
    for (double shunt = 1e-3; ok; shunt /= 10.0) {
      Stimulus s = st;
      s.shunt = shunt;
      auto r = newton(mna, x, s, cfg, first);
      first = false;
      sol.iterations += r.iterations;
      ok = r.converged;
      last_residual = r.residual;
      if (shunt <= cfg.gmin * (1.0 + 1e-9)) break;
    }
    if (ok) {
      auto r = newton(mna, x, st, cfg);
      sol.iterations += r.iterations;
      if (r.converged) return {x, sol.iterations, Homotopy::GminStepping};
      last_residual = r.residual;
    }
  }

  {
    VectorXd x = VectorXd::Zero(mna.size());
    bool ok = true;
    for (int k = 1; k <= 10 && ok; ++k) {
      Stimulus s = st;
      s.source_scale = st.source_scale * k / 10.0;
      auto r = newton(mna, x, s, cfg, k == 1);
      sol.iterations += r.iterations;
      ok = r.converged;
      last_residual = r.residual;
    }
    if (ok) return {x, sol.iterations, Homotopy::SourceStepping};
  }

  std::ostringstream msg;
  msg << "DC solution failed" << where << " after Newton, gmin stepping and source stepping; last KCL residual "
      << last_residual << " A";
  throw ConvergenceError(msg.str(), last_residual);
}

OperatingPoint make_operating_point(const Circuit& c, const Mna& mna, const DcSolution& sol) {
  OperatingPoint op;
  op.unknowns = sol.x;
  op.iterations = sol.iterations;
  op.strategy = sol.strategy;
  op.node_voltage.assign(c.nodes.size(), 0.0);
  for (int i = 1; i < mna.circuit_nodes(); ++i) op.node_voltage[std::size_t(i)] = sol.x[i - 1];
  for (const auto& v : mna.vsources()) op.source_current.emplace_back(v.name, sol.x[v.branch]);
  return op;
}

Waveform empty_waveform(const Circuit& c, const Mna& mna, std::string axis_name) {
  Waveform w;
  w.axis_name = std::move(axis_name);
  for (std::size_t i = 1; i < c.nodes.size(); ++i) w.names.push_back("v(" + c.nodes[i] + ")");
  for (const auto& v : mna.vsources()) w.names.push_back("i(" + v.name + ")");
  w.columns.resize(w.names.size());
  return w;
}

void append_row(Waveform& w, const Mna& mna, double axis, const VectorXd& x) {
  w.axis.push_back(axis);
  std::size_t col = 0;
  for (int i = 1; i < mna.circuit_nodes(); ++i) w.columns[col++].push_back(x[i - 1]);
  for (const auto& v : mna.vsources()) w.columns[col++].push_back(x[v.branch]);
}

std::string at_value(const std::string& name, double v) {
  std::ostringstream os;
  os << " at " << name << " = " << v;
  return os.str();
}

Mna build(const Circuit& c, const SolverConfig& cfg) {
  cfg.validate();
  return Mna(c, cfg);
}

}  // namespace

OperatingPoint dc_operating_point(const Circuit& c, const SolverConfig& cfg) {
  const Mna mna = build(c, cfg);
  Stimulus st;
  st.clamps = true;
  return make_operating_point(c, mna, solve_dc(mna, st, cfg, nullptr, ""));
}

Waveform dc_sweep(const Circuit& c, const DcSweep& sweep, const SolverConfig& cfg) {
  Mna mna = build(c, cfg);
  const auto values = sweep_values(sweep.primary);
  if (!mna.set_dc(sweep.primary.source, values.front()))
    throw Error("no source named '" + sweep.primary.source + "' to sweep");

  Waveform w = empty_waveform(c, mna, sweep.primary.source);
  Stimulus st;
  st.clamps = true;
  std::optional<VectorXd> x;
  for (double v : values) {
    mna.set_dc(sweep.primary.source, v);
    const std::string where = at_value(sweep.primary.source, v);
    DcSolution sol;
    if (x) {
      VectorXd guess = *x;
      auto r = newton(mna, guess, st, cfg);
      if (r.converged) sol.x = guess;
      else sol = solve_dc(mna, st, cfg, nullptr, where);
    } else {
      sol = solve_dc(mna, st, cfg, nullptr, where);
    }
    x = sol.x;
    append_row(w, mna, v, *x);
  }
  return w;
}

std::vector<std::pair<double, Waveform>> dc_sweep_family(const Circuit& c, const DcSweep& sweep,
                                                         const SolverConfig& cfg) {
  std::vector<std::pair<double, Waveform>> out;
  if (!sweep.secondary) {
    out.emplace_back(0.0, dc_sweep(c, sweep, cfg));
    return out;
  }
  for (double v2 : sweep_values(*sweep.secondary)) {
    Circuit copy = c;
    set_source_dc(copy, sweep.secondary->source, v2);
    out.emplace_back(v2, dc_sweep(copy, DcSweep{sweep.primary, std::nullopt}, cfg));
  }
  return out;
}

Waveform transient(const Circuit& c, const Tran& tran, const SolverConfig& cfg) {
  if (!(tran.step > 0.0) || !(tran.stop > 0.0)) throw DomainError("transient needs step > 0 and stop > 0");
  const Mna mna = build(c, cfg);
  const auto& opt = cfg.transient;
  const IntegrationMethod method = opt.method.value_or(tran.method);

  double max_step = tran.stop / 50.0;
  if (tran.max_step) max_step = std::min(max_step, *tran.max_step);
  if (opt.max_step > 0.0) max_step = std::min(max_step, opt.max_step);
  const double h0 = std::min({tran.step, tran.stop / 1000.0, max_step});

  struct State {
    VectorXd x;
    std::vector<CapState> caps;
  };

  Stimulus st0;
  st0.clamps = true;
  State state;
  state.x = solve_dc(mna, st0, cfg, nullptr, " at t = 0").x;
  state.caps.resize(mna.caps().size());
  for (std::size_t k = 0; k < mna.caps().size(); ++k) {
    const auto& cp = mna.caps()[k];
    state.caps[k].v = Mna::at(state.x, cp.a) - Mna::at(state.x, cp.b);
  }

  auto advance = [&](const State& from, double t_new, double h, IntegrationMethod m, State& out) {
    Dynamics dyn{m, h, &from.caps};
    Stimulus st;
    st.time = t_new;
    st.dynamics = &dyn;
    out.x = from.x;
    if (!newton(mna, out.x, st, cfg).converged) return false;
    out.caps.resize(from.caps.size());
    for (std::size_t k = 0; k < from.caps.size(); ++k) {
      const auto& cp = mna.caps()[k];
      out.caps[k].v = Mna::at(out.x, cp.a) - Mna::at(out.x, cp.b);
      out.caps[k].i = mna.cap_current(k, out.x, dyn);
    }
    return true;
  };

  auto underflow = [&](double t, double h) {
    std::ostringstream msg;
    msg << "transient step underflow at t = " << t << " s (h = " << h << " s)";
    throw ConvergenceError(msg.str(), 0.0);
  };

  Waveform w = empty_waveform(c, mna, "time");
  append_row(w, mna, 0.0, state.x);

  const auto breakpoints = mna.breakpoints(tran.stop);
  std::size_t next_bp = 0;
  double t = 0.0;
  double h = opt.adaptive ? h0 : tran.step;
  bool restart = true;  // backward Euler on the first step and after breakpoints
  const int nv = mna.node_unknowns();

  while (t < tran.stop) {
    while (next_bp < breakpoints.size() && breakpoints[next_bp] <= t * (1.0 + 1e-12) + 1e-300) ++next_bp;
    const double bp = next_bp < breakpoints.size() ? breakpoints[next_bp] : tran.stop;
    double hh = opt.adaptive ? std::min(h, max_step) : tran.step;
    bool hits_bp = false;
    if (t + hh >= bp * (1.0 - 1e-12)) {
      hh = bp - t;
      hits_bp = true;
    }
    const IntegrationMethod m = restart ? IntegrationMethod::BackwardEuler : method;

    if (!opt.adaptive) {
      State next;
      if (!advance(state, t + hh, hh, m, next)) {
        std::ostringstream msg;
        msg << "transient Newton failed at t = " << t + hh << " s with fixed step";
        throw ConvergenceError(msg.str(), 0.0);
      }
      state = std::move(next);
      t = hits_bp ? bp : t + hh;
      append_row(w, mna, t, state.x);
      restart = hits_bp;
      continue;
    }

    State full, half, twice;
    const bool ok = advance(state, t + hh, hh, m, full) && advance(state, t + 0.5 * hh, 0.5 * hh, m, half) &&
                    advance(half, t + hh, 0.5 * hh, m, twice);
    if (!ok) {
      h = 0.25 * hh;
      if (h < opt.min_step) underflow(t, h);
      continue;
    }

    const int order = m == IntegrationMethod::BackwardEuler ? 1 : 2;
    const double denom = double((1 << order) - 1);
    double ratio = 0.0;
    for (int i = 0; i < nv; ++i) {
      const double err = std::abs(full.x[i] - twice.x[i]) / denom;
      ratio = std::max(ratio, err / (opt.lte_tol * std::max(std::abs(twice.x[i]), 1.0)));
    }
    const double exponent = -1.0 / (order + 1);
    if (ratio > 1.0) {
      h = hh * std::max(0.2, 0.9 * std::pow(ratio, exponent));
      if (h < opt.min_step) underflow(t, h);
      continue;
    }

    append_row(w, mna, t + 0.5 * hh, half.x);
    state = std::move(twice);
    t = hits_bp ? bp : t + hh;
    append_row(w, mna, t, state.x);
    const double grow = ratio > 0.0 ? std::clamp(0.9 * std::pow(ratio, exponent), 0.2, 2.0) : 2.0;
    h = hh * grow;
    restart = hits_bp;
  }
  return w;
}

double small_signal_gain(const Circuit& c, std::string_view input, std::string_view output_node, double bias,
                         const SolverConfig& cfg) {
  Mna mna = build(c, cfg);
  const int out_node = c.node(output_node);
  if (out_node < 0) throw Error("no node named '" + std::string(output_node) + "'");
  if (!mna.set_dc(input, bias)) throw Error("no source named '" + std::string(input) + "'");
  Stimulus st;
  st.clamps = true;
  const std::string name(input);
  const VectorXd x0 = solve_dc(mna, st, cfg, nullptr, at_value(name, bias)).x;

  constexpr double kDelta = 1e-3;
  auto output_at = [&](double v) {
    mna.set_dc(input, v);
    VectorXd x = x0;
    if (!newton(mna, x, st, cfg).converged) x = solve_dc(mna, st, cfg, nullptr, at_value(name, v)).x;
    return out_node == 0 ? 0.0 : x[out_node - 1];
  };
  return (output_at(bias + kDelta) - output_at(bias - kDelta)) / (2.0 * kDelta);
}

MnaLinearization linearize(const Circuit& c, const Eigen::VectorXd& x, const SolverConfig& cfg) {
  const Mna mna = build(c, cfg);
  const VectorXd at = x.size() == 0 ? VectorXd::Zero(mna.size()) : x;
  if (at.size() != mna.size()) throw DomainError("linearize: unknown vector has the wrong size");
  MnaLinearization out;
  VectorXd scale;
  Stimulus st;
  st.clamps = true;
  mna.assemble(at, st, out.residual, out.jacobian, scale);
  out.node_unknowns = mna.node_unknowns();
  return out;
}

}  // namespace ofet
