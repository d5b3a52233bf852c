#include "ofet/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

namespace ofet {

// ---------------------------------------------------------------------------
// Diagnostics

const char* to_string(Diagnostic::Code code) {
  using C = Diagnostic::Code;
  switch (code) {
    case C::UnknownCard: return "unknown-card";
    case C::ArityMismatch: return "arity-mismatch";
    case C::UndefinedModel: return "undefined-model";
    case C::UndefinedSubckt: return "undefined-subckt";
    case C::DuplicateElement: return "duplicate-element";
    case C::MalformedNumber: return "malformed-number";
    case C::UndefinedParam: return "undefined-param";
    case C::BadParameter: return "bad-parameter";
    case C::UnbalancedSubckt: return "unbalanced-subckt";
    case C::RecursiveSubckt: return "recursive-subckt";
    case C::InvalidValue: return "invalid-value";
    case C::FloatingNode: return "floating-node";
    case C::UnknownSource: return "unknown-source";
  }
  return "unknown";
}

std::string Diagnostic::str() const {
  std::ostringstream os;
  os << "line " << line << ":" << column << ": "
     << (severity == Severity::Error ? "error" : "warning") << " [" << to_string(code) << "] "
     << message;
  return os.str();
}

namespace {

std::string join_diagnostics(const std::vector<Diagnostic>& diags) {
  std::string s = "netlist has errors";
  for (const auto& d : diags) s += "\n  " + d.str();
  return s;
}

}  // namespace

NetlistError::NetlistError(std::vector<Diagnostic> diags)
    : Error(join_diagnostics(diags)), diags_(std::move(diags)) {}

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(),
                     [](const Diagnostic& d) { return d.severity == Diagnostic::Severity::Error; });
}

// ---------------------------------------------------------------------------
// Numbers

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_number(std::string_view tok) {
  if (tok.empty()) return std::nullopt;
  if (tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty() || !(std::isdigit(static_cast<unsigned char>(tok.front())) || tok.front() == '-' ||
                       tok.front() == '.'))
    return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || !std::isfinite(v)) return std::nullopt;
  std::string suffix;
  for (const char* p = res.ptr; p != tok.data() + tok.size(); ++p) {
    if (!std::isalpha(static_cast<unsigned char>(*p))) return std::nullopt;
    suffix.push_back(char(std::tolower(static_cast<unsigned char>(*p))));
  }
  if (suffix.empty()) return v;
  if (suffix.rfind("meg", 0) == 0) return v * 1e6;
  if (suffix.rfind("mil", 0) == 0) return v * 25.4e-6;
  switch (suffix.front()) {
    case 't': return v * 1e12;
    case 'g': return v * 1e9;
    case 'k': return v * 1e3;
    case 'm': return v * 1e-3;
    case 'u': return v * 1e-6;
    case 'n': return v * 1e-9;
    case 'p': return v * 1e-12;
    case 'f': return v * 1e-15;
    default: return v;  // bare unit such as "v" or "ohm"
  }
}

// ---------------------------------------------------------------------------
// Sources

double SourceSpec::value_at(double t) const {
  if (const auto* dc = std::get_if<double>(&shape)) return *dc;
  if (const auto* p = std::get_if<PulseSpec>(&shape)) {
    if (t <= p->delay) return p->v1;
    double tt = t - p->delay;
    if (p->period > 0.0) tt = std::fmod(tt, p->period);
    if (tt < p->rise) return p->v1 + (p->v2 - p->v1) * tt / p->rise;
    if (tt < p->rise + p->width) return p->v2;
    if (tt < p->rise + p->width + p->fall) return p->v2 + (p->v1 - p->v2) * (tt - p->rise - p->width) / p->fall;
    return p->v1;
  }
  const auto& s = std::get<SinSpec>(shape);
  if (t < s.delay) return s.offset;
  const double dt = t - s.delay;
  return s.offset + s.amplitude * std::exp(-s.damping * dt) * std::sin(2.0 * M_PI * s.frequency * dt);
}

std::vector<double> SourceSpec::breakpoints(double stop) const {
  std::vector<double> out;
  const auto* p = std::get_if<PulseSpec>(&shape);
  if (!p) return out;
  const double corners[] = {0.0, p->rise, p->rise + p->width, p->rise + p->width + p->fall};
  for (int k = 0;; ++k) {
    const double base = p->delay + k * p->period;
    if (base > stop) break;
    for (double c : corners)
      if (base + c > 0.0 && base + c <= stop) out.push_back(base + c);
    if (!(p->period > 0.0)) break;
    if (k > 100000) break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Circuit helpers

namespace {

// Names are stored lower-case; lookups accept any case.
bool same_name(std::string_view stored, std::string_view query) {
  return stored.size() == query.size() &&
         std::equal(stored.begin(), stored.end(), query.begin(), [](char a, char b) {
           return a == char(std::tolower(static_cast<unsigned char>(b)));
         });
}

}  // namespace

int Circuit::node(std::string_view name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (same_name(nodes[i], name)) return int(i);
  return -1;
}

int Circuit::add_node(const std::string& name) {
  const int idx = node(name);
  if (idx >= 0) return idx;
  nodes.push_back(name);
  return int(nodes.size() - 1);
}

const Element* Circuit::find(std::string_view name) const {
  for (const auto& e : elements)
    if (same_name(e.name, name)) return &e;
  return nullptr;
}

Element* Circuit::find(std::string_view name) {
  for (auto& e : elements)
    if (same_name(e.name, name)) return &e;
  return nullptr;
}

OtftParams Circuit::resolve(const OtftInstance& inst) const {
  auto it = models.find(inst.model);
  if (it == models.end()) throw Error("undefined model '" + inst.model + "'");
  OtftParams p = it->second;
  if (inst.w) {
    // Contact resistance is per unit width.
    p.rc = p.rc * (p.geom.W / *inst.w);
    p.geom.W = *inst.w;
  }
  if (inst.l) p.geom.L = *inst.l;
  p.vth += inst.dvth;
  p.mu0 *= inst.mu_mult;
  if (inst.strain) p = apply_strain(p, *inst.strain);
  return p;
}

std::size_t Circuit::otft_count() const {
  return std::size_t(std::count_if(elements.begin(), elements.end(), [](const Element& e) {
    return std::holds_alternative<OtftInstance>(e.body);
  }));
}

// ---------------------------------------------------------------------------
// Lexing

namespace {

struct Token {
  std::string text;
  int line = 0;
  int column = 0;
};

struct Card {
  std::vector<Token> tokens;
  int line = 0;
  const Token& operator[](std::size_t i) const { return tokens[i]; }
  std::size_t size() const { return tokens.size(); }
};

std::string lower(std::string s) {
  for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<Token> tokenize(const std::string& text, int line) {
  std::vector<Token> raw;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == ',') {
      ++i;
      continue;
    }
    if (c == '=') {
      raw.push_back({"=", line, int(i) + 1});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size()) {
      const char d = text[j];
      if (std::isspace(static_cast<unsigned char>(d)) || d == '(' || d == ')' || d == ',' || d == '=') break;
      ++j;
    }
    raw.push_back({lower(text.substr(i, j - i)), line, int(i) + 1});
    i = j;
  }
  // Merge "key = value" into "key=value".
  std::vector<Token> out;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (raw[k].text == "=" && !out.empty() && k + 1 < raw.size()) {
      out.back().text += "=" + raw[k + 1].text;
      ++k;
    } else {
      out.push_back(raw[k]);
    }
  }
  return out;
}

std::vector<Card> split_cards(std::string_view text, std::string& title) {
  std::vector<Card> cards;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      auto end = line.find_last_not_of(" \t");
      title = end == std::string::npos ? "" : line.substr(0, end + 1);
      continue;
    }
    if (auto semi = line.find(';'); semi != std::string::npos) line.erase(semi);
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    if (line[start] == '*') continue;
    if (line[start] == '+') {
      std::string rest = line;
      rest[start] = ' ';
      auto toks = tokenize(rest, number);
      if (cards.empty()) {
        cards.push_back({std::move(toks), number});
      } else {
        auto& prev = cards.back().tokens;
        // A continuation may split "key=" from its value.
        for (auto& t : toks) {
          if (!prev.empty() && prev.back().text.back() == '=') prev.back().text += t.text;
          else prev.push_back(std::move(t));
        }
      }
      continue;
    }
    cards.push_back({tokenize(line, number), number});
  }
  return cards;
}

// ---------------------------------------------------------------------------
// Parser

struct SubcktDef {
  std::string name;
  std::vector<std::string> ports;
  std::vector<std::pair<std::string, Token>> defaults;
  std::vector<Card> body;
  int line = 0;
};

using ParamScope = std::map<std::string, double>;

struct Instance {
  std::string path;  // "" at top level, "x1" / "x1.x2" inside subcircuits
  std::map<std::string, std::string> ports;
  ParamScope params;
  std::vector<std::string> stack;
};

class Parser {
 public:
  explicit Parser(const ParamOverrides& overrides) : overrides_(overrides) {}

  Circuit run(std::string_view text) {
    std::vector<Card> cards = split_cards(text, circuit_.title);
    std::vector<Card> top;
    std::vector<Card> model_cards;
    SubcktDef* open = nullptr;

    for (auto& card : cards) {
      if (card.tokens.empty()) continue;
      const std::string& head = card[0].text;
      if (head == ".end") break;
      if (head == ".subckt") {
        if (open) {
          error(Diagnostic::Code::UnbalancedSubckt, card[0], "nested .subckt definitions are not supported");
          continue;
        }
        if (card.size() < 2) {
          error(Diagnostic::Code::ArityMismatch, card[0], ".subckt needs a name");
          continue;
        }
        SubcktDef def;
        def.name = card[1].text;
        def.line = card.line;
        for (std::size_t i = 2; i < card.size(); ++i) {
          const auto& t = card[i].text;
          if (t == "params:") continue;
          if (auto eq = t.find('='); eq != std::string::npos) {
            Token v = card[i];
            v.text = t.substr(eq + 1);
            def.defaults.emplace_back(t.substr(0, eq), v);
          } else {
            def.ports.push_back(t);
          }
        }
        if (subckts_.count(def.name))
          error(Diagnostic::Code::DuplicateElement, card[1], "subcircuit '" + def.name + "' redefined");
        open = &(subckts_[def.name] = std::move(def));
        continue;
      }
      if (head == ".ends") {
        if (!open) error(Diagnostic::Code::UnbalancedSubckt, card[0], ".ends without .subckt");
        open = nullptr;
        continue;
      }
      if (head == ".model") {
        model_cards.push_back(card);
        continue;
      }
      if (open) open->body.push_back(card);
      else top.push_back(card);
    }
    if (open)
      diags_.push_back({Diagnostic::Severity::Error, Diagnostic::Code::UnbalancedSubckt, open->line, 1,
                        "subcircuit '" + open->name + "' is missing .ends"});

    // Top-level parameters first so models and elements can reference them.
    for (const auto& card : top)
      if (card[0].text == ".param") parse_param_card(card, globals_, true);
    for (const auto& [k, v] : overrides_) globals_[k] = v;
    circuit_.params = globals_;

    for (const auto& card : model_cards) parse_model(card);

    Instance root;
    root.params = globals_;
    for (const auto& card : top) {
      const std::string& head = card[0].text;
      if (head == ".param") continue;
      if (head[0] == '.') parse_control(card);
      else parse_element(card, root);
    }

    for (const auto& e : circuit_.elements) {
      if (const auto* m = std::get_if<OtftInstance>(&e.body); m && !circuit_.models.count(m->model))
        diags_.push_back({Diagnostic::Severity::Error, Diagnostic::Code::UndefinedModel, e.line, 1,
                          "element '" + e.name + "' references undefined model '" + m->model + "'"});
    }
    for (const auto& [node_name, tok] : pending_ic_) {
      const int idx = circuit_.node(node_name);
      if (idx < 0) error(Diagnostic::Code::BadParameter, tok.first, ".ic references unknown node '" + node_name + "'");
      else circuit_.initial_conditions.emplace_back(idx, tok.second);
    }

    if (has_errors(diags_)) throw NetlistError(diags_);
    return std::move(circuit_);
  }

 private:
  void error(Diagnostic::Code code, const Token& at, std::string msg) {
    diags_.push_back({Diagnostic::Severity::Error, code, at.line, at.column, std::move(msg)});
  }

  std::optional<double> value(const Token& t, const ParamScope& scope, std::string_view text) {
    if (auto v = parse_number(text)) return v;
    std::string name(text);
    if (name.size() >= 2 && name.front() == '{' && name.back() == '}') name = name.substr(1, name.size() - 2);
    bool negate = false;
    if (!name.empty() && name.front() == '-') {
      negate = true;
      name.erase(0, 1);
    }
    if (auto it = scope.find(name); it != scope.end()) return negate ? -it->second : it->second;
    const char c = text.empty() ? ' ' : text.front();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '+' ||
        (c == '-' && text.size() > 1 && (std::isdigit(static_cast<unsigned char>(text[1])) || text[1] == '.')))
      error(Diagnostic::Code::MalformedNumber, t, "malformed number '" + std::string(text) + "'");
    else
      error(Diagnostic::Code::UndefinedParam, t, "undefined parameter '" + name + "'");
    return std::nullopt;
  }

  std::optional<double> value(const Token& t, const ParamScope& scope) { return value(t, scope, t.text); }

  static bool split_kv(const std::string& text, std::string& key, std::string& val) {
    auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) return false;
    key = text.substr(0, eq);
    val = text.substr(eq + 1);
    return true;
  }

  void parse_param_card(const Card& card, ParamScope& scope, bool top_level) {
    for (std::size_t i = 1; i < card.size(); ++i) {
      std::string k, v;
      if (!split_kv(card[i].text, k, v)) {
        error(Diagnostic::Code::BadParameter, card[i], ".param expects name=value");
        continue;
      }
      if (top_level && overrides_.count(k)) {
        scope[k] = overrides_.at(k);
        continue;
      }
      if (auto x = value(card[i], scope, v)) scope[k] = *x;
    }
  }

  void parse_model(const Card& card) {
    if (card.size() < 4) {
      error(Diagnostic::Code::ArityMismatch, card[0], ".model needs a name, type and polarity");
      return;
    }
    const std::string name = card[1].text;
    std::size_t i = 2;
    std::string type = card[i].text;
    if (type != "otft") {
      error(Diagnostic::Code::BadParameter, card[i], "unsupported model type '" + type + "'");
      return;
    }
    ++i;
    OtftParams p;
    if (card[i].text == "p" || card[i].text == "n") {
      p.polarity = card[i].text == "p" ? Polarity::P : Polarity::N;
      ++i;
    } else {
      error(Diagnostic::Code::BadParameter, card[i], "model '" + name + "' needs polarity p or n");
      return;
    }
    for (; i < card.size(); ++i) {
      std::string k, v;
      if (!split_kv(card[i].text, k, v)) {
        error(Diagnostic::Code::BadParameter, card[i], "expected key=value in .model");
        continue;
      }
      auto x = value(card[i], globals_, v);
      if (!x) continue;
      if (k == "mu0" || k == "mu") p.mu0 = *x;
      else if (k == "vth" || k == "vt") p.vth = *x;
      else if (k == "ss") p.ss = *x;
      else if (k == "lambda") p.lambda = *x;
      else if (k == "gamma") p.gamma = *x;
      else if (k == "rc") p.rc = *x;
      else if (k == "cox") p.cox = *x;
      else if (k == "w") p.geom.W = *x;
      else if (k == "l") p.geom.L = *x;
      else if (k == "lov") p.geom.LOV = *x;
      else if (k == "m") p.smoothing = *x;
      else error(Diagnostic::Code::BadParameter, card[i], "unknown model parameter '" + k + "'");
    }
    if (circuit_.models.count(name))
      error(Diagnostic::Code::DuplicateElement, card[1], "model '" + name + "' redefined");
    circuit_.models[name] = p;
  }

  std::string map_node(const std::string& n, const Instance& inst) {
    if (n == "0" || n == "gnd") return "0";
    if (auto it = inst.ports.find(n); it != inst.ports.end()) return it->second;
    return inst.path.empty() ? n : inst.path + "." + n;
  }

  int node_index(const Token& t, const Instance& inst) { return circuit_.add_node(map_node(t.text, inst)); }

  std::string element_name(const std::string& local, const Instance& inst) {
    if (inst.path.empty()) return local;
    return std::string(1, local[0]) + "." + inst.path + "." + local;
  }

  bool add_element(Element e, const Token& at) {
    if (!names_.insert(e.name).second) {
      error(Diagnostic::Code::DuplicateElement, at, "duplicate element name '" + e.name + "'");
      return false;
    }
    circuit_.elements.push_back(std::move(e));
    return true;
  }

  bool require_arity(const Card& card, std::size_t n, const char* what) {
    if (card.size() < n) {
      error(Diagnostic::Code::ArityMismatch, card[0],
            std::string(what) + " '" + card[0].text + "' expects at least " + std::to_string(n - 1) + " fields");
      return false;
    }
    return true;
  }

  std::optional<SourceSpec> parse_source(const Card& card, std::size_t i, const ParamScope& scope) {
    SourceSpec spec;
    if (i >= card.size()) {
      error(Diagnostic::Code::ArityMismatch, card[0], "source '" + card[0].text + "' has no value");
      return std::nullopt;
    }
    if (card[i].text == "dc") {
      ++i;
      if (i >= card.size()) {
        error(Diagnostic::Code::ArityMismatch, card[0], "dc needs a value");
        return std::nullopt;
      }
    }
    const std::string& kind = card[i].text;
    if (kind == "pulse" || kind == "sin") {
      std::vector<double> args;
      for (std::size_t k = i + 1; k < card.size(); ++k) {
        auto v = value(card[k], scope);
        if (!v) return std::nullopt;
        args.push_back(*v);
      }
      if (kind == "pulse") {
        if (args.size() < 2 || args.size() > 7) {
          error(Diagnostic::Code::ArityMismatch, card[i], "pulse expects 2 to 7 values");
          return std::nullopt;
        }
        args.resize(7, 0.0);
        spec.shape = PulseSpec{args[0], args[1], args[2], args[3], args[4], args[5], args[6]};
      } else {
        if (args.size() < 3 || args.size() > 5) {
          error(Diagnostic::Code::ArityMismatch, card[i], "sin expects 3 to 5 values");
          return std::nullopt;
        }
        args.resize(5, 0.0);
        spec.shape = SinSpec{args[0], args[1], args[2], args[3], args[4]};
      }
      return spec;
    }
    auto v = value(card[i], scope);
    if (!v) return std::nullopt;
    if (i + 1 < card.size()) {
      error(Diagnostic::Code::ArityMismatch, card[i + 1], "unexpected field '" + card[i + 1].text + "'");
      return std::nullopt;
    }
    spec.shape = *v;
    return spec;
  }

  void parse_element(const Card& card, const Instance& inst) {
    const std::string& head = card[0].text;
    const Token& at = card[0];
    Element e;
    e.name = element_name(head, inst);
    e.line = card.line;

    switch (head[0]) {
      case 'r':
      case 'c': {
        if (!require_arity(card, 4, head[0] == 'r' ? "resistor" : "capacitor")) return;
        auto v = value(card[3], inst.params);
        if (!v) return;
        bool wire = false;
        for (std::size_t i = 4; i < card.size(); ++i) {
          std::string k, val;
          if (head[0] == 'r' && (card[i].text == "wire" || (split_kv(card[i].text, k, val) && k == "wire"))) {
            wire = card[i].text == "wire" || parse_number(val).value_or(0.0) != 0.0;
          } else {
            error(Diagnostic::Code::ArityMismatch, card[i], "unexpected field '" + card[i].text + "'");
            return;
          }
        }
        const int a = node_index(card[1], inst), b = node_index(card[2], inst);
        if (head[0] == 'r') e.body = Resistor{a, b, *v, wire};
        else e.body = Capacitor{a, b, *v};
        add_element(std::move(e), at);
        return;
      }
      case 'v':
      case 'i': {
        if (!require_arity(card, 4, "source")) return;
        auto spec = parse_source(card, 3, inst.params);
        if (!spec) return;
        const int p = node_index(card[1], inst), n = node_index(card[2], inst);
        if (head[0] == 'v') e.body = VoltageSource{p, n, *spec};
        else e.body = CurrentSource{p, n, *spec};
        add_element(std::move(e), at);
        return;
      }
      case 'm': {
        if (!require_arity(card, 5, "transistor")) return;
        OtftInstance m;
        m.model = card[4].text;
        std::optional<double> strain;
        StrainOrientation dir = StrainOrientation::ParallelToChannelLength;
        for (std::size_t i = 5; i < card.size(); ++i) {
          std::string k, val;
          if (!split_kv(card[i].text, k, val)) {
            error(Diagnostic::Code::ArityMismatch, card[i], "unexpected field '" + card[i].text + "'");
            return;
          }
          if (k == "dir") {
            if (val == "par") dir = StrainOrientation::ParallelToChannelLength;
            else if (val == "perp") dir = StrainOrientation::PerpendicularToChannelLength;
            else error(Diagnostic::Code::BadParameter, card[i], "dir must be par or perp");
            continue;
          }
          auto x = value(card[i], inst.params, val);
          if (!x) return;
          if (k == "w") m.w = *x;
          else if (k == "l") m.l = *x;
          else if (k == "strain") strain = *x;
          else if (k == "dvth") m.dvth = *x;
          else if (k == "mumult") m.mu_mult = *x;
          else error(Diagnostic::Code::BadParameter, card[i], "unknown instance parameter '" + k + "'");
        }
        if (strain) m.strain = StrainState{*strain, dir};
        m.d = node_index(card[1], inst);
        m.g = node_index(card[2], inst);
        m.s = node_index(card[3], inst);
        e.body = std::move(m);
        add_element(std::move(e), at);
        return;
      }
      case 'x':
        instantiate(card, inst);
        return;
      default:
        error(Diagnostic::Code::UnknownCard, at, "unknown element card '" + head + "'");
    }
  }

  void instantiate(const Card& card, const Instance& parent) {
    std::vector<const Token*> positional;
    std::vector<const Token*> assigns;
    for (std::size_t i = 1; i < card.size(); ++i)
      (card[i].text.find('=') != std::string::npos ? assigns : positional).push_back(&card[i]);
    if (positional.empty()) {
      error(Diagnostic::Code::ArityMismatch, card[0], "instance '" + card[0].text + "' needs a subcircuit name");
      return;
    }
    const Token& sub_tok = *positional.back();
    positional.pop_back();
    auto it = subckts_.find(sub_tok.text);
    if (it == subckts_.end()) {
      error(Diagnostic::Code::UndefinedSubckt, sub_tok, "undefined subcircuit '" + sub_tok.text + "'");
      return;
    }
    const SubcktDef& def = it->second;
    if (positional.size() != def.ports.size()) {
      error(Diagnostic::Code::ArityMismatch, card[0],
            "instance '" + card[0].text + "' connects " + std::to_string(positional.size()) + " nodes, '" +
                def.name + "' has " + std::to_string(def.ports.size()) + " ports");
      return;
    }
    if (std::find(parent.stack.begin(), parent.stack.end(), def.name) != parent.stack.end()) {
      error(Diagnostic::Code::RecursiveSubckt, sub_tok, "recursive instantiation of '" + def.name + "'");
      return;
    }
    const std::string inst_name = parent.path.empty() ? card[0].text : parent.path + "." + card[0].text;
    if (!instance_names_.insert(inst_name).second) {
      error(Diagnostic::Code::DuplicateElement, card[0], "duplicate instance name '" + card[0].text + "'");
      return;
    }

    Instance child;
    child.path = inst_name;
    child.stack = parent.stack;
    child.stack.push_back(def.name);
    child.params = globals_;
    for (const auto& [k, tok] : def.defaults)
      if (auto v = value(tok, parent.params)) child.params[k] = *v;
    for (const Token* t : assigns) {
      std::string k, v;
      split_kv(t->text, k, v);
      if (auto x = value(*t, parent.params, v)) child.params[k] = *x;
    }
    for (std::size_t i = 0; i < def.ports.size(); ++i)
      child.ports[def.ports[i]] = map_node(positional[i]->text, parent);

    for (const auto& body_card : def.body) {
      const std::string& head = body_card[0].text;
      if (head == ".param") {
        parse_param_card(body_card, child.params, false);
        continue;
      }
      if (head[0] == '.') {
        error(Diagnostic::Code::UnknownCard, body_card[0], "'" + head + "' is not allowed inside .subckt");
        continue;
      }
      parse_element(body_card, child);
    }
  }

  void parse_control(const Card& card) {
    const std::string& head = card[0].text;
    if (head == ".op") {
      circuit_.analyses.emplace_back(DcOp{});
      return;
    }
    if (head == ".dc") {
      if (card.size() != 5 && card.size() != 9) {
        error(Diagnostic::Code::ArityMismatch, card[0], ".dc expects src start stop step [src2 start2 stop2 step2]");
        return;
      }
      DcSweep d;
      auto sweep = [&](std::size_t i) -> std::optional<SweepSpec> {
        auto a = value(card[i + 1], globals_), b = value(card[i + 2], globals_), c = value(card[i + 3], globals_);
        if (!a || !b || !c) return std::nullopt;
        return SweepSpec{card[i].text, *a, *b, *c};
      };
      auto p = sweep(1);
      if (!p) return;
      d.primary = *p;
      if (card.size() == 9) {
        auto s = sweep(5);
        if (!s) return;
        d.secondary = *s;
      }
      circuit_.analyses.emplace_back(d);
      return;
    }
    if (head == ".tran") {
      Tran t;
      std::vector<double> nums;
      for (std::size_t i = 1; i < card.size(); ++i) {
        std::string k, v;
        if (split_kv(card[i].text, k, v)) {
          if (k == "method" && (v == "be" || v == "trap"))
            t.method = v == "be" ? IntegrationMethod::BackwardEuler : IntegrationMethod::Trapezoidal;
          else error(Diagnostic::Code::BadParameter, card[i], "unknown .tran option '" + card[i].text + "'");
          continue;
        }
        auto x = value(card[i], globals_);
        if (!x) return;
        nums.push_back(*x);
      }
      if (nums.size() < 2 || nums.size() > 3) {
        error(Diagnostic::Code::ArityMismatch, card[0], ".tran expects step stop [maxstep]");
        return;
      }
      t.step = nums[0];
      t.stop = nums[1];
      if (nums.size() == 3) t.max_step = nums[2];
      circuit_.analyses.emplace_back(t);
      return;
    }
    if (head == ".mc") {
      if (card.size() < 2) {
        error(Diagnostic::Code::ArityMismatch, card[0], ".mc expects a replica count");
        return;
      }
      Mc mc;
      auto count = value(card[1], globals_);
      if (!count) return;
      mc.count = int(*count);
      for (std::size_t i = 2; i < card.size(); ++i) {
        std::string k, v;
        if (!split_kv(card[i].text, k, v)) {
          error(Diagnostic::Code::BadParameter, card[i], "expected key=value in .mc");
          return;
        }
        if (k == "seed") {
          auto s = value(card[i], globals_, v);
          if (!s) return;
          mc.seed = std::uint64_t(*s);
          continue;
        }
        McDistribution dist;
        dist.parameter = k;
        if (v == "normal") dist.kind = McDistribution::Kind::Normal;
        else if (v == "lognormal") dist.kind = McDistribution::Kind::LogNormal;
        else {
          error(Diagnostic::Code::BadParameter, card[i], "distribution must be normal or lognormal");
          return;
        }
        if (i + 2 >= card.size()) {
          error(Diagnostic::Code::ArityMismatch, card[i], "distribution expects (mean, sigma)");
          return;
        }
        auto m = value(card[i + 1], globals_), s = value(card[i + 2], globals_);
        if (!m || !s) return;
        dist.mean = *m;
        dist.sigma = *s;
        i += 2;
        static const std::set<std::string> known{"vth", "vth_p", "vth_n", "dvth", "mu"};
        if (!known.count(k)) error(Diagnostic::Code::BadParameter, card[i - 2], "unknown .mc parameter '" + k + "'");
        mc.distributions.push_back(dist);
      }
      circuit_.analyses.emplace_back(mc);
      return;
    }
    if (head == ".ic") {
      for (std::size_t i = 1; i < card.size(); ++i) {
        if (card[i].text != "v" || i + 1 >= card.size()) {
          error(Diagnostic::Code::BadParameter, card[i], ".ic expects v(node)=value");
          return;
        }
        std::string k, v;
        if (!split_kv(card[i + 1].text, k, v)) {
          error(Diagnostic::Code::BadParameter, card[i + 1], ".ic expects v(node)=value");
          return;
        }
        auto x = value(card[i + 1], globals_, v);
        if (!x) return;
        pending_ic_.emplace_back(k, std::make_pair(card[i + 1], *x));
        ++i;
      }
      return;
    }
    error(Diagnostic::Code::UnknownCard, card[0], "unknown control card '" + head + "'");
  }

  const ParamOverrides& overrides_;
  Circuit circuit_;
  std::vector<Diagnostic> diags_;
  std::map<std::string, SubcktDef> subckts_;
  ParamScope globals_;
  std::set<std::string> names_;
  std::set<std::string> instance_names_;
  std::vector<std::pair<std::string, std::pair<Token, double>>> pending_ic_;
};

}  // namespace

Circuit parse(std::string_view text, const ParamOverrides& overrides) {
  Parser parser(overrides);
  return parser.run(text);
}

// ---------------------------------------------------------------------------
// Validation

std::vector<Diagnostic> validate(const Circuit& c) {
  std::vector<Diagnostic> out;
  auto err = [&](const Element& e, Diagnostic::Code code, std::string msg) {
    out.push_back({Diagnostic::Severity::Error, code, e.line, 1, e.name + ": " + std::move(msg)});
  };

  // Union-find over DC-conducting branches.
  std::vector<int> parent(c.nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> root = [&](int x) { return parent[x] == x ? x : parent[x] = root(parent[x]); };
  auto join = [&](int a, int b) { parent[root(a)] = root(b); };
  std::vector<bool> touched(c.nodes.size(), false);
  touched[0] = true;

  for (const auto& e : c.elements) {
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, Resistor>) {
            if (!(b.r > 0.0)) err(e, Diagnostic::Code::InvalidValue, "resistance must be > 0");
            join(b.a, b.b);
            touched[b.a] = touched[b.b] = true;
          } else if constexpr (std::is_same_v<T, Capacitor>) {
            if (!(b.c > 0.0)) err(e, Diagnostic::Code::InvalidValue, "capacitance must be > 0");
            touched[b.a] = touched[b.b] = true;
          } else if constexpr (std::is_same_v<T, VoltageSource>) {
            join(b.pos, b.neg);
            touched[b.pos] = touched[b.neg] = true;
          } else if constexpr (std::is_same_v<T, CurrentSource>) {
            touched[b.pos] = touched[b.neg] = true;
          } else {
            touched[b.d] = touched[b.g] = touched[b.s] = true;
            join(b.d, b.s);
            auto it = c.models.find(b.model);
            if (it == c.models.end()) {
              err(e, Diagnostic::Code::UndefinedModel, "undefined model '" + b.model + "'");
              return;
            }
            if ((b.w && !(*b.w > 0.0)) || (b.l && !(*b.l > 0.0))) {
              err(e, Diagnostic::Code::InvalidValue, "W and L must be > 0");
              return;
            }
            if (b.strain && !(b.strain->epsilon >= 0.0)) {
              err(e, Diagnostic::Code::InvalidValue, "strain must be >= 0");
              return;
            }
            if (!(b.mu_mult > 0.0)) {
              err(e, Diagnostic::Code::InvalidValue, "mumult must be > 0");
              return;
            }
            try {
              c.resolve(b).validate();
            } catch (const Error& ex) {
              err(e, Diagnostic::Code::InvalidValue, ex.what());
            }
          }
        },
        e.body);
  }

  std::set<int> reported;
  for (std::size_t n = 1; n < c.nodes.size(); ++n) {
    if (!touched[n]) continue;
    const int r = root(int(n));
    if (r == root(0) || reported.count(r)) continue;
    // A gate-only node still reaches ground through gmin; flag only islands
    // with no DC path at all.
    reported.insert(r);
    out.push_back({Diagnostic::Severity::Warning, Diagnostic::Code::FloatingNode, 0, 0,
                   "node '" + c.nodes[n] + "' has no DC path to ground"});
  }

  for (const auto& a : c.analyses) {
    if (const auto* d = std::get_if<DcSweep>(&a)) {
      for (const SweepSpec* s : {&d->primary, d->secondary ? &*d->secondary : nullptr}) {
        if (!s) continue;
        const Element* e = c.find(s->source);
        const bool ok = e && (std::holds_alternative<VoltageSource>(e->body) ||
                              std::holds_alternative<CurrentSource>(e->body));
        if (!ok)
          out.push_back({Diagnostic::Severity::Error, Diagnostic::Code::UnknownSource, 0, 0,
                         ".dc sweeps unknown source '" + s->source + "'"});
        if (!(s->step > 0.0) || s->stop < s->start)
          out.push_back({Diagnostic::Severity::Error, Diagnostic::Code::InvalidValue, 0, 0,
                         ".dc needs step > 0 and stop >= start"});
      }
    } else if (const auto* t = std::get_if<Tran>(&a)) {
      if (!(t->step > 0.0) || !(t->stop > 0.0) || (t->max_step && !(*t->max_step > 0.0)))
        out.push_back({Diagnostic::Severity::Error, Diagnostic::Code::InvalidValue, 0, 0,
                       ".tran needs positive step, stop and maxstep"});
    } else if (const auto* mc = std::get_if<Mc>(&a)) {
      if (mc->count < 1)
        out.push_back({Diagnostic::Severity::Error, Diagnostic::Code::InvalidValue, 0, 0, ".mc count must be >= 1"});
      for (const auto& dist : mc->distributions)
        if (!(dist.sigma >= 0.0))
          out.push_back({Diagnostic::Severity::Error, Diagnostic::Code::InvalidValue, 0, 0,
                         ".mc sigma must be >= 0"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::string model_card(const std::string& name, const OtftParams& p) {
  std::ostringstream os;
  os << ".model " << name << " otft(" << to_string(p.polarity) << ") mu0=" << format_number(p.mu0)
     << " vth=" << format_number(p.vth) << " ss=" << format_number(p.ss)
     << " lambda=" << format_number(p.lambda) << " gamma=" << format_number(p.gamma)
     << " rc=" << format_number(p.rc) << " cox=" << format_number(p.cox)
     << " w=" << format_number(p.geom.W) << " l=" << format_number(p.geom.L)
     << " lov=" << format_number(p.geom.LOV) << " m=" << format_number(p.smoothing);
  return os.str();
}

namespace {

std::string source_text(const SourceSpec& s) {
  if (const auto* dc = std::get_if<double>(&s.shape)) return "dc " + format_number(*dc);
  if (const auto* p = std::get_if<PulseSpec>(&s.shape))
    return "pulse(" + format_number(p->v1) + " " + format_number(p->v2) + " " + format_number(p->delay) + " " +
           format_number(p->rise) + " " + format_number(p->fall) + " " + format_number(p->width) + " " +
           format_number(p->period) + ")";
  const auto& q = std::get<SinSpec>(s.shape);
  return "sin(" + format_number(q.offset) + " " + format_number(q.amplitude) + " " + format_number(q.frequency) +
         " " + format_number(q.delay) + " " + format_number(q.damping) + ")";
}

}  // namespace

std::string serialize(const Circuit& c) {
  std::ostringstream os;
  os << c.title << "\n";
  for (const auto& [k, v] : c.params) os << ".param " << k << "=" << format_number(v) << "\n";
  for (const auto& [name, p] : c.models) os << model_card(name, p) << "\n";
  const auto& n = c.nodes;
  for (const auto& e : c.elements) {
    os << e.name << " ";
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, Resistor>) {
            os << n[b.a] << " " << n[b.b] << " " << format_number(b.r) << (b.wire ? " wire=1" : "");
          } else if constexpr (std::is_same_v<T, Capacitor>) {
            os << n[b.a] << " " << n[b.b] << " " << format_number(b.c);
          } else if constexpr (std::is_same_v<T, VoltageSource> || std::is_same_v<T, CurrentSource>) {
            os << n[b.pos] << " " << n[b.neg] << " " << source_text(b.spec);
          } else {
            os << n[b.d] << " " << n[b.g] << " " << n[b.s] << " " << b.model;
            if (b.w) os << " w=" << format_number(*b.w);
            if (b.l) os << " l=" << format_number(*b.l);
            if (b.strain)
              os << " strain=" << format_number(b.strain->epsilon) << " dir="
                 << (b.strain->orientation == StrainOrientation::ParallelToChannelLength ? "par" : "perp");
            if (b.dvth != 0.0) os << " dvth=" << format_number(b.dvth);
            if (b.mu_mult != 1.0) os << " mumult=" << format_number(b.mu_mult);
          }
        },
        e.body);
    os << "\n";
  }
  for (const auto& [node, v] : c.initial_conditions) os << ".ic v(" << n[node] << ")=" << format_number(v) << "\n";
  for (const auto& a : c.analyses) {
    std::visit(
        [&](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, DcOp>) {
            os << ".op";
          } else if constexpr (std::is_same_v<T, DcSweep>) {
            auto sw = [&](const SweepSpec& s) {
              os << " " << s.source << " " << format_number(s.start) << " " << format_number(s.stop) << " "
                 << format_number(s.step);
            };
            os << ".dc";
            sw(d.primary);
            if (d.secondary) sw(*d.secondary);
          } else if constexpr (std::is_same_v<T, Tran>) {
            os << ".tran " << format_number(d.step) << " " << format_number(d.stop);
            if (d.max_step) os << " " << format_number(*d.max_step);
            os << " method=" << (d.method == IntegrationMethod::BackwardEuler ? "be" : "trap");
          } else {
            os << ".mc " << d.count << " seed=" << d.seed;
            for (const auto& dist : d.distributions)
              os << " " << dist.parameter << "=" << (dist.kind == McDistribution::Kind::Normal ? "normal" : "lognormal")
                 << "(" << format_number(dist.mean) << "," << format_number(dist.sigma) << ")";
          }
        },
        a);
    os << "\n";
  }
  os << ".end\n";
  return os.str();
}

// ---------------------------------------------------------------------------

Circuit with_strain(const Circuit& c, const StrainState& s, bool scale_interconnect) {
  if (!(s.epsilon >= 0.0)) throw DomainError("with_strain: strain must be >= 0");
  Circuit out = c;
  const double wire_scale = (1.0 + s.epsilon) * (1.0 + s.epsilon);
  for (auto& e : out.elements) {
    if (auto* m = std::get_if<OtftInstance>(&e.body)) m->strain = s;
    else if (auto* r = std::get_if<Resistor>(&e.body); r && r->wire && scale_interconnect) r->r *= wire_scale;
  }
  return out;
}

void set_source_dc(Circuit& c, std::string_view name, double value) {
  Element* e = c.find(name);
  if (!e) throw Error("no source named '" + std::string(name) + "'");
  if (auto* v = std::get_if<VoltageSource>(&e->body)) v->spec.shape = value;
  else if (auto* i = std::get_if<CurrentSource>(&e->body)) i->spec.shape = value;
  else throw Error("'" + std::string(name) + "' is not a source");
}

}  // namespace ofet
