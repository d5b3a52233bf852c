#include "ofet/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

namespace ofet {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double number(const std::string& cell, const std::string& column, const std::string& where) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  if (!cell.empty() && *b == '+') ++b;
  const auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || cell.empty())
    throw SchemaError(where + ": column '" + column + "' is not a number: '" + cell + "'", column);
  return v;
}

void put_u64(std::ostream& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw SchemaError("truncated waveform file");
    v |= std::uint64_t(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<IvSweep> read_measurements(std::istream& in, const std::string& source) {
  const auto& expected = measurement_columns();
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    header = split(t);
  }
  if (header.empty()) throw SchemaError(source + ": missing header");

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (std::find(expected.begin(), expected.end(), header[i]) == expected.end())
      throw SchemaError(source + ":" + std::to_string(lineno) + ": unknown column '" + header[i] + "'", header[i]);
    if (!index.emplace(header[i], i).second)
      throw SchemaError(source + ":" + std::to_string(lineno) + ": duplicate column '" + header[i] + "'", header[i]);
  }
  for (const auto& col : expected)
    if (!index.count(col)) throw SchemaError(source + ": missing column '" + col + "'", col);

  std::vector<IvSweep> sweeps;
  std::map<std::tuple<std::string, int, double>, std::size_t> slot;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cells = split(t);
    const std::string where = source + ":" + std::to_string(lineno);
    if (cells.size() != header.size())
      throw SchemaError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                        std::to_string(cells.size()));
    auto cell = [&](const char* col) -> const std::string& { return cells[index.at(col)]; };
    auto num = [&](const char* col) { return number(cell(col), col, where); };

    const std::string& id = cell("device_id");
    if (id.empty()) throw SchemaError(where + ": empty device_id", "device_id");
    SweepKind kind;
    if (cell("kind") == "transfer") {
      kind = SweepKind::Transfer;
    } else if (cell("kind") == "output") {
      kind = SweepKind::Output;
    } else {
      throw SchemaError(where + ": column 'kind' must be transfer or output, got '" + cell("kind") + "'", "kind");
    }
    const double bias = num("fixed_bias_V");
    // Division keeps decimal inputs such as 35 nF/cm^2 exact to the last bit.
    const DeviceGeometry geom{num("W_um") / 1e6, num("L_um") / 1e6, num("LOV_um") / 1e6};
    const double cox = num("cox_nF_cm2") / 1e5;  // nF/cm^2 -> F/m^2

    const auto key = std::make_tuple(id, static_cast<int>(kind), bias);
    auto it = slot.find(key);
    if (it == slot.end()) {
      IvSweep s;
      s.kind = kind;
      s.device_id = id;
      s.geom = geom;
      s.cox = cox;
      s.fixed_bias = bias;
      it = slot.emplace(key, sweeps.size()).first;
      sweeps.push_back(std::move(s));
    } else {
      const auto& s = sweeps[it->second];
      if (s.geom.W != geom.W || s.geom.L != geom.L || s.geom.LOV != geom.LOV || s.cox != cox)
        throw SchemaError(where + ": device '" + id + "' changes geometry within a sweep");
    }
    sweeps[it->second].points.push_back({num("v_V"), num("id_A")});
  }
  return sweeps;
}

std::vector<IvSweep> read_measurements(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  return read_measurements(in, path.string());
}

void write_measurements(std::ostream& out, const std::vector<IvSweep>& sweeps) {
  const auto& cols = measurement_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& s : sweeps)
    for (const auto& p : s.points)
      out << s.device_id << ',' << (s.kind == SweepKind::Transfer ? "transfer" : "output") << ','
          << format_number(s.geom.W * 1e6) << ',' << format_number(s.geom.L * 1e6) << ','
          << format_number(s.geom.LOV * 1e6) << ',' << format_number(s.cox * 1e5) << ','
          << format_number(s.fixed_bias) << ',' << format_number(p.v) << ',' << format_number(p.id) << '\n';
}

// ---------------------------------------------------------------------------

void write_waveform_csv(std::ostream& out, const Waveform& w) {
  out << w.axis_name;
  for (const auto& n : w.names) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < w.rows(); ++r) {
    out << format_number(w.axis[r]);
    for (const auto& c : w.columns) out << ',' << format_number(c[r]);
    out << '\n';
  }
}

Waveform read_waveform_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty waveform file");
  const auto header = split(trim(line));
  Waveform w;
  w.axis_name = header.front();
  w.names.assign(header.begin() + 1, header.end());
  w.columns.resize(w.names.size());
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line));
    const std::string where = "waveform:" + std::to_string(lineno);
    if (cells.size() != header.size()) throw SchemaError(where + ": wrong field count");
    w.axis.push_back(number(cells[0], header[0], where));
    for (std::size_t i = 1; i < cells.size(); ++i) w.columns[i - 1].push_back(number(cells[i], header[i], where));
  }
  return w;
}

void write_waveform_binary(std::ostream& out, const Waveform& w) {
  out.write("OFWF", 4);
  out.put(1);
  put_u64(out, w.names.size(), 4);
  put_u64(out, w.rows(), 8);
  auto name = [&](const std::string& n) {
    put_u64(out, n.size(), 2);
    out.write(n.data(), static_cast<std::streamsize>(n.size()));
  };
  name(w.axis_name);
  for (const auto& n : w.names) name(n);
  auto column = [&](const std::vector<double>& c) {
    for (double v : c) put_u64(out, std::bit_cast<std::uint64_t>(v), 8);
  };
  column(w.axis);
  for (const auto& c : w.columns) column(c);
}

Waveform read_waveform_binary(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != "OFWF") throw SchemaError("not a waveform file (bad magic)");
  if (get_u64(in, 1) != 1) throw SchemaError("unsupported waveform file version");
  const auto ncols = get_u64(in, 4);
  const auto nrows = get_u64(in, 8);
  auto name = [&] {
    std::string s(get_u64(in, 2), '\0');
    in.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in) throw SchemaError("truncated waveform file");
    return s;
  };
  Waveform w;
  w.axis_name = name();
  for (std::uint64_t i = 0; i < ncols; ++i) w.names.push_back(name());
  auto column = [&] {
    std::vector<double> c(nrows);
    for (auto& v : c) v = std::bit_cast<double>(get_u64(in, 8));
    return c;
  };
  w.axis = column();
  for (std::uint64_t i = 0; i < ncols; ++i) w.columns.push_back(column());
  return w;
}

// ---------------------------------------------------------------------------

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

ManifestEntry manifest_entry(const std::filesystem::path& file, const std::filesystem::path& root) {
  std::string shown = file.generic_string();
  if (!root.empty()) {
    const auto rel = std::filesystem::relative(file, root);
    if (!rel.empty() && *rel.begin() != "..") shown = rel.generic_string();
  }
  return {shown, sha256_file(file)};
}

nlohmann::ordered_json Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool"] = "ofet";
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = seed;
  auto list = [](const std::vector<ManifestEntry>& v) {
    auto a = nlohmann::ordered_json::array();
    for (const auto& e : v) a.push_back({{"path", e.path}, {"sha256", e.sha256}});
    return a;
  };
  j["inputs"] = list(inputs);
  j["outputs"] = list(outputs);
  j["parameters"] = parameters;
  return j;
}

nlohmann::ordered_json to_json(const SolverConfig& cfg) {
  return {{"abstol", cfg.abstol},
          {"reltol", cfg.reltol},
          {"vntol", cfg.vntol},
          {"max_newton_iters", cfg.max_newton_iters},
          {"gmin", cfg.gmin},
          {"damping", cfg.damping},
          {"lte_tol", cfg.transient.lte_tol},
          {"min_step", cfg.transient.min_step},
          {"max_step", cfg.transient.max_step},
          {"adaptive", cfg.transient.adaptive}};
}

}  // namespace ofet
