#pragma once

// File formats: measurement CSV ingestion, waveform CSV/binary writers and run
// manifests.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ofet/engine.hpp"
#include "ofet/extract.hpp"

namespace ofet {

inline constexpr const char* kVersion = "0.1.0";

/// Malformed input file; names the offending column when there is one.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::string column = {}) : Error(what), column_(std::move(column)) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

// ---------------------------------------------------------------------------
// Measurement CSV
//
//   device_id,kind,W_um,L_um,LOV_um,cox_nF_cm2,fixed_bias_V,v_V,id_A
//
// kind is "transfer" or "output". Rows sharing (device_id, kind, fixed_bias_V)
// form one sweep, in file order. Blank lines and lines starting with '#' are
// skipped.

inline const std::vector<std::string>& measurement_columns() {
  static const std::vector<std::string> cols{"device_id", "kind",         "W_um", "L_um", "LOV_um",
                                             "cox_nF_cm2", "fixed_bias_V", "v_V",  "id_A"};
  return cols;
}

std::vector<IvSweep> read_measurements(std::istream& in, const std::string& source = "<stream>");
std::vector<IvSweep> read_measurements(const std::filesystem::path& path);
void write_measurements(std::ostream& out, const std::vector<IvSweep>& sweeps);

// ---------------------------------------------------------------------------
// Waveforms

/// Header "axis,col1,col2..." then one row per sample, shortest round-trip numbers.
void write_waveform_csv(std::ostream& out, const Waveform& w);
Waveform read_waveform_csv(std::istream& in);

/// Binary layout, all integers and doubles little-endian:
///   "OFWF" | u8 version (1) | u32 column count | u64 row count
///   | per name (axis first): u16 length, bytes | column-major f64 data, axis first
void write_waveform_binary(std::ostream& out, const Waveform& w);
Waveform read_waveform_binary(std::istream& in);

// ---------------------------------------------------------------------------
// Manifests

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;
  std::string sha256;
};

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> inputs;
  std::vector<ManifestEntry> outputs;
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
};

/// Entry for a file on disk; the recorded path is relative to `root` when possible.
ManifestEntry manifest_entry(const std::filesystem::path& file, const std::filesystem::path& root = {});

nlohmann::ordered_json to_json(const SolverConfig& cfg);

}  // namespace ofet
