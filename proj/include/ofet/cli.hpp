#pragma once

// Command-line front end: extract | fit | sim | reproduce.
//
// Every run collects its artifacts in memory and writes them, together with a
// manifest, only after the command has succeeded, so a failed run leaves the
// output directory untouched.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ofet/engine.hpp"

namespace ofet::cli {

enum class ExitCode : int {
  Success = 0,
  Usage = 1,
  Input = 2,      // unreadable file, schema or netlist error
  Numerical = 3,  // convergence, extraction or fit failure
};

enum class Format : unsigned { Csv = 1, Binary = 2, Manifest = 4 };

struct RunConfig {
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path out_dir;
  SolverConfig solver;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int verbosity = 0;
  unsigned formats = unsigned(Format::Csv) | unsigned(Format::Manifest);

  bool wants(Format f) const { return (formats & unsigned(f)) != 0; }
};

/// Figure ids accepted by `reproduce`.
const std::vector<std::string>& figure_ids();

/// Runs the tool with argv-style arguments (args[0] is the program name).
/// Results go to `out`, diagnostics and progress to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ofet::cli
