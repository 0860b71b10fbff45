#pragma once

// Command-line front end: JSON run configs with BEAMLAB_ environment
// overrides, one pipeline per subcommand, CSV reports and a run manifest.

#include "beamlab/reconstruction.hpp"

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace beamlab {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kSoftwareVersion = "beamlab 0.1.0";

/// trace, beam-verify, forward, dtn, linearize, reconstruct, compare
const std::vector<std::string>& subcommands();

enum ExitCode : int { kExitPass = 0, kExitVerdict = 1, kExitConfig = 2, kExitRuntime = 3 };

/// Validation failure carrying every violation found, not just the first.
class ConfigError : public Error {
public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

private:
  std::vector<std::string> issues_;
};

struct RunConfig {
  std::string command;
  nlohmann::json doc;  // defaults merged with file, environment and flags
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "out";
};

/// Every key the pipelines read, with its default value.
nlohmann::json default_config();

/// BEAMLAB_A__B=value sets doc["a"]["b"]; the value is parsed as JSON when
/// it parses, otherwise taken as a string. Existing keys match without
/// regard to case; new keys are lower-cased.
void apply_env_overrides(nlohmann::json& doc, const std::map<std::string, std::string>& env);

/// BEAMLAB_* variables of the current process.
std::map<std::string, std::string> beamlab_environment();

/// All violations for the given subcommand; empty when the config is usable.
std::vector<std::string> validate_config(const std::string& command, const nlohmann::json& doc);

/// Defaults <- file <- environment <- flags (objects merge recursively,
/// everything else replaces). Throws ConfigError listing all violations.
RunConfig load_config(const std::string& command, const nlohmann::json& file,
                      const std::map<std::string, std::string>& env, const nlohmann::json& flags);

/// FNV-1a 64 of the canonical (sorted-key) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& doc);

enum class Verdict { Pass, Fail, Skipped };
const char* to_string(Verdict v);

struct StageTiming {
  std::string name;
  double seconds = 0;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string version = kSoftwareVersion;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<StageTiming> stages;
  std::vector<std::pair<std::string, Verdict>> verdicts;
  std::vector<std::string> files;  // relative to the output directory, in emission order
  nlohmann::json config;
  nlohmann::json results = nlohmann::json::object();  // scalar summaries per stage

  /// 0 iff every verdict passed or was skipped.
  int exit_code() const;
  nlohmann::json to_json() const;
};

/// Single owner of the output directory. The constructor creates the
/// directory and probes that it is writable, so I/O problems surface
/// before any computation.
class ReportSink {
public:
  explicit ReportSink(std::string dir);
  /// Full path for a new output file; the name is recorded for the manifest.
  std::string path(const std::string& name);
  const std::vector<std::string>& files() const { return files_; }
  const std::string& dir() const { return dir_; }
  /// Writes manifest.json (not listed in itself).
  void write_manifest(const RunManifest& m) const;

private:
  std::string dir_;
  std::vector<std::string> files_;
};

/// CSV rows with doubles at 17 significant digits.
class CsvWriter {
public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(long long v);
  CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(std::size_t v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(const std::string& v);
  CsvWriter& operator<<(const char* v) { return *this << std::string(v); }
  void end_row();

private:
  void sep();
  std::unique_ptr<std::ofstream> file_;
  bool first_ = true;
};

/// Runs the configured pipeline, writes its reports and the manifest.
RunManifest run_scenario(const RunConfig& cfg);

struct ComparisonReport {
  std::vector<double> discrepancy;  // per battery input: sup|trace diff| / sup|trace|
  double max_discrepancy = 0;
  double tolerance = 0;             // Picard tolerance of the solves
  FieldReconstruction field;        // V3 estimate of the pair over U
  double field_rms = 0;             // rms of the tested estimates
  double field_peak = 0;
  SpacetimePoint peak_at;
};

/// DtN traces of both nonlinearities on a shared battery and the V3
/// reconstruction of the pair.
ComparisonReport uniqueness_compare(const WaveOperator& op, const NonlinearitySpec& V1, const NonlinearitySpec& V2,
                                    const std::vector<BoundaryData>& battery, const SemilinearOptions& solver,
                                    const std::vector<double>& rhos, const ReconstructionOptions& rec);

/// Parses argv, runs, and maps outcomes to exit codes.
int run_cli(int argc, char** argv);

} // namespace beamlab
