#pragma once

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace yamabe {

inline constexpr std::string_view kToolName = "yamabe_lab";
inline constexpr std::string_view kToolVersion = "1.0.0";
inline constexpr std::string_view kConfigSchema = "yamabe.config/1";

enum class Command { Soliton, Evolve, Converge, Contraction, Barrier, SingularityFinite, SingularityInfinite, Sweep };

std::string_view to_string(Command c);

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitSolver = 3,
  kExitInconclusive = 4,  ///< only under --strict
  kExitCorrupt = 5,       ///< merge found runs whose digests do not match
};

/// A validated configuration. `body` holds every key of the command with the
/// defaults filled in, in schema order; it is what the manifest echoes.
struct ExperimentConfig {
  Command command = Command::Soliton;
  nlohmann::ordered_json body;
  std::filesystem::path output_dir;  ///< empty unless the config names one
};

/// Every schema error found, not just the first.
struct ConfigError : std::runtime_error {
  std::vector<std::string> errors;
  explicit ConfigError(std::vector<std::string> errs);
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig config_from_json(const nlohmann::json& doc);

struct RunSettings {
  std::filesystem::path out;     ///< overrides the config's output_dir
  int parallel = 1;              ///< concurrent sweep jobs
  bool strict = false;           ///< inconclusive or failed checks exit nonzero
  double resolution_scale = 1;   ///< multiplies node counts and ladders
};

struct RunOutcome {
  int exit_code = kExitOk;
  std::filesystem::path dir;
  std::string status;            ///< ok, inconclusive, checks_failed, failed
  std::string message;
};

/// Runs one configuration into its output directory. Files are written in a
/// fixed order and manifest.json last; a directory without a manifest is an
/// incomplete run. Failures leave report.json with the error and no manifest.
RunOutcome run(const ExperimentConfig& config, const RunSettings& settings);

std::string sha256_file(const std::filesystem::path& file);

struct ManifestCheck {
  bool present = false;
  bool valid = false;
  std::string problem;
};

/// Re-hashes every file the manifest lists.
ManifestCheck verify_run_dir(const std::filesystem::path& dir);

struct MergeResult {
  std::size_t rows = 0;
  std::vector<std::string> corrupt;     ///< "dir: reason"
  std::vector<std::string> incomplete;  ///< directories without a manifest
  std::vector<std::string> warnings;
  int exit_code = kExitOk;
};

/// One CSV row per completed run, keyed by the run's parameters. Runs without
/// a manifest are skipped and listed; corrupt runs are listed and make the
/// exit code kExitCorrupt. An empty table is not an error.
MergeResult merge_sweep(const std::vector<std::filesystem::path>& dirs, std::ostream& csv);

}  // namespace yamabe
