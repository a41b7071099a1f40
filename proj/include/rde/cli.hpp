#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace rde {

// Line-oriented `key = value` configuration with one level of [section]
// headers.  Order-preserving so that render/parse round-trips exactly.
struct ConfigFile {
  using Section = std::vector<std::pair<std::string, std::string>>;
  std::vector<std::pair<std::string, Section>> sections;

  bool has(const std::string& sec, const std::string& key) const;
  std::string get(const std::string& sec, const std::string& key,
                  const std::string& fallback) const;
  void set(const std::string& sec, const std::string& key,
           const std::string& value);

  bool operator==(const ConfigFile& other) const = default;
};

ConfigFile parse_config(const std::string& text);
std::string render_config(const ConfigFile& cfg);

// FNV-1a over the canonical rendering; names every artifact of a run.
std::uint64_t config_hash(const ConfigFile& cfg);
std::string hash_hex(std::uint64_t h);

struct RunResult {
  int status = 0;  // 0 ok, 2 validation error, 3 estimator refusal
  std::string message;
  std::string hash;        // resolved-config hash, empty on status 2
  std::string report_json; // emitted report body
  std::vector<std::string> artifacts;  // file names written under out/
};

// Validates, fills defaults, applies RDE_<SECTION>_<KEY> environment
// overrides, dispatches to the module stages and writes the resolved-config
// echo plus the JSON/CSV artifacts.  Never throws; failures land in status.
RunResult run_config(const ConfigFile& cfg);

struct RegistryEntry {
  std::string hash;
  std::string subcommand;
  std::string stage;
  std::uint64_t seed = 0;
  std::string headline;
  bool corrupt = false;
};

// Scans an output directory for prior runs.
std::vector<RegistryEntry> seed_registry(const std::string& dir);

// Re-runs the echoed config stored under the given hash.
RunResult rerun_by_hash(const std::string& dir, const std::string& hash);

}  // namespace rde
