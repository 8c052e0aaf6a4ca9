#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace verse3d {

inline constexpr const char* kManifestFormat = "verse3d-manifest-1";

struct ArtifactRecord {
  std::string role;
  std::string path;  // relative to the run directory, '/'-separated
  std::string sha256;
  bool operator==(const ArtifactRecord&) const = default;
};

struct StageRecord {
  std::string name;
  std::string status;      // "done" or "failed"
  std::string input_hash;  // SHA-256 over the stage's inputs
  std::map<std::string, std::string> backends;  // role -> identifier
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, double> metrics;
  std::vector<ArtifactRecord> artifacts;
  std::string started_at;  // UTC, ISO 8601
  std::string finished_at;
  std::string error;

  /// Throws NotFoundError when no artifact has this role.
  const ArtifactRecord& artifact(const std::string& role) const;
  nlohmann::json to_json() const;
  static StageRecord from_json(const nlohmann::json& j);
};

/// The stage names in dependency order.
const std::vector<std::string>& pipeline_stage_names();

struct PipelineManifest {
  std::string haiku_id;
  std::string haiku_text;
  std::string config_hash;
  std::string status;  // "complete", "partial" or "failed"
  std::vector<StageRecord> stages;  // dependency order
  std::string trace;  // relative path of the wire trace, empty when off

  const StageRecord* find(const std::string& name) const;
  /// Throws NotFoundError unless the stage is recorded and done.
  const StageRecord& done_stage(const std::string& name) const;

  nlohmann::json to_json() const;
  static PipelineManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  /// NotFoundError for a missing file, ParseError for a malformed one.
  static PipelineManifest load(const std::filesystem::path& path);

  /// Throws ContractViolation when a stage is out of order or an artifact of
  /// a done stage is missing or does not match its recorded hash.
  void verify(const std::filesystem::path& run_dir) const;
};

/// The manifest document with every timestamp field removed.
nlohmann::json strip_timestamps(nlohmann::json manifest);

/// SHA-256 of the compact dump of a JSON value.
std::string hash_json(const nlohmann::json& j);

std::string utc_timestamp();

}  // namespace verse3d
