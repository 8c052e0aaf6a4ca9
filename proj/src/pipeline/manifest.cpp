#include "verse3d/pipeline/manifest.hpp"

#include <chrono>
#include <ctime>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/hash.hpp"
#include "verse3d/core/image_io.hpp"

namespace verse3d {

using nlohmann::json;

const std::vector<std::string>& pipeline_stage_names() {
  static const std::vector<std::string> names{"parse", "t2i", "outpaint", "depth", "init", "optimize"};
  return names;
}

const ArtifactRecord& StageRecord::artifact(const std::string& role) const {
  for (const auto& a : artifacts) {
    if (a.role == role) return a;
  }
  throw NotFoundError("stage " + name + " has no artifact '" + role + "'");
}

json StageRecord::to_json() const {
  json arts = json::array();
  for (const auto& a : artifacts) arts.push_back({{"role", a.role}, {"path", a.path}, {"sha256", a.sha256}});
  json j{{"name", name},         {"status", status}, {"input_hash", input_hash},
         {"backends", backends}, {"seeds", seeds},   {"metrics", metrics},
         {"artifacts", arts},    {"started_at", started_at}, {"finished_at", finished_at}};
  if (!error.empty()) j["error"] = error;
  return j;
}

StageRecord StageRecord::from_json(const json& j) {
  StageRecord s;
  s.name = j.at("name").get<std::string>();
  s.status = j.at("status").get<std::string>();
  s.input_hash = j.at("input_hash").get<std::string>();
  s.backends = j.value("backends", std::map<std::string, std::string>{});
  s.seeds = j.value("seeds", std::map<std::string, std::uint64_t>{});
  s.metrics = j.value("metrics", std::map<std::string, double>{});
  for (const auto& a : j.at("artifacts")) {
    s.artifacts.push_back({a.at("role").get<std::string>(), a.at("path").get<std::string>(),
                           a.at("sha256").get<std::string>()});
  }
  s.started_at = j.value("started_at", "");
  s.finished_at = j.value("finished_at", "");
  s.error = j.value("error", "");
  return s;
}

const StageRecord* PipelineManifest::find(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const StageRecord& PipelineManifest::done_stage(const std::string& name) const {
  const StageRecord* s = find(name);
  if (!s || s->status != "done") throw NotFoundError("stage " + name + " has not completed");
  return *s;
}

json PipelineManifest::to_json() const {
  json st = json::array();
  for (const auto& s : stages) st.push_back(s.to_json());
  json j{{"format", kManifestFormat},
         {"haiku", {{"id", haiku_id}, {"text", haiku_text}}},
         {"config_hash", config_hash},
         {"status", status},
         {"stages", st}};
  if (!trace.empty()) j["trace"] = trace;
  return j;
}

PipelineManifest PipelineManifest::from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != kManifestFormat) {
      throw ParseError("unsupported manifest format " + j.at("format").dump());
    }
    PipelineManifest m;
    m.haiku_id = j.at("haiku").at("id").get<std::string>();
    m.haiku_text = j.at("haiku").at("text").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.status = j.at("status").get<std::string>();
    for (const auto& s : j.at("stages")) m.stages.push_back(StageRecord::from_json(s));
    m.trace = j.value("trace", "");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
}

void PipelineManifest::save(const std::filesystem::path& path) const {
  write_file(path, to_json().dump(2) + "\n");
}

PipelineManifest PipelineManifest::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("manifest not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void PipelineManifest::verify(const std::filesystem::path& run_dir) const {
  const auto& order = pipeline_stage_names();
  std::size_t next = 0;
  for (const auto& s : stages) {
    while (next < order.size() && order[next] != s.name) ++next;
    if (next == order.size()) throw ContractViolation("stage " + s.name + " recorded out of order");
    ++next;
    if (s.status != "done") continue;
    for (const auto& a : s.artifacts) {
      const auto p = run_dir / a.path;
      if (!std::filesystem::exists(p)) throw ContractViolation("missing artifact " + a.path);
      if (sha256_file(p.string()) != a.sha256) throw ContractViolation("hash mismatch for " + a.path);
    }
  }
}

json strip_timestamps(json manifest) {
  if (manifest.contains("stages")) {
    for (auto& s : manifest["stages"]) {
      s.erase("started_at");
      s.erase("finished_at");
    }
  }
  return manifest;
}

std::string hash_json(const json& j) { return sha256_hex(j.dump()); }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

}  // namespace verse3d
