#include "lipsync/checkpoint.hpp"

#include <json.hpp>

#include "lipsync/container.hpp"
#include "lipsync/errors.hpp"

namespace lipsync {

namespace {

using nlohmann::json;

const std::string kMetaName = "__meta__";

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::string& kind,
                     const std::string& config_json, const std::string& path) {
  json config;
  try {
    config = json::parse(config_json);
  } catch (const json::exception& e) {
    throw ContractViolation("checkpoint config is not valid JSON: " +
                            std::string(e.what()));
  }
  if (!config.is_object()) {
    throw ContractViolation("checkpoint config must be a JSON object");
  }

  json meta;
  meta["config"] = config;
  meta["format_version"] = kCheckpointFormatVersion;
  meta["frozen"] = params.frozen;
  meta["kind"] = kind;
  meta["step_count"] = params.step_count;

  ArrayContainer c;
  c.put_string(kMetaName, meta.dump());
  for (const std::string& name : params.names()) {
    c.put(name, params.at(name), DType::f64);
  }
  c.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  ArrayContainer c = ArrayContainer::load(path);
  if (!c.contains(kMetaName)) {
    throw FormatError("checkpoint '" + path + "' has no " + kMetaName +
                      " manifest");
  }

  json meta;
  try {
    meta = json::parse(c.get_string(kMetaName));
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + path +
                      "' has a corrupt manifest: " + std::string(e.what()));
  }
  if (!meta.is_object() || !meta.contains("format_version") ||
      !meta.contains("kind") || !meta.contains("frozen") ||
      !meta.contains("step_count") || !meta.contains("config") ||
      !meta["config"].is_object()) {
    throw FormatError("checkpoint '" + path + "' has an incomplete manifest");
  }
  const std::int64_t version = meta["format_version"].get<std::int64_t>();
  if (version != kCheckpointFormatVersion) {
    throw FormatError("checkpoint '" + path + "' has format version " +
                      std::to_string(version) + "; this build reads version " +
                      std::to_string(kCheckpointFormatVersion));
  }

  Checkpoint out;
  out.kind = meta["kind"].get<std::string>();
  out.config_json = meta["config"].dump();
  out.params.frozen = meta["frozen"].get<bool>();
  out.params.step_count = meta["step_count"].get<std::int64_t>();
  for (const std::string& name : c.names()) {
    if (name == kMetaName) continue;
    out.params.insert(name, c.get(name));
  }
  return out;
}

Checkpoint load_checkpoint(const std::string& path,
                           const std::string& expect_kind) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != expect_kind) {
    throw ConfigMismatch("checkpoint '" + path + "' holds a '" + ckpt.kind +
                         "' model where '" + expect_kind + "' is required");
  }
  return ckpt;
}

}  // namespace lipsync
