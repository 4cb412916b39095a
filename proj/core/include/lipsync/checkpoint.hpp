#pragma once

#include <cstdint>
#include <string>

#include "lipsync/params.hpp"

namespace lipsync {

// Checkpoints reuse the array container format. One reserved entry,
// "__meta__", holds a JSON manifest:
//
//   { "format_version": 1,
//     "kind":           "sync_expert" | "generator" | "quality_disc" | ...,
//     "frozen":         bool,
//     "step_count":     integer,
//     "config":         model-specific JSON object }
//
// Every other entry is one named parameter tensor stored as f64, written in
// sorted name order, so save -> load -> save is byte-identical.
//
// Shape validation against the stored config is the job of the typed loaders
// in each model module; this layer only guarantees the manifest is intact.

inline constexpr std::int64_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  ParameterSet params;
  std::string kind;
  std::string config_json;  // the "config" object, serialized
};

// `config_json` must be a serialized JSON object; anything else is a caller
// bug and throws ContractViolation.
void save_checkpoint(const ParameterSet& params, const std::string& kind,
                     const std::string& config_json, const std::string& path);

// Throws FormatError for missing/corrupt/truncated files or an unsupported
// format version.
Checkpoint load_checkpoint(const std::string& path);

// Same, but additionally requires the stored kind; mismatch -> ConfigMismatch.
Checkpoint load_checkpoint(const std::string& path,
                           const std::string& expect_kind);

}  // namespace lipsync
