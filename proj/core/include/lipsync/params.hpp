#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lipsync/tensor.hpp"

namespace lipsync {

/// Named parameter arrays for one network. Ordered by name (std::map) so
/// checksums, serialization and optimizer sweeps are deterministic.
struct ParameterSet {
  std::map<std::string, Tensor> arrays;
  bool frozen = false;
  std::int64_t step_count = 0;

  bool contains(const std::string& name) const { return arrays.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  /// Inserts a fresh array; throws ContractViolation if the name exists.
  void insert(const std::string& name, Tensor value);

  std::size_t total_parameters() const;
  std::vector<std::string> names() const;

  /// FNV-1a over every array's raw bytes in name order; detects any mutation.
  std::uint64_t checksum() const;
};

/// Gradient accumulator keyed like a ParameterSet.
struct GradStore {
  std::map<std::string, Tensor> grads;

  /// grads[name] += g (creates the entry on first touch).
  void accumulate(const std::string& name, const Tensor& g);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return grads.count(name) > 0; }
  void clear() { grads.clear(); }
};

}  // namespace lipsync
