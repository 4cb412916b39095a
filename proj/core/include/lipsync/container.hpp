#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lipsync/tensor.hpp"

namespace lipsync {

/// Element types an array container entry can be stored as. Tensors are
/// converted to/from double on the way in and out; `byte` entries carry raw
/// payloads such as embedded JSON records.
enum class DType : std::uint8_t {
  f64 = 1,
  f32 = 2,
  i64 = 3,
  byte = 4,
};

std::size_t dtype_size(DType t);

/// One named array inside a container file.
struct ContainerEntry {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::int64_t> dims;
  std::vector<std::uint8_t> payload;  // row-major little-endian

  std::int64_t numel() const;
};

/// Versioned named-array container. This is the one on-disk array format in
/// the project: checkpoints, corpus tracks, audio files, and native clips are
/// all containers with documented entry names.
///
/// Layout (all integers little-endian):
///   magic "LSAC" | u32 version | u64 entry_count
///   per entry: u16 name_len | name bytes | u8 dtype | u8 ndim |
///              u64 dims[ndim] | u64 payload_len | payload bytes
///
/// Entries keep insertion order, so writing the same content twice produces
/// byte-identical files.
class ArrayContainer {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, const Tensor& t, DType storage = DType::f64);
  void put_bytes(const std::string& name, std::vector<std::uint8_t> bytes);
  void put_string(const std::string& name, const std::string& text);
  void put_entry(ContainerEntry entry);

  bool contains(const std::string& name) const;
  /// Fetch an entry as a double tensor (converting from its storage dtype).
  Tensor get(const std::string& name) const;
  const ContainerEntry& entry(const std::string& name) const;
  std::string get_string(const std::string& name) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  void save(const std::string& path) const;
  std::vector<std::uint8_t> serialize() const;

  static ArrayContainer load(const std::string& path);
  static ArrayContainer deserialize(const std::uint8_t* data, std::size_t size);

  /// Reads only names/dtypes/shapes, skipping payloads. Cheap way to probe
  /// durations and shapes without loading frame data.
  static std::vector<ContainerEntry> read_index(const std::string& path);

 private:
  std::vector<ContainerEntry> entries_;
  std::map<std::string, std::size_t> by_name_;
};

}  // namespace lipsync
