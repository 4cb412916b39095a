#include "lipsync/container.hpp"

#include <cstring>
#include <fstream>

#include "lipsync/errors.hpp"

namespace lipsync {
namespace {

constexpr char kMagic[4] = {'L', 'S', 'A', 'C'};

void append_raw(std::vector<std::uint8_t>& out, const void* src, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(src);
  out.insert(out.end(), p, p + n);
}

template <class T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  // Host is little-endian on every supported target; memcpy keeps this
  // well-defined.
  append_raw(out, &value, sizeof(T));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  void read_raw(void* dst, std::size_t n) {
    if (pos_ + n > size_) throw FormatError("array container truncated");
    std::memcpy(dst, data_ + pos_, n);
    pos_ += n;
  }

  template <class T>
  T read_le() {
    T v;
    read_raw(&v, sizeof(T));
    return v;
  }

  void skip(std::size_t n) {
    if (pos_ + n > size_) throw FormatError("array container truncated");
    pos_ += n;
  }

  std::size_t remaining() const { return size_ - pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

ContainerEntry read_entry_header(Reader& r) {
  ContainerEntry e;
  const auto name_len = r.read_le<std::uint16_t>();
  e.name.resize(name_len);
  r.read_raw(e.name.data(), name_len);
  const auto dtype = r.read_le<std::uint8_t>();
  if (dtype < 1 || dtype > 4) throw FormatError("array container: unknown dtype");
  e.dtype = static_cast<DType>(dtype);
  const auto ndim = r.read_le<std::uint8_t>();
  e.dims.resize(ndim);
  for (auto& d : e.dims) d = static_cast<std::int64_t>(r.read_le<std::uint64_t>());
  return e;
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f64: return 8;
    case DType::f32: return 4;
    case DType::i64: return 8;
    case DType::byte: return 1;
  }
  throw FormatError("unknown dtype");
}

std::int64_t ContainerEntry::numel() const { return shape_numel(dims); }

void ArrayContainer::put(const std::string& name, const Tensor& t, DType storage) {
  ContainerEntry e;
  e.name = name;
  e.dtype = storage;
  e.dims = t.shape();
  const std::int64_t n = t.numel();
  e.payload.resize(static_cast<std::size_t>(n) * dtype_size(storage));
  const double* src = t.data();
  switch (storage) {
    case DType::f64:
      std::memcpy(e.payload.data(), src, e.payload.size());
      break;
    case DType::f32: {
      auto* dst = reinterpret_cast<float*>(e.payload.data());
      for (std::int64_t i = 0; i < n; ++i) dst[i] = static_cast<float>(src[i]);
      break;
    }
    case DType::i64: {
      auto* dst = reinterpret_cast<std::int64_t*>(e.payload.data());
      for (std::int64_t i = 0; i < n; ++i) dst[i] = static_cast<std::int64_t>(src[i]);
      break;
    }
    case DType::byte: {
      auto* dst = e.payload.data();
      for (std::int64_t i = 0; i < n; ++i) dst[i] = static_cast<std::uint8_t>(src[i]);
      break;
    }
  }
  put_entry(std::move(e));
}

void ArrayContainer::put_bytes(const std::string& name, std::vector<std::uint8_t> bytes) {
  ContainerEntry e;
  e.name = name;
  e.dtype = DType::byte;
  e.dims = {static_cast<std::int64_t>(bytes.size())};
  e.payload = std::move(bytes);
  put_entry(std::move(e));
}

void ArrayContainer::put_string(const std::string& name, const std::string& text) {
  put_bytes(name, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void ArrayContainer::put_entry(ContainerEntry entry) {
  if (entry.numel() * static_cast<std::int64_t>(dtype_size(entry.dtype)) !=
      static_cast<std::int64_t>(entry.payload.size())) {
    throw FormatError("container entry payload size does not match dims");
  }
  auto it = by_name_.find(entry.name);
  if (it != by_name_.end()) {
    entries_[it->second] = std::move(entry);
    return;
  }
  by_name_[entry.name] = entries_.size();
  entries_.push_back(std::move(entry));
}

bool ArrayContainer::contains(const std::string& name) const { return by_name_.count(name) > 0; }

const ContainerEntry& ArrayContainer::entry(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw FormatError("container has no entry named '" + name + "'");
  return entries_[it->second];
}

Tensor ArrayContainer::get(const std::string& name) const {
  const ContainerEntry& e = entry(name);
  Tensor t(e.dims);
  double* dst = t.data();
  const std::int64_t n = t.numel();
  switch (e.dtype) {
    case DType::f64:
      std::memcpy(dst, e.payload.data(), e.payload.size());
      break;
    case DType::f32: {
      const auto* src = reinterpret_cast<const float*>(e.payload.data());
      for (std::int64_t i = 0; i < n; ++i) dst[i] = static_cast<double>(src[i]);
      break;
    }
    case DType::i64: {
      const auto* src = reinterpret_cast<const std::int64_t*>(e.payload.data());
      for (std::int64_t i = 0; i < n; ++i) dst[i] = static_cast<double>(src[i]);
      break;
    }
    case DType::byte: {
      const auto* src = e.payload.data();
      for (std::int64_t i = 0; i < n; ++i) dst[i] = static_cast<double>(src[i]);
      break;
    }
  }
  return t;
}

std::string ArrayContainer::get_string(const std::string& name) const {
  const ContainerEntry& e = entry(name);
  return std::string(e.payload.begin(), e.payload.end());
}

std::vector<std::string> ArrayContainer::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::vector<std::uint8_t> ArrayContainer::serialize() const {
  std::vector<std::uint8_t> out;
  append_raw(out, kMagic, 4);
  append_le<std::uint32_t>(out, kVersion);
  append_le<std::uint64_t>(out, entries_.size());
  for (const auto& e : entries_) {
    if (e.name.size() > 0xffff) throw FormatError("container entry name too long");
    append_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    append_raw(out, e.name.data(), e.name.size());
    append_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    append_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.dims.size()));
    for (std::int64_t d : e.dims) append_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    append_le<std::uint64_t>(out, e.payload.size());
    append_raw(out, e.payload.data(), e.payload.size());
  }
  return out;
}

void ArrayContainer::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("short write to '" + path + "'");
}

ArrayContainer ArrayContainer::deserialize(const std::uint8_t* data, std::size_t size) {
  Reader r(data, size);
  char magic[4];
  r.read_raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not an array container (bad magic)");
  const auto version = r.read_le<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("unsupported array container version " + std::to_string(version));
  }
  const auto count = r.read_le<std::uint64_t>();
  ArrayContainer c;
  for (std::uint64_t i = 0; i < count; ++i) {
    ContainerEntry e = read_entry_header(r);
    const auto payload_len = r.read_le<std::uint64_t>();
    const std::uint64_t expected =
        static_cast<std::uint64_t>(e.numel()) * dtype_size(e.dtype);
    if (payload_len != expected) throw FormatError("container entry payload length mismatch");
    e.payload.resize(payload_len);
    r.read_raw(e.payload.data(), payload_len);
    c.put_entry(std::move(e));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after array container");
  return c;
}

namespace {
std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw FormatError("cannot open '" + path + "'");
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw FormatError("short read from '" + path + "'");
  return bytes;
}
}  // namespace

ArrayContainer ArrayContainer::load(const std::string& path) {
  const auto bytes = read_file(path);
  return deserialize(bytes.data(), bytes.size());
}

std::vector<ContainerEntry> ArrayContainer::read_index(const std::string& path) {
  const auto bytes = read_file(path);
  Reader r(bytes.data(), bytes.size());
  char magic[4];
  r.read_raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not an array container (bad magic)");
  const auto version = r.read_le<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("unsupported array container version " + std::to_string(version));
  }
  const auto count = r.read_le<std::uint64_t>();
  std::vector<ContainerEntry> index;
  for (std::uint64_t i = 0; i < count; ++i) {
    ContainerEntry e = read_entry_header(r);
    const auto payload_len = r.read_le<std::uint64_t>();
    r.skip(payload_len);
    index.push_back(std::move(e));
  }
  return index;
}

}  // namespace lipsync
