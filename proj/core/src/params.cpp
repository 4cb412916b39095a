#include "lipsync/params.hpp"

#include <cstring>

#include "lipsync/errors.hpp"

namespace lipsync {

Tensor& ParameterSet::at(const std::string& name) {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw ContractViolation("no parameter named '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw ContractViolation("no parameter named '" + name + "'");
  return it->second;
}

void ParameterSet::insert(const std::string& name, Tensor value) {
  if (!arrays.emplace(name, std::move(value)).second)
    throw ContractViolation("parameter '" + name + "' already exists");
}

std::size_t ParameterSet::total_parameters() const {
  std::size_t total = 0;
  for (const auto& [name, t] : arrays) total += static_cast<std::size_t>(t.numel());
  return total;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(arrays.size());
  for (const auto& [name, t] : arrays) out.push_back(name);
  return out;
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      hash ^= p[i];
      hash *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : arrays) {
    mix(name.data(), name.size());
    mix(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
  }
  return hash;
}

void GradStore::accumulate(const std::string& name, const Tensor& g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, g);
    return;
  }
  it->second.add_scaled(g, 1.0);
}

const Tensor& GradStore::at(const std::string& name) const {
  auto it = grads.find(name);
  if (it == grads.end()) throw ContractViolation("no gradient accumulated for '" + name + "'");
  return it->second;
}

}  // namespace lipsync
