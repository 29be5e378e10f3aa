#include "tnas/spaces/architecture.hpp"

#include <sstream>

#include "tnas/core/errors.hpp"
#include "tnas/core/rng.hpp"
#include "tnas/samplers/samplers.hpp"

namespace tnas {

std::int64_t SearchSpaceSpec::cardinality() const {
  std::int64_t n = 1;
  for (const auto& d : dims) n *= static_cast<std::int64_t>(d.size());
  return n;
}

std::size_t SearchSpaceSpec::dim_index(const std::string& name) const {
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (dims[i].name == name) return i;
  throw ValidationError("space '" + id + "' has no dim '" + name + "'");
}

Architecture Architecture::from_indices(const SearchSpaceSpec& spec,
                                        const std::vector<std::int64_t>& indices) {
  if (indices.size() != spec.dims.size()) {
    throw ValidationError("expected " + std::to_string(spec.dims.size()) + " indices, got " +
                          std::to_string(indices.size()));
  }
  std::map<std::string, std::int64_t> a;
  for (std::size_t i = 0; i < indices.size(); ++i) a[spec.dims[i].name] = indices[i];
  Architecture arch(std::move(a));
  arch.validate(spec);
  return arch;
}

Architecture Architecture::from_ordinal(const SearchSpaceSpec& spec, std::int64_t ordinal) {
  if (ordinal < 0 || ordinal >= spec.cardinality()) {
    throw RangeError("architecture ordinal " + std::to_string(ordinal) + " out of range");
  }
  std::vector<std::int64_t> idx(spec.dims.size());
  for (std::size_t i = spec.dims.size(); i-- > 0;) {
    const auto n = static_cast<std::int64_t>(spec.dims[i].size());
    idx[i] = ordinal % n;
    ordinal /= n;
  }
  return from_indices(spec, idx);
}

Architecture Architecture::largest(const SearchSpaceSpec& spec) {
  std::vector<std::int64_t> idx;
  for (const auto& d : spec.dims) idx.push_back(static_cast<std::int64_t>(d.size()) - 1);
  return from_indices(spec, idx);
}

Architecture Architecture::random(const SearchSpaceSpec& spec, Rng& rng) {
  std::vector<std::int64_t> idx;
  for (const auto& d : spec.dims) idx.push_back(rng.uniform_int(static_cast<std::int64_t>(d.size())));
  return from_indices(spec, idx);
}

Architecture Architecture::parse(const std::string& text) {
  std::map<std::string, std::int64_t> a;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw FormatError("malformed architecture entry '" + item + "'");
    }
    const std::string key = item.substr(0, eq);
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(item.substr(eq + 1), &used);
    } catch (const std::exception&) {
      throw FormatError("malformed index in '" + item + "'");
    }
    if (used != item.size() - eq - 1) throw FormatError("malformed index in '" + item + "'");
    if (!a.emplace(key, v).second) throw FormatError("duplicate dim '" + key + "'");
  }
  return Architecture(std::move(a));
}

std::string Architecture::to_string() const {
  std::string out;
  for (const auto& [k, v] : assignment_) {
    if (!out.empty()) out += ';';
    out += k + '=' + std::to_string(v);
  }
  return out;
}

std::int64_t Architecture::at(const std::string& dim) const {
  auto it = assignment_.find(dim);
  if (it == assignment_.end()) throw ValidationError("architecture has no dim '" + dim + "'");
  return it->second;
}

std::vector<std::int64_t> Architecture::indices(const SearchSpaceSpec& spec) const {
  std::vector<std::int64_t> idx;
  for (const auto& d : spec.dims) idx.push_back(at(d.name));
  return idx;
}

std::int64_t Architecture::ordinal(const SearchSpaceSpec& spec) const {
  std::int64_t o = 0;
  for (const auto& d : spec.dims) o = o * static_cast<std::int64_t>(d.size()) + at(d.name);
  return o;
}

void Architecture::validate(const SearchSpaceSpec& spec) const {
  if (assignment_.size() != spec.dims.size()) {
    throw ValidationError("architecture assigns " + std::to_string(assignment_.size()) +
                          " dims, space '" + spec.id + "' has " + std::to_string(spec.dims.size()));
  }
  for (const auto& d : spec.dims) {
    const auto v = at(d.name);
    if (v < 0 || v >= static_cast<std::int64_t>(d.size())) {
      throw ValidationError("index " + std::to_string(v) + " invalid for dim '" + d.name + "'");
    }
  }
}

Architecture discretize(const SearchSpaceSpec& spec,
                        const std::vector<std::vector<double>>& alphas) {
  if (alphas.size() != spec.dims.size()) {
    throw ValidationError("one logit vector per dim required");
  }
  std::vector<std::int64_t> idx;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (alphas[i].size() != spec.dims[i].size()) {
      throw ValidationError("logit vector for '" + spec.dims[i].name + "' has wrong length");
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < alphas[i].size(); ++j)
      if (alphas[i][j] > alphas[i][best]) best = j;
    idx.push_back(static_cast<std::int64_t>(best));
  }
  return Architecture::from_indices(spec, idx);
}

Architecture discretize(const SearchSpaceSpec& spec, const ArchParams& arch) {
  return discretize(spec, arch.snapshot());
}

}  // namespace tnas
