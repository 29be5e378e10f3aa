#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tnas/superposition/entangled.hpp"

namespace tnas {

class ArchParams;

/// Search-space description: dims in canonical order, each owned by one site.
struct SearchSpaceSpec {
  std::string id;
  std::vector<ChoiceDim> dims;
  /// site id -> indices into dims
  std::vector<std::pair<std::string, std::vector<std::size_t>>> sites;
  std::string topology;
  std::string dataset_kind;

  std::int64_t cardinality() const;
  std::size_t dim_index(const std::string& name) const;
};

/// Discrete genotype: one chosen index per dim, keyed by dim name.
class Architecture {
 public:
  Architecture() = default;
  explicit Architecture(std::map<std::string, std::int64_t> assignment)
      : assignment_(std::move(assignment)) {}

  /// Indices listed in the spec's dim order.
  static Architecture from_indices(const SearchSpaceSpec& spec,
                                   const std::vector<std::int64_t>& indices);
  /// Mixed-radix decoding of 0 <= ordinal < cardinality (first dim slowest).
  static Architecture from_ordinal(const SearchSpaceSpec& spec, std::int64_t ordinal);
  static Architecture largest(const SearchSpaceSpec& spec);
  static Architecture random(const SearchSpaceSpec& spec, class Rng& rng);
  /// Parses the canonical text form `name=index;name=index`.
  static Architecture parse(const std::string& text);

  /// Canonical form: dims sorted by name.
  std::string to_string() const;
  std::int64_t at(const std::string& dim) const;
  std::int64_t& operator[](const std::string& dim) { return assignment_[dim]; }
  const std::map<std::string, std::int64_t>& assignment() const { return assignment_; }
  std::vector<std::int64_t> indices(const SearchSpaceSpec& spec) const;
  std::int64_t ordinal(const SearchSpaceSpec& spec) const;
  /// Throws ValidationError unless every dim is assigned a valid index and no extras exist.
  void validate(const SearchSpaceSpec& spec) const;

  bool operator==(const Architecture& o) const { return assignment_ == o.assignment_; }
  bool operator<(const Architecture& o) const { return assignment_ < o.assignment_; }

 private:
  std::map<std::string, std::int64_t> assignment_;
};

/// Per-dim argmax of the architecture logits; ties go to the lowest index.
Architecture discretize(const SearchSpaceSpec& spec, const ArchParams& arch);
Architecture discretize(const SearchSpaceSpec& spec, const std::vector<std::vector<double>>& alphas);

}  // namespace tnas
