#include "tnas/core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tnas/core/errors.hpp"

namespace tnas {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw ConsistencyError("checkpoint truncated while reading " + what);
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot open checkpoint for writing: " + path.string());
  os.write("TNAS", 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    for (double v : t.values()) {
      if (t.dtype() == DType::F32) {
        put<float>(os, static_cast<float>(v));
      } else {
        put<double>(os, v);
      }
    }
  }
  if (!os) throw ConfigError("failed writing checkpoint " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint: " + path.string());
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, "TNAS", 4) != 0) {
    throw FormatError("not a checkpoint (bad magic): " + path.string());
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(is, "tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = get<std::uint32_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw ConsistencyError("checkpoint truncated in a name");
    const auto tag = get<std::uint8_t>(is, "dtype");
    if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag) + " for " + name);
    const auto dtype = static_cast<DType>(tag);
    const auto rank = get<std::uint32_t>(is, "rank");
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::int64_t>(get<std::uint64_t>(is, "extent"));
    std::vector<double> values(static_cast<std::size_t>(numel(shape)));
    for (auto& v : values) {
      v = dtype == DType::F32 ? static_cast<double>(get<float>(is, name)) : get<double>(is, name);
    }
    out.push_back({std::move(name), DiffArray::from(std::move(shape), std::move(values), dtype)});
  }
  return out;
}

}  // namespace tnas
