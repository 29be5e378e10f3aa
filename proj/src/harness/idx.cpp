#include "tnas/harness/idx.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tnas/core/errors.hpp"

namespace tnas {

namespace {

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const std::string& path) {
  if (b.size() < at + 4) throw ConsistencyError(path + ": truncated header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

std::string hex(std::uint32_t v) {
  std::ostringstream s;
  s << "0x" << std::hex;
  s.width(8);
  s.fill('0');
  s << v;
  return s.str();
}

void check_magic(std::uint32_t got, std::uint32_t want, const std::string& path) {
  if (got != want) {
    throw FormatError(path + ": bad IDX magic " + hex(got) + " (expected " + hex(want) + ")");
  }
}

}  // namespace

Dataset load_idx_images(const std::string& images_path, const std::string& labels_path,
                        std::int64_t num_classes) {
  const auto img = slurp(images_path);
  const auto lab = slurp(labels_path);
  check_magic(be32(img, 0, images_path), kIdxImageMagic, images_path);
  check_magic(be32(lab, 0, labels_path), kIdxLabelMagic, labels_path);

  const std::int64_t n = be32(img, 4, images_path);
  const std::int64_t h = be32(img, 8, images_path);
  const std::int64_t w = be32(img, 12, images_path);
  const std::int64_t nl = be32(lab, 4, labels_path);
  if (n != nl) {
    throw ConsistencyError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                           std::to_string(nl) + " labels");
  }
  const std::size_t img_bytes = static_cast<std::size_t>(n * h * w);
  if (img.size() != 16 + img_bytes) {
    throw ConsistencyError(images_path + ": payload has " + std::to_string(img.size() - 16) +
                           " bytes, header says " + std::to_string(img_bytes));
  }
  if (lab.size() != 8 + static_cast<std::size_t>(n)) {
    throw ConsistencyError(labels_path + ": payload has " + std::to_string(lab.size() - 8) +
                           " bytes, header says " + std::to_string(n));
  }

  std::vector<double> pixels(img_bytes);
  for (std::size_t i = 0; i < img_bytes; ++i) pixels[i] = img[16 + i] / 255.0;
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) labels[i] = lab[8 + i];
  return Dataset::images(1, h, w, std::move(pixels), std::move(labels), num_classes);
}

void write_idx_images(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path) {
  if (ds.kind() != DataKind::Image || ds.channels() != 1) {
    throw PreconditionError("IDX holds single-channel images only");
  }
  std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
  std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
  if (!img || !lab) throw ConfigError("cannot write " + images_path + " / " + labels_path);
  const auto n = static_cast<std::uint32_t>(ds.size());
  put32(img, kIdxImageMagic);
  put32(img, n);
  put32(img, static_cast<std::uint32_t>(ds.height()));
  put32(img, static_cast<std::uint32_t>(ds.width()));
  put32(lab, kIdxLabelMagic);
  put32(lab, n);
  for (std::int64_t i = 0; i < ds.size(); ++i) {
    for (double p : ds.pixels(i)) {
      img.put(static_cast<char>(std::clamp(std::lround(p * 255.0), 0L, 255L)));
    }
    lab.put(static_cast<char>(ds.label(i)));
  }
}

DataSplits load_idx_directory(const std::string& dir, double val_fraction, std::uint64_t seed) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  auto train = load_idx_images((d / "train-images-idx3-ubyte").string(),
                               (d / "train-labels-idx1-ubyte").string());
  auto test = load_idx_images((d / "t10k-images-idx3-ubyte").string(),
                              (d / "t10k-labels-idx1-ubyte").string());
  auto [val, rest] = split_dataset(train, val_fraction, seed);
  return {rest, val, test};
}

}  // namespace tnas
