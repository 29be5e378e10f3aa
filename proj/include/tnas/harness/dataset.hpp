#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "tnas/core/rng.hpp"
#include "tnas/spaces/supernet.hpp"

namespace tnas {

enum class DataKind : std::uint8_t { Image, Text };

/// Labelled examples behind a cheap index view. Images are [C,H,W] with a
/// class label; text examples are windows of seq+1 tokens from one stream
/// (inputs are the first seq, labels the last seq).
class Dataset {
 public:
  Dataset() = default;
  static Dataset images(std::int64_t channels, std::int64_t height, std::int64_t width,
                        std::vector<double> pixels, std::vector<std::int32_t> labels,
                        std::int64_t num_classes);
  static Dataset text(std::vector<std::int32_t> stream, std::int64_t seq, std::int64_t vocab);

  DataKind kind() const { return data_->kind; }
  std::int64_t size() const { return static_cast<std::int64_t>(view_.size()); }
  bool empty() const { return view_.empty(); }
  /// Classes for images, vocabulary for text.
  std::int64_t num_classes() const { return data_->classes; }
  std::int64_t channels() const { return data_->c; }
  std::int64_t height() const { return data_->h; }
  std::int64_t width() const { return data_->w; }
  std::int64_t seq() const { return data_->seq; }

  /// Examples at view positions `pos`.
  Batch batch(std::span<const std::int64_t> pos, DType dtype = DType::F64) const;
  /// Whole view as one batch.
  Batch all(DType dtype = DType::F64) const;
  Dataset subset(std::vector<std::int64_t> pos) const;
  std::int32_t label(std::int64_t pos) const;
  std::span<const double> pixels(std::int64_t pos) const;
  /// Underlying example ids of the view.
  const std::vector<std::int64_t>& ids() const { return view_; }
  std::uint64_t checksum() const;

 private:
  struct Data {
    DataKind kind = DataKind::Image;
    std::int64_t c = 0, h = 0, w = 0, seq = 0, classes = 0;
    std::vector<double> pixels;
    std::vector<std::int32_t> labels;
    std::vector<std::int32_t> stream;
  };
  std::shared_ptr<const Data> data_;
  std::vector<std::int64_t> view_;
};

/// Seeded disjoint split; the first part holds round(fraction * n) examples.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction, std::uint64_t seed);

/// Positions 0..n-1 cut into batches, shuffled when rng is given.
std::vector<std::vector<std::int64_t>> epoch_batches(std::int64_t n, std::int64_t batch_size,
                                                     Rng* rng);

struct DataSplits {
  Dataset train, val, test;
};

}  // namespace tnas
