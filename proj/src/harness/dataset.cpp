#include "tnas/harness/dataset.hpp"

#include <cmath>
#include <numeric>

#include "tnas/core/errors.hpp"

namespace tnas {

Dataset Dataset::images(std::int64_t channels, std::int64_t height, std::int64_t width,
                        std::vector<double> pixels, std::vector<std::int32_t> labels,
                        std::int64_t num_classes) {
  const auto n = static_cast<std::int64_t>(labels.size());
  if (channels < 1 || height < 1 || width < 1) throw DimensionError("images: extents must be positive");
  if (static_cast<std::int64_t>(pixels.size()) != n * channels * height * width) {
    throw ConsistencyError("images: pixel count does not match labels x C x H x W");
  }
  for (auto l : labels) {
    if (l < 0 || l >= num_classes) {
      throw ValidationError("images: label " + std::to_string(l) + " outside [0, " +
                            std::to_string(num_classes - 1) + "]");
    }
  }
  auto d = std::make_shared<Data>();
  d->kind = DataKind::Image;
  d->c = channels;
  d->h = height;
  d->w = width;
  d->classes = num_classes;
  d->pixels = std::move(pixels);
  d->labels = std::move(labels);
  Dataset ds;
  ds.data_ = std::move(d);
  ds.view_.resize(static_cast<std::size_t>(n));
  std::iota(ds.view_.begin(), ds.view_.end(), 0);
  return ds;
}

Dataset Dataset::text(std::vector<std::int32_t> stream, std::int64_t seq, std::int64_t vocab) {
  if (seq < 1) throw ConfigError("text: sequence length must be positive");
  for (auto t : stream) {
    if (t < 0 || t >= vocab) throw ValidationError("text: token outside the vocabulary");
  }
  const auto n = (static_cast<std::int64_t>(stream.size()) - 1) / seq;
  if (n < 1) throw ConfigError("text: stream shorter than one window");
  auto d = std::make_shared<Data>();
  d->kind = DataKind::Text;
  d->seq = seq;
  d->classes = vocab;
  d->stream = std::move(stream);
  Dataset ds;
  ds.data_ = std::move(d);
  ds.view_.resize(static_cast<std::size_t>(n));
  std::iota(ds.view_.begin(), ds.view_.end(), 0);
  return ds;
}

Batch Dataset::batch(std::span<const std::int64_t> pos, DType dtype) const {
  if (!data_) throw NotReadyError("dataset is empty");
  Batch b;
  b.batch = static_cast<std::int64_t>(pos.size());
  const auto& d = *data_;
  if (d.kind == DataKind::Image) {
    const std::int64_t per = d.c * d.h * d.w;
    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(per) * pos.size());
    for (auto p : pos) {
      const auto id = view_.at(static_cast<std::size_t>(p));
      const auto* src = d.pixels.data() + id * per;
      x.insert(x.end(), src, src + per);
      b.labels.push_back(d.labels[static_cast<std::size_t>(id)]);
    }
    b.inputs = DiffArray::from({b.batch, d.c, d.h, d.w}, std::move(x), dtype);
    return b;
  }
  b.seq = d.seq;
  for (auto p : pos) {
    const auto id = view_.at(static_cast<std::size_t>(p));
    const auto* src = d.stream.data() + id * d.seq;
    b.tokens.insert(b.tokens.end(), src, src + d.seq);
    b.labels.insert(b.labels.end(), src + 1, src + d.seq + 1);
  }
  return b;
}

Batch Dataset::all(DType dtype) const {
  std::vector<std::int64_t> pos(view_.size());
  std::iota(pos.begin(), pos.end(), 0);
  return batch(pos, dtype);
}

Dataset Dataset::subset(std::vector<std::int64_t> pos) const {
  Dataset out;
  out.data_ = data_;
  out.view_.reserve(pos.size());
  for (auto p : pos) out.view_.push_back(view_.at(static_cast<std::size_t>(p)));
  return out;
}

std::int32_t Dataset::label(std::int64_t pos) const {
  if (data_->kind != DataKind::Image) throw PreconditionError("label() is for image sets");
  return data_->labels[static_cast<std::size_t>(view_.at(static_cast<std::size_t>(pos)))];
}

std::span<const double> Dataset::pixels(std::int64_t pos) const {
  if (data_->kind != DataKind::Image) throw PreconditionError("pixels() is for image sets");
  const std::int64_t per = data_->c * data_->h * data_->w;
  const auto id = view_.at(static_cast<std::size_t>(pos));
  return {data_->pixels.data() + id * per, static_cast<std::size_t>(per)};
}

std::uint64_t Dataset::checksum() const {
  std::vector<double> flat;
  for (auto id : view_) {
    flat.push_back(static_cast<double>(id));
    if (data_->kind == DataKind::Image) {
      const std::int64_t per = data_->c * data_->h * data_->w;
      flat.insert(flat.end(), data_->pixels.begin() + id * per, data_->pixels.begin() + (id + 1) * per);
      flat.push_back(data_->labels[static_cast<std::size_t>(id)]);
    } else {
      for (std::int64_t t = 0; t <= data_->seq; ++t)
        flat.push_back(data_->stream[static_cast<std::size_t>(id * data_->seq + t)]);
    }
  }
  return tnas::checksum(flat);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  const std::int64_t n = ds.size();
  const auto first = static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(n)));
  if (first < 1 || first >= n) throw ConfigError("split leaves one side empty");
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::int64_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
  std::vector<std::int64_t> a(perm.begin(), perm.begin() + first), b(perm.begin() + first, perm.end());
  return {ds.subset(std::move(a)), ds.subset(std::move(b))};
}

std::vector<std::vector<std::int64_t>> epoch_batches(std::int64_t n, std::int64_t batch_size,
                                                     Rng* rng) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (rng != nullptr)
    for (std::int64_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng->uniform_int(i + 1)]);
  std::vector<std::vector<std::int64_t>> out;
  for (std::int64_t s = 0; s < n; s += batch_size)
    out.emplace_back(order.begin() + s, order.begin() + std::min(n, s + batch_size));
  return out;
}

}  // namespace tnas
