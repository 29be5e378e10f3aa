#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tnas/core/checkpoint.hpp"
#include "tnas/core/optim.hpp"
#include "tnas/spaces/architecture.hpp"

namespace tnas {

enum class SupernetMode : std::uint8_t { WE, WS };
std::string to_string(SupernetMode m);
SupernetMode parse_mode(const std::string& s);

/// One minibatch. Image spaces use `inputs` [N,C,H,W] with a class per
/// image; the LM uses `tokens` (batch*seq ids) with the next token per
/// position as label.
struct Batch {
  DiffArray inputs;
  std::vector<std::int32_t> tokens;
  std::int64_t batch = 0;
  std::int64_t seq = 0;
  std::vector<std::int32_t> labels;

  std::int64_t size() const { return batch; }
};

/// Where a discrete path gets its tensors from. Supernet paths slice the
/// stored tensors; inherited models hand out their own copies.
class PathWeights {
 public:
  virtual ~PathWeights() = default;
  virtual DiffArray get(const std::string& key, const DiffArray& storage,
                        const std::vector<Window>& windows) = 0;
};

class SlicingWeights final : public PathWeights {
 public:
  DiffArray get(const std::string& key, const DiffArray& storage,
                const std::vector<Window>& windows) override;
};

struct SliceUse {
  std::string key;
  DiffArray storage;
  std::vector<Window> windows;
};

/// Records which slices a path touches (deduplicated by key).
class RecordingWeights final : public PathWeights {
 public:
  DiffArray get(const std::string& key, const DiffArray& storage,
                const std::vector<Window>& windows) override;
  const std::vector<SliceUse>& uses() const { return uses_; }

 private:
  std::vector<SliceUse> uses_;
};

/// A trainable network with fixed structure.
class Model {
 public:
  virtual ~Model() = default;
  virtual DiffArray forward(const Batch& batch) = 0;
  virtual std::vector<DiffArray> weights() const = 0;
  std::int64_t param_count() const;
};

class Supernet : public std::enable_shared_from_this<Supernet> {
 public:
  virtual ~Supernet() = default;

  virtual const SearchSpaceSpec& spec() const = 0;
  virtual SupernetMode mode() const = 0;
  /// Logits under simplex weights given per dim in spec order.
  virtual DiffArray forward_mixture(const Batch& batch, const MixtureWeights& mixes) const = 0;
  virtual DiffArray forward_path(const Batch& batch, const Architecture& arch,
                                 PathWeights& weights) const = 0;
  /// Every learnable weight tensor (architecture logits excluded).
  virtual std::vector<NamedTensor> parameters() const = 0;
  /// Smallest valid batch; used to trace which slices a path touches.
  virtual Batch probe_batch() const = 0;

  DiffArray forward_path(const Batch& batch, const Architecture& arch) const;
  std::vector<SliceUse> path_slices(const Architecture& arch) const;
  /// One mask per parameters() entry: 1 where the path's slices live.
  std::vector<UpdateMask> active_masks(const Architecture& arch) const;
  std::vector<DiffArray> weights() const;
  void set_weights_requires_grad(bool flag) const;
  std::int64_t param_count() const;
  std::int64_t param_count(const Architecture& arch) const;
  /// Architectures holding the largest member of every entanglement group.
  /// One for most spaces; the toy cell keeps separable and dilated storage
  /// apart, so its largest realisation needs an all-sep5 and an all-dil5 path.
  virtual std::vector<Architecture> maximal_archs() const;
  /// Scalars covered by the union of the maximal paths.
  std::int64_t maximal_param_count() const;
  /// Standalone network holding copies of the path's slices.
  std::unique_ptr<Model> inherit(const Architecture& arch) const;
};

using SupernetPtr = std::shared_ptr<Supernet>;

/// One-hot simplex per dim selecting `arch`.
MixtureWeights one_hot_mixture(const SearchSpaceSpec& spec, const Architecture& arch,
                               DType dtype = DType::F64);

/// Mean cross-entropy of logits against the batch labels.
DiffArray batch_loss(const DiffArray& logits, const Batch& batch);
/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double batch_accuracy(const DiffArray& logits, const Batch& batch);

}  // namespace tnas
