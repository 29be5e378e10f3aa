#include "tnas/spaces/supernet.hpp"

#include <map>

#include "tnas/core/errors.hpp"
#include "tnas/core/ops.hpp"
#include "tnas/core/tape.hpp"

namespace tnas {

std::string to_string(SupernetMode m) { return m == SupernetMode::WE ? "WE" : "WS"; }

SupernetMode parse_mode(const std::string& s) {
  if (s == "WE" || s == "we") return SupernetMode::WE;
  if (s == "WS" || s == "ws") return SupernetMode::WS;
  throw ConfigError("unknown supernet mode '" + s + "'");
}

DiffArray SlicingWeights::get(const std::string&, const DiffArray& storage,
                              const std::vector<Window>& windows) {
  return slice_view(storage, windows);
}

DiffArray RecordingWeights::get(const std::string& key, const DiffArray& storage,
                                const std::vector<Window>& windows) {
  bool seen = false;
  for (const auto& u : uses_) seen = seen || u.key == key;
  if (!seen) uses_.push_back({key, storage, windows});
  return slice_view(storage, windows);
}

std::int64_t Model::param_count() const {
  std::int64_t n = 0;
  for (const auto& w : weights()) n += w.numel();
  return n;
}

DiffArray Supernet::forward_path(const Batch& batch, const Architecture& arch) const {
  SlicingWeights w;
  return forward_path(batch, arch, w);
}

std::vector<SliceUse> Supernet::path_slices(const Architecture& arch) const {
  arch.validate(spec());
  NoGradScope no_grad;
  RecordingWeights rec;
  forward_path(probe_batch(), arch, rec);
  return rec.uses();
}

std::vector<UpdateMask> Supernet::active_masks(const Architecture& arch) const {
  const auto params = parameters();
  std::map<const detail::Node*, std::size_t> index;
  std::vector<UpdateMask> masks(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    index[params[i].tensor.node().get()] = i;
    masks[i].assign(static_cast<std::size_t>(params[i].tensor.numel()), 0);
  }
  for (const auto& use : path_slices(arch)) {
    auto it = index.find(use.storage.node().get());
    if (it == index.end()) throw ConsistencyError("path uses an unregistered tensor: " + use.key);
    auto& mask = masks[it->second];
    // Mark the window: walk it as a block inside the storage.
    const Shape& shape = use.storage.shape();
    std::vector<std::int64_t> stride(shape.size(), 1);
    for (std::size_t a = shape.size() - 1; a-- > 0;) stride[a] = stride[a + 1] * shape[a + 1];
    std::vector<std::int64_t> idx(shape.size(), 0);
    std::int64_t total = 1;
    for (const auto& w : use.windows) total *= w.extent;
    for (std::int64_t e = 0; e < total; ++e) {
      std::int64_t off = 0;
      for (std::size_t a = 0; a < shape.size(); ++a) off += (use.windows[a].start + idx[a]) * stride[a];
      mask[static_cast<std::size_t>(off)] = 1;
      for (std::size_t a = shape.size(); a-- > 0;) {
        if (++idx[a] < use.windows[a].extent) break;
        idx[a] = 0;
      }
    }
  }
  return masks;
}

std::vector<DiffArray> Supernet::weights() const {
  std::vector<DiffArray> out;
  for (const auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

void Supernet::set_weights_requires_grad(bool flag) const {
  for (auto w : weights()) w.set_requires_grad(flag);
}

std::int64_t Supernet::param_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

std::vector<Architecture> Supernet::maximal_archs() const { return {Architecture::largest(spec())}; }

std::int64_t Supernet::maximal_param_count() const {
  std::vector<UpdateMask> cover;
  for (const auto& a : maximal_archs()) {
    auto m = active_masks(a);
    if (cover.empty()) {
      cover = std::move(m);
      continue;
    }
    for (std::size_t i = 0; i < m.size(); ++i)
      for (std::size_t j = 0; j < m[i].size(); ++j) cover[i][j] |= m[i][j];
  }
  std::int64_t n = 0;
  for (const auto& m : cover)
    for (auto v : m) n += v;
  return n;
}

std::int64_t Supernet::param_count(const Architecture& arch) const {
  std::int64_t n = 0;
  for (const auto& use : path_slices(arch)) {
    std::int64_t v = 1;
    for (const auto& w : use.windows) v *= w.extent;
    n += v;
  }
  return n;
}

namespace {

class InheritedModel final : public Model {
 public:
  InheritedModel(std::shared_ptr<const Supernet> net, Architecture arch)
      : net_(std::move(net)), arch_(std::move(arch)) {
    for (const auto& use : net_->path_slices(arch_)) {
      NoGradScope no_grad;
      auto copy = slice_view(use.storage, use.windows).detach();
      copy.set_requires_grad(true);
      keys_.push_back(use.key);
      tensors_.emplace(use.key, copy);
    }
  }

  DiffArray forward(const Batch& batch) override {
    Own own(*this);
    return net_->forward_path(batch, arch_, own);
  }

  std::vector<DiffArray> weights() const override {
    std::vector<DiffArray> out;
    for (const auto& k : keys_) out.push_back(tensors_.at(k));
    return out;
  }

 private:
  struct Own final : PathWeights {
    explicit Own(InheritedModel& m) : model(m) {}
    DiffArray get(const std::string& key, const DiffArray&,
                  const std::vector<Window>& windows) override {
      auto it = model.tensors_.find(key);
      if (it == model.tensors_.end()) throw ConsistencyError("inherited model lacks " + key);
      for (std::size_t a = 0; a < windows.size(); ++a) {
        if (it->second.dim(static_cast<std::int64_t>(a)) != windows[a].extent) {
          throw DimensionError("inherited tensor " + key + " has the wrong shape");
        }
      }
      return it->second;
    }
    InheritedModel& model;
  };

  std::shared_ptr<const Supernet> net_;
  Architecture arch_;
  std::vector<std::string> keys_;
  std::map<std::string, DiffArray> tensors_;
};

}  // namespace

std::unique_ptr<Model> Supernet::inherit(const Architecture& arch) const {
  return std::make_unique<InheritedModel>(shared_from_this(), arch);
}

MixtureWeights one_hot_mixture(const SearchSpaceSpec& spec, const Architecture& arch,
                               DType dtype) {
  const auto idx = arch.indices(spec);
  MixtureWeights out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::vector<double> v(spec.dims[i].size(), 0.0);
    v[static_cast<std::size_t>(idx[i])] = 1.0;
    const auto n = static_cast<std::int64_t>(v.size());
    out.push_back(DiffArray::from({n}, std::move(v), dtype));
  }
  return out;
}

DiffArray batch_loss(const DiffArray& logits, const Batch& batch) {
  return cross_entropy(logits, batch.labels);
}

double batch_accuracy(const DiffArray& logits, const Batch& batch) {
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<std::int64_t>(batch.labels.size()) != n) {
    throw DimensionError("accuracy: label count does not match logits");
  }
  const auto v = logits.values();
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < c; ++j)
      if (v[static_cast<std::size_t>(i * c + j)] > v[static_cast<std::size_t>(i * c + best)]) best = j;
    hits += best == batch.labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace tnas
