#include "tnas/spaces/toy_cell.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "tnas/core/errors.hpp"
#include "tnas/core/ops.hpp"
#include "tnas/spaces/sites.hpp"

namespace tnas {

const std::vector<std::string>& toy_cell_ops() {
  static const std::vector<std::string> ops{"sep_conv_3x3", "sep_conv_5x5", "dil_conv_3x3",
                                            "dil_conv_5x5"};
  return ops;
}

namespace {

constexpr std::array<const char*, 3> kEdges{"e01", "e02", "e12"};
const std::vector<std::int64_t> kKernels{3, 5};

struct Norm {
  std::string name;
  DiffArray gamma, beta;

  Norm() = default;
  Norm(std::string n, std::int64_t c, DType dtype)
      : name(std::move(n)),
        gamma(DiffArray::parameter({c}, std::vector<double>(c, 1.0), dtype)),
        beta(DiffArray::parameter({c}, std::vector<double>(c, 0.0), dtype)) {}

  DiffArray mix(const DiffArray& x) const { return normalize_features(x, gamma, beta); }
  DiffArray path(const DiffArray& x, PathWeights& pw) const {
    return normalize_features(x, use_whole(pw, name + "/gamma", gamma),
                              use_whole(pw, name + "/beta", beta));
  }
  void collect(std::vector<NamedTensor>& out) const {
    out.push_back({name + "/gamma", gamma});
    out.push_back({name + "/beta", beta});
  }
};

/// relu -> depthwise k -> pointwise -> norm, or relu -> dilated k -> norm.
/// With a kernel dim the block covers both kernel sizes of its type.
struct Block {
  bool sep = true;
  AffineSite spatial, pointwise;
  Norm norm;

  Block() = default;
  Block(const std::string& name, bool is_sep, std::vector<std::int64_t> kernels, std::int64_t c,
        std::int64_t stride, Rng& rng, DType dtype)
      : sep(is_sep) {
    const std::int64_t k = kernels.back();
    std::vector<ChoiceDim> dims;
    if (kernels.size() > 1) dims.push_back({name + "/kernel", kernels, {2, 3}, Alignment::Centered});
    AffineOptions o{.conv = true, .stride = stride, .dilation = sep ? 1 : 2, .depthwise = sep,
                    .bias = false, .gain = std::sqrt(2.0)};
    spatial = AffineSite(name + (sep ? "/dw" : "/conv"), SupernetMode::WE,
                         Shape{c, sep ? 1 : c, k, k}, dims, {}, o, rng, dtype);
    if (sep) {
      pointwise = AffineSite(name + "/pw", SupernetMode::WE, Shape{c, c, 1, 1}, {}, {},
                             AffineOptions{.conv = true, .bias = false}, rng, dtype);
    }
    norm = Norm(name + "/norm", c, dtype);
  }

  DiffArray mix(const DiffArray& x, const MixtureWeights& m) const {
    auto y = spatial.mix(relu(x), m);
    if (sep) y = pointwise.mix(y, {});
    return norm.mix(y);
  }
  DiffArray path(const DiffArray& x, std::int64_t kidx, PathWeights& pw) const {
    std::vector<std::int64_t> choice;
    if (!spatial.entangled().dims().empty()) choice.push_back(kidx);
    auto y = spatial.path(relu(x), choice, pw);
    if (sep) y = pointwise.path(y, {}, pw);
    return norm.path(y, pw);
  }
  void collect(std::vector<NamedTensor>& out) const {
    spatial.collect(out);
    if (sep) pointwise.collect(out);
    norm.collect(out);
  }
};

/// One edge. WE: a sep block and a dil block, each entangling 3x3 inside
/// 5x5. WS: four independent blocks.
struct Edge {
  SupernetMode mode = SupernetMode::WE;
  std::vector<Block> blocks;

  Edge(const std::string& name, SupernetMode m, std::int64_t c, std::int64_t stride, Rng& rng,
       DType dtype)
      : mode(m) {
    if (mode == SupernetMode::WE) {
      blocks.emplace_back(name + "/sep", true, kKernels, c, stride, rng, dtype);
      blocks.emplace_back(name + "/dil", false, kKernels, c, stride, rng, dtype);
    } else {
      for (std::size_t i = 0; i < 4; ++i) {
        blocks.emplace_back(name + "/" + toy_cell_ops()[i], i < 2, std::vector<std::int64_t>{kKernels[i % 2]},
                            c, stride, rng, dtype);
      }
    }
  }

  DiffArray mix(const DiffArray& x, const DiffArray& w) const {
    if (w.numel() != 4) throw DimensionError("toy cell: edge mixture must have 4 entries");
    if (mode == SupernetMode::WS) {
      std::vector<DiffArray> terms;
      for (std::size_t i = 0; i < 4; ++i)
        terms.push_back(scale_by(blocks[i].mix(x, {}), w, static_cast<std::int64_t>(i)));
      return add_n(terms);
    }
    std::vector<DiffArray> terms;
    for (std::int64_t t = 0; t < 2; ++t) {
      const std::vector<Window> win{{2 * t, 2}};
      const auto part = slice_view(w, win);
      const auto s = sum(part);
      // A type with zero total weight contributes 0 * output; its kernel
      // split is then arbitrary, so use an even one.
      const auto m = s.item() > 0.0 ? normalize_sum(part)
                                    : DiffArray::from({2}, {0.5, 0.5}, w.dtype());
      terms.push_back(scale_by(blocks[static_cast<std::size_t>(t)].mix(x, {m}), s, 0));
    }
    return add_n(terms);
  }

  DiffArray path(const DiffArray& x, std::int64_t op, PathWeights& pw) const {
    if (mode == SupernetMode::WS) return blocks.at(static_cast<std::size_t>(op)).path(x, 0, pw);
    return blocks.at(static_cast<std::size_t>(op / 2)).path(x, op % 2, pw);
  }

  void collect(std::vector<NamedTensor>& out) const {
    for (const auto& b : blocks) b.collect(out);
  }
};

struct Cell {
  bool reduce = false;
  AffineSite pre;
  Norm pre_norm;
  std::vector<Edge> edges;
  std::size_t first_dim = 0;  // e01, e02, e12 dims start here

  DiffArray mix(const DiffArray& in, const MixtureWeights& mixes) const {
    const auto n0 = pre_norm.mix(pre.mix(relu(in), {}));
    const auto n1 = edges[0].mix(n0, mixes[first_dim]);
    const auto n2 = add(edges[1].mix(n0, mixes[first_dim + 1]), edges[2].mix(n1, mixes[first_dim + 2]));
    return concat({n1, n2}, 1);
  }

  DiffArray path(const DiffArray& in, const std::vector<std::int64_t>& idx, PathWeights& pw) const {
    const auto n0 = pre_norm.path(pre.path(relu(in), {}, pw), pw);
    const auto n1 = edges[0].path(n0, idx[first_dim], pw);
    const auto n2 =
        add(edges[1].path(n0, idx[first_dim + 1], pw), edges[2].path(n1, idx[first_dim + 2], pw));
    return concat({n1, n2}, 1);
  }

  void collect(std::vector<NamedTensor>& out) const {
    pre.collect(out);
    pre_norm.collect(out);
    for (const auto& e : edges) e.collect(out);
  }
};

class ToyCell final : public Supernet {
 public:
  explicit ToyCell(const ToyCellConfig& cfg) : cfg_(cfg) {
    if (cfg.base_channels < 4) throw ConfigError("toy cell: base_channels must be >= 4");
    if (cfg.num_classes < 2 || cfg.in_channels < 1 || cfg.image_size < 4) {
      throw ConfigError("toy cell: invalid configuration");
    }
    spec_.id = "toy_cell";
    spec_.topology = "cell DAG: stem, reduce, normal, reduce; nodes {0,1,2}; edges 0-1, 0-2, 1-2";
    spec_.dataset_kind = "image";
    std::vector<std::int64_t> codes{1, 2, 3, 4};
    for (const char* kind : {"normal", "reduce"}) {
      for (const char* e : kEdges) {
        const std::string name = std::string(kind) + "/" + e;
        spec_.sites.push_back({name, {spec_.dims.size()}});
        spec_.dims.push_back({name + "/op", codes, {0}, Alignment::Leading});
      }
    }

    Rng rng(cfg.seed);
    const std::int64_t c = cfg.base_channels;
    stem_ = AffineSite("stem", SupernetMode::WE, Shape{c, cfg.in_channels, 3, 3}, {}, {},
                       AffineOptions{.conv = true, .bias = false, .gain = std::sqrt(2.0)}, rng,
                       cfg.dtype);
    stem_norm_ = Norm("stem/norm", c, cfg.dtype);
    const std::array<bool, 3> reduce{true, false, true};
    const std::array<std::int64_t, 3> width{c, c, 2 * c};
    std::int64_t cin = c;
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string p = "cell" + std::to_string(i);
      Cell cell;
      cell.reduce = reduce[i];
      cell.first_dim = reduce[i] ? 3 : 0;
      cell.pre = AffineSite(p + "/pre", SupernetMode::WE, Shape{width[i], cin, 1, 1}, {}, {},
                            AffineOptions{.conv = true, .bias = false}, rng, cfg.dtype);
      cell.pre_norm = Norm(p + "/pre/norm", width[i], cfg.dtype);
      for (std::size_t e = 0; e < 3; ++e) {
        const std::int64_t stride = reduce[i] && e < 2 ? 2 : 1;
        cell.edges.emplace_back(p + "/" + kEdges[e], cfg.mode, width[i], stride, rng, cfg.dtype);
      }
      cells_.push_back(std::move(cell));
      cin = 2 * width[i];
    }
    head_ = AffineSite("head", SupernetMode::WE, Shape{cfg.num_classes, cin}, {}, {},
                       AffineOptions{}, rng, cfg.dtype);
  }

  const SearchSpaceSpec& spec() const override { return spec_; }
  SupernetMode mode() const override { return cfg_.mode; }

  DiffArray forward_mixture(const Batch& batch, const MixtureWeights& mixes) const override {
    if (mixes.size() != spec_.dims.size()) throw ConfigError("toy cell: one mixture per edge");
    auto x = stem_norm_.mix(stem_.mix(batch.inputs, {}));
    for (const auto& cell : cells_) x = cell.mix(x, mixes);
    return head_.mix(global_avg_pool(x), {});
  }

  DiffArray forward_path(const Batch& batch, const Architecture& arch,
                         PathWeights& pw) const override {
    const auto idx = arch.indices(spec_);
    auto x = stem_norm_.path(stem_.path(batch.inputs, {}, pw), pw);
    for (const auto& cell : cells_) x = cell.path(x, idx, pw);
    return head_.path(global_avg_pool(x), {}, pw);
  }

  std::vector<NamedTensor> parameters() const override {
    std::vector<NamedTensor> out;
    stem_.collect(out);
    stem_norm_.collect(out);
    for (const auto& c : cells_) c.collect(out);
    head_.collect(out);
    return out;
  }

  std::vector<Architecture> maximal_archs() const override {
    if (cfg_.mode == SupernetMode::WS) return Supernet::maximal_archs();
    return {Architecture::from_indices(spec_, std::vector<std::int64_t>(6, 1)),
            Architecture::from_indices(spec_, std::vector<std::int64_t>(6, 3))};
  }

  Batch probe_batch() const override {
    Batch b;
    b.inputs = DiffArray::zeros({1, cfg_.in_channels, cfg_.image_size, cfg_.image_size}, cfg_.dtype);
    b.batch = 1;
    b.labels = {0};
    return b;
  }

 private:
  ToyCellConfig cfg_;
  SearchSpaceSpec spec_;
  AffineSite stem_, head_;
  Norm stem_norm_;
  std::vector<Cell> cells_;
};

}  // namespace

SupernetPtr build_toy_cell_space(const ToyCellConfig& cfg) { return std::make_shared<ToyCell>(cfg); }

std::string genotype_string(const SearchSpaceSpec& spec, const Architecture& arch) {
  const auto idx = arch.indices(spec);
  if (idx.size() != 6) throw ValidationError("genotype: not a toy-cell architecture");
  const std::array<int, 3> input{0, 0, 1};
  auto cell = [&](std::size_t first) {
    std::ostringstream os;
    os << '[';
    for (std::size_t e = 0; e < 3; ++e) {
      if (e) os << ", ";
      os << "('" << toy_cell_ops().at(static_cast<std::size_t>(idx[first + e])) << "', " << input[e] << ')';
    }
    os << ']';
    return os.str();
  };
  return "Genotype(normal=" + cell(0) + ", normal_concat=range(1, 3), reduce=" + cell(3) +
         ", reduce_concat=range(1, 3))";
}

}  // namespace tnas
