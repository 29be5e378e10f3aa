#include "tnas/spaces/tiny_lm.hpp"

#include <algorithm>

#include "tnas/core/errors.hpp"
#include "tnas/core/ops.hpp"
#include "tnas/spaces/sites.hpp"

namespace tnas {

LmChoices lm_preset(const std::string& preset) {
  if (preset == "full") return {{384, 576, 768}, {6, 8, 12}, {2, 3, 4}, {5, 6, 7}};
  if (preset == "desk") return {{32, 48, 64}, {2, 4}, {2, 4}, {2, 3, 4}};
  throw ConfigError("unknown LM preset '" + preset + "'");
}

namespace {

enum Dim : std::size_t { kEmbed = 0, kHeads = 1, kRatio = 2, kLayers = 3 };

struct Layer {
  NormSite ln1, ln2;
  AffineSite q, k, v, o, fc1, fc2;
};

class TinyLm final : public Supernet {
 public:
  explicit TinyLm(const TinyLmConfig& cfg) : cfg_(cfg), choices_(lm_preset(cfg.preset)) {
    if (cfg.vocab < 2 || cfg.context < 1) throw ConfigError("tiny LM: invalid vocab or context");
    spec_.id = "tiny_lm_" + cfg.preset;
    spec_.topology = "layer stack: pre-norm decoder blocks, depth by prefix mixing";
    spec_.dataset_kind = "text";
    ChoiceDim embed{"embed", choices_.embed, {}, Alignment::Leading};
    ChoiceDim heads{"heads", choices_.heads, {0}, Alignment::Leading};
    ChoiceDim ratio{"ratio", choices_.ratio, {0}, Alignment::Leading};
    ChoiceDim layers{"layers", choices_.layers, {0}, Alignment::Leading};
    for (const auto* d : {&embed, &heads, &ratio, &layers}) {
      validate_choice_dim(*d);
      spec_.sites.push_back({d->name, {spec_.dims.size()}});
      spec_.dims.push_back(*d);
    }
    const std::int64_t emax = embed.max_choice(), hmax = heads.max_choice(),
                       rmax = ratio.max_choice();
    if (emax % hmax != 0) throw ConfigError("tiny LM: max embed must divide by max heads");
    for (auto e : embed.choices)
      if (e % 2 != 0) throw ConfigError("tiny LM: embed choices must be even");
    hd_ = emax / hmax;

    Rng rng(cfg.seed);
    auto at = [](ChoiceDim d, std::vector<std::size_t> axes) {
      d.target_axes = std::move(axes);
      return d;
    };
    const auto m = cfg.mode;
    const auto dt = cfg.dtype;
    tok_ = EmbedSite("tok_emb", m, cfg.vocab, at(embed, {1}), 0.1, rng, dt);
    pos_ = EmbedSite("pos_emb", m, cfg.context, at(embed, {1}), 0.1, rng, dt);
    for (std::int64_t l = 0; l < layers.max_choice(); ++l) {
      const std::string p = "layer" + std::to_string(l);
      Layer L;
      L.ln1 = NormSite(p + "/ln1", m, at(embed, {0}), dt);
      L.ln2 = NormSite(p + "/ln2", m, at(embed, {0}), dt);
      const std::vector<ChoiceDim> eh{at(embed, {1}), at(heads, {0})};
      const std::vector<std::int64_t> unit_out{hd_, 1};
      L.q = AffineSite(p + "/q", m, {hmax * hd_, emax}, eh, unit_out, {}, rng, dt);
      L.k = AffineSite(p + "/k", m, {hmax * hd_, emax}, eh, unit_out, {}, rng, dt);
      L.v = AffineSite(p + "/v", m, {hmax * hd_, emax}, eh, unit_out, {}, rng, dt);
      L.o = AffineSite(p + "/o", m, {emax, hmax * hd_}, {at(embed, {0}), at(heads, {1})},
                       {1, hd_}, {}, rng, dt);
      L.fc1 = AffineSite(p + "/fc1", m, {emax * rmax, emax}, {at(embed, {0, 1}), at(ratio, {0})},
                         {}, {}, rng, dt);
      L.fc2 = AffineSite(p + "/fc2", m, {emax, emax * rmax}, {at(embed, {0, 1}), at(ratio, {1})},
                         {}, {}, rng, dt);
      layers_.push_back(std::move(L));
    }
    ln_f_ = NormSite("ln_f", m, at(embed, {0}), dt);
    head_ = AffineSite("head", m, {cfg.vocab, emax}, {at(embed, {1})}, {}, {}, rng, dt);
  }

  const SearchSpaceSpec& spec() const override { return spec_; }
  SupernetMode mode() const override { return cfg_.mode; }

  DiffArray forward_mixture(const Batch& batch, const MixtureWeights& mixes) const override {
    if (mixes.size() != 4) throw ConfigError("tiny LM: one mixture per dim");
    check(batch);
    const auto& we = mixes[kEmbed];
    const auto& wh = mixes[kHeads];
    const auto& wr = mixes[kRatio];
    const auto& wl = mixes[kLayers];
    const std::int64_t hmax = choices_.heads.back();
    auto h = add(tok_.mix(batch.tokens, we), pos_.mix(positions(batch), we));
    const auto& depth = choices_.layers;
    std::vector<DiffArray> outs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      const auto a = L.ln1.mix(h, we);
      const auto att = causal_attention(L.q.mix(a, {we, wh}), L.k.mix(a, {we, wh}),
                                        L.v.mix(a, {we, wh}), batch.batch, batch.seq, hmax);
      h = add(h, L.o.mix(att, {we, wh}));
      const auto f = L.fc1.mix(L.ln2.mix(h, we), {we, wr});
      h = add(h, L.fc2.mix(gelu(f), {we, wr}));
      const auto it = std::find(depth.begin(), depth.end(), static_cast<std::int64_t>(l + 1));
      if (it != depth.end()) {
        const auto logits = head_.mix(ln_f_.mix(h, we), {we});
        outs.push_back(scale_by(logits, wl, it - depth.begin()));
      }
    }
    return add_n(outs);
  }

  DiffArray forward_path(const Batch& batch, const Architecture& arch,
                         PathWeights& pw) const override {
    check(batch);
    const auto idx = arch.indices(spec_);
    const std::int64_t e = idx[kEmbed];
    const std::int64_t nh = choices_.heads[static_cast<std::size_t>(idx[kHeads])];
    const std::vector<std::int64_t> eh{idx[kEmbed], idx[kHeads]}, er{idx[kEmbed], idx[kRatio]};
    auto h = add(tok_.path(batch.tokens, e, pw), pos_.path(positions(batch), e, pw));
    const std::int64_t depth = choices_.layers[static_cast<std::size_t>(idx[kLayers])];
    for (std::int64_t l = 0; l < depth; ++l) {
      const auto& L = layers_[static_cast<std::size_t>(l)];
      const auto a = L.ln1.path(h, e, pw);
      const auto att = causal_attention(L.q.path(a, eh, pw), L.k.path(a, eh, pw),
                                        L.v.path(a, eh, pw), batch.batch, batch.seq, nh);
      h = add(h, L.o.path(att, eh, pw));
      const auto f = L.fc1.path(L.ln2.path(h, e, pw), er, pw);
      h = add(h, L.fc2.path(gelu(f), er, pw));
    }
    return head_.path(ln_f_.path(h, e, pw), {e}, pw);
  }

  std::vector<NamedTensor> parameters() const override {
    std::vector<NamedTensor> out;
    tok_.collect(out);
    pos_.collect(out);
    for (const auto& L : layers_) {
      L.ln1.collect(out);
      L.q.collect(out);
      L.k.collect(out);
      L.v.collect(out);
      L.o.collect(out);
      L.ln2.collect(out);
      L.fc1.collect(out);
      L.fc2.collect(out);
    }
    ln_f_.collect(out);
    head_.collect(out);
    return out;
  }

  Batch probe_batch() const override {
    Batch b;
    b.tokens = {0};
    b.batch = 1;
    b.seq = 1;
    b.labels = {0};
    return b;
  }

 private:
  void check(const Batch& b) const {
    if (b.seq < 1 || b.seq > cfg_.context || b.batch < 1 ||
        static_cast<std::int64_t>(b.tokens.size()) != b.batch * b.seq) {
      throw DimensionError("tiny LM: token batch does not match batch x seq within the context");
    }
  }

  static std::vector<std::int32_t> positions(const Batch& b) {
    std::vector<std::int32_t> pos;
    pos.reserve(b.tokens.size());
    for (std::int64_t i = 0; i < b.batch; ++i)
      for (std::int64_t t = 0; t < b.seq; ++t) pos.push_back(static_cast<std::int32_t>(t));
    return pos;
  }

  TinyLmConfig cfg_;
  LmChoices choices_;
  SearchSpaceSpec spec_;
  std::int64_t hd_ = 1;
  EmbedSite tok_, pos_;
  std::vector<Layer> layers_;
  NormSite ln_f_;
  AffineSite head_;
};

}  // namespace

SupernetPtr build_tiny_lm_space(const TinyLmConfig& cfg) { return std::make_shared<TinyLm>(cfg); }

}  // namespace tnas
