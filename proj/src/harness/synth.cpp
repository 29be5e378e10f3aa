#include "tnas/harness/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "tnas/core/errors.hpp"

namespace tnas {

std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::PlantedKernel: return "planted_kernel";
    case SynthKind::PlantedChannel: return "planted_channel";
    case SynthKind::CharGrammar: return "char_grammar";
  }
  return "?";
}

SynthKind parse_synth_kind(const std::string& s) {
  if (s == "planted_kernel") return SynthKind::PlantedKernel;
  if (s == "planted_channel") return SynthKind::PlantedChannel;
  if (s == "char_grammar") return SynthKind::CharGrammar;
  throw ConfigError("unknown synthetic task '" + s + "'");
}

namespace {

using Motif = std::vector<double>;  // row-major extent x extent

std::vector<Motif> kernel_motifs(std::int64_t classes, std::int64_t extent, Rng& rng) {
  const std::int64_t e = extent;
  Motif centre(static_cast<std::size_t>(e * e), 0.0);
  std::vector<Motif> out;
  for (std::int64_t y = 1; y < e - 1; ++y)
    for (std::int64_t x = 1; x < e - 1; ++x) centre[static_cast<std::size_t>(y * e + x)] = rng.bernoulli(0.5) ? 1.0 : -1.0;
  for (std::int64_t c = 0; c < classes; ++c) {
    Motif m = centre;
    for (std::int64_t y = 0; y < e; ++y)
      for (std::int64_t x = 0; x < e; ++x)
        if (y == 0 || x == 0 || y == e - 1 || x == e - 1) m[static_cast<std::size_t>(y * e + x)] = rng.bernoulli(0.5) ? 1.0 : -1.0;
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Motif> channel_motifs(std::int64_t classes, Rng& rng) {
  std::vector<Motif> out;
  for (std::int64_t c = 0; c < classes; ++c) {
    Motif m(9);
    for (auto& v : m) v = rng.bernoulli(0.5) ? 1.0 : -1.0;
    out.push_back(std::move(m));
  }
  return out;
}

Dataset render(const SynthImageSpec& spec, const std::vector<Motif>& motifs, std::int64_t extent,
               std::int64_t n, Rng& rng) {
  const std::int64_t s = spec.image_size;
  const std::int64_t half = extent / 2;
  std::vector<double> pixels(static_cast<std::size_t>(n * s * s));
  std::vector<std::int32_t> labels;
  const auto classes = static_cast<std::int64_t>(motifs.size());
  for (std::int64_t i = 0; i < n; ++i) {
    // balanced labels: exact round robin, then positions shuffle nothing
    const auto label = static_cast<std::int32_t>(i % classes);
    labels.push_back(label);
    double* img = pixels.data() + i * s * s;
    for (std::int64_t p = 0; p < s * s; ++p) img[p] = spec.noise * rng.normal();
    const std::int64_t cy = half + rng.uniform_int(s - 2 * half);
    const std::int64_t cx = half + rng.uniform_int(s - 2 * half);
    const auto& m = motifs[static_cast<std::size_t>(label)];
    for (std::int64_t y = 0; y < extent; ++y)
      for (std::int64_t x = 0; x < extent; ++x) img[(cy - half + y) * s + (cx - half + x)] += m[static_cast<std::size_t>(y * extent + x)];
    if (spec.kind == SynthKind::PlantedKernel && spec.clutter > 0.0) {
      const std::int64_t r = half + 1;
      for (std::int64_t y = cy - r; y <= cy + r; ++y)
        for (std::int64_t x = cx - r; x <= cx + r; ++x) {
          const bool ring = std::max(std::abs(y - cy), std::abs(x - cx)) == r;
          if (ring && y >= 0 && x >= 0 && y < s && x < s) img[y * s + x] += spec.clutter * (rng.bernoulli(0.5) ? 1.0 : -1.0);
        }
    }
  }
  // interleave classes randomly so batches are mixed
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
  std::vector<double> px(pixels.size());
  std::vector<std::int32_t> lb(labels.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const auto src = perm[static_cast<std::size_t>(i)];
    std::copy_n(pixels.begin() + src * s * s, s * s, px.begin() + i * s * s);
    lb[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(src)];
  }
  return Dataset::images(1, s, s, std::move(px), std::move(lb), classes);
}

}  // namespace

DataSplits synth_image_dataset(const SynthImageSpec& spec) {
  if (spec.kind == SynthKind::CharGrammar) throw ConfigError("char_grammar is not an image task");
  if (spec.num_classes < 2 || spec.train < spec.num_classes || spec.val < 1 || spec.test < 1) {
    throw ConfigError("synthetic images: need >= 2 classes and non-empty splits");
  }
  const std::int64_t extent = spec.kind == SynthKind::PlantedKernel ? spec.motif_extent : 3;
  if (extent % 2 == 0 || extent < 3 || extent > spec.image_size) {
    throw ConfigError("synthetic images: motif extent must be odd and fit the image");
  }
  Rng rng(spec.seed);
  Rng motif_rng = rng.split(1);
  const auto motifs = spec.kind == SynthKind::PlantedKernel
                          ? kernel_motifs(spec.num_classes, extent, motif_rng)
                          : channel_motifs(spec.num_classes, motif_rng);
  Rng r_train = rng.split(2), r_val = rng.split(3), r_test = rng.split(4);
  return {render(spec, motifs, extent, spec.train, r_train), render(spec, motifs, extent, spec.val, r_val),
          render(spec, motifs, extent, spec.test, r_test)};
}

// character grammar --------------------------------------------------------

namespace {

enum Cat { kDet, kAdj, kNoun, kVerb, kEnd };

const std::array<std::vector<std::string>, 5>& lexicon() {
  static const std::array<std::vector<std::string>, 5> lex{{
      {"the", "my", "one"},
      {"big", "red", "quick", "soft"},
      {"cat", "dog", "fox", "hen", "kid"},
      {"jumps", "likes", "wants", "eats", "pulls"},
      {"."},
  }};
  return lex;
}

struct Arc {
  Cat cat;
  int next;
  double p;
};

// states: 0 subject det, 1 after det, 2 after one adj, 3 after two adjs,
// 4 after subject noun, 5 after verb, 6 object after det, 7 object after adj,
// 8 after object noun
const std::vector<std::vector<Arc>>& grammar() {
  static const std::vector<std::vector<Arc>> g{
      {{kDet, 1, 1.0}},
      {{kAdj, 2, 0.4}, {kNoun, 4, 0.6}},
      {{kAdj, 3, 0.3}, {kNoun, 4, 0.7}},
      {{kNoun, 4, 1.0}},
      {{kVerb, 5, 1.0}},
      {{kEnd, 0, 0.4}, {kDet, 6, 0.6}},
      {{kAdj, 7, 0.4}, {kNoun, 8, 0.6}},
      {{kNoun, 8, 1.0}},
      {{kEnd, 0, 1.0}},
  };
  return g;
}

struct Generated {
  std::string text;
  double log_prob = 0.0;  // natural log under the grammar
};

Generated generate(std::int64_t sentences, Rng& rng) {
  Generated out;
  int state = 0;
  std::int64_t done = 0;
  while (done < sentences) {
    const auto& arcs = grammar()[static_cast<std::size_t>(state)];
    double u = rng.uniform(), acc = 0.0;
    const Arc* pick = &arcs.back();
    for (const auto& a : arcs) {
      acc += a.p;
      if (u < acc) {
        pick = &a;
        break;
      }
    }
    const auto& words = lexicon()[pick->cat];
    const auto& w = words[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(words.size())))];
    out.log_prob += std::log(pick->p) - std::log(static_cast<double>(words.size()));
    out.text += w;
    out.text += ' ';
    state = pick->next;
    if (pick->cat == kEnd) ++done;
  }
  return out;
}

}  // namespace

CharCorpus synth_char_corpus(const SynthCharSpec& spec) {
  if (spec.train_sentences < 1 || spec.val_sentences < 1 || spec.test_sentences < 1) {
    throw ConfigError("char corpus: sentence counts must be positive");
  }
  CharCorpus c;
  std::string chars = " ";
  for (const auto& cat : lexicon())
    for (const auto& w : cat) chars += w;
  std::sort(chars.begin(), chars.end());
  chars.erase(std::unique(chars.begin(), chars.end()), chars.end());
  c.alphabet = chars;
  std::map<char, std::int32_t> id;
  for (std::size_t i = 0; i < chars.size(); ++i) id[chars[i]] = static_cast<std::int32_t>(i);

  Rng rng(spec.seed);
  auto make = [&](std::int64_t n, Rng r, std::vector<std::int32_t>& ids, double& floor) {
    const auto g = generate(n, r);
    for (char ch : g.text) ids.push_back(id.at(ch));
    // The grammar fixes every character except each word's first, so the
    // whole log-probability is spent on those.
    floor = std::exp(-g.log_prob / static_cast<double>(g.text.size()));
  };
  make(spec.train_sentences, rng.split(1), c.train, c.floor_train);
  make(spec.val_sentences, rng.split(2), c.val, c.floor_val);
  make(spec.test_sentences, rng.split(3), c.test, c.floor_test);
  return c;
}

double ngram_perplexity(const std::vector<std::int32_t>& train, const std::vector<std::int32_t>& eval,
                        std::int64_t vocab, int order) {
  if (order != 1 && order != 2) throw ConfigError("n-gram order must be 1 or 2");
  if (eval.size() < 2) throw PreconditionError("n-gram: evaluation stream too short");
  const auto V = static_cast<std::size_t>(vocab);
  std::vector<double> uni(V, 1.0);
  std::vector<double> bi(V * V, 1.0), ctx(V, static_cast<double>(V));
  for (std::size_t i = 0; i < train.size(); ++i) {
    uni[static_cast<std::size_t>(train[i])] += 1.0;
    if (i > 0) {
      bi[static_cast<std::size_t>(train[i - 1]) * V + static_cast<std::size_t>(train[i])] += 1.0;
      ctx[static_cast<std::size_t>(train[i - 1])] += 1.0;
    }
  }
  const double total = static_cast<double>(train.size() + V);
  double nll = 0.0;
  for (std::size_t i = 1; i < eval.size(); ++i) {
    const auto cur = static_cast<std::size_t>(eval[i]), prev = static_cast<std::size_t>(eval[i - 1]);
    const double p = order == 1 ? uni[cur] / total : bi[prev * V + cur] / ctx[prev];
    nll -= std::log(p);
  }
  return std::exp(nll / static_cast<double>(eval.size() - 1));
}

}  // namespace tnas
