#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnas/harness/dataset.hpp"

namespace tnas {

enum class SynthKind : std::uint8_t { PlantedKernel, PlantedChannel, CharGrammar };

std::string to_string(SynthKind k);
SynthKind parse_synth_kind(const std::string& s);

struct SynthImageSpec {
  SynthKind kind = SynthKind::PlantedKernel;
  std::uint64_t seed = 0;
  std::int64_t image_size = 8;
  std::int64_t num_classes = 4;
  /// Side of the class motifs (planted_kernel); odd.
  std::int64_t motif_extent = 5;
  std::int64_t train = 512;
  std::int64_t val = 256;
  std::int64_t test = 256;
  double noise = 0.3;
  /// Label-free clutter on the ring just outside the motif.
  double clutter = 1.0;
};

/// Images with one class motif each.
///
/// planted_kernel: every class motif shares the same centre so only the
/// motif's outer ring (extent = motif_extent) separates classes, and a
/// label-free clutter ring sits one pixel further out. Windows narrower
/// than the motif miss the evidence; wider ones pick up clutter.
/// planted_channel: many classes with independent 3x3 motifs, so narrow
/// layers cannot separate them all.
DataSplits synth_image_dataset(const SynthImageSpec& spec);

struct CharCorpus {
  std::string alphabet;  // token id -> character
  std::vector<std::int32_t> train, val, test;
  /// Per-character perplexity of the generating grammar on each split.
  double floor_train = 0.0, floor_val = 0.0, floor_test = 0.0;
};

struct SynthCharSpec {
  std::uint64_t seed = 0;
  std::int64_t train_sentences = 2000;
  std::int64_t val_sentences = 200;
  std::int64_t test_sentences = 200;
};

/// Sentences of a small probabilistic grammar (determiner, up to two
/// adjectives, noun, verb, optional object) over words with distinct first
/// letters, so the true next-character distribution is known exactly.
CharCorpus synth_char_corpus(const SynthCharSpec& spec);

/// Per-token perplexity of add-one smoothed n-gram models (n = 1 or 2)
/// fitted on `train` and scored on `eval`.
double ngram_perplexity(const std::vector<std::int32_t>& train, const std::vector<std::int32_t>& eval,
                        std::int64_t vocab, int order);

}  // namespace tnas
