#include "tnas/harness/tasks.hpp"

#include "tnas/core/errors.hpp"
#include "tnas/harness/idx.hpp"
#include "tnas/harness/synth.hpp"
#include "tnas/spaces/spaces.hpp"

namespace tnas {

namespace {
bool is_lm(const std::string& space) { return space.rfind("tiny_lm_", 0) == 0; }
}  // namespace

nlohmann::json to_json(const TaskConfig& t) {
  return {{"space", t.space},
          {"data", resolved_data(t)},
          {"mode", to_string(t.mode)},
          {"channel_divisor", t.channel_divisor},
          {"cell_channels", t.cell_channels},
          {"context", t.context},
          {"data_seed", t.data_seed},
          {"dtype", t.dtype == DType::F64 ? "f64" : "f32"}};
}

void validate(const TaskConfig& t) {
  if (t.space != "toy_conv_macro" && t.space != "toy_cell" && t.space != "tiny_lm_desk" &&
      t.space != "tiny_lm_full") {
    throw ConfigError("unknown space '" + t.space + "'");
  }
  const auto d = resolved_data(t);
  const bool text = d == "char_grammar";
  if (!text && d != "planted_kernel" && d != "planted_channel" && d.rfind("idx:", 0) != 0) {
    throw ConfigError("unknown data '" + d + "'");
  }
  if (text != is_lm(t.space)) throw ConfigError("data '" + d + "' does not fit space " + t.space);
  if (t.channel_divisor < 1 || t.cell_channels < 1 || t.context < 2) {
    throw ConfigError("channel_divisor, cell_channels must be >= 1 and context >= 2");
  }
}

std::string resolved_data(const TaskConfig& t) {
  if (!t.data.empty()) return t.data;
  return is_lm(t.space) ? "char_grammar" : "planted_kernel";
}

DataSplits load_task_data(const TaskConfig& t) {
  validate(t);
  const auto d = resolved_data(t);
  if (d == "char_grammar") {
    SynthCharSpec s;
    s.seed = t.data_seed;
    const auto c = synth_char_corpus(s);
    const auto v = static_cast<std::int64_t>(c.alphabet.size());
    return {Dataset::text(c.train, t.context, v), Dataset::text(c.val, t.context, v),
            Dataset::text(c.test, t.context, v)};
  }
  if (d.rfind("idx:", 0) == 0) return load_idx_directory(d.substr(4), 1.0 / 6.0, t.data_seed);
  SynthImageSpec s;
  s.kind = parse_synth_kind(d);
  s.seed = t.data_seed;
  if (s.kind == SynthKind::PlantedChannel) s.num_classes = 8;
  return synth_image_dataset(s);
}

SupernetFactory make_factory(const TaskConfig& t, const DataSplits& data) {
  validate(t);
  const auto& ds = data.train;
  if (t.space == "toy_conv_macro") {
    ConvMacroConfig c;
    c.num_classes = ds.num_classes();
    c.in_channels = ds.channels();
    c.image_size = ds.height();
    c.channel_divisor = t.channel_divisor;
    c.mode = t.mode;
    c.dtype = t.dtype;
    return [c](std::uint64_t seed) {
      auto cc = c;
      cc.seed = seed;
      return build_toy_conv_macro(cc);
    };
  }
  if (t.space == "toy_cell") {
    ToyCellConfig c;
    c.base_channels = t.cell_channels;
    c.num_classes = ds.num_classes();
    c.in_channels = ds.channels();
    c.image_size = ds.height();
    c.mode = t.mode;
    c.dtype = t.dtype;
    return [c](std::uint64_t seed) {
      auto cc = c;
      cc.seed = seed;
      return build_toy_cell_space(cc);
    };
  }
  TinyLmConfig c;
  c.preset = t.space.substr(8);
  c.vocab = ds.num_classes();
  c.context = t.context;
  c.mode = t.mode;
  c.dtype = t.dtype;
  return [c](std::uint64_t seed) {
    auto cc = c;
    cc.seed = seed;
    return build_tiny_lm_space(cc);
  };
}

}  // namespace tnas
