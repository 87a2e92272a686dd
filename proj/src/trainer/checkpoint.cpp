#include <cmath>

#include <fmt/format.h>

#include "gdml/container.hpp"
#include "gdml/error.hpp"
#include "gdml/trainer.hpp"

namespace gdml {

namespace {

constexpr const char* kConfigPrefix = "config.";

Tensor scalar(double v) {
  Tensor t(Shape{});
  t.data[0] = v;
  return t;
}

std::size_t read_count(const TensorContainer& c, const std::string& key, const std::string& origin) {
  const auto& t = c.at(kConfigPrefix + key);
  const double v = t.data.empty() ? -1.0 : t.data[0];
  if (t.rank() != 0 || !(v >= 0.0) || v != std::floor(v)) {
    throw DataError(fmt::format("{}: config.{} is not a non-negative integer scalar", origin, key));
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const ModelConfig& cfg) {
  TensorContainer c;
  auto count = [&](const char* key, std::size_t v) { c.add(kConfigPrefix + std::string(key), scalar(static_cast<double>(v)), DType::i32); };
  count("d_in", cfg.d_in);
  count("d", cfg.d);
  count("genes", cfg.genes);
  count("heads", cfg.heads);
  count("neighbor_blocks", cfg.neighbor_blocks);
  count("global_blocks", cfg.global_blocks);
  count("fusion_blocks", cfg.fusion_blocks);
  count("neighbor_tokens", cfg.neighbor_tokens);
  count("ff_mult", cfg.ff_mult);
  count("fusion_concat", cfg.fusion == FusionMode::concat_linear ? 1 : 0);
  count("global_positional", cfg.global_positional ? 1 : 0);
  c.add(std::string(kConfigPrefix) + "dropout", scalar(cfg.dropout));
  for (const auto& [name, value] : params) c.add(name, value);
  c.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto c = TensorContainer::load(path);
  const std::string origin = path.string();
  Checkpoint ck;
  auto& m = ck.config;
  m.d_in = read_count(c, "d_in", origin);
  m.d = read_count(c, "d", origin);
  m.genes = read_count(c, "genes", origin);
  m.heads = read_count(c, "heads", origin);
  m.neighbor_blocks = read_count(c, "neighbor_blocks", origin);
  m.global_blocks = read_count(c, "global_blocks", origin);
  m.fusion_blocks = read_count(c, "fusion_blocks", origin);
  m.neighbor_tokens = read_count(c, "neighbor_tokens", origin);
  m.ff_mult = read_count(c, "ff_mult", origin);
  m.fusion = read_count(c, "fusion_concat", origin) ? FusionMode::concat_linear : FusionMode::mean;
  m.global_positional = read_count(c, "global_positional", origin) != 0;
  m.dropout = c.at(std::string(kConfigPrefix) + "dropout").data.at(0);
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw DataError(fmt::format("{}: stored model config is invalid: {}", origin, e.what()));
  }

  // The stored shape must match what the stored config builds, entry for entry.
  const ParamStore expected = init_params(m, 0);
  std::size_t stored = 0;
  for (const auto& e : c.entries()) {
    if (e.name.rfind(kConfigPrefix, 0) == 0) continue;
    ++stored;
    if (!expected.contains(e.name)) throw DataError(fmt::format("{}: unexpected parameter '{}'", origin, e.name));
    const auto& want = expected.at(e.name).shape;
    if (e.value.shape != want) {
      throw DataError(fmt::format("{}: parameter '{}' has shape {}, config implies {}", origin, e.name,
                                  shape_str(e.value.shape), shape_str(want)));
    }
    ck.params.add(e.name, e.value);
  }
  if (stored != expected.size()) {
    for (const auto& name : expected.names()) {
      if (!ck.params.contains(name)) throw DataError(fmt::format("{}: missing parameter '{}'", origin, name));
    }
  }
  return ck;
}

}  // namespace gdml
