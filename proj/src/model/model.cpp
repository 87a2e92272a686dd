#include "gdml/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gdml/error.hpp"
#include "gdml/grouping.hpp"
#include "gdml/ops.hpp"
#include "gdml/rng.hpp"

namespace gdml {

const char* to_string(Scale s) noexcept {
  switch (s) {
    case Scale::local: return "local";
    case Scale::neighbor: return "neighbor";
    case Scale::global: return "global";
  }
  return "unknown";
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(fmt::format("model.{} must be positive", name));
  };
  positive(d_in, "d_in");
  positive(d, "d");
  positive(genes, "genes");
  positive(heads, "heads");
  positive(neighbor_tokens, "neighbor_tokens");
  positive(ff_mult, "ff_mult");
  if (d % heads != 0) throw ConfigError(fmt::format("model.d = {} is not divisible by model.heads = {}", d, heads));
  if (global_positional && d % 4 != 0) throw ConfigError("model.global_positional needs d divisible by 4");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError(fmt::format("model.dropout = {} outside [0, 1)", dropout));
}

namespace {

void add_linear(ParamStore& s, Rng& rng, const std::string& prefix, std::size_t in, std::size_t out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w(Shape{in, out});
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  s.add(prefix + ".w", std::move(w));
  s.add(prefix + ".b", Tensor(Shape{out}));
}

void add_layer_norm(ParamStore& s, const std::string& prefix, std::size_t d) {
  s.add(prefix + ".g", Tensor(Shape{d}, 1.0));
  s.add(prefix + ".b", Tensor(Shape{d}, 0.0));
}

void add_block(ParamStore& s, Rng& rng, const std::string& prefix, const ModelConfig& cfg) {
  add_layer_norm(s, prefix + ".ln1", cfg.d);
  for (const char* m : {"q", "k", "v", "o"}) add_linear(s, rng, prefix + ".attn." + m, cfg.d, cfg.d);
  add_layer_norm(s, prefix + ".ln2", cfg.d);
  add_linear(s, rng, prefix + ".ff1", cfg.d, cfg.d * cfg.ff_mult);
  add_linear(s, rng, prefix + ".ff2", cfg.d * cfg.ff_mult, cfg.d);
}

Tensor positional_encoding(std::span<const std::array<int, 2>> coords, std::size_t d) {
  // First half of the channels encodes the row, second half the column.
  const std::size_t half = d / 2;
  Tensor pe(Shape{coords.size(), d});
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (std::size_t axis = 0; axis < 2; ++axis) {
      const double pos = coords[i][axis];
      for (std::size_t j = 0; j < half / 2; ++j) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(j) / static_cast<double>(half));
        pe(i, axis * half + 2 * j) = std::sin(pos * freq);
        pe(i, axis * half + 2 * j + 1) = std::cos(pos * freq);
      }
    }
  }
  return pe;
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamStore s;
  for (Scale sc : {Scale::local, Scale::neighbor, Scale::global}) {
    add_linear(s, rng, std::string("proj.") + to_string(sc), cfg.d_in, cfg.d);
  }
  for (std::size_t b = 0; b < cfg.neighbor_blocks; ++b) add_block(s, rng, fmt::format("neighbor.block{}", b), cfg);
  for (std::size_t b = 0; b < cfg.global_blocks; ++b) add_block(s, rng, fmt::format("global.block{}", b), cfg);
  for (std::size_t b = 0; b < cfg.fusion_blocks; ++b) add_block(s, rng, fmt::format("fusion.block{}", b), cfg);
  if (cfg.fusion == FusionMode::concat_linear) add_linear(s, rng, "fusion.merge", 3 * cfg.d, cfg.d);
  add_linear(s, rng, "gene.enc1", cfg.genes, cfg.d);
  add_linear(s, rng, "gene.enc2", cfg.d, cfg.d);
  add_linear(s, rng, "gene.ff1", cfg.d, cfg.d * cfg.ff_mult);
  add_linear(s, rng, "gene.ff2", cfg.d * cfg.ff_mult, cfg.d);
  add_linear(s, rng, "head", cfg.d, cfg.genes);
  add_grouping_params(s, cfg.d);
  return s;
}

Model::Model(const ModelConfig& cfg, BoundParams params, Tape& tape)
    : cfg_(cfg), params_(std::move(params)), tape_(tape) {
  cfg_.validate();
}

Var Model::linear(Var x, const std::string& prefix) const {
  return add_row(matmul(x, params_[prefix + ".w"]), params_[prefix + ".b"]);
}

Var Model::transformer_block(Var x, const std::string& prefix, std::size_t seq_len) const {
  Var h = layer_norm_rows(x, params_[prefix + ".ln1.g"], params_[prefix + ".ln1.b"]);
  Var a = attention(linear(h, prefix + ".attn.q"), linear(h, prefix + ".attn.k"), linear(h, prefix + ".attn.v"),
                    seq_len, cfg_.heads);
  x = x + dropout(linear(a, prefix + ".attn.o"), cfg_.dropout, tape_.rng());
  Var h2 = layer_norm_rows(x, params_[prefix + ".ln2.g"], params_[prefix + ".ln2.b"]);
  Var f = linear(dropout(gelu(linear(h2, prefix + ".ff1")), cfg_.dropout, tape_.rng()), prefix + ".ff2");
  return x + f;
}

Var Model::project_scale(Var feat, Scale scale) const {
  if (feat.value().rank() != 2 || feat.cols() != cfg_.d_in) {
    throw ShapeError(fmt::format("project_scale({}): expected N x {} features, got {}", to_string(scale), cfg_.d_in,
                                 shape_str(feat.shape())));
  }
  return linear(feat, std::string("proj.") + to_string(scale));
}

Var Model::neighbor_encode(Var tokens) const {
  const std::size_t t = cfg_.neighbor_tokens;
  if (tokens.value().rank() != 2 || tokens.rows() % t != 0) {
    throw ShapeError(fmt::format("neighbor_encode: {} rows is not a multiple of {} tokens per spot", tokens.rows(), t));
  }
  Var x = project_scale(tokens, Scale::neighbor);
  for (std::size_t b = 0; b < cfg_.neighbor_blocks; ++b) x = transformer_block(x, fmt::format("neighbor.block{}", b), t);
  return group_mean_rows(x, t);
}

Var Model::global_encode(Var local_proj, std::span<const std::string> sample_ids,
                         std::span<const std::array<int, 2>> coords) const {
  for (const auto& id : sample_ids) {
    if (id != sample_ids.front()) {
      throw ContractError(fmt::format("global_encode: batch mixes samples '{}' and '{}'", sample_ids.front(), id));
    }
  }
  Var x = local_proj;
  if (cfg_.global_positional) {
    if (coords.size() != local_proj.rows()) throw ContractError("global_encode: positional encoding needs coordinates");
    x = x + tape_.constant(positional_encoding(coords, cfg_.d));
  }
  const std::size_t n = x.rows();
  for (std::size_t b = 0; b < cfg_.global_blocks; ++b) x = transformer_block(x, fmt::format("global.block{}", b), n);
  return x;
}

ScaleEmbeddings Model::scale_fusion(Var local, Var neighbor, Var global) const {
  const Var parts[] = {local, neighbor, global};
  Var x = interleave_rows(parts);
  for (std::size_t b = 0; b < cfg_.fusion_blocks; ++b) x = transformer_block(x, fmt::format("fusion.block{}", b), 3);
  ScaleEmbeddings out;
  for (std::size_t s = 0; s < 3; ++s) out.per_scale[s] = strided_rows(x, 3, s);
  if (cfg_.fusion == FusionMode::mean) {
    out.fused = scale(out.per_scale[0] + out.per_scale[1] + out.per_scale[2], 1.0 / 3.0);
  } else {
    out.fused = linear(concat_cols(out.per_scale), "fusion.merge");
  }
  return out;
}

Var Model::gene_encode(Var expression) const {
  if (expression.value().rank() != 2 || expression.cols() != cfg_.genes) {
    throw ShapeError(fmt::format("gene_encode: expected N x {} expression, got {}", cfg_.genes,
                                 shape_str(expression.shape())));
  }
  Var h = linear(dropout(gelu(linear(expression, "gene.enc1")), cfg_.dropout, tape_.rng()), "gene.enc2");
  Var f = linear(dropout(gelu(linear(h, "gene.ff1")), cfg_.dropout, tape_.rng()), "gene.ff2");
  return h + f;
}

Var Model::predict_expression(Var fused) const { return linear(fused, "head"); }

ImageEncoding Model::encode_image(const SpotBatch& batch) const {
  if (batch.token_count() != cfg_.neighbor_tokens) {
    throw ShapeError(fmt::format("encode_image: batch has {} neighbour tokens per spot, model expects {}",
                                 batch.token_count(), cfg_.neighbor_tokens));
  }
  Var local = tape_.constant(batch.local);
  ImageEncoding enc;
  enc.local = project_scale(local, Scale::local);
  enc.neighbor = neighbor_encode(tape_.constant(batch.neighbor_tokens()));
  enc.global = global_encode(project_scale(local, Scale::global), batch.sample_ids, batch.coords);
  enc.fusion = scale_fusion(enc.local, enc.neighbor, enc.global);
  return enc;
}

}  // namespace gdml
