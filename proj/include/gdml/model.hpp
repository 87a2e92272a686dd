#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "gdml/params.hpp"
#include "gdml/spot_batch.hpp"
#include "gdml/tape.hpp"

namespace gdml {

enum class Scale { local = 0, neighbor = 1, global = 2 };
const char* to_string(Scale s) noexcept;

enum class FusionMode { mean, concat_linear };

struct ModelConfig {
  std::size_t d_in = 1024;
  std::size_t d = 512;
  std::size_t genes = 250;
  std::size_t heads = 4;
  std::size_t neighbor_blocks = 2;
  std::size_t global_blocks = 1;
  std::size_t fusion_blocks = 1;
  std::size_t neighbor_tokens = 25;
  std::size_t ff_mult = 4;
  double dropout = 0.1;
  FusionMode fusion = FusionMode::mean;
  // Sinusoidal encoding of spot coordinates before the global block.
  bool global_positional = false;

  void validate() const;
};

// Weights for every submodule, including the grouping heads. Linear weights
// are U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, layer norms identity.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

struct ScaleEmbeddings {
  std::array<Var, 3> per_scale;  // local, neighbour, global after fusion
  Var fused;
};

struct ImageEncoding {
  Var local;     // projected local scale
  Var neighbor;  // neighbour attention, mean-pooled
  Var global;    // slide-level transformer output
  ScaleEmbeddings fusion;
};

// Forward graph builder for one tape. Holds references; keep the config and
// tape alive for the lifetime of the Model.
class Model {
 public:
  Model(const ModelConfig& cfg, BoundParams params, Tape& tape);

  const ModelConfig& config() const noexcept { return cfg_; }
  const BoundParams& params() const noexcept { return params_; }
  Tape& tape() const noexcept { return tape_; }

  // Affine map D_in -> d with per-scale weights.
  Var project_scale(Var feat, Scale scale) const;
  // (N*T) x D_in tokens -> N x d.
  Var neighbor_encode(Var tokens) const;
  // All spots must come from one slide.
  Var global_encode(Var local_proj, std::span<const std::string> sample_ids,
                    std::span<const std::array<int, 2>> coords = {}) const;
  ScaleEmbeddings scale_fusion(Var local, Var neighbor, Var global) const;
  Var gene_encode(Var expression) const;
  Var predict_expression(Var fused) const;

  ImageEncoding encode_image(const SpotBatch& batch) const;

  // Pre-norm block: x + Drop(Attn(LN(x))), then x + Drop(FFN(LN(x))).
  Var transformer_block(Var x, const std::string& prefix, std::size_t seq_len) const;
  Var linear(Var x, const std::string& prefix) const;

 private:
  const ModelConfig& cfg_;
  BoundParams params_;
  Tape& tape_;
};

}  // namespace gdml
