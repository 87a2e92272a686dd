#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gdml/spot_batch.hpp"
#include "gdml/tensor.hpp"

namespace gdml {

struct Study {
  std::vector<std::string> genes;  // column order of every expression matrix
  std::vector<SpotBatch> samples;  // one per sample, manifest order
  std::size_t dropped_spots = 0;   // zero-total spots removed by preprocessing
};

struct Preprocessed {
  Tensor values;                  // kept spots x selected genes
  std::vector<std::size_t> kept;  // source row of each output row
  std::size_t dropped = 0;
};

// Selects `genes` from the raw matrix and maps each count to
// log(1 + scale * x / total), total taken over every column of the spot.
Preprocessed preprocess_expression(const Tensor& counts, std::span<const std::string> columns,
                                   std::span<const std::string> genes, double scale = 1e4);

// INI manifest:
//   [study]   genes = <selection list>, expression_kind = raw|preprocessed, scale = 1e4
//   [sample.<id>]  patient, local, neighbor, expression, columns, coords
// Paths are relative to the manifest. Raw expression is preprocessed on load.
Study load_study(const std::filesystem::path& manifest);

// Writes `dir/manifest.ini` plus one directory per sample, expression_kind =
// preprocessed. load_study(dir/manifest.ini) reproduces `study` bitwise.
void save_study(const Study& study, const std::filesystem::path& dir);

// Same layout with raw counts: counts[s] has columns `columns`, the manifest
// selects `genes`.
void save_raw_study(const Study& study, std::span<const Tensor> counts, std::span<const std::string> columns,
                    const std::filesystem::path& dir);

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, std::span<const std::string> lines);

struct SynthSpec {
  std::size_t n_slides = 2;
  std::size_t n_spots = 400;  // per slide
  std::size_t latent_dim = 8;
  std::size_t genes = 60;
  std::size_t feature_dim = 32;
  std::size_t stencil = 5;  // neighbour tokens per spot = stencil^2
  double rho = 0.8;         // coupling of expression to the image latent
  double sigma = 0.3;       // feature noise; 0 also disables count sampling
  double library_size = 2000.0;
  std::uint64_t seed = 0;

  void validate() const;
};

SynthSpec load_synth_spec(const std::filesystem::path& path);
void save_synth_spec(const SynthSpec& spec, const std::filesystem::path& path);

struct SynthStudy {
  Study study;                 // preprocessed
  std::vector<Tensor> counts;  // raw counts per slide, all genes
  std::vector<Tensor> latents; // ground-truth z per slide
};

// Per spot: spatially smoothed latent z; local = W_L z + sigma e; token (dr,dc)
// = W_N (z + z at that offset) + sigma e; rate = rho softplus(W_G z + b) +
// (1 - rho) softplus(W_G z' + b) with z' independent; counts ~ Poisson of the
// rate scaled to library_size (expectations when sigma = 0); then preprocessed.
SynthStudy synth_generate(const SynthSpec& spec);

}  // namespace gdml
