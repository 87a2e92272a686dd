#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "gdml/tensor.hpp"

namespace gdml {

// Spots of one slide (or a subset of them) with both modalities.
struct SpotBatch {
  Tensor local;       // N x D_in, one pooled token per spot
  Tensor neighbor;    // N x T x D_in, T neighbour tokens per spot
  Tensor expression;  // N x M, preprocessed
  std::vector<std::array<int, 2>> coords;  // array (row, col)
  std::vector<std::string> spot_ids;
  std::vector<std::string> sample_ids;
  std::vector<std::string> patient_ids;

  std::size_t size() const noexcept { return spot_ids.size(); }
  std::size_t feature_dim() const noexcept { return local.cols(); }
  std::size_t token_count() const noexcept { return neighbor.rank() == 3 ? neighbor.shape[1] : 0; }
  std::size_t gene_count() const noexcept { return expression.cols(); }

  // Throws DataError when N disagrees across fields or expression is negative/non-finite.
  void validate() const;
  SpotBatch subset(std::span<const std::size_t> rows) const;
  // Rows of the neighbour tensor flattened to (N*T) x D_in.
  Tensor neighbor_tokens() const;
};

}  // namespace gdml
