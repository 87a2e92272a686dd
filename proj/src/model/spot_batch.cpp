#include "gdml/spot_batch.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gdml/error.hpp"

namespace gdml {

void SpotBatch::validate() const {
  const std::size_t n = size();
  auto check = [n](std::size_t got, const char* field) {
    if (got != n) throw DataError(fmt::format("spot batch: {} has {} spots, expected {}", field, got, n));
  };
  if (local.rank() != 2) throw DataError(fmt::format("spot batch: local features must be N x D, got {}", shape_str(local.shape)));
  if (neighbor.rank() != 3) {
    throw DataError(fmt::format("spot batch: neighbour features must be N x T x D, got {}", shape_str(neighbor.shape)));
  }
  if (expression.rank() != 2) throw DataError(fmt::format("spot batch: expression must be N x M, got {}", shape_str(expression.shape)));
  check(local.shape[0], "local");
  check(neighbor.shape[0], "neighbor");
  check(expression.shape[0], "expression");
  check(coords.size(), "coords");
  check(sample_ids.size(), "sample_ids");
  check(patient_ids.size(), "patient_ids");
  if (neighbor.shape[2] != local.shape[1]) {
    throw DataError(fmt::format("spot batch: neighbour width {} differs from local width {}", neighbor.shape[2], local.shape[1]));
  }
  for (double v : expression.data) {
    if (!std::isfinite(v) || v < 0.0) throw DataError("spot batch: expression values must be finite and >= 0");
  }
}

SpotBatch SpotBatch::subset(std::span<const std::size_t> rows) const {
  SpotBatch out;
  out.local = take_rows(local, rows);
  out.neighbor = take_rows(neighbor, rows);
  out.expression = take_rows(expression, rows);
  for (std::size_t r : rows) {
    out.coords.push_back(coords.at(r));
    out.spot_ids.push_back(spot_ids.at(r));
    out.sample_ids.push_back(sample_ids.at(r));
    out.patient_ids.push_back(patient_ids.at(r));
  }
  return out;
}

Tensor SpotBatch::neighbor_tokens() const {
  return neighbor.reshaped(Shape{neighbor.shape[0] * neighbor.shape[1], neighbor.shape[2]});
}

}  // namespace gdml
