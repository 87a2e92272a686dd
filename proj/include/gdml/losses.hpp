#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "gdml/tape.hpp"
#include "gdml/tensor.hpp"

namespace gdml {

struct Temperatures {
  double tau = 0.07;     // instance-level target temperature
  double tau_ig = 0.07;  // instance-group temperature
  double lambda = 0.8;   // weight of the instance-group loss
  void validate() const;
};

enum class TargetMode { hard, soft };

// T = softmax_rows((I I^T + G G^T) / (2 tau)). Returned as a plain tensor:
// targets never carry gradient.
Tensor internal_target(const Tensor& image, const Tensor& gene, double tau);

struct InstanceLoss {
  Var total;          // image_to_gene + gene_to_image
  Var image_to_gene;  // -(1/N) sum_ij T_ij log softmax_j(I G^T)_ij
  Var gene_to_image;  // -(1/N) sum_ij T_ji log softmax_j(G I^T)_ij
};

// Bidirectional soft-target contrastive loss for one image scale.
InstanceLoss instance_loss(Var image, Var gene, const Tensor& target);
InstanceLoss instance_loss(Var image, Var gene, double tau);

struct MultiScaleLoss {
  Var total;  // mean of the three per-scale losses
  std::array<Var, 3> per_scale;
};

MultiScaleLoss multi_scale_instance_loss(std::span<const Var, 3> per_scale, Var gene, double tau);
// Same with precomputed per-scale targets, e.g. frozen for gradient checks.
MultiScaleLoss multi_scale_instance_loss(std::span<const Var, 3> per_scale, Var gene,
                                         std::span<const Tensor, 3> targets);

struct CrossLevelInputs {
  const Tensor& gene_centroids;                 // C^G, k x d, constant
  const Tensor& image_centroids;                // C^I, k x d, constant
  std::span<const std::size_t> image_to_gene;   // A(i) for image instances
  std::span<const std::size_t> gene_to_image;   // A(i) for gene instances
};

struct CrossLevelLoss {
  Var total;
  Var image_side;  // image instances against gene centroids
  Var gene_side;   // gene instances against image centroids
};

// Logits E C^T / tau_ig over the k centroids of the other modality, per
// instance cross-entropy. Hard targets are one-hot at the assigned centroid;
// soft targets are the detached softmax of the same logits.
CrossLevelLoss cross_level_loss(Var image_ins, Var gene_ins, const CrossLevelInputs& groups, double tau_ig,
                                TargetMode mode);

// Per-instance cross-entropy of E C^T / tau_ig against fixed row targets.
// With targets equal to the detached softmax of the same logits (soft mode)
// the gradient is identically zero; only the value carries information.
CrossLevelLoss cross_level_loss_with_targets(Var image_ins, Var gene_ins, const Tensor& gene_centroids,
                                             const Tensor& image_centroids, const Tensor& image_targets,
                                             const Tensor& gene_targets, double tau_ig);

// (1/N) sum_i ||pred_i - target_i||^2, the per-spot squared norm averaged over spots.
Var prediction_loss(Var pred, Var target);

struct LossBreakdown {
  double multi_ins = 0.0;
  double cross = 0.0;
  double pred = 0.0;
  double total = 0.0;
  std::array<double, 3> per_scale{};
};

struct TotalLoss {
  Var total;
  LossBreakdown breakdown;
};

// total = multi_ins + lambda * cross + pred; absent parts count as zero.
TotalLoss total_loss(std::optional<Var> multi_ins, std::optional<Var> cross, Var pred, double lambda,
                     std::array<double, 3> per_scale = {});

}  // namespace gdml
