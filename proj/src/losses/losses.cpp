#include "gdml/losses.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gdml/error.hpp"
#include "gdml/kernels.hpp"
#include "gdml/ops.hpp"

namespace gdml {

void Temperatures::validate() const {
  if (!(tau > 0.0)) throw ConfigError(fmt::format("loss.tau = {} must be positive", tau));
  if (!(tau_ig > 0.0)) throw ConfigError(fmt::format("loss.tau_ig = {} must be positive", tau_ig));
  if (!(lambda >= 0.0)) throw ConfigError(fmt::format("loss.lambda = {} must be non-negative", lambda));
}

namespace {

void softmax_rows_inplace(Tensor& x) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    double mx = r[0];
    for (double v : r) mx = std::max(mx, v);
    double z = 0.0;
    for (double& v : r) z += (v = std::exp(v - mx));
    for (double& v : r) v /= z;
  }
}

Tensor gram(const Tensor& x) {
  Tensor g(Shape{x.rows(), x.rows()});
  kernels::active().gemm_nt(x.rows(), x.rows(), x.cols(), x.data.data(), x.data.data(), g.data.data());
  return g;
}

// -(1/N) sum_ij target_ij * log_softmax_rows(logits)_ij
Var soft_cross_entropy(Var logits, const Tensor& target) {
  Tape& t = logits.tape();
  const double n = static_cast<double>(logits.rows());
  return scale(sum(log_softmax_rows(logits) * t.constant(target)), -1.0 / n);
}

Tensor one_hot(std::span<const std::size_t> idx, std::size_t k, const char* side) {
  Tensor out(Shape{idx.size(), k});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= k) throw ContractError(fmt::format("cross_level_loss: {} assignment {} >= k = {}", side, idx[i], k));
    out(i, idx[i]) = 1.0;
  }
  return out;
}

}  // namespace

Tensor internal_target(const Tensor& image, const Tensor& gene, double tau) {
  if (image.shape != gene.shape) {
    throw ShapeError(fmt::format("internal_target: image {} vs gene {}", shape_str(image.shape), shape_str(gene.shape)));
  }
  if (!(tau > 0.0)) throw ContractError("internal_target: tau must be positive");
  Tensor s = gram(image);
  const Tensor g = gram(gene);
  const double inv = 1.0 / (2.0 * tau);
  for (std::size_t i = 0; i < s.size(); ++i) s.data[i] = (s.data[i] + g.data[i]) * inv;
  softmax_rows_inplace(s);
  return s;
}

InstanceLoss instance_loss(Var image, Var gene, const Tensor& target) {
  if (image.shape() != gene.shape()) {
    throw ShapeError(fmt::format("instance_loss: image {} vs gene {}", shape_str(image.shape()), shape_str(gene.shape())));
  }
  const std::size_t n = image.rows();
  if (target.shape != Shape{n, n}) throw ShapeError(fmt::format("instance_loss: target {} for N = {}", shape_str(target.shape), n));
  InstanceLoss out;
  out.image_to_gene = soft_cross_entropy(matmul_nt(image, gene), target);
  out.gene_to_image = soft_cross_entropy(matmul_nt(gene, image), transpose(target));
  out.total = out.image_to_gene + out.gene_to_image;
  return out;
}

InstanceLoss instance_loss(Var image, Var gene, double tau) {
  return instance_loss(image, gene, internal_target(image.value(), gene.value(), tau));
}

MultiScaleLoss multi_scale_instance_loss(std::span<const Var, 3> per_scale, Var gene,
                                         std::span<const Tensor, 3> targets) {
  MultiScaleLoss out;
  for (std::size_t s = 0; s < 3; ++s) out.per_scale[s] = instance_loss(per_scale[s], gene, targets[s]).total;
  out.total = scale(out.per_scale[0] + out.per_scale[1] + out.per_scale[2], 1.0 / 3.0);
  return out;
}

MultiScaleLoss multi_scale_instance_loss(std::span<const Var, 3> per_scale, Var gene, double tau) {
  const Tensor targets[] = {internal_target(per_scale[0].value(), gene.value(), tau),
                            internal_target(per_scale[1].value(), gene.value(), tau),
                            internal_target(per_scale[2].value(), gene.value(), tau)};
  return multi_scale_instance_loss(per_scale, gene, targets);
}

namespace {

Var scaled_logits(Var ins, const Tensor& centroids, double tau_ig) {
  if (ins.cols() != centroids.cols()) {
    throw ShapeError(fmt::format("cross_level_loss: embedding {} vs centroids {}", shape_str(ins.shape()),
                                 shape_str(centroids.shape)));
  }
  return scale(matmul_nt(ins, ins.tape().constant(centroids)), 1.0 / tau_ig);
}

void check_cross_inputs(Var image_ins, Var gene_ins, const Tensor& gene_centroids, const Tensor& image_centroids,
                        double tau_ig) {
  if (!(tau_ig > 0.0)) throw ContractError("cross_level_loss: tau_ig must be positive");
  if (gene_centroids.shape != image_centroids.shape) throw ShapeError("cross_level_loss: centroid matrices differ in shape");
  if (image_ins.shape() != gene_ins.shape()) throw ShapeError("cross_level_loss: image and gene embeddings differ in shape");
}

}  // namespace

CrossLevelLoss cross_level_loss_with_targets(Var image_ins, Var gene_ins, const Tensor& gene_centroids,
                                             const Tensor& image_centroids, const Tensor& image_targets,
                                             const Tensor& gene_targets, double tau_ig) {
  check_cross_inputs(image_ins, gene_ins, gene_centroids, image_centroids, tau_ig);
  const Shape want{image_ins.rows(), gene_centroids.rows()};
  if (image_targets.shape != want || gene_targets.shape != want) {
    throw ShapeError(fmt::format("cross_level_loss: targets must be {}", shape_str(want)));
  }
  CrossLevelLoss out;
  out.image_side = soft_cross_entropy(scaled_logits(image_ins, gene_centroids, tau_ig), image_targets);
  out.gene_side = soft_cross_entropy(scaled_logits(gene_ins, image_centroids, tau_ig), gene_targets);
  out.total = out.image_side + out.gene_side;
  return out;
}

CrossLevelLoss cross_level_loss(Var image_ins, Var gene_ins, const CrossLevelInputs& groups, double tau_ig,
                                TargetMode mode) {
  check_cross_inputs(image_ins, gene_ins, groups.gene_centroids, groups.image_centroids, tau_ig);
  const std::size_t n = image_ins.rows(), k = groups.gene_centroids.rows();
  if (groups.image_to_gene.size() != n || groups.gene_to_image.size() != n) {
    throw ContractError("cross_level_loss: one assignment per instance required");
  }
  Tensor image_targets = one_hot(groups.image_to_gene, k, "image");
  Tensor gene_targets = one_hot(groups.gene_to_image, k, "gene");
  if (mode == TargetMode::soft) {
    image_targets = scaled_logits(image_ins, groups.gene_centroids, tau_ig).value();
    gene_targets = scaled_logits(gene_ins, groups.image_centroids, tau_ig).value();
    softmax_rows_inplace(image_targets);
    softmax_rows_inplace(gene_targets);
  }
  return cross_level_loss_with_targets(image_ins, gene_ins, groups.gene_centroids, groups.image_centroids,
                                       image_targets, gene_targets, tau_ig);
}

Var prediction_loss(Var pred, Var target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError(fmt::format("prediction_loss: {} vs {}", shape_str(pred.shape()), shape_str(target.shape())));
  }
  Var diff = pred - target;
  return scale(sum(diff * diff), 1.0 / static_cast<double>(pred.rows()));
}

TotalLoss total_loss(std::optional<Var> multi_ins, std::optional<Var> cross, Var pred, double lambda,
                     std::array<double, 3> per_scale) {
  TotalLoss out;
  Var total = pred;
  if (multi_ins && cross) {
    total = (*multi_ins + scale(*cross, lambda)) + pred;
  } else if (multi_ins) {
    total = *multi_ins + pred;
  } else if (cross) {
    total = scale(*cross, lambda) + pred;
  }
  out.total = total;
  out.breakdown.multi_ins = multi_ins ? multi_ins->value().item() : 0.0;
  out.breakdown.cross = cross ? cross->value().item() : 0.0;
  out.breakdown.pred = pred.value().item();
  out.breakdown.total = total.value().item();
  out.breakdown.per_scale = per_scale;
  return out;
}

}  // namespace gdml
