#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gdml/tensor.hpp"

namespace gdml {

// Pearson correlation; nullopt when either side has zero variance.
// Throws ContractError when lengths differ or N < 2.
std::optional<double> pcc(std::span<const double> y, std::span<const double> y_hat);

// Per-element means over all N*M entries.
double mse_metric(const Tensor& y, const Tensor& y_hat);
double mae_metric(const Tensor& y, const Tensor& y_hat);

enum class PccPooling {
  per_sample,  // per-gene PCC within each sample, then averaged over samples
  per_fold,    // spots of all samples pooled before the per-gene PCC
};

struct FoldReport {
  std::size_t fold_id = 0;
  std::vector<double> per_gene_pcc;   // NaN where undefined
  std::vector<std::size_t> gene_rank; // 1 = highest PCC; undefined genes last, ties by index
  double mse = 0.0;
  double mae = 0.0;
  std::size_t spots = 0;

  std::size_t undefined_genes() const noexcept;
};

// 1-based ranks by descending value; NaN entries follow every defined one.
std::vector<std::size_t> rank_genes(std::span<const double> per_gene_pcc);

// truth[s] and pred[s] are the spots x genes matrices of sample s in the fold.
FoldReport make_fold_report(std::size_t fold_id, std::span<const Tensor> truth, std::span<const Tensor> pred,
                            PccPooling pooling = PccPooling::per_sample);

// Genes with the lowest mean rank across folds; ties by gene index.
std::vector<std::size_t> select_hpg(std::span<const FoldReport> folds, std::size_t top = 50);

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;  // population std over folds
};

struct Summary {
  std::size_t folds = 0;
  MetricStats mse, mae, pcc_a, pcc_h;
  std::vector<std::size_t> hpg;
  std::size_t undefined_a = 0;  // undefined (fold, gene) pairs excluded from PCC(A)
  std::size_t undefined_h = 0;  // same, restricted to hpg
};

// PCC(A) per fold is the mean defined per-gene PCC; PCC(H) the same over hpg.
Summary aggregate(std::span<const FoldReport> folds, std::span<const std::size_t> hpg);

void write_text_report(std::ostream& os, std::span<const FoldReport> folds, const Summary& summary,
                       std::span<const std::string> genes);
// Rows "fold,metric,value"; summary rows use fold = "summary".
void write_csv_report(std::ostream& os, std::span<const FoldReport> folds, const Summary& summary,
                      std::span<const std::string> genes);

// Maps t in [0, 1] to "#rrggbb" along a perceptual dark-blue to yellow ramp.
std::string heat_color(double t);

// Values rescaled by (v - min) / (max - min), or 0.5 everywhere when constant.
std::vector<double> normalize_unit(std::span<const double> values);

// One pointy-top hexagon per spot on an offset grid (odd rows shifted right).
// Each cell carries data-id, data-row, data-col and data-value (normalized).
std::string render_heatmap_svg(std::span<const std::array<int, 2>> coords, std::span<const double> values,
                               std::span<const std::string> spot_ids, const std::string& title);

}  // namespace gdml
