#include "gdml/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "gdml/error.hpp"

namespace gdml {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_same_shape(const Tensor& y, const Tensor& y_hat, const char* what) {
  if (y.shape != y_hat.shape) {
    throw ShapeError(fmt::format("{}: truth {} vs prediction {}", what, shape_str(y.shape), shape_str(y_hat.shape)));
  }
}

double mean_defined(std::span<const double> v, std::size_t& undefined) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isnan(x)) {
      ++undefined;
    } else {
      s += x;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : kNaN;
}

MetricStats stats(std::span<const double> v) {
  MetricStats m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(sq / static_cast<double>(v.size()));
  return m;
}

// Column g of x as a contiguous vector.
std::vector<double> column(const Tensor& x, std::size_t g) {
  std::vector<double> c(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) c[i] = x(i, g);
  return c;
}

std::vector<double> per_gene(const Tensor& y, const Tensor& y_hat) {
  std::vector<double> out(y.cols(), kNaN);
  if (y.rows() < 2) return out;
  for (std::size_t g = 0; g < y.cols(); ++g) out[g] = pcc(column(y, g), column(y_hat, g)).value_or(kNaN);
  return out;
}

}  // namespace

std::optional<double> pcc(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw ContractError(fmt::format("pcc: lengths {} and {} differ", y.size(), y_hat.size()));
  if (y.size() < 2) throw ContractError(fmt::format("pcc: needs at least 2 values, got {}", y.size()));
  const double n = static_cast<double>(y.size());
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  const double mp = std::accumulate(y_hat.begin(), y_hat.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = y[i] - my, b = y_hat[i] - mp;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  // sqrt of the product keeps pcc(y, y) exactly 1.
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double mse_metric(const Tensor& y, const Tensor& y_hat) {
  check_same_shape(y, y_hat, "mse");
  if (y.data.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += (y_hat.data[i] - y.data[i]) * (y_hat.data[i] - y.data[i]);
  return s / static_cast<double>(y.data.size());
}

double mae_metric(const Tensor& y, const Tensor& y_hat) {
  check_same_shape(y, y_hat, "mae");
  if (y.data.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += std::abs(y_hat.data[i] - y.data[i]);
  return s / static_cast<double>(y.data.size());
}

std::size_t FoldReport::undefined_genes() const noexcept {
  return static_cast<std::size_t>(std::count_if(per_gene_pcc.begin(), per_gene_pcc.end(), [](double v) { return std::isnan(v); }));
}

std::vector<std::size_t> rank_genes(std::span<const double> per_gene_pcc) {
  std::vector<std::size_t> order(per_gene_pcc.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double x = per_gene_pcc[a], y = per_gene_pcc[b];
    if (std::isnan(x) || std::isnan(y)) return !std::isnan(x) && std::isnan(y);
    return x > y;
  });
  std::vector<std::size_t> rank(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
  return rank;
}

FoldReport make_fold_report(std::size_t fold_id, std::span<const Tensor> truth, std::span<const Tensor> pred,
                            PccPooling pooling) {
  if (truth.size() != pred.size() || truth.empty()) {
    throw ContractError(fmt::format("fold report: {} truth vs {} prediction samples", truth.size(), pred.size()));
  }
  const std::size_t m = truth.front().cols();
  for (std::size_t s = 0; s < truth.size(); ++s) {
    check_same_shape(truth[s], pred[s], "fold report");
    if (truth[s].cols() != m) throw ShapeError("fold report: samples disagree on gene count");
  }

  FoldReport r;
  r.fold_id = fold_id;
  std::vector<double> y_all, p_all;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    y_all.insert(y_all.end(), truth[s].data.begin(), truth[s].data.end());
    p_all.insert(p_all.end(), pred[s].data.begin(), pred[s].data.end());
    r.spots += truth[s].rows();
  }
  const Tensor y_pool(Shape{r.spots, m}, std::move(y_all)), p_pool(Shape{r.spots, m}, std::move(p_all));
  r.mse = mse_metric(y_pool, p_pool);
  r.mae = mae_metric(y_pool, p_pool);

  if (pooling == PccPooling::per_fold) {
    r.per_gene_pcc = per_gene(y_pool, p_pool);
  } else {
    std::vector<double> sum(m, 0.0);
    std::vector<std::size_t> count(m, 0);
    for (std::size_t s = 0; s < truth.size(); ++s) {
      const auto v = per_gene(truth[s], pred[s]);
      for (std::size_t g = 0; g < m; ++g) {
        if (std::isnan(v[g])) continue;
        sum[g] += v[g];
        ++count[g];
      }
    }
    r.per_gene_pcc.resize(m);
    for (std::size_t g = 0; g < m; ++g) r.per_gene_pcc[g] = count[g] ? sum[g] / static_cast<double>(count[g]) : kNaN;
  }
  r.gene_rank = rank_genes(r.per_gene_pcc);
  return r;
}

std::vector<std::size_t> select_hpg(std::span<const FoldReport> folds, std::size_t top) {
  if (folds.empty()) throw ContractError("select_hpg: no fold reports");
  const std::size_t m = folds.front().gene_rank.size();
  if (top > m) throw ContractError(fmt::format("select_hpg: top {} exceeds {} genes", top, m));
  std::vector<double> mean_rank(m, 0.0);
  for (const auto& f : folds) {
    if (f.gene_rank.size() != m) throw ContractError("select_hpg: folds disagree on gene count");
    // Summed as integers per fold so that the result is independent of fold order.
    for (std::size_t g = 0; g < m; ++g) mean_rank[g] += static_cast<double>(f.gene_rank[g]);
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean_rank[a] < mean_rank[b]; });
  order.resize(top);
  return order;
}

Summary aggregate(std::span<const FoldReport> folds, std::span<const std::size_t> hpg) {
  Summary s;
  s.folds = folds.size();
  s.hpg.assign(hpg.begin(), hpg.end());
  std::vector<double> mse, mae, a, h;
  for (const auto& f : folds) {
    if (!folds.empty() && f.per_gene_pcc.size() != folds.front().per_gene_pcc.size()) {
      throw ContractError("aggregate: folds disagree on gene count");
    }
    mse.push_back(f.mse);
    mae.push_back(f.mae);
    a.push_back(mean_defined(f.per_gene_pcc, s.undefined_a));
    std::vector<double> sub;
    for (std::size_t g : hpg) {
      if (g >= f.per_gene_pcc.size()) throw ContractError(fmt::format("aggregate: hpg index {} out of range", g));
      sub.push_back(f.per_gene_pcc[g]);
    }
    h.push_back(mean_defined(sub, s.undefined_h));
  }
  auto defined = [](std::vector<double> v) {
    std::erase_if(v, [](double x) { return std::isnan(x); });
    return v;
  };
  s.mse = stats(mse);
  s.mae = stats(mae);
  s.pcc_a = stats(defined(a));
  s.pcc_h = stats(defined(h));
  return s;
}

void write_text_report(std::ostream& os, std::span<const FoldReport> folds, const Summary& summary,
                       std::span<const std::string> genes) {
  for (const auto& f : folds) {
    std::size_t und = 0;
    const double a = mean_defined(f.per_gene_pcc, und);
    fmt::print(os, "fold {}\n  spots      {}\n  mse        {:.6f}\n  mae        {:.6f}\n  pcc_a      {:.6f}\n",
               f.fold_id, f.spots, f.mse, f.mae, a);
    fmt::print(os, "  undefined  {}\n", und);
    const auto best = std::min_element(f.gene_rank.begin(), f.gene_rank.end()) - f.gene_rank.begin();
    if (!f.gene_rank.empty() && static_cast<std::size_t>(best) < genes.size()) {
      fmt::print(os, "  best_gene  {} ({:.6f})\n", genes[static_cast<std::size_t>(best)], f.per_gene_pcc[static_cast<std::size_t>(best)]);
    }
  }
  fmt::print(os, "summary over {} fold(s)\n", summary.folds);
  fmt::print(os, "  mse        {:.6f} +- {:.6f}\n", summary.mse.mean, summary.mse.std);
  fmt::print(os, "  mae        {:.6f} +- {:.6f}\n", summary.mae.mean, summary.mae.std);
  fmt::print(os, "  pcc_a      {:.6f} +- {:.6f}  ({} undefined excluded)\n", summary.pcc_a.mean, summary.pcc_a.std,
             summary.undefined_a);
  fmt::print(os, "  pcc_h      {:.6f} +- {:.6f}  ({} undefined excluded, {} genes)\n", summary.pcc_h.mean,
             summary.pcc_h.std, summary.undefined_h, summary.hpg.size());
}

void write_csv_report(std::ostream& os, std::span<const FoldReport> folds, const Summary& summary,
                      std::span<const std::string> genes) {
  os << "fold,metric,value\n";
  for (const auto& f : folds) {
    std::size_t und = 0;
    fmt::print(os, "{0},mse,{1:.17g}\n{0},mae,{2:.17g}\n{0},pcc_a,{3:.17g}\n{0},spots,{4}\n", f.fold_id, f.mse, f.mae,
               mean_defined(f.per_gene_pcc, und), f.spots);
    for (std::size_t g = 0; g < f.per_gene_pcc.size(); ++g) {
      const std::string name = g < genes.size() ? genes[g] : fmt::format("gene{}", g);
      fmt::print(os, "{},pcc:{},{:.17g}\n", f.fold_id, name, f.per_gene_pcc[g]);
    }
  }
  fmt::print(os, "summary,mse_mean,{:.17g}\nsummary,mse_std,{:.17g}\n", summary.mse.mean, summary.mse.std);
  fmt::print(os, "summary,mae_mean,{:.17g}\nsummary,mae_std,{:.17g}\n", summary.mae.mean, summary.mae.std);
  fmt::print(os, "summary,pcc_a_mean,{:.17g}\nsummary,pcc_a_std,{:.17g}\n", summary.pcc_a.mean, summary.pcc_a.std);
  fmt::print(os, "summary,pcc_h_mean,{:.17g}\nsummary,pcc_h_std,{:.17g}\n", summary.pcc_h.mean, summary.pcc_h.std);
  fmt::print(os, "summary,undefined_a,{}\nsummary,undefined_h,{}\n", summary.undefined_a, summary.undefined_h);
  for (std::size_t g : summary.hpg) {
    fmt::print(os, "summary,hpg,{}\n", g < genes.size() ? genes[g] : fmt::format("gene{}", g));
  }
}

}  // namespace gdml
