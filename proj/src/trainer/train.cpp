#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "gdml/error.hpp"
#include "gdml/grouping.hpp"
#include "gdml/ops.hpp"
#include "gdml/trainer.hpp"

namespace gdml {

namespace {

// Diverged weights reach clustering before the loss check; report them as such.
const Tensor& finite(const Tensor& t, const char* what) {
  for (double v : t.data) {
    if (!std::isfinite(v)) throw NumericError(fmt::format("non-finite {}", what));
  }
  return t;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Batch {
  std::size_t sample;
  std::vector<std::size_t> rows;
};

// Per slide: shuffled spots cut into batch_size chunks; slides then take turns.
std::vector<Batch> plan_epoch(const Study& study, std::span<const std::size_t> train, std::size_t batch_size, Rng& rng) {
  std::vector<std::vector<Batch>> per_slide;
  for (std::size_t s : train) {
    std::vector<std::size_t> rows(study.samples[s].size());
    std::iota(rows.begin(), rows.end(), 0);
    rng.shuffle(std::span(rows));
    std::vector<Batch> chunks;
    for (std::size_t at = 0; at < rows.size(); at += batch_size) {
      const auto end = std::min(rows.size(), at + batch_size);
      chunks.push_back({s, std::vector<std::size_t>(rows.begin() + static_cast<std::ptrdiff_t>(at),
                                                    rows.begin() + static_cast<std::ptrdiff_t>(end))});
    }
    per_slide.push_back(std::move(chunks));
  }
  std::vector<Batch> out;
  for (std::size_t round = 0;; ++round) {
    bool any = false;
    for (auto& chunks : per_slide) {
      if (round < chunks.size()) {
        out.push_back(std::move(chunks[round]));
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

void check_study(const Study& study, const FoldSplit& split, const ModelConfig& mc) {
  std::set<std::string> train_patients;
  for (std::size_t s : split.train) {
    if (s >= study.samples.size()) throw ContractError("train split index out of range");
    train_patients.insert(study.samples[s].patient_ids.begin(), study.samples[s].patient_ids.end());
  }
  for (std::size_t s : split.test) {
    if (s >= study.samples.size()) throw ContractError("test split index out of range");
    for (const auto& p : study.samples[s].patient_ids) {
      if (train_patients.count(p)) throw ContractError(fmt::format("patient '{}' appears in train and test", p));
    }
  }
  if (split.train.empty()) throw ContractError("train split is empty");
  for (const auto& b : study.samples) {
    if (b.feature_dim() != mc.d_in || b.token_count() != mc.neighbor_tokens || b.gene_count() != mc.genes) {
      throw DataError(fmt::format(
          "sample '{}' has D_in {}, {} tokens, {} genes; model expects {}, {}, {}", b.sample_ids.front(),
          b.feature_dim(), b.token_count(), b.gene_count(), mc.d_in, mc.neighbor_tokens, mc.genes));
    }
  }
}

// Cluster-space embeddings of every training spot under the current weights, eval mode.
std::pair<Tensor, Tensor> clustering_inputs(const ParamStore& params, const ModelConfig& mc, const Study& study,
                                            std::span<const std::size_t> train) {
  std::vector<Var> img, gene;
  Tape tape(Mode::eval);
  const auto bp = BoundParams::constants(params, tape);
  const Model model(mc, bp, tape);
  for (std::size_t s : train) {
    const auto& b = study.samples[s];
    img.push_back(group_project(bp, model.encode_image(b).fusion.fused, Modality::image));
    gene.push_back(group_project(bp, model.gene_encode(tape.constant(b.expression)), Modality::gene));
  }
  return {concat_rows(img).value(), concat_rows(gene).value()};
}

double mean_defined(std::span<const double> v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : kNaN;
}

}  // namespace

Tensor infer(const ParamStore& params, const ModelConfig& cfg, const SpotBatch& slide) {
  Tape tape(Mode::eval);
  const Model model(cfg, BoundParams::constants(params, tape), tape);
  Tensor out = model.predict_expression(model.encode_image(slide).fusion.fused).value();
  for (double v : out.data) {
    if (!std::isfinite(v)) throw NumericError(fmt::format("non-finite prediction for sample '{}'", slide.sample_ids.front()));
  }
  return out;
}

TrainResult train_fold(const Study& study, const FoldSplit& split, const ModelConfig& mc, const TrainConfig& cfg,
                       std::ostream* log) {
  mc.validate();
  cfg.validate();
  check_study(study, split, mc);

  Rng master(cfg.seed);
  ParamStore params = init_params(mc, master.next_u64());
  Rng order_rng = master.split();
  Rng step_rng = master.split();
  AdamState adam;
  GroupState groups;
  bool have_groups = false;
  const bool use_cross = cfg.temps.lambda > 0.0;

  TrainResult result;
  result.best_val_pcc_a = -std::numeric_limits<double>::infinity();
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    if (use_cross && cfg.cadence == ClusterCadence::per_epoch) {
      const auto [img, gene] = clustering_inputs(params, mc, study, split.train);
      if (img.rows() >= cfg.k) {
        KMeansOptions ko{cfg.k, step_rng.next_u64(), cfg.kmeans_max_iter};
        const auto ci = kmeans(finite(img, "image clustering input"), ko);
        ko.seed = step_rng.next_u64();
        const auto cg = kmeans(finite(gene, "gene clustering input"), ko);
        groups.image_centroids = ci.centroids;
        groups.gene_centroids = cg.centroids;
        groups.image_inertia = ci.inertia;
        groups.gene_inertia = cg.inertia;
        have_groups = true;
      }
    }

    double sum_total = 0.0, sum_pred = 0.0;
    const auto batches = plan_epoch(study, split.train, cfg.batch_size, order_rng);
    for (const auto& plan : batches) {
      const SpotBatch batch = study.samples[plan.sample].subset(plan.rows);
      Tape tape(Mode::train, step_rng.next_u64());
      const BoundParams bp(params, tape);
      const Model model(mc, bp, tape);
      const auto enc = model.encode_image(batch);
      const Var truth = tape.constant(batch.expression);
      const Var pred = prediction_loss(model.predict_expression(enc.fusion.fused), truth);

      std::optional<Var> gene;
      if (cfg.instance_mode != InstanceMode::none || use_cross) gene = model.gene_encode(truth);

      std::optional<Var> multi;
      std::array<double, 3> per_scale{};
      if (cfg.instance_mode == InstanceMode::multi_scale) {
        const auto ms = multi_scale_instance_loss(enc.fusion.per_scale, *gene, cfg.temps.tau);
        multi = ms.total;
        for (std::size_t s = 0; s < 3; ++s) per_scale[s] = ms.per_scale[s].value().data[0];
      } else if (cfg.instance_mode == InstanceMode::fused) {
        multi = instance_loss(enc.fusion.fused, *gene, cfg.temps.tau).total;
      }

      std::optional<Var> cross;
      const char* cluster_state = "off";
      if (use_cross) {
        if (cfg.cadence == ClusterCadence::per_batch) {
          if (batch.size() >= cfg.k) {
            const Tensor img_clu = group_project(bp, enc.fusion.fused, Modality::image).value();
            const Tensor gene_clu = group_project(bp, *gene, Modality::gene).value();
            KMeansOptions ko{cfg.k, step_rng.next_u64(), cfg.kmeans_max_iter};
            const auto ci = kmeans(finite(img_clu, "image clustering input"), ko);
            ko.seed = step_rng.next_u64();
            const auto cg = kmeans(finite(gene_clu, "gene clustering input"), ko);
            groups.image_centroids = ci.centroids;
            groups.gene_centroids = cg.centroids;
            groups.image_inertia = ci.inertia;
            groups.gene_inertia = cg.inertia;
            have_groups = true;
            cluster_state = "fresh";
          } else {
            cluster_state = have_groups ? "stale" : "none";
            ++result.stale_cluster_steps;
          }
        } else {
          cluster_state = have_groups ? "epoch" : "none";
        }
        if (have_groups) {
          groups.image_to_gene = assign_cross(enc.fusion.fused.value(), groups.gene_centroids);
          groups.gene_to_image = assign_cross(gene->value(), groups.image_centroids);
          const CrossLevelInputs in{groups.gene_centroids, groups.image_centroids, groups.image_to_gene,
                                    groups.gene_to_image};
          cross = cross_level_loss(enc.fusion.fused, *gene, in, cfg.temps.tau_ig, cfg.target_mode).total;
        }
      }

      const auto total = total_loss(multi, cross, pred, cfg.temps.lambda, per_scale);
      const auto& br = total.breakdown;
      if (!std::isfinite(br.total) || !std::isfinite(br.multi_ins) || !std::isfinite(br.cross) || !std::isfinite(br.pred)) {
        throw NumericError(fmt::format("non-finite loss at epoch {} step {}: multi_ins={} cross={} pred={}", epoch,
                                       result.steps, br.multi_ins, br.cross, br.pred));
      }
      const auto grads = tape.backward(total.total);
      adam_step(params, grads, adam, lr);
      sum_total += br.total;
      sum_pred += br.pred;
      if (log) {
        fmt::print(*log,
                   "step={} epoch={} sample={} spots={} lr={:.6g} multi_ins={:.17g} cross={:.17g} pred={:.17g} "
                   "total={:.17g} scale_l={:.17g} scale_n={:.17g} scale_g={:.17g} clusters={}\n",
                   result.steps, epoch, batch.sample_ids.front(), batch.size(), lr, br.multi_ins, br.cross, br.pred,
                   br.total, br.per_scale[0], br.per_scale[1], br.per_scale[2], cluster_state);
      }
      ++result.steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_total = sum_total / static_cast<double>(batches.size());
    rec.train_pred = sum_pred / static_cast<double>(batches.size());
    rec.val_pcc_a = kNaN;
    rec.val_mse = kNaN;
    if (!split.test.empty()) {
      std::vector<Tensor> truth, preds;
      for (std::size_t s : split.test) {
        truth.push_back(study.samples[s].expression);
        preds.push_back(infer(params, mc, study.samples[s]));
      }
      const auto report = make_fold_report(0, truth, preds);
      rec.val_pcc_a = mean_defined(report.per_gene_pcc);
      rec.val_mse = report.mse;
      const double score = std::isnan(rec.val_pcc_a) ? -std::numeric_limits<double>::infinity() : rec.val_pcc_a;
      if (!have_best || score > result.best_val_pcc_a) {
        result.best = params;
        result.best_epoch = epoch;
        result.best_val_pcc_a = score;
        have_best = true;
      }
    }
    result.history.push_back(rec);
    if (log) {
      fmt::print(*log, "epoch={} lr={:.6g} train_total={:.17g} train_pred={:.17g} val_pcc_a={:.17g} val_mse={:.17g}\n",
                 epoch, lr, rec.train_total, rec.train_pred, rec.val_pcc_a, rec.val_mse);
    }
  }
  result.final = params;
  if (!have_best) {
    result.best = params;
    result.best_epoch = cfg.epochs - 1;
    result.best_val_pcc_a = kNaN;
  }
  return result;
}

FoldOutcome run_fold(const Study& study, const FoldPlan& plan, std::size_t fold, const ModelConfig& mc,
                     const TrainConfig& cfg, std::ostream* log) {
  FoldOutcome out;
  out.split = fold_split(study, plan, fold);
  if (log) fmt::print(*log, "fold={} train_samples={} test_samples={}\n", fold, out.split.train.size(), out.split.test.size());
  TrainConfig fold_cfg = cfg;
  fold_cfg.seed = cfg.seed + fold;
  out.training = train_fold(study, out.split, mc, fold_cfg, log);
  std::vector<Tensor> truth;
  for (std::size_t s : out.split.test) {
    truth.push_back(study.samples[s].expression);
    out.predictions.push_back(infer(out.training.best, mc, study.samples[s]));
  }
  out.report = make_fold_report(fold, truth, out.predictions);
  return out;
}

CrossValidation cross_validate(const Study& study, const ModelConfig& mc, const TrainConfig& cfg, std::size_t hpg_top,
                               std::ostream* log) {
  cfg.validate();
  if (cfg.folds < 2) throw ConfigError("cross-validation needs train.folds >= 2");
  CrossValidation cv;
  cv.plan = make_folds(sample_refs(study), cfg.folds, cfg.seed);
  std::vector<FoldReport> reports;
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    cv.folds.push_back(run_fold(study, cv.plan, f, mc, cfg, log));
    reports.push_back(cv.folds.back().report);
  }
  const auto hpg = select_hpg(reports, std::min(hpg_top, mc.genes));
  cv.summary = aggregate(reports, hpg);
  return cv;
}

}  // namespace gdml
