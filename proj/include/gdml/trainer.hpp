#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gdml/evaluation.hpp"
#include "gdml/losses.hpp"
#include "gdml/model.hpp"
#include "gdml/params.hpp"
#include "gdml/study.hpp"

namespace gdml {

// Which contrastive instance term enters the objective.
enum class InstanceMode {
  none,         // prediction (+ cross-level) only
  fused,        // one instance loss on the fused image embedding
  multi_scale,  // mean over the three per-scale embeddings
};

enum class ClusterCadence { per_batch, per_epoch };

const char* to_string(InstanceMode m) noexcept;
const char* to_string(ClusterCadence c) noexcept;
const char* to_string(TargetMode m) noexcept;
InstanceMode parse_instance_mode(const std::string& s);
ClusterCadence parse_cluster_cadence(const std::string& s);
TargetMode parse_target_mode(const std::string& s);

struct TrainConfig {
  double lr = 1e-4;
  double decay = 0.95;
  std::size_t decay_every = 20;
  std::size_t batch_size = 256;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  std::size_t k = 25;
  std::size_t kmeans_max_iter = 100;
  Temperatures temps;
  TargetMode target_mode = TargetMode::hard;
  InstanceMode instance_mode = InstanceMode::multi_scale;
  ClusterCadence cadence = ClusterCadence::per_batch;
  std::size_t folds = 8;

  void validate() const;
};

// lr0 * decay^floor(epoch / decay_every).
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, Tensor> m, v;
  std::size_t t = 0;
};

// Bias-corrected Adam over every parameter in `params`. A non-finite gradient
// aborts before any parameter changes and throws NumericError naming it.
void adam_step(ParamStore& params, const GradientMap& grads, AdamState& state, double lr,
               const AdamOptions& opt = {});

struct SampleRef {
  std::string sample_id;
  std::string patient_id;
  std::size_t spots = 1;
};

struct FoldPlan {
  std::vector<std::vector<std::string>> folds;  // sample ids per fold
  std::map<std::string, std::size_t> patient_fold;
};

// Patients are shuffled by `seed`, stably sorted by sample count (largest
// first), and each placed in the fold holding the fewest samples so far
// (ties to the lowest fold index).
FoldPlan make_folds(std::span<const SampleRef> samples, std::size_t n_folds, std::uint64_t seed);

struct FoldSplit {
  std::vector<std::size_t> train;  // indices into Study::samples
  std::vector<std::size_t> test;
};

// Throws ContractError if a patient would appear on both sides.
FoldSplit fold_split(const Study& study, const FoldPlan& plan, std::size_t fold);
std::vector<SampleRef> sample_refs(const Study& study);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_total = 0.0;  // mean over batches
  double train_pred = 0.0;
  double val_pcc_a = 0.0;    // NaN without validation samples
  double val_mse = 0.0;
};

struct TrainResult {
  ParamStore best;   // highest validation PCC(A); the final weights without validation
  ParamStore final;
  std::size_t best_epoch = 0;
  double best_val_pcc_a = 0.0;
  std::vector<EpochRecord> history;
  std::size_t steps = 0;
  std::size_t stale_cluster_steps = 0;  // batches smaller than k that reused centroids
};

// Trains from a fresh initialisation on split.train, validating on split.test
// after every epoch. One key=value line per step and per epoch goes to `log`.
TrainResult train_fold(const Study& study, const FoldSplit& split, const ModelConfig& model_cfg,
                       const TrainConfig& cfg, std::ostream* log = nullptr);

// Image pathway in eval mode over one whole slide.
Tensor infer(const ParamStore& params, const ModelConfig& cfg, const SpotBatch& slide);

struct FoldOutcome {
  FoldSplit split;
  TrainResult training;
  FoldReport report;               // best checkpoint on the held-out samples
  std::vector<Tensor> predictions; // aligned with split.test
};

struct CrossValidation {
  FoldPlan plan;
  std::vector<FoldOutcome> folds;
  Summary summary;
};

// Trains fold `fold` of `plan` with seed cfg.seed + fold and reports the best
// checkpoint on its held-out samples.
FoldOutcome run_fold(const Study& study, const FoldPlan& plan, std::size_t fold, const ModelConfig& model_cfg,
                     const TrainConfig& cfg, std::ostream* log = nullptr);

// make_folds, then run_fold for every fold; hpg_top is clamped to
// the gene count.
CrossValidation cross_validate(const Study& study, const ModelConfig& model_cfg, const TrainConfig& cfg,
                               std::size_t hpg_top = 50, std::ostream* log = nullptr);

// Every parameter plus "config.*" scalars describing the model shape.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const ModelConfig& cfg);

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
};

// Throws DataError when names or shapes disagree with the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gdml
