#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "gdml/error.hpp"
#include "gdml/trainer.hpp"

namespace gdml {

const char* to_string(InstanceMode m) noexcept {
  switch (m) {
    case InstanceMode::none: return "none";
    case InstanceMode::fused: return "fused";
    case InstanceMode::multi_scale: return "multi_scale";
  }
  return "unknown";
}

const char* to_string(ClusterCadence c) noexcept {
  return c == ClusterCadence::per_batch ? "per_batch" : "per_epoch";
}

const char* to_string(TargetMode m) noexcept { return m == TargetMode::hard ? "hard" : "soft"; }

InstanceMode parse_instance_mode(const std::string& s) {
  if (s == "none") return InstanceMode::none;
  if (s == "fused") return InstanceMode::fused;
  if (s == "multi_scale") return InstanceMode::multi_scale;
  throw ConfigError(fmt::format("instance_mode must be none, fused or multi_scale, got '{}'", s));
}

ClusterCadence parse_cluster_cadence(const std::string& s) {
  if (s == "per_batch") return ClusterCadence::per_batch;
  if (s == "per_epoch") return ClusterCadence::per_epoch;
  throw ConfigError(fmt::format("cluster_cadence must be per_batch or per_epoch, got '{}'", s));
}

TargetMode parse_target_mode(const std::string& s) {
  if (s == "hard") return TargetMode::hard;
  if (s == "soft") return TargetMode::soft;
  throw ConfigError(fmt::format("target_mode must be hard or soft, got '{}'", s));
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError(fmt::format("train.lr = {} must be positive", lr));
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError(fmt::format("train.decay = {} outside (0, 1]", decay));
  if (decay_every == 0) throw ConfigError("train.decay_every must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (k == 0) throw ConfigError("loss.k must be positive");
  if (kmeans_max_iter == 0) throw ConfigError("loss.kmeans_max_iter must be positive");
  if (folds == 0) throw ConfigError("train.folds must be positive");
  temps.validate();
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

void adam_step(ParamStore& params, const GradientMap& grads, AdamState& state, double lr, const AdamOptions& opt) {
  for (const auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError(fmt::format("adam: no gradient for '{}'", name));
    if (it->second.shape != value.shape) {
      throw ShapeError(fmt::format("adam: gradient of '{}' is {}, parameter is {}", name, shape_str(it->second.shape),
                                   shape_str(value.shape)));
    }
    for (double g : it->second.data) {
      if (!std::isfinite(g)) throw NumericError(fmt::format("non-finite gradient in parameter '{}'", name));
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  for (auto& [name, value] : params) {
    const Tensor& g = grads.at(name);
    auto [mi, fresh_m] = state.m.try_emplace(name, value.shape);
    auto [vi, fresh_v] = state.v.try_emplace(name, value.shape);
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    for (std::size_t i = 0; i < value.data.size(); ++i) {
      m.data[i] = opt.beta1 * m.data[i] + (1.0 - opt.beta1) * g.data[i];
      v.data[i] = opt.beta2 * v.data[i] + (1.0 - opt.beta2) * g.data[i] * g.data[i];
      const double m_hat = m.data[i] / c1, v_hat = v.data[i] / c2;
      value.data[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
  }
}

FoldPlan make_folds(std::span<const SampleRef> samples, std::size_t n_folds, std::uint64_t seed) {
  std::vector<std::string> patients;
  std::map<std::string, std::size_t> load;
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.sample_id).second) throw ContractError(fmt::format("make_folds: sample '{}' listed twice", s.sample_id));
    if (load.emplace(s.patient_id, 0).second) patients.push_back(s.patient_id);
    load[s.patient_id] += 1;
  }
  if (n_folds == 0 || n_folds > patients.size()) {
    throw ContractError(fmt::format("make_folds: {} folds requested for {} patients", n_folds, patients.size()));
  }
  Rng rng(seed);
  rng.shuffle(std::span(patients));
  std::stable_sort(patients.begin(), patients.end(),
                   [&](const std::string& a, const std::string& b) { return load[a] > load[b]; });

  FoldPlan plan;
  plan.folds.resize(n_folds);
  std::vector<std::size_t> fold_load(n_folds, 0);
  for (const auto& p : patients) {
    const auto f = static_cast<std::size_t>(std::min_element(fold_load.begin(), fold_load.end()) - fold_load.begin());
    plan.patient_fold[p] = f;
    fold_load[f] += load[p];
  }
  for (const auto& s : samples) plan.folds[plan.patient_fold.at(s.patient_id)].push_back(s.sample_id);
  return plan;
}

std::vector<SampleRef> sample_refs(const Study& study) {
  std::vector<SampleRef> refs;
  for (const auto& b : study.samples) {
    if (b.size() == 0) throw DataError("study contains an empty sample");
    refs.push_back({b.sample_ids.front(), b.patient_ids.front(), b.size()});
  }
  return refs;
}

FoldSplit fold_split(const Study& study, const FoldPlan& plan, std::size_t fold) {
  if (fold >= plan.folds.size()) throw ContractError(fmt::format("fold {} of {}", fold, plan.folds.size()));
  const std::set<std::string> test_ids(plan.folds[fold].begin(), plan.folds[fold].end());
  FoldSplit split;
  std::set<std::string> train_patients, test_patients;
  for (std::size_t s = 0; s < study.samples.size(); ++s) {
    const auto& b = study.samples[s];
    const bool test = test_ids.count(b.sample_ids.front()) != 0;
    (test ? split.test : split.train).push_back(s);
    (test ? test_patients : train_patients).insert(b.patient_ids.begin(), b.patient_ids.end());
  }
  for (const auto& p : test_patients) {
    if (train_patients.count(p)) throw ContractError(fmt::format("patient '{}' on both sides of fold {}", p, fold));
  }
  return split;
}

}  // namespace gdml
