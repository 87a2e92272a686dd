#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "gdml/cli.hpp"
#include "gdml/container.hpp"
#include "gdml/error.hpp"
#include "gdml/evaluation.hpp"
#include "gdml/study.hpp"

namespace gdml::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPredPrefix = "pred.";

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) make_dir(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot write '{}'", path.string()));
  return f;
}

void write_file(const fs::path& path, const std::string& text) {
  auto f = open_out(path);
  f << text;
  if (!f) throw IoError(fmt::format("short write to '{}'", path.string()));
}

std::string sample_id(const SpotBatch& b) { return b.sample_ids.front(); }

void check_dims(const ModelConfig& mc, const Study& study, const std::string& origin) {
  for (const auto& b : study.samples) {
    if (b.feature_dim() != mc.d_in || b.token_count() != mc.neighbor_tokens || b.gene_count() != mc.genes) {
      throw DataError(fmt::format(
          "{} expects d_in={} neighbor_tokens={} genes={}, sample '{}' has {} / {} / {}", origin, mc.d_in,
          mc.neighbor_tokens, mc.genes, sample_id(b), b.feature_dim(), b.token_count(), b.gene_count()));
    }
  }
}

// Resolves a configured dimension against the data; explicit values must agree.
std::size_t resolve(const std::optional<std::size_t>& set, std::size_t data, const char* key) {
  if (set && *set != data) throw DataError(fmt::format("model.{} = {} but the data has {}", key, *set, data));
  return data;
}

void write_reports(const fs::path& dir, std::span<const FoldReport> reports, std::size_t hpg_top,
                   std::span<const std::string> genes, std::ostream& console) {
  const auto hpg = select_hpg(reports, std::min(hpg_top, genes.size()));
  const Summary summary = aggregate(reports, hpg);
  {
    auto f = open_out(dir / "report.csv");
    write_csv_report(f, reports, summary, genes);
  }
  {
    auto f = open_out(dir / "report.txt");
    write_text_report(f, reports, summary, genes);
  }
  fmt::print(console, "folds={} mse={:.6g} mae={:.6g} pcc_a={:.6g} pcc_h={:.6g} report={}\n", summary.folds,
             summary.mse.mean, summary.mae.mean, summary.pcc_a.mean, summary.pcc_h.mean,
             (dir / "report.csv").string());
}

void write_history(const fs::path& path, const TrainResult& r) {
  std::string s = "epoch,lr,train_total,train_pred,val_pcc_a,val_mse\n";
  for (const auto& e : r.history) {
    s += fmt::format("{},{},{},{},{},{}\n", e.epoch, e.lr, e.train_total, e.train_pred, e.val_pcc_a, e.val_mse);
  }
  write_file(path, s);
}

std::vector<Tensor> predict_all(const fs::path& checkpoint, const Study& study) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  check_dims(ck.config, study, checkpoint.string());
  std::vector<Tensor> out;
  for (const auto& b : study.samples) out.push_back(infer(ck.params, ck.config, b));
  return out;
}

struct SpotRow {
  std::string spot;
  std::array<int, 2> coord{};
};

std::map<std::string, std::vector<SpotRow>> read_spots(const fs::path& path) {
  std::map<std::string, std::vector<SpotRow>> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    std::istringstream ss(line);
    std::string sample;
    SpotRow r;
    if (!(std::getline(ss, sample, '\t') && std::getline(ss, r.spot, '\t') && ss >> r.coord[0] >> r.coord[1])) {
      throw DataError(fmt::format("{}:{}: expected 'sample<TAB>spot<TAB>row<TAB>col'", path.string(), line_no));
    }
    out[sample].push_back(r);
  }
  return out;
}

}  // namespace

void cmd_simulate(const fs::path& spec_path, const fs::path& out) {
  const SynthSpec spec = load_synth_spec(spec_path);
  const SynthStudy s = synth_generate(spec);
  make_dir(out);
  save_raw_study(s.study, s.counts, s.study.genes, out);
  save_synth_spec(spec, out / "spec.ini");
  TensorContainer latents;
  for (std::size_t i = 0; i < s.study.samples.size(); ++i) {
    latents.add("latent." + sample_id(s.study.samples[i]), s.latents[i]);
  }
  latents.save(out / "latents.gdml");
}

void cmd_train(const fs::path& config, std::optional<std::size_t> fold, std::ostream& console) {
  RunConfig cfg = load_run_config(config);
  make_dir(cfg.out);

  fs::path manifest = cfg.manifest;
  if (!cfg.synth.empty()) {
    cmd_simulate(cfg.synth, cfg.out / "study");
    manifest = cfg.out / "study" / "manifest.ini";
  }
  const Study study = load_study(manifest);
  if (study.samples.empty()) throw DataError(fmt::format("{}: study has no samples", manifest.string()));

  const SpotBatch& first = study.samples.front();
  ModelConfig mc = cfg.model;
  mc.d_in = resolve(cfg.d_in, first.feature_dim(), "d_in");
  mc.genes = resolve(cfg.genes, first.gene_count(), "genes");
  mc.neighbor_tokens = resolve(cfg.neighbor_tokens, first.token_count(), "neighbor_tokens");
  mc.validate();
  check_dims(mc, study, manifest.string());
  cfg.d_in = mc.d_in;
  cfg.genes = mc.genes;
  cfg.neighbor_tokens = mc.neighbor_tokens;
  save_run_config(cfg, cfg.out / "run.ini");

  auto log = open_out(cfg.out / "train.log");
  if (cfg.train.folds == 1) {
    if (fold && *fold != 0) throw ConfigError(fmt::format("--fold {} with train.folds = 1", *fold));
    FoldSplit all;
    for (std::size_t s = 0; s < study.samples.size(); ++s) all.train.push_back(s);
    const TrainResult r = train_fold(study, all, mc, cfg.train, &log);
    save_checkpoint(cfg.out / "model.gdml", r.final, mc);
    write_history(cfg.out / "history.csv", r);
    fmt::print(console, "steps={} checkpoint={}\n", r.steps, (cfg.out / "model.gdml").string());
    return;
  }

  const auto refs = sample_refs(study);
  std::size_t patients = 0;
  {
    std::set<std::string> ids;
    for (const auto& r : refs) ids.insert(r.patient_id);
    patients = ids.size();
  }
  if (cfg.train.folds > patients) {
    throw ConfigError(fmt::format("train.folds = {} exceeds the {} patients in the study", cfg.train.folds, patients));
  }
  if (fold && *fold >= cfg.train.folds) {
    throw ConfigError(fmt::format("--fold {} outside 0..{}", *fold, cfg.train.folds - 1));
  }
  const FoldPlan plan = make_folds(refs, cfg.train.folds, cfg.train.seed);
  {
    std::string s;
    for (const auto& r : refs) s += fmt::format("{}\t{}\t{}\n", r.sample_id, r.patient_id, plan.patient_fold.at(r.patient_id));
    write_file(cfg.out / "folds.tsv", s);
  }

  std::vector<FoldReport> reports;
  for (std::size_t f = 0; f < cfg.train.folds; ++f) {
    if (fold && *fold != f) continue;
    const FoldOutcome o = run_fold(study, plan, f, mc, cfg.train, &log);
    const fs::path dir = cfg.out / fmt::format("fold_{}", f);
    make_dir(dir);
    save_checkpoint(dir / "best.gdml", o.training.best, mc);
    save_checkpoint(dir / "final.gdml", o.training.final, mc);
    write_history(dir / "history.csv", o.training);
    fmt::print(console, "fold={} best_epoch={} val_pcc_a={:.6g} checkpoint={}\n", f, o.training.best_epoch,
               o.training.best_val_pcc_a, (dir / "best.gdml").string());
    reports.push_back(o.report);
  }
  write_reports(fold ? cfg.out / fmt::format("fold_{}", *fold) : cfg.out, reports, cfg.hpg_top, study.genes, console);
}

void cmd_eval(const fs::path& checkpoint, const fs::path& predictions, const fs::path& manifest, const fs::path& out,
              std::size_t hpg_top, std::ostream& console) {
  if (checkpoint.empty() == predictions.empty()) throw ConfigError("eval needs exactly one of --checkpoint or --predictions");
  if (hpg_top == 0) throw ConfigError("--hpg-top must be positive");
  const Study study = load_study(manifest);
  if (study.samples.empty()) throw DataError(fmt::format("{}: study has no samples", manifest.string()));

  std::vector<Tensor> truth, pred;
  for (const auto& b : study.samples) truth.push_back(b.expression);
  if (!checkpoint.empty()) {
    pred = predict_all(checkpoint, study);
  } else {
    const auto c = TensorContainer::load(predictions);
    for (const auto& b : study.samples) {
      const std::string key = kPredPrefix + sample_id(b);
      if (!c.contains(key)) throw DataError(fmt::format("{}: no entry '{}'", predictions.string(), key));
      const Tensor& t = c.at(key);
      if (t.shape != b.expression.shape) {
        throw DataError(fmt::format("{}: '{}' is {}, the study has {}", predictions.string(), key, shape_str(t.shape),
                                    shape_str(b.expression.shape)));
      }
      pred.push_back(t);
    }
  }
  const FoldReport report = make_fold_report(0, truth, pred);
  make_dir(out);
  write_reports(out, std::span(&report, 1), hpg_top, study.genes, console);
}

void cmd_predict(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out) {
  const Study study = load_study(manifest);
  const auto pred = predict_all(checkpoint, study);
  make_dir(out);
  TensorContainer c;
  std::string spots;
  for (std::size_t s = 0; s < study.samples.size(); ++s) {
    const auto& b = study.samples[s];
    c.add(kPredPrefix + sample_id(b), pred[s]);
    for (std::size_t i = 0; i < b.size(); ++i) {
      spots += fmt::format("{}\t{}\t{}\t{}\n", sample_id(b), b.spot_ids[i], b.coords[i][0], b.coords[i][1]);
    }
  }
  c.save(out / "predictions.gdml");
  write_lines(out / "genes.txt", study.genes);
  write_file(out / "spots.tsv", spots);
}

void cmd_render(const fs::path& predictions, const std::string& gene, const std::string& sample, const fs::path& out) {
  const auto c = TensorContainer::load(predictions);
  const fs::path dir = predictions.parent_path();
  const auto genes = read_lines(dir / "genes.txt");
  const auto spots = read_spots(dir / "spots.tsv");

  const auto g = std::find(genes.begin(), genes.end(), gene);
  if (g == genes.end()) throw DataError(fmt::format("gene '{}' not in {}", gene, (dir / "genes.txt").string()));
  std::string id = sample;
  if (id.empty()) {
    for (const auto& e : c.entries()) {
      if (e.name.starts_with(kPredPrefix)) {
        id = e.name.substr(std::string(kPredPrefix).size());
        break;
      }
    }
    if (id.empty()) throw DataError(fmt::format("{}: no predictions", predictions.string()));
  }
  const std::string key = kPredPrefix + id;
  if (!c.contains(key)) throw DataError(fmt::format("{}: no entry '{}'", predictions.string(), key));
  const Tensor& t = c.at(key);
  const auto rows = spots.find(id);
  if (t.rank() != 2 || t.cols() != genes.size() || rows == spots.end() || rows->second.size() != t.rows()) {
    throw DataError(fmt::format("{}: '{}' of shape {} does not match genes.txt and spots.tsv", predictions.string(),
                                key, shape_str(t.shape)));
  }
  const auto col = static_cast<std::size_t>(g - genes.begin());
  std::vector<double> values;
  std::vector<std::array<int, 2>> coords;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    values.push_back(t(i, col));
    coords.push_back(rows->second[i].coord);
    ids.push_back(rows->second[i].spot);
  }
  write_file(out, render_heatmap_svg(coords, values, ids, fmt::format("{} {}", id, gene)));
}

int exit_code(const std::exception& e) noexcept {
  if (const auto* g = dynamic_cast<const Error*>(&e)) {
    switch (g->kind()) {
      case ErrorKind::config: return config;
      case ErrorKind::data:
      case ErrorKind::shape:
      case ErrorKind::contract: return data;
      case ErrorKind::numeric: return numeric;
      case ErrorKind::io: return io;
    }
  }
  if (dynamic_cast<const CLI::ParseError*>(&e)) return config;
  if (dynamic_cast<const fs::filesystem_error*>(&e) || dynamic_cast<const std::ios_base::failure*>(&e)) return io;
  return internal;
}

std::string error_line(const std::exception& e) {
  static constexpr const char* kNames[] = {"ok", "internal", "config", "data", "numeric", "io"};
  std::string msg = e.what();
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  return fmt::format("error={} message={}", kNames[exit_code(e)], msg);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale image/expression contrastive training on spatial transcriptomics studies.", "gdml"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  fs::path spec, config_path, checkpoint, predictions, manifest, dir, svg;
  std::string fold = "all", gene, sample;
  std::size_t hpg_top = 50;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic study rooted at a manifest.");
  sim->add_option("--spec", spec, "Synthetic study description ([synth] INI)")->required();
  sim->add_option("--out", dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train per fold and write checkpoints, logs and reports.");
  train->add_option("--config", config_path, "Run configuration INI")->required();
  train->add_option("--fold", fold, "Single fold index to train, or 'all'");

  auto* eval = app.add_subcommand("eval", "Score a checkpoint or stored predictions against a study.");
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint");
  eval->add_option("--predictions", predictions, "Predictions container from 'predict'");
  eval->add_option("--manifest", manifest, "Study manifest")->required();
  eval->add_option("--out", dir, "Output directory")->required();
  eval->add_option("--hpg-top", hpg_top, "Number of highly predictive genes for PCC(H)");

  auto* predict = app.add_subcommand("predict", "Write predicted expression for every spot of a study.");
  predict->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  predict->add_option("--manifest", manifest, "Study manifest")->required();
  predict->add_option("--out", dir, "Output directory")->required();

  auto* render = app.add_subcommand("render", "Draw one gene of one sample as a hexagonal SVG heatmap.");
  render->add_option("--predictions", predictions, "Predictions container from 'predict'")->required();
  render->add_option("--gene", gene, "Gene name")->required();
  render->add_option("--sample", sample, "Sample id (first sample when empty)");
  render->add_option("--out", svg, "Output SVG file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << error_line(e) << '\n';
    return ExitCode::config;
  }

  try {
    if (sim->parsed()) {
      cmd_simulate(spec, dir);
    } else if (train->parsed()) {
      std::optional<std::size_t> which;
      if (fold != "all") {
        std::size_t v = 0;
        const auto [p, ec] = std::from_chars(fold.data(), fold.data() + fold.size(), v);
        if (ec != std::errc() || p != fold.data() + fold.size()) {
          throw ConfigError(fmt::format("--fold must be an index or 'all', got '{}'", fold));
        }
        which = v;
      }
      cmd_train(config_path, which, out);
    } else if (eval->parsed()) {
      cmd_eval(checkpoint, predictions, manifest, dir, hpg_top, out);
    } else if (predict->parsed()) {
      cmd_predict(checkpoint, manifest, dir);
    } else if (render->parsed()) {
      cmd_render(predictions, gene, sample, svg);
    }
  } catch (const std::exception& e) {
    err << error_line(e) << '\n';
    return exit_code(e);
  }
  return ExitCode::ok;
}

}  // namespace gdml::cli
