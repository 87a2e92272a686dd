#pragma once

#include <cstddef>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gdml/model.hpp"
#include "gdml/trainer.hpp"

namespace gdml::cli {

// Exit codes by error category.
enum ExitCode : int { ok = 0, internal = 1, config = 2, data = 3, numeric = 4, io = 5 };

// Training run description, INI sections [data] [model] [loss] [train] [out].
// Relative paths resolve against the config file's directory.
struct RunConfig {
  std::filesystem::path manifest;  // exactly one of manifest / synth
  std::filesystem::path synth;
  ModelConfig model;
  // Unset dimensions are taken from the data.
  std::optional<std::size_t> d_in, genes, neighbor_tokens;
  TrainConfig train;
  std::size_t hpg_top = 50;
  std::filesystem::path out;

  void validate() const;
};

// Unknown sections or keys and malformed values throw ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);
// Every field, defaulted or not; load_run_config reads it back unchanged.
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

void cmd_simulate(const std::filesystem::path& spec, const std::filesystem::path& out);

// `fold` restricts training to one fold of the plan; reports then cover that
// fold alone.
void cmd_train(const std::filesystem::path& config, std::optional<std::size_t> fold, std::ostream& console);

// Exactly one of checkpoint / predictions. All samples of the manifest form a
// single evaluation fold.
void cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& predictions,
              const std::filesystem::path& manifest, const std::filesystem::path& out, std::size_t hpg_top,
              std::ostream& console);

// out/predictions.gdml holds "pred.<sample>" (spots x genes); out/genes.txt
// and out/spots.tsv (sample, spot, row, col) describe its rows and columns.
void cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                 const std::filesystem::path& out);

// Reads genes.txt and spots.tsv beside `predictions`. An empty `sample`
// selects the first sample in the container.
void cmd_render(const std::filesystem::path& predictions, const std::string& gene, const std::string& sample,
                const std::filesystem::path& out);

int exit_code(const std::exception& e) noexcept;
// "error=<category> message=<text>" on one line.
std::string error_line(const std::exception& e);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gdml::cli
