#include "gdml/study.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "gdml/container.hpp"
#include "gdml/error.hpp"

namespace gdml {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void write_lines(const fs::path& path, std::span<const std::string> lines) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  for (const auto& l : lines) f << l << '\n';
  if (!f) throw IoError(fmt::format("short write to '{}'", path.string()));
}

namespace {

std::vector<std::size_t> column_indices(std::span<const std::string> columns, std::span<const std::string> genes,
                                        const std::string& context) {
  std::map<std::string_view, std::size_t> index;
  for (std::size_t j = 0; j < columns.size(); ++j) index.emplace(columns[j], j);
  std::vector<std::size_t> pick;
  std::vector<std::string_view> missing;
  for (const auto& g : genes) {
    auto it = index.find(g);
    if (it == index.end()) {
      missing.push_back(g);
    } else {
      pick.push_back(it->second);
    }
  }
  if (!missing.empty()) {
    throw DataError(fmt::format("{}: {} selected gene(s) absent from the expression matrix: {}", context,
                                missing.size(), fmt::join(missing, ", ")));
  }
  return pick;
}

}  // namespace

Preprocessed preprocess_expression(const Tensor& counts, std::span<const std::string> columns,
                                   std::span<const std::string> genes, double scale) {
  if (counts.rank() != 2 || counts.cols() != columns.size()) {
    throw DataError(fmt::format("preprocess: counts {} do not match {} column names", shape_str(counts.shape), columns.size()));
  }
  const auto pick = column_indices(columns, genes, "preprocess");
  Preprocessed out;
  std::vector<double> rows;
  for (std::size_t i = 0; i < counts.rows(); ++i) {
    const auto r = counts.row(i);
    double total = 0.0;
    for (double v : r) {
      if (!std::isfinite(v) || v < 0.0) throw DataError(fmt::format("preprocess: spot {} has a negative or non-finite count", i));
      total += v;
    }
    if (total == 0.0) {
      ++out.dropped;
      continue;
    }
    out.kept.push_back(i);
    for (std::size_t j : pick) rows.push_back(std::log1p(scale * r[j] / total));
  }
  out.values = Tensor(Shape{out.kept.size(), pick.size()}, std::move(rows));
  return out;
}

namespace {

const std::set<std::string> kStudyKeys{"genes", "expression_kind", "scale"};
const std::set<std::string> kSampleKeys{"patient", "local", "neighbor", "expression", "columns", "coords"};

std::string require(const pt::ptree& section, const std::string& section_name, const std::string& key,
                    const fs::path& manifest) {
  auto v = section.get_optional<std::string>(pt::ptree::path_type(key, '/'));
  if (!v || v->empty()) {
    throw DataError(fmt::format("{}: [{}] is missing '{}'", manifest.string(), section_name, key));
  }
  return *v;
}

void reject_unknown(const pt::ptree& section, const std::set<std::string>& allowed, const std::string& name,
                    const fs::path& manifest) {
  for (const auto& [key, _] : section) {
    if (!allowed.count(key)) throw DataError(fmt::format("{}: unknown key '{}' in [{}]", manifest.string(), key, name));
  }
}

struct CoordTable {
  std::vector<std::string> ids;
  std::vector<std::array<int, 2>> coords;
};

int parse_int(const std::string& s, const fs::path& file, std::size_t line) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw DataError(fmt::format("{}:{}: '{}' is not an integer coordinate", file.string(), line, s));
  }
  return v;
}

CoordTable read_coords(const fs::path& path) {
  CoordTable t;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    std::istringstream ss(line);
    std::string id, r, c, extra;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, r, '\t') || !std::getline(ss, c, '\t') ||
        std::getline(ss, extra, '\t')) {
      throw DataError(fmt::format("{}:{}: expected 'spot_id<TAB>row<TAB>col'", path.string(), line_no));
    }
    t.ids.push_back(id);
    t.coords.push_back({parse_int(r, path, line_no), parse_int(c, path, line_no)});
  }
  return t;
}

void write_coords(const fs::path& path, const SpotBatch& b) {
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < b.size(); ++i) {
    lines.push_back(fmt::format("{}\t{}\t{}", b.spot_ids[i], b.coords[i][0], b.coords[i][1]));
  }
  write_lines(path, lines);
}

const Tensor& tensor_entry(const TensorContainer& c, const char* name, std::size_t rank, const fs::path& file) {
  const Tensor& t = c.at(name);
  if (t.rank() != rank) {
    throw DataError(fmt::format("{}: entry '{}' has shape {}, expected rank {}", file.string(), name, shape_str(t.shape), rank));
  }
  return t;
}

void expect_rows(const fs::path& file, std::size_t got, std::size_t want, const std::string& sample) {
  if (got != want) {
    throw DataError(fmt::format("{}: sample '{}' has {} spots here but {} in its coordinate table", file.string(), sample,
                                got, want));
  }
}

SpotBatch load_sample(const pt::ptree& sec, const std::string& id, const fs::path& manifest,
                      std::span<const std::string> genes, bool raw, double scale, std::size_t& dropped) {
  const fs::path root = manifest.parent_path();
  const std::string section = "sample." + id;
  const std::string patient = require(sec, section, "patient", manifest);
  const fs::path local_path = root / require(sec, section, "local", manifest);
  const fs::path nb_path = root / require(sec, section, "neighbor", manifest);
  const fs::path expr_path = root / require(sec, section, "expression", manifest);
  const fs::path cols_path = root / require(sec, section, "columns", manifest);
  const fs::path coords_path = root / require(sec, section, "coords", manifest);

  const CoordTable coords = read_coords(coords_path);
  const std::size_t n = coords.ids.size();
  const Tensor local = tensor_entry(TensorContainer::load(local_path), "features", 2, local_path);
  const Tensor neighbor = tensor_entry(TensorContainer::load(nb_path), "features", 3, nb_path);
  const Tensor expr = tensor_entry(TensorContainer::load(expr_path), "expression", 2, expr_path);
  const auto columns = read_lines(cols_path);
  expect_rows(local_path, local.shape[0], n, id);
  expect_rows(nb_path, neighbor.shape[0], n, id);
  expect_rows(expr_path, expr.shape[0], n, id);
  if (neighbor.shape[2] != local.shape[1]) {
    throw DataError(fmt::format("{}: neighbour feature width {} differs from local width {} in '{}'", nb_path.string(),
                                neighbor.shape[2], local.shape[1], local_path.string()));
  }
  if (expr.shape[1] != columns.size()) {
    throw DataError(fmt::format("{}: {} expression columns but {} names in '{}'", expr_path.string(), expr.shape[1],
                                columns.size(), cols_path.string()));
  }

  Preprocessed p;
  if (raw) {
    p = preprocess_expression(expr, columns, genes, scale);
  } else {
    // Already normalised: select columns only.
    const auto pick = column_indices(columns, genes, cols_path.string());
    p.values = Tensor(Shape{expr.rows(), pick.size()});
    for (std::size_t i = 0; i < expr.rows(); ++i) {
      p.kept.push_back(i);
      for (std::size_t j = 0; j < pick.size(); ++j) p.values(i, j) = expr(i, pick[j]);
    }
  }
  dropped += p.dropped;

  SpotBatch b;
  b.local = take_rows(local, p.kept);
  b.neighbor = take_rows(neighbor, p.kept);
  b.expression = std::move(p.values);
  for (std::size_t r : p.kept) {
    b.coords.push_back(coords.coords[r]);
    b.spot_ids.push_back(coords.ids[r]);
    b.sample_ids.push_back(id);
    b.patient_ids.push_back(patient);
  }
  b.validate();
  return b;
}

void write_study(const Study& study, std::span<const Tensor> expression, std::span<const std::string> columns,
                 bool raw, const fs::path& dir) {
  fs::create_directories(dir);
  std::string manifest = fmt::format("[study]\ngenes = genes.txt\nexpression_kind = {}\nscale = 10000\n",
                                     raw ? "raw" : "preprocessed");
  write_lines(dir / "genes.txt", study.genes);
  for (std::size_t s = 0; s < study.samples.size(); ++s) {
    const SpotBatch& b = study.samples[s];
    if (b.size() == 0) throw ContractError("save_study: empty sample");
    const std::string id = b.sample_ids.front();
    fs::create_directories(dir / id);
    TensorContainer local, nb, ex;
    local.add("features", b.local);
    nb.add("features", b.neighbor);
    ex.add("expression", expression[s]);
    local.save(dir / id / "local.gdml");
    nb.save(dir / id / "neighbor.gdml");
    ex.save(dir / id / "expression.gdml");
    write_lines(dir / id / "columns.txt", columns);
    write_coords(dir / id / "coords.tsv", b);
    manifest += fmt::format(
        "\n[sample.{0}]\npatient = {1}\nlocal = {0}/local.gdml\nneighbor = {0}/neighbor.gdml\n"
        "expression = {0}/expression.gdml\ncolumns = {0}/columns.txt\ncoords = {0}/coords.tsv\n",
        id, b.patient_ids.front());
  }
  std::ofstream f(dir / "manifest.ini", std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot write '{}'", (dir / "manifest.ini").string()));
  f << manifest;
}

}  // namespace

Study load_study(const fs::path& manifest) {
  if (!fs::exists(manifest)) throw IoError(fmt::format("manifest '{}' does not exist", manifest.string()));
  pt::ptree tree;
  try {
    pt::read_ini(manifest.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw DataError(fmt::format("{}: {}", manifest.string(), e.message()));
  }
  Study study;
  bool raw = true;
  double scale = 1e4;
  bool have_study = false;
  for (const auto& [name, sec] : tree) {
    if (name == "study") {
      have_study = true;
      reject_unknown(sec, kStudyKeys, name, manifest);
      study.genes = read_lines(manifest.parent_path() / require(sec, name, "genes", manifest));
      const std::string kind = sec.get<std::string>(pt::ptree::path_type("expression_kind", '/'), "raw");
      if (kind != "raw" && kind != "preprocessed") {
        throw DataError(fmt::format("{}: expression_kind must be raw or preprocessed, got '{}'", manifest.string(), kind));
      }
      raw = kind == "raw";
      scale = sec.get<double>(pt::ptree::path_type("scale", '/'), 1e4);
    } else if (!name.starts_with("sample.")) {
      throw DataError(fmt::format("{}: unknown section [{}]", manifest.string(), name));
    }
  }
  for (const auto& [name, sec] : tree) {
    if (!name.starts_with("sample.")) continue;
    if (!have_study) throw DataError(fmt::format("{}: samples listed without a [study] section", manifest.string()));
    reject_unknown(sec, kSampleKeys, name, manifest);
    study.samples.push_back(load_sample(sec, name.substr(7), manifest, study.genes, raw, scale, study.dropped_spots));
  }
  return study;
}

void save_study(const Study& study, const fs::path& dir) {
  std::vector<Tensor> expr;
  for (const auto& b : study.samples) expr.push_back(b.expression);
  write_study(study, expr, study.genes, false, dir);
}

void save_raw_study(const Study& study, std::span<const Tensor> counts, std::span<const std::string> columns,
                    const fs::path& dir) {
  if (counts.size() != study.samples.size()) throw ContractError("save_raw_study: one count matrix per sample");
  write_study(study, counts, columns, true, dir);
}

}  // namespace gdml
