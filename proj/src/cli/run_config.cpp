#include <charconv>
#include <fstream>
#include <map>
#include <set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "gdml/cli.hpp"
#include "gdml/error.hpp"

namespace gdml::cli {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>> kKeys{
    {"data", {"manifest", "synth"}},
    {"model",
     {"d_in", "d", "genes", "heads", "neighbor_blocks", "global_blocks", "fusion_blocks", "neighbor_tokens", "ff_mult",
      "dropout", "fusion", "global_positional"}},
    {"loss", {"tau", "tau_ig", "lambda", "k", "target_mode", "instance_mode", "cadence", "kmeans_max_iter"}},
    {"train", {"lr", "decay", "decay_every", "batch", "epochs", "seed", "folds", "hpg_top"}},
    {"out", {"dir"}},
};

class Section {
 public:
  Section(const pt::ptree* tree, std::string name, const fs::path& file)
      : tree_(tree), name_(std::move(name)), file_(file) {}

  std::optional<std::string> raw(const std::string& key) const {
    if (!tree_) return std::nullopt;
    const auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '/'));
    if (!v) return std::nullopt;
    if (v->empty()) fail(key, *v, "a value");
    return *v;
  }

  template <typename T>
  void read(const std::string& key, T& dst) const {
    const auto v = raw(key);
    if (!v) return;
    T parsed{};
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), parsed);
    if (ec != std::errc() || p != v->data() + v->size()) fail(key, *v, "a number");
    dst = parsed;
  }

  void read_count(const std::string& key, std::size_t& dst) const {
    const auto v = raw(key);
    if (v && v->front() == '-') fail(key, *v, "a non-negative integer");
    read(key, dst);
  }

  void read_count(const std::string& key, std::optional<std::size_t>& dst) const {
    if (!raw(key)) return;
    std::size_t v = 0;
    read_count(key, v);
    dst = v;
  }

  void read_bool(const std::string& key, bool& dst) const {
    const auto v = raw(key);
    if (!v) return;
    if (*v == "true" || *v == "1") {
      dst = true;
    } else if (*v == "false" || *v == "0") {
      dst = false;
    } else {
      fail(key, *v, "true or false");
    }
  }

  void read_path(const std::string& key, fs::path& dst) const {
    if (const auto v = raw(key)) dst = (file_.parent_path() / *v).lexically_normal();
  }

  template <typename Parse>
  void read_enum(const std::string& key, Parse parse) const {
    const auto v = raw(key);
    if (!v) return;
    try {
      parse(*v);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}: [{}] {}", file_.string(), name_, e.what()));
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& value, const char* want) const {
    throw ConfigError(fmt::format("{}: [{}] {} = '{}' is not {}", file_.string(), name_, key, value, want));
  }

 private:
  const pt::ptree* tree_;
  std::string name_;
  fs::path file_;
};

}  // namespace

void RunConfig::validate() const {
  if (manifest.empty() == synth.empty()) throw ConfigError("[data] needs exactly one of manifest or synth");
  if (out.empty()) throw ConfigError("[out] dir is required");
  if (hpg_top == 0) throw ConfigError("train.hpg_top must be positive");
  train.validate();
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw IoError(fmt::format("config '{}' does not exist", path.string()));
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.message()));
  }
  for (const auto& [name, sec] : tree) {
    const auto it = kKeys.find(name);
    if (it == kKeys.end()) throw ConfigError(fmt::format("{}: unknown section [{}]", path.string(), name));
    for (const auto& [key, _] : sec) {
      if (!it->second.count(key)) throw ConfigError(fmt::format("{}: unknown key '{}' in [{}]", path.string(), key, name));
    }
  }
  auto section = [&](const std::string& name) {
    const auto child = tree.get_child_optional(pt::ptree::path_type(name, '/'));
    return Section(child ? &*child : nullptr, name, path);
  };

  RunConfig c;
  const Section data = section("data");
  data.read_path("manifest", c.manifest);
  data.read_path("synth", c.synth);

  const Section model = section("model");
  model.read_count("d_in", c.d_in);
  model.read_count("d", c.model.d);
  model.read_count("genes", c.genes);
  model.read_count("heads", c.model.heads);
  model.read_count("neighbor_blocks", c.model.neighbor_blocks);
  model.read_count("global_blocks", c.model.global_blocks);
  model.read_count("fusion_blocks", c.model.fusion_blocks);
  model.read_count("neighbor_tokens", c.neighbor_tokens);
  model.read_count("ff_mult", c.model.ff_mult);
  model.read("dropout", c.model.dropout);
  model.read_enum("fusion", [&](const std::string& v) {
    if (v == "mean") {
      c.model.fusion = FusionMode::mean;
    } else if (v == "concat_linear") {
      c.model.fusion = FusionMode::concat_linear;
    } else {
      throw ConfigError(fmt::format("fusion must be mean or concat_linear, got '{}'", v));
    }
  });
  model.read_bool("global_positional", c.model.global_positional);

  const Section loss = section("loss");
  loss.read("tau", c.train.temps.tau);
  loss.read("tau_ig", c.train.temps.tau_ig);
  loss.read("lambda", c.train.temps.lambda);
  loss.read_count("k", c.train.k);
  loss.read_count("kmeans_max_iter", c.train.kmeans_max_iter);
  loss.read_enum("target_mode", [&](const std::string& v) { c.train.target_mode = parse_target_mode(v); });
  loss.read_enum("instance_mode", [&](const std::string& v) { c.train.instance_mode = parse_instance_mode(v); });
  loss.read_enum("cadence", [&](const std::string& v) { c.train.cadence = parse_cluster_cadence(v); });

  const Section train = section("train");
  train.read("lr", c.train.lr);
  train.read("decay", c.train.decay);
  train.read_count("decay_every", c.train.decay_every);
  train.read_count("batch", c.train.batch_size);
  train.read_count("epochs", c.train.epochs);
  train.read("seed", c.train.seed);
  train.read_count("folds", c.train.folds);
  train.read_count("hpg_top", c.hpg_top);

  section("out").read_path("dir", c.out);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return c;
}

void save_run_config(const RunConfig& c, const fs::path& path) {
  std::string s = "[data]\n";
  if (!c.manifest.empty()) s += fmt::format("manifest = {}\n", fs::absolute(c.manifest).string());
  if (!c.synth.empty()) s += fmt::format("synth = {}\n", fs::absolute(c.synth).string());
  const auto& m = c.model;
  s += "\n[model]\n";
  if (c.d_in) s += fmt::format("d_in = {}\n", *c.d_in);
  s += fmt::format("d = {}\n", m.d);
  if (c.genes) s += fmt::format("genes = {}\n", *c.genes);
  s += fmt::format("heads = {}\nneighbor_blocks = {}\nglobal_blocks = {}\nfusion_blocks = {}\n", m.heads,
                   m.neighbor_blocks, m.global_blocks, m.fusion_blocks);
  if (c.neighbor_tokens) s += fmt::format("neighbor_tokens = {}\n", *c.neighbor_tokens);
  s += fmt::format("ff_mult = {}\ndropout = {}\nfusion = {}\nglobal_positional = {}\n", m.ff_mult, m.dropout,
                   m.fusion == FusionMode::mean ? "mean" : "concat_linear", m.global_positional);
  const auto& t = c.train;
  s += fmt::format(
      "\n[loss]\ntau = {}\ntau_ig = {}\nlambda = {}\nk = {}\ntarget_mode = {}\ninstance_mode = {}\ncadence = {}\n"
      "kmeans_max_iter = {}\n",
      t.temps.tau, t.temps.tau_ig, t.temps.lambda, t.k, to_string(t.target_mode), to_string(t.instance_mode),
      to_string(t.cadence), t.kmeans_max_iter);
  s += fmt::format(
      "\n[train]\nlr = {}\ndecay = {}\ndecay_every = {}\nbatch = {}\nepochs = {}\nseed = {}\nfolds = {}\nhpg_top = {}\n",
      t.lr, t.decay, t.decay_every, t.batch_size, t.epochs, t.seed, t.folds, c.hpg_top);
  s += fmt::format("\n[out]\ndir = {}\n", fs::absolute(c.out).string());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot write '{}'", path.string()));
  f << s;
  if (!f) throw IoError(fmt::format("short write to '{}'", path.string()));
}

}  // namespace gdml::cli
