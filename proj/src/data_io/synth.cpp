#include <cmath>
#include <fstream>
#include <set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "gdml/error.hpp"
#include "gdml/rng.hpp"
#include "gdml/study.hpp"

namespace gdml {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

void SynthSpec::validate() const {
  if (n_slides == 0 || n_spots == 0 || latent_dim == 0 || genes == 0 || feature_dim == 0) {
    throw ConfigError("synth: n_slides, n_spots, latent_dim, genes and feature_dim must be positive");
  }
  if (stencil == 0 || stencil % 2 == 0) throw ConfigError(fmt::format("synth.stencil = {} must be odd", stencil));
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError(fmt::format("synth.rho = {} outside [0, 1]", rho));
  if (!(sigma >= 0.0)) throw ConfigError(fmt::format("synth.sigma = {} must be >= 0", sigma));
  if (!(library_size > 0.0)) throw ConfigError("synth.library_size must be positive");
}

SynthSpec load_synth_spec(const fs::path& path) {
  if (!fs::exists(path)) throw IoError(fmt::format("synth spec '{}' does not exist", path.string()));
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.message()));
  }
  static const std::set<std::string> keys{"n_slides", "n_spots", "latent_dim", "genes", "feature_dim",
                                          "stencil",  "rho",     "sigma",      "library_size", "seed"};
  SynthSpec s;
  for (const auto& [name, sec] : tree) {
    if (name != "synth") throw ConfigError(fmt::format("{}: unknown section [{}]", path.string(), name));
    for (const auto& [key, _] : sec) {
      if (!keys.count(key)) throw ConfigError(fmt::format("{}: unknown key '{}' in [synth]", path.string(), key));
    }
    try {
      s.n_slides = sec.get("n_slides", s.n_slides);
      s.n_spots = sec.get("n_spots", s.n_spots);
      s.latent_dim = sec.get("latent_dim", s.latent_dim);
      s.genes = sec.get("genes", s.genes);
      s.feature_dim = sec.get("feature_dim", s.feature_dim);
      s.stencil = sec.get("stencil", s.stencil);
      s.rho = sec.get("rho", s.rho);
      s.sigma = sec.get("sigma", s.sigma);
      s.library_size = sec.get("library_size", s.library_size);
      s.seed = sec.get("seed", s.seed);
    } catch (const pt::ptree_bad_data& e) {
      throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
  }
  s.validate();
  return s;
}

void save_synth_spec(const SynthSpec& s, const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot write '{}'", path.string()));
  f << fmt::format(
      "[synth]\nn_slides = {}\nn_spots = {}\nlatent_dim = {}\ngenes = {}\nfeature_dim = {}\nstencil = {}\n"
      "rho = {}\nsigma = {}\nlibrary_size = {}\nseed = {}\n",
      s.n_slides, s.n_spots, s.latent_dim, s.genes, s.feature_dim, s.stencil, s.rho, s.sigma, s.library_size, s.seed);
}

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

Tensor gaussian(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Tensor t(Shape{rows, cols});
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

// y = W x for W rows x cols.
void apply(const Tensor& w, const double* x, double* y) {
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j) * x[j];
    y[i] = s;
  }
}

}  // namespace

SynthStudy synth_generate(const SynthSpec& spec) {
  spec.validate();
  Rng master(spec.seed);
  Rng weights = master.split();
  const std::size_t l = spec.latent_dim, f = spec.feature_dim, m = spec.genes;
  const double wscale = 1.0 / std::sqrt(static_cast<double>(l));
  const Tensor w_local = gaussian(weights, f, l, wscale);
  const Tensor w_neigh = gaussian(weights, f, l, wscale);
  const Tensor w_gene = gaussian(weights, m, l, 1.5 * wscale);
  const Tensor b_gene = gaussian(weights, m, 1, 0.5);

  SynthStudy out;
  for (std::size_t g = 0; g < m; ++g) out.study.genes.push_back(fmt::format("G{:03d}", g));
  const std::size_t width = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(spec.n_spots))));
  const std::size_t height = (spec.n_spots + width - 1) / width;
  const int half = static_cast<int>(spec.stencil / 2);
  const std::size_t tokens = spec.stencil * spec.stencil;

  for (std::size_t s = 0; s < spec.n_slides; ++s) {
    Rng rng = master.split();
    const std::size_t n = spec.n_spots;
    auto index_at = [&](int r, int c) -> std::ptrdiff_t {
      if (r < 0 || c < 0 || r >= static_cast<int>(height) || c >= static_cast<int>(width)) return -1;
      const std::size_t i = static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c);
      return i < n ? static_cast<std::ptrdiff_t>(i) : -1;
    };

    // Spatially smoothed latent field: own draw plus half of each 8-neighbour draw.
    const Tensor u = gaussian(rng, n, l, 1.0);
    Tensor z(Shape{n, l});
    for (std::size_t i = 0; i < n; ++i) {
      const int r = static_cast<int>(i / width), c = static_cast<int>(i % width);
      double weight2 = 1.0;
      for (std::size_t k = 0; k < l; ++k) z(i, k) = u(i, k);
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const auto j = index_at(r + dr, c + dc);
          if ((dr == 0 && dc == 0) || j < 0) continue;
          weight2 += 0.25;
          for (std::size_t k = 0; k < l; ++k) z(i, k) += 0.5 * u(static_cast<std::size_t>(j), k);
        }
      }
      for (std::size_t k = 0; k < l; ++k) z(i, k) /= std::sqrt(weight2);
    }

    SpotBatch b;
    b.local = Tensor(Shape{n, f});
    b.neighbor = Tensor(Shape{n, tokens, f});
    Tensor counts(Shape{n, m});
    std::vector<double> tmp(l), feat(f), eta(m), eta_free(m);
    const std::string sample = fmt::format("S{}", s);
    for (std::size_t i = 0; i < n; ++i) {
      const int r = static_cast<int>(i / width), c = static_cast<int>(i % width);
      apply(w_local, z.row(i).data(), feat.data());
      for (std::size_t k = 0; k < f; ++k) b.local(i, k) = feat[k] + spec.sigma * rng.normal();

      std::size_t t = 0;
      for (int dr = -half; dr <= half; ++dr) {
        for (int dc = -half; dc <= half; ++dc, ++t) {
          auto j = index_at(r + dr, c + dc);
          if (j < 0) j = static_cast<std::ptrdiff_t>(i);
          for (std::size_t k = 0; k < l; ++k) tmp[k] = z(i, k) + z(static_cast<std::size_t>(j), k);
          apply(w_neigh, tmp.data(), feat.data());
          double* dst = b.neighbor.data.data() + (i * tokens + t) * f;
          for (std::size_t k = 0; k < f; ++k) dst[k] = feat[k] + spec.sigma * rng.normal();
        }
      }

      for (std::size_t k = 0; k < l; ++k) tmp[k] = rng.normal();
      apply(w_gene, z.row(i).data(), eta.data());
      apply(w_gene, tmp.data(), eta_free.data());
      double total = 0.0;
      for (std::size_t g = 0; g < m; ++g) {
        const double rate = spec.rho * softplus(eta[g] + b_gene.data[g]) +
                            (1.0 - spec.rho) * softplus(eta_free[g] + b_gene.data[g]);
        counts(i, g) = rate;
        total += rate;
      }
      for (std::size_t g = 0; g < m; ++g) {
        const double mean = spec.library_size * counts(i, g) / total;
        counts(i, g) = spec.sigma > 0.0 ? static_cast<double>(rng.poisson(mean)) : mean;
      }

      b.coords.push_back({r, c});
      b.spot_ids.push_back(fmt::format("{}_{}x{}", sample, r, c));
      b.sample_ids.push_back(sample);
      b.patient_ids.push_back(fmt::format("P{}", s));
    }

    Preprocessed p = preprocess_expression(counts, out.study.genes, out.study.genes);
    b.expression = counts;
    out.study.dropped_spots += p.dropped;
    SpotBatch kept = b.subset(p.kept);
    kept.expression = std::move(p.values);
    kept.validate();
    out.study.samples.push_back(std::move(kept));
    out.counts.push_back(take_rows(counts, p.kept));
    out.latents.push_back(take_rows(z, p.kept));
  }
  return out;
}

}  // namespace gdml
