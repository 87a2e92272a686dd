#include "gdml/grouping.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gdml/error.hpp"
#include "gdml/kernels.hpp"
#include "gdml/ops.hpp"
#include "gdml/rng.hpp"

namespace gdml {

const char* to_string(Modality m) noexcept { return m == Modality::image ? "image" : "gene"; }

namespace {

std::string head_prefix(Modality m) { return std::string("group.") + to_string(m); }

Tensor normalized_rows(const Tensor& x) {
  Tensor out = x;
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double n = std::sqrt(k.dot(r.data(), r.data(), r.size()));
    if (n == 0.0) throw NumericError(fmt::format("kmeans: row {} has zero norm and cannot be unit-normalised", i));
    for (double& v : r) v /= n;
  }
  return out;
}

std::size_t nearest(const Tensor& points, std::size_t i, const Tensor& centroids, double* dist) {
  const auto& k = kernels::active();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = k.sq_dist(points.row(i).data(), centroids.row(c).data(), points.cols());
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

Clustering lloyd(const Tensor& x, const KMeansOptions& opt, std::uint64_t seed) {
  const std::size_t n = x.rows(), d = x.cols(), k = opt.k;
  const auto& kern = kernels::active();
  Clustering out;
  out.centroids = Tensor(Shape{k, d});
  const auto init = kmeans_plus_plus(x, k, seed);
  for (std::size_t c = 0; c < k; ++c) {
    const auto src = x.row(init[c]);
    std::copy(src.begin(), src.end(), out.centroids.row(c).begin());
  }
  out.assignments.assign(n, 0);
  std::vector<double> dist(n);

  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      out.assignments[i] = nearest(x, i, out.centroids, &dist[i]);
      ++counts[out.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[out.assignments[i]] > 1 && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      if (far == n) break;
      --counts[out.assignments[far]];
      out.assignments[far] = c;
      counts[c] = 1;
      dist[far] = 0.0;
      const auto src = x.row(far);
      std::copy(src.begin(), src.end(), out.centroids.row(c).begin());
    }

    Tensor next(Shape{k, d});
    for (std::size_t i = 0; i < n; ++i) kern.axpy(1.0, x.row(i).data(), next.row(out.assignments[i]).data(), d);
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      auto r = next.row(c);
      if (counts[c] == 0) {
        const auto prev = out.centroids.row(c);
        std::copy(prev.begin(), prev.end(), r.begin());
        continue;
      }
      for (double& v : r) v /= static_cast<double>(counts[c]);
      shift = std::max(shift, std::sqrt(kern.sq_dist(r.data(), out.centroids.row(c).data(), d)));
    }
    out.centroids = std::move(next);
    out.iterations = it + 1;
    out.inertia_trace.push_back(inertia(x, out.centroids, out.assignments));
    if (shift < opt.tol) break;
  }

  // Final assignment against the final centroids keeps every point at its nearest centre.
  for (std::size_t i = 0; i < n; ++i) out.assignments[i] = nearest(x, i, out.centroids, nullptr);
  out.inertia = inertia(x, out.centroids, out.assignments);
  out.inertia_trace.push_back(out.inertia);
  return out;
}

}  // namespace

void add_grouping_params(ParamStore& store, std::size_t d) {
  for (Modality m : {Modality::image, Modality::gene}) {
    Tensor w(Shape{d, d});
    for (std::size_t i = 0; i < d; ++i) w(i, i) = 1.0;
    store.add(head_prefix(m) + ".w", std::move(w));
    store.add(head_prefix(m) + ".b", Tensor(Shape{d}));
  }
}

Var group_project(const BoundParams& params, Var e_ins, Modality modality) {
  const std::string p = head_prefix(modality);
  return add_row(matmul(e_ins, params[p + ".w"]), params[p + ".b"]);
}

std::vector<std::size_t> kmeans_plus_plus(const Tensor& points, std::size_t k, std::uint64_t seed) {
  const std::size_t n = points.rows();
  const auto& kern = kernels::active();
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(n, false);
  chosen.push_back(static_cast<std::size_t>(rng.below(n)));
  taken[chosen.back()] = true;
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < k) {
    const auto last = points.row(chosen.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], kern.sq_dist(points.row(i).data(), last.data(), points.cols()));
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > r) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!taken[i]) pick = i;
    }
    chosen.push_back(pick);
    taken[pick] = true;
  }
  return chosen;
}

Clustering kmeans(const Tensor& points, const KMeansOptions& options) {
  if (points.rank() != 2) throw ShapeError(fmt::format("kmeans: expected N x d points, got {}", shape_str(points.shape)));
  if (options.k == 0) throw ContractError("kmeans: k must be positive");
  if (options.k > points.rows()) {
    throw ContractError(fmt::format("kmeans: k = {} exceeds the {} available points", options.k, points.rows()));
  }
  if (!points.all_finite()) throw ContractError("kmeans: non-finite input");
  const Tensor x = options.normalize ? normalized_rows(points) : points;

  Rng seeds(options.seed);
  Clustering best;
  for (std::size_t run = 0; run < std::max<std::size_t>(1, options.n_init); ++run) {
    const std::uint64_t s = run == 0 ? options.seed : seeds.next_u64();
    Clustering c = lloyd(x, options, s);
    if (run == 0 || c.inertia < best.inertia) best = std::move(c);
  }
  return best;
}

std::vector<std::size_t> assign_cross(const Tensor& e_ins, const Tensor& centroids) {
  if (e_ins.cols() != centroids.cols()) {
    throw ShapeError(fmt::format("assign_cross: embedding width {} vs centroid width {}", e_ins.cols(), centroids.cols()));
  }
  const auto& kern = kernels::active();
  std::vector<std::size_t> out(e_ins.rows(), 0);
  for (std::size_t i = 0; i < e_ins.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centroids.rows(); ++j) {
      const double s = kern.dot(e_ins.row(i).data(), centroids.row(j).data(), e_ins.cols());
      if (s > best) {
        best = s;
        out[i] = j;
      }
    }
  }
  return out;
}

double inertia(const Tensor& points, const Tensor& centroids, const std::vector<std::size_t>& assignments) {
  const auto& kern = kernels::active();
  double s = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    s += kern.sq_dist(points.row(i).data(), centroids.row(assignments[i]).data(), points.cols());
  }
  return s;
}

}  // namespace gdml
