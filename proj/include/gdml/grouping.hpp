#pragma once

#include <cstdint>
#include <vector>

#include "gdml/params.hpp"
#include "gdml/tape.hpp"
#include "gdml/tensor.hpp"

namespace gdml {

enum class Modality { image, gene };
const char* to_string(Modality m) noexcept;

// Registers the d -> d grouping heads ("group.image.*", "group.gene.*"),
// initialised to the identity map.
void add_grouping_params(ParamStore& store, std::size_t d);

// E_clu = FC(E_ins) with the modality's head.
Var group_project(const BoundParams& params, Var e_ins, Modality modality);

struct KMeansOptions {
  std::size_t k = 25;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double tol = 1e-6;
  // Unit-normalise rows before clustering; off gives plain Euclidean k-means.
  bool normalize = true;
  // Independent k-means++ restarts; the lowest final inertia wins (ties: first).
  std::size_t n_init = 1;
};

struct Clustering {
  Tensor centroids;                      // k x d, means of (normalised) members
  std::vector<std::size_t> assignments;  // nearest centroid per row, ties to lowest index
  double inertia = 0.0;                  // sum of squared distances to assigned centroids
  std::vector<double> inertia_trace;     // after every Lloyd iteration, then the final value
  std::size_t iterations = 0;
};

// k-means++ seeding then Lloyd iterations until the largest centroid shift
// drops below tol or max_iter is reached. Empty clusters are reseeded with
// the point farthest from its centroid. Deterministic in (points, options).
Clustering kmeans(const Tensor& points, const KMeansOptions& options);

// Indices of the k-means++ initial centres.
std::vector<std::size_t> kmeans_plus_plus(const Tensor& points, std::size_t k, std::uint64_t seed);

// argmax_j <e_i, c_j>, ties to the lowest index.
std::vector<std::size_t> assign_cross(const Tensor& e_ins, const Tensor& centroids);

double inertia(const Tensor& points, const Tensor& centroids, const std::vector<std::size_t>& assignments);

// Both modalities' clusterings plus the cross-modal assignments.
struct GroupState {
  Tensor image_centroids;  // C^I
  Tensor gene_centroids;   // C^G
  std::vector<std::size_t> image_to_gene;  // image instance -> nearest gene centroid
  std::vector<std::size_t> gene_to_image;  // gene instance -> nearest image centroid
  double image_inertia = 0.0;
  double gene_inertia = 0.0;
};

}  // namespace gdml
