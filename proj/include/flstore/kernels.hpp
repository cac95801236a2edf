#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flstore/types.hpp"

namespace flstore::kernels {

struct KernelOutput {
  std::map<std::string, double> scalars;
  std::optional<std::vector<double>> vector;
  std::optional<std::set<ClientId>> flagged;

  bool operator==(const KernelOutput&) const = default;
};

struct ClientUpdate {
  ClientId client;
  std::span<const double> weights;
};

struct WeightedUpdate {
  std::span<const double> weights;
  double weight = 1.0;
};

/// Cosine of the angle between two equal-length vectors, clamped to [-1, 1].
/// Throws ZeroVector if either argument has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Componentwise weighted mean, sum(w_i * v_i) / sum(w_i). Weights must be
/// positive and all vectors the same length.
std::vector<double> fedavg(std::span<const WeightedUpdate> updates);

/// Distance-based outlier test: a client is flagged when the L2 distance of
/// its update from the coordinate-wise mean exceeds mean + tau * std of all
/// such distances (population std). Needs at least three updates; fewer
/// yields an empty set.
std::set<ClientId> malicious_filter(std::span<const ClientUpdate> updates, double tau = 2.5);

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;
  // Sum of squared distances after initialisation and after every Lloyd
  // iteration.
  std::vector<double> objective;
};

/// Lloyd's algorithm with farthest-point initialisation. The first centre is
/// picked by `seed`; ties go to the lowest index.
KMeansResult kmeans_cluster(std::span<const std::span<const double>> points, std::size_t k,
                            std::size_t max_iter = 50, std::uint64_t seed = 0);

double contribution_score(std::span<const double> update, std::span<const double> aggregate);

/// Top-k clients by perf[score_key], descending; equal scores resolved by
/// client id ascending.
std::vector<ClientId> schedule_topk(std::span<const MetadataRecord> metadata,
                                    const std::string& score_key, std::size_t k);

std::size_t debug_diff(std::span<const double> current, std::span<const double> previous,
                       double eps);

/// Stand-in for model evaluation: a deterministic score in [0, 1] derived from
/// dot products with seeded probe vectors.
double eval_stub(std::span<const double> update, std::uint64_t probe_seed);

/// Sum of perf["contribution"] per client over the supplied records.
std::map<ClientId, double> incentive_tally(std::span<const MetadataRecord> metadata);

// Runs the kernel that matches req.workload over the given blobs. Blobs are
// expected to be the request's execution set (see execution_keys()).
KernelOutput run_workload(const NonTrainingRequest& req, std::span<const BlobRecord* const> blobs);

// Deterministic synthetic parameters for a client update.
std::vector<double> synthetic_weights(std::uint64_t seed, const CacheKey& key, std::size_t dim);

}  // namespace flstore::kernels
