#include "flstore/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "flstore/policy.hpp"

namespace flstore::kernels {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::InvalidArgument, "vector lengths differ");
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double unit_uniform(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

double standard_normal(std::uint64_t& state) {
  // Box-Muller; u1 is shifted away from zero.
  const double u1 = unit_uniform(state) + 0x1.0p-54;
  const double u2 = unit_uniform(state);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

const BlobRecord* find_blob(std::span<const BlobRecord* const> blobs, const CacheKey& key) {
  for (const BlobRecord* b : blobs)
    if (b->key == key) return b;
  return nullptr;
}

double param_or(const NonTrainingRequest& req, const std::string& name, double fallback) {
  auto it = req.params.find(name);
  return it == req.params.end() ? fallback : it->second;
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b);
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) throw Error(Errc::ZeroVector, "cosine similarity of a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::vector<double> fedavg(std::span<const WeightedUpdate> updates) {
  if (updates.empty()) throw Error(Errc::InvalidArgument, "fedavg needs at least one update");
  const std::size_t dim = updates.front().weights.size();
  std::vector<double> sum(dim, 0.0);
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.weights.size() != dim) throw Error(Errc::InvalidArgument, "vector lengths differ");
    if (!(u.weight > 0.0)) throw Error(Errc::InvalidArgument, "fedavg weights must be positive");
    for (std::size_t i = 0; i < dim; ++i) sum[i] += u.weight * u.weights[i];
    total += u.weight;
  }
  for (double& v : sum) v /= total;
  return sum;
}

std::set<ClientId> malicious_filter(std::span<const ClientUpdate> updates, double tau) {
  std::set<ClientId> flagged;
  const std::size_t n = updates.size();
  if (n < 3) return flagged;
  const std::size_t dim = updates.front().weights.size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& u : updates) {
    require_same_length(u.weights, updates.front().weights);
    for (std::size_t i = 0; i < dim; ++i) mean[i] += u.weights[i];
  }
  for (double& v : mean) v /= static_cast<double>(n);

  std::vector<double> dist(n);
  for (std::size_t j = 0; j < n; ++j) dist[j] = std::sqrt(squared_distance(updates[j].weights, mean));
  const double mu = std::accumulate(dist.begin(), dist.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double d : dist) var += (d - mu) * (d - mu);
  const double sd = std::sqrt(var / static_cast<double>(n));
  const double threshold = mu + tau * sd;
  for (std::size_t j = 0; j < n; ++j)
    if (dist[j] > threshold) flagged.insert(updates[j].client);
  return flagged;
}

KMeansResult kmeans_cluster(std::span<const std::span<const double>> points, std::size_t k,
                            std::size_t max_iter, std::uint64_t seed) {
  const std::size_t n = points.size();
  if (n == 0 || k == 0 || k > n)
    throw Error(Errc::InvalidArgument, "kmeans needs 1 <= k <= number of points");
  for (const auto& p : points) require_same_length(p, points.front());

  KMeansResult result;
  std::vector<std::size_t> centre_idx{static_cast<std::size_t>(seed % n)};
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (centre_idx.size() < k) {
    const auto& last = points[centre_idx.back()];
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      nearest[j] = std::min(nearest[j], squared_distance(points[j], last));
      if (nearest[j] > best_d) {
        best_d = nearest[j];
        best = j;
      }
    }
    centre_idx.push_back(best);
  }
  for (std::size_t c : centre_idx) result.centroids.emplace_back(points[c].begin(), points[c].end());

  // Reassignment prefers the current cluster on ties so the objective can
  // only go down.
  auto assign = [&](std::vector<std::size_t>& a, bool has_current) {
    double objective = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t best = has_current ? a[j] : 0;
      double best_d = squared_distance(points[j], result.centroids[best]);
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points[j], result.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      a[j] = best;
      objective += best_d;
    }
    return objective;
  };

  result.assignments.assign(n, 0);
  result.objective.push_back(assign(result.assignments, false));
  const std::size_t dim = points.front().size();
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t j = 0; j < n; ++j) {
      auto& s = sums[result.assignments[j]];
      for (std::size_t i = 0; i < dim; ++i) s[i] += points[j][i];
      ++counts[result.assignments[j]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centre
      for (std::size_t i = 0; i < dim; ++i)
        result.centroids[c][i] = sums[c][i] / static_cast<double>(counts[c]);
    }
    const auto previous = result.assignments;
    result.objective.push_back(assign(result.assignments, true));
    if (result.assignments == previous) break;
  }
  return result;
}

double contribution_score(std::span<const double> update, std::span<const double> aggregate) {
  require_same_length(update, aggregate);
  if (dot(update, update) == 0.0 || dot(aggregate, aggregate) == 0.0) return 0.0;
  return cosine_similarity(update, aggregate);
}

std::vector<ClientId> schedule_topk(std::span<const MetadataRecord> metadata,
                                    const std::string& score_key, std::size_t k) {
  std::vector<std::pair<double, const ClientId*>> scored;
  scored.reserve(metadata.size());
  for (const auto& m : metadata) {
    auto it = m.perf.find(score_key);
    if (it == m.perf.end())
      throw Error(Errc::InvalidArgument, "metadata for " + m.client.str() + " lacks " + score_key);
    scored.emplace_back(it->second, &m.client);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  });
  std::vector<ClientId> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(*scored[i].second);
  return out;
}

std::size_t debug_diff(std::span<const double> current, std::span<const double> previous,
                       double eps) {
  require_same_length(current, previous);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < current.size(); ++i)
    if (std::abs(current[i] - previous[i]) > eps) ++changed;
  return changed;
}

double eval_stub(std::span<const double> update, std::uint64_t probe_seed) {
  constexpr int kProbes = 16;
  const double norm = std::sqrt(dot(update, update));
  if (norm == 0.0) return 0.5;
  std::uint64_t state = probe_seed;
  double score = 0.0;
  std::vector<double> probe(update.size());
  for (int p = 0; p < kProbes; ++p) {
    for (double& v : probe) v = 2.0 * unit_uniform(state) - 1.0;
    const double z = dot(update, probe) / norm;
    score += 1.0 / (1.0 + std::exp(-z));
  }
  return score / kProbes;
}

std::map<ClientId, double> incentive_tally(std::span<const MetadataRecord> metadata) {
  std::map<ClientId, double> tally;
  for (const auto& m : metadata) {
    auto it = m.perf.find("contribution");
    tally[m.client] += it == m.perf.end() ? 0.0 : it->second;
  }
  return tally;
}

std::vector<double> synthetic_weights(std::uint64_t seed, const CacheKey& key, std::size_t dim) {
  std::uint64_t round_state = seed ^ (0x5851f42d4c957f2dull * (key.round.value() + 1));
  std::uint64_t client_state =
      fnv1a(key.client.str(), seed) ^ (0x2545f4914f6cdd1dull * (key.round.value() + 1)) ^
      static_cast<std::uint64_t>(key.kind);
  std::vector<double> w(dim);
  for (double& v : w) v = standard_normal(round_state) + 0.1 * standard_normal(client_state);
  return w;
}

KernelOutput run_workload(const NonTrainingRequest& req, std::span<const BlobRecord* const> blobs) {
  if (blobs.empty()) throw Error(Errc::InvalidArgument, "workload has no input data");
  KernelOutput out;
  const auto target_keys = target_key(req);
  const BlobRecord* target = target_keys ? find_blob(blobs, *target_keys) : nullptr;

  std::vector<std::span<const double>> vectors;
  std::vector<ClientUpdate> updates;
  std::vector<MetadataRecord> metas;
  for (const BlobRecord* b : blobs) {
    metas.push_back(b->meta);
    if (b->key.kind == BlobKind::Metadata) continue;
    vectors.emplace_back(b->weights);
    updates.push_back({b->key.client, b->weights});
  }
  auto need_target = [&]() -> const BlobRecord& {
    if (!target) throw Error(Errc::InvalidArgument, "request target is not in the execution set");
    return *target;
  };
  auto uniform_mean = [&] {
    std::vector<WeightedUpdate> wu;
    for (auto v : vectors) wu.push_back({v, 1.0});
    return fedavg(wu);
  };

  switch (req.workload) {
    case Workload::Inference:
    case Workload::Eval: {
      const auto& t = target ? *target : *blobs.front();
      out.scalars["accuracy"] =
          eval_stub(t.weights, static_cast<std::uint64_t>(param_or(req, "probe_seed", 7)));
      break;
    }
    case Workload::MaliciousFilter: {
      auto flagged = malicious_filter(updates, param_or(req, "tau", 2.5));
      out.scalars["flagged"] = static_cast<double>(flagged.size());
      if (req.scope_client) out.scalars["target_flagged"] = flagged.count(*req.scope_client) ? 1.0 : 0.0;
      out.flagged = std::move(flagged);
      break;
    }
    case Workload::Contribution: {
      out.scalars["contribution"] = contribution_score(need_target().weights, uniform_mean());
      break;
    }
    case Workload::CosineSimilarity: {
      out.scalars["similarity"] = cosine_similarity(need_target().weights, uniform_mean());
      break;
    }
    case Workload::Clustering:
    case Workload::Personalization:
    case Workload::SchedulingClustered: {
      const auto k = std::min<std::size_t>(
          static_cast<std::size_t>(std::max(1.0, param_or(req, "k", 2))), vectors.size());
      auto km = kmeans_cluster(vectors, k, 50, static_cast<std::uint64_t>(param_or(req, "seed", 0)));
      out.scalars["objective"] = km.objective.back();
      out.vector = std::vector<double>(km.assignments.begin(), km.assignments.end());
      for (std::size_t j = 0; j < updates.size(); ++j) {
        if (target && updates[j].client == target->key.client) {
          out.scalars["cluster"] = static_cast<double>(km.assignments[j]);
          if (req.workload == Workload::Personalization) out.vector = km.centroids[km.assignments[j]];
        }
      }
      break;
    }
    case Workload::SchedulingPerf: {
      const auto k = static_cast<std::size_t>(param_or(req, "k", 5));
      const auto selected = schedule_topk(metas, "availability", k);
      out.scalars["selected"] = static_cast<double>(selected.size());
      for (std::size_t i = 0; i < selected.size(); ++i)
        out.scalars["rank:" + selected[i].str()] = static_cast<double>(i);
      break;
    }
    case Workload::Debugging:
    case Workload::Provenance: {
      const auto& t = need_target();
      const BlobRecord* prev = nullptr;
      if (auto pr = t.key.round.prev()) prev = find_blob(blobs, CacheKey{t.key.client, *pr, t.key.kind});
      out.scalars["has_previous"] = prev ? 1.0 : 0.0;
      if (req.workload == Workload::Debugging) {
        out.scalars["changed"] =
            prev ? static_cast<double>(debug_diff(t.weights, prev->weights, param_or(req, "eps", 1e-3)))
                 : 0.0;
      } else {
        out.scalars["norm"] = std::sqrt(dot(t.weights, t.weights));
        out.scalars["delta_norm"] = prev ? std::sqrt(squared_distance(t.weights, prev->weights)) : 0.0;
      }
      break;
    }
    case Workload::IncentiveTracking: {
      for (const auto& [client, payout] : incentive_tally(metas)) out.scalars["payout:" + client.str()] = payout;
      break;
    }
    case Workload::HyperparamTuning: {
      const MetadataRecord* best = nullptr;
      double best_acc = -std::numeric_limits<double>::infinity();
      for (const auto& m : metas) {
        auto it = m.perf.find("accuracy");
        if (it != m.perf.end() && it->second > best_acc) {
          best_acc = it->second;
          best = &m;
        }
      }
      if (best) {
        out.scalars["best_accuracy"] = best_acc;
        for (const auto& [name, value] : best->hyperparameters) out.scalars["best_" + name] = value;
      }
      break;
    }
  }
  return out;
}

}  // namespace flstore::kernels
