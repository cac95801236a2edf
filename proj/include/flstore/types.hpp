#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flstore/error.hpp"

namespace flstore {

inline constexpr std::uint64_t kMiB = 1ull << 20;
inline constexpr std::uint64_t kGiB = 1ull << 30;

class ClientId {
 public:
  explicit ClientId(std::string id);

  const std::string& str() const noexcept { return id_; }
  auto operator<=>(const ClientId&) const = default;

 private:
  std::string id_;
};

// Reserved client id under which aggregated models are stored.
const ClientId& aggregate_client();

class RoundId {
 public:
  constexpr RoundId() = default;
  constexpr explicit RoundId(std::uint32_t round) : round_(round) {}

  constexpr std::uint32_t value() const noexcept { return round_; }
  constexpr RoundId next() const noexcept { return RoundId(round_ + 1); }
  constexpr std::optional<RoundId> prev() const noexcept {
    if (round_ == 0) return std::nullopt;
    return RoundId(round_ - 1);
  }
  auto operator<=>(const RoundId&) const = default;

 private:
  std::uint32_t round_ = 0;
};

enum class BlobKind : std::uint8_t { ModelUpdate, AggregatedModel, Metadata };

std::string_view to_string(BlobKind kind) noexcept;
BlobKind parse_blob_kind(std::string_view text);

struct CacheKey {
  ClientId client;
  RoundId round;
  BlobKind kind = BlobKind::ModelUpdate;

  static CacheKey update(ClientId client, RoundId round) {
    return {std::move(client), round, BlobKind::ModelUpdate};
  }
  static CacheKey aggregate(RoundId round) {
    return {aggregate_client(), round, BlobKind::AggregatedModel};
  }
  static CacheKey metadata(ClientId client, RoundId round) {
    return {std::move(client), round, BlobKind::Metadata};
  }

  // Ordered by round first so that sorted key sets read chronologically.
  std::strong_ordering operator<=>(const CacheKey& other) const;
  bool operator==(const CacheKey&) const = default;
};

std::string to_string(const CacheKey& key);

struct CacheKeyHash {
  std::size_t operator()(const CacheKey& key) const noexcept;
};

struct MetadataRecord {
  std::map<std::string, double> hyperparameters;
  std::map<std::string, double> perf;
  RoundId round;
  ClientId client{aggregate_client()};

  bool operator==(const MetadataRecord&) const = default;
};

struct BlobRecord {
  CacheKey key;
  std::vector<double> weights;
  // Authoritative for capacity accounting and transfer cost. The weight
  // vector may be far shorter than size_bytes / 8.
  std::uint64_t size_bytes = 0;
  MetadataRecord meta;

  bool operator==(const BlobRecord&) const = default;
};

// Throws InvalidArgument when size_bytes is zero or a metadata value is not
// finite.
void validate_blob(const BlobRecord& blob);

enum class WorkloadClass : std::uint8_t {
  P1_SingleOrAggregated,
  P2_AllClientsPerRound,
  P3_ClientAcrossRounds,
  P4_MetadataHyperparams,
};

std::string_view to_string(WorkloadClass cls) noexcept;
// Accepts "p1".."p4" (any case) as well as the full enumerator names.
WorkloadClass parse_workload_class(std::string_view text);

enum class Workload : std::uint8_t {
  Inference,
  Eval,
  MaliciousFilter,
  Contribution,
  Clustering,
  CosineSimilarity,
  Personalization,
  SchedulingPerf,
  SchedulingClustered,
  Debugging,
  Provenance,
  IncentiveTracking,
  HyperparamTuning,
};

inline constexpr Workload kAllWorkloads[] = {
    Workload::Inference,         Workload::Eval,
    Workload::MaliciousFilter,   Workload::Contribution,
    Workload::Clustering,        Workload::CosineSimilarity,
    Workload::Personalization,   Workload::SchedulingPerf,
    Workload::SchedulingClustered, Workload::Debugging,
    Workload::Provenance,        Workload::IncentiveTracking,
    Workload::HyperparamTuning,
};

std::string_view to_string(Workload workload) noexcept;
Workload parse_workload(std::string_view text);

struct NonTrainingRequest {
  std::string request_id;
  Workload workload = Workload::Inference;
  WorkloadClass cls = WorkloadClass::P1_SingleOrAggregated;
  std::optional<ClientId> scope_client;
  RoundId scope_round;
  std::map<std::string, double> params;
};

// Returns the request unchanged when its class agrees with the workload
// taxonomy and P3 requests name a client.
const NonTrainingRequest& validate_request(const NonTrainingRequest& req);

class FunctionId {
 public:
  FunctionId() = default;
  explicit FunctionId(std::string id) : id_(std::move(id)) {}
  const std::string& str() const noexcept { return id_; }
  auto operator<=>(const FunctionId&) const = default;

 private:
  std::string id_;
};

struct FunctionIdHash {
  std::size_t operator()(const FunctionId& fn) const noexcept {
    return std::hash<std::string>{}(fn.str());
  }
};

// Price and network constants for the latency/cost model. Dollar figures are
// modelled, not quoted cloud bills.
struct CostParams {
  double egress_per_gb = 0.02;
  double fn_compute_per_gb_s = 0.0000166667;
  double fn_memory_gb = 4.0;
  double cache_instance_per_hr = 0.5;
  double agg_instance_per_hr = 0.922;
  double objstore_get_per_req = 0.0000004;
  double objstore_put_per_req = 0.000005;
  // Persistent/object store path.
  double bandwidth_gbps = 1.0;
  double rtt_s = 0.01;
  // Managed in-memory cache path used by the Cache-Agg baseline.
  double cache_bandwidth_gbps = 1.25;
  double cache_rtt_s = 0.002;
  double ping_cost_per_fn_month = 0.0087;

  void validate() const;
};

class MissingDataError : public Error {
 public:
  MissingDataError(std::vector<CacheKey> keys, const std::string& what)
      : Error(Errc::MissingData, what), keys_(std::move(keys)) {}
  const std::vector<CacheKey>& keys() const noexcept { return keys_; }

 private:
  std::vector<CacheKey> keys_;
};

}  // namespace flstore

template <>
struct std::hash<flstore::CacheKey> : flstore::CacheKeyHash {};
template <>
struct std::hash<flstore::FunctionId> : flstore::FunctionIdHash {};
