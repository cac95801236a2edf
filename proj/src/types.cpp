#include "flstore/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "flstore/policy.hpp"

namespace flstore {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::MissingScopeClient: return "MissingScopeClient";
    case Errc::ClassMismatch: return "ClassMismatch";
    case Errc::IoError: return "IoError";
    case Errc::NotFound: return "NotFound";
    case Errc::CapacityExceeded: return "CapacityExceeded";
    case Errc::CapacityExhausted: return "CapacityExhausted";
    case Errc::DeadInstance: return "DeadInstance";
    case Errc::NotResident: return "NotResident";
    case Errc::MissingData: return "MissingData";
    case Errc::DataUnavailable: return "DataUnavailable";
    case Errc::UnknownFunction: return "UnknownFunction";
    case Errc::UnknownRequest: return "UnknownRequest";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::ConfigError: return "ConfigError";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

ClientId::ClientId(std::string id) : id_(std::move(id)) {
  if (id_.empty()) throw Error(Errc::InvalidArgument, "client id must be non-empty");
}

const ClientId& aggregate_client() {
  static const ClientId agg{"AGG"};
  return agg;
}

std::string_view to_string(BlobKind kind) noexcept {
  switch (kind) {
    case BlobKind::ModelUpdate: return "update";
    case BlobKind::AggregatedModel: return "aggregate";
    case BlobKind::Metadata: return "metadata";
  }
  return "update";
}

BlobKind parse_blob_kind(std::string_view text) {
  if (text == "update") return BlobKind::ModelUpdate;
  if (text == "aggregate") return BlobKind::AggregatedModel;
  if (text == "metadata") return BlobKind::Metadata;
  throw Error(Errc::ParseError, "unknown blob kind '" + std::string(text) + "'");
}

std::strong_ordering CacheKey::operator<=>(const CacheKey& other) const {
  if (auto c = round <=> other.round; c != 0) return c;
  if (auto c = kind <=> other.kind; c != 0) return c;
  return client <=> other.client;
}

std::string to_string(const CacheKey& key) {
  return "(" + key.client.str() + "," + std::to_string(key.round.value()) + "," +
         std::string(to_string(key.kind)) + ")";
}

std::size_t CacheKeyHash::operator()(const CacheKey& key) const noexcept {
  // boost::hash_combine style mixing
  std::size_t h = std::hash<std::string>{}(key.client.str());
  auto mix = [&h](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2); };
  mix(std::hash<std::uint32_t>{}(key.round.value()));
  mix(static_cast<std::size_t>(key.kind));
  return h;
}

void validate_blob(const BlobRecord& blob) {
  if (blob.size_bytes == 0) throw Error(Errc::InvalidArgument, "blob size_bytes must be > 0");
  auto finite = [](const auto& m) {
    return std::all_of(m.begin(), m.end(), [](const auto& kv) { return std::isfinite(kv.second); });
  };
  if (!finite(blob.meta.hyperparameters) || !finite(blob.meta.perf))
    throw Error(Errc::InvalidArgument, "metadata values must be finite");
}

std::string_view to_string(WorkloadClass cls) noexcept {
  switch (cls) {
    case WorkloadClass::P1_SingleOrAggregated: return "P1";
    case WorkloadClass::P2_AllClientsPerRound: return "P2";
    case WorkloadClass::P3_ClientAcrossRounds: return "P3";
    case WorkloadClass::P4_MetadataHyperparams: return "P4";
  }
  return "P1";
}

WorkloadClass parse_workload_class(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "p1" || lower == "p1_singleoraggregated") return WorkloadClass::P1_SingleOrAggregated;
  if (lower == "p2" || lower == "p2_allclientsperround") return WorkloadClass::P2_AllClientsPerRound;
  if (lower == "p3" || lower == "p3_clientacrossrounds") return WorkloadClass::P3_ClientAcrossRounds;
  if (lower == "p4" || lower == "p4_metadatahyperparams") return WorkloadClass::P4_MetadataHyperparams;
  throw Error(Errc::ParseError, "unknown workload class '" + std::string(text) + "'");
}

std::string_view to_string(Workload workload) noexcept {
  switch (workload) {
    case Workload::Inference: return "Inference";
    case Workload::Eval: return "Eval";
    case Workload::MaliciousFilter: return "MaliciousFilter";
    case Workload::Contribution: return "Contribution";
    case Workload::Clustering: return "Clustering";
    case Workload::CosineSimilarity: return "CosineSimilarity";
    case Workload::Personalization: return "Personalization";
    case Workload::SchedulingPerf: return "SchedulingPerf";
    case Workload::SchedulingClustered: return "SchedulingClustered";
    case Workload::Debugging: return "Debugging";
    case Workload::Provenance: return "Provenance";
    case Workload::IncentiveTracking: return "IncentiveTracking";
    case Workload::HyperparamTuning: return "HyperparamTuning";
  }
  return "Inference";
}

Workload parse_workload(std::string_view text) {
  for (Workload w : kAllWorkloads)
    if (to_string(w) == text) return w;
  throw Error(Errc::ParseError, "unknown workload '" + std::string(text) + "'");
}

const NonTrainingRequest& validate_request(const NonTrainingRequest& req) {
  if (classify_workload(req.workload) != req.cls)
    throw Error(Errc::ClassMismatch, std::string(to_string(req.workload)) + " does not belong to " +
                                         std::string(to_string(req.cls)));
  if (req.cls == WorkloadClass::P3_ClientAcrossRounds && !req.scope_client)
    throw Error(Errc::MissingScopeClient,
                "request " + req.request_id + " needs a scope client for P3 workloads");
  return req;
}

void CostParams::validate() const {
  const double values[] = {egress_per_gb,        fn_compute_per_gb_s, fn_memory_gb,
                           cache_instance_per_hr, agg_instance_per_hr, objstore_get_per_req,
                           objstore_put_per_req, bandwidth_gbps,      rtt_s,
                           cache_bandwidth_gbps, cache_rtt_s,         ping_cost_per_fn_month};
  for (double v : values)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw Error(Errc::ConfigError, "cost parameters must be finite and non-negative");
  if (bandwidth_gbps <= 0.0 || cache_bandwidth_gbps <= 0.0)
    throw Error(Errc::ConfigError, "bandwidth must be positive");
}

}  // namespace flstore
