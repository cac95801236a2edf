#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flstore/job.hpp"
#include "flstore/metrics.hpp"
#include "flstore/request_tracker.hpp"

namespace flstore {

enum class EventType : std::uint8_t { Ingest, Request };

// One trace line. Requests leave `client` empty when they are not scoped to a
// client; ingest events leave `workload` unset.
struct TraceEvent {
  double t = 0.0;
  EventType ev = EventType::Ingest;
  std::string client;
  std::uint32_t round = 0;
  BlobKind kind = BlobKind::ModelUpdate;
  std::optional<Workload> workload;
  std::uint64_t size = 0;

  bool operator==(const TraceEvent&) const = default;
};

using Trace = std::vector<TraceEvent>;

struct IngestOptions {
  bool updates = true;
  bool metadata = false;
  bool aggregates = false;
  // Client that takes part in every round (the P3 subject).
  std::optional<std::string> always_selected;
};

std::string client_name(std::uint32_t index);
// Clients selected for one round: a seeded draw without replacement, sorted.
std::vector<std::string> selected_clients(const JobSpec& spec, std::uint32_t round,
                                          const std::optional<std::string>& always = std::nullopt);
// The client followed by generated P3 traces.
std::string tracked_client(const JobSpec& spec);

Trace gen_ingest_trace(const JobSpec& spec, const IngestOptions& options = {});
// P1: one aggregated-model request per round; P2: one request per selected
// client per round; P3: the tracked client once per round; P4: one metadata
// read per selected client per round.
Trace gen_request_trace(const JobSpec& spec, Workload workload, WorkloadClass cls);
// Ingest and requests for one class, merged in time order.
Trace gen_trace(const JobSpec& spec, Workload workload, WorkloadClass cls);
// Stable merge by time; at equal times ingest comes before requests.
Trace merge_traces(Trace a, const Trace& b);

// A fault hits either a literal instance id or "rank:N", the N-th live
// instance in id order at the moment the fault fires.
struct FaultEvent {
  double t = 0.0;
  std::string fn;
  bool operator==(const FaultEvent&) const = default;
};

struct FaultSchedule {
  std::vector<FaultEvent> events;
  double zipf_s = 1.0;
};

// Poisson arrivals at `rate_per_hour` over [0, horizon_s); each fault picks a
// rank from a Zipf(zipf_s) law over 1..n_functions.
FaultSchedule gen_fault_schedule(std::size_t n_functions, double horizon_s, double zipf_s, std::uint64_t seed,
                                 double rate_per_hour = 120.0);

std::string trace_to_jsonl(const Trace& trace);
Trace trace_from_jsonl(std::string_view text);
std::string faults_to_jsonl(const FaultSchedule& faults);
FaultSchedule faults_from_jsonl(std::string_view text);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

// Synthetic blob for an ingest event.
BlobRecord make_blob(const TraceEvent& ev, std::uint64_t seed, std::uint32_t dim);
NonTrainingRequest make_request(const TraceEvent& ev, std::size_t index);

struct ReplayOptions {
  std::string policy_label;
  double ping_interval_s = 60.0;
  // Upper bound on requests in flight; 0 means no bound.
  std::size_t parallel = 0;
  std::uint64_t seed = 0;
  std::uint32_t dim = 16;
  // Called after every trace event and every fault.
  std::function<void(const CacheEngine&, const TraceEvent*)> after_event;
  std::function<void(const NonTrainingRequest&, const RequestOutcome&)> on_outcome;
};

RunReport replay(const Trace& trace, const FaultSchedule* faults, CacheEngine& engine, RequestTracker& tracker,
                 const ReplayOptions& options);

}  // namespace flstore
