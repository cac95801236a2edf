#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "flstore/cache_engine.hpp"
#include "flstore/kernels.hpp"
#include "flstore/metrics.hpp"

namespace flstore {

struct TrackerOptions {
  double reroute_timeout_s = 2.0;
  // Gap between consecutive dispatches of one batch.
  double dispatch_s = 0.002;
  double cold_start_s = 0.0;
  std::uint32_t metadata_window = 10;
  CostParams cost;
  ComputeTable compute = ComputeTable::defaults();
};

struct TrackerEntry {
  std::string request_id;
  std::vector<FunctionId> routed_to;
  bool status = false;
  double issued_at = 0.0;
  std::uint32_t attempts = 0;
};

struct RequestOutcome {
  std::string request_id;
  Workload workload = Workload::Inference;
  bool hit = false;
  LatencyBreakdown latency;
  double cost = 0.0;
  kernels::KernelOutput output;
  std::vector<FunctionId> routed_to;
  std::uint32_t timeouts = 0;
  // Bytes pulled from the persistent store on the request path.
  std::uint64_t fetched_bytes = 0;
  std::size_t store_reads = 0;
  // The kernel's whole input, as a separated-plane baseline would move it.
  std::uint64_t input_bytes = 0;
  std::size_t input_blobs = 0;
};

class RequestTracker {
 public:
  explicit RequestTracker(CacheEngine& engine, TrackerOptions options = {});

  // Serves one request at simulated time `now`; `slot` is its position within
  // a batch issued at the same instant. A request id that was already served
  // returns the recorded outcome without running again.
  RequestOutcome submit(const NonTrainingRequest& req, double now = 0.0, std::size_t slot = 0);
  TrackerEntry poll(const std::string& request_id) const;
  std::optional<RequestOutcome> result(const std::string& request_id) const;
  // Gives up on the instance the request was last routed to: the engine fails
  // it over and the next attempt goes to a replica. Returns the seconds spent
  // waiting.
  double reroute_on_timeout(const std::string& request_id, double now);
  std::vector<FunctionId> replicate(const CacheKey& key, std::uint32_t k, double now = 0.0);
  // Records a finished result; false when one was already delivered.
  bool deliver(RequestOutcome outcome);

  // Requests waiting to be served, visible to the cache engine at ingest.
  void enqueue(const NonTrainingRequest& req);
  std::vector<NonTrainingRequest> pending() const;
  void dequeue(const std::string& request_id);

  std::size_t memory_overhead() const;
  std::size_t size() const;
  const TrackerOptions& options() const noexcept { return options_; }

 private:
  struct Placement {
    std::vector<std::pair<FunctionId, std::vector<CacheKey>>> by_instance;
    std::vector<CacheKey> cold;
  };

  Placement locate(const std::vector<CacheKey>& keys) const;
  TrackerEntry& entry_locked(const std::string& request_id);

  CacheEngine& engine_;
  TrackerOptions options_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, TrackerEntry> entries_;
  std::unordered_map<std::string, RequestOutcome> results_;
  std::deque<NonTrainingRequest> pending_;
};

}  // namespace flstore
