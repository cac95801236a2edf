#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "flstore/job.hpp"
#include "flstore/policy.hpp"
#include "flstore/types.hpp"

namespace flstore {

// Queueing is kept apart from the other two so that a busy instance shows up
// as waiting rather than as slower compute.
struct LatencyBreakdown {
  double comm_s = 0.0;
  double compute_s = 0.0;
  double queue_s = 0.0;

  double total_s() const noexcept { return comm_s + compute_s + queue_s; }
  bool operator==(const LatencyBreakdown&) const = default;
};

// Per-workload compute seconds fed to the latency model.
struct ComputeTable {
  std::map<Workload, double> seconds;

  static ComputeTable defaults();
  double at(Workload w) const;
  double mean() const;
  void validate() const;
};

// Seconds to move `bytes` over a link of `gbps` Gbit/s.
double transfer_s(std::uint64_t bytes, double gbps);

// Hit: one control round trip. Miss: the round trip plus pulling
// `fetched_bytes` from the persistent store. `extra_s` covers time-outs and
// cold starts.
LatencyBreakdown latency_flstore(bool hit, std::uint64_t fetched_bytes, const CostParams& p, double compute_s,
                                 double extra_s = 0.0);
// Separated planes: the request reaches the aggregator (one round trip, as
// for a function invocation), which fetches the data and stores its result
// back; each leg moves `bytes` and costs a round trip to the data plane.
LatencyBreakdown latency_baseline_objstore(std::uint64_t bytes, const CostParams& p, double compute_s);
LatencyBreakdown latency_baseline_cache(std::uint64_t bytes, const CostParams& p, double compute_s);

enum class Deployment { FLStore, ObjStoreAgg, CacheAgg };
std::string_view to_string(Deployment d) noexcept;

// Modelled dollars for one request. `store_reads` counts objects fetched
// from the persistent store; `bytes` is the data moved.
double request_cost(Deployment d, const LatencyBreakdown& lat, std::uint64_t bytes, std::size_t store_reads,
                    const CostParams& p);
// Keep-alive pings for `instances` functions over `seconds`.
double keepalive_cost(std::size_t instances, double seconds, const CostParams& p);

struct Footprint {
  std::uint64_t bytes = 0;
  std::uint64_t functions = 0;
  bool operator==(const Footprint&) const = default;
};

// Every client update of every round held in memory. Blobs are never split,
// so each function takes floor(capacity / size) of them.
Footprint footprint_untailored(const JobSpec& spec, std::uint64_t effective_capacity_bytes);

struct RequestRow {
  std::string request_id;
  std::string workload;
  std::string policy;
  bool hit = false;
  double comm_s = 0.0;
  double compute_s = 0.0;
  double cost = 0.0;
  double queue_s = 0.0;

  double total_s() const noexcept { return comm_s + compute_s + queue_s; }
  bool operator==(const RequestRow&) const = default;
};

struct Aggregates {
  double mean = 0.0;
  double p50 = 0.0;
  double p99 = 0.0;
  double total = 0.0;
  bool operator==(const Aggregates&) const = default;
};

// Linear interpolation between closest ranks; q in [0, 1].
double percentile(std::vector<double> values, double q);
Aggregates aggregate(const std::vector<double>& values);

struct RunReport {
  std::string policy;
  std::vector<RequestRow> rows;
  HitStats hits;
  std::size_t failed = 0;
  std::uint64_t footprint_bytes = 0;
  std::uint64_t functions = 0;
  double keepalive_cost = 0.0;

  Aggregates latency() const;
  Aggregates comm() const;
  Aggregates compute() const;
  Aggregates queue() const;
  Aggregates cost() const;
};

std::string report_csv(const RunReport& report);
std::string report_json(const RunReport& report);
// Writes `<stem>.csv` and `<stem>.json`.
void emit_report(const RunReport& report, const std::filesystem::path& stem);
std::vector<RequestRow> parse_report_csv(std::string_view text);

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace flstore
