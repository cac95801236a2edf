#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "flstore/cache_engine.hpp"
#include "flstore/config.hpp"
#include "flstore/request_tracker.hpp"
#include "flstore/trace.hpp"

namespace flstore {

// Store, pool, engine and tracker wired together from a Config.
class Harness {
 public:
  // `mean_blob_bytes` sizes the reactive baselines when the config leaves
  // their capacity at 0.
  Harness(const Config& cfg, const std::filesystem::path& store_root, std::uint64_t mean_blob_bytes);
  ~Harness();

  Harness(const Harness&) = delete;
  Harness& operator=(const Harness&) = delete;

  RunReport run(const Trace& trace, const FaultSchedule* faults = nullptr, ReplayOptions options = {});

  PersistentStore& store() { return *store_; }
  FunctionPool& pool() { return *pool_; }
  CacheEngine& engine() { return *engine_; }
  RequestTracker& tracker() { return *tracker_; }
  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  std::unique_ptr<PersistentStore> store_;
  std::unique_ptr<FunctionPool> pool_;
  std::unique_ptr<CacheEngine> engine_;
  std::unique_ptr<RequestTracker> tracker_;
};

std::uint64_t mean_ingest_bytes(const Trace& trace);

// Hit counts of the tailored policy against the reactive baselines on the
// P2, P3 and P4 traces.
struct Table3Options {
  Config base;
  std::filesystem::path workdir = "table3-data";
  std::uint32_t p2_rounds = 2000;
  std::uint32_t p3_rounds = 64;
  std::uint32_t p4_rounds = 2000;
};

struct Table3Row {
  std::string application;  // "P2", "P3", "P4"
  std::string policy;       // "FLStore (P2)", "FIFO", ...
  HitStats hits;
};

std::vector<Table3Row> table3(const Table3Options& options);
// Hit % is shown truncated to two decimals.
std::string format_hit_fraction(const HitStats& h);
std::string format_table3(const std::vector<Table3Row>& rows);

// One request of every workload per round, each against the data its class
// reads.
Trace gen_mixed_trace(const JobSpec& spec);

inline constexpr std::array<Deployment, 3> kDeployments = {Deployment::FLStore, Deployment::ObjStoreAgg,
                                                           Deployment::CacheAgg};

struct CompareRow {
  std::string request_id;
  Workload workload = Workload::Inference;
  std::uint64_t input_bytes = 0;
  std::array<LatencyBreakdown, 3> latency;  // indexed like kDeployments
  std::array<double, 3> cost{};
};

struct WorkloadSummary {
  Workload workload = Workload::Inference;
  std::size_t requests = 0;
  std::array<double, 3> mean_latency{};
  std::array<double, 3> mean_cost{};
  // 1 - flstore / baseline, against ObjStore-Agg then Cache-Agg.
  std::array<double, 2> latency_reduction{};
  std::array<double, 2> cost_reduction{};
};

struct CompareResult {
  RunReport flstore;
  std::vector<CompareRow> rows;
  std::vector<WorkloadSummary> workloads;
  std::array<double, 2> median_latency_reduction{};
  std::array<double, 2> median_cost_reduction{};
};

CompareResult compare(const Config& cfg, const Trace& trace, const std::filesystem::path& store_root);
std::string compare_csv(const CompareResult& result);
std::string format_compare(const CompareResult& result);

struct FaultRun {
  std::uint32_t replicas = 0;
  bool faults = false;
  RunReport report;
  std::size_t requests = 0;
  std::size_t completed = 0;
  std::size_t fault_events = 0;
  std::size_t rerouted = 0;  // requests that hit at least one time-out
  bool consistent = true;
  double p50 = 0.0;
};

struct FaultExperimentOptions {
  Config base;
  std::filesystem::path workdir = "faults-data";
  std::uint32_t rounds = 2000;
  std::uint32_t replicas = 3;
  std::uint64_t fault_seed = 7;
};

// P2 trace replayed fault-free, then with faults at k replicas and at k = 0.
std::array<FaultRun, 3> fault_experiment(const FaultExperimentOptions& options);
FaultRun run_with_faults(const Config& cfg, const Trace& trace, const FaultSchedule* faults,
                         const std::filesystem::path& store_root);
std::string format_faults(const std::array<FaultRun, 3>& runs);

struct ScalabilityOptions {
  Config base;
  std::filesystem::path workdir = "scale-data";
  std::size_t instances = 5;
  Workload workload = Workload::Clustering;
  std::size_t batches = 20;
  double batch_interval_s = 7.0;
};

struct ScalabilityPoint {
  std::size_t concurrent = 0;
  double p50 = 0.0;
  double p99 = 0.0;
};

// Batches of `concurrent` identical-class requests against one warm replica
// group of `instances` functions.
ScalabilityPoint scalability_point(const ScalabilityOptions& options, std::size_t concurrent);
std::vector<ScalabilityPoint> scalability(const ScalabilityOptions& options, const std::vector<std::size_t>& levels);

}  // namespace flstore
