#include "flstore/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace flstore {

Harness::Harness(const Config& cfg, const std::filesystem::path& store_root, std::uint64_t mean_blob_bytes)
    : cfg_(cfg) {
  cfg_.validate();
  PolicyOptions po;
  po.p4_window = cfg_.p4_window;
  po.seed = cfg_.job.seed;
  po.baseline_capacity_entries = cfg_.baseline_capacity_entries != 0
                                     ? cfg_.baseline_capacity_entries
                                     : baseline_capacity_entries(cfg_.capacity_bytes(), std::max<std::uint64_t>(mean_blob_bytes, 1));
  EngineOptions eo;
  eo.replicas = cfg_.replicas;
  if (cfg_.max_primaries > 0) eo.max_primaries = cfg_.max_primaries;
  TrackerOptions to;
  to.reroute_timeout_s = cfg_.reroute_timeout_s;
  to.dispatch_s = cfg_.dispatch_s;
  to.cold_start_s = cfg_.cold_start_s;
  to.metadata_window = cfg_.p4_window;
  to.cost = cfg_.cost;
  to.compute = cfg_.compute;

  store_ = std::make_unique<PersistentStore>(store_root, cfg_.store_queue_depth);
  pool_ = std::make_unique<FunctionPool>(PoolOptions{cfg_.capacity_bytes(), cfg_.keepalive_s});
  engine_ = std::make_unique<CacheEngine>(*store_, *pool_, make_policy(cfg_.policy, po), eo);
  tracker_ = std::make_unique<RequestTracker>(*engine_, to);
}

Harness::~Harness() = default;

RunReport Harness::run(const Trace& trace, const FaultSchedule* faults, ReplayOptions options) {
  if (options.policy_label.empty()) options.policy_label = cfg_.policy;
  options.ping_interval_s = cfg_.ping_interval_s;
  options.parallel = cfg_.parallel;
  options.seed = cfg_.job.seed;
  options.dim = cfg_.job.dim;
  return replay(trace, faults, *engine_, *tracker_, options);
}

std::uint64_t mean_ingest_bytes(const Trace& trace) {
  std::uint64_t sum = 0, n = 0;
  for (const auto& ev : trace)
    if (ev.ev == EventType::Ingest) {
      sum += ev.size;
      ++n;
    }
  return n == 0 ? kDefaultModelBytes : sum / n;
}

namespace {

// Fresh directory under a parent we own.
std::filesystem::path scratch(const std::filesystem::path& parent, const std::string& name) {
  auto dir = parent / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) { return v.empty() ? 0.0 : percentile(std::move(v), 0.5); }

}  // namespace

std::vector<Table3Row> table3(const Table3Options& options) {
  struct TraceSpec {
    const char* label;
    Workload workload;
    WorkloadClass cls;
    std::uint32_t rounds;
  };
  const TraceSpec traces[] = {
      {"P2", Workload::MaliciousFilter, WorkloadClass::P2_AllClientsPerRound, options.p2_rounds},
      {"P3", Workload::Debugging, WorkloadClass::P3_ClientAcrossRounds, options.p3_rounds},
      {"P4", Workload::SchedulingPerf, WorkloadClass::P4_MetadataHyperparams, options.p4_rounds},
  };
  const std::pair<const char*, const char*> policies[] = {{"auto", nullptr}, {"fifo", "FIFO"}, {"lfu", "LFU"},
                                                         {"lru", "LRU"}};
  std::vector<Table3Row> rows;
  for (const auto& t : traces) {
    JobSpec spec = options.base.job;
    spec.rounds = t.rounds;
    const Trace trace = gen_trace(spec, t.workload, t.cls);
    for (const auto& [name, label] : policies) {
      Config cfg = options.base;
      cfg.job = spec;
      cfg.policy = name;
      const std::string row_label = label ? label : std::string("FLStore (") + t.label + ")";
      Harness h(cfg, scratch(options.workdir, std::string(t.label) + "-" + name), mean_ingest_bytes(trace));
      ReplayOptions ro;
      ro.policy_label = row_label;
      RunReport rep = h.run(trace, nullptr, ro);
      rows.push_back({t.label, row_label, rep.hits});
    }
  }
  return rows;
}

std::string format_hit_fraction(const HitStats& h) {
  if (h.total() == 0) return "0";
  // Integer truncation so 19999/20000 reads 0.99 rather than rounding up.
  const std::uint64_t hundredths = h.hits * 100 / h.total();
  if (hundredths == 100) return "1";
  if (hundredths == 0) return "0";
  char buf[16];
  std::snprintf(buf, sizeof buf, "0.%02llu", static_cast<unsigned long long>(hundredths));
  std::string s = buf;
  if (s.back() == '0') s.pop_back();
  return s;
}

std::string format_table3(const std::vector<Table3Row>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %-14s %8s %8s %8s %6s\n", "Application", "Cache Policy", "Hits", "Misses",
                "Total", "Hit %");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-12s %-14s %8llu %8llu %8llu %6s\n", r.application.c_str(), r.policy.c_str(),
                  static_cast<unsigned long long>(r.hits.hits), static_cast<unsigned long long>(r.hits.misses),
                  static_cast<unsigned long long>(r.hits.total()), format_hit_fraction(r.hits).c_str());
    out << line;
  }
  return out.str();
}

Trace gen_mixed_trace(const JobSpec& spec) {
  spec.validate();
  const std::string tracked = tracked_client(spec);
  IngestOptions io;
  io.updates = io.metadata = io.aggregates = true;
  io.always_selected = tracked;
  Trace requests;
  for (std::uint32_t i = 0; i < spec.rounds; ++i) {
    const std::uint32_t r = spec.round_origin + i;
    const auto clients = selected_clients(spec, r, tracked);
    std::size_t k = 0;
    for (const auto& [w, s] : ComputeTable::defaults().seconds) {
      (void)s;
      const double t = static_cast<double>(i) * spec.round_interval_s +
                       static_cast<double>(k + 1) * spec.request_spacing_s;
      std::string client;
      BlobKind kind = BlobKind::ModelUpdate;
      switch (classify_workload(w)) {
        case WorkloadClass::P1_SingleOrAggregated:
          kind = BlobKind::AggregatedModel;
          break;
        case WorkloadClass::P2_AllClientsPerRound:
          client = clients[k % clients.size()];
          break;
        case WorkloadClass::P3_ClientAcrossRounds:
          client = tracked;
          break;
        case WorkloadClass::P4_MetadataHyperparams:
          client = clients[k % clients.size()];
          kind = BlobKind::Metadata;
          break;
      }
      requests.push_back({t, EventType::Request, client, r, kind, w, 0});
      ++k;
    }
  }
  return merge_traces(gen_ingest_trace(spec, io), requests);
}

CompareResult compare(const Config& cfg, const Trace& trace, const std::filesystem::path& store_root) {
  CompareResult result;
  Harness h(cfg, store_root, mean_ingest_bytes(trace));
  const CostParams& p = cfg.cost;
  ReplayOptions ro;
  ro.on_outcome = [&](const NonTrainingRequest&, const RequestOutcome& out) {
    CompareRow row;
    row.request_id = out.request_id;
    row.workload = out.workload;
    row.input_bytes = out.input_bytes;
    const double compute = cfg.compute.at(out.workload);
    row.latency[0] = out.latency;
    row.cost[0] = out.cost;
    row.latency[1] = latency_baseline_objstore(out.input_bytes, p, compute);
    row.cost[1] = request_cost(Deployment::ObjStoreAgg, row.latency[1], out.input_bytes, out.input_blobs, p);
    row.latency[2] = latency_baseline_cache(out.input_bytes, p, compute);
    row.cost[2] = request_cost(Deployment::CacheAgg, row.latency[2], out.input_bytes, out.input_blobs, p);
    result.rows.push_back(row);
  };
  result.flstore = h.run(trace, nullptr, ro);

  std::map<Workload, WorkloadSummary> by;
  for (const auto& row : result.rows) {
    auto& s = by[row.workload];
    s.workload = row.workload;
    ++s.requests;
    for (std::size_t d = 0; d < 3; ++d) {
      s.mean_latency[d] += row.latency[d].total_s();
      s.mean_cost[d] += row.cost[d];
    }
  }
  std::array<std::vector<double>, 2> lat_red, cost_red;
  for (auto& [w, s] : by) {
    for (std::size_t d = 0; d < 3; ++d) {
      s.mean_latency[d] /= static_cast<double>(s.requests);
      s.mean_cost[d] /= static_cast<double>(s.requests);
    }
    for (std::size_t b = 0; b < 2; ++b) {
      s.latency_reduction[b] = 1.0 - s.mean_latency[0] / s.mean_latency[b + 1];
      s.cost_reduction[b] = s.mean_cost[b + 1] > 0.0 ? 1.0 - s.mean_cost[0] / s.mean_cost[b + 1] : 0.0;
      lat_red[b].push_back(s.latency_reduction[b]);
      cost_red[b].push_back(s.cost_reduction[b]);
    }
    result.workloads.push_back(s);
  }
  for (std::size_t b = 0; b < 2; ++b) {
    result.median_latency_reduction[b] = median(lat_red[b]);
    result.median_cost_reduction[b] = median(cost_red[b]);
  }
  return result;
}

std::string compare_csv(const CompareResult& result) {
  std::string out = "request_id,workload,input_bytes";
  for (auto d : kDeployments)
    for (const char* col : {"comm_s", "compute_s", "queue_s", "total_s", "cost"})
      out += "," + std::string(to_string(d)) + "_" + col;
  out += "\n";
  for (const auto& row : result.rows) {
    out += row.request_id + "," + std::string(to_string(row.workload)) + "," + std::to_string(row.input_bytes);
    for (std::size_t d = 0; d < 3; ++d) {
      const auto& l = row.latency[d];
      for (double v : {l.comm_s, l.compute_s, l.queue_s, l.total_s(), row.cost[d]}) out += "," + format_double(v);
    }
    out += "\n";
  }
  return out;
}

std::string format_compare(const CompareResult& result) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %10s %10s %10s %9s %9s %12s %12s %12s\n", "workload", "FLStore_s",
                "ObjStore_s", "Cache_s", "vs_obj", "vs_cache", "FLStore_$", "ObjStore_$", "Cache_$");
  out << line;
  for (const auto& s : result.workloads) {
    std::snprintf(line, sizeof line, "%-20s %10.3f %10.3f %10.3f %8.1f%% %8.1f%% %12.3e %12.3e %12.3e\n",
                  std::string(to_string(s.workload)).c_str(), s.mean_latency[0], s.mean_latency[1], s.mean_latency[2],
                  100 * s.latency_reduction[0], 100 * s.latency_reduction[1], s.mean_cost[0], s.mean_cost[1],
                  s.mean_cost[2]);
    out << line;
  }
  out << "median latency reduction: " << fmt("%.1f", 100 * result.median_latency_reduction[0])
      << "% vs ObjStore-Agg, " << fmt("%.1f", 100 * result.median_latency_reduction[1]) << "% vs Cache-Agg\n";
  out << "median cost reduction: " << fmt("%.1f", 100 * result.median_cost_reduction[0]) << "% vs ObjStore-Agg, "
      << fmt("%.1f", 100 * result.median_cost_reduction[1]) << "% vs Cache-Agg\n";
  return out.str();
}

FaultRun run_with_faults(const Config& cfg, const Trace& trace, const FaultSchedule* faults,
                         const std::filesystem::path& store_root) {
  FaultRun run;
  run.replicas = cfg.replicas;
  run.faults = faults != nullptr;
  run.fault_events = faults ? faults->events.size() : 0;
  for (const auto& ev : trace) run.requests += ev.ev == EventType::Request;
  Harness h(cfg, store_root, mean_ingest_bytes(trace));
  ReplayOptions ro;
  ro.after_event = [&](const CacheEngine& engine, const TraceEvent*) {
    if (run.consistent && !engine.check_consistency()) run.consistent = false;
  };
  ro.on_outcome = [&](const NonTrainingRequest&, const RequestOutcome& out) { run.rerouted += out.timeouts > 0; };
  run.report = h.run(trace, faults, ro);
  run.completed = run.report.rows.size();
  run.p50 = run.report.latency().p50;
  return run;
}

std::array<FaultRun, 3> fault_experiment(const FaultExperimentOptions& options) {
  JobSpec spec = options.base.job;
  spec.rounds = options.rounds;
  const Trace trace = gen_trace(spec, Workload::MaliciousFilter, WorkloadClass::P2_AllClientsPerRound);
  const double horizon = trace.empty() ? 0.0 : trace.back().t;
  Config cfg = options.base;
  cfg.job = spec;
  cfg.replicas = options.replicas;
  const FaultSchedule with_k = gen_fault_schedule(options.replicas + 1, horizon, cfg.zipf_s, options.fault_seed,
                                                  cfg.fault_rate_per_hour);
  const FaultSchedule without = gen_fault_schedule(1, horizon, cfg.zipf_s, options.fault_seed, cfg.fault_rate_per_hour);
  std::array<FaultRun, 3> runs;
  runs[0] = run_with_faults(cfg, trace, nullptr, scratch(options.workdir, "fault-free"));
  runs[1] = run_with_faults(cfg, trace, &with_k, scratch(options.workdir, "replicated"));
  cfg.replicas = 0;
  runs[2] = run_with_faults(cfg, trace, &without, scratch(options.workdir, "unreplicated"));
  return runs;
}

std::string format_faults(const std::array<FaultRun, 3>& runs) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-8s %-7s %8s %9s %11s %8s %10s %10s\n", "replicas", "faults", "events",
                "requests", "completed%", "rerouted", "p50_s", "consistent");
  out << line;
  for (const auto& r : runs) {
    const double pct = r.requests ? 100.0 * static_cast<double>(r.completed) / static_cast<double>(r.requests) : 0.0;
    std::snprintf(line, sizeof line, "%-8u %-7s %8zu %9zu %10.2f%% %8zu %10.4f %10s\n", r.replicas,
                  r.faults ? "yes" : "no", r.fault_events, r.requests, pct, r.rerouted, r.p50,
                  r.consistent ? "yes" : "no");
    out << line;
  }
  return out.str();
}

ScalabilityPoint scalability_point(const ScalabilityOptions& options, std::size_t concurrent) {
  if (options.instances == 0 || concurrent == 0)
    throw Error(Errc::InvalidArgument, "instances and concurrency must be >= 1");
  Config cfg = options.base;
  cfg.replicas = static_cast<std::uint32_t>(options.instances - 1);
  cfg.policy = "p2";
  cfg.parallel = 0;
  JobSpec spec = cfg.job;
  spec.rounds = 1;
  cfg.job = spec;
  const WorkloadClass cls = classify_workload(options.workload);
  const auto clients = selected_clients(spec, spec.round_origin);
  IngestOptions io;
  io.metadata = cls == WorkloadClass::P4_MetadataHyperparams;
  io.aggregates = cls == WorkloadClass::P1_SingleOrAggregated;
  const BlobKind kind = cls == WorkloadClass::P1_SingleOrAggregated ? BlobKind::AggregatedModel
                        : cls == WorkloadClass::P4_MetadataHyperparams ? BlobKind::Metadata
                                                                        : BlobKind::ModelUpdate;
  auto client_for = [&](std::size_t i) {
    return cls == WorkloadClass::P1_SingleOrAggregated ? std::string() : clients[i % clients.size()];
  };
  Trace requests;
  // One warm-up request brings the round into the replica group.
  requests.push_back({1.0, EventType::Request, client_for(0), spec.round_origin, kind, options.workload, 0});
  for (std::size_t b = 0; b < options.batches; ++b) {
    const double t = 10.0 + static_cast<double>(b) * options.batch_interval_s;
    for (std::size_t i = 0; i < concurrent; ++i)
      requests.push_back({t, EventType::Request, client_for(i), spec.round_origin, kind, options.workload, 0});
  }
  const Trace trace = merge_traces(gen_ingest_trace(spec, io), requests);
  Harness h(cfg, scratch(options.workdir, "c" + std::to_string(concurrent)), mean_ingest_bytes(trace));
  RunReport rep = h.run(trace);
  std::vector<double> totals;
  for (std::size_t i = 1; i < rep.rows.size(); ++i) totals.push_back(rep.rows[i].total_s());
  return {concurrent, percentile(totals, 0.5), percentile(totals, 0.99)};
}

std::vector<ScalabilityPoint> scalability(const ScalabilityOptions& options, const std::vector<std::size_t>& levels) {
  std::vector<ScalabilityPoint> out;
  for (auto c : levels) out.push_back(scalability_point(options, c));
  return out;
}

}  // namespace flstore
