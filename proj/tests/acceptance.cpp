// Runs the end-to-end checks and prints one PASS/FAIL line per criterion.
// Exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unistd.h>

#include "flstore/config.hpp"
#include "flstore/experiments.hpp"
#include "oracles.hpp"

using namespace flstore;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool ok = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + ("failed: " + what);
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void report(int n, const Verdict& v) {
  std::printf("%s criterion %d: %s\n", v.ok ? "PASS" : "FAIL", n, v.detail.c_str());
  std::fflush(stdout);
  failures += !v.ok;
}

Config default_config() {
  return load_config((fs::path(FLSTORE_SOURCE_DIR) / "configs" / "default.conf").string());
}

// Table 3: exact hit counts and the formatted fraction.
Verdict table3_check(const fs::path& work) {
  Verdict v;
  Table3Options opt;
  opt.base = default_config();
  opt.workdir = work / "table3";
  const auto t0 = Clock::now();
  auto rows = table3(opt);
  const double took = seconds_since(t0);
  const std::map<std::string, std::tuple<std::uint64_t, std::uint64_t, std::string>> want = {
      {"P2", {19999, 1, "0.99"}}, {"P3", {63, 1, "0.98"}}, {"P4", {20000, 0, "1"}}};
  v.check(rows.size() == 12, "12 rows");
  for (const auto& r : rows) {
    const auto& [hits, misses, frac] = want.at(r.application);
    const std::uint64_t total = hits + misses;
    if (r.policy.starts_with("FLStore")) {
      v.check(r.hits.hits == hits && r.hits.misses == misses && format_hit_fraction(r.hits) == frac,
              r.application + " " + r.policy + " " + std::to_string(r.hits.hits) + "/" +
                  std::to_string(r.hits.misses));
    } else {
      v.check(r.hits.hits == 0 && r.hits.total() == total, r.application + " " + r.policy + " hits " +
                                                               std::to_string(r.hits.hits));
    }
  }
  v.check(took < 60.0, "runtime under 60 s");
  v.note("P2 19999/1 P3 63/1 P4 20000/0, baselines 0, " + fmt("%.1f s", took));
  return v;
}

// Untailored footprint of 1000 clients x 1000 rounds under the shipped config.
Verdict footprint_check() {
  Verdict v;
  Config cfg = default_config();
  JobSpec s = cfg.job;
  s.pool_size = 1000;
  s.per_round = 1000;
  s.rounds = 1000;
  auto f = footprint_untailored(s, cfg.effective_capacity_bytes());
  const double tib = static_cast<double>(f.bytes) / std::pow(1024.0, 4);
  const double dev = std::abs(static_cast<double>(f.functions) - 10098.0) / 10098.0;
  v.check(f.bytes == 1000ull * 1000ull * s.model_size_bytes, "bytes = clients x rounds x size");
  v.check(tib >= 75.0 && tib <= 83.0, "footprint in [75, 83] TiB");
  v.check(dev <= 0.05, "function count within 5% of 10098");
  v.note(fmt("%.2f TiB", tib) + ", " + std::to_string(f.functions) + " functions at " +
         fmt("%.2f GiB", cfg.effective_capacity_gib) + fmt(" (%.2f%% off)", 100 * dev));
  return v;
}

Verdict communication_check(const fs::path& work) {
  Verdict v;
  Config cfg = default_config();
  JobSpec spec = cfg.job;
  spec.rounds = 50;
  auto res = compare(cfg, gen_mixed_trace(spec), work / "compare");
  double worst_obj = 1.0, worst_hit = 0.0;
  std::size_t inference = 0, inference_hits = 0;
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const auto& row = res.rows[i];
    if (row.workload != Workload::Inference) continue;
    ++inference;
    const auto& o = row.latency[1];
    worst_obj = std::min(worst_obj, o.comm_s / o.total_s());
    if (res.flstore.rows[i].hit) {
      ++inference_hits;
      const auto& f = row.latency[0];
      worst_hit = std::max(worst_hit, f.comm_s / f.total_s());
    }
  }
  v.check(inference > 0 && inference_hits > 0, "inference requests served from the cache");
  v.check(worst_obj >= 0.90, "ObjStore-Agg inference comm share >= 0.90");
  v.check(worst_hit <= 0.10, "FLStore hit-path comm share <= 0.10");
  for (const auto& w : res.workloads)
    v.check(w.mean_latency[0] < w.mean_latency[1] && w.mean_latency[0] < w.mean_latency[2],
            std::string(to_string(w.workload)) + " faster on FLStore");
  v.check(res.median_latency_reduction[0] >= 0.5 && res.median_latency_reduction[1] >= 0.5,
          "median reduction >= 50%");
  v.note(fmt("ObjStore-Agg inference comm share min %.3f", worst_obj) + fmt(", FLStore hit share max %.3f", worst_hit) +
         ", faster on " + std::to_string(res.workloads.size()) + " workloads" +
         fmt(", median reduction %.1f%%", 100 * res.median_latency_reduction[0]) +
         fmt(" / %.1f%%", 100 * res.median_latency_reduction[1]));
  return v;
}

Verdict fault_check(const fs::path& work, bool& consistent) {
  Verdict v;
  FaultExperimentOptions opt;
  opt.base = default_config();
  opt.workdir = work / "faults";
  const auto t0 = Clock::now();
  auto runs = fault_experiment(opt);
  const double took = seconds_since(t0);
  const auto& [clean, k3, k0] = runs;
  v.check(k3.fault_events > 0 && k0.fault_events > 0, "faults injected");
  v.check(k3.completed == k3.requests && k3.requests == 20000, "k=3 completes 100%");
  v.check(std::abs(k3.p50 - clean.p50) <= 0.10 * clean.p50, "k=3 p50 within 10% of fault-free");
  v.check(k0.completed == k0.requests && k0.requests == 20000, "k=0 completes every request");
  v.check(k0.p50 > clean.p50, "k=0 p50 strictly higher");
  v.check(took < 120.0, "runtime under 2 min");
  consistent = clean.consistent && k3.consistent && k0.consistent;
  v.note(std::to_string(k3.fault_events) + " faults; p50 fault-free " + fmt("%.3f s", clean.p50) + ", k=3 " +
         fmt("%.3f s", k3.p50) + ", k=0 " + fmt("%.3f s", k0.p50) + "; completion " +
         std::to_string(k3.completed) + "/" + std::to_string(k3.requests) + " and " + std::to_string(k0.completed) +
         "/" + std::to_string(k0.requests) + fmt("; %.1f s", took));
  return v;
}

Verdict scalability_check(const fs::path& work) {
  Verdict v;
  ScalabilityOptions opt;
  opt.base = default_config();
  opt.workdir = work / "scale";
  auto pts = scalability(opt, {1, 2, 3, 4, 5, 8, 9, 10});
  double lo = 1e300, hi = 0;
  std::string line;
  for (const auto& p : pts) {
    if (p.concurrent <= 5) {
      lo = std::min(lo, p.p50);
      hi = std::max(hi, p.p50);
    }
    line += " " + std::to_string(p.concurrent) + ":" + fmt("%.3f", p.p50);
  }
  v.check((hi - lo) / lo < 0.15, "p50 for 1-5 concurrent varies < 15%");
  v.check(pts[5].p50 < pts[6].p50 && pts[6].p50 < pts[7].p50, "p50 strictly increasing over 8-10");
  v.note(fmt("spread 1-5 %.2f%%", 100 * (hi - lo) / lo) + "; p50 s by concurrency" + line);
  return v;
}

template <class F>
double max_op_ms(std::size_t n, F op) {
  double worst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto t0 = Clock::now();
    op(i);
    worst = std::max(worst, seconds_since(t0) * 1e3);
  }
  return worst;
}

template <class F>
double mean_op_ms(std::size_t n, F op) {
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < n; ++i) op(i);
  return seconds_since(t0) * 1e3 / static_cast<double>(n);
}

NonTrainingRequest meta_request(std::size_t i) {
  NonTrainingRequest r;
  char id[32];
  std::snprintf(id, sizeof id, "q%07zu", i);
  r.request_id = id;
  r.workload = Workload::SchedulingPerf;
  r.cls = classify_workload(r.workload);
  r.scope_client = ClientId("c" + std::to_string(i));
  r.scope_round = RoundId(static_cast<std::uint32_t>(i));
  return r;
}

BlobRecord meta_blob(std::size_t i) {
  BlobRecord b{CacheKey::metadata(ClientId("c" + std::to_string(i)), RoundId(static_cast<std::uint32_t>(i))), {}, 256,
               {}};
  b.meta.client = b.key.client;
  b.meta.round = b.key.round;
  b.meta.perf["availability"] = 0.5;
  return b;
}

// Bookkeeping cost of the engine and tracker. Entries are placed by an LRU
// policy as requests arrive, one per request; each entry has a round of its
// own so that a request reads a single blob.
Verdict overhead_check(const fs::path& work) {
  Verdict v;
  constexpr std::size_t kLarge = 100000, kSmall = 1000;

  // Memory at 1000 served requests.
  double engine_mb = 0, tracker_mb = 0;
  {
    PersistentStore store(work / "overhead-small");
    FunctionPool pool;
    CacheEngine engine(store, pool, make_policy("lru", {10, 2 * kLarge, 0}));
    RequestTracker tracker(engine);
    for (std::size_t i = 0; i < kSmall; ++i) engine.ingest(meta_blob(i));
    for (std::size_t i = 0; i < kSmall; ++i) tracker.submit(meta_request(i), static_cast<double>(i));
    engine_mb = static_cast<double>(engine.memory_overhead()) / 1e6;
    tracker_mb = static_cast<double>(tracker.memory_overhead()) / 1e6;
  }
  v.check(engine_mb >= 0.6 / 5 && engine_mb <= 0.6 * 5, "engine memory within 5x of 0.6 MB");
  v.check(tracker_mb >= 0.19 / 5 && tracker_mb <= 0.19 * 5, "tracker memory within 5x of 0.19 MB");

  // Timing at 100000 entries.
  PersistentStore store(work / "overhead-large");
  FunctionPool pool;
  CacheEngine engine(store, pool, make_policy("lru", {10, kLarge, 0}));
  RequestTracker tracker(engine);
  for (std::size_t i = 0; i < kLarge + 2000; ++i) engine.ingest(meta_blob(i));
  for (std::size_t i = 0; i < kLarge; ++i) tracker.submit(meta_request(i), static_cast<double>(i));
  v.check(engine.placement_size() == kLarge, "100000 placements");
  v.check(tracker.size() >= kLarge, "100000 tracked requests");

  std::mt19937_64 rng(1);
  auto key = [&](std::size_t) {
    const auto i = static_cast<std::uint32_t>(rng() % kLarge);
    return CacheKey::metadata(ClientId("c" + std::to_string(i)), RoundId(i));
  };
  const double lookup_ms = mean_op_ms(10000, [&](std::size_t i) { (void)engine.lookup(key(i)); });
  // Each new key is inserted and the least recent one removed.
  const double insert_remove_ms = mean_op_ms(1000, [&](std::size_t i) {
    auto req = meta_request(kLarge + i);
    const std::vector<CacheKey> acc = {CacheKey::metadata(*req.scope_client, req.scope_round)};
    engine.on_request(req, engine.record_access(acc));
  });
  v.check(engine.placement_size() == kLarge, "evictions keep 100000 placements");

  PlacementMap map;
  map.reserve(kLarge);
  for (std::size_t i = 0; i < kLarge; ++i)
    map.insert(CacheKey::metadata(ClientId("m" + std::to_string(i)), RoundId(0)), FunctionId("fn-00001"));
  const double map_ms = mean_op_ms(10000, [&](std::size_t i) {
    const auto k = CacheKey::metadata(ClientId("m" + std::to_string(i)), RoundId(0));
    (void)map.lookup(k);
    map.remove(k);
    map.insert(k, FunctionId("fn-00002"));
  });

  const double poll_ms = mean_op_ms(10000, [&](std::size_t i) { (void)tracker.poll(meta_request(i * 7).request_id); });
  const double queue_ms = mean_op_ms(10000, [&](std::size_t i) {
    auto r = meta_request(i);
    tracker.enqueue(r);
    tracker.dequeue(r.request_id);
  });
  // A resubmitted id is answered from the tracker's records.
  const double resubmit_ms = mean_op_ms(10000, [&](std::size_t i) { tracker.submit(meta_request(i * 3), 1e9); });
  const double worst_submit_ms = max_op_ms(1000, [&](std::size_t i) { tracker.submit(meta_request(i), 1e9); });

  const double engine_worst = std::max({lookup_ms, insert_remove_ms, map_ms});
  const double tracker_worst = std::max({poll_ms, queue_ms, resubmit_ms, worst_submit_ms});
  v.check(engine_worst < 1.0, "engine lookup/insert/remove < 1 ms");
  v.check(tracker_worst < 1.0, "tracker bookkeeping < 1 ms");
  v.note(fmt("memory at 1000: engine %.3f MB", engine_mb) + fmt(", tracker %.3f MB", tracker_mb) +
         fmt("; at 100000 entries: lookup %.4f ms", lookup_ms) + fmt(", insert+evict %.4f ms", insert_remove_ms) +
         fmt(", map lookup/remove/insert %.4f ms", map_ms) + fmt(", poll %.4f ms", poll_ms) +
         fmt(", enqueue+dequeue %.4f ms", queue_ms) + fmt(", resubmit %.4f ms", resubmit_ms) +
         fmt(" (slowest single resubmit %.4f ms)", worst_submit_ms));
  return v;
}

Verdict kernel_check() {
  Verdict v;
  std::size_t mismatches = 0, rises = 0, instances = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto in = oracle::make_instance(seed);
    const auto& x = in.vectors;
    ++instances;
    mismatches += !oracle::close(kernels::cosine_similarity(x[0], x[1]), oracle::cosine(x[0], x[1]));

    std::vector<kernels::WeightedUpdate> wu;
    for (std::size_t j = 0; j < x.size(); ++j) wu.push_back({x[j], in.weights[j]});
    auto got = kernels::fedavg(wu);
    auto want = oracle::weighted_mean(x, in.weights);
    for (std::size_t i = 0; i < got.size(); ++i) mismatches += !oracle::close(got[i], want[i]);

    std::vector<kernels::ClientUpdate> ups;
    for (std::size_t j = 0; j < x.size(); ++j) ups.push_back({ClientId(in.ids[j]), x[j]});
    std::set<std::string> flagged;
    for (const auto& c : kernels::malicious_filter(ups)) flagged.insert(c.str());
    mismatches += flagged != oracle::outliers(x, in.ids, 2.5);

    std::vector<MetadataRecord> meta;
    std::vector<std::pair<std::string, double>> scored;
    for (std::size_t j = 0; j < x.size(); ++j) {
      MetadataRecord m;
      m.client = ClientId(in.ids[j]);
      m.perf["availability"] = std::round(in.weights[j]);
      scored.push_back({in.ids[j], m.perf["availability"]});
      meta.push_back(m);
    }
    const std::size_t k = 1 + seed % x.size();
    std::vector<std::string> top;
    for (const auto& c : kernels::schedule_topk(meta, "availability", k)) top.push_back(c.str());
    mismatches += top != oracle::topk(scored, k);

    auto km_in = oracle::make_instance(seed + 1000);
    std::vector<std::span<const double>> pts(km_in.vectors.begin(), km_in.vectors.end());
    auto km = kernels::kmeans_cluster(pts, 1 + seed % std::min<std::size_t>(5, pts.size()), 50, seed);
    for (std::size_t i = 1; i < km.objective.size(); ++i)
      rises += km.objective[i] > km.objective[i - 1] * (1 + 1e-12) + 1e-12;
  }
  v.check(mismatches == 0, std::to_string(mismatches) + " oracle mismatches");
  v.check(rises == 0, std::to_string(rises) + " k-means objective increases");
  v.note(std::to_string(instances) + " seeded instances: cosine, fedavg, malicious filter, top-k within 1e-9 "
         "relative; k-means objective non-increasing");
  return v;
}

// A fuzzed mix of ingests and P2, P3 and P4 requests under the auto policy.
// After every event the resident sets must equal the windows each class
// keeps: P2 rounds {r, r+1, latest} for the last P2 round r; {r-1, r, r+1}
// for every client a P3 request named; metadata of the last R rounds.
Verdict window_check(const fs::path& work, bool faults_consistent) {
  Verdict v;
  Config cfg = default_config();
  cfg.replicas = 0;
  cfg.job.model_size_bytes = 64 * 1024;
  const std::uint32_t window = cfg.p4_window;

  std::mt19937_64 rng(2024);
  Trace trace;
  std::uint32_t latest = 0;
  const std::vector<Workload> p2 = {Workload::MaliciousFilter, Workload::Clustering, Workload::CosineSimilarity};
  const std::vector<Workload> p3 = {Workload::Debugging, Workload::Provenance};
  const std::vector<Workload> p4 = {Workload::SchedulingPerf, Workload::IncentiveTracking};
  // Clients with data per (round, kind), so most requests find something.
  std::map<std::pair<std::uint32_t, BlobKind>, std::vector<std::string>> have;
  for (int i = 0; i < 20000; ++i) {
    TraceEvent e;
    e.t = static_cast<double>(i);
    e.client = "c" + std::to_string(rng() % 12);
    if (rng() % 100 < 40) {
      if (rng() % 5 == 0) ++latest;
      e.ev = EventType::Ingest;
      e.round = latest;
      e.kind = rng() % 4 == 0 ? BlobKind::Metadata : BlobKind::ModelUpdate;
      e.size = e.kind == BlobKind::Metadata ? 512 : cfg.job.model_size_bytes;
      have[{e.round, e.kind}].push_back(e.client);
    } else {
      e.ev = EventType::Request;
      e.round = latest - std::min<std::uint32_t>(latest, rng() % 6);
      const auto c = rng() % 3;
      const auto& pool = c == 0 ? p2 : c == 1 ? p3 : p4;
      e.workload = pool[rng() % pool.size()];
      e.kind = c == 2 ? BlobKind::Metadata : BlobKind::ModelUpdate;
      const auto& known = have[{e.round, e.kind}];
      if (!known.empty() && rng() % 10 != 0) e.client = known[rng() % known.size()];
    }
    trace.push_back(e);
  }

  // Reference state, kept apart from the engine.
  std::map<std::uint32_t, std::set<CacheKey>> updates, metadata;
  std::optional<std::uint32_t> p2_round;
  std::map<std::string, std::uint32_t> p3_rounds;
  std::size_t checked = 0, bad = 0, served = 0;
  std::string first_bad;

  auto expected_updates = [&] {
    std::set<CacheKey> out;
    auto add_round = [&](std::uint32_t r) {
      if (auto it = updates.find(r); it != updates.end()) out.insert(it->second.begin(), it->second.end());
    };
    if (p2_round) {
      add_round(*p2_round);
      add_round(*p2_round + 1);
      if (!updates.empty()) add_round(updates.rbegin()->first);
    }
    for (const auto& [client, r] : p3_rounds)
      for (std::int64_t x = static_cast<std::int64_t>(r) - 1; x <= static_cast<std::int64_t>(r) + 1; ++x) {
        if (x < 0) continue;
        auto key = CacheKey::update(ClientId(client), RoundId(static_cast<std::uint32_t>(x)));
        if (auto it = updates.find(static_cast<std::uint32_t>(x)); it != updates.end() && it->second.count(key))
          out.insert(key);
      }
    return out;
  };
  auto expected_metadata = [&] {
    std::set<CacheKey> out;
    std::uint32_t n = 0;
    for (auto it = metadata.rbegin(); it != metadata.rend() && n < window; ++it, ++n)
      out.insert(it->second.begin(), it->second.end());
    return out;
  };

  Harness h(cfg, work / "windows", mean_ingest_bytes(trace));
  ReplayOptions opt;
  opt.on_outcome = [&](const NonTrainingRequest& req, const RequestOutcome&) {
    ++served;
    if (req.cls == WorkloadClass::P2_AllClientsPerRound) p2_round = req.scope_round.value();
    if (req.cls == WorkloadClass::P3_ClientAcrossRounds && req.scope_client)
      p3_rounds[req.scope_client->str()] = req.scope_round.value();
  };
  opt.after_event = [&](const CacheEngine& engine, const TraceEvent* ev) {
    if (!ev) return;
    if (ev->ev == EventType::Ingest) {
      auto key = ev->kind == BlobKind::Metadata ? CacheKey::metadata(ClientId(ev->client), RoundId(ev->round))
                                                : CacheKey::update(ClientId(ev->client), RoundId(ev->round));
      (ev->kind == BlobKind::Metadata ? metadata : updates)[ev->round].insert(key);
    }
    ++checked;
    auto ru = engine.resident_keys(BlobKind::ModelUpdate);
    auto rm = engine.resident_keys(BlobKind::Metadata);
    const bool ok = std::set<CacheKey>(ru.begin(), ru.end()) == expected_updates() &&
                    std::set<CacheKey>(rm.begin(), rm.end()) == expected_metadata() && engine.check_consistency();
    if (!ok && bad++ == 0) first_bad = "event " + std::to_string(checked - 1);
  };
  h.run(trace, nullptr, opt);
  v.check(checked == trace.size(), "checked after every event");
  v.check(bad == 0, "windows held (" + std::to_string(bad) + " bad, first at " + first_bad + ")");
  v.check(served > 5000, "enough requests served");

  // Placement map against instance contents while instances are reclaimed.
  Config fc = default_config();
  fc.job.rounds = 300;
  fc.job.model_size_bytes = 64 * 1024;
  auto ft = gen_trace(fc.job, Workload::MaliciousFilter, WorkloadClass::P2_AllClientsPerRound);
  auto sched = gen_fault_schedule(fc.replicas + 1, ft.back().t, fc.zipf_s, 11, 600.0);
  auto fr = run_with_faults(fc, ft, &sched, work / "fault-consistency");
  v.check(fr.consistent && faults_consistent, "placement map consistent under faults");
  v.check(fr.completed == fr.requests, "fuzzed fault run completes");

  v.note(std::to_string(trace.size()) + " events, " + std::to_string(served) + " requests served, windows held " +
         std::to_string(checked - bad) + "/" + std::to_string(checked) + "; consistency held through " +
         std::to_string(fr.fault_events) + " extra faults and the fault experiment");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  // Criterion numbers on the command line restrict the run to those.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto want = [&](int n) { return only.empty() || only.count(n); };

  const fs::path work = fs::temp_directory_path() / ("flstore-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);
  try {
    if (want(1)) report(1, table3_check(work));
    if (want(2)) report(2, footprint_check());
    if (want(3)) report(3, communication_check(work));
    bool consistent = true;
    if (want(4)) report(4, fault_check(work, consistent));
    if (want(5)) report(5, scalability_check(work));
    if (want(6)) report(6, overhead_check(work));
    if (want(7)) report(7, kernel_check());
    if (want(8)) report(8, window_check(work, consistent));
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    ++failures;
  }
  std::error_code ec;
  fs::remove_all(work, ec);
  return failures == 0 ? 0 : 1;
}
