// Command-line front end: trace generation, replays and the experiments.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "flstore/config.hpp"
#include "flstore/experiments.hpp"

using namespace flstore;

namespace {

struct Common {
  std::string config;
  std::optional<std::string> policy;
  std::optional<std::uint32_t> replicas;
  std::optional<double> capacity_gib;
  std::optional<std::uint32_t> rounds;
  std::optional<std::uint32_t> clients;
  std::optional<std::uint32_t> per_round;
  std::optional<double> model_mb;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallel;
  std::optional<std::string> out;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file");
    app->add_option("--policy", policy, "p1..p4, static:<p>, auto, random, lru, lfu, fifo");
    app->add_option("--replicas", replicas, "secondary copies per primary (k)");
    app->add_option("--capacity-gib", capacity_gib, "memory per function instance");
    app->add_option("--rounds", rounds, "training rounds");
    app->add_option("--clients", clients, "client pool size");
    app->add_option("--per-round", per_round, "clients selected per round");
    app->add_option("--model-mb", model_mb, "model update size in MiB");
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--parallel", parallel, "max requests in flight (0 = unbounded)");
    app->add_option("--out", out, "output path or stem");
  }

  Config build() const {
    Config cfg = config.empty() ? Config{} : load_config(config);
    if (policy) cfg.policy = *policy;
    if (replicas) cfg.replicas = *replicas;
    if (capacity_gib) {
      cfg.capacity_gib = *capacity_gib;
      cfg.effective_capacity_gib = std::min(cfg.effective_capacity_gib, cfg.capacity_gib);
    }
    if (rounds) cfg.job.rounds = *rounds;
    if (clients) cfg.job.pool_size = *clients;
    if (per_round) cfg.job.per_round = *per_round;
    if (model_mb) cfg.job.model_size_bytes = static_cast<std::uint64_t>(*model_mb * static_cast<double>(kMiB));
    if (seed) cfg.job.seed = *seed;
    if (parallel) cfg.parallel = *parallel;
    if (out) cfg.out = *out;
    cfg.validate();
    return cfg;
  }
};

void print_summary(const RunReport& r) {
  const auto lat = r.latency();
  std::printf("policy=%s requests=%zu failed=%zu hits=%llu misses=%llu hit_rate=%.4f\n", r.policy.c_str(),
              r.rows.size(), r.failed, static_cast<unsigned long long>(r.hits.hits),
              static_cast<unsigned long long>(r.hits.misses), r.hits.hit_rate());
  std::printf("latency_s mean=%.4f p50=%.4f p99=%.4f  cost_total=%.6e  footprint_bytes=%llu functions=%llu\n",
              lat.mean, lat.p50, lat.p99, r.cost().total, static_cast<unsigned long long>(r.footprint_bytes),
              static_cast<unsigned long long>(r.functions));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FLStore: serverless cache for federated learning metadata"};
  app.require_subcommand(1);

  Common gen_c, run_c, t3_c, cmp_c, flt_c, scale_c, cfg_c;

  auto* gen = app.add_subcommand("gen", "write a synthetic trace as JSON lines");
  gen_c.attach(gen);
  std::string gen_workload = "MaliciousFilter";
  bool gen_mixed = false;
  std::optional<std::size_t> fault_functions;
  std::string faults_out;
  gen->add_option("--workload", gen_workload, "workload; its class decides the request pattern");
  gen->add_flag("--mixed", gen_mixed, "one request of every workload per round");
  gen->add_option("--fault-functions", fault_functions, "also draw a fault schedule over this many instances");
  gen->add_option("--faults-out", faults_out, "fault schedule path");

  auto* run = app.add_subcommand("run", "replay a trace and write <out>.csv / <out>.json");
  run_c.attach(run);
  std::string trace_path, faults_path;
  run->add_option("--trace", trace_path, "trace file")->required();
  run->add_option("--faults", faults_path, "fault schedule file");

  auto* t3 = app.add_subcommand("table3", "hit counts of the tailored policies against LRU, LFU and FIFO");
  t3_c.attach(t3);
  std::uint32_t p3_rounds = 64;
  t3->add_option("--p3-rounds", p3_rounds, "rounds of the P3 trace");

  auto* cmp = app.add_subcommand("compare", "per-workload latency and cost against the aggregator baselines");
  cmp_c.attach(cmp);
  std::string cmp_trace;
  cmp->add_option("--trace", cmp_trace, "trace file (default: mixed workload trace)");

  auto* flt = app.add_subcommand("faults", "P2 replay with injected instance failures");
  flt_c.attach(flt);

  auto* scale = app.add_subcommand("scale", "p50 latency as concurrent requests grow");
  scale_c.attach(scale);
  std::size_t instances = 5;
  std::vector<std::size_t> levels = {1, 2, 3, 4, 5, 8, 9, 10};
  scale->add_option("--instances", instances, "functions holding the data");
  scale->add_option("--levels", levels, "concurrency levels");

  auto* show = app.add_subcommand("config", "print the effective configuration");
  cfg_c.attach(show);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      Config cfg = gen_c.build();
      Trace trace;
      if (gen_mixed) {
        trace = gen_mixed_trace(cfg.job);
      } else {
        const Workload w = parse_workload(gen_workload);
        trace = gen_trace(cfg.job, w, classify_workload(w));
      }
      const std::string path = gen_c.out.value_or("trace.jsonl");
      write_file(path, trace_to_jsonl(trace));
      std::printf("wrote %zu events to %s\n", trace.size(), path.c_str());
      if (fault_functions) {
        const double horizon = trace.empty() ? 0.0 : trace.back().t;
        auto faults = gen_fault_schedule(*fault_functions, horizon, cfg.zipf_s, cfg.job.seed, cfg.fault_rate_per_hour);
        const std::string fpath = faults_out.empty() ? path + ".faults" : faults_out;
        write_file(fpath, faults_to_jsonl(faults));
        std::printf("wrote %zu faults to %s\n", faults.events.size(), fpath.c_str());
      }
    } else if (*run) {
      Config cfg = run_c.build();
      const Trace trace = trace_from_jsonl(read_file(trace_path));
      std::optional<FaultSchedule> faults;
      if (!faults_path.empty()) faults = faults_from_jsonl(read_file(faults_path));
      Harness h(cfg, cfg.store_root, mean_ingest_bytes(trace));
      RunReport report = h.run(trace, faults ? &*faults : nullptr);
      emit_report(report, cfg.out);
      print_summary(report);
    } else if (*t3) {
      Table3Options opt;
      opt.base = t3_c.build();
      if (t3_c.rounds) opt.p2_rounds = opt.p4_rounds = *t3_c.rounds;
      opt.p3_rounds = p3_rounds;
      opt.workdir = std::filesystem::path(opt.base.store_root) / "table3";
      std::fputs(format_table3(table3(opt)).c_str(), stdout);
    } else if (*cmp) {
      Config cfg = cmp_c.build();
      if (!cmp_c.rounds) cfg.job.rounds = 50;
      const Trace trace = cmp_trace.empty() ? gen_mixed_trace(cfg.job) : trace_from_jsonl(read_file(cmp_trace));
      auto result = compare(cfg, trace, std::filesystem::path(cfg.store_root) / "compare");
      write_file(cfg.out + ".compare.csv", compare_csv(result));
      emit_report(result.flstore, cfg.out);
      std::fputs(format_compare(result).c_str(), stdout);
    } else if (*flt) {
      FaultExperimentOptions opt;
      opt.base = flt_c.build();
      if (flt_c.rounds) opt.rounds = *flt_c.rounds;
      if (flt_c.replicas) opt.replicas = *flt_c.replicas;
      if (flt_c.seed) opt.fault_seed = *flt_c.seed;
      opt.workdir = std::filesystem::path(opt.base.store_root) / "faults";
      std::fputs(format_faults(fault_experiment(opt)).c_str(), stdout);
    } else if (*scale) {
      ScalabilityOptions opt;
      opt.base = scale_c.build();
      opt.instances = instances;
      opt.workdir = std::filesystem::path(opt.base.store_root) / "scale";
      std::printf("%-10s %10s %10s\n", "concurrent", "p50_s", "p99_s");
      for (const auto& p : scalability(opt, levels)) std::printf("%-10zu %10.4f %10.4f\n", p.concurrent, p.p50, p.p99);
    } else if (*show) {
      std::fputs(config_to_text(cfg_c.build()).c_str(), stdout);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
