#include "flstore/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>

#include <json.hpp>

namespace flstore {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double unit(std::uint64_t& state) { return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53; }

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::string client_name(std::uint32_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "c%04u", index);
  return buf;
}

std::vector<std::string> selected_clients(const JobSpec& spec, std::uint32_t round,
                                          const std::optional<std::string>& always) {
  std::uint64_t state = spec.seed ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(round) + 1));
  std::vector<std::uint32_t> idx(spec.pool_size);
  std::iota(idx.begin(), idx.end(), 0u);
  const std::uint32_t n = std::min(spec.per_round, spec.pool_size);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::uint32_t>(splitmix64(state) % (spec.pool_size - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<std::string> out;
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(client_name(idx[i]));
  if (always && n > 0 && std::find(out.begin(), out.end(), *always) == out.end()) out.back() = *always;
  std::sort(out.begin(), out.end());
  return out;
}

std::string tracked_client(const JobSpec& spec) {
  auto first = selected_clients(spec, spec.round_origin);
  return first.empty() ? client_name(0) : first.front();
}

Trace gen_ingest_trace(const JobSpec& spec, const IngestOptions& options) {
  spec.validate();
  Trace trace;
  for (std::uint32_t i = 0; i < spec.rounds; ++i) {
    const std::uint32_t r = spec.round_origin + i;
    const double t = static_cast<double>(i) * spec.round_interval_s;
    const auto clients = selected_clients(spec, r, options.always_selected);
    if (options.updates)
      for (const auto& c : clients) trace.push_back({t, EventType::Ingest, c, r, BlobKind::ModelUpdate, {}, spec.model_size_bytes});
    if (options.metadata)
      for (const auto& c : clients) trace.push_back({t, EventType::Ingest, c, r, BlobKind::Metadata, {}, spec.metadata_size_bytes});
    if (options.aggregates)
      trace.push_back({t, EventType::Ingest, aggregate_client().str(), r, BlobKind::AggregatedModel, {}, spec.model_size_bytes});
  }
  return trace;
}

Trace gen_request_trace(const JobSpec& spec, Workload workload, WorkloadClass cls) {
  spec.validate();
  if (classify_workload(workload) != cls)
    throw Error(Errc::ClassMismatch, std::string(to_string(workload)) + " is not a " + std::string(to_string(cls)) + " workload");
  Trace trace;
  const std::optional<std::string> always =
      cls == WorkloadClass::P3_ClientAcrossRounds ? std::optional(tracked_client(spec)) : std::nullopt;
  for (std::uint32_t i = 0; i < spec.rounds; ++i) {
    const std::uint32_t r = spec.round_origin + i;
    const double base = static_cast<double>(i) * spec.round_interval_s;
    auto at = [&](std::size_t k) { return base + static_cast<double>(k + 1) * spec.request_spacing_s; };
    switch (cls) {
      case WorkloadClass::P1_SingleOrAggregated:
        trace.push_back({at(0), EventType::Request, "", r, BlobKind::AggregatedModel, workload, 0});
        break;
      case WorkloadClass::P2_AllClientsPerRound: {
        const auto clients = selected_clients(spec, r);
        for (std::size_t k = 0; k < clients.size(); ++k)
          trace.push_back({at(k), EventType::Request, clients[k], r, BlobKind::ModelUpdate, workload, 0});
        break;
      }
      case WorkloadClass::P3_ClientAcrossRounds:
        trace.push_back({at(0), EventType::Request, *always, r, BlobKind::ModelUpdate, workload, 0});
        break;
      case WorkloadClass::P4_MetadataHyperparams: {
        const auto clients = selected_clients(spec, r);
        for (std::size_t k = 0; k < clients.size(); ++k)
          trace.push_back({at(k), EventType::Request, clients[k], r, BlobKind::Metadata, workload, 0});
        break;
      }
    }
  }
  return trace;
}

Trace merge_traces(Trace a, const Trace& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::stable_sort(a.begin(), a.end(), [](const TraceEvent& x, const TraceEvent& y) {
    if (x.t != y.t) return x.t < y.t;
    return x.ev == EventType::Ingest && y.ev == EventType::Request;
  });
  return a;
}

Trace gen_trace(const JobSpec& spec, Workload workload, WorkloadClass cls) {
  IngestOptions opts;
  switch (cls) {
    case WorkloadClass::P1_SingleOrAggregated: opts.aggregates = true; break;
    case WorkloadClass::P2_AllClientsPerRound: break;
    case WorkloadClass::P3_ClientAcrossRounds: opts.always_selected = tracked_client(spec); break;
    case WorkloadClass::P4_MetadataHyperparams:
      opts.updates = false;
      opts.metadata = true;
      break;
  }
  return merge_traces(gen_ingest_trace(spec, opts), gen_request_trace(spec, workload, cls));
}

FaultSchedule gen_fault_schedule(std::size_t n_functions, double horizon_s, double zipf_s, std::uint64_t seed,
                                 double rate_per_hour) {
  if (!(zipf_s >= 0.0) || !(rate_per_hour >= 0.0) || !(horizon_s >= 0.0))
    throw Error(Errc::InvalidArgument, "fault schedule parameters must be >= 0");
  FaultSchedule out;
  out.zipf_s = zipf_s;
  if (n_functions == 0 || rate_per_hour == 0.0) return out;
  std::vector<double> cdf(n_functions);
  double acc = 0.0;
  for (std::size_t k = 0; k < n_functions; ++k) cdf[k] = acc += std::pow(static_cast<double>(k + 1), -zipf_s);
  const double rate_s = rate_per_hour / 3600.0;
  std::uint64_t state = seed ^ 0xfa017ull;
  for (double t = 0.0;;) {
    t += -std::log1p(-unit(state)) / rate_s;
    if (t >= horizon_s) break;
    const double u = unit(state) * acc;
    const auto rank = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    out.events.push_back({t, "rank:" + std::to_string(std::min(rank, n_functions - 1) + 1)});
  }
  return out;
}

std::string trace_to_jsonl(const Trace& trace) {
  std::string out;
  for (const auto& e : trace) {
    nlohmann::json j;
    j["t"] = e.t;
    j["ev"] = e.ev == EventType::Ingest ? "ingest" : "request";
    j["client"] = e.client;
    j["round"] = e.round;
    j["kind"] = std::string(to_string(e.kind));
    j["workload"] = e.workload ? std::string(to_string(*e.workload)) : std::string();
    j["size"] = e.size;
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

template <class F>
void for_each_line(std::string_view text, F f) {
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      f(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

Trace trace_from_jsonl(std::string_view text) {
  Trace trace;
  double last = -1.0;
  for_each_line(text, [&](const nlohmann::json& j) {
    TraceEvent e;
    e.t = j.at("t").get<double>();
    const auto ev = j.at("ev").get<std::string>();
    if (ev == "ingest")
      e.ev = EventType::Ingest;
    else if (ev == "request")
      e.ev = EventType::Request;
    else
      throw Error(Errc::ParseError, "unknown event type '" + ev + "'");
    e.client = j.value("client", std::string());
    e.round = j.at("round").get<std::uint32_t>();
    e.kind = parse_blob_kind(j.value("kind", std::string("update")));
    const auto w = j.value("workload", std::string());
    if (!w.empty()) e.workload = parse_workload(w);
    e.size = j.value("size", std::uint64_t{0});
    if (e.ev == EventType::Request && !e.workload) throw Error(Errc::ParseError, "request without workload");
    if (e.ev == EventType::Ingest && (e.size == 0 || e.client.empty()))
      throw Error(Errc::ParseError, "ingest needs a client and a positive size");
    if (e.t < last) throw Error(Errc::ParseError, "event times must be non-decreasing");
    last = e.t;
    trace.push_back(std::move(e));
  });
  return trace;
}

std::string faults_to_jsonl(const FaultSchedule& faults) {
  std::string out;
  for (const auto& f : faults.events) {
    nlohmann::json j;
    j["t"] = f.t;
    j["fn"] = f.fn;
    out += j.dump();
    out += '\n';
  }
  return out;
}

FaultSchedule faults_from_jsonl(std::string_view text) {
  FaultSchedule out;
  double last = -1.0;
  for_each_line(text, [&](const nlohmann::json& j) {
    FaultEvent f{j.at("t").get<double>(), j.at("fn").get<std::string>()};
    if (f.t < last) throw Error(Errc::ParseError, "fault times must be non-decreasing");
    last = f.t;
    out.events.push_back(std::move(f));
  });
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
}

BlobRecord make_blob(const TraceEvent& ev, std::uint64_t seed, std::uint32_t dim) {
  CacheKey key = ev.kind == BlobKind::AggregatedModel ? CacheKey::aggregate(RoundId(ev.round))
                                                      : CacheKey{ClientId(ev.client), RoundId(ev.round), ev.kind};
  BlobRecord blob{key, kernels::synthetic_weights(seed, key, dim), ev.size, {}};
  std::uint64_t state = fnv1a(to_string(key), seed);
  blob.meta.client = key.client;
  blob.meta.round = key.round;
  blob.meta.hyperparameters = {{"learning_rate", 0.01 * (1.0 + unit(state))},
                               {"batch_size", 32.0},
                               {"local_epochs", 1.0 + static_cast<double>(splitmix64(state) % 3)}};
  blob.meta.perf = {{"accuracy", 0.5 + 0.4 * unit(state)},
                    {"train_time_s", 30.0 + 60.0 * unit(state)},
                    {"availability", unit(state)},
                    {"contribution", unit(state)}};
  return blob;
}

NonTrainingRequest make_request(const TraceEvent& ev, std::size_t index) {
  if (!ev.workload) throw Error(Errc::InvalidArgument, "request event without workload");
  char id[32];
  std::snprintf(id, sizeof id, "req-%07zu", index);
  NonTrainingRequest req;
  req.request_id = id;
  req.workload = *ev.workload;
  req.cls = classify_workload(req.workload);
  if (!ev.client.empty() && ev.client != aggregate_client().str()) req.scope_client = ClientId(ev.client);
  req.scope_round = RoundId(ev.round);
  return req;
}

RunReport replay(const Trace& trace, const FaultSchedule* faults, CacheEngine& engine, RequestTracker& tracker,
                 const ReplayOptions& options) {
  if (!(options.ping_interval_s > 0.0)) throw Error(Errc::ConfigError, "ping interval must be > 0");
  RunReport report;
  report.policy = options.policy_label.empty() ? engine.policy_name() : options.policy_label;
  FunctionPool& pool = engine.pool();

  std::size_t next_fault = 0;
  double next_sweep = options.ping_interval_s;
  auto advance_to = [&](double t) {
    for (;;) {
      const bool fault_due = faults && next_fault < faults->events.size() && faults->events[next_fault].t <= t;
      const double fault_t = fault_due ? faults->events[next_fault].t : 0.0;
      if (next_sweep <= t && (!fault_due || next_sweep <= fault_t)) {
        pool.reclaim_idle(next_sweep);
        engine.sweep(next_sweep);
        next_sweep += options.ping_interval_s;
        continue;
      }
      if (!fault_due) return;
      const std::string& target = faults->events[next_fault++].fn;
      if (target.starts_with("rank:")) {
        auto live = pool.alive_instances();
        if (!live.empty()) {
          const auto rank = std::stoull(target.substr(5));
          pool.reclaim(live[(rank == 0 ? 0 : rank - 1) % live.size()]);
        }
      } else if (pool.known(FunctionId(target))) {
        pool.reclaim(FunctionId(target));
      }
      if (options.after_event) options.after_event(engine, nullptr);
    }
  };

  std::priority_queue<double, std::vector<double>, std::greater<>> in_flight;
  std::size_t request_index = 0, slot = 0;
  double batch_t = -1.0;
  double first_t = trace.empty() ? 0.0 : trace.front().t, last_t = first_t;
  for (const auto& ev : trace) {
    advance_to(ev.t);
    last_t = ev.t;
    if (ev.ev == EventType::Ingest) {
      engine.ingest(make_blob(ev, options.seed, options.dim));
      batch_t = -1.0;
    } else {
      slot = ev.t == batch_t ? slot + 1 : 0;
      batch_t = ev.t;
      NonTrainingRequest req = make_request(ev, request_index++);
      double issue = ev.t;
      if (options.parallel > 0) {
        while (!in_flight.empty() && in_flight.top() <= issue) in_flight.pop();
        while (in_flight.size() >= options.parallel) {
          issue = std::max(issue, in_flight.top());
          in_flight.pop();
        }
      }
      try {
        RequestOutcome out = tracker.submit(req, issue, issue == ev.t ? slot : 0);
        if (options.parallel > 0) in_flight.push(issue + out.latency.total_s());
        // Time spent waiting for a free in-flight slot counts as queueing.
        out.latency.queue_s += issue - ev.t;
        report.rows.push_back({out.request_id, std::string(to_string(out.workload)), report.policy, out.hit,
                               out.latency.comm_s, out.latency.compute_s, out.cost, out.latency.queue_s});
        if (options.on_outcome) options.on_outcome(req, out);
      } catch (const Error& e) {
        if (e.code() != Errc::DataUnavailable) throw;
        ++report.failed;
      }
    }
    if (options.after_event) options.after_event(engine, &ev);
  }
  engine.store().flush();
  report.hits = engine.hit_stats();
  report.footprint_bytes = engine.peak_resident_bytes();
  report.functions = engine.peak_instances();
  report.keepalive_cost = keepalive_cost(report.functions, last_t - first_t, tracker.options().cost);
  return report;
}

}  // namespace flstore
