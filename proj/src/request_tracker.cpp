#include "flstore/request_tracker.hpp"

#include <algorithm>

namespace flstore {

RequestTracker::RequestTracker(CacheEngine& engine, TrackerOptions options)
    : engine_(engine), options_(std::move(options)) {
  options_.cost.validate();
  options_.compute.validate();
  if (!(options_.reroute_timeout_s >= 0.0) || !(options_.dispatch_s >= 0.0) || !(options_.cold_start_s >= 0.0))
    throw Error(Errc::ConfigError, "tracker timings must be >= 0");
}

TrackerEntry& RequestTracker::entry_locked(const std::string& request_id) {
  auto it = entries_.find(request_id);
  if (it == entries_.end()) throw Error(Errc::UnknownRequest, "unknown request " + request_id);
  return it->second;
}

TrackerEntry RequestTracker::poll(const std::string& request_id) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(request_id);
  if (it == entries_.end()) throw Error(Errc::UnknownRequest, "unknown request " + request_id);
  return it->second;
}

std::optional<RequestOutcome> RequestTracker::result(const std::string& request_id) const {
  std::lock_guard lock(mu_);
  auto it = results_.find(request_id);
  if (it == results_.end()) return std::nullopt;
  return it->second;
}

double RequestTracker::reroute_on_timeout(const std::string& request_id, double now) {
  FunctionId failed;
  {
    std::lock_guard lock(mu_);
    TrackerEntry& e = entry_locked(request_id);
    if (e.status || e.routed_to.empty()) return 0.0;
    failed = e.routed_to.back();
    ++e.attempts;
  }
  engine_.report_failure(failed, now);
  return options_.reroute_timeout_s;
}

std::vector<FunctionId> RequestTracker::replicate(const CacheKey& key, std::uint32_t k, double now) {
  return engine_.replicate(key, k, now);
}

bool RequestTracker::deliver(RequestOutcome outcome) {
  std::lock_guard lock(mu_);
  if (results_.count(outcome.request_id)) return false;
  if (auto it = entries_.find(outcome.request_id); it != entries_.end()) it->second.status = true;
  std::string id = outcome.request_id;
  results_.emplace(std::move(id), std::move(outcome));
  return true;
}

void RequestTracker::enqueue(const NonTrainingRequest& req) {
  std::lock_guard lock(mu_);
  pending_.push_back(req);
}

std::vector<NonTrainingRequest> RequestTracker::pending() const {
  std::lock_guard lock(mu_);
  return {pending_.begin(), pending_.end()};
}

void RequestTracker::dequeue(const std::string& request_id) {
  std::lock_guard lock(mu_);
  std::erase_if(pending_, [&](const NonTrainingRequest& r) { return r.request_id == request_id; });
}

RequestTracker::Placement RequestTracker::locate(const std::vector<CacheKey>& keys) const {
  Placement p;
  for (const auto& key : keys) {
    auto fn = engine_.lookup(key);
    if (!fn) {
      p.cold.push_back(key);
      continue;
    }
    auto it = std::find_if(p.by_instance.begin(), p.by_instance.end(),
                           [&](const auto& slot) { return slot.first == *fn; });
    if (it == p.by_instance.end())
      p.by_instance.push_back({*fn, {key}});
    else
      it->second.push_back(key);
  }
  return p;
}

RequestOutcome RequestTracker::submit(const NonTrainingRequest& req, double now, std::size_t slot) {
  validate_request(req);
  {
    std::lock_guard lock(mu_);
    if (auto it = results_.find(req.request_id); it != results_.end()) return it->second;
    entries_.insert_or_assign(req.request_id, TrackerEntry{req.request_id, {}, false, now, 0});
  }
  auto drop_entry = [&] {
    std::lock_guard lock(mu_);
    entries_.erase(req.request_id);
  };

  const auto accessed = accessed_keys(req, engine_);
  for (const auto& key : accessed) {
    if (!engine_.in_catalog(key)) {
      drop_entry();
      throw Error(Errc::DataUnavailable, to_string(key) + " was never ingested");
    }
  }
  if (accessed.empty()) {
    drop_entry();
    throw Error(Errc::DataUnavailable, "no data for round " + std::to_string(req.scope_round.value()));
  }

  FunctionPool& pool = engine_.pool();
  double waited = 0.0;
  std::uint32_t timeouts = 0;
  auto route_to = [&](const FunctionId& fn) {
    std::lock_guard lock(mu_);
    entry_locked(req.request_id).routed_to.push_back(fn);
  };
  auto time_out = [&](const FunctionId& fn) {
    route_to(fn);
    waited += reroute_on_timeout(req.request_id, now);
    ++timeouts;
  };

  // A dead holder only shows itself by not answering: each one costs a
  // time-out before the request moves on to the next copy.
  for (bool again = true; again;) {
    again = false;
    for (const auto& key : accessed) {
      const auto locs = engine_.locations(key);
      if (locs.empty() || pool.alive(locs.front())) continue;
      for (const auto& fn : locs) {
        if (pool.alive(fn)) break;
        time_out(fn);
      }
      again = true;
      break;
    }
  }

  const bool hit = engine_.record_access(accessed);
  const ApplyResult applied = engine_.on_request(req, hit);
  const auto exec_keys = execution_keys(req, engine_, options_.metadata_window);

  RequestOutcome out;
  out.request_id = req.request_id;
  out.workload = req.workload;
  out.hit = hit;
  out.fetched_bytes = applied.fetched_now_bytes;
  out.store_reads = applied.fetched_now.size();

  std::vector<FunctionId> used;
  for (int attempt = 0;; ++attempt) {
    Placement where = locate(exec_keys);
    std::vector<BlobPtr> staged;
    auto stage_cold = [&](const std::vector<CacheKey>& keys) {
      for (const auto& key : keys) {
        auto blob = engine_.store().get(key);
        if (!blob) {
          drop_entry();
          throw Error(Errc::DataUnavailable, to_string(key) + " missing from the persistent store");
        }
        out.fetched_bytes += blob->size_bytes;
        ++out.store_reads;
        staged.push_back(std::make_shared<const BlobRecord>(std::move(*blob)));
      }
    };
    try {
      used.clear();
      if (where.by_instance.size() == 1 && where.cold.empty()) {
        // All data in one replica group: run on whichever copy frees up first.
        const auto& [primary, keys] = where.by_instance.front();
        FunctionId best = primary;
        double best_free = pool.busy_until(primary);
        for (const auto& fn : engine_.locations(keys.front())) {
          if (!pool.alive(fn)) continue;
          const double free = pool.busy_until(fn);
          if (free < best_free || !pool.alive(best)) {
            best = fn;
            best_free = free;
          }
        }
        route_to(best);
        out.output = pool.execute(best, req, keys).output;
        used.push_back(best);
      } else {
        // Data spread over several instances (or partly cold): every instance
        // hands back its share and the tracker reduces over the union.
        for (const auto& [fn, keys] : where.by_instance) {
          route_to(fn);
          auto part = pool.collect(fn, keys);
          if (part.size() != keys.size()) throw Error(Errc::DeadInstance, "partial result from " + fn.str());
          staged.insert(staged.end(), part.begin(), part.end());
          used.push_back(fn);
        }
        stage_cold(where.cold);
        std::sort(staged.begin(), staged.end(), [](const BlobPtr& a, const BlobPtr& b) { return a->key < b->key; });
        std::vector<const BlobRecord*> ptrs;
        for (const auto& b : staged) ptrs.push_back(b.get());
        out.output = kernels::run_workload(req, ptrs);
      }
      break;
    } catch (const Error& e) {
      if (e.code() != Errc::DeadInstance && e.code() != Errc::MissingData) throw;
      // The instance died between routing and execution; the last routed
      // instance is the one that did not answer.
      waited += reroute_on_timeout(req.request_id, now);
      ++timeouts;
      if (attempt > 8) throw;
    }
  }

  for (const auto& key : exec_keys) {
    ++out.input_blobs;
    out.input_bytes += engine_.blob_size(key).value_or(0);
  }

  const double compute = options_.compute.at(req.workload);
  const double extra = waited + (hit ? 0.0 : options_.cold_start_s);
  out.latency = latency_flstore(out.fetched_bytes == 0, out.fetched_bytes, options_.cost, compute, extra);
  out.timeouts = timeouts;

  const double offset = static_cast<double>(slot) * options_.dispatch_s;
  const double ready = now + offset + out.latency.comm_s;
  double start = ready;
  for (const auto& fn : used) start = std::max(start, pool.reserve(fn, ready, compute));
  out.latency.queue_s = start - ready + offset;
  out.cost = request_cost(Deployment::FLStore, out.latency, out.fetched_bytes, out.store_reads, options_.cost);
  {
    std::lock_guard lock(mu_);
    out.routed_to = entry_locked(req.request_id).routed_to;
  }
  deliver(out);
  dequeue(req.request_id);
  return out;
}

std::size_t RequestTracker::memory_overhead() const {
  std::lock_guard lock(mu_);
  auto heap = [](const std::string& s) { return s.capacity() > 15 ? s.capacity() + 1 : 0; };
  std::size_t bytes = entries_.bucket_count() * sizeof(void*);
  for (const auto& [id, e] : entries_) {
    bytes += sizeof(void*) + sizeof(std::size_t) + sizeof(std::pair<const std::string, TrackerEntry>);
    bytes += heap(id) + heap(e.request_id) + e.routed_to.capacity() * sizeof(FunctionId);
    for (const auto& fn : e.routed_to) bytes += heap(fn.str());
  }
  return bytes;
}

std::size_t RequestTracker::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

}  // namespace flstore
