#include "flstore/serverless.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

namespace flstore {

FunctionPool::FunctionPool(PoolOptions options) : options_(options) {
  if (options_.capacity_bytes == 0) throw Error(Errc::InvalidArgument, "instance capacity must be > 0");
}

FunctionId FunctionPool::next_id_locked() {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fn-%05llu", static_cast<unsigned long long>(counter_++));
  return FunctionId(buf);
}

FunctionPool::Slot& FunctionPool::slot(const FunctionId& fn) const {
  std::shared_lock lock(mu_);
  auto it = slots_.find(fn);
  if (it == slots_.end()) throw Error(Errc::UnknownFunction, "unknown function " + fn.str());
  return *it->second;
}

FunctionId FunctionPool::spawn(std::optional<std::uint64_t> capacity_bytes, double now) {
  const std::uint64_t cap = capacity_bytes.value_or(options_.capacity_bytes);
  if (cap == 0) throw Error(Errc::InvalidArgument, "instance capacity must be > 0");
  std::unique_lock lock(mu_);
  FunctionId id = next_id_locked();
  auto s = std::make_unique<Slot>();
  s->state.id = id;
  s->state.capacity_bytes = cap;
  s->state.last_ping = now;
  s->state.busy_until = now;
  slots_.emplace(id, std::move(s));
  std::lock_guard live(live_mu_);
  live_.insert(id);
  return id;
}

FunctionId FunctionPool::clone(const FunctionId& fn, double now) {
  Slot& src = slot(fn);
  FunctionInstance copy;
  {
    std::lock_guard guard(src.mu);
    if (!src.state.alive) throw Error(Errc::DeadInstance, "cannot clone dead instance " + fn.str());
    copy = src.state;
  }
  std::unique_lock lock(mu_);
  copy.id = next_id_locked();
  copy.last_ping = now;
  copy.busy_until = now;
  auto s = std::make_unique<Slot>();
  s->state = std::move(copy);
  FunctionId id = s->state.id;
  slots_.emplace(id, std::move(s));
  std::lock_guard live(live_mu_);
  live_.insert(id);
  return id;
}

void FunctionPool::store(const FunctionId& fn, BlobPtr blob) {
  if (!blob) throw Error(Errc::InvalidArgument, "null blob");
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  auto& st = s.state;
  if (!st.alive) throw Error(Errc::DeadInstance, "store on dead instance " + fn.str());
  std::uint64_t used = st.used_bytes;
  auto it = st.resident.find(blob->key);
  if (it != st.resident.end()) used -= it->second->size_bytes;
  if (blob->size_bytes > st.capacity_bytes - used)
    throw Error(Errc::CapacityExceeded, to_string(blob->key) + " does not fit on " + fn.str());
  st.used_bytes = used + blob->size_bytes;
  st.resident[blob->key] = std::move(blob);
}

void FunctionPool::evict(const FunctionId& fn, const CacheKey& key) {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  auto& st = s.state;
  auto it = st.resident.find(key);
  if (it == st.resident.end()) throw Error(Errc::NotResident, to_string(key) + " not on " + fn.str());
  st.used_bytes -= it->second->size_bytes;
  st.resident.erase(it);
}

ExecResult FunctionPool::execute(const FunctionId& fn, const NonTrainingRequest& req,
                                 const std::vector<CacheKey>& keys) const {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  const auto& st = s.state;
  if (!st.alive) throw Error(Errc::DeadInstance, "execute on dead instance " + fn.str());
  std::vector<CacheKey> missing;
  std::vector<const BlobRecord*> blobs;
  std::uint64_t touched = 0;
  for (const auto& key : keys) {
    auto it = st.resident.find(key);
    if (it == st.resident.end()) {
      missing.push_back(key);
      continue;
    }
    blobs.push_back(it->second.get());
    touched += it->second->size_bytes;
  }
  if (!missing.empty())
    throw MissingDataError(missing, std::to_string(missing.size()) + " key(s) missing on " + fn.str() +
                                        ", first " + to_string(missing.front()));
  const auto start = std::chrono::steady_clock::now();
  ExecResult result{req.request_id, fn, kernels::run_workload(req, blobs), 0.0, touched};
  result.compute_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<BlobPtr> FunctionPool::collect(const FunctionId& fn, const std::vector<CacheKey>& keys) const {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  if (!s.state.alive) throw Error(Errc::DeadInstance, "collect on dead instance " + fn.str());
  std::vector<BlobPtr> out;
  for (const auto& key : keys)
    if (auto it = s.state.resident.find(key); it != s.state.resident.end()) out.push_back(it->second);
  return out;
}

bool FunctionPool::ping(const FunctionId& fn, double now) {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  if (s.state.alive) s.state.last_ping = std::max(s.state.last_ping, now);
  return s.state.alive;
}

void FunctionPool::reclaim(const FunctionId& fn) {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  s.state.alive = false;
  s.state.resident.clear();
  s.state.used_bytes = 0;
  std::lock_guard live(live_mu_);
  live_.erase(fn);
}

std::vector<FunctionId> FunctionPool::reclaim_idle(double now) {
  std::vector<FunctionId> gone;
  for (const auto& fn : alive_instances()) {
    Slot& s = slot(fn);
    std::lock_guard guard(s.mu);
    if (s.state.alive && now - s.state.last_ping > options_.keepalive_s) {
      s.state.alive = false;
      s.state.resident.clear();
      s.state.used_bytes = 0;
      gone.push_back(fn);
      std::lock_guard live(live_mu_);
      live_.erase(fn);
    }
  }
  return gone;
}

double FunctionPool::reserve(const FunctionId& fn, double ready, double duration) {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  const double start = std::max(ready, s.state.busy_until);
  s.state.busy_until = start + std::max(0.0, duration);
  return start;
}

double FunctionPool::busy_until(const FunctionId& fn) const {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  return s.state.busy_until;
}

void FunctionPool::set_replica_group(const FunctionId& fn, std::vector<FunctionId> group) {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  s.state.replica_group = std::move(group);
}

bool FunctionPool::known(const FunctionId& fn) const {
  std::shared_lock lock(mu_);
  return slots_.count(fn) != 0;
}

bool FunctionPool::alive(const FunctionId& fn) const {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  return s.state.alive;
}

bool FunctionPool::has(const FunctionId& fn, const CacheKey& key) const {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  return s.state.resident.count(key) != 0;
}

std::uint64_t FunctionPool::used_bytes(const FunctionId& fn) const {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  return s.state.used_bytes;
}

std::uint64_t FunctionPool::free_bytes(const FunctionId& fn) const {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  return s.state.capacity_bytes - s.state.used_bytes;
}

std::uint64_t FunctionPool::capacity_bytes(const FunctionId& fn) const {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  return s.state.capacity_bytes;
}

std::vector<CacheKey> FunctionPool::resident_keys(const FunctionId& fn) const {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  std::vector<CacheKey> keys;
  keys.reserve(s.state.resident.size());
  for (const auto& [key, blob] : s.state.resident) keys.push_back(key);
  return keys;
}

FunctionInstance FunctionPool::snapshot(const FunctionId& fn) const {
  Slot& s = slot(fn);
  std::lock_guard guard(s.mu);
  return s.state;
}

std::vector<FunctionId> FunctionPool::instances() const {
  std::shared_lock lock(mu_);
  std::vector<FunctionId> ids;
  for (const auto& [id, s] : slots_) ids.push_back(id);
  return ids;
}

std::vector<FunctionId> FunctionPool::alive_instances() const {
  std::lock_guard live(live_mu_);
  return {live_.begin(), live_.end()};
}

std::size_t FunctionPool::alive_count() const {
  std::lock_guard live(live_mu_);
  return live_.size();
}

std::size_t FunctionPool::spawned() const {
  std::shared_lock lock(mu_);
  return slots_.size();
}

}  // namespace flstore
