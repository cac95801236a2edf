#include "flstore/cache_engine.hpp"

#include <algorithm>
#include <limits>
#include <mutex>

namespace flstore {

namespace {

std::size_t heap_bytes(const std::string& s) {
  // libstdc++ keeps up to 15 chars inline.
  return s.capacity() > 15 ? s.capacity() + 1 : 0;
}

constexpr std::size_t kTreeNode = 4 * sizeof(void*);  // colour + parent/left/right

std::size_t kind_index(BlobKind kind) { return static_cast<std::size_t>(kind); }

}  // namespace

// ---------------------------------------------------------------------------
// PlacementMap

void PlacementMap::insert(const CacheKey& key, FunctionId primary, std::vector<FunctionId> replicas) {
  entries_.insert_or_assign(key, Entry{std::move(primary), std::move(replicas)});
}

bool PlacementMap::remove(const CacheKey& key) { return entries_.erase(key) != 0; }

std::optional<FunctionId> PlacementMap::lookup(const CacheKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.primary;
}

const PlacementMap::Entry* PlacementMap::find(const CacheKey& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

PlacementMap::Entry* PlacementMap::find(const CacheKey& key) {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::size_t PlacementMap::memory_overhead() const {
  std::size_t bytes = entries_.bucket_count() * sizeof(void*);
  for (const auto& [key, entry] : entries_) {
    bytes += sizeof(void*) + sizeof(std::size_t) + sizeof(std::pair<const CacheKey, Entry>);
    bytes += heap_bytes(key.client.str()) + heap_bytes(entry.primary.str());
    bytes += entry.replicas.capacity() * sizeof(FunctionId);
    for (const auto& r : entry.replicas) bytes += heap_bytes(r.str());
  }
  return bytes;
}

// ---------------------------------------------------------------------------
// CacheEngine

CacheEngine::CacheEngine(PersistentStore& store, FunctionPool& pool, std::unique_ptr<CachePolicy> policy,
                         EngineOptions options)
    : store_(store), pool_(pool), policy_(std::move(policy)), options_(options) {
  if (!policy_) throw Error(Errc::InvalidArgument, "engine needs a policy");
  if (options_.max_primaries && *options_.max_primaries == 0)
    throw Error(Errc::InvalidArgument, "max_primaries must be > 0");
}

std::vector<CacheKey> CacheEngine::catalog_round_locked(RoundId round, BlobKind kind) const {
  const auto& cat = catalog_[kind_index(kind)];
  auto it = cat.find(round);
  std::vector<CacheKey> keys;
  if (it == cat.end()) return keys;
  keys.reserve(it->second.size());
  for (const auto& [key, size] : it->second) keys.push_back(key);
  return keys;
}

bool CacheEngine::in_catalog_locked(const CacheKey& key) const {
  const auto& cat = catalog_[kind_index(key.kind)];
  auto it = cat.find(key.round);
  return it != cat.end() && it->second.count(key) != 0;
}

std::vector<RoundId> CacheEngine::recent_rounds_locked(BlobKind kind, std::size_t n) const {
  std::vector<RoundId> rounds;
  const auto& cat = catalog_[kind_index(kind)];
  for (auto it = cat.rbegin(); it != cat.rend() && rounds.size() < n; ++it) rounds.push_back(it->first);
  return rounds;
}

std::vector<CacheKey> CacheEngine::catalog_round(RoundId round, BlobKind kind) const {
  std::shared_lock lock(mu_);
  return catalog_round_locked(round, kind);
}

bool CacheEngine::in_catalog(const CacheKey& key) const {
  std::shared_lock lock(mu_);
  return in_catalog_locked(key);
}

std::vector<RoundId> CacheEngine::recent_rounds(BlobKind kind, std::size_t n) const {
  std::shared_lock lock(mu_);
  return recent_rounds_locked(kind, n);
}

bool CacheEngine::is_resident(const CacheKey& key) const {
  std::shared_lock lock(mu_);
  return placement_.find(key) != nullptr;
}

std::vector<CacheKey> CacheEngine::resident_keys(BlobKind kind) const {
  std::shared_lock lock(mu_);
  const auto& s = resident_by_kind_[kind_index(kind)];
  return {s.begin(), s.end()};
}

std::optional<FunctionId> CacheEngine::lookup(const CacheKey& key) const {
  std::shared_lock lock(mu_);
  return placement_.lookup(key);
}

std::vector<FunctionId> CacheEngine::locations(const CacheKey& key) const {
  std::shared_lock lock(mu_);
  std::vector<FunctionId> out;
  if (const auto* e = placement_.find(key)) {
    out.push_back(e->primary);
    out.insert(out.end(), e->replicas.begin(), e->replicas.end());
  }
  return out;
}

std::size_t CacheEngine::live_primaries_locked() const { return groups_.size(); }

FunctionId CacheEngine::choose_instance(std::uint64_t size_bytes) {
  std::unique_lock lock(mu_);
  return choose_instance_locked(size_bytes);
}

FunctionId CacheEngine::choose_instance_locked(std::uint64_t size_bytes) {
  const Group* best = nullptr;
  std::uint64_t best_free = std::numeric_limits<std::uint64_t>::max();
  for (const auto& [name, g] : groups_) {
    const std::uint64_t free = g.capacity - g.bytes;
    if (free < size_bytes) continue;
    if (!best || free < best_free || (free == best_free && g.primary < best->primary)) {
      best = &g;
      best_free = free;
    }
  }
  if (best) return best->primary;

  const std::uint64_t cap = pool_.options().capacity_bytes;
  if (size_bytes > cap)
    throw Error(Errc::CapacityExhausted, "blob of " + std::to_string(size_bytes) + " bytes exceeds instance capacity");
  if (options_.max_primaries && live_primaries_locked() >= *options_.max_primaries)
    throw Error(Errc::CapacityExhausted, "instance limit reached");

  Group g;
  g.primary = pool_.spawn();
  g.capacity = pool_.capacity_bytes(g.primary);
  for (std::uint32_t i = 0; i < options_.replicas; ++i) g.secondaries.push_back(pool_.spawn());
  std::vector<FunctionId> members{g.primary};
  members.insert(members.end(), g.secondaries.begin(), g.secondaries.end());
  for (const auto& m : members) {
    pool_.set_replica_group(m, members);
    member_of_.insert_or_assign(m, g.primary.str());
  }
  FunctionId primary = g.primary;
  groups_.emplace(primary.str(), std::move(g));
  std::size_t live = 0;
  for (const auto& [name, grp] : groups_) live += 1 + grp.secondaries.size();
  peak_instances_ = std::max(peak_instances_, live);
  return primary;
}

bool CacheEngine::place_locked(const BlobPtr& blob) {
  const CacheKey& key = blob->key;
  if (placement_.find(key)) return true;
  for (int attempt = 0; attempt < 4; ++attempt) {
    FunctionId fn{""};
    try {
      fn = choose_instance_locked(blob->size_bytes);
    } catch (const Error& e) {
      if (e.code() != Errc::CapacityExhausted) throw;
      ++warnings_;
      return false;
    }
    Group& g = groups_.at(member_of_.at(fn));
    try {
      pool_.store(fn, blob);
    } catch (const Error& e) {
      if (e.code() != Errc::DeadInstance) throw;
      const std::string name = member_of_.at(fn);
      repair_group_locked(name, 0.0);
      continue;
    }
    for (const auto& s : g.secondaries) {
      try {
        pool_.store(s, blob);
      } catch (const Error& e) {
        if (e.code() != Errc::DeadInstance) throw;  // the next sweep replaces it
      }
    }
    g.keys.insert(key);
    g.bytes += blob->size_bytes;
    placement_.insert(key, g.primary, g.secondaries);
    resident_by_kind_[kind_index(key.kind)].insert(key);
    resident_bytes_ += blob->size_bytes;
    peak_resident_bytes_ = std::max(peak_resident_bytes_, resident_bytes_);
    return true;
  }
  ++warnings_;
  return false;
}

void CacheEngine::unplace_locked(const CacheKey& key) {
  const auto* e = placement_.find(key);
  if (!e) return;
  auto gi = member_of_.find(e->primary);
  std::vector<FunctionId> members{e->primary};
  members.insert(members.end(), e->replicas.begin(), e->replicas.end());
  for (const auto& m : members)
    if (pool_.alive(m) && pool_.has(m, key)) pool_.evict(m, key);
  if (gi != member_of_.end()) {
    Group& g = groups_.at(gi->second);
    if (g.keys.erase(key)) {
      const auto size = catalog_[kind_index(key.kind)].at(key.round).at(key);
      g.bytes -= size;
      resident_bytes_ -= size;
    }
  }
  placement_.remove(key);
  resident_by_kind_[kind_index(key.kind)].erase(key);
}

ApplyResult CacheEngine::apply_decision(const PolicyDecision& d) {
  std::unique_lock lock(mu_);
  return apply_locked(d, nullptr);
}

ApplyResult CacheEngine::apply_locked(const PolicyDecision& d, const BlobPtr& in_hand) {
  ApplyResult result;
  for (const auto& key : d.evict) {
    if (!placement_.find(key)) continue;
    unplace_locked(key);
    result.evicted.push_back(key);
  }
  auto bring = [&](const CacheKey& key, std::vector<CacheKey>& keys, std::uint64_t& bytes) {
    if (placement_.find(key)) return;
    BlobPtr blob;
    if (in_hand && in_hand->key == key) {
      blob = in_hand;
    } else {
      auto got = store_.get(key);
      if (!got) return;  // nothing to bring; callers surface DataUnavailable
      blob = std::make_shared<const BlobRecord>(std::move(*got));
      keys.push_back(key);
      bytes += blob->size_bytes;
    }
    if (!place_locked(blob)) ++result.warnings;
  };
  for (const auto& key : d.cache_now) bring(key, result.fetched_now, result.fetched_now_bytes);
  for (const auto& key : d.prefetch) bring(key, result.prefetched, result.prefetched_bytes);
  return result;
}

void CacheEngine::note_reservations_locked(const std::vector<Reservation>& reserved) {
  for (const auto& r : reserved)
    if (std::find(reservations_.begin(), reservations_.end(), r) == reservations_.end())
      reservations_.push_back(r);
}

bool CacheEngine::reserved_locked(const CacheKey& key) const {
  return std::any_of(reservations_.begin(), reservations_.end(), [&key](const Reservation& r) {
    return r.round == key.round && r.kind == key.kind && (!r.client || *r.client == key.client);
  });
}

PlacementDecision CacheEngine::ingest(BlobRecord blob, std::span<const NonTrainingRequest> current_requests) {
  validate_blob(blob);
  const CacheKey key = blob.key;
  store_.put(key, blob);
  auto shared = std::make_shared<const BlobRecord>(std::move(blob));

  std::unique_lock lock(mu_);
  catalog_[kind_index(key.kind)][key.round].insert_or_assign(key, shared->size_bytes);
  // Re-ingest of a hot key replaces the cached copy.
  if (placement_.find(key)) unplace_locked(key);
  for (const auto& req : current_requests) policy_->observe(req);
  View view(*this);
  PlacementDecision out{key, false, std::nullopt, policy_->on_ingest(key, view), false};
  if (reserved_locked(key) && !out.decision.evict.count(key)) {
    out.decision.prefetch.erase(key);
    out.decision.cache_now.insert(key);
  }
  // A reservation is stale once a round two past it has arrived.
  std::erase_if(reservations_, [&key](const Reservation& r) {
    return r.kind == key.kind && r.round.value() + 1 < key.round.value();
  });
  const std::size_t before = warnings_;
  apply_locked(out.decision, shared);
  out.warned = warnings_ != before && out.decision.cache_now.count(key);
  if (const auto* e = placement_.find(key)) {
    out.hot = true;
    out.fn = e->primary;
  }
  return out;
}

ApplyResult CacheEngine::on_request(const NonTrainingRequest& req, bool hit) {
  std::unique_lock lock(mu_);
  View view(*this);
  PolicyDecision d = policy_->on_request(req, hit, view);
  note_reservations_locked(d.reserved);
  return apply_locked(d, nullptr);
}

void CacheEngine::observe(const NonTrainingRequest& req) {
  std::unique_lock lock(mu_);
  policy_->observe(req);
}

void CacheEngine::set_policy(std::unique_ptr<CachePolicy> policy) {
  if (!policy) throw Error(Errc::InvalidArgument, "null policy");
  std::unique_lock lock(mu_);
  policy_ = std::move(policy);
  reservations_.clear();
}

void CacheEngine::set_policy(std::string_view name, const PolicyOptions& options) {
  set_policy(make_policy(name, options));
}

std::string CacheEngine::policy_name() const {
  std::shared_lock lock(mu_);
  return policy_->name();
}

bool CacheEngine::all_resident(const std::vector<CacheKey>& keys) const {
  std::shared_lock lock(mu_);
  return std::all_of(keys.begin(), keys.end(), [this](const CacheKey& k) { return placement_.find(k); });
}

bool CacheEngine::record_access(const std::vector<CacheKey>& keys) {
  std::unique_lock lock(mu_);
  const bool hit = std::all_of(keys.begin(), keys.end(), [this](const CacheKey& k) { return placement_.find(k); });
  if (hit)
    ++hits_.hits;
  else
    ++hits_.misses;
  return hit;
}

HitStats CacheEngine::hit_stats() const {
  std::shared_lock lock(mu_);
  return hits_;
}

void CacheEngine::repair_group_locked(const std::string& name, double now) {
  auto git = groups_.find(name);
  if (git == groups_.end()) return;
  Group& g = git->second;
  std::vector<FunctionId> alive;
  if (pool_.alive(g.primary)) alive.push_back(g.primary);
  for (const auto& m : g.secondaries) if (pool_.alive(m)) alive.push_back(m);

  if (alive.empty()) {
    // Every copy lost: the data is cold again and later requests refetch it.
    for (const auto& key : g.keys) {
      placement_.remove(key);
      resident_by_kind_[kind_index(key.kind)].erase(key);
      resident_bytes_ -= catalog_[kind_index(key.kind)].at(key.round).at(key);
    }
    member_of_.erase(g.primary);
    for (const auto& s : g.secondaries) member_of_.erase(s);
    groups_.erase(git);
    return;
  }

  const FunctionId old_primary = g.primary;
  g.primary = alive.front();
  g.secondaries.assign(alive.begin() + 1, alive.end());
  while (g.secondaries.size() < options_.replicas) g.secondaries.push_back(pool_.clone(g.primary, now));

  member_of_.erase(old_primary);
  std::vector<FunctionId> members{g.primary};
  members.insert(members.end(), g.secondaries.begin(), g.secondaries.end());
  for (const auto& m : members) {
    pool_.set_replica_group(m, members);
    member_of_.insert_or_assign(m, name);
  }
  for (auto it = member_of_.begin(); it != member_of_.end();) {
    if (it->second == name && std::find(members.begin(), members.end(), it->first) == members.end())
      it = member_of_.erase(it);
    else
      ++it;
  }
  for (const auto& key : g.keys) placement_.insert(key, g.primary, g.secondaries);
}

std::size_t CacheEngine::sweep(double now) {
  std::unique_lock lock(mu_);
  std::vector<std::string> broken;
  for (const auto& [name, g] : groups_) {
    bool ok = pool_.ping(g.primary, now);
    for (const auto& s : g.secondaries) ok = pool_.ping(s, now) && ok;
    if (!ok || g.secondaries.size() < options_.replicas) broken.push_back(name);
  }
  for (const auto& name : broken) repair_group_locked(name, now);
  return broken.size();
}

void CacheEngine::report_failure(const FunctionId& fn, double now) {
  std::unique_lock lock(mu_);
  auto it = member_of_.find(fn);
  if (it == member_of_.end()) return;
  const std::string name = it->second;
  repair_group_locked(name, now);
}

std::vector<FunctionId> CacheEngine::replicate(const CacheKey& key, std::uint32_t k, double now) {
  std::unique_lock lock(mu_);
  const auto* e = placement_.find(key);
  if (!e) throw Error(Errc::NotResident, to_string(key) + " is not cached");
  Group& g = groups_.at(member_of_.at(e->primary));
  while (g.secondaries.size() < k) {
    FunctionId c = pool_.clone(g.primary, now);
    member_of_.insert_or_assign(c, member_of_.at(g.primary));
    g.secondaries.push_back(c);
  }
  std::vector<FunctionId> members{g.primary};
  members.insert(members.end(), g.secondaries.begin(), g.secondaries.end());
  for (const auto& m : members) pool_.set_replica_group(m, members);
  for (const auto& k2 : g.keys) placement_.insert(k2, g.primary, g.secondaries);
  return g.secondaries;
}

std::optional<std::uint64_t> CacheEngine::blob_size(const CacheKey& key) const {
  std::shared_lock lock(mu_);
  const auto& cat = catalog_[kind_index(key.kind)];
  auto it = cat.find(key.round);
  if (it == cat.end()) return std::nullopt;
  auto k = it->second.find(key);
  if (k == it->second.end()) return std::nullopt;
  return k->second;
}

bool CacheEngine::check_consistency() const {
  std::shared_lock lock(mu_);
  std::size_t indexed = 0;
  for (const auto& s : resident_by_kind_) indexed += s.size();
  if (indexed != placement_.size()) return false;
  for (const auto& [key, e] : placement_.entries()) {
    if (!resident_by_kind_[kind_index(key.kind)].count(key)) return false;
    std::vector<FunctionId> members{e.primary};
    members.insert(members.end(), e.replicas.begin(), e.replicas.end());
    for (const auto& m : members) {
      if (!pool_.known(m)) return false;
      if (pool_.alive(m) && !pool_.has(m, key)) return false;
    }
  }
  return true;
}

std::size_t CacheEngine::memory_overhead() const {
  std::shared_lock lock(mu_);
  std::size_t bytes = placement_.memory_overhead();
  for (const auto& s : resident_by_kind_)
    for (const auto& key : s) bytes += kTreeNode + sizeof(CacheKey) + heap_bytes(key.client.str());
  for (const auto& [name, g] : groups_)
    bytes += g.keys.size() * (kTreeNode + sizeof(CacheKey)) + sizeof(Group) + kTreeNode + name.size();
  return bytes;
}

std::uint64_t CacheEngine::resident_bytes() const {
  std::shared_lock lock(mu_);
  return resident_bytes_;
}

std::uint64_t CacheEngine::peak_resident_bytes() const {
  std::shared_lock lock(mu_);
  return peak_resident_bytes_;
}

std::size_t CacheEngine::peak_instances() const {
  std::shared_lock lock(mu_);
  return peak_instances_;
}

std::size_t CacheEngine::placement_size() const {
  std::shared_lock lock(mu_);
  return placement_.size();
}

std::vector<GroupInfo> CacheEngine::groups() const {
  std::shared_lock lock(mu_);
  std::vector<GroupInfo> out;
  for (const auto& [name, g] : groups_) out.push_back({g.primary, g.secondaries, g.keys.size(), g.bytes});
  return out;
}

std::vector<Reservation> CacheEngine::reservations() const {
  std::shared_lock lock(mu_);
  return reservations_;
}

std::size_t CacheEngine::warnings() const {
  std::shared_lock lock(mu_);
  return warnings_;
}

}  // namespace flstore
