#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flstore/persistent_store.hpp"
#include "flstore/policy.hpp"
#include "flstore/serverless.hpp"

namespace flstore {

// Hash table from a cached key to the instance holding it and that
// instance's replicas.
class PlacementMap {
 public:
  struct Entry {
    FunctionId primary;
    std::vector<FunctionId> replicas;
  };

  void insert(const CacheKey& key, FunctionId primary, std::vector<FunctionId> replicas = {});
  bool remove(const CacheKey& key);
  std::optional<FunctionId> lookup(const CacheKey& key) const;
  const Entry* find(const CacheKey& key) const;
  Entry* find(const CacheKey& key);
  std::size_t size() const noexcept { return entries_.size(); }
  void reserve(std::size_t n) { entries_.reserve(n); }
  const std::unordered_map<CacheKey, Entry>& entries() const noexcept { return entries_; }

  // Estimated heap footprint: nodes, buckets and out-of-line strings.
  std::size_t memory_overhead() const;

 private:
  std::unordered_map<CacheKey, Entry> entries_;
};

struct EngineOptions {
  // Secondary copies per primary instance.
  std::uint32_t replicas = 0;
  // Upper bound on primary instances; unset means spawn freely.
  std::optional<std::size_t> max_primaries;
};

struct PlacementDecision {
  CacheKey key;
  bool hot = false;
  std::optional<FunctionId> fn;
  PolicyDecision decision;
  bool warned = false;  // hot but nothing could host it
};

struct ApplyResult {
  std::vector<CacheKey> fetched_now;  // cache_now keys that had to come from the store
  std::uint64_t fetched_now_bytes = 0;
  std::vector<CacheKey> prefetched;
  std::uint64_t prefetched_bytes = 0;
  std::vector<CacheKey> evicted;
  std::size_t warnings = 0;
};

struct GroupInfo {
  FunctionId primary;
  std::vector<FunctionId> secondaries;
  std::size_t keys = 0;
  std::uint64_t bytes = 0;
};

class CacheEngine : public CacheView {
 public:
  CacheEngine(PersistentStore& store, FunctionPool& pool, std::unique_ptr<CachePolicy> policy,
              EngineOptions options = {});

  // Persists the blob, lets the policy classify it and places it if hot.
  // `current_requests` are queued requests the policy may take into account.
  PlacementDecision ingest(BlobRecord blob, std::span<const NonTrainingRequest> current_requests = {});

  std::optional<FunctionId> lookup(const CacheKey& key) const;
  // Primary first, then replicas; dead instances included until repaired.
  std::vector<FunctionId> locations(const CacheKey& key) const;
  FunctionId choose_instance(std::uint64_t size_bytes);
  ApplyResult apply_decision(const PolicyDecision& d);
  // Policy step for a request that has just been counted. Standing
  // reservations are recorded and the decision applied.
  ApplyResult on_request(const NonTrainingRequest& req, bool hit);
  // Feeds a queued request to the policy without serving it.
  void observe(const NonTrainingRequest& req);
  void set_policy(std::unique_ptr<CachePolicy> policy);
  void set_policy(std::string_view name, const PolicyOptions& options = {});
  std::string policy_name() const;

  // Hit accounting: one event per request, a hit when every key is resident.
  bool record_access(const std::vector<CacheKey>& keys);
  HitStats hit_stats() const;
  bool all_resident(const std::vector<CacheKey>& keys) const;

  // Pings every member of every replica group and repairs groups with dead
  // members. Returns the number of groups repaired.
  std::size_t sweep(double now);
  // Immediate repair of the group that contains `fn`.
  void report_failure(const FunctionId& fn, double now);
  // Ensures the group holding `key` has k secondaries; returns them.
  std::vector<FunctionId> replicate(const CacheKey& key, std::uint32_t k, double now = 0.0);

  // Size recorded at ingest.
  std::optional<std::uint64_t> blob_size(const CacheKey& key) const;

  bool check_consistency() const;
  std::size_t memory_overhead() const;
  std::uint64_t resident_bytes() const;
  std::uint64_t peak_resident_bytes() const;
  std::size_t peak_instances() const;
  std::size_t placement_size() const;
  std::vector<GroupInfo> groups() const;
  std::vector<Reservation> reservations() const;
  std::size_t warnings() const;
  PersistentStore& store() noexcept { return store_; }
  FunctionPool& pool() noexcept { return pool_; }
  const EngineOptions& options() const noexcept { return options_; }

  // CacheView
  std::vector<CacheKey> catalog_round(RoundId round, BlobKind kind) const override;
  bool in_catalog(const CacheKey& key) const override;
  std::vector<RoundId> recent_rounds(BlobKind kind, std::size_t n) const override;
  bool is_resident(const CacheKey& key) const override;
  std::vector<CacheKey> resident_keys(BlobKind kind) const override;

 private:
  struct Group {
    FunctionId primary;
    std::vector<FunctionId> secondaries;
    std::set<CacheKey> keys;
    std::uint64_t bytes = 0;
    std::uint64_t capacity = 0;
  };

  // Lock-free view over engine state for policy callbacks made while the
  // engine already holds its lock.
  class View final : public CacheView {
   public:
    explicit View(const CacheEngine& e) : e_(e) {}
    std::vector<CacheKey> catalog_round(RoundId round, BlobKind kind) const override {
      return e_.catalog_round_locked(round, kind);
    }
    bool in_catalog(const CacheKey& key) const override { return e_.in_catalog_locked(key); }
    std::vector<RoundId> recent_rounds(BlobKind kind, std::size_t n) const override {
      return e_.recent_rounds_locked(kind, n);
    }
    bool is_resident(const CacheKey& key) const override { return e_.placement_.find(key) != nullptr; }
    std::vector<CacheKey> resident_keys(BlobKind kind) const override {
      const auto& s = e_.resident_by_kind_[static_cast<std::size_t>(kind)];
      return {s.begin(), s.end()};
    }

   private:
    const CacheEngine& e_;
  };

  using Catalog = std::map<RoundId, std::map<CacheKey, std::uint64_t>>;

  std::vector<CacheKey> catalog_round_locked(RoundId round, BlobKind kind) const;
  bool in_catalog_locked(const CacheKey& key) const;
  std::vector<RoundId> recent_rounds_locked(BlobKind kind, std::size_t n) const;

  FunctionId choose_instance_locked(std::uint64_t size_bytes);
  bool place_locked(const BlobPtr& blob);
  void unplace_locked(const CacheKey& key);
  ApplyResult apply_locked(const PolicyDecision& d, const BlobPtr& in_hand);
  void repair_group_locked(const std::string& group, double now);
  std::size_t live_primaries_locked() const;
  void note_reservations_locked(const std::vector<Reservation>& reserved);
  bool reserved_locked(const CacheKey& key) const;

  PersistentStore& store_;
  FunctionPool& pool_;
  std::unique_ptr<CachePolicy> policy_;
  EngineOptions options_;

  mutable std::shared_mutex mu_;
  std::array<Catalog, 3> catalog_;
  PlacementMap placement_;
  std::array<std::set<CacheKey>, 3> resident_by_kind_;
  std::map<std::string, Group> groups_;
  std::unordered_map<FunctionId, std::string> member_of_;
  std::vector<Reservation> reservations_;
  HitStats hits_;
  std::uint64_t resident_bytes_ = 0;
  std::uint64_t peak_resident_bytes_ = 0;
  std::size_t peak_instances_ = 0;
  std::size_t warnings_ = 0;
};

}  // namespace flstore
