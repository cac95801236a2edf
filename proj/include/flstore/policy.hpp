#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "flstore/types.hpp"

namespace flstore {

// Table-driven taxonomy: every workload maps to exactly one caching class.
WorkloadClass classify_workload(Workload workload) noexcept;

// The single key a request addresses, when it can be named without looking at
// the catalog: (client, round) for client-scoped requests, the aggregated model
// for unscoped P1 requests. Unscoped P2/P4 requests address a whole round.
std::optional<CacheKey> target_key(const NonTrainingRequest& req);

// Read-only view of the cache state handed to policies by the Cache Engine.
class CacheView {
 public:
  virtual ~CacheView() = default;
  // Keys ingested so far (hot or cold) for one round and kind.
  virtual std::vector<CacheKey> catalog_round(RoundId round, BlobKind kind) const = 0;
  virtual bool in_catalog(const CacheKey& key) const = 0;
  // Up to n most recent rounds that hold at least one key of this kind,
  // newest first.
  virtual std::vector<RoundId> recent_rounds(BlobKind kind, std::size_t n) const = 0;
  virtual bool is_resident(const CacheKey& key) const = 0;
  virtual std::vector<CacheKey> resident_keys(BlobKind kind) const = 0;
};

// Keys whose residency decides whether a request is a hit. A request is one
// access event: a hit only if every key here is resident.
std::vector<CacheKey> accessed_keys(const NonTrainingRequest& req, const CacheView& view);

// Keys the workload kernel reads.
std::vector<CacheKey> execution_keys(const NonTrainingRequest& req, const CacheView& view,
                                     std::uint32_t metadata_window = 10);

// A promise to admit data that has not been ingested yet. An absent client
// means every client of that round.
struct Reservation {
  RoundId round;
  BlobKind kind = BlobKind::ModelUpdate;
  std::optional<ClientId> client;

  bool operator==(const Reservation&) const = default;
};

struct PolicyDecision {
  std::set<CacheKey> cache_now;
  std::set<CacheKey> prefetch;
  std::set<CacheKey> evict;
  std::vector<Reservation> reserved;

  bool disjoint() const;
  bool empty() const { return cache_now.empty() && prefetch.empty() && evict.empty(); }
};

struct HitStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;

  std::uint64_t total() const noexcept { return hits + misses; }
  double hit_rate() const noexcept {
    return total() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total());
  }
  HitStats& operator+=(const HitStats& o) noexcept {
    hits += o.hits;
    misses += o.misses;
    return *this;
  }
  bool operator==(const HitStats&) const = default;
};

class CachePolicy {
 public:
  virtual ~CachePolicy() = default;

  virtual std::string name() const = 0;
  // Called after `key` has been added to the catalog.
  virtual PolicyDecision on_ingest(const CacheKey& key, const CacheView& view) = 0;
  // Called once per request, after hit accounting and before execution.
  virtual PolicyDecision on_request(const NonTrainingRequest& req, bool hit, const CacheView& view) = 0;
  // Lets the engine tell the policy about requests that are queued at the
  // tracker but have not been served yet.
  virtual void observe(const NonTrainingRequest& /*req*/) {}
};

// Base for the FL-aware policies. Each one maintains a "wanted" key set; a
// decision is the difference between that set and what is resident.
class TailoredPolicy : public CachePolicy {
 public:
  PolicyDecision on_ingest(const CacheKey& key, const CacheView& view) override;
  PolicyDecision on_request(const NonTrainingRequest& req, bool hit, const CacheView& view) override;
  void observe(const NonTrainingRequest& req) override { note_request(req); }

  virtual WorkloadClass policy_class() const = 0;
  virtual bool manages(BlobKind kind) const = 0;
  virtual void note_request(const NonTrainingRequest& req) = 0;
  virtual void note_ingest(const CacheKey& /*key*/) {}
  virtual std::set<CacheKey> wanted(const CacheView& view) const = 0;
  // Keys fetched synchronously when the request is served.
  virtual std::set<CacheKey> required(const NonTrainingRequest& req, const CacheView& view) const = 0;
  virtual std::vector<Reservation> reservations(const NonTrainingRequest& /*req*/,
                                                const CacheView& /*view*/) const {
    return {};
  }

  // Shared by single policies and the router: fold several policies' wanted
  // sets into one decision.
  static PolicyDecision reconcile(const std::vector<const TailoredPolicy*>& policies,
                                  std::set<CacheKey> cache_now, const CacheView& view);
};

// P1: the aggregated model (and any requested single client update), keeping
// the two newest aggregated versions.
class P1Policy final : public TailoredPolicy {
 public:
  explicit P1Policy(std::string label = "p1") : label_(std::move(label)) {}
  std::string name() const override { return label_; }
  WorkloadClass policy_class() const override { return WorkloadClass::P1_SingleOrAggregated; }
  bool manages(BlobKind kind) const override { return kind != BlobKind::Metadata; }
  void note_request(const NonTrainingRequest& req) override;
  std::set<CacheKey> wanted(const CacheView& view) const override;
  std::set<CacheKey> required(const NonTrainingRequest& req, const CacheView& view) const override;

 private:
  std::string label_;
  bool active_ = false;
  std::optional<CacheKey> last_target_;
};

// P2: every client update of the requested round, the next round and the
// latest round.
class P2Policy final : public TailoredPolicy {
 public:
  explicit P2Policy(std::string label = "p2") : label_(std::move(label)) {}
  std::string name() const override { return label_; }
  WorkloadClass policy_class() const override { return WorkloadClass::P2_AllClientsPerRound; }
  bool manages(BlobKind kind) const override { return kind == BlobKind::ModelUpdate; }
  void note_request(const NonTrainingRequest& req) override;
  std::set<CacheKey> wanted(const CacheView& view) const override;
  std::set<CacheKey> required(const NonTrainingRequest& req, const CacheView& view) const override;
  std::vector<Reservation> reservations(const NonTrainingRequest& req, const CacheView& view) const override;

  bool active() const noexcept { return current_.has_value(); }
  std::optional<RoundId> current_round() const noexcept { return current_; }

 private:
  std::string label_;
  std::optional<RoundId> current_;
};

// P3: a sliding window {r-1, r, r+1} over each tracked client's updates.
class P3Policy final : public TailoredPolicy {
 public:
  explicit P3Policy(std::string label = "p3") : label_(std::move(label)) {}
  std::string name() const override { return label_; }
  WorkloadClass policy_class() const override { return WorkloadClass::P3_ClientAcrossRounds; }
  bool manages(BlobKind kind) const override { return kind == BlobKind::ModelUpdate; }
  void note_request(const NonTrainingRequest& req) override;
  std::set<CacheKey> wanted(const CacheView& view) const override;
  std::set<CacheKey> required(const NonTrainingRequest& req, const CacheView& view) const override;
  std::vector<Reservation> reservations(const NonTrainingRequest& req, const CacheView& view) const override;

  const std::map<ClientId, RoundId>& tracked() const noexcept { return tracked_; }

 private:
  std::string label_;
  std::map<ClientId, RoundId> tracked_;
};

// P4: metadata of the most recent `window` ingested rounds, maintained at
// ingest time.
class P4Policy final : public TailoredPolicy {
 public:
  explicit P4Policy(std::uint32_t window = 10, std::string label = "p4")
      : label_(std::move(label)), window_(window == 0 ? 1 : window) {}
  std::string name() const override { return label_; }
  WorkloadClass policy_class() const override { return WorkloadClass::P4_MetadataHyperparams; }
  bool manages(BlobKind kind) const override { return kind == BlobKind::Metadata; }
  void note_request(const NonTrainingRequest&) override {}
  std::set<CacheKey> wanted(const CacheView& view) const override;
  std::set<CacheKey> required(const NonTrainingRequest&, const CacheView&) const override { return {}; }

  std::uint32_t window() const noexcept { return window_; }

 private:
  std::string label_;
  std::uint32_t window_;
};

// Runs all four tailored policies side by side and routes each request to one
// of them: by taxonomy ("auto") or uniformly at random ("random").
class PolicyRouter final : public CachePolicy {
 public:
  enum class Mode { Auto, Random };

  PolicyRouter(Mode mode, std::uint32_t p4_window, std::uint64_t seed = 0);

  std::string name() const override { return mode_ == Mode::Auto ? "auto" : "random"; }
  PolicyDecision on_ingest(const CacheKey& key, const CacheView& view) override;
  PolicyDecision on_request(const NonTrainingRequest& req, bool hit, const CacheView& view) override;
  void observe(const NonTrainingRequest& req) override;

  // The class chosen for the most recent request.
  std::optional<WorkloadClass> last_route() const noexcept { return last_route_; }

 private:
  TailoredPolicy& route(const NonTrainingRequest& req);
  std::vector<const TailoredPolicy*> all() const;

  Mode mode_;
  P1Policy p1_;
  P2Policy p2_;
  P3Policy p3_;
  P4Policy p4_;
  std::mt19937_64 rng_;
  std::optional<WorkloadClass> last_route_;
};

// Reactive insert-on-miss baselines with an entry-count capacity and no
// prefetching.
class ReactivePolicy : public CachePolicy {
 public:
  explicit ReactivePolicy(std::size_t capacity_entries)
      : capacity_(capacity_entries == 0 ? 1 : capacity_entries) {}

  PolicyDecision on_ingest(const CacheKey&, const CacheView&) override { return {}; }
  PolicyDecision on_request(const NonTrainingRequest& req, bool hit, const CacheView& view) override;

  std::size_t capacity() const noexcept { return capacity_; }
  virtual std::size_t tracked() const = 0;

 protected:
  virtual void touch(const CacheKey& key) = 0;
  virtual void insert(const CacheKey& key) = 0;
  virtual bool contains(const CacheKey& key) const = 0;
  virtual void erase(const CacheKey& key) = 0;
  virtual CacheKey victim() const = 0;

 private:
  std::size_t capacity_;
};

class LruPolicy final : public ReactivePolicy {
 public:
  using ReactivePolicy::ReactivePolicy;
  std::string name() const override { return "lru"; }
  std::size_t tracked() const override { return index_.size(); }

 protected:
  void touch(const CacheKey& key) override;
  void insert(const CacheKey& key) override;
  bool contains(const CacheKey& key) const override { return index_.count(key) != 0; }
  void erase(const CacheKey& key) override;
  CacheKey victim() const override { return order_.back(); }

 private:
  std::list<CacheKey> order_;  // most recent first
  std::unordered_map<CacheKey, std::list<CacheKey>::iterator> index_;
};

class LfuPolicy final : public ReactivePolicy {
 public:
  using ReactivePolicy::ReactivePolicy;
  std::string name() const override { return "lfu"; }
  std::size_t tracked() const override { return entries_.size(); }

 protected:
  void touch(const CacheKey& key) override;
  void insert(const CacheKey& key) override;
  bool contains(const CacheKey& key) const override { return entries_.count(key) != 0; }
  void erase(const CacheKey& key) override;
  CacheKey victim() const override { return std::get<2>(*heap_.begin()); }

 private:
  // (frequency, last use stamp, key): the smallest element is the victim,
  // least recently used among the least frequent.
  using Slot = std::tuple<std::uint64_t, std::uint64_t, CacheKey>;
  std::set<Slot> heap_;
  std::unordered_map<CacheKey, std::pair<std::uint64_t, std::uint64_t>> entries_;
  std::uint64_t clock_ = 0;
};

class FifoPolicy final : public ReactivePolicy {
 public:
  using ReactivePolicy::ReactivePolicy;
  std::string name() const override { return "fifo"; }
  std::size_t tracked() const override { return index_.size(); }

 protected:
  void touch(const CacheKey&) override {}
  void insert(const CacheKey& key) override;
  bool contains(const CacheKey& key) const override { return index_.count(key) != 0; }
  void erase(const CacheKey& key) override;
  CacheKey victim() const override { return order_.front(); }

 private:
  std::list<CacheKey> order_;  // oldest first
  std::unordered_map<CacheKey, std::list<CacheKey>::iterator> index_;
};

struct PolicyOptions {
  std::uint32_t p4_window = 10;
  std::size_t baseline_capacity_entries = 121;
  std::uint64_t seed = 0;
};

// Policy names: p1 p2 p3 p4 auto random lru lfu fifo static:<p1..p4>.
std::unique_ptr<CachePolicy> make_policy(std::string_view name, const PolicyOptions& options = {});

// Baseline capacity in entries: the byte capacity of one function instance
// divided by the mean blob size.
std::size_t baseline_capacity_entries(std::uint64_t capacity_bytes, std::uint64_t mean_blob_bytes);

}  // namespace flstore
