#include "flstore/policy.hpp"

#include <algorithm>
#include <cctype>

namespace flstore {

WorkloadClass classify_workload(Workload workload) noexcept {
  switch (workload) {
    case Workload::Inference:
    case Workload::Eval:
      return WorkloadClass::P1_SingleOrAggregated;
    case Workload::MaliciousFilter:
    case Workload::Contribution:
    case Workload::Clustering:
    case Workload::CosineSimilarity:
    case Workload::Personalization:
    case Workload::SchedulingClustered:
      return WorkloadClass::P2_AllClientsPerRound;
    case Workload::Debugging:
    case Workload::Provenance:
      return WorkloadClass::P3_ClientAcrossRounds;
    case Workload::SchedulingPerf:
    case Workload::IncentiveTracking:
    case Workload::HyperparamTuning:
      return WorkloadClass::P4_MetadataHyperparams;
  }
  return WorkloadClass::P1_SingleOrAggregated;
}

std::optional<CacheKey> target_key(const NonTrainingRequest& req) {
  const RoundId r = req.scope_round;
  switch (req.cls) {
    case WorkloadClass::P1_SingleOrAggregated:
      return req.scope_client ? CacheKey::update(*req.scope_client, r) : CacheKey::aggregate(r);
    case WorkloadClass::P2_AllClientsPerRound:
    case WorkloadClass::P3_ClientAcrossRounds:
      if (req.scope_client) return CacheKey::update(*req.scope_client, r);
      return std::nullopt;
    case WorkloadClass::P4_MetadataHyperparams:
      if (req.scope_client) return CacheKey::metadata(*req.scope_client, r);
      return std::nullopt;
  }
  return std::nullopt;
}

std::vector<CacheKey> accessed_keys(const NonTrainingRequest& req, const CacheView& view) {
  if (auto key = target_key(req)) return {*key};
  const BlobKind kind = req.cls == WorkloadClass::P4_MetadataHyperparams ? BlobKind::Metadata
                                                                         : BlobKind::ModelUpdate;
  return view.catalog_round(req.scope_round, kind);
}

std::vector<CacheKey> execution_keys(const NonTrainingRequest& req, const CacheView& view,
                                     std::uint32_t metadata_window) {
  const RoundId r = req.scope_round;
  switch (req.workload) {
    case Workload::Inference:
    case Workload::Eval:
      return accessed_keys(req, view);
    case Workload::MaliciousFilter:
    case Workload::Contribution:
    case Workload::Clustering:
    case Workload::CosineSimilarity:
    case Workload::Personalization:
    case Workload::SchedulingClustered:
      return view.catalog_round(r, BlobKind::ModelUpdate);
    case Workload::Debugging:
    case Workload::Provenance: {
      std::vector<CacheKey> keys = accessed_keys(req, view);
      if (auto prev = r.prev(); prev && req.scope_client) {
        auto key = CacheKey::update(*req.scope_client, *prev);
        if (view.in_catalog(key)) keys.insert(keys.begin(), key);
      }
      return keys;
    }
    case Workload::SchedulingPerf:
      return view.catalog_round(r, BlobKind::Metadata);
    case Workload::IncentiveTracking:
    case Workload::HyperparamTuning: {
      std::vector<CacheKey> keys;
      const std::uint32_t first = r.value() + 1 > metadata_window ? r.value() + 1 - metadata_window : 0;
      for (std::uint32_t x = first; x <= r.value(); ++x) {
        auto round_keys = view.catalog_round(RoundId(x), BlobKind::Metadata);
        keys.insert(keys.end(), round_keys.begin(), round_keys.end());
      }
      return keys;
    }
  }
  return {};
}

bool PolicyDecision::disjoint() const {
  auto meets = [](const std::set<CacheKey>& a, const std::set<CacheKey>& b) {
    return std::any_of(a.begin(), a.end(), [&b](const CacheKey& k) { return b.count(k) != 0; });
  };
  return !meets(cache_now, evict) && !meets(prefetch, evict) && !meets(cache_now, prefetch);
}

// ---------------------------------------------------------------------------
// Tailored policies

PolicyDecision TailoredPolicy::reconcile(const std::vector<const TailoredPolicy*>& policies,
                                         std::set<CacheKey> cache_now, const CacheView& view) {
  PolicyDecision d;
  std::set<CacheKey> wanted;
  for (const auto* p : policies) wanted.merge(p->wanted(view));
  for (const auto& key : wanted)
    if (!cache_now.count(key) && !view.is_resident(key)) d.prefetch.insert(key);
  for (BlobKind kind : {BlobKind::ModelUpdate, BlobKind::AggregatedModel, BlobKind::Metadata}) {
    const bool managed = std::any_of(policies.begin(), policies.end(),
                                     [kind](const TailoredPolicy* p) { return p->manages(kind); });
    if (!managed) continue;
    for (const auto& key : view.resident_keys(kind))
      if (!wanted.count(key) && !cache_now.count(key)) d.evict.insert(key);
  }
  d.cache_now = std::move(cache_now);
  return d;
}

PolicyDecision TailoredPolicy::on_ingest(const CacheKey& key, const CacheView& view) {
  note_ingest(key);
  PolicyDecision d = reconcile({this}, {}, view);
  if (d.prefetch.erase(key)) d.cache_now.insert(key);
  return d;
}

PolicyDecision TailoredPolicy::on_request(const NonTrainingRequest& req, bool /*hit*/,
                                          const CacheView& view) {
  note_request(req);
  PolicyDecision d = reconcile({this}, required(req, view), view);
  d.reserved = reservations(req, view);
  return d;
}

namespace {

void add_round(std::set<CacheKey>& out, const CacheView& view, RoundId round, BlobKind kind) {
  for (auto& key : view.catalog_round(round, kind)) out.insert(std::move(key));
}

}  // namespace

void P1Policy::note_request(const NonTrainingRequest& req) {
  active_ = true;
  last_target_ = target_key(req);
}

std::set<CacheKey> P1Policy::wanted(const CacheView& view) const {
  std::set<CacheKey> keys;
  if (!active_) return keys;
  if (last_target_ && view.in_catalog(*last_target_)) keys.insert(*last_target_);
  for (RoundId r : view.recent_rounds(BlobKind::AggregatedModel, 2))
    add_round(keys, view, r, BlobKind::AggregatedModel);
  return keys;
}

std::set<CacheKey> P1Policy::required(const NonTrainingRequest& req, const CacheView& view) const {
  auto key = target_key(req);
  if (key && view.in_catalog(*key)) return {*key};
  return {};
}

void P2Policy::note_request(const NonTrainingRequest& req) { current_ = req.scope_round; }

std::set<CacheKey> P2Policy::wanted(const CacheView& view) const {
  std::set<CacheKey> keys;
  if (!current_) return keys;
  add_round(keys, view, *current_, BlobKind::ModelUpdate);
  add_round(keys, view, current_->next(), BlobKind::ModelUpdate);
  for (RoundId latest : view.recent_rounds(BlobKind::ModelUpdate, 1))
    add_round(keys, view, latest, BlobKind::ModelUpdate);
  return keys;
}

std::set<CacheKey> P2Policy::required(const NonTrainingRequest& req, const CacheView& view) const {
  std::set<CacheKey> keys;
  add_round(keys, view, req.scope_round, BlobKind::ModelUpdate);
  return keys;
}

std::vector<Reservation> P2Policy::reservations(const NonTrainingRequest& req,
                                                const CacheView& view) const {
  const RoundId next = req.scope_round.next();
  if (!view.catalog_round(next, BlobKind::ModelUpdate).empty()) return {};
  return {Reservation{next, BlobKind::ModelUpdate, std::nullopt}};
}

void P3Policy::note_request(const NonTrainingRequest& req) {
  if (req.scope_client) tracked_.insert_or_assign(*req.scope_client, req.scope_round);
}

std::set<CacheKey> P3Policy::wanted(const CacheView& view) const {
  std::set<CacheKey> keys;
  for (const auto& [client, round] : tracked_) {
    std::vector<RoundId> window{round, round.next()};
    if (auto prev = round.prev()) window.push_back(*prev);
    for (RoundId r : window) {
      auto key = CacheKey::update(client, r);
      if (view.in_catalog(key)) keys.insert(std::move(key));
    }
  }
  return keys;
}

std::set<CacheKey> P3Policy::required(const NonTrainingRequest& req, const CacheView& view) const {
  if (!req.scope_client) return {};
  auto key = CacheKey::update(*req.scope_client, req.scope_round);
  if (!view.in_catalog(key)) return {};
  return {key};
}

std::vector<Reservation> P3Policy::reservations(const NonTrainingRequest& req,
                                                const CacheView& view) const {
  if (!req.scope_client) return {};
  const RoundId next = req.scope_round.next();
  if (view.in_catalog(CacheKey::update(*req.scope_client, next))) return {};
  return {Reservation{next, BlobKind::ModelUpdate, req.scope_client}};
}

std::set<CacheKey> P4Policy::wanted(const CacheView& view) const {
  std::set<CacheKey> keys;
  for (RoundId r : view.recent_rounds(BlobKind::Metadata, window_))
    add_round(keys, view, r, BlobKind::Metadata);
  return keys;
}

// ---------------------------------------------------------------------------
// Router

PolicyRouter::PolicyRouter(Mode mode, std::uint32_t p4_window, std::uint64_t seed)
    : mode_(mode), p4_(p4_window), rng_(seed) {}

std::vector<const TailoredPolicy*> PolicyRouter::all() const { return {&p1_, &p2_, &p3_, &p4_}; }

TailoredPolicy& PolicyRouter::route(const NonTrainingRequest& req) {
  WorkloadClass cls = classify_workload(req.workload);
  if (mode_ == Mode::Random) cls = static_cast<WorkloadClass>(rng_() % 4);
  last_route_ = cls;
  switch (cls) {
    case WorkloadClass::P1_SingleOrAggregated: return p1_;
    case WorkloadClass::P2_AllClientsPerRound: return p2_;
    case WorkloadClass::P3_ClientAcrossRounds: return p3_;
    case WorkloadClass::P4_MetadataHyperparams: return p4_;
  }
  return p1_;
}

void PolicyRouter::observe(const NonTrainingRequest& req) {
  if (mode_ == Mode::Auto) route(req).note_request(req);
}

PolicyDecision PolicyRouter::on_request(const NonTrainingRequest& req, bool /*hit*/,
                                        const CacheView& view) {
  TailoredPolicy& policy = route(req);
  policy.note_request(req);
  PolicyDecision d = TailoredPolicy::reconcile(all(), policy.required(req, view), view);
  d.reserved = policy.reservations(req, view);
  return d;
}

PolicyDecision PolicyRouter::on_ingest(const CacheKey& key, const CacheView& view) {
  for (TailoredPolicy* p : {static_cast<TailoredPolicy*>(&p1_), static_cast<TailoredPolicy*>(&p2_),
                            static_cast<TailoredPolicy*>(&p3_), static_cast<TailoredPolicy*>(&p4_)})
    p->note_ingest(key);
  PolicyDecision d = TailoredPolicy::reconcile(all(), {}, view);
  if (d.prefetch.erase(key)) d.cache_now.insert(key);
  return d;
}

// ---------------------------------------------------------------------------
// Reactive baselines

PolicyDecision ReactivePolicy::on_request(const NonTrainingRequest& req, bool /*hit*/,
                                          const CacheView& view) {
  PolicyDecision d;
  for (const auto& key : accessed_keys(req, view)) {
    if (!view.in_catalog(key)) continue;
    if (contains(key) && view.is_resident(key)) {
      touch(key);
      continue;
    }
    if (contains(key)) erase(key);  // lost behind our back (fault)
    insert(key);
    d.cache_now.insert(key);
  }
  while (tracked() > capacity_) {
    CacheKey v = victim();
    erase(v);
    d.cache_now.erase(v);
    d.evict.insert(std::move(v));
  }
  return d;
}

void LruPolicy::touch(const CacheKey& key) {
  order_.splice(order_.begin(), order_, index_.at(key));
}

void LruPolicy::insert(const CacheKey& key) {
  order_.push_front(key);
  index_[key] = order_.begin();
}

void LruPolicy::erase(const CacheKey& key) {
  auto it = index_.find(key);
  if (it == index_.end()) return;
  order_.erase(it->second);
  index_.erase(it);
}

void LfuPolicy::touch(const CacheKey& key) {
  auto& [freq, stamp] = entries_.at(key);
  heap_.erase({freq, stamp, key});
  ++freq;
  stamp = ++clock_;
  heap_.insert({freq, stamp, key});
}

void LfuPolicy::insert(const CacheKey& key) {
  entries_[key] = {1, ++clock_};
  heap_.insert({1, clock_, key});
}

void LfuPolicy::erase(const CacheKey& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return;
  heap_.erase({it->second.first, it->second.second, key});
  entries_.erase(it);
}

void FifoPolicy::insert(const CacheKey& key) {
  order_.push_back(key);
  index_[key] = std::prev(order_.end());
}

void FifoPolicy::erase(const CacheKey& key) {
  auto it = index_.find(key);
  if (it == index_.end()) return;
  order_.erase(it->second);
  index_.erase(it);
}

// ---------------------------------------------------------------------------

std::unique_ptr<CachePolicy> make_policy(std::string_view name, const PolicyOptions& options) {
  auto tailored = [&](WorkloadClass cls, std::string label) -> std::unique_ptr<CachePolicy> {
    switch (cls) {
      case WorkloadClass::P1_SingleOrAggregated: return std::make_unique<P1Policy>(std::move(label));
      case WorkloadClass::P2_AllClientsPerRound: return std::make_unique<P2Policy>(std::move(label));
      case WorkloadClass::P3_ClientAcrossRounds: return std::make_unique<P3Policy>(std::move(label));
      case WorkloadClass::P4_MetadataHyperparams:
        return std::make_unique<P4Policy>(options.p4_window, std::move(label));
    }
    return nullptr;
  };
  if (name == "p1" || name == "p2" || name == "p3" || name == "p4")
    return tailored(parse_workload_class(name), std::string(name));
  if (name.starts_with("static:")) {
    const auto cls = parse_workload_class(name.substr(7));
    std::string label = "static:" + std::string(to_string(cls));
    std::transform(label.begin(), label.end(), label.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return tailored(cls, std::move(label));
  }
  if (name == "auto") return std::make_unique<PolicyRouter>(PolicyRouter::Mode::Auto, options.p4_window);
  if (name == "random")
    return std::make_unique<PolicyRouter>(PolicyRouter::Mode::Random, options.p4_window, options.seed);
  if (name == "lru") return std::make_unique<LruPolicy>(options.baseline_capacity_entries);
  if (name == "lfu") return std::make_unique<LfuPolicy>(options.baseline_capacity_entries);
  if (name == "fifo") return std::make_unique<FifoPolicy>(options.baseline_capacity_entries);
  throw Error(Errc::ConfigError, "unknown policy '" + std::string(name) + "'");
}

std::size_t baseline_capacity_entries(std::uint64_t capacity_bytes, std::uint64_t mean_blob_bytes) {
  if (mean_blob_bytes == 0) return 1;
  return std::max<std::size_t>(1, capacity_bytes / mean_blob_bytes);
}

}  // namespace flstore
