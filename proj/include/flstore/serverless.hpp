#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "flstore/kernels.hpp"
#include "flstore/types.hpp"

namespace flstore {

using BlobPtr = std::shared_ptr<const BlobRecord>;

// Snapshot of one emulated function instance.
struct FunctionInstance {
  FunctionId id;
  std::uint64_t capacity_bytes = 0;
  std::uint64_t used_bytes = 0;
  std::map<CacheKey, BlobPtr> resident;
  std::vector<FunctionId> replica_group;
  bool alive = true;
  double last_ping = 0.0;
  double busy_until = 0.0;
};

struct ExecResult {
  std::string request_id;
  FunctionId fn{""};
  kernels::KernelOutput output;
  double compute_s = 0.0;  // wall clock spent in the kernel
  std::uint64_t bytes_touched = 0;
};

struct PoolOptions {
  std::uint64_t capacity_bytes = 10 * kGiB;
  double keepalive_s = 60.0;
};

// Thread-safe pool. Instances are never erased: a reclaimed instance stays
// known (alive=false) so that stale placements can be told apart from typos.
// Operations on one instance are serialised by that instance's mutex.
class FunctionPool {
 public:
  explicit FunctionPool(PoolOptions options = {});

  FunctionId spawn(std::optional<std::uint64_t> capacity_bytes = std::nullopt, double now = 0.0);
  // New instance with the same capacity and resident set.
  FunctionId clone(const FunctionId& fn, double now = 0.0);

  void store(const FunctionId& fn, BlobPtr blob);
  void store(const FunctionId& fn, BlobRecord blob) {
    store(fn, std::make_shared<const BlobRecord>(std::move(blob)));
  }
  void evict(const FunctionId& fn, const CacheKey& key);

  // Runs the request's kernel over `keys`, all of which must be resident.
  ExecResult execute(const FunctionId& fn, const NonTrainingRequest& req,
                     const std::vector<CacheKey>& keys) const;
  // Partial execution for requests whose data spans instances: hands back the
  // resident subset of `keys` for the tracker's reducer.
  std::vector<BlobPtr> collect(const FunctionId& fn, const std::vector<CacheKey>& keys) const;

  bool ping(const FunctionId& fn, double now);
  void reclaim(const FunctionId& fn);
  // Provider side: reclaims every live instance not pinged for longer than
  // the keep-alive window.
  std::vector<FunctionId> reclaim_idle(double now);

  // Serial execution slot: the start time of a job of `duration` seconds that
  // becomes ready at `ready`.
  double reserve(const FunctionId& fn, double ready, double duration);
  double busy_until(const FunctionId& fn) const;

  void set_replica_group(const FunctionId& fn, std::vector<FunctionId> group);

  bool known(const FunctionId& fn) const;
  bool alive(const FunctionId& fn) const;
  bool has(const FunctionId& fn, const CacheKey& key) const;
  std::uint64_t used_bytes(const FunctionId& fn) const;
  std::uint64_t free_bytes(const FunctionId& fn) const;
  std::uint64_t capacity_bytes(const FunctionId& fn) const;
  std::vector<CacheKey> resident_keys(const FunctionId& fn) const;
  FunctionInstance snapshot(const FunctionId& fn) const;

  std::vector<FunctionId> instances() const;
  std::vector<FunctionId> alive_instances() const;
  std::size_t alive_count() const;
  std::size_t spawned() const;
  const PoolOptions& options() const noexcept { return options_; }

 private:
  struct Slot {
    mutable std::mutex mu;
    FunctionInstance state;
  };

  Slot& slot(const FunctionId& fn) const;
  FunctionId next_id_locked();

  PoolOptions options_;
  mutable std::shared_mutex mu_;
  std::map<FunctionId, std::unique_ptr<Slot>> slots_;
  std::uint64_t counter_ = 0;
  // Ids of live instances. Leaf lock: taken last, under a slot mutex at most.
  mutable std::mutex live_mu_;
  std::set<FunctionId> live_;
};

}  // namespace flstore
