#pragma once

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "flstore/cache_engine.hpp"
#include "flstore/request_tracker.hpp"

namespace flstore::test {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("flstore-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline BlobRecord blob(const CacheKey& key, std::uint64_t size = kMiB, std::vector<double> w = {1.0, 2.0, 3.0}) {
  BlobRecord b{key, std::move(w), size, {}};
  b.meta.round = key.round;
  b.meta.client = key.client;
  return b;
}

inline BlobRecord update(const std::string& c, std::uint32_t r, std::uint64_t size = kMiB) {
  return blob(CacheKey::update(ClientId(c), RoundId(r)), size,
              kernels::synthetic_weights(0, CacheKey::update(ClientId(c), RoundId(r)), 8));
}

inline BlobRecord metadata(const std::string& c, std::uint32_t r, double score = 0.5) {
  BlobRecord b = blob(CacheKey::metadata(ClientId(c), RoundId(r)), 4096, {});
  b.meta.perf["accuracy"] = score;
  b.meta.perf["contribution"] = score;
  b.meta.hyperparameters["learning_rate"] = 0.01;
  return b;
}

inline NonTrainingRequest request(const std::string& id, Workload w, std::uint32_t round,
                                  std::optional<std::string> client = std::nullopt) {
  NonTrainingRequest r;
  r.request_id = id;
  r.workload = w;
  r.cls = classify_workload(w);
  r.scope_round = RoundId(round);
  if (client) r.scope_client = ClientId(*client);
  return r;
}

// Store, pool, engine and tracker over a temp dir.
struct Rig {
  TempDir dir;
  PersistentStore store;
  FunctionPool pool;
  CacheEngine engine;
  RequestTracker tracker;

  explicit Rig(std::string_view policy = "auto", EngineOptions eo = {}, PoolOptions po = {}, TrackerOptions to = {},
               PolicyOptions pol = {})
      : store(dir.path()), pool(po), engine(store, pool, make_policy(policy, pol), eo), tracker(engine, to) {}
};

}  // namespace flstore::test
