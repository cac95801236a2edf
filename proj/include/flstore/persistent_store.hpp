#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>

#include "flstore/types.hpp"

namespace flstore {

struct StoreStats {
  std::uint64_t puts = 0;
  std::uint64_t gets = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
};

namespace codec {

// Little-endian, length-prefixed weight vector, then size_bytes, then the
// canonical (sorted-key) JSON encoding of the metadata record.
std::string encode_blob(const BlobRecord& blob);
BlobRecord decode_blob(const CacheKey& key, std::string_view bytes);

std::string canonical_metadata_json(const MetadataRecord& meta);
MetadataRecord parse_metadata_json(std::string_view text);

// Client ids are percent-encoded so that '.' only ever separates the kind
// suffix in file names.
std::string encode_path_component(std::string_view text);
std::string decode_path_component(std::string_view text);

}  // namespace codec

// Cold-data repository. Every blob is written under
//   <root>/<round>/<client>.<kind>       binary blob
//   <root>/<round>/<client>.<kind>.json  sidecar (key + size)
// Writes go through a bounded queue drained by one background thread; get()
// and list() also see writes that are still queued.
class PersistentStore {
 public:
  explicit PersistentStore(std::filesystem::path root, std::size_t queue_depth = 1024);
  ~PersistentStore();

  PersistentStore(const PersistentStore&) = delete;
  PersistentStore& operator=(const PersistentStore&) = delete;

  // Blocks while the queue is full. Rethrows a pending IoError from the
  // writer thread.
  void put(const CacheKey& key, BlobRecord blob);
  std::optional<BlobRecord> get(const CacheKey& key) const;
  std::set<CacheKey> list(RoundId round) const;
  // Barrier: returns once every put issued before the call is on disk.
  void flush();

  StoreStats stats() const;
  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path blob_path(const CacheKey& key) const;

 private:
  struct Pending {
    CacheKey key;
    std::shared_ptr<const BlobRecord> blob;
  };

  void writer_loop();
  void write_to_disk(const BlobRecord& blob) const;
  void rethrow_writer_error_locked();

  std::filesystem::path root_;
  std::size_t queue_depth_;

  mutable std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::condition_variable drained_;
  std::deque<Pending> queue_;
  std::unordered_map<CacheKey, std::shared_ptr<const BlobRecord>> in_flight_;
  bool writing_ = false;
  bool stopping_ = false;
  std::exception_ptr writer_error_;

  mutable std::atomic<std::uint64_t> puts_{0};
  mutable std::atomic<std::uint64_t> gets_{0};
  mutable std::atomic<std::uint64_t> bytes_in_{0};
  mutable std::atomic<std::uint64_t> bytes_out_{0};

  std::thread writer_;
};

}  // namespace flstore
