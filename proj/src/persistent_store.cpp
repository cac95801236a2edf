#include "flstore/persistent_store.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace flstore {

namespace codec {
namespace {

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t read_u64(std::string_view bytes, std::size_t& pos) {
  if (pos + 8 > bytes.size()) throw Error(Errc::ParseError, "truncated blob");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

}  // namespace

std::string canonical_metadata_json(const MetadataRecord& meta) {
  // nlohmann::json objects are std::map backed, so keys come out sorted.
  nlohmann::json j;
  j["client"] = meta.client.str();
  j["round"] = meta.round.value();
  j["hyperparameters"] = meta.hyperparameters;
  j["perf"] = meta.perf;
  return j.dump();
}

MetadataRecord parse_metadata_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    MetadataRecord meta;
    meta.client = ClientId(j.at("client").get<std::string>());
    meta.round = RoundId(j.at("round").get<std::uint32_t>());
    meta.hyperparameters = j.at("hyperparameters").get<std::map<std::string, double>>();
    meta.perf = j.at("perf").get<std::map<std::string, double>>();
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("bad metadata json: ") + e.what());
  }
}

std::string encode_blob(const BlobRecord& blob) {
  std::string out;
  const std::string meta = canonical_metadata_json(blob.meta);
  out.reserve(24 + blob.weights.size() * 8 + meta.size());
  append_u64(out, blob.weights.size());
  for (double w : blob.weights) append_u64(out, std::bit_cast<std::uint64_t>(w));
  append_u64(out, blob.size_bytes);
  append_u64(out, meta.size());
  out += meta;
  return out;
}

BlobRecord decode_blob(const CacheKey& key, std::string_view bytes) {
  std::size_t pos = 0;
  BlobRecord blob{key, {}, 0, {}};
  const std::uint64_t n = read_u64(bytes, pos);
  if (n > (bytes.size() - pos) / 8) throw Error(Errc::ParseError, "truncated weight vector");
  blob.weights.resize(n);
  for (auto& w : blob.weights) w = std::bit_cast<double>(read_u64(bytes, pos));
  blob.size_bytes = read_u64(bytes, pos);
  const std::uint64_t meta_len = read_u64(bytes, pos);
  if (meta_len != bytes.size() - pos) throw Error(Errc::ParseError, "bad metadata length");
  blob.meta = parse_metadata_json(bytes.substr(pos));
  return blob;
}

std::string encode_path_component(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out;
}

std::string decode_path_component(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%' && i + 2 < text.size()) {
      out.push_back(static_cast<char>(std::stoi(std::string(text.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

}  // namespace codec

namespace fs = std::filesystem;

PersistentStore::PersistentStore(fs::path root, std::size_t queue_depth)
    : root_(std::move(root)), queue_depth_(queue_depth == 0 ? 1 : queue_depth) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(Errc::IoError, "cannot create store root " + root_.string() + ": " + ec.message());
  writer_ = std::thread([this] { writer_loop(); });
}

PersistentStore::~PersistentStore() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  not_empty_.notify_all();
  writer_.join();
}

fs::path PersistentStore::blob_path(const CacheKey& key) const {
  return root_ / std::to_string(key.round.value()) /
         (codec::encode_path_component(key.client.str()) + "." + std::string(to_string(key.kind)));
}

void PersistentStore::rethrow_writer_error_locked() {
  if (writer_error_) {
    auto err = writer_error_;
    writer_error_ = nullptr;
    std::rethrow_exception(err);
  }
}

void PersistentStore::put(const CacheKey& key, BlobRecord blob) {
  if (!(blob.key == key)) throw Error(Errc::InvalidArgument, "blob key does not match put key");
  validate_blob(blob);
  auto shared = std::make_shared<const BlobRecord>(std::move(blob));
  std::unique_lock lock(mu_);
  rethrow_writer_error_locked();
  not_full_.wait(lock, [this] { return queue_.size() < queue_depth_ || writer_error_; });
  rethrow_writer_error_locked();
  in_flight_[key] = shared;
  queue_.push_back({key, std::move(shared)});
  puts_.fetch_add(1, std::memory_order_relaxed);
  bytes_in_.fetch_add(queue_.back().blob->size_bytes, std::memory_order_relaxed);
  lock.unlock();
  not_empty_.notify_one();
}

void PersistentStore::write_to_disk(const BlobRecord& blob) const {
  const fs::path path = blob_path(blob.key);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(Errc::IoError, "mkdir " + path.parent_path().string() + ": " + ec.message());

  auto write_atomic = [](const fs::path& target, const std::string& data) {
    fs::path tmp = target;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(data.data(), static_cast<std::streamsize>(data.size()));
      if (!out) throw Error(Errc::IoError, "write failed: " + tmp.string());
    }
    std::error_code rec;
    fs::rename(tmp, target, rec);
    if (rec) throw Error(Errc::IoError, "rename " + tmp.string() + ": " + rec.message());
  };

  nlohmann::json sidecar;
  sidecar["client"] = blob.key.client.str();
  sidecar["round"] = blob.key.round.value();
  sidecar["kind"] = std::string(to_string(blob.key.kind));
  sidecar["size_bytes"] = blob.size_bytes;
  sidecar["weights"] = blob.weights.size();
  write_atomic(path, codec::encode_blob(blob));
  fs::path side = path;
  side += ".json";
  write_atomic(side, sidecar.dump());
}

void PersistentStore::writer_loop() {
  std::unique_lock lock(mu_);
  for (;;) {
    not_empty_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) {
      if (stopping_) return;
      continue;
    }
    Pending item = std::move(queue_.front());
    queue_.pop_front();
    writing_ = true;
    lock.unlock();
    not_full_.notify_one();

    std::exception_ptr err;
    try {
      write_to_disk(*item.blob);
    } catch (...) {
      err = std::current_exception();
    }

    lock.lock();
    writing_ = false;
    if (err) writer_error_ = err;
    auto it = in_flight_.find(item.key);
    // Keep the newer blob visible when the same key was re-put meanwhile.
    if (it != in_flight_.end() && it->second == item.blob) in_flight_.erase(it);
    if (queue_.empty()) drained_.notify_all();
    not_full_.notify_all();
  }
}

void PersistentStore::flush() {
  std::unique_lock lock(mu_);
  drained_.wait(lock, [this] { return queue_.empty() && !writing_; });
  rethrow_writer_error_locked();
}

std::optional<BlobRecord> PersistentStore::get(const CacheKey& key) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = in_flight_.find(key); it != in_flight_.end()) {
      gets_.fetch_add(1, std::memory_order_relaxed);
      bytes_out_.fetch_add(it->second->size_bytes, std::memory_order_relaxed);
      return *it->second;
    }
  }
  std::ifstream in(blob_path(key), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  BlobRecord blob = codec::decode_blob(key, buf.str());
  gets_.fetch_add(1, std::memory_order_relaxed);
  bytes_out_.fetch_add(blob.size_bytes, std::memory_order_relaxed);
  return blob;
}

std::set<CacheKey> PersistentStore::list(RoundId round) const {
  std::set<CacheKey> keys;
  {
    std::lock_guard lock(mu_);
    for (const auto& [key, blob] : in_flight_)
      if (key.round == round) keys.insert(key);
  }
  const fs::path dir = root_ / std::to_string(round.value());
  std::error_code ec;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    const std::string name = it->path().filename().string();
    if (name.ends_with(".json") || name.ends_with(".tmp")) continue;
    const auto dot = name.rfind('.');
    if (dot == std::string::npos) continue;
    keys.insert(CacheKey{ClientId(codec::decode_path_component(name.substr(0, dot))), round,
                         parse_blob_kind(name.substr(dot + 1))});
  }
  return keys;
}

StoreStats PersistentStore::stats() const {
  return {puts_.load(), gets_.load(), bytes_in_.load(), bytes_out_.load()};
}

}  // namespace flstore
