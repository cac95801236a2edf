#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flstore/job.hpp"
#include "flstore/metrics.hpp"

namespace flstore {

struct Config {
  std::string policy = "auto";
  JobSpec job;
  CostParams cost;
  ComputeTable compute = ComputeTable::defaults();
  double capacity_gib = 10.0;
  // Usable memory per function when counting functions for the untailored
  // footprint.
  double effective_capacity_gib = 8.2;
  std::uint32_t replicas = 3;
  std::size_t max_primaries = 0;  // 0: unbounded
  std::uint32_t p4_window = 10;
  std::size_t baseline_capacity_entries = 0;  // 0: capacity / mean blob size
  double reroute_timeout_s = 2.0;
  double dispatch_s = 0.002;
  double cold_start_s = 0.0;
  double ping_interval_s = 60.0;
  double keepalive_s = 60.0;
  double zipf_s = 1.0;
  double fault_rate_per_hour = 120.0;
  std::size_t parallel = 0;
  std::string store_root = "flstore-data";
  std::size_t store_queue_depth = 1024;
  std::string out = "report";

  void validate() const;
  std::uint64_t capacity_bytes() const;
  std::uint64_t effective_capacity_bytes() const;
};

// Sets one key; throws ConfigError for unknown keys or unparsable values.
void set_config_value(Config& cfg, std::string_view key, std::string_view value);
// Flat `key = value` lines; `#` starts a comment.
void apply_config_text(Config& cfg, std::string_view text);
Config load_config(const std::string& path);
std::string config_to_text(const Config& cfg);
std::vector<std::string> config_keys();

}  // namespace flstore
