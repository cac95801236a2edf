#include "flstore/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

#include "flstore/trace.hpp"

namespace flstore {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(Errc::ConfigError, "bad value for " + std::string(key) + ": '" + std::string(value) + "'");
}

template <class T>
T parse_int(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v);
  return out;
}

using Setter = std::function<void(Config&, std::string_view, std::string_view)>;
using Getter = std::function<std::string(const Config&)>;

struct Field {
  Setter set;
  Getter get;
};

template <class T>
Field int_field(T Config::*m) {
  return {[m](Config& c, std::string_view k, std::string_view v) { c.*m = parse_int<T>(k, v); },
          [m](const Config& c) { return std::to_string(c.*m); }};
}

template <class T>
Field job_int(T JobSpec::*m) {
  return {[m](Config& c, std::string_view k, std::string_view v) { c.job.*m = parse_int<T>(k, v); },
          [m](const Config& c) { return std::to_string(c.job.*m); }};
}

Field dbl_field(double Config::*m) {
  return {[m](Config& c, std::string_view k, std::string_view v) { c.*m = parse_double(k, v); },
          [m](const Config& c) { return format_double(c.*m); }};
}

Field job_dbl(double JobSpec::*m) {
  return {[m](Config& c, std::string_view k, std::string_view v) { c.job.*m = parse_double(k, v); },
          [m](const Config& c) { return format_double(c.job.*m); }};
}

Field cost_dbl(double CostParams::*m) {
  return {[m](Config& c, std::string_view k, std::string_view v) { c.cost.*m = parse_double(k, v); },
          [m](const Config& c) { return format_double(c.cost.*m); }};
}

Field str_field(std::string Config::*m) {
  return {[m](Config& c, std::string_view, std::string_view v) { c.*m = std::string(v); },
          [m](const Config& c) { return c.*m; }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const auto* table = [] {
    auto* t = new std::map<std::string, Field, std::less<>>{
        {"policy", str_field(&Config::policy)},
        {"pool_size", job_int(&JobSpec::pool_size)},
        {"per_round", job_int(&JobSpec::per_round)},
        {"rounds", job_int(&JobSpec::rounds)},
        {"round_origin", job_int(&JobSpec::round_origin)},
        {"model_size_bytes", job_int(&JobSpec::model_size_bytes)},
        {"metadata_size_bytes", job_int(&JobSpec::metadata_size_bytes)},
        {"seed", job_int(&JobSpec::seed)},
        {"dim", job_int(&JobSpec::dim)},
        {"round_interval_s", job_dbl(&JobSpec::round_interval_s)},
        {"request_spacing_s", job_dbl(&JobSpec::request_spacing_s)},
        {"capacity_gib", dbl_field(&Config::capacity_gib)},
        {"effective_capacity_gib", dbl_field(&Config::effective_capacity_gib)},
        {"replicas", int_field(&Config::replicas)},
        {"max_primaries", int_field(&Config::max_primaries)},
        {"p4_window", int_field(&Config::p4_window)},
        {"baseline_capacity_entries", int_field(&Config::baseline_capacity_entries)},
        {"reroute_timeout_s", dbl_field(&Config::reroute_timeout_s)},
        {"dispatch_s", dbl_field(&Config::dispatch_s)},
        {"cold_start_s", dbl_field(&Config::cold_start_s)},
        {"ping_interval_s", dbl_field(&Config::ping_interval_s)},
        {"keepalive_s", dbl_field(&Config::keepalive_s)},
        {"zipf_s", dbl_field(&Config::zipf_s)},
        {"fault_rate_per_hour", dbl_field(&Config::fault_rate_per_hour)},
        {"parallel", int_field(&Config::parallel)},
        {"store_root", str_field(&Config::store_root)},
        {"store_queue_depth", int_field(&Config::store_queue_depth)},
        {"out", str_field(&Config::out)},
        {"cost.egress_per_gb", cost_dbl(&CostParams::egress_per_gb)},
        {"cost.fn_compute_per_gb_s", cost_dbl(&CostParams::fn_compute_per_gb_s)},
        {"cost.fn_memory_gb", cost_dbl(&CostParams::fn_memory_gb)},
        {"cost.cache_instance_per_hr", cost_dbl(&CostParams::cache_instance_per_hr)},
        {"cost.agg_instance_per_hr", cost_dbl(&CostParams::agg_instance_per_hr)},
        {"cost.objstore_get_per_req", cost_dbl(&CostParams::objstore_get_per_req)},
        {"cost.objstore_put_per_req", cost_dbl(&CostParams::objstore_put_per_req)},
        {"cost.bandwidth_gbps", cost_dbl(&CostParams::bandwidth_gbps)},
        {"cost.rtt_s", cost_dbl(&CostParams::rtt_s)},
        {"cost.cache_bandwidth_gbps", cost_dbl(&CostParams::cache_bandwidth_gbps)},
        {"cost.cache_rtt_s", cost_dbl(&CostParams::cache_rtt_s)},
        {"cost.ping_cost_per_fn_month", cost_dbl(&CostParams::ping_cost_per_fn_month)},
    };
    for (const auto& [w, s] : ComputeTable::defaults().seconds) {
      (void)s;
      const Workload wl = w;
      (*t)["compute." + std::string(to_string(wl))] = Field{
          [wl](Config& c, std::string_view k, std::string_view v) { c.compute.seconds[wl] = parse_double(k, v); },
          [wl](const Config& c) { return format_double(c.compute.at(wl)); }};
    }
    return t;
  }();
  return *table;
}

}  // namespace

void Config::validate() const {
  job.validate();
  cost.validate();
  compute.validate();
  make_policy(policy);  // throws ConfigError for unknown names
  if (!(capacity_gib > 0.0)) throw Error(Errc::ConfigError, "capacity_gib must be > 0");
  if (!(effective_capacity_gib > 0.0) || effective_capacity_gib > capacity_gib)
    throw Error(Errc::ConfigError, "effective_capacity_gib must be in (0, capacity_gib]");
  if (p4_window == 0) throw Error(Errc::ConfigError, "p4_window must be >= 1");
  for (double v : {reroute_timeout_s, dispatch_s, cold_start_s})
    if (!(v >= 0.0)) throw Error(Errc::ConfigError, "timings must be >= 0");
  if (!(ping_interval_s > 0.0) || !(keepalive_s > 0.0))
    throw Error(Errc::ConfigError, "ping_interval_s and keepalive_s must be > 0");
  if (!(zipf_s > 0.0)) throw Error(Errc::ConfigError, "zipf_s must be > 0");
  if (!(fault_rate_per_hour >= 0.0)) throw Error(Errc::ConfigError, "fault_rate_per_hour must be >= 0");
  if (store_queue_depth == 0) throw Error(Errc::ConfigError, "store_queue_depth must be >= 1");
  if (store_root.empty()) throw Error(Errc::ConfigError, "store_root is empty");
}

std::uint64_t Config::capacity_bytes() const {
  return static_cast<std::uint64_t>(std::llround(capacity_gib * static_cast<double>(kGiB)));
}

std::uint64_t Config::effective_capacity_bytes() const {
  return static_cast<std::uint64_t>(std::llround(effective_capacity_gib * static_cast<double>(kGiB)));
}

void set_config_value(Config& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  auto it = fields().find(key);
  if (it == fields().end()) throw Error(Errc::ConfigError, "unknown config key '" + std::string(key) + "'");
  it->second.set(cfg, key, value);
}

void apply_config_text(Config& cfg, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(Errc::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
    set_config_value(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
}

Config load_config(const std::string& path) {
  Config cfg;
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, std::string("cannot read config: ") + e.what());
  }
  apply_config_text(cfg, text);
  cfg.validate();
  return cfg;
}

std::string config_to_text(const Config& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields()) keys.push_back(key);
  return keys;
}

}  // namespace flstore
