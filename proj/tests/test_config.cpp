#include <gtest/gtest.h>

#include "flstore/config.hpp"
#include "flstore/trace.hpp"
#include "support.hpp"

using namespace flstore;

namespace {

std::optional<Errc> apply_error(std::string_view text) {
  Config cfg;
  try {
    apply_config_text(cfg, text);
    cfg.validate();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  Config cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.capacity_bytes(), 10 * kGiB);
  EXPECT_EQ(cfg.effective_capacity_bytes() / cfg.job.model_size_bytes, 99u);
}

TEST(Config, TextSetsFields) {
  Config cfg;
  apply_config_text(cfg,
                    "# experiment\n"
                    "policy = p3   # trailing comment\n"
                    "  rounds=64\n"
                    "\n"
                    "cost.rtt_s = 0.05\n"
                    "compute.Clustering = 2.5\n"
                    "store_root = /tmp/x y\n");
  EXPECT_EQ(cfg.policy, "p3");
  EXPECT_EQ(cfg.job.rounds, 64u);
  EXPECT_DOUBLE_EQ(cfg.cost.rtt_s, 0.05);
  EXPECT_DOUBLE_EQ(cfg.compute.at(Workload::Clustering), 2.5);
  EXPECT_EQ(cfg.store_root, "/tmp/x y");
}

TEST(Config, TextRoundTrip) {
  Config cfg;
  cfg.policy = "lfu";
  cfg.replicas = 1;
  cfg.cost.bandwidth_gbps = 0.3;
  cfg.compute.seconds[Workload::Eval] = 0.1 + 0.2;
  cfg.job.seed = 12345678901ull;
  Config back;
  apply_config_text(back, config_to_text(cfg));
  EXPECT_EQ(config_to_text(back), config_to_text(cfg));
  EXPECT_EQ(back.cost.bandwidth_gbps, 0.3);
  EXPECT_EQ(back.compute.at(Workload::Eval), 0.1 + 0.2);
  EXPECT_EQ(back.job.seed, 12345678901ull);
  // Every key is printed.
  const auto text = config_to_text(cfg);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), config_keys().size());
}

TEST(Config, RejectsBadInput) {
  EXPECT_EQ(apply_error("colour = blue"), Errc::ConfigError);
  EXPECT_EQ(apply_error("rounds"), Errc::ConfigError);
  EXPECT_EQ(apply_error("rounds = ten"), Errc::ConfigError);
  EXPECT_EQ(apply_error("rounds = -1"), Errc::ConfigError);
  EXPECT_EQ(apply_error("cost.rtt_s = nan"), Errc::ConfigError);
  EXPECT_EQ(apply_error("compute.Sleeping = 1"), Errc::ConfigError);
  EXPECT_EQ(apply_error("policy = mru"), Errc::ConfigError);
  EXPECT_EQ(apply_error("capacity_gib = 0"), Errc::ConfigError);
  EXPECT_EQ(apply_error("effective_capacity_gib = 11"), Errc::ConfigError);
  EXPECT_EQ(apply_error("p4_window = 0"), Errc::ConfigError);
  EXPECT_EQ(apply_error("ping_interval_s = 0"), Errc::ConfigError);
  EXPECT_EQ(apply_error("compute.Eval = -1"), Errc::ConfigError);
  EXPECT_EQ(apply_error("per_round = 300"), Errc::InvalidArgument);
  EXPECT_EQ(apply_error("replicas = 0\nzipf_s = 1.5"), std::nullopt);
}

TEST(Config, LoadFromFile) {
  test::TempDir dir;
  write_file(dir.path() / "a.conf", "replicas = 2\nseed = 9\n");
  auto cfg = load_config((dir.path() / "a.conf").string());
  EXPECT_EQ(cfg.replicas, 2u);
  EXPECT_EQ(cfg.job.seed, 9u);
  try {
    load_config((dir.path() / "missing.conf").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ConfigError);
  }
  write_file(dir.path() / "b.conf", "per_round = 0\npool_size = 0\n");
  EXPECT_THROW(load_config((dir.path() / "b.conf").string()), Error);
}

TEST(Config, ShippedDefaultFileLoads) {
  const auto path = std::filesystem::path(FLSTORE_SOURCE_DIR) / "configs" / "default.conf";
  auto cfg = load_config(path.string());
  EXPECT_EQ(config_to_text(cfg), config_to_text(Config{}));
}
