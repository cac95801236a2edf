#include <gtest/gtest.h>

#include <random>
#include <unordered_set>

#include "flstore/policy.hpp"
#include "support.hpp"

using namespace flstore;
using flstore::test::request;

TEST(Request, P3WithoutClientIsRejected) {
  auto r = request("r", Workload::Debugging, 3);
  try {
    validate_request(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingScopeClient);
  }
}

TEST(Request, SchedulingPerfIsP4) {
  auto r = request("r", Workload::SchedulingPerf, 3, "c0001");
  EXPECT_EQ(r.cls, WorkloadClass::P4_MetadataHyperparams);
  EXPECT_NO_THROW(validate_request(r));
}

TEST(Request, CosineUnderP3IsClassMismatch) {
  auto r = request("r", Workload::CosineSimilarity, 3, "c0001");
  r.cls = WorkloadClass::P3_ClientAcrossRounds;
  try {
    validate_request(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ClassMismatch);
  }
}

TEST(Taxonomy, EveryWorkloadHasItsTableClass) {
  using C = WorkloadClass;
  const std::pair<Workload, C> table[] = {
      {Workload::Inference, C::P1_SingleOrAggregated},
      {Workload::Eval, C::P1_SingleOrAggregated},
      {Workload::MaliciousFilter, C::P2_AllClientsPerRound},
      {Workload::Contribution, C::P2_AllClientsPerRound},
      {Workload::Clustering, C::P2_AllClientsPerRound},
      {Workload::CosineSimilarity, C::P2_AllClientsPerRound},
      {Workload::Personalization, C::P2_AllClientsPerRound},
      {Workload::SchedulingClustered, C::P2_AllClientsPerRound},
      {Workload::Debugging, C::P3_ClientAcrossRounds},
      {Workload::Provenance, C::P3_ClientAcrossRounds},
      {Workload::SchedulingPerf, C::P4_MetadataHyperparams},
      {Workload::IncentiveTracking, C::P4_MetadataHyperparams},
      {Workload::HyperparamTuning, C::P4_MetadataHyperparams},
  };
  ASSERT_EQ(std::size(table), std::size(kAllWorkloads));
  for (auto [w, c] : table) EXPECT_EQ(classify_workload(w), c) << to_string(w);
}

TEST(Taxonomy, NamesRoundTrip) {
  for (auto w : kAllWorkloads) EXPECT_EQ(parse_workload(to_string(w)), w);
  for (auto k : {BlobKind::ModelUpdate, BlobKind::AggregatedModel, BlobKind::Metadata})
    EXPECT_EQ(parse_blob_kind(to_string(k)), k);
  EXPECT_EQ(parse_workload_class("p3"), WorkloadClass::P3_ClientAcrossRounds);
  EXPECT_THROW(parse_workload("Nope"), Error);
}

TEST(CacheKey, OrderedByRoundFirst) {
  auto a = CacheKey::update(ClientId("z"), RoundId(1));
  auto b = CacheKey::update(ClientId("a"), RoundId(2));
  EXPECT_LT(a, b);
  EXPECT_EQ(a, CacheKey::update(ClientId("z"), RoundId(1)));
  EXPECT_NE(a, CacheKey::metadata(ClientId("z"), RoundId(1)));
}

// (c, r, k) equal only to itself over a million random keys; the hash is a
// pure function of the fields.
TEST(CacheKey, MillionRandomKeysCollideOnlyWithThemselves) {
  std::mt19937_64 rng(42);
  std::unordered_set<CacheKey> keys;
  std::set<std::tuple<std::string, std::uint32_t, int>> fields;
  for (int i = 0; i < 1'000'000; ++i) {
    const std::string c = "c" + std::to_string(rng() % 5000);
    const auto r = static_cast<std::uint32_t>(rng() % 200);
    const int k = static_cast<int>(rng() % 3);
    CacheKey key{ClientId(c), RoundId(r), static_cast<BlobKind>(k)};
    EXPECT_EQ(std::hash<CacheKey>{}(key), std::hash<CacheKey>{}(CacheKey{ClientId(c), RoundId(r), key.kind}));
    keys.insert(key);
    fields.insert({c, r, k});
  }
  EXPECT_EQ(keys.size(), fields.size());
}

TEST(RoundId, PrevOfZeroIsEmpty) {
  EXPECT_FALSE(RoundId(0).prev());
  EXPECT_EQ(RoundId(4).prev()->value(), 3u);
  EXPECT_EQ(RoundId(4).next().value(), 5u);
}

TEST(Errors, CodesHaveNames) {
  EXPECT_EQ(to_string(Errc::DataUnavailable), "DataUnavailable");
  EXPECT_EQ(to_string(Errc::CapacityExceeded), "CapacityExceeded");
}
