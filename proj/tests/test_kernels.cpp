#include <gtest/gtest.h>

#include "flstore/kernels.hpp"
#include "oracles.hpp"

using namespace flstore;
using namespace flstore::kernels;

namespace {

std::vector<std::span<const double>> spans(const std::vector<std::vector<double>>& v) {
  return {v.begin(), v.end()};
}

std::vector<ClientUpdate> client_updates(const oracle::Instance& in) {
  std::vector<ClientUpdate> out;
  for (std::size_t j = 0; j < in.vectors.size(); ++j) out.push_back({ClientId(in.ids[j]), in.vectors[j]});
  return out;
}

}  // namespace

TEST(Cosine, Examples) {
  std::vector<double> a = {1, 2, 3}, b = {4, 5, 6};
  EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  // 32 / (sqrt(14) * sqrt(77))
  EXPECT_NEAR(cosine_similarity(a, b), 32.0 / std::sqrt(14.0 * 77.0), 1e-15);
  EXPECT_NEAR(cosine_similarity(a, b), 0.974631846, 1e-9);
}

TEST(Cosine, ZeroVectorThrows) {
  std::vector<double> z = {0, 0}, a = {1, 1};
  try {
    cosine_similarity(z, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroVector);
  }
}

TEST(Cosine, StaysInRange) {
  // Parallel vectors where rounding alone could push the ratio past 1.
  for (int i = 1; i < 200; ++i) {
    std::vector<double> a = {0.1 * i, 0.2, 0.3 / i}, b = {0.3 * i, 0.6, 0.9 / i}, c = {-0.3 * i, -0.6, -0.9 / i};
    EXPECT_LE(cosine_similarity(a, b), 1.0);
    EXPECT_GE(cosine_similarity(a, c), -1.0);
  }
}

TEST(FedAvg, Examples) {
  std::vector<double> one = {1, 1}, three = {3, 3};
  WeightedUpdate single[] = {{one, 4.0}};
  EXPECT_EQ(fedavg(single), one);
  WeightedUpdate same[] = {{three, 0.2}, {three, 7.0}};
  EXPECT_EQ(fedavg(same), three);
  WeightedUpdate mixed[] = {{one, 1.0}, {three, 3.0}};
  auto m = fedavg(mixed);
  EXPECT_DOUBLE_EQ(m[0], 2.5);
  EXPECT_DOUBLE_EQ(m[1], 2.5);
}

TEST(FedAvg, RejectsBadWeightsAndShapes) {
  std::vector<double> a = {1, 1}, b = {1};
  WeightedUpdate neg[] = {{a, -1.0}};
  EXPECT_THROW(fedavg(neg), Error);
  WeightedUpdate ragged[] = {{a, 1.0}, {b, 1.0}};
  EXPECT_THROW(fedavg(ragged), Error);
  EXPECT_THROW(fedavg({}), Error);
}

TEST(MaliciousFilter, Examples) {
  std::vector<double> v = {1, 2, 3};
  std::vector<ClientUpdate> same;
  for (int i = 0; i < 5; ++i) same.push_back({ClientId("c" + std::to_string(i)), v});
  EXPECT_TRUE(malicious_filter(same).empty());

  std::vector<std::vector<double>> w;
  for (int i = 0; i < 9; ++i) w.push_back({1.0 + 0.001 * i, 2.0, 3.0 - 0.001 * i});
  w.push_back({100.0, -100.0, 50.0});
  std::vector<ClientUpdate> ups;
  for (int i = 0; i < 10; ++i) ups.push_back({ClientId("c" + std::to_string(i)), w[i]});
  EXPECT_EQ(malicious_filter(ups), std::set<ClientId>{ClientId("c9")});

  std::vector<ClientUpdate> two = {{ClientId("a"), w[0]}, {ClientId("b"), w[9]}};
  EXPECT_TRUE(malicious_filter(two).empty());
}

TEST(KMeans, Examples) {
  std::vector<std::vector<double>> pts = {{0, 0}, {2, 0}, {0, 2}, {2, 2}};
  auto one = kmeans_cluster(spans(pts), 1);
  EXPECT_EQ(one.assignments, std::vector<std::size_t>(4, 0));
  EXPECT_DOUBLE_EQ(one.centroids[0][0], 1.0);
  EXPECT_DOUBLE_EQ(one.centroids[0][1], 1.0);

  auto each = kmeans_cluster(spans(pts), 4);
  EXPECT_EQ(std::set<std::size_t>(each.assignments.begin(), each.assignments.end()).size(), 4u);
  EXPECT_DOUBLE_EQ(each.objective.back(), 0.0);

  EXPECT_THROW(kmeans_cluster(spans(pts), 0), Error);
  EXPECT_THROW(kmeans_cluster(spans(pts), 5), Error);
}

// Two blobs 10 sigma apart separate perfectly.
TEST(KMeans, SeparatedBlobsArePure) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> pts;
  std::vector<int> truth;
  for (int i = 0; i < 40; ++i) {
    const double c = i % 2 ? 10.0 : 0.0;
    pts.push_back({c + g(rng) * 0.5, c + g(rng) * 0.5, g(rng) * 0.5});
    truth.push_back(i % 2);
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto km = kmeans_cluster(spans(pts), 2, 50, seed);
    for (std::size_t i = 0; i < pts.size(); ++i)
      EXPECT_EQ(km.assignments[i] == km.assignments[0], truth[i] == truth[0]);
  }
}

TEST(KMeans, DeterministicForSeed) {
  auto in = oracle::make_instance(9);
  auto a = kmeans_cluster(spans(in.vectors), 3, 50, 4);
  auto b = kmeans_cluster(spans(in.vectors), 3, 50, 4);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.objective, b.objective);
}

TEST(TopK, Examples) {
  std::vector<MetadataRecord> meta;
  for (auto [id, s] : std::vector<std::pair<std::string, double>>{{"c3", 0.9}, {"c1", 0.5}, {"c2", 0.7}}) {
    MetadataRecord m;
    m.client = ClientId(id);
    m.perf["availability"] = s;
    meta.push_back(m);
  }
  EXPECT_EQ(schedule_topk(meta, "availability", 10).size(), 3u);
  EXPECT_EQ(schedule_topk(meta, "availability", 2), (std::vector<ClientId>{ClientId("c3"), ClientId("c2")}));
  meta[1].perf["availability"] = 0.7;  // c1 ties c2 at the boundary
  EXPECT_EQ(schedule_topk(meta, "availability", 2), (std::vector<ClientId>{ClientId("c3"), ClientId("c1")}));
  EXPECT_THROW(schedule_topk(meta, "missing", 1), Error);
}

TEST(Kernels, SmallOnes) {
  std::vector<double> a = {1, 2, 3}, b = {1, 2.5, 3.0005};
  EXPECT_EQ(debug_diff(a, b, 1e-3), 1u);
  EXPECT_EQ(debug_diff(a, a, 0.0), 0u);
  const double e = eval_stub(a, 7);
  EXPECT_GE(e, 0.0);
  EXPECT_LE(e, 1.0);
  EXPECT_EQ(e, eval_stub(a, 7));
  EXPECT_NEAR(contribution_score(a, a), 1.0, 1e-12);

  MetadataRecord m1, m2;
  m1.client = m2.client = ClientId("c1");
  m1.perf["contribution"] = 0.25;
  m2.perf["contribution"] = 0.5;
  std::vector<MetadataRecord> ms = {m1, m2};
  EXPECT_DOUBLE_EQ(incentive_tally(ms).at(ClientId("c1")), 0.75);
}

// Oracle suite over 100 seeded random instances.
TEST(Oracle, CosineFedavgFilterTopk) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto in = oracle::make_instance(seed);
    const auto& v = in.vectors;
    EXPECT_TRUE(oracle::close(cosine_similarity(v[0], v[1]), oracle::cosine(v[0], v[1]))) << seed;

    std::vector<WeightedUpdate> wu;
    for (std::size_t j = 0; j < v.size(); ++j) wu.push_back({v[j], in.weights[j]});
    auto got = fedavg(wu);
    auto want = oracle::weighted_mean(v, in.weights);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_TRUE(oracle::close(got[i], want[i])) << seed;

    std::set<std::string> flagged;
    for (const auto& c : malicious_filter(client_updates(in))) flagged.insert(c.str());
    EXPECT_EQ(flagged, oracle::outliers(v, in.ids, 2.5)) << seed;

    std::vector<MetadataRecord> meta;
    std::vector<std::pair<std::string, double>> scored;
    for (std::size_t j = 0; j < v.size(); ++j) {
      MetadataRecord m;
      m.client = ClientId(in.ids[j]);
      // Coarse scores make ties likely.
      m.perf["availability"] = std::round(in.weights[j]);
      scored.push_back({in.ids[j], m.perf["availability"]});
      meta.push_back(m);
    }
    const std::size_t k = 1 + seed % v.size();
    std::vector<std::string> top;
    for (const auto& c : schedule_topk(meta, "availability", k)) top.push_back(c.str());
    EXPECT_EQ(top, oracle::topk(scored, k)) << seed;
  }
}

TEST(Oracle, KMeansObjectiveNeverRises) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto in = oracle::make_instance(seed + 1000);
    const std::size_t k = 1 + seed % std::min<std::size_t>(5, in.vectors.size());
    auto km = kmeans_cluster(spans(in.vectors), k, 50, seed);
    for (std::size_t i = 1; i < km.objective.size(); ++i)
      EXPECT_LE(km.objective[i], km.objective[i - 1] * (1 + 1e-12) + 1e-12) << seed;
  }
}
