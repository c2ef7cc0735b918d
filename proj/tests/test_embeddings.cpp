#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "wag/embeddings.hpp"

using namespace wag;

namespace {

Embedding basis(std::size_t d, std::size_t i, float v = 1.0f) {
  std::vector<float> e(d, 0.0f);
  e[i] = v;
  return Embedding::from_unit(e);
}

// Independent reference: plain double-precision dot product.
double ref_dot(std::span<const float> a, std::span<const float> b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

}  // namespace

TEST(Normalize, Examples) {
  std::vector<double> v(8, 0.0);
  v[0] = 3;
  v[1] = 4;
  const auto e = normalize(v);
  EXPECT_NEAR(e[0], 0.6, 1e-7);
  EXPECT_NEAR(e[1], 0.8, 1e-7);
  for (std::size_t i = 2; i < 8; ++i) EXPECT_EQ(e[i], 0.0f);

  const auto u = basis(5, 2);
  const auto again = normalize(std::vector<float>(u.values().begin(), u.values().end()));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(again[i], u[i]);

  EXPECT_THROW(normalize(std::vector<double>(4, 0.0)), ZeroVector);
  EXPECT_THROW(normalize(std::vector<double>{1.0, NAN}), InvalidArgument);
}

TEST(Metrics, CosineExamples) {
  const auto a = basis(4, 0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, basis(4, 1)), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, basis(4, 0, -1.0f)), -1.0);
  EXPECT_THROW(cosine_similarity(a, basis(5, 0)), DimensionMismatch);
}

TEST(Metrics, EuclideanExamples) {
  const auto a = basis(4, 0);
  EXPECT_DOUBLE_EQ(euclidean_distance(a, a), 0.0);
  EXPECT_NEAR(euclidean_distance(a, basis(4, 3)), std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(euclidean_distance(a, basis(4, 0, -1.0f)), 2.0);
  EXPECT_THROW(euclidean_distance(a, basis(3, 0)), DimensionMismatch);
}

TEST(Metrics, DistanceCosineIdentity) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(64), y(64);
    for (auto& v : x) v = n01(gen);
    for (auto& v : y) v = n01(gen);
    const auto a = normalize(x), b = normalize(y);
    const double d = euclidean_distance(a, b);
    EXPECT_NEAR(d * d + 2.0 * cosine_similarity(a, b), 2.0, 1e-5);
  }
}

TEST(SimilarityRow, MatchesTileEqualToQuery) {
  const TileGrid g({0, 0}, 10.0, 3, 3);
  const auto db = synth_tile_db(g, 16, 4);
  const auto q = db.at(5);
  const auto row = similarity_row(db, q);
  EXPECT_EQ(row.argmax, 5u);
  EXPECT_NEAR(row.max_value, 1.0, 1e-6);
}

TEST(SimilarityRow, SingleTile) {
  const TileGrid g({0, 0}, 10.0, 1, 1);
  const auto db = synth_tile_db(g, 8, 1);
  const auto q = normalize(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  const auto row = similarity_row(db, q);
  ASSERT_EQ(row.size(), 1u);
  EXPECT_EQ(row.max_value, row.s[0]);
  EXPECT_EQ(row.argmax, 0u);
}

TEST(SimilarityRow, BruteForceOracle) {
  const TileGrid g({0, 0}, 10.0, 2, 2);
  const auto db = synth_tile_db(g, 8, 7);
  const auto q = normalize(std::vector<double>{0.3, -1.2, 0.5, 0.9, -0.1, 2.0, 0.0, -0.7});
  const auto row = similarity_row(db, q);
  ASSERT_EQ(row.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(row.s[k], ref_dot(db.row(k), q.values()), 1e-6);
    EXPECT_NEAR(row.s[k], cosine_similarity(db.at(k), q), 1e-6);
  }
}

TEST(SimilarityRow, ThreadCountDoesNotChangeBits) {
  const TileGrid g({0, 0}, 10.0, 60, 70);
  const auto db = synth_tile_db(g, 64, 9);
  const auto q = db.at(123);
  const auto a = similarity_row(db, q, Parallelism{1});
  const auto b = similarity_row(db, q, Parallelism{4});
  EXPECT_EQ(a.s, b.s);
  EXPECT_EQ(a.argmax, b.argmax);
}

TEST(SimilarityRow, TiesBreakTowardLowestIndex) {
  const TileGrid g({0, 0}, 10.0, 1, 3);
  std::vector<float> data = {0, 1, 1, 0, 1, 0};
  const EmbeddingDB db(g, 2, data);
  const auto row = similarity_row(db, basis(2, 0));
  EXPECT_EQ(row.argmax, 1u);
}

TEST(SynthDb, DeterministicAndUnit) {
  const TileGrid g({0, 0}, 64.0, 5, 7);
  const auto a = synth_tile_db(g, 32, 42);
  const auto b = synth_tile_db(g, 32, 42);
  EXPECT_TRUE(a == b);
  const auto c = synth_tile_db(g, 32, 43);
  EXPECT_FALSE(a == c);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(ref_dot(a.row(k), a.row(k)), 1.0, 1e-6);
  EXPECT_EQ(synth_tile_db(TileGrid({0, 0}, 1.0, 1, 1), 4, 1).size(), 1u);
  EXPECT_THROW(synth_tile_db(g, 1, 1), InvalidArgument);
}

TEST(SynthDb, DistinctTilesNearlyOrthogonal) {
  const TileGrid g({0, 0}, 64.0, 1, 2);
  int large = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto db = synth_tile_db(g, 64, s);
    if (std::abs(cosine_similarity(db.at(0), db.at(1))) >= 0.6) ++large;
  }
  EXPECT_EQ(large, 0);
}

TEST(Oracle, NoiseFreeLimitReturnsTile) {
  const TileGrid g({0, 0}, 64.0, 4, 4);
  const auto db = synth_tile_db(g, 32, 5);
  OracleParams p;
  p.sigma_pos = p.sigma_semi = 0.0;
  p.base_overlap = 1.0;
  p.noise_scale = 0.0;
  const GeoPoint truth{100, 150};
  const auto k = g.linear(g.tile_at(truth));
  const auto e = synth_ground_embedding(db, truth, p, 1, 0);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(e[i], db.row(k)[i], 1e-7);
  EXPECT_EQ(similarity_row(db, e).argmax, k);
}

TEST(Oracle, DeterministicPerSeedAndStep) {
  const TileGrid g({0, 0}, 64.0, 4, 4);
  const auto db = synth_tile_db(g, 32, 5);
  const OracleParams p;
  const auto a = synth_ground_embedding(db, {70, 70}, p, 9, 3);
  const auto b = synth_ground_embedding(db, {70, 70}, p, 9, 3);
  const auto c = synth_ground_embedding(db, {70, 70}, p, 9, 4);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
  EXPECT_THROW(synth_ground_embedding(db, {-1, 0}, p, 9, 3), OutOfBounds);
}

TEST(Oracle, ParamsValidate) {
  OracleParams p;
  p.base_overlap = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = {};
  p.sigma_pos = -1;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

class Calibration : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    db_ = new EmbeddingDB(synth_tile_db(TileGrid({0, 0}, 64.0, 64, 64), 64, 1));
    tuned_ = calibrate(*db_, OracleParams{}, 0.1, 2000, 7);
  }
  static void TearDownTestSuite() { delete db_; }
  static inline EmbeddingDB* db_ = nullptr;
  static inline OracleParams tuned_;
};

TEST_F(Calibration, ReproducesTargetOnFreshDraws) {
  // Fresh points and draws, not the calibration sample.
  const double spread = sample_gap_spread(*db_, tuned_, 10000, 12345);
  EXPECT_GE(spread, 0.09);
  EXPECT_LE(spread, 0.11);
}

TEST_F(Calibration, EmpiricalStdWithinTwentyPercent) {
  std::mt19937_64 gen(99);
  const auto& g = db_->grid();
  std::uniform_real_distribution<double> ux(0, g.width()), uy(0, g.height());
  double s = 0, sq = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double z = max_gap_at_truth(*db_, {ux(gen), uy(gen)}, tuned_, 555, i);
    s += z;
    sq += z * z;
  }
  const double mean = s / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  const double rms = std::sqrt(sq / n);
  EXPECT_NEAR(rms, 0.1, 0.02);
  EXPECT_GT(sd, 0.0);
  EXPECT_LE(sd, 0.12);
}

TEST_F(Calibration, Deterministic) {
  const auto again = calibrate(*db_, OracleParams{}, 0.1, 2000, 7);
  EXPECT_EQ(again.base_overlap, tuned_.base_overlap);
}

TEST_F(Calibration, ThreadCountIndependent) {
  const auto par = calibrate(*db_, OracleParams{}, 0.1, 2000, 7, Parallelism{3});
  EXPECT_EQ(par.base_overlap, tuned_.base_overlap);
}

TEST_F(Calibration, ZeroTargetFails) {
  EXPECT_THROW(calibrate(*db_, OracleParams{}, 0.0, 1000, 7), CalibrationFailed);
  EXPECT_THROW(calibrate(*db_, OracleParams{}, 0.1, 10, 7), InvalidArgument);
}
