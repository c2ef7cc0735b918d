#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "bayes_oracle.hpp"
#include "wag/filter.hpp"

using namespace wag;

namespace {

const TileGrid kWide({-100000, -100000}, 100.0, 2000, 2000);

ParticleFilter two_particles(GeoPoint a, GeoPoint b, double wa = 0.5) {
  return ParticleFilter(kWide, {{a, wa}, {b, 1.0 - wa}}, GaussianModel{}, 1);
}

std::vector<std::size_t> counts(const std::vector<std::size_t>& idx, std::size_t n) {
  std::vector<std::size_t> c(n, 0);
  for (auto i : idx) ++c[i];
  return c;
}

}  // namespace

TEST(Likelihood, Examples) {
  EXPECT_NEAR(likelihood(GaussianModel{0.1}, 0.0), 3.9894228, 1e-6);
  EXPECT_NEAR(likelihood(GaussianModel{0.1}, 0.0), 1.0 / (0.1 * std::sqrt(2 * std::numbers::pi)), 1e-12);
  EXPECT_NEAR(likelihood(GaussianModel{0.1}, 0.1), 3.9894228 * std::exp(-0.5), 1e-6);
  EXPECT_NEAR(likelihood(GaussianModel{0.1}, 0.1), 2.4197, 1e-4);
  EXPECT_DOUBLE_EQ(likelihood(ExponentialModel{2.0}, 0.0), 2.0);
  EXPECT_NEAR(likelihood(ExponentialModel{5.0}, 0.3), 5.0 * std::exp(-1.5), 1e-12);
}

TEST(Likelihood, StrictlyDecreasing) {
  double prev_g = INFINITY, prev_e = INFINITY;
  for (int i = 0; i <= 200; ++i) {
    const double v = i * 0.01;
    const double g = likelihood(GaussianModel{0.1}, v);
    const double e = likelihood(ExponentialModel{5.0}, v);
    EXPECT_LT(g, prev_g);
    EXPECT_LT(e, prev_e);
    EXPECT_NEAR(std::log(g), log_likelihood(GaussianModel{0.1}, v), 1e-9);
    prev_g = g;
    prev_e = e;
  }
}

TEST(Likelihood, ValidateModel) {
  EXPECT_THROW(validate(GaussianModel{0.0}), InvalidArgument);
  EXPECT_THROW(validate(ExponentialModel{-1.0}), InvalidArgument);
  EXPECT_NO_THROW(validate(GaussianModel{0.1}));
}

TEST(Measurements, GapAndDistance) {
  SimilarityRow row;
  row.s = {0.2f, 0.9f, -0.4f};
  row.max_value = 0.9f;
  row.argmax = 1;
  const auto z = gap_measurement(row);
  EXPECT_NEAR(z.values[0], 0.7, 1e-6);
  EXPECT_EQ(z.values[1], 0.0);
  const auto d = distance_measurement(row);
  EXPECT_NEAR(d.values[0], std::sqrt(2 - 2 * 0.2), 1e-6);
  EXPECT_NEAR(d.values[2], std::sqrt(2 + 0.8), 1e-6);
  EXPECT_EQ(measurement_for(GaussianModel{}, row).values, z.values);
  EXPECT_EQ(measurement_for(ExponentialModel{}, row).values, d.values);
}

TEST(InitGaussian, DegenerateSpread) {
  const auto pf = ParticleFilter::init_gaussian(kWide, 4, {50, 60}, 1e-12, 3);
  for (const auto& p : pf.particles()) {
    EXPECT_NEAR(p.position.x, 50, 1e-9);
    EXPECT_NEAR(p.position.y, 60, 1e-9);
    EXPECT_EQ(p.weight, 0.25);
  }
}

TEST(InitGaussian, SampleMeanWithinClt) {
  const GeoPoint mean{1300, 0};
  const double sigma = 2970;
  const std::size_t n = 100000;
  const auto pf = ParticleFilter::init_gaussian(kWide, n, mean, sigma, 5);
  const auto est = pf.estimate();
  const double bound = 3 * sigma / std::sqrt(static_cast<double>(n));
  EXPECT_LE(std::abs(est.x - mean.x), bound);
  EXPECT_LE(std::abs(est.y - mean.y), bound);
  EXPECT_NEAR(pf.dispersion(), sigma * std::sqrt(2.0), 0.05 * sigma * std::sqrt(2.0));
}

TEST(InitGaussian, Deterministic) {
  const auto a = ParticleFilter::init_gaussian(kWide, 100, {0, 0}, 50, 8);
  const auto b = ParticleFilter::init_gaussian(kWide, 100, {0, 0}, 50, 8);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(a.particles()[i].position.x, b.particles()[i].position.x);
    EXPECT_EQ(a.particles()[i].position.y, b.particles()[i].position.y);
  }
}

TEST(InitGaussian, StaysInsideSmallGrid) {
  const TileGrid g({0, 0}, 10.0, 3, 3);
  const auto pf = ParticleFilter::init_gaussian(g, 500, {15, 15}, 1000, 2);
  for (const auto& p : pf.particles()) EXPECT_TRUE(g.contains(p.position));
  EXPECT_THROW(ParticleFilter::init_gaussian(g, 0, {15, 15}, 1, 2), InvalidArgument);
  EXPECT_THROW(ParticleFilter::init_gaussian(g, 5, {15, 15}, 0, 2), InvalidArgument);
}

TEST(InitExact, Examples) {
  const GeoPoint p{123.5, -77.25};
  const auto pf = ParticleFilter::init_exact(kWide, 50, p, 0.0, 1);
  for (const auto& q : pf.particles()) {
    EXPECT_EQ(q.position.x, p.x);
    EXPECT_EQ(q.position.y, p.y);
  }
  EXPECT_NEAR(pf.estimate().x, p.x, 1e-9);
  EXPECT_NEAR(pf.estimate().y, p.y, 1e-9);

  const auto jit = ParticleFilter::init_exact(kWide, 10000, p, 5.0, 2);
  double sx = 0, sxx = 0;
  for (const auto& q : jit.particles()) {
    sx += q.position.x;
    sxx += q.position.x * q.position.x;
  }
  const double sd = std::sqrt(sxx / 10000 - (sx / 10000) * (sx / 10000));
  EXPECT_NEAR(sd, 5.0, 0.5);
}

TEST(Predict, NoiseFreeTranslation) {
  auto pf = ParticleFilter::init_gaussian(kWide, 200, {0, 0}, 30, 4);
  std::vector<Particle> before(pf.particles().begin(), pf.particles().end());
  pf.predict({12.5, -3.0}, 0.0);
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(pf.particles()[i].position.x, before[i].position.x + 12.5);
    EXPECT_EQ(pf.particles()[i].position.y, before[i].position.y - 3.0);
  }
}

TEST(Predict, ZeroDisplacementLeavesParticles) {
  auto pf = ParticleFilter::init_gaussian(kWide, 200, {0, 0}, 30, 4);
  std::vector<Particle> before(pf.particles().begin(), pf.particles().end());
  pf.predict({0, 0}, 0.5);
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(pf.particles()[i].position.x, before[i].position.x);
    EXPECT_EQ(pf.particles()[i].position.y, before[i].position.y);
  }
}

TEST(Predict, NoiseScalesWithDisplacement) {
  const std::size_t n = 100000;
  auto pf = ParticleFilter::init_exact(kWide, n, {0, 0}, 0.0, 6);
  pf.predict({100, 0}, 0.02);
  double sx = 0, sxx = 0, sy = 0, syy = 0;
  for (const auto& p : pf.particles()) {
    const double dx = p.position.x - 100;
    sx += dx;
    sxx += dx * dx;
    sy += p.position.y;
    syy += p.position.y * p.position.y;
  }
  const double sdx = std::sqrt(sxx / n - (sx / n) * (sx / n));
  const double sdy = std::sqrt(syy / n - (sy / n) * (sy / n));
  EXPECT_NEAR(sdx, 2.0, 0.1);
  EXPECT_NEAR(sdy, 2.0, 0.1);
  EXPECT_THROW(pf.predict({1, 0}, -0.1), InvalidArgument);
}

TEST(Predict, ThreadCountIndependent) {
  auto a = ParticleFilter::init_gaussian(kWide, 5000, {0, 0}, 300, 4, GaussianModel{}, {}, Parallelism{1});
  auto b = ParticleFilter::init_gaussian(kWide, 5000, {0, 0}, 300, 4, GaussianModel{}, {}, Parallelism{4});
  for (int t = 0; t < 3; ++t) {
    a.predict({40, 10}, 0.05);
    b.predict({40, 10}, 0.05);
  }
  for (std::size_t i = 0; i < 5000; ++i) EXPECT_EQ(a.particles()[i].position.x, b.particles()[i].position.x);
}

TEST(Update, UniformMeasurementKeepsWeights) {
  const TileGrid g({0, 0}, 10.0, 4, 4);
  std::vector<Particle> ps;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0, 40), w(0.1, 1.0);
  double total = 0;
  for (int i = 0; i < 50; ++i) {
    ps.push_back({{u(gen), u(gen)}, w(gen)});
    total += ps.back().weight;
  }
  for (auto& p : ps) p.weight /= total;
  ParticleFilter pf(g, ps, GaussianModel{}, 1, ResamplePolicy::ess_below(1e-9));
  pf.update(Measurement{std::vector<double>(16, 0.37)});
  for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_NEAR(pf.particles()[i].weight, ps[i].weight, 1e-15);
}

TEST(Update, ExactPosteriorOnTwoTiles) {
  const TileGrid g({0, 0}, 10.0, 1, 2);
  // 30 particles in tile 0, 70 in tile 1, weights uniform.
  std::vector<Particle> ps;
  for (int i = 0; i < 30; ++i) ps.push_back({{2.0 + 0.1 * i, 5}, 0.01});
  for (int i = 0; i < 70; ++i) ps.push_back({{12.0 + 0.1 * i, 5}, 0.01});
  ParticleFilter pf(g, ps, GaussianModel{0.1}, 1, ResamplePolicy::ess_below(1e-9));
  pf.update(Measurement{{0.0, 0.5}});
  const double l0 = likelihood(GaussianModel{0.1}, 0.0), l1 = likelihood(GaussianModel{0.1}, 0.5);
  const double exact0 = 0.3 * l0 / (0.3 * l0 + 0.7 * l1);
  EXPECT_NEAR(pf.tile_mass()[0], exact0, 1e-12);
  EXPECT_GT(pf.tile_mass()[0], 0.999);
  EXPECT_NEAR(pf.weight_sum(), 1.0, 1e-12);
}

TEST(Update, OutOfBoundsGetsZeroWeight) {
  const TileGrid g({0, 0}, 10.0, 2, 2);
  ParticleFilter pf(g, {{{5, 5}, 0.5}, {{50, 5}, 0.5}}, GaussianModel{}, 1, ResamplePolicy::ess_below(1e-9));
  pf.update(Measurement{std::vector<double>(4, 0.0)});
  EXPECT_EQ(pf.particles()[1].weight, 0.0);
  EXPECT_EQ(pf.particles()[0].weight, 1.0);
}

TEST(Update, AllOutOfBoundsIsDegenerateAndLeavesState) {
  const TileGrid g({0, 0}, 10.0, 2, 2);
  ParticleFilter pf(g, {{{-5, 5}, 0.5}, {{50, 5}, 0.5}}, GaussianModel{}, 1);
  EXPECT_THROW(pf.update(Measurement{std::vector<double>(4, 0.0)}), Degenerate);
  EXPECT_EQ(pf.particles()[0].weight, 0.5);
  EXPECT_EQ(pf.particles()[1].position.x, 50.0);
}

TEST(Update, WrongMeasurementSize) {
  const TileGrid g({0, 0}, 10.0, 2, 2);
  ParticleFilter pf(g, {{{5, 5}, 1.0}}, GaussianModel{}, 1);
  EXPECT_THROW(pf.update(Measurement{std::vector<double>(3, 0.0)}), DimensionMismatch);
}

TEST(Update, SurvivesExtremeLikelihoodRatios) {
  const TileGrid g({0, 0}, 10.0, 1, 2);
  ParticleFilter pf(g, {{{5, 5}, 0.5}, {{15, 5}, 0.5}}, GaussianModel{0.01}, 1, ResamplePolicy::ess_below(1e-9));
  pf.update(Measurement{{1.9, 2.0}});  // both likelihoods underflow in linear space
  EXPECT_NEAR(pf.weight_sum(), 1.0, 1e-12);
  EXPECT_GT(pf.particles()[0].weight, 0.99);
}

TEST(Resample, SystematicCountsForEveryPhase) {
  const std::vector<double> w = {0.5, 0.25, 0.25};
  for (int i = 0; i < 1000; ++i) {
    const double phase = i / 1000.0;
    EXPECT_EQ(counts(systematic_resample_indices(w, 4, phase), 3), (std::vector<std::size_t>{2, 1, 1}))
        << "phase " << phase;
  }
}

TEST(Resample, SinglePointMass) {
  ParticleFilter pf(kWide, {{{1, 1}, 0.0}, {{2, 2}, 1.0}, {{3, 3}, 0.0}}, GaussianModel{}, 1);
  pf.resample();
  for (const auto& p : pf.particles()) {
    EXPECT_EQ(p.position.x, 2.0);
    EXPECT_NEAR(p.weight, 1.0 / 3, 1e-15);
  }
}

TEST(Resample, UniformWeightsPreserveMultiset) {
  std::vector<Particle> ps;
  for (int i = 0; i < 37; ++i) ps.push_back({{static_cast<double>(i), 0}, 1.0 / 37});
  ParticleFilter pf(kWide, ps, GaussianModel{}, 9);
  pf.resample();
  std::vector<double> xs;
  for (const auto& p : pf.particles()) xs.push_back(p.position.x);
  std::sort(xs.begin(), xs.end());
  for (int i = 0; i < 37; ++i) EXPECT_EQ(xs[i], i);
  EXPECT_EQ(pf.resample_count(), 1u);
}

TEST(Resample, EssPolicy) {
  const TileGrid g({0, 0}, 10.0, 1, 2);
  std::vector<Particle> ps;
  for (int i = 0; i < 10; ++i) ps.push_back({{i < 5 ? 5.0 : 15.0, 5}, 0.1});
  ParticleFilter lazy(g, ps, GaussianModel{0.1}, 1, ResamplePolicy::ess_below(0.6));
  lazy.update(Measurement{{0.0, 0.01}});  // nearly uninformative: ESS stays high
  EXPECT_EQ(lazy.resample_count(), 0u);
  lazy.update(Measurement{{0.0, 1.0}});
  EXPECT_EQ(lazy.resample_count(), 1u);
  EXPECT_THROW(ParticleFilter(g, ps, GaussianModel{}, 1, ResamplePolicy::ess_below(0.0)), InvalidArgument);
}

TEST(Estimate, Examples) {
  ParticleFilter one(kWide, {{{7, -3}, 1.0}}, GaussianModel{}, 1);
  EXPECT_EQ(one.estimate().x, 7.0);
  EXPECT_EQ(one.estimate().y, -3.0);
  EXPECT_EQ(one.dispersion(), 0.0);
  const auto two = two_particles({0, 0}, {10, 0});
  EXPECT_DOUBLE_EQ(two.estimate().x, 5.0);
  EXPECT_DOUBLE_EQ(two.estimate().y, 0.0);
}

TEST(Estimate, BruteForceWeightedMean) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(-500, 500), w(0, 1);
  std::vector<Particle> ps(333);
  long double total = 0;
  for (auto& p : ps) {
    p = {{u(gen), u(gen)}, w(gen)};
    total += p.weight;
  }
  for (auto& p : ps) p.weight = static_cast<double>(p.weight / total);
  ParticleFilter pf(kWide, ps, GaussianModel{}, 1);
  long double mx = 0, my = 0;
  for (const auto& p : ps) {
    mx += static_cast<long double>(p.weight) * p.position.x;
    my += static_cast<long double>(p.weight) * p.position.y;
  }
  EXPECT_NEAR(pf.estimate().x, static_cast<double>(mx), 1e-9);
  EXPECT_NEAR(pf.estimate().y, static_cast<double>(my), 1e-9);
  long double acc = 0;
  for (const auto& p : ps) {
    const long double dx = p.position.x - mx, dy = p.position.y - my;
    acc += p.weight * (dx * dx + dy * dy);
  }
  EXPECT_NEAR(pf.dispersion(), std::sqrt(static_cast<double>(acc)), 1e-8);
}

TEST(Dispersion, Examples) {
  EXPECT_DOUBLE_EQ(two_particles({0, 0}, {20, 0}).dispersion(), 10.0);
  EXPECT_EQ(two_particles({4, 4}, {4, 4}).dispersion(), 0.0);
}

TEST(BayesOracle, SingleUpdateMatchesEmpiricalPriorExactly) {
  const TileGrid g({0, 0}, 10.0, 4, 4);
  auto pf = oracle::uniform_filter(g, 100, 42, GaussianModel{0.1});
  const auto prior = pf.tile_mass();
  const auto script = oracle::default_script(g);
  ParticleFilter lazy(g, {pf.particles().begin(), pf.particles().end()}, GaussianModel{0.1}, 1,
                      ResamplePolicy::ess_below(1e-9));
  lazy.update(Measurement{script[0].values});
  double total = 0;
  std::vector<double> exact(16);
  for (std::size_t k = 0; k < 16; ++k) total += exact[k] = prior[k] * likelihood(GaussianModel{0.1}, script[0].values[k]);
  const auto mass = lazy.tile_mass();
  for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(mass[k], exact[k] / total, 1e-12);
}

TEST(BayesOracle, MotionAndUpdatesMatchWithManyParticles) {
  const TileGrid g({0, 0}, 10.0, 4, 4);
  const auto script = oracle::default_script(g, true);
  for (const MeasurementModel m : {MeasurementModel{GaussianModel{0.1}}, MeasurementModel{ExponentialModel{5.0}}}) {
    const auto a = oracle::compare(g, m, script, 500, 1000, 3);
    EXPECT_EQ(a.beyond_3se, 0u) << "max |z| " << a.max_abs_z;
  }
}

TEST(Invariants, WeightsNormalizedAndCountConstant) {
  const TileGrid g({0, 0}, 20.0, 8, 8);
  auto pf = ParticleFilter::init_gaussian(g, 2000, {80, 80}, 60, 3, GaussianModel{0.1}, ResamplePolicy::ess_below(0.3));
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0, 0.4);
  for (int t = 0; t < 30; ++t) {
    pf.predict({3, -2}, 0.05);
    std::vector<double> v(64);
    for (auto& x : v) x = u(gen);
    pf.update(Measurement{v});
    EXPECT_NEAR(pf.weight_sum(), 1.0, 1e-9);
    EXPECT_EQ(pf.size(), 2000u);
  }
}
