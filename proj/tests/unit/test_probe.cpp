#include <gtest/gtest.h>

#include <cmath>

#include "latentmark/battery.hpp"
#include "reference.hpp"

using namespace latentmark;
using namespace latentmark::probe;

namespace {

Matrix uniform_matrix(RngState& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = 0.01 + 0.98 * rng.next_unit();
  return m;
}

Matrix normal_matrix(RngState& rng, Eigen::Index rows, Eigen::Index cols) {
  NormalStream normals(rng);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normals.next();
  return m;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST(LossAt, HandValues) {
  Matrix same(3, 2);
  same << 0.4, 0.6, 0.4, 0.6, 0.4, 0.6;
  EXPECT_NEAR(loss_at(same), 0.0, 1e-15);
  Matrix two(2, 2);
  two << 0, 0, 1, 1;
  EXPECT_NEAR(loss_at(two), 2.0, 1e-15);
  EXPECT_THROW(loss_at(Matrix::Zero(1, 3)), Error);
}

TEST(LossDtc, HandValues) {
  Matrix t(1, 2), v(1, 2);
  t << 1, 0;
  v << 0, 0;
  EXPECT_NEAR(loss_dtc(t, v), 1.0 / (1.0 + 1e-8), 1e-15);
  Matrix same = Matrix::Constant(4, 3, 0.3);
  EXPECT_NEAR(loss_dtc(same, same), 1e8, 1e-3);
}

TEST(LossGc, HandValues) {
  EXPECT_NEAR(loss_gc(Matrix::Constant(5, 7, 0.42)), 0.0, 1e-14);
  Matrix point(1, 2);
  point << 1, 0;
  EXPECT_NEAR(loss_gc(point), std::log(2.0), 1e-9);
}

TEST(Losses, MatchBruteForce) {
  RngState rng = RngState::from_seed(1);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.next_below(10));
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.next_below(12));
    const Matrix a = uniform_matrix(rng, n, m), b = uniform_matrix(rng, n, m);
    EXPECT_LE(rel_err(loss_at(a), reference::loss_at(a)), 1e-10);
    EXPECT_LE(rel_err(loss_dtc(a, b), reference::loss_dtc(a, b)), 1e-8);
    EXPECT_NEAR(loss_gc(b), reference::loss_gc(b), 1e-10);
  }
}

TEST(Losses, NonNegative) {
  RngState rng = RngState::from_seed(2);
  for (int t = 0; t < 50; ++t) {
    const Matrix a = uniform_matrix(rng, 6, 5), b = uniform_matrix(rng, 6, 5);
    EXPECT_GE(loss_at(a), 0.0);
    EXPECT_GE(loss_dtc(a, b), 0.0);
    EXPECT_GE(loss_gc(b), 0.0);
  }
}

TEST(Gradients, MatchCentralDifferences) {
  RngState rng = RngState::from_seed(3);
  const double h = 1e-4;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    FeatureExtractor fe = FeatureExtractor::init(16, 8, rng);
    for (Eigen::Index j = 0; j < 8; ++j) fe.bias(j) = 0.3 * (rng.next_unit() - 0.5);
    const Matrix xt = normal_matrix(rng, 4, 16), xv = normal_matrix(rng, 4, 16);
    const LossWeights lambda{1.0, 1.0, 1.0};
    const LossAndGrad lg = total_loss_and_grad(fe, xt, xv, lambda);
    const auto loss_at_params = [&](const FeatureExtractor& f) { return total_loss(f, xt, xv, lambda).total; };
    for (Eigen::Index i = 0; i < 16; ++i) {
      for (Eigen::Index j = 0; j < 8; ++j) {
        FeatureExtractor plus = fe, minus = fe;
        plus.weights(i, j) += h;
        minus.weights(i, j) -= h;
        const double fd = (loss_at_params(plus) - loss_at_params(minus)) / (2 * h);
        worst = std::max(worst, rel_err(lg.d_weights(i, j), fd));
      }
    }
    for (Eigen::Index j = 0; j < 8; ++j) {
      FeatureExtractor plus = fe, minus = fe;
      plus.bias(j) += h;
      minus.bias(j) -= h;
      const double fd = (loss_at_params(plus) - loss_at_params(minus)) / (2 * h);
      worst = std::max(worst, rel_err(lg.d_bias(j), fd));
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Extractor, OutputsInUnitInterval) {
  RngState rng = RngState::from_seed(4);
  const FeatureExtractor fe = FeatureExtractor::init(32, kDefaultFeatureDim, rng);
  const Matrix f = fe.forward(normal_matrix(rng, 10, 32) * 5.0);
  EXPECT_EQ(f.cols(), 100);
  EXPECT_GT(f.minCoeff(), 0.0);
  EXPECT_LT(f.maxCoeff(), 1.0);
  EXPECT_THROW(fe.forward(Matrix::Zero(2, 31)), Error);
}

TEST(Observe, PoolingPreservesVariance) {
  RngState rng = RngState::from_seed(5);
  double sq = 0.0;
  std::size_t n = 0;
  for (int t = 0; t < 50; ++t) {
    const Vector x = observe(sample_gaussian_latent(4, 64, 64, rng), 8);
    ASSERT_EQ(x.size(), 256);
    sq += x.squaredNorm();
    n += static_cast<std::size_t>(x.size());
  }
  EXPECT_NEAR(sq / n, 1.0, 0.05);
  EXPECT_THROW(observe(LatentTensor(1, 10, 10), 3), Error);
}

TEST(Training, ConstantSignalCollapsesTargetSpread) {
  RngState rng = RngState::from_seed(6);
  const Eigen::Index d = 64;
  Vector signal(d);
  for (Eigen::Index i = 0; i < d; ++i) signal(i) = (i % 2 ? 1.0 : -1.0);
  Matrix tar = normal_matrix(rng, 256, d);
  tar.rowwise() += signal.transpose();
  const Matrix van = normal_matrix(rng, 256, d);
  Hyperparameters hp;
  hp.steps = 500;
  const TrainResult res = train_wfe(tar, van, hp, rng);
  ASSERT_FALSE(res.trace.empty());
  EXPECT_EQ(res.trace.front().step, 0u);
  EXPECT_EQ(res.trace.back().step, 499u);
  EXPECT_LE(res.trace.back().at * 10.0, res.trace.front().at);
}

TEST(Training, DeterministicGivenSeed) {
  RngState data = RngState::from_seed(7);
  const Matrix tar = normal_matrix(data, 64, 16), van = normal_matrix(data, 64, 16);
  Hyperparameters hp;
  hp.steps = 30;
  hp.batch = 16;
  hp.feature_dim = 8;
  RngState a = RngState::from_seed(8), b = RngState::from_seed(8);
  const auto ra = train_wfe(tar, van, hp, a), rb = train_wfe(tar, van, hp, b);
  EXPECT_EQ(ra.extractor.weights, rb.extractor.weights);
  EXPECT_EQ(ra.trace.size(), rb.trace.size());
}

TEST(Training, NullTargetsStayInNullBand) {
  RngState rng = RngState::from_seed(9);
  const Matrix tar = normal_matrix(rng, 256, 64), van = normal_matrix(rng, 256, 64);
  const Matrix tar_test = normal_matrix(rng, 128, 64), van_test = normal_matrix(rng, 128, 64);
  Hyperparameters hp;
  hp.steps = 200;
  const TrainResult res = train_wfe(tar, van, hp, rng);
  const Matrix ft = res.extractor.forward(tar_test), fv = res.extractor.forward(van_test);
  EXPECT_GT(mmd_permutation_pvalue(ft, fv, median_heuristic_bandwidth(ft, fv), 200, rng), 0.01);
}

TEST(Training, NonFiniteLossRaisesWithTrace) {
  RngState rng = RngState::from_seed(10);
  Matrix tar = normal_matrix(rng, 64, 8);
  tar(3, 2) = std::numeric_limits<double>::quiet_NaN();
  Hyperparameters hp;
  hp.batch = 64;
  hp.feature_dim = 4;
  try {
    train_wfe(tar, normal_matrix(rng, 64, 8), hp, rng);
    FAIL();
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTrainingDiverged);
    EXPECT_FALSE(e.trace().empty());
  }
}

TEST(Training, RejectsBadHyperparameters) {
  RngState rng = RngState::from_seed(11);
  const Matrix x = normal_matrix(rng, 64, 8);
  Hyperparameters hp;
  hp.lr = -1.0;
  EXPECT_THROW(train_wfe(x, x, hp, rng), Error);
  Hyperparameters big;
  big.batch = 128;
  EXPECT_THROW(train_wfe(x, x, big, rng), Error);
}

TEST(Detect, IdenticalSetsGiveZero) {
  RngState rng = RngState::from_seed(12);
  const FeatureExtractor fe = FeatureExtractor::init(16, 8, rng);
  const Matrix x = normal_matrix(rng, 40, 16);
  EXPECT_LE(detect(fe, x, x), 1e-9);
  EXPECT_GE(detect(fe, x, normal_matrix(rng, 40, 16)), 0.0);
}

namespace {

BatteryConfig tiny_battery() {
  BatteryConfig b;
  b.surrogate.pool = 16;
  b.surrogate.train = 64;
  b.surrogate.test = 32;
  b.surrogate.drift = 0.3;
  b.hp.batch = 32;
  b.hp.steps = 20;
  b.hp.feature_dim = 16;
  b.targets_per_class = 3;
  return b;
}

SwaConfig gs_config() {
  RngState rng = RngState::from_seed(99);
  return SwaConfig::gaussian_shading(WatermarkPayload::random_balanced(kGsBits, rng));
}

}  // namespace

TEST(Battery, ShapeAndDeterminismAcrossWorkerCounts) {
  const std::vector<BatteryVariant> variants = {{"plain", gs_config(), false}, {"wrapped", gs_config(), true}};
  const BatteryResult a = run_battery(tiny_battery(), variants, 5, 1);
  const BatteryResult b = run_battery(tiny_battery(), variants, 5, 3);
  ASSERT_EQ(a.clean.size(), 3u);
  ASSERT_EQ(a.variants.size(), 2u);
  for (std::size_t v = 0; v < 2; ++v) {
    EXPECT_EQ(a.variants[v].auc, b.variants[v].auc);
    EXPECT_EQ(a.variants[v].stealthiness, 1.0 - a.variants[v].auc);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.variants[v].watermarked[i].mmd, b.variants[v].watermarked[i].mmd);
  }
  EXPECT_EQ(a.variants[0].watermarked[1].kind, TargetKind::kPlain);
  EXPECT_EQ(a.variants[1].watermarked[1].kind, TargetKind::kWrapped);
}

TEST(Battery, UnwrappedSignalIsDetected) {
  // Even a tiny attack separates the unwrapped embedder's constant signal.
  BatteryConfig cfg = tiny_battery();
  cfg.hp.steps = 50;
  cfg.targets_per_class = 5;
  const BatteryResult r = run_battery(cfg, {{"plain", gs_config(), false}}, 6, 1);
  EXPECT_GE(r.variants[0].auc, 0.9);
}
