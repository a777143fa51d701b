#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "tdk/mlp.hpp"
#include "tdk/oracle.hpp"

using namespace tdk;

namespace {

// Two well separated clusters in a 2-pixel grayscale image.
LabeledDataset blobs(std::size_t n, RngStream rng) {
  std::vector<LabeledItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t label = i % 2;
    const double c0 = label ? 0.75 : 0.25;
    const double c1 = label ? 0.3 : 0.7;
    items.push_back({ImageTensor::clamped({1, 2, 1}, {c0 + 0.08 * rng.normal(), c1 + 0.08 * rng.normal()}),
                     ClassLabel{label}});
  }
  return LabeledDataset(items, 2);
}

Eigen::MatrixXd random_inputs(Eigen::Index rows, Eigen::Index cols, RngStream rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform();
  return m;
}

}  // namespace

TEST(Mlp, ZeroWeightsGiveUniformOutput) {
  const auto model = MlpModel::zeros({4, 4, 3}, 8, 5);
  RngStream r(1);
  std::vector<double> px(48);
  for (double& v : px) v = r.uniform();
  for (double p : model.predict(ImageTensor({4, 4, 3}, px))) EXPECT_DOUBLE_EQ(p, 0.2);
}

TEST(Mlp, SoftmaxSumsToOne) {
  const auto model = MlpModel::initialized({4, 4, 3}, 16, 7, RngStream(2));
  RngStream r(3);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> px(48);
    for (double& v : px) v = r.uniform();
    const auto p = model.predict(ImageTensor({4, 4, 3}, px));
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(Mlp, InitializationRespectsFanIn) {
  const auto model = MlpModel::initialized({4, 4, 3}, 16, 7, RngStream(2));
  const double bound1 = 1.0 / std::sqrt(48.0);
  const double bound2 = 1.0 / std::sqrt(16.0);
  EXPECT_LE(model.params().w1.cwiseAbs().maxCoeff(), bound1);
  EXPECT_LE(model.params().w2.cwiseAbs().maxCoeff(), bound2);
  EXPECT_EQ(model.params().b1.cwiseAbs().maxCoeff(), 0.0);
}

// Central differences against the analytic gradient, as a single relative
// error over all parameters: ||g_a - g_n|| / (||g_a|| + ||g_n||).
TEST(Mlp, GradientMatchesFiniteDifferences) {
  auto model = MlpModel::initialized({3, 3, 1}, 6, 4, RngStream(4));
  MlpParams p = model.params();
  p.b1.setConstant(0.05);  // keep hidden units away from the ReLU kink
  const Eigen::MatrixXd x = random_inputs(5, 9, RngStream(5));
  const std::vector<std::uint32_t> y{0, 1, 2, 3, 1};
  const auto analytic = mlp_loss_and_gradient(p, x, y).grad;

  const double h = 1e-5;
  double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
  auto check = [&](auto& param, const auto& grad) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double saved = param.data()[i];
      param.data()[i] = saved + h;
      const double up = mlp_loss(p, x, y);
      param.data()[i] = saved - h;
      const double down = mlp_loss(p, x, y);
      param.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      diff += std::pow(grad.data()[i] - numeric, 2);
      norm_a += std::pow(grad.data()[i], 2);
      norm_n += numeric * numeric;
    }
  };
  check(p.w1, analytic.w1);
  check(p.b1, analytic.b1);
  check(p.w2, analytic.w2);
  check(p.b2, analytic.b2);
  const double rel = std::sqrt(diff) / (std::sqrt(norm_a) + std::sqrt(norm_n));
  EXPECT_LE(rel, 1e-4);
}

TEST(Mlp, LearnsSeparableBlobs) {
  const auto data = blobs(200, RngStream(6));
  MlpHyper hy;
  hy.epochs = 50;
  hy.hidden = 8;
  hy.seed = 1;
  const auto result = train_mlp(data, hy);
  EXPECT_GE(accuracy(result.model, data), 0.99);
  EXPECT_LT(result.epoch_losses.back(), result.epoch_losses.front());
}

TEST(Mlp, ZeroEpochsReturnsInitializedModel) {
  const auto data = blobs(20, RngStream(7));
  MlpHyper hy;
  hy.epochs = 0;
  hy.hidden = 5;
  hy.seed = 9;
  const auto result = train_mlp(data, hy);
  EXPECT_EQ(result.model, MlpModel::initialized({1, 2, 1}, 5, 2, substream(RngStream(9), "init")));
  EXPECT_TRUE(result.epoch_losses.empty());
}

TEST(Mlp, TrainingIsDeterministic) {
  const auto data = blobs(64, RngStream(8));
  MlpHyper hy;
  hy.epochs = 5;
  hy.hidden = 6;
  hy.seed = 3;
  EXPECT_EQ(train_mlp(data, hy).model, train_mlp(data, hy).model);
  auto other = hy;
  other.seed = 4;
  EXPECT_FALSE(train_mlp(data, hy).model == train_mlp(data, other).model);
}

TEST(Mlp, DivergenceIsReported) {
  const auto data = blobs(64, RngStream(8));
  MlpHyper hy;
  hy.epochs = 20;
  hy.lr = 1e300;
  hy.seed = 1;
  EXPECT_THROW(train_mlp(data, hy), TrainingDiverged);
}

TEST(Mlp, SaveLoadRoundTrip) {
  const auto model = MlpModel::initialized({4, 4, 3}, 16, 7, RngStream(2));
  const auto path = std::filesystem::path(testing::TempDir()) / "tdk_model.json";
  std::filesystem::remove(path);
  model.save(path);
  const auto back = MlpModel::load(path);
  EXPECT_EQ(back, model);
  EXPECT_EQ(back.weight_digest(), model.weight_digest());
  EXPECT_EQ(oracle_fingerprint(back), oracle_fingerprint(model));
  EXPECT_NE(oracle_fingerprint(model), oracle_fingerprint(MlpModel::initialized({4, 4, 3}, 16, 7, RngStream(3))));
}

TEST(Mlp, RejectsWrongShape) {
  const auto model = MlpModel::zeros({4, 4, 3}, 8, 5);
  EXPECT_THROW(model.predict(ImageTensor::filled({4, 4, 1}, 0.0)), ShapeMismatch);
}

TEST(Oracle, ArgmaxTakesFirstMaximum) {
  EXPECT_EQ(argmax({0.1, 0.4, 0.4, 0.1}).index, 1u);
  EXPECT_EQ(argmax({1.0}).index, 0u);
}

TEST(Oracle, EchoSemantics) {
  const EchoOracle echo({2, 2, 1}, 5);
  // round_half_even(p * 4): 0.125 * 4 = 0.5 -> 0, 0.375 * 4 = 1.5 -> 2.
  EXPECT_EQ(predict_label(echo, ImageTensor({2, 2, 1}, {0.125, 0, 0, 0})).index, 0u);
  EXPECT_EQ(predict_label(echo, ImageTensor({2, 2, 1}, {0.375, 0, 0, 0})).index, 2u);
  EXPECT_EQ(predict_label(echo, ImageTensor({2, 2, 1}, {1.0, 0, 0, 0})).index, 4u);
}

TEST(Oracle, ConstantOracleValidates) {
  EXPECT_THROW(ConstantOracle({1, 1, 1}, {0.5, 0.6}), InvalidArgument);
  const ConstantOracle c({1, 1, 1}, {0.25, 0.75});
  EXPECT_EQ(c.predict(ImageTensor::filled({1, 1, 1}, 0.3)), (std::vector<double>{0.25, 0.75}));
}
