// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mimk/errors.hpp"
#include "mimk/metrics.hpp"
#include "mimk/ops.hpp"
#include "test_util.hpp"

namespace mimk {
namespace {

using test::brute_force_ssim;
using test::random_image;

TEST(Ssim, MatchesBruteForceOracle) {
  SplitMix64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Image x = random_image(32, 32, rng), y = random_image(32, 32, rng);
    EXPECT_NEAR(ssim(x, y), brute_force_ssim(x, y), 1e-10);
  }
  // correlated pairs and other window sizes
  for (std::size_t k : {3, 5, 11}) {
    const Image x = random_image(24, 20, rng);
    Image y = x;
    for (auto& v : y.pixels) v = std::clamp(v + rng.uniform(-0.1, 0.1), 0.0, 1.0);
    SsimParams p;
    p.window = k;
    EXPECT_NEAR(ssim(x, y, p), brute_force_ssim(x, y, k), 1e-10) << k;
  }
}

TEST(Ssim, IdentitySymmetryAndBounds) {
  SplitMix64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Image x = random_image(16, 16, rng), y = random_image(16, 16, rng);
    EXPECT_EQ(ssim(x, x), 1.0);
    EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-12);
    EXPECT_LE(ssim(x, y), 1.0);
    EXPECT_GE(ssim(x, y), -1.0);
  }
}

TEST(Ssim, ConstantImages) {
  const Image zero(16, 16, 0.0), one(16, 16, 1.0);
  EXPECT_NEAR(ssim(zero, one), 0.0001 / 1.0001, 1e-15);
  EXPECT_EQ(ssim(one, one), 1.0);
}

TEST(Ssim, DegradesWithNoise) {
  SplitMix64 rng(3);
  const Image x = random_image(32, 32, rng);
  double previous = 1.0;
  for (double amp : {0.02, 0.1, 0.3}) {
    SplitMix64 noise(4);
    Image y = x;
    for (auto& v : y.pixels) v += noise.uniform(-amp, amp);
    const double s = ssim(x, y);
    EXPECT_LT(s, previous);
    previous = s;
  }
}

TEST(Ssim, RejectsBadParamsAndShapes) {
  const Image a(16, 16), b(16, 8), small(5, 5);
  EXPECT_THROW(ssim(a, b), ShapeError);
  SsimParams even;
  even.window = 4;
  EXPECT_THROW(ssim(a, a, even), ContractError);
  SsimParams neg;
  neg.k1 = 0.0;
  EXPECT_THROW(ssim(a, a, neg), ContractError);
  EXPECT_THROW(ssim(small, small), ContractError);
}

TEST(Rmse, OracleAndScaling) {
  const Image a(2, 2, std::vector<double>{0, 1, 2, 3}), b(2, 2, std::vector<double>{1, 1, 0, 3});
  EXPECT_DOUBLE_EQ(rmse(a, b), std::sqrt((1.0 + 0.0 + 4.0 + 0.0) / 4.0));
  EXPECT_DOUBLE_EQ(mean_abs_error(a, b), 3.0 / 4.0);
  EXPECT_EQ(rmse(a, a), 0.0);
  SplitMix64 rng(5);
  const Image x = random_image(8, 8, rng), y = random_image(8, 8, rng);
  Image xs = x, ys = y;
  for (auto& v : xs.pixels) v *= 3.0;
  for (auto& v : ys.pixels) v *= 3.0;
  EXPECT_NEAR(rmse(xs, ys), 3.0 * rmse(x, y), 1e-12);
  EXPECT_NEAR(rmse(x, y), rmse(y, x), 0.0);
  EXPECT_THROW(rmse(x, Image(8, 4)), ShapeError);
  EXPECT_THROW(rmse(Image(), Image()), ContractError);
}

TEST(GradNorm, ThreeFourFiveAndFlattenOracle) {
  Tensor a({1}, {0.0}, true), b({1}, {0.0}, true);
  a.mutable_grad()[0] = 3.0;
  b.mutable_grad()[0] = 4.0;
  EXPECT_EQ(grad_norm({{"a", a}, {"b", b}}), 5.0);

  SplitMix64 rng(6);
  ParamList params;
  double squares = 0.0;
  for (std::size_t n : {3, 7, 1, 12}) {
    Tensor t = Tensor::zeros({n}, true);
    for (auto& g : t.mutable_grad()) {
      g = rng.uniform(-2.0, 2.0);
      squares += g * g;
    }
    params.push_back({"p" + std::to_string(n), t});
  }
  EXPECT_NEAR(grad_norm(params), std::sqrt(squares), 1e-12);
  params.push_back({"missing", Tensor::zeros({2}, true)});
  try {
    grad_norm(params);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
}

TEST(MetricsCsv, RoundTripAndFormat) {
  const std::vector<MetricsRow> rows{{1, 0.5, 0.25, 0.9, 0.8, 1.5, 1e-3},
                                     {2, 0.123456789, 0.2, 0.91, 0.82, 1.25, 5e-4}};
  std::stringstream ss;
  write_metrics_csv(ss, rows);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), kMetricsHeader);
  EXPECT_NE(text.find("2,0.123457,"), std::string::npos) << text;
  const auto back = read_metrics_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].epoch, 1u);
  EXPECT_EQ(back[0].lr, 1e-3);
  EXPECT_EQ(back[1].train_loss, 0.123457);
  EXPECT_EQ(format_g6(1.0 / 3.0), "0.333333");
  std::istringstream bad("epoch,loss\n1,2\n");
  EXPECT_THROW(read_metrics_csv(bad), FormatError);
  std::istringstream short_row(std::string(kMetricsHeader) + "\n1,2,3\n");
  EXPECT_THROW(read_metrics_csv(short_row), FormatError);
}

}  // namespace
}  // namespace mimk
