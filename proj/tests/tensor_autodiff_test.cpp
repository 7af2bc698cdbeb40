// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mimk/errors.hpp"
#include "mimk/gradcheck.hpp"
#include "mimk/layers.hpp"
#include "mimk/ops.hpp"
#include "mimk/rng.hpp"
#include "test_util.hpp"

namespace mimk {
namespace {

using test::random_tensor;

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensor({0, 2}, {}), ShapeError);
}

TEST(Matmul, IdentityAndHandArithmetic) {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {1, 2, 3, 4});
  const Tensor r = matmul(eye, m);
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()),
            (std::vector<double>{1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})).item(), 11.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientOfSumIsOnesTimesBTransposed) {
  SplitMix64 rng(3);
  Tensor a = random_tensor({3, 4}, rng, true);
  Tensor b = random_tensor({4, 2}, rng, false);
  {
    Tape tape;
    tape.backward(sum(matmul(a, b)));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t p = 0; p < 4; ++p) {
      const double expected = b.at(p * 2) + b.at(p * 2 + 1);
      EXPECT_NEAR(a.grad()[i * 4 + p], expected, 1e-14);
    }
  }
  EXPECT_LT(check_gradients([&] { return sum(matmul(a, b)); }, {a}).max_rel_error, 1e-6);
}

TEST(Matmul, AssociativeWithinTolerance) {
  SplitMix64 rng(11);
  const Tensor a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng),
               c = random_tensor({3, 6}, rng);
  const Tensor l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
  for (std::size_t i = 0; i < l.numel(); ++i) EXPECT_NEAR(l.at(i), r.at(i), 1e-10);
}

TEST(Softmax, UniformAndStable) {
  const Tensor u = softmax(Tensor({4}, {0, 0, 0, 0}), 0);
  for (double v : u.data()) EXPECT_DOUBLE_EQ(v, 0.25);
  const Tensor s = softmax(Tensor({2}, {1000, 0}), 0);
  EXPECT_NEAR(s.at(0), 1.0, 1e-12);
  EXPECT_GE(s.at(1), 0.0);
  EXPECT_TRUE(std::isfinite(s.at(1)));
}

TEST(Softmax, RowsSumToOneAndPositive) {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({3, 7}, rng, false, 20.0);
    const Tensor s = softmax(x, 1);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        EXPECT_GT(s.at(r * 7 + c), 0.0);
        total += s.at(r * 7 + c);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, JacobianMatchesFiniteDifferences) {
  SplitMix64 rng(6);
  Tensor x = random_tensor({5}, rng, true);
  const Tensor w = random_tensor({5}, rng);
  EXPECT_LT(check_gradients([&] { return sum(mul(softmax(x, 0), w)); }, {x}).max_rel_error, 1e-6);
  Tensor y = random_tensor({3, 4}, rng, true);
  const Tensor wy = random_tensor({3, 4}, rng);
  EXPECT_LT(check_gradients([&] { return sum(mul(softmax(y, 0), wy)); }, {y}).max_rel_error, 1e-6);
}

TEST(LayerNorm, ConstantRowAndNormalizedRow) {
  const Tensor g = Tensor::filled({3}, 1.0), b = Tensor::zeros({3});
  const Tensor flat = layer_norm(Tensor({1, 3}, {4, 4, 4}), g, b);
  for (double v : flat.data()) EXPECT_EQ(v, 0.0);
  const Tensor r = layer_norm(Tensor({1, 2}, {1, -1}), Tensor::filled({2}, 1.0),
                              Tensor::zeros({2}), 1e-14);
  EXPECT_NEAR(r.at(0), 1.0, 1e-12);
  EXPECT_NEAR(r.at(1), -1.0, 1e-12);
}

TEST(LayerNorm, GradientCheck) {
  SplitMix64 rng(8);
  Tensor x = random_tensor({3, 6}, rng, true);
  Tensor g = random_tensor({6}, rng, true), b = random_tensor({6}, rng, true);
  const Tensor w = random_tensor({3, 6}, rng);
  EXPECT_LT(check_gradients([&] { return sum(mul(layer_norm(x, g, b), w)); }, {x, g, b})
                .max_rel_error,
            1e-5);
}

TEST(Gelu, ValuesAndGradient) {
  EXPECT_EQ(gelu(Tensor({1}, {0.0})).item(), 0.0);
  EXPECT_NEAR(gelu(Tensor({1}, {10.0})).item(), 10.0, 1e-6);
  // x * Phi(x) at x = 1 with Phi from erfc.
  EXPECT_NEAR(gelu(Tensor({1}, {1.0})).item(), 0.5 * std::erfc(-1.0 / std::sqrt(2.0)), 1e-15);
  SplitMix64 rng(9);
  Tensor x = random_tensor({10}, rng, true, 3.0);
  EXPECT_LT(check_gradients([&] { return sum(gelu(x)); }, {x}).max_rel_error, 1e-6);
}

TEST(Conv2d, ScalingAndSumKernels) {
  SplitMix64 rng(10);
  const Tensor x = random_tensor({1, 4, 5}, rng);
  const Tensor doubled = conv2d(x, Tensor({1, 1, 1, 1}, {2.0}));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(doubled.at(i), 2.0 * x.at(i));
  const Tensor s = conv2d(Tensor::filled({1, 3, 3}, 1.0), Tensor::filled({1, 1, 3, 3}, 1.0));
  EXPECT_EQ(s.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(s.item(), 9.0);
}

TEST(Conv2d, MatchesDirectLoopOracle) {
  SplitMix64 rng(12);
  const Tensor x = random_tensor({2, 7, 7}, rng), w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor y = conv2d(x, w, 2);
  ASSERT_EQ(y.shape(), (Shape{3, 3, 3}));
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < 2; ++c) {
          for (std::size_t u = 0; u < 3; ++u) {
            for (std::size_t v = 0; v < 3; ++v) {
              acc += x.at(c * 49 + (2 * i + u) * 7 + 2 * j + v) * w.at(((o * 2 + c) * 3 + u) * 3 + v);
            }
          }
        }
        EXPECT_NEAR(y.at((o * 3 + i) * 3 + j), acc, 1e-14);
      }
    }
  }
}

TEST(Conv2d, RejectsBadShapesAndChecksGradients) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 2, 3, 3})), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 6, 6}), Tensor::zeros({1, 1, 3, 3}), 2), ShapeError);
  SplitMix64 rng(13);
  Tensor x = random_tensor({2, 5, 5}, rng, true), w = random_tensor({2, 2, 3, 3}, rng, true);
  const Tensor m = random_tensor({2, 2, 2}, rng);
  EXPECT_LT(check_gradients([&] { return sum(mul(conv2d(x, w, 2), m)); }, {x, w}).max_rel_error,
            1e-5);
}

TEST(Backward, AnalyticCases) {
  Tensor x({3}, {1, 2, 3}, true);
  {
    Tape tape;
    tape.backward(sum(mul(x, x)));
  }
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4, 6}));
  Tensor y({1}, {5.0}, true);
  {
    Tape tape;
    tape.backward(sum(add(y, y)));
  }
  EXPECT_EQ(y.grad()[0], 2.0);
}

TEST(Backward, RejectsNonScalarAndDisconnectedLoss) {
  Tensor x({2}, {1, 2}, true);
  Tape tape;
  const Tensor y = scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
  EXPECT_THROW(tape.backward(Tensor::scalar(1.0)), ContractError);
}

TEST(Backward, GradientsAccumulateUntilZeroed) {
  Tensor x({1}, {3.0}, true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(scale(x, 2.0)));
  }
  EXPECT_EQ(x.grad()[0], 4.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Tape, InputsPrecedeConsumers) {
  SplitMix64 rng(14);
  Tensor a = random_tensor({2, 3}, rng, true);
  Tape tape;
  const Tensor b = gelu(matmul(a, random_tensor({3, 3}, rng)));
  const Tensor loss = sum(softmax(b, 1));
  for (std::size_t id = 0; id < tape.size(); ++id) {
    for (auto in : tape.input_ids(id)) EXPECT_LT(in, id);
  }
  tape.backward(loss);
}

TEST(Tape, NothingRecordedWithoutActiveTape) {
  Tensor x({2}, {1, 2}, true);
  const Tensor y = scale(x, 2.0);
  EXPECT_FALSE(y.tape_id().has_value());
}

TEST(CheckGradients, TrivialCases) {
  // Dyadic inputs and step keep every central difference of sum(x) exact.
  Tensor x({4}, {0.25, -0.5, 1.0, 1.5}, true);
  EXPECT_EQ(check_gradients([&] { return sum(x); }, {x}, std::ldexp(1.0, -17)).max_rel_error, 0.0);
  EXPECT_LT(check_gradients([&] { return sum(x); }, {x}).max_rel_error, 1e-10);
  Tensor q({2}, {1, 2}, true);
  EXPECT_LT(check_gradients([&] { return sum(mul(q, q)); }, {q}, 1e-5).max_rel_error, 1e-9);
  EXPECT_THROW(check_gradients([&] { return sum(q); }, {q}, 0.0), ContractError);
  EXPECT_THROW(check_gradients([&] { return sum(q); }, {q}, 0.1), ContractError);
}

TEST(CheckGradients, ThreeLayerMlp) {
  SplitMix64 rng(15);
  Tensor x = random_tensor({4, 5}, rng, true);
  Linear l1(5, 8, rng), l2(8, 8, rng), l3(8, 2, rng);
  std::vector<Tensor> inputs{x, l1.weight, l1.bias, l2.weight, l2.bias, l3.weight, l3.bias};
  for (auto& t : inputs) {
    for (auto& v : t.mutable_data()) v = rng.uniform(-1.0, 1.0);
  }
  auto f = [&] { return mean(gelu(l3.forward(gelu(l2.forward(gelu(l1.forward(x))))))); };
  EXPECT_LT(check_gradients(f, inputs).max_rel_error, 1e-5);
}

TEST(Ops, EveryDifferentiableOpPassesFiniteDifferences) {
  SplitMix64 rng(16);
  Tensor a = random_tensor({3, 4}, rng, true), b = random_tensor({3, 4}, rng, true);
  Tensor bias = random_tensor({4}, rng, true), chan = random_tensor({3}, rng, true);
  const Tensor w = random_tensor({3, 4}, rng);
  auto check = [&](const std::function<Tensor()>& f, std::vector<Tensor> in) {
    return check_gradients(f, std::move(in)).max_rel_error;
  };
  EXPECT_LT(check([&] { return sum(mul(add(a, b), w)); }, {a, b}), 1e-4);
  EXPECT_LT(check([&] { return sum(mul(sub(a, b), w)); }, {a, b}), 1e-4);
  EXPECT_LT(check([&] { return sum(mul(mul(a, b), w)); }, {a, b}), 1e-4);
  EXPECT_LT(check([&] { return sum(mul(scale(a, -1.5), w)); }, {a}), 1e-4);
  EXPECT_LT(check([&] { return sum(mul(add_rowwise(a, bias), w)); }, {a, bias}), 1e-4);
  EXPECT_LT(check([&] { return sum(mul(add_channelwise(a, chan), w)); }, {a, chan}), 1e-4);
  EXPECT_LT(check([&] { return mean(mul(a, w)); }, {a}), 1e-4);
  Tensor lw = random_tensor({4, 2}, rng, true), lb = random_tensor({2}, rng, true);
  EXPECT_LT(check([&] { return sum(gelu(linear(a, lw, lb))); }, {a, lw, lb}), 1e-4);
  EXPECT_LT(check([&] { return sum(mul(reshape(a, {4, 3}), reshape(w, {4, 3}))); }, {a}), 1e-4);
  EXPECT_LT(check([&] { return sum(mul(permute(a, {1, 0}), permute(w, {1, 0}))); }, {a}), 1e-4);
  Tensor img = random_tensor({2, 3, 3}, rng, true);
  const Tensor pw = random_tensor({2, 5, 5}, rng);
  EXPECT_LT(check([&] { return sum(mul(pad2d(img, 1), pw)); }, {img}), 1e-4);
  const std::vector<std::size_t> src{5, kZeroIndex, 0, 11, 5, 2};
  EXPECT_LT(check([&] { return sum(gelu(gather(a, {2, 3}, src))); }, {a}), 1e-4);
  Tensor tok = random_tensor({4}, rng, true);
  EXPECT_LT(check([&] { return sum(mul(replace_rows(a, {1, 0, 1}, tok), w)); }, {a, tok}), 1e-4);
  const std::vector<double> target(12, 0.1);
  std::vector<double> weights(12, 0.0);
  weights[1] = weights[4] = weights[7] = 1.0;
  EXPECT_LT(check([&] { return weighted_l1(a, target, weights); }, {a}), 1e-4);
}

TEST(Attention, GradientsWithMask) {
  SplitMix64 rng(17);
  Tensor q = random_tensor({2, 3, 4}, rng, true), k = random_tensor({2, 3, 4}, rng, true),
         v = random_tensor({2, 3, 4}, rng, true);
  std::vector<double> mask(9, 0.0);
  mask[1] = mask[3] = -1e9;
  const Tensor w = random_tensor({2, 3, 4}, rng);
  auto f = [&] { return sum(mul(attention(q, k, v, 0.5, mask, 2), w)); };
  EXPECT_LT(check_gradients(f, {q, k, v}).max_rel_error, 1e-4);
}

TEST(Attention, MatchesDirectFormula) {
  SplitMix64 rng(18);
  const Tensor q = random_tensor({1, 3, 2}, rng), k = random_tensor({1, 3, 2}, rng),
               v = random_tensor({1, 3, 2}, rng);
  const Tensor out = attention(q, k, v, 0.7);
  for (std::size_t i = 0; i < 3; ++i) {
    double logits[3], z = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      logits[j] = 0.7 * (q.at(i * 2) * k.at(j * 2) + q.at(i * 2 + 1) * k.at(j * 2 + 1));
      z += std::exp(logits[j]);
    }
    for (std::size_t d = 0; d < 2; ++d) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 3; ++j) acc += std::exp(logits[j]) / z * v.at(j * 2 + d);
      EXPECT_NEAR(out.at(i * 2 + d), acc, 1e-14);
    }
  }
}

TEST(Reshape, PermuteRoundTripIsBitExact) {
  SplitMix64 rng(19);
  const Tensor x = random_tensor({2, 3, 4}, rng);
  const Tensor p = permute(x, {2, 0, 1});
  const Tensor back = permute(p, {1, 2, 0});
  EXPECT_EQ(std::vector<double>(back.data().begin(), back.data().end()),
            std::vector<double>(x.data().begin(), x.data().end()));
  const Tensor r = reshape(reshape(x, {6, 4}), {2, 3, 4});
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()),
            std::vector<double>(x.data().begin(), x.data().end()));
  EXPECT_THROW(reshape(x, {5, 5}), ShapeError);
}

TEST(Determinism, SameSeedSameBits) {
  auto run = [] {
    SplitMix64 rng(21);
    const Tensor a = random_tensor({4, 6}, rng), b = random_tensor({6, 3}, rng);
    const Tensor y = softmax(gelu(matmul(a, b)), 1);
    return std::vector<double>(y.data().begin(), y.data().end());
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace mimk
