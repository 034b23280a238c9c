#include <gtest/gtest.h>

#include "salattack/losses.hpp"
#include "test_util.hpp"

using namespace salattack;
using testutil::numeric_gradient;
using testutil::random_tensor;
using testutil::relative_error;

namespace {

using LossFn = LossValue (*)(const Tensor&, const Tensor&);

double fd_error(LossFn fn, const Tensor& adv, const Tensor& ref) {
  const auto lv = fn(adv, ref);
  return relative_error(lv.grad, numeric_gradient([&](const Tensor& a) { return fn(a, ref).value; }, adv));
}

}  // namespace

class LossGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(LossGradient, KlMatchesFiniteDifferences) {
  const auto s = GetParam();
  EXPECT_LT(fd_error(losses::kl_channelwise, random_tensor({4, 8, 8}, s, 0, 2), random_tensor({4, 8, 8}, s + 1, 0, 2)),
            1e-4);
}

TEST_P(LossGradient, CcMatchesFiniteDifferences) {
  const auto s = GetParam();
  EXPECT_LT(fd_error(losses::cc_loss, random_tensor({4, 8, 8}, s), random_tensor({4, 8, 8}, s + 1)), 1e-4);
}

TEST_P(LossGradient, NssMatchesFiniteDifferences) {
  const auto s = GetParam();
  EXPECT_LT(fd_error(losses::nss_loss, random_tensor({4, 8, 8}, s), random_tensor({4, 8, 8}, s + 1)), 1e-3);
}

TEST_P(LossGradient, L1MatchesFiniteDifferences) {
  const auto s = GetParam();
  EXPECT_LT(fd_error(losses::l1_loss, random_tensor({4, 8, 8}, s), random_tensor({4, 8, 8}, s + 1)), 1e-4);
}

TEST_P(LossGradient, MixMatchesFiniteDifferences) {
  const auto s = GetParam();
  const Tensor adv = random_tensor({3, 6, 6}, s, 0, 1), ref = random_tensor({3, 6, 6}, s + 1, 0, 1);
  const MixWeights w{0.5, 2, 0.25, 1};
  const auto lv = losses::mix_loss(adv, ref, w);
  const auto num = numeric_gradient([&](const Tensor& a) { return losses::mix_loss(a, ref, w).value; }, adv);
  EXPECT_LT(relative_error(lv.grad, num), 1e-3);
}

INSTANTIATE_TEST_SUITE_P(Seeds, LossGradient, ::testing::Values(1u, 2u, 3u, 4u));

TEST(KlLoss, MatchesClosedFormOfNormalizedMaps) {
  const Tensor adv = random_tensor({2, 4, 5}, 10, 0, 3), ref = random_tensor({2, 4, 5}, 11, 0, 3);
  double expect = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    auto norm = [&](std::span<const double> a) {
      const double lo = *std::min_element(a.begin(), a.end());
      double s = 0;
      for (double v : a) s += v - lo;
      std::vector<double> p;
      for (double v : a) p.push_back((v - lo + losses::kEpsilon) / (s + losses::kEpsilon * a.size()));
      return p;
    };
    const auto p = norm(adv.channel(c)), q = norm(ref.channel(c));
    double sum_p = 0;
    for (double v : p) sum_p += v;
    EXPECT_NEAR(sum_p, 1.0, 1e-15);
    expect += losses::kl_divergence(p, q) / 2;
  }
  EXPECT_NEAR(losses::kl_channelwise(adv, ref).value, expect, 1e-12);
}

TEST(KlLoss, ZeroWithZeroGradientAtIdentity) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor x = random_tensor({4, 8, 8}, s, 0, 1);
    const auto lv = losses::kl_channelwise(x, x);
    EXPECT_NEAR(lv.value, 0.0, 1e-12);
    EXPECT_LE(lv.grad.max_abs(), 1e-9);
  }
}

TEST(KlLoss, ConstantChannelsAreFinite) {
  const Tensor flat({2, 4, 4}, 0.3);
  const auto lv = losses::kl_channelwise(flat, random_tensor({2, 4, 4}, 1, 0, 1));
  EXPECT_TRUE(std::isfinite(lv.value));
  EXPECT_TRUE(lv.grad.all_finite());
}

TEST(CcLoss, SelfCorrelationIsOneAndAffineInvariant) {
  const Tensor x = random_tensor({3, 8, 8}, 20);
  EXPECT_NEAR(losses::cc_loss(x, x).value, 1.0, 1e-12);
  EXPECT_NEAR(losses::cc_distance(x, x).value, 0.0, 1e-12);
  EXPECT_NEAR(losses::cc_loss(x * 3.0 + Tensor(x.shape(), 5.0), x).value, 1.0, 1e-12);
  EXPECT_NEAR(losses::cc_loss(x * -1.0, x).value, -1.0, 1e-12);
}

TEST(CcLoss, FlatChannelContributesZero) {
  const auto lv = losses::cc_loss(Tensor({1, 4, 4}, 2.0), random_tensor({1, 4, 4}, 1));
  EXPECT_EQ(lv.value, 0.0);
  EXPECT_EQ(lv.grad.max_abs(), 0.0);
}

TEST(NssLoss, DistanceIsZeroAtIdentity) {
  const Tensor x = random_tensor({3, 8, 8}, 21);
  EXPECT_NEAR(losses::nss_distance(x, x).value, 0.0, 1e-12);
  EXPECT_GT(losses::nss_loss(x, x).value, 0.0);
}

TEST(L1Loss, ValueAndSubgradientAtZero) {
  const Tensor a({1, 1, 2}, std::vector<double>{1, 2}), b({1, 1, 2}, std::vector<double>{0, 2});
  const auto lv = losses::l1_loss(a, b);
  EXPECT_DOUBLE_EQ(lv.value, 0.5);
  EXPECT_DOUBLE_EQ(lv.grad[0], 0.5);
  EXPECT_DOUBLE_EQ(lv.grad[1], 0.0);
}

TEST(Losses, ShapeMismatchThrows) {
  EXPECT_THROW(losses::kl_channelwise(Tensor({1, 2, 2}), Tensor({1, 2, 3})), std::invalid_argument);
  EXPECT_THROW(losses::cc_loss(Tensor({4}), Tensor({4})), std::invalid_argument);
  EXPECT_THROW(losses::mix_loss(Tensor({1, 2, 2}), Tensor({1, 2, 2}), MixWeights{0, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(loss_kind_from_string("huber"), std::invalid_argument);
  EXPECT_EQ(loss_kind_from_string("KL"), LossKind::KL);
}

TEST(Losses, DistanceOrientation) {
  // Every distance is 0 at identity and positive elsewhere.
  const Tensor a = random_tensor({2, 6, 6}, 30, 0, 1), b = random_tensor({2, 6, 6}, 31, 0, 1);
  for (auto k : {LossKind::KL, LossKind::CC, LossKind::NSS, LossKind::L1, LossKind::Mix}) {
    EXPECT_NEAR(losses::distance(k, a, a).value, 0.0, 1e-12) << to_string(k);
    EXPECT_GT(losses::distance(k, a, b).value, 0.0) << to_string(k);
  }
}

TEST(MixCalibration, BalancesComponentMagnitudes) {
  std::vector<std::pair<Tensor, Tensor>> pairs;
  for (std::uint64_t s = 0; s < 4; ++s)
    pairs.emplace_back(random_tensor({2, 6, 6}, s, 0, 1), random_tensor({2, 6, 6}, s + 10, 0, 1));
  const auto w = losses::calibrate_mix_weights(pairs);
  double kl = 0, l1 = 0;
  for (const auto& [a, b] : pairs) {
    kl += w.kl * losses::kl_channelwise(a, b).value;
    l1 += w.l1 * losses::l1_loss(a, b).value;
  }
  EXPECT_NEAR(kl / 4, 1.0, 1e-12);
  EXPECT_NEAR(l1 / 4, 1.0, 1e-12);
  EXPECT_THROW(losses::calibrate_mix_weights({}), std::invalid_argument);
}
