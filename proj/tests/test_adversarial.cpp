#include <gtest/gtest.h>

#include <cmath>

#include "adet/adversarial.hpp"
#include "adet/error.hpp"
#include "oracles.hpp"

namespace adet {
namespace {

const double kLn2 = std::log(2.0);

TEST(AdvGrl, ForwardIsIdentity) {
  const std::vector<double> v{1.0, -2.5, 0.0};
  EXPECT_EQ(advgrl_forward(v), v);
  const std::vector<double> zeros(5, 0.0);
  EXPECT_EQ(advgrl_forward(zeros), zeros);
  Rng rng(1);
  std::vector<double> r(100);
  for (double& x : r) x = rng.normal() * 1e3;
  EXPECT_EQ(advgrl_forward(r), r);
}

TEST(AdvGrl, BackwardScalesAndFlips) {
  EXPECT_EQ(advgrl_backward(std::vector<double>{0.2, -0.4}, 1.0), (std::vector<double>{-0.2, 0.4}));
  EXPECT_EQ(advgrl_backward(std::vector<double>{1, 1, 1}, 30.0), (std::vector<double>{-30, -30, -30}));
  for (double g : advgrl_backward(std::vector<double>(4, 0.0), 7.0)) EXPECT_EQ(g, 0.0);
}

TEST(AdvGrl, NonFiniteUpstreamIsReported) {
  try {
    advgrl_backward(std::vector<double>{1.0, std::nan("")}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFiniteGradient);
  }
  EXPECT_THROW(advgrl_backward(std::vector<double>{INFINITY}, 1.0), Error);
}

TEST(LambdaAdv, DocumentedValues) {
  const AdversarialConfig d;
  EXPECT_DOUBLE_EQ(compute_lambda_adv(0.5, d), 2.0);
  EXPECT_DOUBLE_EQ(compute_lambda_adv(0.01, d), 30.0);
  EXPECT_DOUBLE_EQ(compute_lambda_adv(0.7, d), 1.0);
  EXPECT_DOUBLE_EQ(compute_lambda_adv(0.63, d), 1.0);
  EXPECT_DOUBLE_EQ(compute_lambda_adv(0.0, d), 30.0);
}

TEST(LambdaAdv, MonotoneAndBounded) {
  const AdversarialConfig d;
  double prev = compute_lambda_adv(1e-6, d);
  for (int i = 1; i <= 4000; ++i) {
    const double lc = i * 0.0005;
    const double v = compute_lambda_adv(lc, d);
    EXPECT_LE(v, prev);
    EXPECT_GE(v, d.lambda0);
    EXPECT_LE(v, d.beta);
    if (lc >= d.alpha) EXPECT_EQ(v, d.lambda0);
    prev = v;
  }
}

TEST(LambdaAdv, DegenerateClipIsConstant) {
  AdversarialConfig c;
  c.beta = 1.0;
  for (double lc : {0.0, 0.01, 0.3, 0.62, 0.63, 5.0}) EXPECT_EQ(compute_lambda_adv(lc, c), 1.0);
}

TEST(AdversarialConfig, Validation) {
  AdversarialConfig c;
  c.beta = 0.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.lambda0 = 0.0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(compute_lambda_adv(-0.1, AdversarialConfig{}), Error);
}

TEST(DomainLabels, AuxiliaryHasNoClassifierLabel) {
  EXPECT_EQ(domain_ground_truth(Domain::kSource), 1.0);
  EXPECT_EQ(domain_ground_truth(Domain::kTarget), 0.0);
  try {
    domain_ground_truth(Domain::kAuxiliary);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(ImageDomainClassifier, ZeroOutputLayerGivesHalf) {
  Rng rng(2);
  ImageDomainClassifier clf(4, 8, 3);
  clf.zero_output_layer();
  FeatureMap f{Tensor3(4, 3, 5), 16, 48, 80};
  for (double& v : f.activations.values()) v = rng.normal();
  const auto p = clf.forward(f, nullptr);
  ASSERT_EQ(p.size(), 15u);
  for (double v : p.probabilities) EXPECT_EQ(v, 0.5);
  EXPECT_EQ(p.mean(), 0.5);
}

TEST(ImageDomainClassifier, PerLocationThenMean) {
  const auto p = DomainPrediction::from_logits({0.0, 0.0, std::log(3.0), std::log(3.0)});
  EXPECT_NEAR(p.mean(), 0.625, 1e-15);
  const auto c = DomainPrediction::from_logits(std::vector<double>(6, 1.3));
  EXPECT_NEAR(c.mean(), 1.0 / (1.0 + std::exp(-1.3)), 1e-15);
}

TEST(ObjectDomainClassifier, ZeroOutputLayerIdenticalRowsAndEmpty) {
  Rng rng(4);
  ObjectDomainClassifier clf(6, 5, 4, 5);
  RowMatrix x(3, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  x.row(2) = x.row(0);
  const auto p = clf.forward(x, nullptr);
  EXPECT_EQ(p.probabilities[0], p.probabilities[2]);
  EXPECT_EQ(clf.forward(RowMatrix(0, 6), nullptr).size(), 0u);
  clf.zero_output_layer();
  const auto zeroed = clf.forward(x, nullptr);
  for (double v : zeroed.probabilities) EXPECT_EQ(v, 0.5);
  EXPECT_NEAR(DomainPrediction::from_logits({std::log(9.0)}).probabilities[0], 0.9, 1e-15);
}

TEST(DomainLoss, HalfProbabilityGivesLn2) {
  const std::vector<Domain> labels{Domain::kSource, Domain::kTarget};
  const std::vector<DomainPrediction> preds{DomainPrediction::from_probabilities(std::vector<double>(4, 0.5)),
                                            DomainPrediction::from_probabilities(std::vector<double>(6, 0.5))};
  EXPECT_NEAR(image_domain_loss(preds, labels).value, kLn2, 1e-12);
  EXPECT_NEAR(object_domain_loss(preds, labels).value, kLn2, 1e-12);
  EXPECT_NEAR(kLn2, 0.693147, 1e-6);
}

TEST(DomainLoss, PerfectPredictionsAreNearZero) {
  const std::vector<DomainPrediction> src{DomainPrediction::from_probabilities({1.0, 1.0})};
  const std::vector<Domain> s{Domain::kSource};
  EXPECT_NEAR(image_domain_loss(src, s).value, 0.0, 1e-6);
  const std::vector<DomainPrediction> tgt{DomainPrediction::from_probabilities({0.0, 0.0, 0.0})};
  const std::vector<Domain> t{Domain::kTarget};
  EXPECT_NEAR(object_domain_loss(tgt, t).value, 0.0, 1e-6);
  EXPECT_TRUE(std::isfinite(binary_cross_entropy(0.0, 1.0)));
}

TEST(DomainLoss, ImageLevelAveragesPerImageMeans) {
  // Per-image BCE 0.2 (source) and 0.6 (target).
  const std::vector<DomainPrediction> preds{
      DomainPrediction::from_probabilities(std::vector<double>(3, std::exp(-0.2))),
      DomainPrediction::from_probabilities(std::vector<double>(7, 1.0 - std::exp(-0.6)))};
  const std::vector<Domain> labels{Domain::kSource, Domain::kTarget};
  EXPECT_NEAR(image_domain_loss(preds, labels).value, 0.4, 1e-12);
}

TEST(DomainLoss, ObjectLevelAveragesAllProposals) {
  // BCE values 0.1, 0.3 (source) and 0.8 (target).
  const std::vector<DomainPrediction> preds{
      DomainPrediction::from_probabilities({std::exp(-0.1), std::exp(-0.3)}),
      DomainPrediction::from_probabilities({1.0 - std::exp(-0.8)})};
  const std::vector<Domain> labels{Domain::kSource, Domain::kTarget};
  EXPECT_NEAR(object_domain_loss(preds, labels).value, 0.4, 1e-12);
  const std::vector<DomainPrediction> empty{DomainPrediction{}, DomainPrediction{}};
  EXPECT_EQ(object_domain_loss(empty, labels).value, 0.0);
}

TEST(DomainLoss, InvariantUnderProposalPermutation) {
  Rng rng(6);
  std::vector<double> z(9);
  for (double& v : z) v = 2 * rng.normal();
  std::vector<double> shuffled = z;
  rng.shuffle(std::span<double>(shuffled));
  const std::vector<Domain> labels{Domain::kTarget};
  const std::vector<DomainPrediction> a{DomainPrediction::from_logits(z)};
  const std::vector<DomainPrediction> b{DomainPrediction::from_logits(shuffled)};
  EXPECT_NEAR(object_domain_loss(a, labels).value, object_domain_loss(b, labels).value, 1e-14);
  EXPECT_NEAR(image_domain_loss(a, labels).value, image_domain_loss(b, labels).value, 1e-14);
}

TEST(DomainLoss, LogitGradientsMatchFiniteDifferences) {
  Rng rng(7);
  std::vector<double> z1(5), z2(3);
  for (double& v : z1) v = rng.normal();
  for (double& v : z2) v = rng.normal();
  const std::vector<Domain> labels{Domain::kSource, Domain::kTarget};
  auto eval = [&](bool image) {
    const std::vector<DomainPrediction> p{DomainPrediction::from_logits(z1), DomainPrediction::from_logits(z2)};
    return image ? image_domain_loss(p, labels) : object_domain_loss(p, labels);
  };
  for (bool image : {true, false}) {
    const DomainLoss l = eval(image);
    for (std::size_t i = 0; i < z1.size(); ++i)
      EXPECT_LT(oracle::relative_error(l.logit_grads[0][i],
                                       oracle::central_difference([&] { return eval(image).value; }, z1[i])),
                1e-4);
    for (std::size_t i = 0; i < z2.size(); ++i)
      EXPECT_LT(oracle::relative_error(l.logit_grads[1][i],
                                       oracle::central_difference([&] { return eval(image).value; }, z2[i])),
                1e-4);
  }
}

TEST(DomainLoss, AuxiliaryLabelIsRejected) {
  const std::vector<DomainPrediction> p{DomainPrediction::from_logits({0.0})};
  const std::vector<Domain> labels{Domain::kAuxiliary};
  EXPECT_THROW(image_domain_loss(p, labels), Error);
}

TEST(ImageDomainClassifier, BackwardMatchesFiniteDifferences) {
  Rng rng(8);
  ImageDomainClassifier clf(3, 5, 9);
  FeatureMap f{Tensor3(3, 2, 3), 16, 32, 48};
  for (double& v : f.activations.values()) v = rng.normal();
  const std::vector<Domain> labels{Domain::kSource};
  auto loss = [&] {
    const std::vector<DomainPrediction> p{clf.forward(f, nullptr)};
    return image_domain_loss(p, labels).value;
  };
  ImageDomainClassifier::Cache cache;
  const std::vector<DomainPrediction> p{clf.forward(f, &cache)};
  const DomainLoss l = image_domain_loss(p, labels);
  zero_grads(clf.parameters());
  const Tensor3 gf = clf.backward(l.logit_grads[0], cache, 2, 3);
  for (std::size_t i = 0; i < f.activations.size(); ++i)
    EXPECT_LT(oracle::relative_error(gf.values()[i], oracle::central_difference(loss, f.activations.values()[i])),
              1e-4);
  for (Param* prm : clf.parameters())
    for (Eigen::Index i = 0; i < prm->value.size(); ++i)
      EXPECT_LT(oracle::relative_error(prm->grad.data()[i], oracle::central_difference(loss, prm->value.data()[i])),
                1e-4);
}

}  // namespace
}  // namespace adet
