#include <gtest/gtest.h>

#include <cmath>

#include "adet/detector.hpp"
#include "adet/error.hpp"
#include "adet/evaluation.hpp"
#include "oracles.hpp"

namespace adet {
namespace {

DetectorConfig tiny_config() {
  DetectorConfig cfg;
  cfg.categories = {"a", "b"};
  cfg.backbone_channels = {4, 6};
  cfg.rpn_channels = 6;
  cfg.anchor_size = 8.0;
  cfg.head_hidden = 8;
  cfg.pool_size = 2;
  return cfg;
}

Image random_image(Rng& rng, int h, int w) {
  Image img(h, w);
  for (double& v : img.mutable_pixels().values()) v = rng.uniform();
  return img;
}

TEST(Detector, FeatureShapeAtDeskScale) {
  const Detector det = Detector::create(DetectorConfig{}, 1);
  const FeatureMap f = det.extract_features(Image(128, 256, 0.3));
  EXPECT_EQ(f.channels(), 64);
  EXPECT_EQ(f.height(), 8);
  EXPECT_EQ(f.width(), 16);
  EXPECT_EQ(f.stride, 16);
}

TEST(Detector, FeatureShapeAtCityscapesResolution) {
  const Detector det = Detector::create(DetectorConfig{}, 1);
  const FeatureMap f = det.extract_features(Image(1024, 2048, 0.3));
  EXPECT_EQ(f.height(), 64);
  EXPECT_EQ(f.width(), 128);
}

TEST(Detector, FeatureShapeRoundsUp) {
  const Detector det = Detector::create(DetectorConfig{}, 1);
  const FeatureMap f = det.extract_features(Image(17, 33, 0.3));
  EXPECT_EQ(f.height(), 2);  // ceil(17 / 16)
  EXPECT_EQ(f.width(), 3);
}

TEST(Detector, ZeroFinalLayerGivesZeroFeatures) {
  Detector det = Detector::create(DetectorConfig{}, 1);
  det.backbone().back().zero_init();
  const FeatureMap f = det.extract_features(Image(64, 64, 0.0));
  for (double v : f.activations.values()) EXPECT_EQ(v, 0.0);
}

TEST(Detector, RejectsImageSmallerThanStride) {
  const Detector det = Detector::create(DetectorConfig{}, 1);
  try {
    det.extract_features(Image(8, 64, 0.1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
}

TEST(Detector, UninitializedDetectorRefusesInference) {
  const Detector det;
  try {
    det.detect(Image(32, 32, 0.1), 0.5, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotInitialized);
  }
}

TEST(Detector, SameSeedSameWeights) {
  Rng rng(3);
  const Image img = random_image(rng, 32, 48);
  const Detector a = Detector::create(tiny_config(), 9), b = Detector::create(tiny_config(), 9);
  EXPECT_EQ(a.extract_features(img).activations, b.extract_features(img).activations);
}

TEST(BoxCoding, RoundTrip) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Box ref{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(60, 120), rng.uniform(60, 120)};
    const Box tgt{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(60, 120), rng.uniform(60, 120)};
    for (const auto& weights : {kRpnBoxWeights, kHeadBoxWeights}) {
      const Box back = decode_box(ref, encode_box(ref, tgt, weights), weights);
      EXPECT_NEAR(back.x1, tgt.x1, 1e-9);
      EXPECT_NEAR(back.y1, tgt.y1, 1e-9);
      EXPECT_NEAR(back.x2, tgt.x2, 1e-9);
      EXPECT_NEAR(back.y2, tgt.y2, 1e-9);
    }
  }
}

TEST(Anchors, CentredOnCellsInDocumentedOrder) {
  const std::vector<double> ratios{0.5, 1.0, 2.0};
  const auto anchors = make_anchors(2, 3, 16, 32.0, ratios);
  ASSERT_EQ(anchors.size(), 18u);
  // (y=1, x=2, ratio=1.0) -> index (1 * 3 + 2) * 3 + 1.
  const Box& a = anchors[(1 * 3 + 2) * 3 + 1];
  EXPECT_DOUBLE_EQ(0.5 * (a.x1 + a.x2), 2 * 16 + 8);
  EXPECT_DOUBLE_EQ(0.5 * (a.y1 + a.y2), 1 * 16 + 8);
  EXPECT_NEAR(a.width(), 32.0, 1e-9);
  EXPECT_NEAR(a.height(), 32.0, 1e-9);
  for (const Box& b : anchors) EXPECT_NEAR(b.area(), 32.0 * 32.0, 1e-6);
}

TEST(Nms, IdenticalBoxesKeepTheBest) {
  const std::vector<Box> boxes{{0, 0, 10, 10}, {0, 0, 10, 10}};
  const std::vector<double> scores{0.8, 0.9};
  const auto keep = nms(boxes, scores, 0.5);
  ASSERT_EQ(keep.size(), 1u);
  EXPECT_EQ(keep[0], 1u);
}

TEST(Nms, MatchesExhaustiveGreedyOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 3 + static_cast<int>(rng.index(6));
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) {
      const double x = rng.uniform(0, 20), y = rng.uniform(0, 20);
      boxes.push_back({x, y, x + rng.uniform(5, 15), y + rng.uniform(5, 15)});
      scores.push_back(rng.uniform());
    }
    EXPECT_EQ(nms(boxes, scores, 0.3), oracle::brute_force_nms(boxes, scores, 0.3));
  }
}

TEST(Proposals, OrderedCappedAndClipped) {
  const std::vector<Box> anchors{{10, 10, 30, 30}, {60, 10, 80, 30}, {-20, -20, 20, 20}};
  const std::vector<double> logits{std::log(0.2 / 0.8), std::log(0.9 / 0.1), std::log(0.5 / 0.5)};
  const RowMatrix deltas = RowMatrix::Zero(3, 4);
  const auto all = select_proposals(anchors, logits, deltas, 100, 50, 100, 0.7, 10);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_NEAR(all[0].objectness, 0.9, 1e-12);
  EXPECT_NEAR(all[1].objectness, 0.5, 1e-12);
  EXPECT_NEAR(all[2].objectness, 0.2, 1e-12);
  EXPECT_EQ(all[1].box, (Box{0, 0, 20, 20}));
  EXPECT_EQ(select_proposals(anchors, logits, deltas, 100, 50, 100, 0.7, 1).size(), 1u);
}

TEST(Proposals, DetectorRespectsCap) {
  Rng rng(6);
  const Detector det = Detector::create(tiny_config(), 2);
  const FeatureMap f = det.extract_features(random_image(rng, 32, 32));
  EXPECT_LE(det.propose_regions(f, 1).size(), 1u);
  for (const auto& p : det.propose_regions(f, 20)) {
    EXPECT_GE(p.box.x1, 0.0);
    EXPECT_GE(p.box.y1, 0.0);
    EXPECT_LE(p.box.x2, 32.0);
    EXPECT_LE(p.box.y2, 32.0);
  }
}

TEST(RoiPooling, RampOracle) {
  // 14x14 ramp at stride 1, one box covering it all: each 7x7 bin is a 2x2 block.
  FeatureMap f{Tensor3(2, 14, 14), 1, 14, 14};
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 14; ++y)
      for (int x = 0; x < 14; ++x) f.activations.at(c, y, x) = 100.0 * c + 14.0 * y + x;
  const std::vector<Box> box{{0, 0, 14, 14}};
  const auto pooled = pool_object_features(f, box, 7);
  ASSERT_EQ(pooled.features.cols(), 2 * 49);
  for (int c = 0; c < 2; ++c)
    for (int gy = 0; gy < 7; ++gy)
      for (int gx = 0; gx < 7; ++gx) {
        double s = 0.0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) s += f.activations.at(c, 2 * gy + dy, 2 * gx + dx);
        EXPECT_DOUBLE_EQ(pooled.features(0, (c * 7 + gy) * 7 + gx), s / 4.0);
      }
}

TEST(RoiPooling, StrideMapsImageBoxesToCells) {
  FeatureMap f{Tensor3(1, 14, 14), 16, 224, 224};
  for (int y = 0; y < 14; ++y)
    for (int x = 0; x < 14; ++x) f.activations.at(0, y, x) = y * 14 + x;
  const std::vector<Box> box{{0, 0, 224, 224}};
  const auto pooled = pool_object_features(f, box, 7);
  EXPECT_DOUBLE_EQ(pooled.features(0, 0), (0 + 1 + 14 + 15) / 4.0);
}

TEST(RoiPooling, ConstantFieldIdenticalBoxesAndEmptyInput) {
  FeatureMap f{Tensor3(3, 8, 8, 2.5), 16, 128, 128};
  const std::vector<Box> boxes{{3, 7, 90, 60}, {3, 7, 90, 60}, {100, 100, 127, 127}};
  const auto pooled = pool_object_features(f, boxes, 7);
  EXPECT_EQ(pooled.rows(), 3);
  for (Eigen::Index i = 0; i < pooled.features.size(); ++i) EXPECT_DOUBLE_EQ(pooled.features.data()[i], 2.5);
  EXPECT_EQ(pooled.features.row(0), pooled.features.row(1));
  EXPECT_TRUE(pool_object_features(f, std::vector<Box>{}, 7).empty());
}

TEST(RoiPooling, BackwardIsTheAdjoint) {
  Rng rng(7);
  FeatureMap f{Tensor3(2, 5, 6), 4, 20, 24};
  for (double& v : f.activations.values()) v = rng.normal();
  const std::vector<Box> boxes{{1, 2, 17, 19}, {5.5, 0, 24, 9}};
  RowMatrix probe(2, 2 * 9);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = rng.normal();
  Tensor3 grad(2, 5, 6);
  pool_object_features_backward(f, boxes, probe, 3, grad);
  auto loss = [&] { return (pool_object_features(f, boxes, 3).features.array() * probe.array()).sum(); };
  for (std::size_t i = 0; i < f.activations.size(); ++i)
    EXPECT_NEAR(grad.values()[i], oracle::central_difference(loss, f.activations.values()[i]), 1e-7);
}

RoiPredictions predictions(const std::string& id, std::vector<Box> rois, RowMatrix logits, int k) {
  RoiPredictions p;
  p.image_id = id;
  p.box_deltas = RowMatrix::Zero(static_cast<Eigen::Index>(rois.size()), 4 * k);
  p.rois = std::move(rois);
  p.class_logits = std::move(logits);
  return p;
}

TEST(DetectionLosses, PerfectPredictionHasZeroClassificationLoss) {
  DetectorConfig cfg = tiny_config();
  RowMatrix logits(2, 3);
  logits << -60, 60, -60, -60, -60, 60;
  const ImageAnnotations ann{"img", {{"a", {0, 0, 10, 10}}, {"b", {20, 20, 40, 40}}}};
  const auto r = detection_losses(predictions("img", {{0, 0, 10, 10}, {20, 20, 40, 40}}, logits, 2), ann, cfg);
  EXPECT_NEAR(r.classification, 0.0, 1e-12);
  EXPECT_GE(r.regression, 0.0);
}

TEST(DetectionLosses, BackgroundOnlyImage) {
  DetectorConfig cfg = tiny_config();
  RowMatrix logits(2, 3);
  logits << 60, -60, -60, 60, -60, -60;
  const auto r = detection_losses(predictions("img", {{0, 0, 10, 10}, {5, 5, 9, 9}}, logits, 2), {"img", {}}, cfg);
  EXPECT_NEAR(r.classification, 0.0, 1e-12);
  EXPECT_EQ(r.regression, 0.0);
}

TEST(DetectionLosses, HalfProbabilityOnTrueClass) {
  DetectorConfig cfg = tiny_config();
  cfg.categories = {"a"};
  RowMatrix logits(1, 2);
  logits << 0.0, 0.0;
  const auto r =
      detection_losses(predictions("img", {{0, 0, 10, 10}}, logits, 1), {"img", {{"a", {0, 0, 10, 10}}}}, cfg);
  EXPECT_NEAR(r.classification, 0.693147, 1e-6);
}

TEST(DetectionLosses, MismatchedImageIdIsAContractError) {
  DetectorConfig cfg = tiny_config();
  try {
    detection_losses(predictions("a.png", {}, RowMatrix(0, 3), 2), {"b.png", {}}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(DetectionLosses, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  DetectorConfig cfg = tiny_config();
  const std::vector<Box> rois{{0, 0, 10, 10}, {1, 1, 11, 12}, {30, 30, 38, 40}, {50, 0, 60, 5}};
  RowMatrix logits(4, 3);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
  auto p = predictions("x", rois, logits, 2);
  for (Eigen::Index i = 0; i < p.box_deltas.size(); ++i) p.box_deltas.data()[i] = rng.normal();
  const ImageAnnotations ann{"x", {{"a", {0, 0, 10, 11}}, {"b", {31, 29, 38, 41}}}};
  const auto r = detection_losses(p, ann, cfg);
  EXPECT_GT(r.regression, 0.0);
  auto cls = [&] { return detection_losses(p, ann, cfg).classification; };
  auto reg = [&] { return detection_losses(p, ann, cfg).regression; };
  for (Eigen::Index i = 0; i < p.class_logits.size(); ++i)
    EXPECT_LT(oracle::relative_error(r.grad_class_logits.data()[i],
                                     oracle::central_difference(cls, p.class_logits.data()[i])),
              1e-6);
  for (Eigen::Index i = 0; i < p.box_deltas.size(); ++i)
    EXPECT_LT(oracle::relative_error(r.grad_box_deltas.data()[i],
                                     oracle::central_difference(reg, p.box_deltas.data()[i])),
              1e-5);
}

TEST(RpnLosses, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  DetectorConfig cfg = tiny_config();
  const auto anchors = make_anchors(3, 4, 4, 8.0, cfg.anchor_ratios);
  std::vector<double> logits(anchors.size());
  for (double& v : logits) v = rng.normal();
  RowMatrix deltas(static_cast<Eigen::Index>(anchors.size()), 4);
  for (Eigen::Index i = 0; i < deltas.size(); ++i) deltas.data()[i] = 0.3 * rng.normal();
  const std::vector<Box> gt{{2, 2, 10, 9}};
  auto run = [&] {
    Rng r(1);
    return rpn_losses(anchors, logits, deltas, gt, cfg, r);
  };
  const auto res = run();
  EXPECT_GT(res.regression, 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i)
    EXPECT_LT(oracle::relative_error(res.grad_logits[i],
                                     oracle::central_difference([&] { return run().objectness; }, logits[i])),
              1e-6);
  for (Eigen::Index i = 0; i < deltas.size(); ++i)
    EXPECT_LT(oracle::relative_error(res.grad_deltas.data()[i],
                                     oracle::central_difference([&] { return run().regression; }, deltas.data()[i])),
              1e-5);
}

TEST(Detect, ThresholdOneReturnsNothing) {
  Rng rng(10);
  const Detector det = Detector::create(tiny_config(), 3);
  EXPECT_TRUE(det.detect(random_image(rng, 32, 32), 1.0, 0.5).empty());
  for (const auto& d : det.detect(random_image(rng, 32, 32), 0.0, 0.5)) {
    EXPECT_GE(d.confidence, 0.0);
    EXPECT_LE(d.confidence, 1.0);
    EXPECT_TRUE(d.box.valid());
  }
}

TEST(Postprocess, SuppressesDuplicatesPerClass) {
  DetectorConfig cfg = tiny_config();
  const std::vector<Box> rois{{0, 0, 10, 10}, {0, 0, 10, 10}};
  RowMatrix probs(2, 3);
  probs << 0.1, 0.9, 0.0, 0.2, 0.8, 0.0;
  const auto dets = postprocess_detections(rois, probs, RowMatrix::Zero(2, 8), cfg, 64, 64, 0.05, 0.5);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_DOUBLE_EQ(dets[0].confidence, 0.9);
  EXPECT_EQ(dets[0].category, "a");
}

}  // namespace
}  // namespace adet
