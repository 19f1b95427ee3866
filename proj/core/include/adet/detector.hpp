#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adet/nn.hpp"
#include "adet/random.hpp"
#include "adet/tensor.hpp"

namespace adet {

struct BoxAnnotation {
  std::string category;
  Box box;

  friend bool operator==(const BoxAnnotation&, const BoxAnnotation&) = default;
};

struct ImageAnnotations {
  std::string image_id;
  std::vector<BoxAnnotation> boxes;
};

struct Proposal {
  Box box;
  double objectness = 0.0;
};

// One pooled row per proposal, rows in proposal order.
struct ObjectFeatureSet {
  RowMatrix features;

  Eigen::Index rows() const noexcept { return features.rows(); }
  bool empty() const noexcept { return features.rows() == 0; }
};

struct Detection {
  std::string category;
  int class_index = 0;  // 1-based; 0 is background
  Box box;
  double confidence = 0.0;
};

struct DetectorConfig {
  std::vector<std::string> categories{"bus", "bicycle", "car", "motorcycle", "person", "rider", "train", "truck"};
  // One stride-2 3x3 convolution per entry; the backbone stride is 2^size.
  std::vector<int> backbone_channels{16, 32, 64, 64};
  int rpn_channels = 64;
  double anchor_size = 48.0;
  std::vector<double> anchor_ratios{0.5, 1.0, 2.0};
  double rpn_positive_iou = 0.7;
  double rpn_negative_iou = 0.3;
  int rpn_batch_size = 64;
  double rpn_positive_fraction = 0.5;
  double proposal_nms_iou = 0.7;
  int pre_nms_top_n = 300;
  int train_proposals = 64;
  int test_proposals = 50;
  int pool_size = 7;
  int head_hidden = 256;
  int roi_batch_size = 32;
  double roi_positive_fraction = 0.25;
  double roi_foreground_iou = 0.5;
  int max_detections = 100;

  int stride() const noexcept { return 1 << backbone_channels.size(); }
  int feature_channels() const noexcept { return backbone_channels.back(); }
  int pooled_dim() const noexcept { return feature_channels() * pool_size * pool_size; }
  int num_categories() const noexcept { return static_cast<int>(categories.size()); }
  int num_anchors() const noexcept { return static_cast<int>(anchor_ratios.size()); }
  // 1-based class index of a category; throws kContract for unknown names.
  int class_index(const std::string& category) const;
  void validate() const;
};

// --- box coding ---------------------------------------------------------------

using BoxDelta = std::array<double, 4>;
inline constexpr BoxDelta kRpnBoxWeights{1.0, 1.0, 1.0, 1.0};
inline constexpr BoxDelta kHeadBoxWeights{10.0, 10.0, 5.0, 5.0};

BoxDelta encode_box(const Box& reference, const Box& target, const BoxDelta& weights);
Box decode_box(const Box& reference, const BoxDelta& delta, const BoxDelta& weights);

// Anchors at every feature cell centre; index = (y * w + x) * A + a.
std::vector<Box> make_anchors(int feature_height, int feature_width, int stride, double size,
                              std::span<const double> ratios);

// Greedy non-maximum suppression. Returns kept indices ordered by descending score
// (ties broken by lower index).
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_threshold);

// Decode, clip, rank and suppress raw anchor predictions into at most max_proposals proposals.
std::vector<Proposal> select_proposals(std::span<const Box> anchors, std::span<const double> objectness_logits,
                                       const RowMatrix& deltas, int image_width, int image_height,
                                       int pre_nms_top_n, double nms_iou, int max_proposals);

// --- ROI pooling ----------------------------------------------------------------

// Fixed-grid average pooling. A bin spanning feature coordinates [lo, hi) averages every
// cell that overlaps it; boxes are mapped to feature coordinates by dividing by stride.
ObjectFeatureSet pool_object_features(const FeatureMap& fmap, std::span<const Box> boxes, int grid = 7);
ObjectFeatureSet pool_object_features(const FeatureMap& fmap, std::span<const Proposal> proposals, int grid = 7);
// Scatter-adds grad_rows back onto grad_fmap (shape of fmap.activations).
void pool_object_features_backward(const FeatureMap& fmap, std::span<const Box> boxes, const RowMatrix& grad_rows,
                                   int grid, Tensor3& grad_fmap);

// --- losses -----------------------------------------------------------------------

struct RoiPredictions {
  std::string image_id;
  std::vector<Box> rois;
  RowMatrix class_logits;  // (M, K + 1), column 0 is background
  RowMatrix box_deltas;    // (M, 4K), class-specific
};

struct DetectionLossResult {
  double classification = 0.0;
  double regression = 0.0;
  RowMatrix grad_class_logits;
  RowMatrix grad_box_deltas;
};

// Mean cross-entropy over all ROIs and smooth-L1 box regression over foreground ROIs
// (normalized by ROI count). A ROI is foreground when its best IoU with an annotation
// reaches cfg.roi_foreground_iou.
DetectionLossResult detection_losses(const RoiPredictions& predictions, const ImageAnnotations& annotations,
                                     const DetectorConfig& cfg);

struct RpnLossResult {
  double objectness = 0.0;
  double regression = 0.0;
  std::vector<double> grad_logits;
  RowMatrix grad_deltas;
};

RpnLossResult rpn_losses(std::span<const Box> anchors, std::span<const double> objectness_logits,
                         const RowMatrix& deltas, std::span<const Box> groundtruth, const DetectorConfig& cfg,
                         Rng& rng);

// Foreground-balanced subset of (proposals + ground truth) used to train the box head.
std::vector<Box> sample_rois(std::span<const Proposal> proposals, std::span<const Box> groundtruth,
                             const DetectorConfig& cfg, Rng& rng);

// Softmax class scores + class-specific boxes -> thresholded, per-class suppressed detections.
std::vector<Detection> postprocess_detections(std::span<const Box> rois, const RowMatrix& class_probabilities,
                                              const RowMatrix& box_deltas, const DetectorConfig& cfg,
                                              int image_width, int image_height, double score_threshold,
                                              double nms_iou);

RowMatrix softmax_rows(const RowMatrix& logits);

// --- the detector -----------------------------------------------------------------

class Detector {
 public:
  struct BackboneCache {
    std::vector<Conv2d::Cache> convs;
    std::vector<Tensor3> activations;
  };
  struct RpnOutput {
    std::vector<double> objectness_logits;  // one per anchor
    RowMatrix deltas;                       // (anchors, 4)
    std::vector<Box> anchors;
  };
  struct RpnCache {
    Conv2d::Cache conv;
    Tensor3 hidden;
    Conv2d::Cache objectness;
    Conv2d::Cache deltas;
  };
  struct HeadCache {
    RowMatrix input;
    RowMatrix hidden1;
    RowMatrix hidden2;
  };

  // Uninitialized detector: every inference call throws kNotInitialized.
  Detector() = default;
  static Detector create(DetectorConfig cfg, std::uint64_t seed);

  bool initialized() const noexcept { return initialized_; }
  const DetectorConfig& config() const noexcept { return cfg_; }

  FeatureMap extract_features(const Image& image) const { return extract_features(image, nullptr); }
  FeatureMap extract_features(const Image& image, BackboneCache* cache) const;
  void backbone_backward(const Tensor3& grad_features, const BackboneCache& cache);

  RpnOutput rpn_forward(const FeatureMap& fmap, RpnCache* cache) const;
  // Returns the gradient w.r.t. the feature map activations.
  Tensor3 rpn_backward(const std::vector<double>& grad_logits, const RowMatrix& grad_deltas,
                       const RpnCache& cache);

  std::vector<Proposal> propose_regions(const FeatureMap& fmap, int max_proposals) const;

  RoiPredictions head_forward(const ObjectFeatureSet& objects, std::vector<Box> rois, HeadCache* cache) const;
  RowMatrix head_backward(const RowMatrix& grad_class_logits, const RowMatrix& grad_box_deltas,
                          const HeadCache& cache);

  std::vector<Detection> detect(const Image& image, double score_threshold, double nms_iou) const;

  ParamRefs parameters();
  std::vector<Conv2d>& backbone() noexcept { return backbone_; }

 private:
  void check_initialized() const;

  DetectorConfig cfg_;
  bool initialized_ = false;
  std::vector<Conv2d> backbone_;
  Conv2d rpn_conv_;
  Conv2d rpn_objectness_;
  Conv2d rpn_deltas_;
  Linear head_fc1_;
  Linear head_fc2_;
  Linear head_cls_;
  Linear head_box_;
};

}  // namespace adet
