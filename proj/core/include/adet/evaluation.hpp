#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adet/detector.hpp"
#include "adet/tensor.hpp"

namespace adet {

// Intersection over union; 0 when either box has zero area.
double compute_iou(const Box& a, const Box& b);

struct ScoredBox {
  std::string image_id;
  Box box;
  double confidence = 0.0;
};

// All-point interpolated AP for one class. Detections are ranked by descending
// confidence (stable), each greedily matched to the highest-IoU ground truth in its
// image; a match consumes that ground truth. Returns nullopt when the class has no
// ground truth.
std::optional<double> average_precision(std::span<const ScoredBox> detections,
                                        const std::map<std::string, std::vector<Box>>& groundtruth,
                                        double iou_threshold = 0.5);

struct EvalResult {
  std::map<std::string, double> per_class_ap;  // evaluated classes only
  std::vector<std::string> skipped_classes;    // no ground truth in the split
  double map = 0.0;
  double iou_threshold = 0.5;
  std::size_t detection_count = 0;
  std::string interpolation = "all-point";
};

double mean_ap(const std::map<std::string, double>& per_class_ap);

struct ImageDetections {
  std::string image_id;
  std::vector<Detection> detections;
};

EvalResult evaluate_detections(std::span<const ImageDetections> detections, std::span<const ImageAnnotations> truth,
                               std::span<const std::string> categories, double iou_threshold = 0.5);

// Mean absolute difference between aligned source/target backbone features.
double approximated_hardness(const FeatureMap& source, const FeatureMap& target);

struct HardnessRecord {
  std::string image_id;
  double ah = 0.0;
  std::size_t rank = 0;
};

// k smallest-ah records in ascending order (ties keep input order).
std::vector<HardnessRecord> rank_hardness(std::span<const std::pair<std::string, double>> scores, std::size_t k);

struct HardnessPair {
  std::string image_id;
  Image source;
  Image target;
};

std::vector<HardnessRecord> mine_hard_examples(std::span<const HardnessPair> pairs, const Detector& detector,
                                               std::size_t k);

}  // namespace adet
