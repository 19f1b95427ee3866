#include "adet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adet/error.hpp"

namespace adet {

double compute_iou(const Box& a, const Box& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

std::optional<double> average_precision(std::span<const ScoredBox> detections,
                                        const std::map<std::string, std::vector<Box>>& groundtruth,
                                        double iou_threshold) {
  std::size_t total_gt = 0;
  for (const auto& [id, boxes] : groundtruth) total_gt += boxes.size();
  if (total_gt == 0) return std::nullopt;

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].confidence > detections[b].confidence;
  });

  std::map<std::string, std::vector<char>> used;
  for (const auto& [id, boxes] : groundtruth) used[id].assign(boxes.size(), 0);

  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (std::size_t idx : order) {
    const ScoredBox& d = detections[idx];
    bool is_tp = false;
    auto it = groundtruth.find(d.image_id);
    if (it != groundtruth.end()) {
      double best = 0.0;
      int best_j = -1;
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        const double iou = compute_iou(d.box, it->second[j]);
        if (iou > best) {
          best = iou;
          best_j = static_cast<int>(j);
        }
      }
      auto& flags = used[d.image_id];
      if (best_j >= 0 && best >= iou_threshold && !flags[best_j]) {
        flags[best_j] = 1;
        is_tp = true;
      }
    }
    is_tp ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }

  // Monotone precision envelope, then area under the step curve.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

double mean_ap(const std::map<std::string, double>& per_class_ap) {
  require(!per_class_ap.empty(), ErrorKind::kInvalidInput, "mAP needs at least one evaluated class");
  double s = 0.0;
  for (const auto& [name, ap] : per_class_ap) s += ap;
  return s / static_cast<double>(per_class_ap.size());
}

EvalResult evaluate_detections(std::span<const ImageDetections> detections, std::span<const ImageAnnotations> truth,
                               std::span<const std::string> categories, double iou_threshold) {
  EvalResult result;
  result.iou_threshold = iou_threshold;
  for (const auto& d : detections) result.detection_count += d.detections.size();

  for (const auto& category : categories) {
    std::map<std::string, std::vector<Box>> gt;
    for (const auto& t : truth) {
      auto& boxes = gt[t.image_id];
      for (const auto& a : t.boxes)
        if (a.category == category) boxes.push_back(a.box);
    }
    std::vector<ScoredBox> scored;
    for (const auto& img : detections)
      for (const auto& d : img.detections)
        if (d.category == category) scored.push_back({img.image_id, d.box, d.confidence});
    const auto ap = average_precision(scored, gt, iou_threshold);
    if (ap) {
      result.per_class_ap[category] = *ap;
    } else {
      result.skipped_classes.push_back(category);
    }
  }
  require(!result.per_class_ap.empty(), ErrorKind::kInvalidInput, "no category has ground truth in this split");
  result.map = mean_ap(result.per_class_ap);
  return result;
}

double approximated_hardness(const FeatureMap& source, const FeatureMap& target) {
  require(source.activations.same_shape(target.activations), ErrorKind::kContract,
          "approximated hardness needs same-shape feature maps");
  const auto a = source.activations.values();
  const auto b = target.activations.values();
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

std::vector<HardnessRecord> rank_hardness(std::span<const std::pair<std::string, double>> scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a].second < scores[b].second; });
  const std::size_t n = std::min(k, order.size());
  std::vector<HardnessRecord> out;
  out.reserve(n);
  for (std::size_t r = 0; r < n; ++r) out.push_back({scores[order[r]].first, scores[order[r]].second, r + 1});
  return out;
}

std::vector<HardnessRecord> mine_hard_examples(std::span<const HardnessPair> pairs, const Detector& detector,
                                               std::size_t k) {
  std::vector<std::pair<std::string, double>> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) {
    const FeatureMap fs = detector.extract_features(p.source);
    const FeatureMap ft = detector.extract_features(p.target);
    scores.emplace_back(p.image_id, approximated_hardness(fs, ft));
  }
  return rank_hardness(scores, k);
}

}  // namespace adet
