#pragma once

// Independent reference implementations used by the unit and acceptance tests. None of
// these call into the code they check beyond plain data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "adet/random.hpp"
#include "adet/tensor.hpp"

namespace adet::oracle {

inline double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0.0 && inter > 0.0 ? inter / uni : 0.0;
}

struct RankedDetection {
  std::string image_id;
  Box box;
  double confidence;
};

// Precision-recall integration by recall level: with G ground truths the interpolated
// precision is evaluated at each recall i / G and averaged.
inline double brute_force_ap(std::vector<RankedDetection> dets, const std::map<std::string, std::vector<Box>>& gt,
                             double threshold = 0.5) {
  std::size_t total = 0;
  for (const auto& [id, boxes] : gt) total += boxes.size();
  std::stable_sort(dets.begin(), dets.end(),
                   [](const RankedDetection& a, const RankedDetection& b) { return a.confidence > b.confidence; });
  std::map<std::string, std::vector<bool>> taken;
  for (const auto& [id, boxes] : gt) taken[id] = std::vector<bool>(boxes.size(), false);

  std::vector<int> hits;
  for (const auto& d : dets) {
    int hit = 0;
    const auto it = gt.find(d.image_id);
    if (it != gt.end()) {
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        const double v = iou(d.box, it->second[j]);
        if (v > best_iou) best_iou = v, best = static_cast<int>(j);
      }
      if (best >= 0 && best_iou >= threshold && !taken[d.image_id][best]) {
        taken[d.image_id][best] = true;
        hit = 1;
      }
    }
    hits.push_back(hit);
  }

  double sum = 0.0;
  for (std::size_t level = 1; level <= total; ++level) {
    double best_precision = 0.0;
    int tp = 0;
    for (std::size_t k = 0; k < hits.size(); ++k) {
      tp += hits[k];
      if (static_cast<std::size_t>(tp) >= level)
        best_precision = std::max(best_precision, static_cast<double>(tp) / static_cast<double>(k + 1));
    }
    sum += best_precision;
  }
  return sum / static_cast<double>(total);
}

// Exhaustive greedy suppression: repeatedly take the best remaining box and drop
// everything overlapping it above the threshold.
inline std::vector<std::size_t> brute_force_nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                                                double threshold) {
  std::vector<bool> alive(boxes.size(), true);
  std::vector<std::size_t> kept;
  for (;;) {
    int best = -1;
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (alive[i] && (best < 0 || scores[i] > scores[static_cast<std::size_t>(best)])) best = static_cast<int>(i);
    if (best < 0) break;
    const auto b = static_cast<std::size_t>(best);
    kept.push_back(b);
    alive[b] = false;
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (alive[i] && iou(boxes[b], boxes[i]) > threshold) alive[i] = false;
  }
  return kept;
}

// Central finite difference of f with respect to x[i]; x is restored afterwards.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-6) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

// Relative error with an absolute floor so tiny gradients do not blow up the ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Best of two step sizes: the large one loses to a nearby ReLU kink, the small one to
// cancellation on tiny gradients. A wrong gradient fails both.
inline double gradient_error(double analytic, const std::function<double()>& f, double& x) {
  return std::min(relative_error(analytic, central_difference(f, x, 1e-4)),
                  relative_error(analytic, central_difference(f, x, 1e-6)));
}

// Random single-class AP instance over two images: up to 5 ground truths and up to 10
// detections jittered around them, some with the wrong image.
struct Instance {
  std::vector<RankedDetection> dets;
  std::map<std::string, std::vector<Box>> gt;
};

inline Instance random_instance(Rng& rng) {
  Instance inst;
  const char* ids[] = {"a", "b"};
  const std::size_t gt_count = 1 + rng.index(5);
  std::vector<std::pair<std::string, Box>> all;
  for (std::size_t i = 0; i < gt_count; ++i) {
    const std::string id = ids[rng.index(2)];
    const double x = rng.uniform(0, 40), y = rng.uniform(0, 40);
    const Box b{x, y, x + rng.uniform(5, 15), y + rng.uniform(5, 15)};
    inst.gt[id].push_back(b);
    all.emplace_back(id, b);
  }
  const std::size_t det_count = rng.index(11);
  for (std::size_t i = 0; i < det_count; ++i) {
    const auto& [id, g] = all[rng.index(all.size())];
    const double j = rng.uniform(0.0, 6.0);
    inst.dets.push_back({rng.bernoulli(0.2) ? std::string(ids[rng.index(2)]) : id,
                         {g.x1 + rng.uniform(-j, j), g.y1 + rng.uniform(-j, j), g.x2 + rng.uniform(-j, j),
                          g.y2 + rng.uniform(-j, j)},
                         rng.uniform()});
  }
  return inst;
}

}  // namespace adet::oracle
