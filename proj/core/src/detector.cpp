#include "adet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adet/error.hpp"
#include "adet/evaluation.hpp"

namespace adet {

namespace {

constexpr double kMaxLogScale = 4.135166556742356;  // log(1000 / 16)
constexpr double kSmoothL1Beta = 1.0 / 9.0;

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < kSmoothL1Beta ? 0.5 * a * a / kSmoothL1Beta : a - 0.5 * kSmoothL1Beta;
}

double smooth_l1_grad(double x) {
  const double a = std::abs(x);
  if (a < kSmoothL1Beta) return x / kSmoothL1Beta;
  return x > 0 ? 1.0 : -1.0;
}

// Indices sorted by descending score, ties by ascending index.
std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

struct BinRange {
  int lo = 0;
  int hi = 0;  // inclusive
};

std::vector<BinRange> bin_ranges(double start, double end, int grid, int extent) {
  std::vector<BinRange> bins(grid);
  const double step = (end - start) / grid;
  for (int g = 0; g < grid; ++g) {
    const double lo = start + g * step;
    const double hi = lo + step;
    int first = std::clamp(static_cast<int>(std::floor(lo)), 0, extent - 1);
    int last = std::clamp(static_cast<int>(std::ceil(hi)) - 1, 0, extent - 1);
    if (last < first) last = first;
    bins[g] = {first, last};
  }
  return bins;
}

}  // namespace

int DetectorConfig::class_index(const std::string& category) const {
  auto it = std::find(categories.begin(), categories.end(), category);
  require(it != categories.end(), ErrorKind::kContract, "unknown category '" + category + "'");
  return static_cast<int>(it - categories.begin()) + 1;
}

void DetectorConfig::validate() const {
  require(!categories.empty(), ErrorKind::kConfiguration, "detector needs at least one category");
  require(!backbone_channels.empty(), ErrorKind::kConfiguration, "backbone needs at least one layer");
  for (int c : backbone_channels) require(c > 0, ErrorKind::kConfiguration, "backbone widths must be positive");
  require(rpn_channels > 0 && head_hidden > 0 && pool_size > 0, ErrorKind::kConfiguration,
          "layer widths must be positive");
  require(!anchor_ratios.empty() && anchor_size > 0, ErrorKind::kConfiguration, "invalid anchor configuration");
  require(rpn_negative_iou <= rpn_positive_iou, ErrorKind::kConfiguration, "rpn IoU thresholds inverted");
  require(train_proposals >= 1 && test_proposals >= 1 && pre_nms_top_n >= 1, ErrorKind::kConfiguration,
          "proposal counts must be positive");
  require(rpn_batch_size >= 1 && roi_batch_size >= 1, ErrorKind::kConfiguration, "batch sizes must be positive");
}

BoxDelta encode_box(const Box& reference, const Box& target, const BoxDelta& weights) {
  const double rw = reference.width(), rh = reference.height();
  const double rcx = reference.x1 + 0.5 * rw, rcy = reference.y1 + 0.5 * rh;
  const double tw = target.width(), th = target.height();
  const double tcx = target.x1 + 0.5 * tw, tcy = target.y1 + 0.5 * th;
  return {weights[0] * (tcx - rcx) / rw, weights[1] * (tcy - rcy) / rh, weights[2] * std::log(tw / rw),
          weights[3] * std::log(th / rh)};
}

Box decode_box(const Box& reference, const BoxDelta& delta, const BoxDelta& weights) {
  const double rw = reference.width(), rh = reference.height();
  const double rcx = reference.x1 + 0.5 * rw, rcy = reference.y1 + 0.5 * rh;
  const double cx = rcx + delta[0] / weights[0] * rw;
  const double cy = rcy + delta[1] / weights[1] * rh;
  const double w = rw * std::exp(std::min(delta[2] / weights[2], kMaxLogScale));
  const double h = rh * std::exp(std::min(delta[3] / weights[3], kMaxLogScale));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::vector<Box> make_anchors(int feature_height, int feature_width, int stride, double size,
                              std::span<const double> ratios) {
  std::vector<Box> anchors;
  anchors.reserve(static_cast<std::size_t>(feature_height) * feature_width * ratios.size());
  for (int y = 0; y < feature_height; ++y) {
    for (int x = 0; x < feature_width; ++x) {
      const double cx = (x + 0.5) * stride;
      const double cy = (y + 0.5) * stride;
      for (double r : ratios) {
        const double w = size / std::sqrt(r);
        const double h = size * std::sqrt(r);
        anchors.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
      }
    }
  }
  return anchors;
}

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_threshold) {
  require(boxes.size() == scores.size(), ErrorKind::kContract, "nms: boxes/scores size mismatch");
  const auto order = rank_by_score(scores);
  std::vector<char> suppressed(boxes.size(), 0);
  std::vector<std::size_t> keep;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    keep.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!suppressed[j] && compute_iou(boxes[i], boxes[j]) > iou_threshold) suppressed[j] = 1;
    }
  }
  return keep;
}

std::vector<Proposal> select_proposals(std::span<const Box> anchors, std::span<const double> objectness_logits,
                                       const RowMatrix& deltas, int image_width, int image_height,
                                       int pre_nms_top_n, double nms_iou, int max_proposals) {
  require(max_proposals >= 1, ErrorKind::kInvalidInput, "max_proposals must be >= 1");
  require(anchors.size() == objectness_logits.size() && static_cast<Eigen::Index>(anchors.size()) == deltas.rows(),
          ErrorKind::kContract, "select_proposals: anchor/prediction count mismatch");

  std::vector<Box> boxes;
  std::vector<double> scores;
  boxes.reserve(anchors.size());
  scores.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const BoxDelta d{deltas(i, 0), deltas(i, 1), deltas(i, 2), deltas(i, 3)};
    const Box b = clip_box(decode_box(anchors[i], d, kRpnBoxWeights), image_width, image_height);
    if (b.width() < 1.0 || b.height() < 1.0) continue;
    const double s = sigmoid(objectness_logits[i]);
    if (!std::isfinite(s) || !std::isfinite(b.x1 + b.y1 + b.x2 + b.y2)) continue;
    boxes.push_back(b);
    scores.push_back(s);
  }

  auto order = rank_by_score(scores);
  if (order.size() > static_cast<std::size_t>(pre_nms_top_n)) order.resize(pre_nms_top_n);
  std::vector<Box> top_boxes;
  std::vector<double> top_scores;
  for (std::size_t i : order) {
    top_boxes.push_back(boxes[i]);
    top_scores.push_back(scores[i]);
  }
  const auto keep = nms(top_boxes, top_scores, nms_iou);
  std::vector<Proposal> out;
  for (std::size_t i : keep) {
    if (out.size() == static_cast<std::size_t>(max_proposals)) break;
    out.push_back({top_boxes[i], top_scores[i]});
  }
  return out;
}

ObjectFeatureSet pool_object_features(const FeatureMap& fmap, std::span<const Box> boxes, int grid) {
  const int channels = fmap.channels();
  const int fh = fmap.height();
  const int fw = fmap.width();
  require(grid > 0, ErrorKind::kInvalidInput, "pooling grid must be positive");
  ObjectFeatureSet out{RowMatrix::Zero(static_cast<Eigen::Index>(boxes.size()), channels * grid * grid)};
  if (fh == 0 || fw == 0) return out;
  const double inv_stride = 1.0 / fmap.stride;
  for (std::size_t r = 0; r < boxes.size(); ++r) {
    const Box& b = boxes[r];
    require(b.valid(), ErrorKind::kInvalidInput, "pooling requires valid boxes");
    const auto xs = bin_ranges(b.x1 * inv_stride, b.x2 * inv_stride, grid, fw);
    const auto ys = bin_ranges(b.y1 * inv_stride, b.y2 * inv_stride, grid, fh);
    double* row = out.features.row(static_cast<Eigen::Index>(r)).data();
    for (int c = 0; c < channels; ++c) {
      for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
          double sum = 0.0;
          for (int y = ys[gy].lo; y <= ys[gy].hi; ++y)
            for (int x = xs[gx].lo; x <= xs[gx].hi; ++x) sum += fmap.activations.at(c, y, x);
          const int count = (ys[gy].hi - ys[gy].lo + 1) * (xs[gx].hi - xs[gx].lo + 1);
          row[(c * grid + gy) * grid + gx] = sum / count;
        }
      }
    }
  }
  return out;
}

ObjectFeatureSet pool_object_features(const FeatureMap& fmap, std::span<const Proposal> proposals, int grid) {
  std::vector<Box> boxes;
  boxes.reserve(proposals.size());
  for (const auto& p : proposals) boxes.push_back(p.box);
  return pool_object_features(fmap, boxes, grid);
}

void pool_object_features_backward(const FeatureMap& fmap, std::span<const Box> boxes, const RowMatrix& grad_rows,
                                   int grid, Tensor3& grad_fmap) {
  require(grad_fmap.same_shape(fmap.activations), ErrorKind::kContract, "pool backward: gradient shape mismatch");
  require(grad_rows.rows() == static_cast<Eigen::Index>(boxes.size()), ErrorKind::kContract,
          "pool backward: row count mismatch");
  const int channels = fmap.channels();
  const double inv_stride = 1.0 / fmap.stride;
  for (std::size_t r = 0; r < boxes.size(); ++r) {
    const Box& b = boxes[r];
    const auto xs = bin_ranges(b.x1 * inv_stride, b.x2 * inv_stride, grid, fmap.width());
    const auto ys = bin_ranges(b.y1 * inv_stride, b.y2 * inv_stride, grid, fmap.height());
    const double* row = grad_rows.row(static_cast<Eigen::Index>(r)).data();
    for (int c = 0; c < channels; ++c) {
      for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
          const int count = (ys[gy].hi - ys[gy].lo + 1) * (xs[gx].hi - xs[gx].lo + 1);
          const double g = row[(c * grid + gy) * grid + gx] / count;
          if (g == 0.0) continue;
          for (int y = ys[gy].lo; y <= ys[gy].hi; ++y)
            for (int x = xs[gx].lo; x <= xs[gx].hi; ++x) grad_fmap.at(c, y, x) += g;
        }
      }
    }
  }
}

RowMatrix softmax_rows(const RowMatrix& logits) {
  RowMatrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

DetectionLossResult detection_losses(const RoiPredictions& predictions, const ImageAnnotations& annotations,
                                     const DetectorConfig& cfg) {
  require(predictions.image_id == annotations.image_id, ErrorKind::kContract,
          "predictions for '" + predictions.image_id + "' paired with annotations for '" + annotations.image_id +
              "'");
  const auto m = static_cast<Eigen::Index>(predictions.rois.size());
  const int k = cfg.num_categories();
  require(predictions.class_logits.rows() == m && predictions.class_logits.cols() == k + 1, ErrorKind::kContract,
          "class logits must be (rois, categories + 1)");
  require(predictions.box_deltas.rows() == m && predictions.box_deltas.cols() == 4 * k, ErrorKind::kContract,
          "box deltas must be (rois, 4 * categories)");

  DetectionLossResult result;
  result.grad_class_logits = RowMatrix::Zero(m, k + 1);
  result.grad_box_deltas = RowMatrix::Zero(m, 4 * k);
  if (m == 0) return result;

  std::vector<int> gt_class;
  for (const auto& a : annotations.boxes) gt_class.push_back(cfg.class_index(a.category));

  const double inv_m = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Box& roi = predictions.rois[i];
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < annotations.boxes.size(); ++g) {
      const double iou = compute_iou(roi, annotations.boxes[g].box);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    const int label = (best >= 0 && best_iou >= cfg.roi_foreground_iou) ? gt_class[best] : 0;

    const auto z = predictions.class_logits.row(i);
    const double zmax = z.maxCoeff();
    const double sum = (z.array() - zmax).exp().sum();
    const double lse = zmax + std::log(sum);
    result.classification += (lse - z(label)) * inv_m;
    for (int c = 0; c <= k; ++c) {
      const double p = std::exp(z(c) - lse);
      result.grad_class_logits(i, c) = (p - (c == label ? 1.0 : 0.0)) * inv_m;
    }

    if (label > 0) {
      const BoxDelta target = encode_box(roi, annotations.boxes[best].box, kHeadBoxWeights);
      for (int j = 0; j < 4; ++j) {
        const Eigen::Index col = 4 * (label - 1) + j;
        const double diff = predictions.box_deltas(i, col) - target[j];
        result.regression += smooth_l1(diff) * inv_m;
        result.grad_box_deltas(i, col) = smooth_l1_grad(diff) * inv_m;
      }
    }
  }
  return result;
}

RpnLossResult rpn_losses(std::span<const Box> anchors, std::span<const double> objectness_logits,
                         const RowMatrix& deltas, std::span<const Box> groundtruth, const DetectorConfig& cfg,
                         Rng& rng) {
  const std::size_t n = anchors.size();
  require(objectness_logits.size() == n && deltas.rows() == static_cast<Eigen::Index>(n), ErrorKind::kContract,
          "rpn_losses: anchor/prediction count mismatch");
  RpnLossResult result;
  result.grad_logits.assign(n, 0.0);
  result.grad_deltas = RowMatrix::Zero(static_cast<Eigen::Index>(n), 4);
  if (n == 0) return result;

  std::vector<int> labels(n, -1);
  std::vector<int> matched(n, -1);
  std::vector<double> best_for_gt(groundtruth.size(), 0.0);
  std::vector<double> ious(n * groundtruth.size(), 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    double best = 0.0;
    for (std::size_t g = 0; g < groundtruth.size(); ++g) {
      const double iou = compute_iou(anchors[a], groundtruth[g]);
      ious[a * groundtruth.size() + g] = iou;
      if (iou > best) {
        best = iou;
        matched[a] = static_cast<int>(g);
      }
      best_for_gt[g] = std::max(best_for_gt[g], iou);
    }
    if (best < cfg.rpn_negative_iou) labels[a] = 0;
    if (best >= cfg.rpn_positive_iou) labels[a] = 1;
  }
  // Every ground truth keeps its best-overlapping anchor(s) as positives.
  for (std::size_t g = 0; g < groundtruth.size(); ++g) {
    if (best_for_gt[g] <= 0.0) continue;
    for (std::size_t a = 0; a < n; ++a) {
      if (ious[a * groundtruth.size() + g] == best_for_gt[g]) {
        labels[a] = 1;
        matched[a] = static_cast<int>(g);
      }
    }
  }

  std::vector<std::size_t> pos, neg;
  for (std::size_t a = 0; a < n; ++a) {
    if (labels[a] == 1) pos.push_back(a);
    else if (labels[a] == 0) neg.push_back(a);
  }
  rng.shuffle(std::span<std::size_t>(pos));
  rng.shuffle(std::span<std::size_t>(neg));
  const auto max_pos = static_cast<std::size_t>(cfg.rpn_batch_size * cfg.rpn_positive_fraction);
  if (pos.size() > max_pos) pos.resize(max_pos);
  const std::size_t max_neg = static_cast<std::size_t>(cfg.rpn_batch_size) - pos.size();
  if (neg.size() > max_neg) neg.resize(max_neg);

  const std::size_t sampled = pos.size() + neg.size();
  if (sampled == 0) return result;
  const double inv = 1.0 / static_cast<double>(sampled);
  auto add_bce = [&](std::size_t a, double target) {
    const double z = objectness_logits[a];
    // Stable log(1 + exp(-|z|)) form of binary cross-entropy with logits.
    const double loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
    result.objectness += loss * inv;
    result.grad_logits[a] = (sigmoid(z) - target) * inv;
  };
  for (std::size_t a : pos) {
    add_bce(a, 1.0);
    const BoxDelta t = encode_box(anchors[a], groundtruth[matched[a]], kRpnBoxWeights);
    for (int j = 0; j < 4; ++j) {
      const double diff = deltas(a, j) - t[j];
      result.regression += smooth_l1(diff) * inv;
      result.grad_deltas(a, j) = smooth_l1_grad(diff) * inv;
    }
  }
  for (std::size_t a : neg) add_bce(a, 0.0);
  return result;
}

std::vector<Box> sample_rois(std::span<const Proposal> proposals, std::span<const Box> groundtruth,
                             const DetectorConfig& cfg, Rng& rng) {
  std::vector<Box> candidates;
  for (const auto& p : proposals) candidates.push_back(p.box);
  for (const auto& g : groundtruth) candidates.push_back(g);

  std::vector<std::size_t> fg, bg;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double best = 0.0;
    for (const auto& g : groundtruth) best = std::max(best, compute_iou(candidates[i], g));
    (best >= cfg.roi_foreground_iou ? fg : bg).push_back(i);
  }
  rng.shuffle(std::span<std::size_t>(fg));
  rng.shuffle(std::span<std::size_t>(bg));
  const auto max_fg = static_cast<std::size_t>(std::lround(cfg.roi_batch_size * cfg.roi_positive_fraction));
  if (fg.size() > max_fg) fg.resize(max_fg);
  const std::size_t max_bg = static_cast<std::size_t>(cfg.roi_batch_size) - fg.size();
  if (bg.size() > max_bg) bg.resize(max_bg);

  std::vector<Box> out;
  for (std::size_t i : fg) out.push_back(candidates[i]);
  for (std::size_t i : bg) out.push_back(candidates[i]);
  return out;
}

std::vector<Detection> postprocess_detections(std::span<const Box> rois, const RowMatrix& class_probabilities,
                                              const RowMatrix& box_deltas, const DetectorConfig& cfg,
                                              int image_width, int image_height, double score_threshold,
                                              double nms_iou) {
  const int k = cfg.num_categories();
  require(class_probabilities.rows() == static_cast<Eigen::Index>(rois.size()) &&
              box_deltas.rows() == static_cast<Eigen::Index>(rois.size()),
          ErrorKind::kContract, "postprocess: row count mismatch");
  std::vector<Detection> all;
  for (int c = 1; c <= k; ++c) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (std::size_t i = 0; i < rois.size(); ++i) {
      const double score = class_probabilities(static_cast<Eigen::Index>(i), c);
      if (!(score >= score_threshold)) continue;
      const auto r = static_cast<Eigen::Index>(i);
      const BoxDelta d{box_deltas(r, 4 * (c - 1)), box_deltas(r, 4 * (c - 1) + 1), box_deltas(r, 4 * (c - 1) + 2),
                       box_deltas(r, 4 * (c - 1) + 3)};
      const Box b = clip_box(decode_box(rois[i], d, kHeadBoxWeights), image_width, image_height);
      if (!b.valid()) continue;
      boxes.push_back(b);
      scores.push_back(score);
    }
    for (std::size_t i : nms(boxes, scores, nms_iou))
      all.push_back({cfg.categories[c - 1], c, boxes[i], std::clamp(scores[i], 0.0, 1.0)});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  if (all.size() > static_cast<std::size_t>(cfg.max_detections)) all.resize(cfg.max_detections);
  return all;
}

Detector Detector::create(DetectorConfig cfg, std::uint64_t seed) {
  cfg.validate();
  Detector d;
  d.cfg_ = std::move(cfg);
  Rng rng(seed);
  int in = 3;
  for (std::size_t i = 0; i < d.cfg_.backbone_channels.size(); ++i) {
    const int out = d.cfg_.backbone_channels[i];
    d.backbone_.emplace_back("backbone.conv" + std::to_string(i), in, out, 3, 2, 1);
    d.backbone_.back().init_he(rng);
    in = out;
  }
  const int a = d.cfg_.num_anchors();
  const int k = d.cfg_.num_categories();
  d.rpn_conv_ = Conv2d("rpn.conv", in, d.cfg_.rpn_channels, 3, 1, 1);
  d.rpn_conv_.init_he(rng);
  d.rpn_objectness_ = Conv2d("rpn.objectness", d.cfg_.rpn_channels, a, 1, 1, 0);
  d.rpn_objectness_.init_normal(rng, 0.01);
  d.rpn_deltas_ = Conv2d("rpn.deltas", d.cfg_.rpn_channels, 4 * a, 1, 1, 0);
  d.rpn_deltas_.init_normal(rng, 0.01);
  d.head_fc1_ = Linear("head.fc1", d.cfg_.pooled_dim(), d.cfg_.head_hidden);
  d.head_fc1_.init_he(rng);
  d.head_fc2_ = Linear("head.fc2", d.cfg_.head_hidden, d.cfg_.head_hidden);
  d.head_fc2_.init_he(rng);
  d.head_cls_ = Linear("head.cls", d.cfg_.head_hidden, k + 1);
  d.head_cls_.init_normal(rng, 0.01);
  d.head_box_ = Linear("head.box", d.cfg_.head_hidden, 4 * k);
  d.head_box_.init_normal(rng, 0.001);
  d.initialized_ = true;
  return d;
}

void Detector::check_initialized() const {
  require(initialized_, ErrorKind::kNotInitialized, "detector weights are not loaded");
}

FeatureMap Detector::extract_features(const Image& image, BackboneCache* cache) const {
  check_initialized();
  const int stride = cfg_.stride();
  require(image.height() >= stride && image.width() >= stride, ErrorKind::kInvalidInput,
          "image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
              " is smaller than the backbone stride " + std::to_string(stride));
  Tensor3 x = image.pixels();
  for (double& v : x.values()) v -= 0.5;
  if (cache) {
    cache->convs.assign(backbone_.size(), {});
    cache->activations.clear();
  }
  for (std::size_t i = 0; i < backbone_.size(); ++i) {
    x = backbone_[i].forward(x, cache ? &cache->convs[i] : nullptr);
    relu_inplace(x);
    if (cache) cache->activations.push_back(x);
  }
  return FeatureMap{std::move(x), stride, image.height(), image.width()};
}

void Detector::backbone_backward(const Tensor3& grad_features, const BackboneCache& cache) {
  Tensor3 grad = grad_features;
  for (std::size_t i = backbone_.size(); i-- > 0;) {
    relu_backward_inplace(grad, cache.activations[i]);
    grad = backbone_[i].backward(grad, cache.convs[i], i > 0);
  }
}

Detector::RpnOutput Detector::rpn_forward(const FeatureMap& fmap, RpnCache* cache) const {
  check_initialized();
  Tensor3 hidden = rpn_conv_.forward(fmap.activations, cache ? &cache->conv : nullptr);
  relu_inplace(hidden);
  const Tensor3 obj = rpn_objectness_.forward(hidden, cache ? &cache->objectness : nullptr);
  const Tensor3 del = rpn_deltas_.forward(hidden, cache ? &cache->deltas : nullptr);

  RpnOutput out;
  const int a = cfg_.num_anchors();
  const int h = fmap.height(), w = fmap.width();
  out.anchors = make_anchors(h, w, fmap.stride, cfg_.anchor_size, cfg_.anchor_ratios);
  out.objectness_logits.resize(out.anchors.size());
  out.deltas.resize(static_cast<Eigen::Index>(out.anchors.size()), 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < a; ++k) {
        const std::size_t idx = (static_cast<std::size_t>(y) * w + x) * a + k;
        out.objectness_logits[idx] = obj.at(k, y, x);
        for (int j = 0; j < 4; ++j) out.deltas(static_cast<Eigen::Index>(idx), j) = del.at(4 * k + j, y, x);
      }
  if (cache) cache->hidden = std::move(hidden);
  return out;
}

Tensor3 Detector::rpn_backward(const std::vector<double>& grad_logits, const RowMatrix& grad_deltas,
                               const RpnCache& cache) {
  const int a = cfg_.num_anchors();
  const int h = cache.hidden.height(), w = cache.hidden.width();
  Tensor3 g_obj(a, h, w), g_del(4 * a, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < a; ++k) {
        const std::size_t idx = (static_cast<std::size_t>(y) * w + x) * a + k;
        g_obj.at(k, y, x) = grad_logits[idx];
        for (int j = 0; j < 4; ++j) g_del.at(4 * k + j, y, x) = grad_deltas(static_cast<Eigen::Index>(idx), j);
      }
  Tensor3 g_hidden = rpn_objectness_.backward(g_obj, cache.objectness, true);
  g_hidden += rpn_deltas_.backward(g_del, cache.deltas, true);
  relu_backward_inplace(g_hidden, cache.hidden);
  return rpn_conv_.backward(g_hidden, cache.conv, true);
}

std::vector<Proposal> Detector::propose_regions(const FeatureMap& fmap, int max_proposals) const {
  const RpnOutput out = rpn_forward(fmap, nullptr);
  return select_proposals(out.anchors, out.objectness_logits, out.deltas, fmap.image_width, fmap.image_height,
                          cfg_.pre_nms_top_n, cfg_.proposal_nms_iou, max_proposals);
}

RoiPredictions Detector::head_forward(const ObjectFeatureSet& objects, std::vector<Box> rois, HeadCache* cache) const {
  check_initialized();
  require(objects.rows() == static_cast<Eigen::Index>(rois.size()), ErrorKind::kContract,
          "head: one feature row per ROI required");
  RowMatrix h1 = head_fc1_.forward(objects.features);
  relu_inplace(h1);
  RowMatrix h2 = head_fc2_.forward(h1);
  relu_inplace(h2);
  RoiPredictions out;
  out.rois = std::move(rois);
  out.class_logits = head_cls_.forward(h2);
  out.box_deltas = head_box_.forward(h2);
  if (cache) {
    cache->input = objects.features;
    cache->hidden1 = std::move(h1);
    cache->hidden2 = std::move(h2);
  }
  return out;
}

RowMatrix Detector::head_backward(const RowMatrix& grad_class_logits, const RowMatrix& grad_box_deltas,
                                  const HeadCache& cache) {
  RowMatrix g2 = head_cls_.backward(grad_class_logits, cache.hidden2);
  g2 += head_box_.backward(grad_box_deltas, cache.hidden2);
  relu_backward_inplace(g2, cache.hidden2);
  RowMatrix g1 = head_fc2_.backward(g2, cache.hidden1);
  relu_backward_inplace(g1, cache.hidden1);
  return head_fc1_.backward(g1, cache.input);
}

std::vector<Detection> Detector::detect(const Image& image, double score_threshold, double nms_iou) const {
  check_initialized();
  const FeatureMap fmap = extract_features(image);
  const auto proposals = propose_regions(fmap, cfg_.test_proposals);
  if (proposals.empty()) return {};
  std::vector<Box> rois;
  for (const auto& p : proposals) rois.push_back(p.box);
  const ObjectFeatureSet objects = pool_object_features(fmap, rois, cfg_.pool_size);
  const RoiPredictions pred = head_forward(objects, rois, nullptr);
  return postprocess_detections(pred.rois, softmax_rows(pred.class_logits), pred.box_deltas, cfg_, image.width(),
                                image.height(), score_threshold, nms_iou);
}

ParamRefs Detector::parameters() {
  ParamRefs refs;
  for (auto& c : backbone_) {
    refs.push_back(&c.weight);
    refs.push_back(&c.bias);
  }
  for (Conv2d* c : {&rpn_conv_, &rpn_objectness_, &rpn_deltas_}) {
    refs.push_back(&c->weight);
    refs.push_back(&c->bias);
  }
  for (Linear* l : {&head_fc1_, &head_fc2_, &head_cls_, &head_box_}) {
    refs.push_back(&l->weight);
    refs.push_back(&l->bias);
  }
  return refs;
}

}  // namespace adet
