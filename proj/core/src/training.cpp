#include "adet/training.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "adet/error.hpp"

namespace adet {

namespace {

void check_finite(double value, const char* name) {
  if (!std::isfinite(value)) fail(ErrorKind::kNonFiniteLoss, std::string(name) + " is not finite");
}

std::vector<Box> boxes_of(const std::vector<BoxAnnotation>& annotations) {
  std::vector<Box> out;
  out.reserve(annotations.size());
  for (const auto& a : annotations) out.push_back(a.box);
  return out;
}

std::vector<Box> top_boxes(const std::vector<Proposal>& proposals, std::size_t n) {
  std::vector<Box> out;
  for (std::size_t i = 0; i < proposals.size() && i < n; ++i) out.push_back(proposals[i].box);
  return out;
}

double update_lambda(double loss, std::optional<double>& smoothed, const TrainConfig& cfg,
                     const AdversarialConfig& adv) {
  double value = loss;
  if (cfg.lambda_ema) {
    smoothed = smoothed ? cfg.lambda_ema_decay * *smoothed + (1.0 - cfg.lambda_ema_decay) * loss : loss;
    value = *smoothed;
  }
  // A non-finite loss has no meaningful lambda; the step is skipped downstream.
  if (!std::isfinite(value)) return std::numeric_limits<double>::quiet_NaN();
  return compute_lambda_adv(value, adv);
}

void add_span(Tensor3& dst, const std::vector<double>& src, double scale) {
  auto d = dst.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * src[i];
}

bool grads_finite(const ParamRefs& params) {
  for (const Param* p : params)
    if (!p->grad.allFinite()) return false;
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  require(w >= 0.0, ErrorKind::kConfiguration, "loss weight w must be >= 0");
  require(phase1_iterations >= 0 && phase2_iterations >= 0, ErrorKind::kConfiguration,
          "phase lengths must be >= 0");
  require(lr_initial >= 0.0 && lr_final >= 0.0, ErrorKind::kConfiguration, "learning rates must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kConfiguration, "momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, ErrorKind::kConfiguration, "weight decay must be >= 0");
  require(margin_delta > 0.0, ErrorKind::kConfiguration, "margin_delta must be positive");
  require(lambda_ema_decay >= 0.0 && lambda_ema_decay < 1.0, ErrorKind::kConfiguration,
          "lambda_ema_decay must lie in [0, 1)");
  require(image_classifier_hidden > 0 && object_classifier_hidden1 > 0 && object_classifier_hidden2 > 0,
          ErrorKind::kConfiguration, "domain classifier widths must be positive");
}

double total_loss(const LossReport& c, double w, AlignmentMode mode) {
  check_finite(c.l_cls, "L_cls");
  check_finite(c.l_reg, "L_reg");
  check_finite(c.l_img, "L_img");
  check_finite(c.l_obj, "L_obj");
  check_finite(c.l_img_triplet, "L^R_img");
  double adaptation = c.l_img + c.l_obj + c.l_img_triplet;
  if (mode == AlignmentMode::kAligned) {
    check_finite(c.l_obj_triplet, "L^R_obj");
    adaptation += c.l_obj_triplet;
  }
  return c.l_cls + c.l_reg + w * adaptation;
}

void TripletBatch::validate() const {
  require(source.domain == Domain::kSource && target.domain == Domain::kTarget &&
              auxiliary.domain == Domain::kAuxiliary,
          ErrorKind::kContract, "batch must hold one source, one target and one auxiliary sample");
  require(source.annotations.has_value(), ErrorKind::kContract, "source sample must carry annotations");
  require(!target.annotations.has_value(), ErrorKind::kContract, "target sample must not carry annotations");
}

ParamRefs AdaptationHeads::parameters() {
  ParamRefs refs = image.parameters();
  for (Param* p : object.parameters()) refs.push_back(p);
  return refs;
}

Model Model::create(const DetectorConfig& detector_cfg, const TrainConfig& train_cfg, std::uint64_t seed) {
  train_cfg.validate();
  Model m;
  m.detector = Detector::create(detector_cfg, derive_seed(seed, 0));
  if (!train_cfg.source_only) {
    m.heads = AdaptationHeads{
        ImageDomainClassifier(detector_cfg.feature_channels(), train_cfg.image_classifier_hidden, derive_seed(seed, 1)),
        ObjectDomainClassifier(detector_cfg.pooled_dim(), train_cfg.object_classifier_hidden1,
                               train_cfg.object_classifier_hidden2, derive_seed(seed, 2))};
  }
  return m;
}

ParamRefs Model::parameters() {
  ParamRefs refs = detector.parameters();
  if (heads)
    for (Param* p : heads->parameters()) refs.push_back(p);
  return refs;
}

LossReport compute_step(const TripletBatch& batch, Model& model, const TrainConfig& cfg, const AdversarialConfig& adv,
                        StepState& state, Rng& rng, const StepOptions& options) {
  batch.validate();
  Detector& det = model.detector;
  const DetectorConfig& dcfg = det.config();
  const double w = cfg.effective_w();
  const bool adapt = !cfg.source_only && model.heads.has_value();
  const bool backward = options.backward;

  LossReport report;
  report.iteration = state.iteration;
  report.lr = cfg.learning_rate(state.iteration);
  report.has_obj_triplet = cfg.mode == AlignmentMode::kAligned;

  // Source branch: detection losses.
  Detector::BackboneCache src_cache;
  const FeatureMap fs = det.extract_features(batch.source.image, backward ? &src_cache : nullptr);
  Tensor3 grad_fs(fs.channels(), fs.height(), fs.width());

  Detector::RpnCache rpn_cache;
  const auto rpn = det.rpn_forward(fs, backward ? &rpn_cache : nullptr);
  const std::vector<Box> gt = boxes_of(*batch.source.annotations);
  const RpnLossResult rpn_loss = rpn_losses(rpn.anchors, rpn.objectness_logits, rpn.deltas, gt, dcfg, rng);

  std::vector<Box> source_rois;
  if (options.frozen) {
    source_rois = options.frozen->source_rois;
  } else {
    const auto proposals = select_proposals(rpn.anchors, rpn.objectness_logits, rpn.deltas, fs.image_width,
                                            fs.image_height, dcfg.pre_nms_top_n, dcfg.proposal_nms_iou,
                                            dcfg.train_proposals);
    source_rois = sample_rois(proposals, gt, dcfg, rng);
  }
  const ObjectFeatureSet pooled_s = pool_object_features(fs, source_rois, dcfg.pool_size);
  Detector::HeadCache head_cache;
  const RoiPredictions head = det.head_forward(pooled_s, source_rois, backward ? &head_cache : nullptr);
  const DetectionLossResult det_loss =
      detection_losses(head, ImageAnnotations{head.image_id, *batch.source.annotations}, dcfg);

  report.l_cls = rpn_loss.objectness + det_loss.classification;
  report.l_reg = rpn_loss.regression + det_loss.regression;

  RowMatrix grad_pooled_s = RowMatrix::Zero(pooled_s.rows(), pooled_s.features.cols());
  if (backward) {
    grad_fs += det.rpn_backward(rpn_loss.grad_logits, rpn_loss.grad_deltas, rpn_cache);
    grad_pooled_s += det.head_backward(det_loss.grad_class_logits, det_loss.grad_box_deltas, head_cache);
  }

  Detector::BackboneCache tgt_cache, aux_cache;
  FeatureMap ft, fa;
  Tensor3 grad_ft, grad_fa;
  std::vector<Box> target_rois;
  if (adapt) {
    AdaptationHeads& heads = *model.heads;
    ft = det.extract_features(batch.target.image, backward ? &tgt_cache : nullptr);
    fa = det.extract_features(batch.auxiliary.image, backward ? &aux_cache : nullptr);
    require(fs.activations.same_shape(ft.activations) && fs.activations.same_shape(fa.activations),
            ErrorKind::kContract, "source/target/auxiliary images must share resolution");
    grad_ft = Tensor3(ft.channels(), ft.height(), ft.width());
    grad_fa = Tensor3(fa.channels(), fa.height(), fa.width());

    // Image-level domain classifier behind the reversal layer.
    ImageDomainClassifier::Cache ic_s, ic_t;
    const std::vector<DomainPrediction> img_pred{heads.image.forward(fs, &ic_s), heads.image.forward(ft, &ic_t)};
    const std::vector<Domain> labels{Domain::kSource, Domain::kTarget};
    const DomainLoss img_loss = image_domain_loss(img_pred, labels);
    report.l_img = img_loss.value;
    report.lambda_img = update_lambda(img_loss.value, state.smoothed_img_loss, cfg, adv);

    // Object-level classifier on source ROIs and the target's own proposals.
    if (options.frozen) {
      target_rois = options.frozen->target_rois;
    } else {
      target_rois = top_boxes(det.propose_regions(ft, dcfg.train_proposals), source_rois.size());
    }
    const ObjectFeatureSet pooled_t = pool_object_features(ft, target_rois, dcfg.pool_size);
    ObjectDomainClassifier::Cache oc_s, oc_t;
    const std::vector<DomainPrediction> obj_pred{heads.object.forward(pooled_s.features, &oc_s),
                                                 heads.object.forward(pooled_t.features, &oc_t)};
    const DomainLoss obj_loss = object_domain_loss(obj_pred, labels);
    report.l_obj = obj_loss.value;
    report.lambda_obj = update_lambda(obj_loss.value, state.smoothed_obj_loss, cfg, adv);

    // Metric regularization: source anchor, target positive, auxiliary negative.
    const TripletLoss img_triplet =
        image_triplet_loss({fs.activations.values(), ft.activations.values(), fa.activations.values(),
                            cfg.margin_delta});
    report.l_img_triplet = img_triplet.value;

    ObjectTripletLoss obj_triplet;
    ObjectFeatureSet t_at_s, a_at_s;
    if (cfg.mode == AlignmentMode::kAligned) {
      t_at_s = pool_object_features(ft, source_rois, dcfg.pool_size);
      a_at_s = pool_object_features(fa, source_rois, dcfg.pool_size);
      obj_triplet = object_triplet_loss({&pooled_s.features, &t_at_s.features, &a_at_s.features, cfg.margin_delta},
                                        cfg.mode);
      report.l_obj_triplet = obj_triplet.value;
    }

    if (backward && w > 0.0 && std::isfinite(report.lambda_img) && std::isfinite(report.lambda_obj)) {
      auto scaled = [w](std::vector<double> g) {
        for (double& v : g) v *= w;
        return g;
      };
      // Classifier parameters descend w * L; the features receive -lambda * w * dL/dF.
      Tensor3 g_img_s = heads.image.backward(scaled(img_loss.logit_grads[0]), ic_s, fs.height(), fs.width());
      Tensor3 g_img_t = heads.image.backward(scaled(img_loss.logit_grads[1]), ic_t, ft.height(), ft.width());
      advgrl_backward_inplace(g_img_s.values(), report.lambda_img);
      advgrl_backward_inplace(g_img_t.values(), report.lambda_img);
      grad_fs += g_img_s;
      grad_ft += g_img_t;

      RowMatrix g_obj_s = heads.object.backward(scaled(obj_loss.logit_grads[0]), oc_s);
      RowMatrix g_obj_t = heads.object.backward(scaled(obj_loss.logit_grads[1]), oc_t);
      advgrl_backward_inplace(std::span<double>(g_obj_s.data(), static_cast<std::size_t>(g_obj_s.size())),
                              report.lambda_obj);
      advgrl_backward_inplace(std::span<double>(g_obj_t.data(), static_cast<std::size_t>(g_obj_t.size())),
                              report.lambda_obj);
      if (g_obj_s.rows() > 0) grad_pooled_s += g_obj_s;
      if (g_obj_t.rows() > 0) pool_object_features_backward(ft, target_rois, g_obj_t, dcfg.pool_size, grad_ft);

      add_span(grad_fs, img_triplet.grad_anchor, w);
      add_span(grad_ft, img_triplet.grad_positive, w);
      add_span(grad_fa, img_triplet.grad_negative, w);

      if (cfg.mode == AlignmentMode::kAligned && !source_rois.empty()) {
        grad_pooled_s += w * obj_triplet.grad_anchor;
        pool_object_features_backward(ft, source_rois, w * obj_triplet.grad_positive, dcfg.pool_size, grad_ft);
        pool_object_features_backward(fa, source_rois, w * obj_triplet.grad_negative, dcfg.pool_size, grad_fa);
      }
    }
  }

  if (options.trace) *options.trace = StepTrace{source_rois, target_rois};

  try {
    report.total = total_loss(report, w, cfg.mode);
  } catch (const Error&) {
    report.total = std::numeric_limits<double>::quiet_NaN();
    report.skipped = true;
    return report;
  }

  if (backward) {
    if (!source_rois.empty()) pool_object_features_backward(fs, source_rois, grad_pooled_s, dcfg.pool_size, grad_fs);
    det.backbone_backward(grad_fs, src_cache);
    if (adapt && w > 0.0) {
      det.backbone_backward(grad_ft, tgt_cache);
      det.backbone_backward(grad_fa, aux_cache);
    }
  }
  return report;
}

void sgd_update(const ParamRefs& params, double lr, double momentum, double weight_decay) {
  for (Param* p : params) {
    p->velocity = momentum * p->velocity + p->grad + weight_decay * p->value;
    p->value -= lr * p->velocity;
  }
}

LossReport train_step(const TripletBatch& batch, Model& model, const TrainConfig& cfg, const AdversarialConfig& adv,
                      StepState& state, Rng& rng) {
  const ParamRefs params = model.parameters();
  zero_grads(params);
  LossReport report = compute_step(batch, model, cfg, adv, state, rng);
  if (!report.skipped && !grads_finite(params)) report.skipped = true;
  if (!report.skipped) {
    if (cfg.clip_norm > 0.0) {
      const double norm = global_grad_norm(params);
      if (norm > cfg.clip_norm) {
        const double scale = cfg.clip_norm / norm;
        for (Param* p : params) p->grad *= scale;
      }
    }
    sgd_update(params, report.lr, cfg.momentum, cfg.weight_decay);
  }
  zero_grads(params);
  ++state.iteration;
  return report;
}

std::string training_log_header(AlignmentMode mode) {
  std::string h = "iteration\tlr\tL_cls\tL_reg\tL_img\tL_obj\tL_R_img";
  if (mode == AlignmentMode::kAligned) h += "\tL_R_obj";
  h += "\tlambda_img\tlambda_obj\ttotal";
  return h;
}

std::string training_log_line(const LossReport& r) {
  char buf[64];
  std::string line = std::to_string(r.iteration);
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "\t%.17g", v);
    line += buf;
  };
  put(r.lr);
  put(r.l_cls);
  put(r.l_reg);
  put(r.l_img);
  put(r.l_obj);
  put(r.l_img_triplet);
  if (r.has_obj_triplet) put(r.l_obj_triplet);
  put(r.lambda_img);
  put(r.lambda_obj);
  put(r.total);
  return line;
}

TrainingResult run_training(const TrainingData& data, const DetectorConfig& detector_cfg, const TrainConfig& cfg,
                            const AdversarialConfig& adv, std::uint64_t seed, std::ostream* log) {
  cfg.validate();
  adv.validate();
  require(!data.source.empty(), ErrorKind::kIngestion, "source set is empty");
  for (const auto& s : data.source)
    require(s.annotations.has_value(), ErrorKind::kIngestion, "source image '" + s.image_id + "' has no annotations");
  if (!cfg.source_only) {
    require(!data.target.empty(), ErrorKind::kIngestion, "target set is empty");
    require(!data.auxiliary.empty() || data.auxiliary_generator, ErrorKind::kIngestion, "auxiliary set is empty");
    if (cfg.mode == AlignmentMode::kAligned && !data.auxiliary_generator)
      require(data.auxiliary.size() == data.source.size(), ErrorKind::kIngestion,
              "aligned mode needs one auxiliary image per source image");
  }

  TrainingResult result{Model::create(detector_cfg, cfg, seed), 0, {}, 0};
  Rng sampler(derive_seed(seed, 10));
  Rng step_rng(derive_seed(seed, 11));
  StepState state;
  if (log) *log << training_log_header(cfg.mode) << '\n';

  std::vector<std::size_t> order(data.source.size());
  std::size_t cursor = order.size();
  const bool paired_target = cfg.mode == AlignmentMode::kAligned && data.target.size() == data.source.size();
  const bool paired_aux = data.auxiliary.size() == data.source.size();

  for (int it = 0; it < cfg.total_iterations(); ++it) {
    if (cursor == order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      sampler.shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    const std::size_t i = order[cursor++];
    TripletBatch batch;
    batch.source = data.source[i];
    batch.source.domain = Domain::kSource;
    if (!cfg.source_only) {
      batch.target = data.target[paired_target ? i : sampler.index(data.target.size())];
      batch.auxiliary = data.auxiliary_generator
                            ? data.auxiliary_generator(i, it)
                            : data.auxiliary[paired_aux ? i : sampler.index(data.auxiliary.size())];
    } else {
      batch.target = DetectionSample{"", data.source[i].image, std::nullopt, Domain::kTarget};
      batch.auxiliary = DetectionSample{"", data.source[i].image, std::nullopt, Domain::kAuxiliary};
    }
    batch.target.domain = Domain::kTarget;
    batch.target.annotations.reset();
    batch.auxiliary.domain = Domain::kAuxiliary;

    LossReport report = train_step(batch, result.model, cfg, adv, state, step_rng);
    if (report.skipped) {
      ++result.skipped_steps;
      if (log) *log << "# skipped iteration " << report.iteration << " (non-finite loss or gradient)\n";
    } else if (log) {
      *log << training_log_line(report) << '\n';
    }
    result.reports.push_back(report);
  }
  result.iterations = state.iteration;
  return result;
}

}  // namespace adet
