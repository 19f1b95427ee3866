#pragma once

// A tiny, fully deterministic training setup shared by the training tests and the
// acceptance gradient check.

#include <algorithm>
#include <functional>

#include "adet/training.hpp"
#include "oracles.hpp"

namespace adet::testing {

inline DetectorConfig tiny_detector() {
  DetectorConfig cfg;
  cfg.categories = {"a", "b"};
  cfg.backbone_channels = {3, 4};
  cfg.rpn_channels = 4;
  cfg.anchor_size = 8.0;
  cfg.head_hidden = 6;
  cfg.pool_size = 2;
  cfg.rpn_batch_size = 16;
  cfg.train_proposals = 8;
  cfg.roi_batch_size = 8;
  return cfg;
}

inline TrainConfig tiny_train(AlignmentMode mode = AlignmentMode::kAligned) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.phase1_iterations = 4;
  cfg.phase2_iterations = 2;
  cfg.image_classifier_hidden = 5;
  cfg.object_classifier_hidden1 = 6;
  cfg.object_classifier_hidden2 = 4;
  return cfg;
}

inline Image noise_image(Rng& rng, int h, int w) {
  Image img(h, w);
  for (double& v : img.mutable_pixels().values()) v = rng.uniform();
  return img;
}

inline TripletBatch tiny_batch(std::uint64_t seed) {
  Rng rng(seed);
  TripletBatch b;
  b.source = {"s", noise_image(rng, 16, 24), std::vector<BoxAnnotation>{{"a", {2, 3, 11, 12}}, {"b", {13, 1, 22, 9}}},
              Domain::kSource};
  b.target = {"t", noise_image(rng, 16, 24), std::nullopt, Domain::kTarget};
  b.auxiliary = {"x", noise_image(rng, 16, 24), std::nullopt, Domain::kAuxiliary};
  return b;
}

// Zero-initialized biases put many ReLU inputs exactly on the kink (dead feature cells
// feed the classifiers pure bias), where a central difference is meaningless.
inline void jitter_biases(Model& model, std::uint64_t seed) {
  Rng rng(seed);
  for (Param* p : model.parameters())
    if (p->name.ends_with(".bias"))
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.uniform(-0.1, 0.1);
}

struct GradientCheck {
  std::size_t checked = 0;
  double worst = 0.0;
  std::string worst_param;
};

// Compares the analytic gradient accumulated by compute_step with central differences of
// the objective each parameter group actually descends: detector weights see the
// reversal (-lambda) on the domain losses, classifier weights see +w times them.
// lambda values are held at the base step's values, exactly as the update treats them.
inline GradientCheck check_step_gradients(Model& model, const TripletBatch& batch, const TrainConfig& cfg,
                                          const AdversarialConfig& adv, std::uint64_t rng_seed,
                                          std::size_t max_per_param = 1000) {
  StepTrace trace;
  {
    StepState st;
    Rng rng(rng_seed);
    StepOptions o;
    o.backward = false;
    o.trace = &trace;
    compute_step(batch, model, cfg, adv, st, rng, o);
  }
  StepOptions frozen;
  frozen.frozen = &trace;
  const ParamRefs params = model.parameters();
  zero_grads(params);
  StepState st;
  Rng rng(rng_seed);
  const LossReport base = compute_step(batch, model, cfg, adv, st, rng, frozen);

  auto report = [&] {
    StepState s;
    Rng r(rng_seed);
    StepOptions o;
    o.backward = false;
    o.frozen = &trace;
    return compute_step(batch, model, cfg, adv, s, r, o);
  };
  const double w = cfg.effective_w();
  const bool aligned = cfg.mode == AlignmentMode::kAligned;
  auto detector_objective = [&] {
    const LossReport r = report();
    return r.l_cls + r.l_reg + w * (r.l_img_triplet + (aligned ? r.l_obj_triplet : 0.0)) -
           w * base.lambda_img * r.l_img - w * base.lambda_obj * r.l_obj;
  };
  auto classifier_objective = [&] {
    const LossReport r = report();
    return w * (r.l_img + r.l_obj);
  };

  std::vector<Param*> head_params;
  if (model.heads) head_params = model.heads->parameters();
  GradientCheck out;
  for (Param* p : params) {
    const bool is_head = std::find(head_params.begin(), head_params.end(), p) != head_params.end();
    const std::function<double()> f = is_head ? std::function<double()>(classifier_objective)
                                              : std::function<double()>(detector_objective);
    const Eigen::Index n = std::min<Eigen::Index>(p->value.size(), static_cast<Eigen::Index>(max_per_param));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double err = oracle::gradient_error(p->grad.data()[i], f, p->value.data()[i]);
      ++out.checked;
      if (err > out.worst) {
        out.worst = err;
        out.worst_param = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  zero_grads(params);
  return out;
}

}  // namespace adet::testing
