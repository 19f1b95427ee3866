#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adet/adversarial.hpp"
#include "adet/detector.hpp"
#include "adet/metric.hpp"

namespace adet {

struct TrainConfig {
  double w = 0.1;  // weight of the adaptation terms in the composite loss
  double lr_initial = 0.01;
  double lr_final = 0.001;
  int phase1_iterations = 50000;
  int phase2_iterations = 20000;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  AlignmentMode mode = AlignmentMode::kAligned;
  bool source_only = false;  // forces w = 0 and skips the adaptation branch
  double clip_norm = 10.0;   // global gradient-norm clip; <= 0 disables
  bool lambda_ema = false;   // smooth the classifier loss feeding lambda_adv
  double lambda_ema_decay = 0.9;
  bool resample_auxiliary = false;  // draw a fresh auxiliary image per step (CLI only)
  double margin_delta = 1.0;
  int image_classifier_hidden = 256;
  int object_classifier_hidden1 = 1024;
  int object_classifier_hidden2 = 256;

  double effective_w() const noexcept { return source_only ? 0.0 : w; }
  int total_iterations() const noexcept { return phase1_iterations + phase2_iterations; }
  // Two-phase step schedule: lr_initial before phase1_iterations, lr_final after.
  double learning_rate(int iteration) const noexcept {
    return iteration < phase1_iterations ? lr_initial : lr_final;
  }
  void validate() const;
};

struct LossReport {
  int iteration = 0;
  double lr = 0.0;
  double l_cls = 0.0;
  double l_reg = 0.0;
  double l_img = 0.0;
  double l_obj = 0.0;
  double l_img_triplet = 0.0;
  double l_obj_triplet = 0.0;
  bool has_obj_triplet = true;  // false in unaligned mode
  double lambda_img = 0.0;
  double lambda_obj = 0.0;
  double total = 0.0;
  bool skipped = false;
};

// L_cls + L_reg + w * (L_img + L_obj + L^R_img [+ L^R_obj]); L^R_obj only in aligned mode.
// Throws kNonFiniteLoss naming the offending component.
double total_loss(const LossReport& components, double w, AlignmentMode mode);

struct DetectionSample {
  std::string image_id;
  Image image;
  std::optional<std::vector<BoxAnnotation>> annotations;
  Domain domain = Domain::kSource;
};

// One image per domain; only the source carries annotations.
struct TripletBatch {
  DetectionSample source;
  DetectionSample target;
  DetectionSample auxiliary;

  void validate() const;
};

struct AdaptationHeads {
  ImageDomainClassifier image;
  ObjectDomainClassifier object;

  ParamRefs parameters();
};

struct Model {
  Detector detector;
  std::optional<AdaptationHeads> heads;  // training-only; absent at inference

  static Model create(const DetectorConfig& detector_cfg, const TrainConfig& train_cfg, std::uint64_t seed);
  ParamRefs parameters();
};

// Mutable per-run state carried across steps.
struct StepState {
  int iteration = 0;
  std::optional<double> smoothed_img_loss;
  std::optional<double> smoothed_obj_loss;
};

// ROIs used in a step. Passing them back in freezes proposal selection, which makes the
// step objective a smooth function of the weights (used by gradient oracles).
struct StepTrace {
  std::vector<Box> source_rois;
  std::vector<Box> target_rois;
};

struct StepOptions {
  bool backward = true;
  const StepTrace* frozen = nullptr;
  StepTrace* trace = nullptr;
};

// Forward (and optionally backward) pass of the composite objective. Gradients are
// accumulated into the parameters; nothing is updated.
LossReport compute_step(const TripletBatch& batch, Model& model, const TrainConfig& cfg, const AdversarialConfig& adv,
                        StepState& state, Rng& rng, const StepOptions& options = {});

// SGD with momentum and weight decay: v = m * v + (g + wd * p); p -= lr * v.
void sgd_update(const ParamRefs& params, double lr, double momentum, double weight_decay);

// One optimization step. A non-finite loss or gradient skips the update and marks the
// report as skipped.
LossReport train_step(const TripletBatch& batch, Model& model, const TrainConfig& cfg, const AdversarialConfig& adv,
                      StepState& state, Rng& rng);

struct TrainingData {
  std::vector<DetectionSample> source;
  std::vector<DetectionSample> target;
  std::vector<DetectionSample> auxiliary;
  // When set, replaces `auxiliary`: called with (source index, iteration) every step.
  std::function<DetectionSample(std::size_t, int)> auxiliary_generator;
};

struct TrainingResult {
  Model model;
  int iterations = 0;
  std::vector<LossReport> reports;
  int skipped_steps = 0;
};

// Tab-separated training log: header line then one line per step.
std::string training_log_header(AlignmentMode mode);
std::string training_log_line(const LossReport& report);

TrainingResult run_training(const TrainingData& data, const DetectorConfig& detector_cfg, const TrainConfig& cfg,
                            const AdversarialConfig& adv, std::uint64_t seed, std::ostream* log = nullptr);

}  // namespace adet
