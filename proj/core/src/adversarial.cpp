#include "adet/adversarial.hpp"

#include <algorithm>
#include <cmath>

#include "adet/error.hpp"

namespace adet {

void AdversarialConfig::validate() const {
  require(lambda0 > 0.0, ErrorKind::kConfiguration, "lambda0 must be positive");
  require(alpha > 0.0, ErrorKind::kConfiguration, "alpha must be positive");
  require(beta >= lambda0, ErrorKind::kConfiguration, "beta must be >= lambda0");
}

const char* to_string(Domain domain) {
  switch (domain) {
    case Domain::kSource: return "source";
    case Domain::kTarget: return "target";
    case Domain::kAuxiliary: return "auxiliary";
  }
  return "unknown";
}

double domain_ground_truth(Domain domain) {
  switch (domain) {
    case Domain::kSource: return 1.0;
    case Domain::kTarget: return 0.0;
    case Domain::kAuxiliary: break;
  }
  fail(ErrorKind::kContract, "auxiliary samples have no domain-classifier label");
}

std::vector<double> advgrl_forward(std::span<const double> values) { return {values.begin(), values.end()}; }

void advgrl_backward_inplace(std::span<double> grad, double lambda_adv) {
  require(lambda_adv > 0.0, ErrorKind::kContract, "lambda_adv must be positive");
  for (double& g : grad) {
    if (!std::isfinite(g)) fail(ErrorKind::kNonFiniteGradient, "non-finite gradient entering the reversal layer");
    g *= -lambda_adv;
  }
}

std::vector<double> advgrl_backward(std::span<const double> upstream_grad, double lambda_adv) {
  std::vector<double> out(upstream_grad.begin(), upstream_grad.end());
  advgrl_backward_inplace(out, lambda_adv);
  return out;
}

double compute_lambda_adv(double classifier_loss, const AdversarialConfig& cfg) {
  require(classifier_loss >= 0.0, ErrorKind::kContract, "classifier loss must be non-negative");
  if (classifier_loss < cfg.alpha) {
    if (classifier_loss == 0.0) return cfg.beta;
    return std::min(cfg.lambda0 / classifier_loss, cfg.beta);
  }
  return cfg.lambda0;
}

namespace {

double clamped_sigmoid(double z) {
  const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

bool clamp_active(double z) {
  const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return p <= kProbabilityClamp || p >= 1.0 - kProbabilityClamp;
}

// d BCE / d logit through the clamped sigmoid.
double bce_logit_grad(double logit, double probability, double ground_truth) {
  return clamp_active(logit) ? 0.0 : probability - ground_truth;
}

void check_labels(std::span<const DomainPrediction> predictions, std::span<const Domain> labels) {
  require(predictions.size() == labels.size(), ErrorKind::kContract, "one domain label per prediction required");
}

}  // namespace

DomainPrediction DomainPrediction::from_logits(std::vector<double> logits) {
  DomainPrediction p;
  p.probabilities.reserve(logits.size());
  for (double z : logits) p.probabilities.push_back(clamped_sigmoid(z));
  p.logits = std::move(logits);
  return p;
}

DomainPrediction DomainPrediction::from_probabilities(std::vector<double> probabilities) {
  DomainPrediction p;
  for (double& v : probabilities) {
    require(v >= 0.0 && v <= 1.0, ErrorKind::kInvalidInput, "probability outside [0, 1]");
    v = std::clamp(v, kProbabilityClamp, 1.0 - kProbabilityClamp);
    p.logits.push_back(std::log(v / (1.0 - v)));
  }
  p.probabilities = std::move(probabilities);
  return p;
}

double DomainPrediction::mean() const {
  if (probabilities.empty()) return 0.0;
  double s = 0.0;
  for (double v : probabilities) s += v;
  return s / static_cast<double>(probabilities.size());
}

double binary_cross_entropy(double probability, double ground_truth) {
  const double p = std::clamp(probability, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(ground_truth * std::log(p) + (1.0 - ground_truth) * std::log(1.0 - p));
}

DomainLoss image_domain_loss(std::span<const DomainPrediction> predictions, std::span<const Domain> labels) {
  check_labels(predictions, labels);
  DomainLoss out;
  out.logit_grads.resize(predictions.size());
  if (predictions.empty()) return out;
  const double inv_images = 1.0 / static_cast<double>(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double g = domain_ground_truth(labels[i]);
    const auto& pred = predictions[i];
    require(!pred.probabilities.empty(), ErrorKind::kContract, "image-level prediction has no locations");
    const double inv_loc = 1.0 / static_cast<double>(pred.size());
    double image_loss = 0.0;
    out.logit_grads[i].resize(pred.size());
    for (std::size_t l = 0; l < pred.size(); ++l) {
      image_loss += binary_cross_entropy(pred.probabilities[l], g);
      out.logit_grads[i][l] = bce_logit_grad(pred.logits[l], pred.probabilities[l], g) * inv_loc * inv_images;
    }
    out.value += image_loss * inv_loc * inv_images;
  }
  return out;
}

DomainLoss object_domain_loss(std::span<const DomainPrediction> predictions, std::span<const Domain> labels) {
  check_labels(predictions, labels);
  DomainLoss out;
  out.logit_grads.resize(predictions.size());
  std::size_t total = 0;
  for (const auto& p : predictions) total += p.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) out.logit_grads[i].assign(predictions[i].size(), 0.0);
  if (total == 0) return out;
  const double inv = 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() == 0) continue;
    const double g = domain_ground_truth(labels[i]);
    const auto& pred = predictions[i];
    for (std::size_t j = 0; j < pred.size(); ++j) {
      out.value += binary_cross_entropy(pred.probabilities[j], g) * inv;
      out.logit_grads[i][j] = bce_logit_grad(pred.logits[j], pred.probabilities[j], g) * inv;
    }
  }
  return out;
}

ImageDomainClassifier::ImageDomainClassifier(int channels, int hidden, std::uint64_t seed)
    : conv1_("image_domain.conv1", channels, hidden), conv2_("image_domain.conv2", hidden, 1) {
  Rng rng(seed);
  conv1_.init_he(rng);
  conv2_.init_normal(rng, 0.01);
}

DomainPrediction ImageDomainClassifier::forward(const FeatureMap& fmap, Cache* cache) const {
  // (C, H*W) -> one row per location.
  RowMatrix input = as_matrix(fmap.activations).transpose();
  RowMatrix hidden = conv1_.forward(input);
  relu_inplace(hidden);
  const RowMatrix logits = conv2_.forward(hidden);
  std::vector<double> z(logits.data(), logits.data() + logits.size());
  if (cache) {
    cache->input = std::move(input);
    cache->hidden = std::move(hidden);
  }
  return DomainPrediction::from_logits(std::move(z));
}

Tensor3 ImageDomainClassifier::backward(std::span<const double> grad_logits, const Cache& cache, int height,
                                        int width) {
  require(static_cast<Eigen::Index>(grad_logits.size()) == cache.input.rows(), ErrorKind::kContract,
          "image classifier backward: gradient size mismatch");
  RowMatrix g(static_cast<Eigen::Index>(grad_logits.size()), 1);
  for (std::size_t i = 0; i < grad_logits.size(); ++i) g(static_cast<Eigen::Index>(i), 0) = grad_logits[i];
  RowMatrix gh = conv2_.backward(g, cache.hidden);
  relu_backward_inplace(gh, cache.hidden);
  const RowMatrix gi = conv1_.backward(gh, cache.input);
  Tensor3 out(static_cast<int>(gi.cols()), height, width);
  as_matrix(out) = gi.transpose();
  return out;
}

void ImageDomainClassifier::zero_output_layer() { conv2_.zero_init(); }

ParamRefs ImageDomainClassifier::parameters() {
  return {&conv1_.weight, &conv1_.bias, &conv2_.weight, &conv2_.bias};
}

ObjectDomainClassifier::ObjectDomainClassifier(int input_dim, int hidden1, int hidden2, std::uint64_t seed)
    : fc1_("object_domain.fc1", input_dim, hidden1),
      fc2_("object_domain.fc2", hidden1, hidden2),
      fc3_("object_domain.fc3", hidden2, 1) {
  Rng rng(seed);
  fc1_.init_he(rng);
  fc2_.init_he(rng);
  fc3_.init_normal(rng, 0.01);
}

DomainPrediction ObjectDomainClassifier::forward(const RowMatrix& objects, Cache* cache) const {
  if (objects.rows() == 0) {
    if (cache) *cache = Cache{};
    return DomainPrediction{};
  }
  RowMatrix h1 = fc1_.forward(objects);
  relu_inplace(h1);
  RowMatrix h2 = fc2_.forward(h1);
  relu_inplace(h2);
  const RowMatrix logits = fc3_.forward(h2);
  std::vector<double> z(logits.data(), logits.data() + logits.size());
  if (cache) {
    cache->input = objects;
    cache->hidden1 = std::move(h1);
    cache->hidden2 = std::move(h2);
  }
  return DomainPrediction::from_logits(std::move(z));
}

RowMatrix ObjectDomainClassifier::backward(std::span<const double> grad_logits, const Cache& cache) {
  if (grad_logits.empty()) return RowMatrix(0, fc1_.in_features());
  require(static_cast<Eigen::Index>(grad_logits.size()) == cache.input.rows(), ErrorKind::kContract,
          "object classifier backward: gradient size mismatch");
  RowMatrix g(static_cast<Eigen::Index>(grad_logits.size()), 1);
  for (std::size_t i = 0; i < grad_logits.size(); ++i) g(static_cast<Eigen::Index>(i), 0) = grad_logits[i];
  RowMatrix g2 = fc3_.backward(g, cache.hidden2);
  relu_backward_inplace(g2, cache.hidden2);
  RowMatrix g1 = fc2_.backward(g2, cache.hidden1);
  relu_backward_inplace(g1, cache.hidden1);
  return fc1_.backward(g1, cache.input);
}

void ObjectDomainClassifier::zero_output_layer() { fc3_.zero_init(); }

ParamRefs ObjectDomainClassifier::parameters() {
  return {&fc1_.weight, &fc1_.bias, &fc2_.weight, &fc2_.bias, &fc3_.weight, &fc3_.bias};
}

}  // namespace adet
