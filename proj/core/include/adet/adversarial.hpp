#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "adet/nn.hpp"
#include "adet/tensor.hpp"

namespace adet {

struct AdversarialConfig {
  double lambda0 = 1.0;
  double alpha = 0.63;  // hardness threshold on the domain-classifier loss
  double beta = 30.0;   // overflow cap on the reversal weight

  void validate() const;
};

enum class Domain { kSource, kTarget, kAuxiliary };

const char* to_string(Domain domain);
// Classifier ground truth: 1 for source, 0 for target. Auxiliary samples never reach a
// domain classifier, so asking for their label is a contract error.
double domain_ground_truth(Domain domain);

// Identity in the forward direction.
std::vector<double> advgrl_forward(std::span<const double> values);
// -lambda_adv * upstream; throws kNonFiniteGradient on NaN/Inf input.
std::vector<double> advgrl_backward(std::span<const double> upstream_grad, double lambda_adv);
void advgrl_backward_inplace(std::span<double> grad, double lambda_adv);

// Hardness-adaptive reversal weight: min(lambda0 / loss, beta) below alpha, lambda0
// otherwise. loss == 0 yields beta.
double compute_lambda_adv(double classifier_loss, const AdversarialConfig& cfg);

inline constexpr double kProbabilityClamp = 1e-7;

// Per-location (image level) or per-proposal (object level) domain probabilities.
struct DomainPrediction {
  std::vector<double> logits;
  std::vector<double> probabilities;  // clamped sigmoid of logits

  static DomainPrediction from_logits(std::vector<double> logits);
  // Probabilities supplied directly (logits are derived from the clamped values).
  static DomainPrediction from_probabilities(std::vector<double> probabilities);
  double mean() const;
  std::size_t size() const noexcept { return probabilities.size(); }
};

struct DomainLoss {
  double value = 0.0;
  // d value / d logit, one vector per prediction.
  std::vector<std::vector<double>> logit_grads;
};

double binary_cross_entropy(double probability, double ground_truth);

// Mean over locations within an image, then mean over images.
DomainLoss image_domain_loss(std::span<const DomainPrediction> predictions, std::span<const Domain> labels);
// Mean over every proposal of the batch; zero when no image has proposals.
DomainLoss object_domain_loss(std::span<const DomainPrediction> predictions, std::span<const Domain> labels);

// Two 1x1 convolutions (C -> hidden -> 1) applied at every feature location.
class ImageDomainClassifier {
 public:
  struct Cache {
    RowMatrix input;
    RowMatrix hidden;
  };

  ImageDomainClassifier() = default;
  ImageDomainClassifier(int channels, int hidden, std::uint64_t seed);

  DomainPrediction forward(const FeatureMap& fmap, Cache* cache) const;
  // Gradient w.r.t. the (reversal-layer output) feature map for the given logit gradient.
  Tensor3 backward(std::span<const double> grad_logits, const Cache& cache, int height, int width);

  void zero_output_layer();
  ParamRefs parameters();
  Linear& first() noexcept { return conv1_; }
  Linear& output() noexcept { return conv2_; }

 private:
  Linear conv1_;  // 1x1 convolution == per-location linear map
  Linear conv2_;
};

// Three fully connected layers (D -> h1 -> h2 -> 1) over pooled proposal features.
class ObjectDomainClassifier {
 public:
  struct Cache {
    RowMatrix input;
    RowMatrix hidden1;
    RowMatrix hidden2;
  };

  ObjectDomainClassifier() = default;
  ObjectDomainClassifier(int input_dim, int hidden1, int hidden2, std::uint64_t seed);

  DomainPrediction forward(const RowMatrix& objects, Cache* cache) const;
  RowMatrix backward(std::span<const double> grad_logits, const Cache& cache);

  void zero_output_layer();
  ParamRefs parameters();
  Linear& output() noexcept { return fc3_; }

 private:
  Linear fc1_;
  Linear fc2_;
  Linear fc3_;
};

}  // namespace adet
