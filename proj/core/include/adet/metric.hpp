#pragma once

#include <span>
#include <string>
#include <vector>

#include "adet/nn.hpp"

namespace adet {

enum class AlignmentMode { kAligned, kUnaligned };

const char* to_string(AlignmentMode mode);
AlignmentMode parse_alignment_mode(const std::string& text);

// Mean squared element-wise difference.
double feature_distance(std::span<const double> a, std::span<const double> b);

// Anchor = source, positive = target, negative = auxiliary; all the same size.
struct TripletFeatures {
  std::span<const double> anchor;
  std::span<const double> positive;
  std::span<const double> negative;
  double margin = 1.0;
};

struct TripletLoss {
  double value = 0.0;
  std::vector<double> grad_anchor;
  std::vector<double> grad_positive;
  std::vector<double> grad_negative;
};

// max(d(S, T) - d(S, A) + margin, 0) on whole feature maps.
TripletLoss image_triplet_loss(const TripletFeatures& triplet);

// Row-aligned proposal features pooled at the same boxes in all three domains.
struct ObjectTriplet {
  const RowMatrix* anchor = nullptr;
  const RowMatrix* positive = nullptr;
  const RowMatrix* negative = nullptr;
  double margin = 1.0;
};

struct ObjectTripletLoss {
  double value = 0.0;
  RowMatrix grad_anchor;
  RowMatrix grad_positive;
  RowMatrix grad_negative;
};

// Mean per-proposal hinge; 0 for zero proposals. Only defined for aligned inputs, so
// calling it in unaligned mode is a kMode error.
ObjectTripletLoss object_triplet_loss(const ObjectTriplet& triplet, AlignmentMode mode);

}  // namespace adet
