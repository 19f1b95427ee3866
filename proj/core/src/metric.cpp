#include "adet/metric.hpp"

#include "adet/error.hpp"

namespace adet {

const char* to_string(AlignmentMode mode) { return mode == AlignmentMode::kAligned ? "aligned" : "unaligned"; }

AlignmentMode parse_alignment_mode(const std::string& text) {
  if (text == "aligned") return AlignmentMode::kAligned;
  if (text == "unaligned") return AlignmentMode::kUnaligned;
  fail(ErrorKind::kConfiguration, "unknown alignment mode '" + text + "'");
}

double feature_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::kContract, "feature_distance: shape mismatch");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

TripletLoss image_triplet_loss(const TripletFeatures& t) {
  const std::size_t n = t.anchor.size();
  require(t.positive.size() == n && t.negative.size() == n, ErrorKind::kContract,
          "triplet members must have identical shape");
  require(t.margin > 0.0, ErrorKind::kContract, "triplet margin must be positive");
  TripletLoss out;
  out.grad_anchor.assign(n, 0.0);
  out.grad_positive.assign(n, 0.0);
  out.grad_negative.assign(n, 0.0);
  const double hinge = feature_distance(t.anchor, t.positive) - feature_distance(t.anchor, t.negative) + t.margin;
  if (hinge <= 0.0 || n == 0) return out;
  out.value = hinge;
  const double scale = 2.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.grad_anchor[i] = scale * (t.negative[i] - t.positive[i]);
    out.grad_positive[i] = -scale * (t.anchor[i] - t.positive[i]);
    out.grad_negative[i] = scale * (t.anchor[i] - t.negative[i]);
  }
  return out;
}

ObjectTripletLoss object_triplet_loss(const ObjectTriplet& t, AlignmentMode mode) {
  require(mode == AlignmentMode::kAligned, ErrorKind::kMode,
          "object-level triplet loss needs pixel-aligned source/target/auxiliary images");
  require(t.anchor && t.positive && t.negative, ErrorKind::kContract, "object triplet is missing a member");
  const RowMatrix& a = *t.anchor;
  const RowMatrix& p = *t.positive;
  const RowMatrix& n = *t.negative;
  require(a.rows() == p.rows() && a.rows() == n.rows() && a.cols() == p.cols() && a.cols() == n.cols(),
          ErrorKind::kContract, "object triplet members must have identical shape");
  require(t.margin > 0.0, ErrorKind::kContract, "triplet margin must be positive");

  ObjectTripletLoss out;
  out.grad_anchor = RowMatrix::Zero(a.rows(), a.cols());
  out.grad_positive = RowMatrix::Zero(a.rows(), a.cols());
  out.grad_negative = RowMatrix::Zero(a.rows(), a.cols());
  if (a.rows() == 0) return out;
  const double inv_rows = 1.0 / static_cast<double>(a.rows());
  const double inv_cols = a.cols() > 0 ? 1.0 / static_cast<double>(a.cols()) : 0.0;
  for (Eigen::Index j = 0; j < a.rows(); ++j) {
    const double d_pos = (a.row(j) - p.row(j)).squaredNorm() * inv_cols;
    const double d_neg = (a.row(j) - n.row(j)).squaredNorm() * inv_cols;
    const double hinge = d_pos - d_neg + t.margin;
    if (hinge <= 0.0) continue;
    out.value += hinge * inv_rows;
    const double scale = 2.0 * inv_cols * inv_rows;
    out.grad_anchor.row(j) = scale * (n.row(j) - p.row(j));
    out.grad_positive.row(j) = -scale * (a.row(j) - p.row(j));
    out.grad_negative.row(j) = scale * (a.row(j) - n.row(j));
  }
  return out;
}

}  // namespace adet
