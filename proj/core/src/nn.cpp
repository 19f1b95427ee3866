#include "adet/nn.hpp"

#include <cmath>

#include "adet/error.hpp"

namespace adet {

Param::Param(std::string param_name, int rows, int cols)
    : name(std::move(param_name)),
      value(Eigen::MatrixXd::Zero(rows, cols)),
      grad(Eigen::MatrixXd::Zero(rows, cols)),
      velocity(Eigen::MatrixXd::Zero(rows, cols)) {}

void zero_grads(const ParamRefs& params) {
  for (Param* p : params) p->zero_grad();
}

double global_grad_norm(const ParamRefs& params) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

Eigen::Map<RowMatrix> as_matrix(Tensor3& t) {
  return {t.data(), t.channels(), static_cast<Eigen::Index>(t.height()) * t.width()};
}

Eigen::Map<const RowMatrix> as_matrix(const Tensor3& t) {
  return {t.data(), t.channels(), static_cast<Eigen::Index>(t.height()) * t.width()};
}

namespace {

void fill_normal(Eigen::MatrixXd& m, Rng& rng, double stddev) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal() * stddev;
}

}  // namespace

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding)
    : weight(name + ".weight", out_channels, in_channels * kernel * kernel),
      bias(name + ".bias", out_channels, 1),
      in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding) {
  require(in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0 && padding >= 0,
          ErrorKind::kConfiguration, "invalid convolution geometry for " + name);
}

void Conv2d::init_he(Rng& rng) { init_normal(rng, std::sqrt(2.0 / (in_channels_ * kernel_ * kernel_))); }

void Conv2d::init_normal(Rng& rng, double stddev) {
  fill_normal(weight.value, rng, stddev);
  bias.value.setZero();
}

void Conv2d::zero_init() {
  weight.value.setZero();
  bias.value.setZero();
}

void Conv2d::im2col(const Tensor3& input, int out_h, int out_w, RowMatrix& columns) const {
  const int in_h = input.height();
  const int in_w = input.width();
  columns.resize(static_cast<Eigen::Index>(in_channels_) * kernel_ * kernel_,
                 static_cast<Eigen::Index>(out_h) * out_w);
  for (int c = 0; c < in_channels_; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        double* row = columns.row((c * kernel_ + ky) * kernel_ + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride_ - padding_ + ky;
          double* out = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= in_h) {
            std::fill(out, out + out_w, 0.0);
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride_ - padding_ + kx;
            out[ox] = (ix < 0 || ix >= in_w) ? 0.0 : input.at(c, iy, ix);
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const RowMatrix& columns, int out_h, int out_w, Tensor3& grad_input) const {
  const int in_h = grad_input.height();
  const int in_w = grad_input.width();
  for (int c = 0; c < in_channels_; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const double* row = columns.row((c * kernel_ + ky) * kernel_ + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= in_h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride_ - padding_ + kx;
            if (ix >= 0 && ix < in_w) grad_input.at(c, iy, ix) += src[ox];
          }
        }
      }
    }
  }
}

Tensor3 Conv2d::forward(const Tensor3& input, Cache* cache) const {
  require(input.channels() == in_channels_, ErrorKind::kContract,
          weight.name + ": expected " + std::to_string(in_channels_) + " input channels, got " +
              std::to_string(input.channels()));
  const int out_h = output_extent(input.height());
  const int out_w = output_extent(input.width());
  require(out_h > 0 && out_w > 0, ErrorKind::kInvalidInput, weight.name + ": input too small");

  RowMatrix local;
  RowMatrix& columns = cache ? cache->columns : local;
  im2col(input, out_h, out_w, columns);
  if (cache) {
    cache->input_height = input.height();
    cache->input_width = input.width();
  }

  Tensor3 output(out_channels_, out_h, out_w);
  auto out = as_matrix(output);
  out.noalias() = weight.value * columns;
  out.colwise() += bias.value.col(0);
  return output;
}

Tensor3 Conv2d::backward(const Tensor3& grad_output, const Cache& cache, bool input_grad) {
  const auto dy = as_matrix(grad_output);
  weight.grad.noalias() += dy * cache.columns.transpose();
  bias.grad.col(0) += dy.rowwise().sum().transpose();
  if (!input_grad) return {};

  RowMatrix dcols = weight.value.transpose() * dy;
  Tensor3 grad_input(in_channels_, cache.input_height, cache.input_width);
  col2im(dcols, grad_output.height(), grad_output.width(), grad_input);
  return grad_input;
}

Linear::Linear(std::string name, int in_features, int out_features)
    : weight(name + ".weight", out_features, in_features), bias(name + ".bias", out_features, 1) {
  require(in_features > 0 && out_features > 0, ErrorKind::kConfiguration, "invalid linear layer " + name);
}

void Linear::init_he(Rng& rng) { init_normal(rng, std::sqrt(2.0 / in_features())); }

void Linear::init_normal(Rng& rng, double stddev) {
  fill_normal(weight.value, rng, stddev);
  bias.value.setZero();
}

void Linear::zero_init() {
  weight.value.setZero();
  bias.value.setZero();
}

RowMatrix Linear::forward(const RowMatrix& input) const {
  require(input.cols() == in_features() || input.rows() == 0, ErrorKind::kContract,
          weight.name + ": input width mismatch");
  RowMatrix out(input.rows(), out_features());
  if (input.rows() == 0) return out;
  out.noalias() = input * weight.value.transpose();
  out.rowwise() += bias.value.col(0).transpose();
  return out;
}

RowMatrix Linear::backward(const RowMatrix& grad_output, const RowMatrix& input) {
  if (grad_output.rows() == 0) return RowMatrix(0, in_features());
  weight.grad.noalias() += grad_output.transpose() * input;
  bias.grad.col(0) += grad_output.colwise().sum().transpose();
  return grad_output * weight.value;
}

void relu_inplace(RowMatrix& x) { x = x.cwiseMax(0.0); }

void relu_inplace(Tensor3& x) {
  for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(RowMatrix& grad, const RowMatrix& activation) {
  grad = (activation.array() > 0.0).select(grad, 0.0);
}

void relu_backward_inplace(Tensor3& grad, const Tensor3& activation) {
  auto g = grad.values();
  auto a = activation.values();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(a[i] > 0.0)) g[i] = 0.0;
}

}  // namespace adet
