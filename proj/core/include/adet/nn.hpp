#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "adet/random.hpp"
#include "adet/tensor.hpp"

namespace adet {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Trainable tensor with its accumulated gradient and SGD momentum buffer.
struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd velocity;

  Param() = default;
  Param(std::string param_name, int rows, int cols);

  void zero_grad() { grad.setZero(); }
  void reset_velocity() { velocity.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

// Non-owning list of parameters gathered from one or more modules.
using ParamRefs = std::vector<Param*>;

void zero_grads(const ParamRefs& params);
double global_grad_norm(const ParamRefs& params);

// 2D convolution as im2col + GEMM. Weight layout: (out, in * k * k).
class Conv2d {
 public:
  struct Cache {
    RowMatrix columns;
    int input_height = 0;
    int input_width = 0;
  };

  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding);

  void init_he(Rng& rng);
  void init_normal(Rng& rng, double stddev);
  void zero_init();

  int in_channels() const noexcept { return in_channels_; }
  int out_channels() const noexcept { return out_channels_; }
  int stride() const noexcept { return stride_; }
  int output_extent(int input_extent) const noexcept {
    return (input_extent + 2 * padding_ - kernel_) / stride_ + 1;
  }

  // cache may be null for inference-only passes.
  Tensor3 forward(const Tensor3& input, Cache* cache) const;
  // Accumulates weight/bias gradients; returns the input gradient when requested,
  // an empty tensor otherwise.
  Tensor3 backward(const Tensor3& grad_output, const Cache& cache, bool input_grad);

  Param weight;
  Param bias;

 private:
  void im2col(const Tensor3& input, int out_h, int out_w, RowMatrix& columns) const;
  void col2im(const RowMatrix& columns, int out_h, int out_w, Tensor3& grad_input) const;

  int in_channels_ = 0;
  int out_channels_ = 0;
  int kernel_ = 1;
  int stride_ = 1;
  int padding_ = 0;
};

// Fully connected layer over row-major batches (n, in) -> (n, out). Weight layout: (out, in).
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features);

  void init_he(Rng& rng);
  void init_normal(Rng& rng, double stddev);
  void zero_init();

  int in_features() const noexcept { return static_cast<int>(weight.value.cols()); }
  int out_features() const noexcept { return static_cast<int>(weight.value.rows()); }

  RowMatrix forward(const RowMatrix& input) const;
  // input is the tensor passed to forward(); returns the input gradient.
  RowMatrix backward(const RowMatrix& grad_output, const RowMatrix& input);

  Param weight;
  Param bias;
};

void relu_inplace(RowMatrix& x);
void relu_inplace(Tensor3& x);
// Zeroes grad where the forward activation was clipped.
void relu_backward_inplace(RowMatrix& grad, const RowMatrix& activation);
void relu_backward_inplace(Tensor3& grad, const Tensor3& activation);

// Row-major (C, H*W) view helpers over a tensor's storage.
Eigen::Map<RowMatrix> as_matrix(Tensor3& t);
Eigen::Map<const RowMatrix> as_matrix(const Tensor3& t);

}  // namespace adet
