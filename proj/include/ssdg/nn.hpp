#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssdg/core.hpp"

// Minimal reverse-mode building blocks. Batches are row-major in the sense
// that every row of a matrix is one sample; images are flattened channel-major
// (c, h, w).
namespace ssdg::nn {

template <typename Scalar>
class Layer {
 public:
  using Matrix = MatrixX<Scalar>;

  virtual ~Layer() = default;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::string kind() const = 0;
  virtual Eigen::Index input_size() const = 0;
  virtual Eigen::Index output_size() const = 0;

  virtual Matrix forward(const Matrix& x) const = 0;

  /// Given the forward input `x`, its output `y`, and dL/dy, adds the
  /// parameter gradients into `grads` (laid out like `parameters()`) and
  /// returns dL/dx.
  virtual Matrix backward(const Matrix& x, const Matrix& y, const Matrix& grad_y,
                          std::span<Matrix> grads) const = 0;

  virtual std::span<Matrix> parameters() { return {}; }
  virtual std::span<const Matrix> parameters() const { return {}; }
  virtual std::vector<std::string> parameter_names() const { return {}; }
};

/// y = x W + b, with W of shape in × out and b of shape 1 × out.
template <typename Scalar>
class Dense final : public Layer<Scalar> {
 public:
  using typename Layer<Scalar>::Matrix;

  Dense(Eigen::Index in, Eigen::Index out) : params_{Matrix::Zero(in, out), Matrix::Zero(1, out)} {}

  template <typename Rng>
  Dense(Eigen::Index in, Eigen::Index out, Rng& rng) : Dense(in, out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Matrix& p : params_) {
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<Scalar>(u(rng));
    }
  }

  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Dense>(*this); }
  std::string kind() const override { return "dense"; }
  Eigen::Index input_size() const override { return params_[0].rows(); }
  Eigen::Index output_size() const override { return params_[0].cols(); }

  Matrix forward(const Matrix& x) const override {
    return (x * params_[0]).rowwise() + params_[1].row(0);
  }

  Matrix backward(const Matrix& x, const Matrix&, const Matrix& grad_y,
                  std::span<Matrix> grads) const override {
    grads[0].noalias() += x.transpose() * grad_y;
    grads[1] += grad_y.colwise().sum();
    return grad_y * params_[0].transpose();
  }

  std::span<Matrix> parameters() override { return params_; }
  std::span<const Matrix> parameters() const override { return params_; }
  std::vector<std::string> parameter_names() const override { return {"weight", "bias"}; }

  Matrix& weight() { return params_[0]; }
  Matrix& bias() { return params_[1]; }

 private:
  std::vector<Matrix> params_;
};

template <typename Scalar>
class Relu final : public Layer<Scalar> {
 public:
  using typename Layer<Scalar>::Matrix;

  explicit Relu(Eigen::Index size) : size_(size) {}

  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Relu>(*this); }
  std::string kind() const override { return "relu"; }
  Eigen::Index input_size() const override { return size_; }
  Eigen::Index output_size() const override { return size_; }

  Matrix forward(const Matrix& x) const override { return x.cwiseMax(Scalar(0)); }

  Matrix backward(const Matrix& x, const Matrix&, const Matrix& grad_y,
                  std::span<Matrix>) const override {
    return (x.array() > Scalar(0)).select(grad_y, Scalar(0));
  }

 private:
  Eigen::Index size_;
};

struct ImageShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  Eigen::Index size() const { return Eigen::Index{channels} * height * width; }
  bool operator==(const ImageShape&) const = default;
};

/// Square-kernel convolution, stride 1, zero "same" padding. Weight layout is
/// (in_channels · k · k) × out_channels so each sample is an im2col product.
template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  using typename Layer<Scalar>::Matrix;

  Conv2d(ImageShape in, int out_channels, int kernel)
      : in_(in), out_channels_(out_channels), kernel_(kernel),
        params_{Matrix::Zero(Eigen::Index{in.channels} * kernel * kernel, out_channels),
                Matrix::Zero(1, out_channels)} {
    if (kernel % 2 != 1) throw ConfigError("conv kernel must be odd");
  }

  template <typename Rng>
  Conv2d(ImageShape in, int out_channels, int kernel, Rng& rng) : Conv2d(in, out_channels, kernel) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(params_[0].rows()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Matrix& p : params_) {
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<Scalar>(u(rng));
    }
  }

  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Conv2d>(*this); }
  std::string kind() const override { return "conv2d"; }
  Eigen::Index input_size() const override { return in_.size(); }
  Eigen::Index output_size() const override { return output_shape().size(); }
  ImageShape output_shape() const { return {out_channels_, in_.height, in_.width}; }

  Matrix forward(const Matrix& x) const override {
    const Eigen::Index pixels = Eigen::Index{in_.height} * in_.width;
    Matrix out(x.rows(), output_size());
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      const Matrix cols = im2col(x.row(n));
      Matrix y = (cols * params_[0]).rowwise() + params_[1].row(0);  // pixels × out_channels
      out.row(n) = Eigen::Map<const RowVectorX<Scalar>>(y.data(), pixels * out_channels_);
    }
    return out;
  }

  Matrix backward(const Matrix& x, const Matrix&, const Matrix& grad_y,
                  std::span<Matrix> grads) const override {
    const Eigen::Index pixels = Eigen::Index{in_.height} * in_.width;
    Matrix grad_x = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      const Matrix cols = im2col(x.row(n));
      RowVectorX<Scalar> gy_row = grad_y.row(n);
      Eigen::Map<const Matrix> gy(gy_row.data(), pixels, out_channels_);
      grads[0].noalias() += cols.transpose() * gy;
      grads[1] += gy.colwise().sum();
      const Matrix grad_cols = gy * params_[0].transpose();
      col2im_add(grad_cols, grad_x.row(n));
    }
    return grad_x;
  }

  std::span<Matrix> parameters() override { return params_; }
  std::span<const Matrix> parameters() const override { return params_; }
  std::vector<std::string> parameter_names() const override { return {"weight", "bias"}; }

 private:
  Matrix im2col(const RowVectorX<Scalar>& image) const {
    const int pad = kernel_ / 2;
    Matrix cols = Matrix::Zero(Eigen::Index{in_.height} * in_.width,
                               Eigen::Index{in_.channels} * kernel_ * kernel_);
    for (int c = 0; c < in_.channels; ++c) {
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          const Eigen::Index col = (Eigen::Index{c} * kernel_ + ky) * kernel_ + kx;
          for (int h = 0; h < in_.height; ++h) {
            const int sy = h + ky - pad;
            if (sy < 0 || sy >= in_.height) continue;
            for (int w = 0; w < in_.width; ++w) {
              const int sx = w + kx - pad;
              if (sx < 0 || sx >= in_.width) continue;
              cols(Eigen::Index{h} * in_.width + w, col) =
                  image((Eigen::Index{c} * in_.height + sy) * in_.width + sx);
            }
          }
        }
      }
    }
    return cols;
  }

  template <typename Row>
  void col2im_add(const Matrix& grad_cols, Row&& grad_image) const {
    const int pad = kernel_ / 2;
    for (int c = 0; c < in_.channels; ++c) {
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          const Eigen::Index col = (Eigen::Index{c} * kernel_ + ky) * kernel_ + kx;
          for (int h = 0; h < in_.height; ++h) {
            const int sy = h + ky - pad;
            if (sy < 0 || sy >= in_.height) continue;
            for (int w = 0; w < in_.width; ++w) {
              const int sx = w + kx - pad;
              if (sx < 0 || sx >= in_.width) continue;
              grad_image((Eigen::Index{c} * in_.height + sy) * in_.width + sx) +=
                  grad_cols(Eigen::Index{h} * in_.width + w, col);
            }
          }
        }
      }
    }
  }

  ImageShape in_;
  int out_channels_;
  int kernel_;
  std::vector<Matrix> params_;
};

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Gradient goes to the first maximal element of each window.
template <typename Scalar>
class MaxPool2d final : public Layer<Scalar> {
 public:
  using typename Layer<Scalar>::Matrix;

  explicit MaxPool2d(ImageShape in) : in_(in) {}

  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<MaxPool2d>(*this); }
  std::string kind() const override { return "maxpool2d"; }
  Eigen::Index input_size() const override { return in_.size(); }
  Eigen::Index output_size() const override { return output_shape().size(); }
  ImageShape output_shape() const { return {in_.channels, in_.height / 2, in_.width / 2}; }

  Matrix forward(const Matrix& x) const override {
    Matrix out(x.rows(), output_size());
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      for_each_window(n, [&](Eigen::Index o, Eigen::Index argmax) { out(n, o) = x(n, argmax); }, x);
    }
    return out;
  }

  Matrix backward(const Matrix& x, const Matrix&, const Matrix& grad_y,
                  std::span<Matrix>) const override {
    Matrix grad_x = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      for_each_window(n, [&](Eigen::Index o, Eigen::Index argmax) { grad_x(n, argmax) += grad_y(n, o); }, x);
    }
    return grad_x;
  }

 private:
  template <typename Fn>
  void for_each_window(Eigen::Index n, Fn&& fn, const Matrix& x) const {
    const ImageShape out = output_shape();
    for (int c = 0; c < out.channels; ++c) {
      for (int h = 0; h < out.height; ++h) {
        for (int w = 0; w < out.width; ++w) {
          Eigen::Index best = (Eigen::Index{c} * in_.height + 2 * h) * in_.width + 2 * w;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const Eigen::Index idx = (Eigen::Index{c} * in_.height + 2 * h + dy) * in_.width + 2 * w + dx;
              if (x(n, idx) > x(n, best)) best = idx;
            }
          }
          fn((Eigen::Index{c} * out.height + h) * out.width + w, best);
        }
      }
    }
  }

  ImageShape in_;
};

/// Activations recorded by a traced forward pass: entry i is the input of
/// layer i, the last entry is the network output.
template <typename Scalar>
using Trace = std::vector<MatrixX<Scalar>>;

template <typename Scalar>
class Sequential {
 public:
  using Matrix = MatrixX<Scalar>;

  Sequential() = default;
  Sequential(const Sequential& other) { *this = other; }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(const Sequential& other) {
    if (this == &other) return *this;
    layers_.clear();
    for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
    return *this;
  }
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L>
  L& add(L layer) {
    if (!layers_.empty() && layers_.back()->output_size() != layer.input_size()) {
      throw ConfigError("layer " + layer.kind() + " expects " + std::to_string(layer.input_size()) +
                        " inputs, previous layer yields " +
                        std::to_string(layers_.back()->output_size()));
    }
    auto owned = std::make_unique<L>(std::move(layer));
    L& ref = *owned;
    layers_.push_back(std::move(owned));
    return ref;
  }

  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }
  Layer<Scalar>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<Scalar>& layer(std::size_t i) const { return *layers_[i]; }
  Eigen::Index input_size() const { return layers_.front()->input_size(); }
  Eigen::Index output_size() const { return layers_.back()->output_size(); }

  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix h = x;
    for (const auto& layer : layers_) h = layer->forward(h);
    return h;
  }

  Matrix forward(const Matrix& x, Trace<Scalar>& trace) const {
    check_input(x);
    trace.clear();
    trace.reserve(layers_.size() + 1);
    trace.push_back(x);
    for (const auto& layer : layers_) trace.push_back(layer->forward(trace.back()));
    return trace.back();
  }

  /// Accumulates into `grads` (layout of `zero_gradients()`), returns dL/dx.
  Matrix backward(const Trace<Scalar>& trace, const Matrix& grad_out,
                  std::vector<Matrix>& grads) const {
    Matrix g = grad_out;
    std::size_t offset = parameter_count_before(layers_.size());
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const std::size_t n = layers_[i]->parameters().size();
      offset -= n;
      g = layers_[i]->backward(trace[i], trace[i + 1], g,
                               std::span<Matrix>(grads.data() + offset, n));
    }
    return g;
  }

  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> out;
    for (auto& layer : layers_) {
      for (Matrix& p : layer->parameters()) out.push_back(&p);
    }
    return out;
  }

  std::vector<const Matrix*> parameters() const {
    std::vector<const Matrix*> out;
    for (const auto& layer : layers_) {
      for (const Matrix& p : std::as_const(*layer).parameters()) out.push_back(&p);
    }
    return out;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (const std::string& n : layers_[i]->parameter_names()) {
        out.push_back(std::to_string(i) + "." + n);
      }
    }
    return out;
  }

  std::vector<Matrix> zero_gradients() const {
    std::vector<Matrix> out;
    for (const Matrix* p : parameters()) out.push_back(Matrix::Zero(p->rows(), p->cols()));
    return out;
  }

  Eigen::Index parameter_size() const {
    Eigen::Index total = 0;
    for (const Matrix* p : parameters()) total += p->size();
    return total;
  }

 private:
  void check_input(const Matrix& x) const {
    if (layers_.empty()) throw ConfigError("empty network");
    if (x.cols() != input_size()) {
      throw ConfigError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                        std::to_string(input_size()));
    }
  }

  std::size_t parameter_count_before(std::size_t layer) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < layer; ++i) n += layers_[i]->parameters().size();
    return n;
  }

  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

/// Row-wise softmax with max-shift.
template <typename Derived>
auto softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> shifted = logits.colwise() - logits.rowwise().maxCoeff();
  MatrixX<Scalar> e = shifted.array().exp().matrix();
  return MatrixX<Scalar>(e.array().colwise() / e.rowwise().sum().array());
}

/// Row-wise log-softmax with max-shift.
template <typename Derived>
auto log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> shifted = logits.colwise() - logits.rowwise().maxCoeff();
  VectorX<Scalar> lse = shifted.array().exp().rowwise().sum().log().matrix();
  return MatrixX<Scalar>(shifted.colwise() - lse);
}

}  // namespace ssdg::nn
