#pragma once

#include <cstdint>
#include <utility>
#include <random>
#include <string>
#include <vector>

#include "ssdg/core.hpp"
#include "ssdg/nn.hpp"

namespace ssdg {

/// Architecture descriptor. Vector inputs get two dense blocks; image inputs
/// get two conv(3×3)+ReLU+pool blocks followed by one dense block.
struct BackboneSpec {
  enum class Kind { dense, conv };

  Kind kind = Kind::dense;
  int input_dim = 0;          // dense
  nn::ImageShape image{};     // conv
  int hidden_dim = 64;
  int feature_dim = 64;
  int conv_channels = 16;
  int discriminator_hidden = 64;

  Eigen::Index input_size() const {
    return kind == Kind::dense ? Eigen::Index{input_dim} : image.size();
  }
  std::string describe() const;
  bool operator==(const BackboneSpec&) const = default;
};

inline std::string BackboneSpec::describe() const {
  if (kind == Kind::dense) {
    return "dense(in=" + std::to_string(input_dim) + ",hidden=" + std::to_string(hidden_dim) +
           ",feature=" + std::to_string(feature_dim) + ")";
  }
  return "conv(in=" + std::to_string(image.channels) + "x" + std::to_string(image.height) + "x" +
         std::to_string(image.width) + ",channels=" + std::to_string(conv_channels) +
         ",feature=" + std::to_string(feature_dim) + ")";
}

enum class Head { predictive, generalizable };

template <typename Scalar>
struct BundleGradients {
  using Matrix = MatrixX<Scalar>;
  std::vector<Matrix> feature_extractor;
  std::vector<Matrix> predictive_classifier;
  std::vector<Matrix> generalizable_classifier;
  std::vector<Matrix> domain_discriminator;

  // Components a backward pass actually reached; the optimizer leaves the
  // others alone, weight decay included.
  bool extractor_touched = false;
  bool predictive_touched = false;
  bool generalizable_touched = false;
  bool discriminator_touched = false;

  /// Gradients in the order of ModelBundle::named_parameters().
  std::vector<const Matrix*> flat() const {
    std::vector<const Matrix*> out;
    for (const auto* part : {&feature_extractor, &predictive_classifier, &generalizable_classifier,
                             &domain_discriminator}) {
      for (const Matrix& g : *part) out.push_back(&g);
    }
    return out;
  }
  std::vector<bool> flat_touched() const {
    std::vector<bool> out;
    const std::pair<const std::vector<Matrix>*, bool> parts[] = {
        {&feature_extractor, extractor_touched},
        {&predictive_classifier, predictive_touched},
        {&generalizable_classifier, generalizable_touched},
        {&domain_discriminator, discriminator_touched}};
    for (const auto& [grads, touched] : parts) out.insert(out.end(), grads->size(), touched);
    return out;
  }
};

/// Shared extractor F_g, predictive head F_c, generalizable head F_m and
/// domain discriminator F_d.
template <typename Scalar>
class ModelBundle {
 public:
  using Matrix = MatrixX<Scalar>;
  using Network = nn::Sequential<Scalar>;

  ModelBundle() = default;

  /// `num_domains` counts training domains (labeled + unlabeled, i.e. n+1).
  ModelBundle(BackboneSpec spec, int num_classes, int num_domains, std::uint64_t seed)
      : spec_(spec), num_classes_(num_classes), num_domains_(num_domains) {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (num_domains < 1) throw ConfigError("num_domains must be >= 1");
    if (spec.feature_dim < 1 || spec.hidden_dim < 1) throw ConfigError("layer widths must be >= 1");
    std::mt19937_64 rng(seed);
    build_extractor(rng);
    predictive_.add(nn::Dense<Scalar>(spec.feature_dim, num_classes, rng));
    generalizable_.add(nn::Dense<Scalar>(spec.feature_dim, num_classes, rng));
    discriminator_.add(nn::Dense<Scalar>(spec.feature_dim, spec.discriminator_hidden, rng));
    discriminator_.add(nn::Relu<Scalar>(spec.discriminator_hidden));
    discriminator_.add(nn::Dense<Scalar>(spec.discriminator_hidden, num_domains, rng));
  }

  const BackboneSpec& spec() const { return spec_; }
  int num_classes() const { return num_classes_; }
  int num_domains() const { return num_domains_; }

  Network& feature_extractor() { return extractor_; }
  const Network& feature_extractor() const { return extractor_; }
  Network& predictive_classifier() { return predictive_; }
  const Network& predictive_classifier() const { return predictive_; }
  Network& generalizable_classifier() { return generalizable_; }
  const Network& generalizable_classifier() const { return generalizable_; }
  Network& domain_discriminator() { return discriminator_; }
  const Network& domain_discriminator() const { return discriminator_; }

  const Network& classifier(Head head) const {
    return head == Head::predictive ? predictive_ : generalizable_;
  }

  /// Zeroes the final layer of both class heads, so every class is equally likely.
  void zero_class_heads() {
    for (Network* net : {&predictive_, &generalizable_}) {
      for (Matrix* p : net->parameters()) p->setZero();
    }
  }

  Matrix features(const Matrix& batch) const {
    check_batch(batch);
    return extractor_.forward(batch);
  }

  BundleGradients<Scalar> zero_gradients() const {
    return {extractor_.zero_gradients(), predictive_.zero_gradients(),
            generalizable_.zero_gradients(), discriminator_.zero_gradients()};
  }

  /// Named views of all parameters in a fixed order; names are
  /// "<component>/<layer>.<param>".
  struct NamedParameter {
    std::string component;
    std::string name;
    Matrix* value;
  };
  std::vector<NamedParameter> named_parameters() {
    std::vector<NamedParameter> out;
    auto append = [&](const char* component, Network& net) {
      const auto names = net.parameter_names();
      const auto params = net.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) out.push_back({component, names[i], params[i]});
    };
    append("feature_extractor", extractor_);
    append("predictive_classifier", predictive_);
    append("generalizable_classifier", generalizable_);
    append("domain_discriminator", discriminator_);
    return out;
  }

  void check_batch(const Matrix& batch) const {
    if (batch.cols() != spec_.input_size()) {
      throw ConfigError("batch has " + std::to_string(batch.cols()) +
                        " columns, backbone expects " + std::to_string(spec_.input_size()));
    }
  }

 private:
  template <typename Rng>
  void build_extractor(Rng& rng) {
    if (spec_.kind == BackboneSpec::Kind::dense) {
      if (spec_.input_dim < 1) throw ConfigError("backbone input_dim must be >= 1");
      extractor_.add(nn::Dense<Scalar>(spec_.input_dim, spec_.hidden_dim, rng));
      extractor_.add(nn::Relu<Scalar>(spec_.hidden_dim));
      extractor_.add(nn::Dense<Scalar>(spec_.hidden_dim, spec_.feature_dim, rng));
      extractor_.add(nn::Relu<Scalar>(spec_.feature_dim));
      return;
    }
    nn::ImageShape shape = spec_.image;
    if (shape.channels < 1 || shape.height < 4 || shape.width < 4) {
      throw ConfigError("conv backbone needs images of at least 4x4");
    }
    for (int block = 0; block < 2; ++block) {
      auto& conv = extractor_.add(nn::Conv2d<Scalar>(shape, spec_.conv_channels, 3, rng));
      shape = conv.output_shape();
      extractor_.add(nn::Relu<Scalar>(shape.size()));
      auto& pool = extractor_.add(nn::MaxPool2d<Scalar>(shape));
      shape = pool.output_shape();
    }
    extractor_.add(nn::Dense<Scalar>(shape.size(), spec_.feature_dim, rng));
    extractor_.add(nn::Relu<Scalar>(spec_.feature_dim));
  }

  BackboneSpec spec_{};
  int num_classes_ = 0;
  int num_domains_ = 0;
  Network extractor_;
  Network predictive_;
  Network generalizable_;
  Network discriminator_;
};

/// Identity in the forward direction; multiplies the incoming gradient by
/// -scale on the way back.
template <typename Scalar>
struct GradientReversal {
  Scalar scale{1};

  explicit GradientReversal(Scalar s) : scale(s) {
    if (!(s >= Scalar(0)) || !std::isfinite(static_cast<double>(s))) {
      throw ConfigError("reversal_scale must be finite and >= 0");
    }
  }

  template <typename Derived>
  const Derived& forward(const Eigen::MatrixBase<Derived>& x) const { return x.derived(); }

  template <typename Derived>
  MatrixX<Scalar> backward(const Eigen::MatrixBase<Derived>& grad) const { return -scale * grad; }
};

/// Class probabilities of the selected head, one row per sample.
template <typename Scalar>
MatrixX<Scalar> forward_class(const ModelBundle<Scalar>& bundle, const MatrixX<Scalar>& batch,
                              Head head) {
  return nn::softmax_rows(bundle.classifier(head).forward(bundle.features(batch)));
}

/// Domain probabilities. The reversal scale only matters for backward passes,
/// which go through `domain_gradients`.
template <typename Scalar>
MatrixX<Scalar> forward_domain(const ModelBundle<Scalar>& bundle, const MatrixX<Scalar>& batch,
                               Scalar reversal_scale) {
  const GradientReversal<Scalar> reversal(reversal_scale);
  return nn::softmax_rows(bundle.domain_discriminator().forward(reversal.forward(bundle.features(batch))));
}

/// Gradients of the mean soft cross-entropy between F_d(F_g(batch)) and
/// `domain_targets`, routed through a reversal boundary of the given scale.
/// F_d receives the plain gradient; F_g receives it multiplied by -scale.
template <typename Scalar>
BundleGradients<Scalar> domain_gradients(const ModelBundle<Scalar>& bundle,
                                         const MatrixX<Scalar>& batch,
                                         const MatrixX<Scalar>& domain_targets,
                                         Scalar reversal_scale) {
  const GradientReversal<Scalar> reversal(reversal_scale);
  bundle.check_batch(batch);
  BundleGradients<Scalar> grads = bundle.zero_gradients();
  nn::Trace<Scalar> f_trace, d_trace;
  const MatrixX<Scalar> features = bundle.feature_extractor().forward(batch, f_trace);
  const MatrixX<Scalar> logits = bundle.domain_discriminator().forward(reversal.forward(features), d_trace);
  const MatrixX<Scalar> grad_logits =
      (nn::softmax_rows(logits) - domain_targets) / static_cast<Scalar>(batch.rows());
  const MatrixX<Scalar> grad_features =
      bundle.domain_discriminator().backward(d_trace, grad_logits, grads.domain_discriminator);
  bundle.feature_extractor().backward(f_trace, reversal.backward(grad_features), grads.feature_extractor);
  grads.extractor_touched = grads.discriminator_touched = true;
  return grads;
}

}  // namespace ssdg
