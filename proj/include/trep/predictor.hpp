#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "trep/errors.hpp"
#include "trep/imaging.hpp"
#include "trep/random.hpp"
#include "trep/timegrid.hpp"

namespace trep {

inline constexpr int kPatchFeatureSide = 16;
inline constexpr int kPatchFeatureDim = kPatchFeatureSide * kPatchFeatureSide;
inline constexpr double kGemEpsilon = 1e-6;
inline constexpr double kGemPMin = 1.0;
inline constexpr double kGemPMax = 64.0;
inline constexpr double kGemPInit = 3.0;

/// Predictor input length for a time encoding of dimension `time_dim`.
constexpr int input_dim_for(int time_dim) { return 2 + time_dim + kPatchFeatureDim; }

/// 16x16 grayscale block-average of the patch, standardized to zero mean
/// and unit variance; a constant patch maps to all zeros.
Eigen::VectorXd patch_feature(const Patch& patch);

/// [x / width, y / height] ++ time encoding ++ patch feature.
Eigen::VectorXd build_input(double x, double y, int image_width, int image_height,
                            const Eigen::VectorXd& time_encoding, const Patch& patch);
Eigen::VectorXd build_input(double x, double y, int image_width, int image_height,
                            const Eigen::VectorXd& time_encoding, const Eigen::VectorXd& patch_feature);

/// Elementwise generalized mean of three non-negative arrays,
/// ((a1^p + a2^p + a3^p) / 3)^(1/p) with a_i = z_i + eps.
template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gem_pool(
    const Eigen::ArrayBase<Derived>& z1, const Eigen::ArrayBase<Derived>& z2, const Eigen::ArrayBase<Derived>& z3,
    typename Derived::Scalar p) {
  using Scalar = typename Derived::Scalar;
  const auto eps = Scalar(kGemEpsilon);
  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> a1 = z1 + eps, a2 = z2 + eps, a3 = z3 + eps;
  // Factor out the elementwise maximum so large p neither overflows nor underflows.
  const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> m = a1.max(a2).max(a3);
  const auto s = ((a1 / m).pow(p) + (a2 / m).pow(p) + (a3 / m).pow(p)) / Scalar(3);
  return m * s.pow(Scalar(1) / p);
}

/// Fully connected layer, y = W x + b.
template <typename Scalar>
struct Dense {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> weight;  // out x in
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bias;

  Eigen::Index inputs() const { return weight.cols(); }
  Eigen::Index outputs() const { return weight.rows(); }
};

inline constexpr int kLayerCount = 6;
inline constexpr std::array<int, 5> kHiddenWidths = {64, 32, 64, 32, 64};

/// Repeatability predictor network: fc1..fc5 with ReLU in a single chain,
/// GeM pooling of the fc1/fc3/fc5 activations, fc6 with a sigmoid.
template <typename Scalar>
class RpNetwork {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  RpNetwork() = default;

  /// He-uniform ReLU layers, Glorot-uniform output layer, zero biases,
  /// p = 3.
  static RpNetwork initialize(int input_dim, int output_dim, std::uint64_t seed) {
    RpNetwork net;
    SplitMix64 rng(seed);
    int fan_in = input_dim;
    for (int l = 0; l < kLayerCount; ++l) {
      const int fan_out = l < kLayerCount - 1 ? kHiddenWidths[static_cast<std::size_t>(l)] : output_dim;
      const double limit = l < kLayerCount - 1 ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
      Dense<Scalar>& layer = net.layers_[static_cast<std::size_t>(l)];
      layer.weight.resize(fan_out, fan_in);
      for (Eigen::Index r = 0; r < fan_out; ++r)
        for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = Scalar(rng.uniform(-limit, limit));
      layer.bias = Vector::Zero(fan_out);
      fan_in = fan_out;
    }
    net.p_ = Scalar(kGemPInit);
    return net;
  }

  /// All-zero weights and biases with the given p.
  static RpNetwork zeros(int input_dim, int output_dim, Scalar p = Scalar(kGemPInit)) {
    RpNetwork net = initialize(input_dim, output_dim, 0);
    for (auto& layer : net.layers_) {
      layer.weight.setZero();
      layer.bias.setZero();
    }
    net.p_ = p;
    return net;
  }

  int input_dim() const { return static_cast<int>(layers_[0].inputs()); }
  int output_dim() const { return static_cast<int>(layers_[kLayerCount - 1].outputs()); }
  Scalar p() const { return p_; }
  void set_p(Scalar p) { p_ = std::clamp(p, Scalar(kGemPMin), Scalar(kGemPMax)); }

  Dense<Scalar>& layer(int i) { return layers_[static_cast<std::size_t>(i)]; }
  const Dense<Scalar>& layer(int i) const { return layers_[static_cast<std::size_t>(i)]; }

  std::size_t parameter_count() const {
    std::size_t n = 1;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Flattened parameters: per layer W (column-major) then b, p last.
  Vector flatten() const {
    Vector out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index o = 0;
    for (const auto& l : layers_) {
      out.segment(o, l.weight.size()) = l.weight.reshaped();
      o += l.weight.size();
      out.segment(o, l.bias.size()) = l.bias;
      o += l.bias.size();
    }
    out(o) = p_;
    return out;
  }

  void unflatten(const Vector& params) {
    if (params.size() != static_cast<Eigen::Index>(parameter_count()))
      throw ShapeMismatch("parameter vector has the wrong length");
    Eigen::Index o = 0;
    for (auto& l : layers_) {
      l.weight.reshaped() = params.segment(o, l.weight.size());
      o += l.weight.size();
      l.bias = params.segment(o, l.bias.size());
      o += l.bias.size();
    }
    p_ = params(o);
  }

  /// Intermediate values kept for backpropagation; column per sample.
  struct Cache {
    Matrix input;
    std::array<Matrix, 5> pre;   // fc1..fc5 pre-activations
    std::array<Matrix, 5> post;  // fc1..fc5 ReLU outputs
    Matrix pooled;               // z
    Matrix output;               // sigmoid(fc6(z)) = y_hat
  };

  /// Batched forward pass; columns of `inputs` are samples.
  Cache forward(const Matrix& inputs) const {
    if (inputs.rows() != input_dim()) throw ShapeMismatch("input length does not match the network");
    Cache cache;
    cache.input = inputs;
    const Matrix* prev = &cache.input;
    for (int l = 0; l < kLayerCount - 1; ++l) {
      const auto& layer = layers_[static_cast<std::size_t>(l)];
      cache.pre[static_cast<std::size_t>(l)] = (layer.weight * *prev).colwise() + layer.bias;
      cache.post[static_cast<std::size_t>(l)] = cache.pre[static_cast<std::size_t>(l)].cwiseMax(Scalar(0));
      prev = &cache.post[static_cast<std::size_t>(l)];
    }
    cache.pooled = gem_pool(cache.post[0].array(), cache.post[2].array(), cache.post[4].array(), p_).matrix();
    const auto& out = layers_[kLayerCount - 1];
    const Matrix logits = (out.weight * cache.pooled).colwise() + out.bias;
    cache.output = (Scalar(1) / (Scalar(1) + (-logits.array()).exp())).matrix();
    return cache;
  }

  Vector predict(const Vector& input) const { return forward(Matrix(input)).output.col(0); }
  Matrix predict(const Matrix& inputs) const { return forward(inputs).output; }

  /// Gradients with the same layout as the network itself.
  struct Gradient {
    std::array<Dense<Scalar>, kLayerCount> layers;
    Scalar p = 0;

    Vector flatten() const {
      Eigen::Index n = 1;
      for (const auto& l : layers) n += l.weight.size() + l.bias.size();
      Vector out(n);
      Eigen::Index o = 0;
      for (const auto& l : layers) {
        out.segment(o, l.weight.size()) = l.weight.reshaped();
        o += l.weight.size();
        out.segment(o, l.bias.size()) = l.bias;
        o += l.bias.size();
      }
      out(o) = p;
      return out;
    }
  };

  /// Exact gradient of the masked loss (1/N) sum ||mask * (y - y_hat)||^2
  /// over the batch held in `cache`.
  Gradient backward(const Cache& cache, const Matrix& targets, const Matrix& masks) const {
    const Eigen::Index n = cache.input.cols();
    const Scalar inv_n = Scalar(1) / Scalar(std::max<Eigen::Index>(n, 1));
    Gradient g;
    const auto& y_hat = cache.output.array();
    const Matrix d_logits =
        (Scalar(2) * inv_n * masks.array() * (y_hat - targets.array()) * y_hat * (Scalar(1) - y_hat)).matrix();
    const auto& out = layers_[kLayerCount - 1];
    g.layers[kLayerCount - 1].weight = d_logits * cache.pooled.transpose();
    g.layers[kLayerCount - 1].bias = d_logits.rowwise().sum();
    const Matrix d_pooled = out.weight.transpose() * d_logits;

    // GeM partials with the same max factorization as the forward pass.
    const auto eps = Scalar(kGemEpsilon);
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> a1 = cache.post[0].array() + eps;
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> a2 = cache.post[2].array() + eps;
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> a3 = cache.post[4].array() + eps;
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> m = a1.max(a2).max(a3);
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> r1 = a1 / m, r2 = a2 / m, r3 = a3 / m;
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> r1p = r1.pow(p_), r2p = r2.pow(p_), r3p = r3.pow(p_);
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> s = (r1p + r2p + r3p) / Scalar(3);
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> z = cache.pooled.array();
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> common = s.pow(Scalar(1) / p_ - Scalar(1)) / Scalar(3);
    const auto dz = d_pooled.array();
    const Matrix d_z1 = (dz * common * r1.pow(p_ - Scalar(1))).matrix();
    const Matrix d_z2 = (dz * common * r2.pow(p_ - Scalar(1))).matrix();
    const Matrix d_z3 = (dz * common * r3.pow(p_ - Scalar(1))).matrix();
    const auto dz_dp = z * (-s.log() / (p_ * p_) +
                            (r1p * r1.log() + r2p * r2.log() + r3p * r3.log()) / (Scalar(3) * p_ * s));
    g.p = (dz * dz_dp).sum();

    std::array<const Matrix*, 5> pooled_grads = {&d_z1, nullptr, &d_z2, nullptr, &d_z3};
    Matrix upstream = Matrix::Zero(cache.post[4].rows(), n);
    for (int l = kLayerCount - 2; l >= 0; --l) {
      const auto li = static_cast<std::size_t>(l);
      if (pooled_grads[li]) upstream += *pooled_grads[li];
      const Matrix d_pre = (upstream.array() * (cache.pre[li].array() > Scalar(0)).template cast<Scalar>()).matrix();
      const Matrix& below = l == 0 ? cache.input : cache.post[li - 1];
      g.layers[li].weight = d_pre * below.transpose();
      g.layers[li].bias = d_pre.rowwise().sum();
      if (l > 0) upstream = layers_[li].weight.transpose() * d_pre;
    }
    return g;
  }

 private:
  std::array<Dense<Scalar>, kLayerCount> layers_;
  Scalar p_ = Scalar(kGemPInit);
};

/// (1/N) sum_i ||mask_i * (y_i - y_hat_i)||^2; columns are samples.
template <typename Scalar>
Scalar mse_loss(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& predictions,
                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& targets,
                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& masks) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols() ||
      masks.rows() != targets.rows() || masks.cols() != targets.cols())
    throw ShapeMismatch("predictions, targets and masks must have equal shapes");
  if (predictions.cols() == 0) return Scalar(0);
  return (masks.array() * (targets - predictions).array()).square().sum() / Scalar(predictions.cols());
}

using Network = RpNetwork<double>;

/// Network plus the time grid and encoding it was trained for.
struct RepeatabilityPredictor {
  Network network;
  TimeGrid grid;
  TimeEncoding encoding;
};

/// Predicted repeatability vector of one interest point.
Eigen::VectorXd predict_repeatability(const RepeatabilityPredictor& model, const Keypoint& keypoint,
                                      int image_width, int image_height, const Wallclock& wallclock,
                                      const Patch& patch);

struct TrainingConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 30;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Dense training matrices; columns are samples.
struct TrainingData {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  Eigen::MatrixXd masks;

  Eigen::Index size() const { return inputs.cols(); }
};

struct TrainResult {
  Network network;
  double initial_loss = 0.0;
  std::vector<double> loss_history;  // full-dataset loss after each epoch
};

/// Mini-batch Adam with p clamped to [1, 64] after every step. Throws
/// EmptyDataset.
TrainResult train(const Network& initial, const TrainingData& data, const TrainingConfig& config);

double dataset_loss(const Network& net, const TrainingData& data);

/// Binary model file: "RPM1", version, grid, encoding, layer shapes,
/// little-endian float64 weights (W row-major then b per layer), p last.
void save_model(const RepeatabilityPredictor& model, const std::filesystem::path& path);
RepeatabilityPredictor load_model(const std::filesystem::path& path);

}  // namespace trep
