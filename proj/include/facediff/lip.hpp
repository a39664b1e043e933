#pragma once

#include "facediff/blendshape.hpp"
#include "facediff/conditioning.hpp"
#include "facediff/dataset.hpp"
#include "facediff/nn.hpp"
#include "facediff/params.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace facediff {

struct LipConfig {
  Eigen::Index audio_dim = 29;
  Eigen::Index style_dim = 58;  // frame width of the style frames
  Eigen::Index mouth_dim = 27;
  Eigen::Index hidden = 64;
  Eigen::Index style_channels = 32;
  Eigen::Index conv_layers = 2;
  Eigen::Index conv_kernel = 3;  // odd
  std::size_t window = 8;

  void validate() const;
};

// Mouth regressor: LSTM over per-frame audio features, a 1-D convolutional
// encoder over the three style frames (tanh, zero "same" padding, then mean
// pooling), and a per-frame linear head on [h_t, style].
class LipModel {
 public:
  struct Cache {
    Matrix audio;
    std::vector<RowVector> inputs;  // [x_t, h_{t-1}]
    std::vector<RowVector> input_gate, forget_gate, cell_gate, output_gate;
    std::vector<RowVector> cell;    // c_t
    Matrix hidden;                  // T x H
    std::vector<Matrix> conv_columns;
    std::vector<Matrix> conv_outputs;
    RowVector style;
    Matrix head_input;
  };

  LipModel(const LipConfig& config, std::uint64_t init_seed);

  const LipConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  // audio: T x A, style: 3 x style_dim -> T x mouth_dim.
  Matrix predict(const Matrix& audio, const Matrix& style) const;
  Matrix forward(const Matrix& audio, const Matrix& style, Cache& cache) const;
  void backward(const Cache& cache, const Matrix& d_output, Vector& grad) const;

 private:
  Matrix im2col(const Matrix& x) const;

  LipConfig config_;
  ParameterSet params_;
  std::size_t lstm_weight_ = 0;
  std::size_t lstm_bias_ = 0;
  std::vector<nn::Linear> conv_;
  nn::Linear head_;
};

struct LipSample {
  Matrix audio;   // T_w x A
  Matrix style;   // 3 x style_dim
  Matrix target;  // T_w x |mouth|
};

Matrix style_matrix(const StyleTriple& style);

// Sliding windows of every clip, each paired with three distinct style
// frames drawn from the same clip.
std::vector<LipSample> build_lip_dataset(const std::vector<Clip>& clips, const ChannelLayout& layout,
                                         std::size_t window, std::size_t stride, Rng& rng);

struct LipLoss {
  double loss = 0.0;
  Vector grad;
};

// Batch mean of the per-window mouth MSE, with its exact gradient.
LipLoss lip_loss_and_grad(const LipModel& model, std::span<const LipSample> batch);

struct LipTrainConfig {
  std::size_t window = 8;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  std::size_t stride = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LipTrainResult {
  std::vector<double> loss_curve;
  AdamState optimizer;
  std::size_t epoch = 0;
  Rng rng;
};

LipTrainResult train_lip(LipModel& model, const std::vector<LipSample>& data,
                         const LipTrainConfig& config,
                         const std::function<void(std::size_t, double)>& on_epoch = {});

// Style triple in effect from frame `begin` onward.
struct StyleSegment {
  std::size_t begin = 0;
  StyleTriple frames;
};

// Replaces the mouth channels of `base` with the model's predictions
// (clamped to [0,1]); every other channel is copied bit-exact. Windows of
// config().window frames advance one frame at a time and overlapping
// predictions are averaged; each window takes the style segment covering its
// first frame.
ExpressionSequence refine(const LipModel& model, const ExpressionSequence& base,
                          const AudioFeatureSequence& audio, const std::vector<StyleSegment>& style,
                          const ChannelLayout& layout);

}  // namespace facediff
