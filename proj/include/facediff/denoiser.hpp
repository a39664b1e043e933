#pragma once

#include "facediff/conditioning.hpp"
#include "facediff/dataset.hpp"
#include "facediff/diffusion.hpp"
#include "facediff/error.hpp"
#include "facediff/nn.hpp"
#include "facediff/params.hpp"

#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace facediff {

struct DenoiserConfig {
  Eigen::Index data_dim = 58;       // E + P
  Eigen::Index condition_dim = 88;  // fused condition width
  Eigen::Index layers = 4;
  Eigen::Index heads = 4;
  Eigen::Index width = 128;
  Eigen::Index ff_width = 0;  // 0 means 4 * width

  Eigen::Index feed_forward() const { return ff_width > 0 ? ff_width : 4 * width; }
  void validate() const;
};

// Noise predictor eps(x_t, t, c). Sequence tokens self-attend, then
// cross-attend to one condition token per frame, then pass a SiLU
// feed-forward block (pre-norm residual). Timestep embedding is added to
// every sequence token; sinusoidal frame positions are added to both token
// sets. The output projection starts at zero.
class DenoiserModel {
 public:
  struct Block {
    nn::LayerNorm self_norm;
    nn::MultiHeadAttention self_attention;
    nn::LayerNorm cross_norm;
    nn::MultiHeadAttention cross_attention;
    nn::LayerNorm ff_norm;
    nn::Linear ff_in;
    nn::Linear ff_out;
  };

  struct BlockCache {
    Matrix input;
    nn::LayerNormCache self_norm, cross_norm, ff_norm;
    Matrix self_normed, cross_normed, ff_normed;
    nn::AttentionCache self_attention, cross_attention;
    Matrix after_self, after_cross;
    Matrix ff_pre;
  };

  struct Cache {
    Matrix x_t;
    Matrix condition;
    RowVector time_sin;
    Matrix time_pre;
    RowVector time_embedding;
    Matrix cond_tokens;
    std::vector<BlockCache> blocks;
    Matrix final_input;
    nn::LayerNormCache final_norm;
    Matrix final_normed;
  };

  DenoiserModel(const DenoiserConfig& config, std::uint64_t init_seed);

  const DenoiserConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  // Deterministic; throws DimensionError on shape mismatch.
  Matrix denoise(const Matrix& x_t, std::size_t t, const Matrix& condition) const;
  Matrix forward(const Matrix& x_t, std::size_t t, const Matrix& condition, Cache& cache) const;
  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Cache& cache, const Matrix& d_output, Vector& grad) const;

 private:
  DenoiserConfig config_;
  ParameterSet params_;
  nn::Linear input_proj_;
  nn::Linear cond_proj_;
  nn::Linear time_in_;
  nn::Linear time_out_;
  std::vector<Block> blocks_;
  nn::LayerNorm final_norm_;
  nn::Linear output_proj_;
};

// What loss_and_grad needs from a noise predictor.
template <typename M>
concept TrainableNoisePredictor = requires(const M& m, const Matrix& x, std::size_t t,
                                           typename M::Cache& cache, const typename M::Cache& cc,
                                           Vector& grad) {
  { m.parameter_count() } -> std::convertible_to<std::size_t>;
  { m.forward(x, t, x, cache) } -> std::convertible_to<Matrix>;
  m.backward(cc, x, grad);
};

struct DiffusionSample {
  Matrix x0;
  FusedCondition condition;
};

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;
};

// Per element, in order: t ~ U{1..T}, eps ~ N(0, I), condition dropout with
// probability `drop_prob`. Loss is the batch mean of simple_loss; the
// gradient is exact.
template <TrainableNoisePredictor M>
LossAndGrad loss_and_grad(const M& model, std::span<const DiffusionSample> batch,
                          const NoiseSchedule& schedule, double drop_prob, Rng& rng) {
  if (batch.empty()) throw DimensionError("loss_and_grad: empty batch");
  LossAndGrad out{0.0, Vector::Zero(static_cast<Eigen::Index>(model.parameter_count()))};
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  typename M::Cache cache;
  for (const auto& sample : batch) {
    const auto t = static_cast<std::size_t>(
        rng.uniform_int(1, static_cast<std::int64_t>(schedule.steps())));
    const Matrix eps = rng.normal_matrix(sample.x0.rows(), sample.x0.cols());
    const FusedCondition cond = drop_condition(sample.condition, drop_prob, rng);
    const Matrix x_t = forward_sample(sample.x0, t, eps, schedule);
    const Matrix eps_hat = model.forward(x_t, t, cond.values, cache);
    out.loss += inv_batch * simple_loss(eps, eps_hat);
    const Matrix d_out = (2.0 * inv_batch / static_cast<double>(eps.size())) * (eps_hat - eps);
    model.backward(cache, d_out, out.grad);
  }
  return out;
}

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 64;
  double learning_rate = 4e-4;
  double drop_prob = 0.1;
  std::size_t chunk_length = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainState {
  AdamState optimizer;
  std::size_t epoch = 0;
  Rng rng;
};

struct TrainResult {
  std::vector<double> loss_curve;  // mean batch loss per epoch
  TrainState state;
};

// Builds the fused condition for one chunk with the given style triple.
FusedCondition chunk_condition(const ChunkedDataset& data, const TrainingChunk& chunk,
                               const StyleTriple& style);

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Adam on loss_and_grad over shuffled minibatches; style triples re-drawn
// every epoch. Throws TrainingError on a non-finite loss.
TrainResult train_denoiser(DenoiserModel& model, const ChunkedDataset& data,
                           const TrainConfig& config, const NoiseSchedule& schedule,
                           const EpochCallback& on_epoch = {});

}  // namespace facediff
