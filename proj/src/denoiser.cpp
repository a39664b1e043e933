#include "facediff/denoiser.hpp"

#include "facediff/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace facediff {

void DenoiserConfig::validate() const {
  if (data_dim < 1 || condition_dim < 1) throw ConfigError("denoiser: data/condition dims must be >= 1");
  if (layers < 1) throw ConfigError("denoiser: layers must be >= 1");
  if (width < 2 || heads < 1 || width % heads != 0) {
    throw ConfigError("denoiser: width must be >= 2 and divisible by heads");
  }
  if (ff_width < 0) throw ConfigError("denoiser: ff_width must be >= 0");
}

DenoiserModel::DenoiserModel(const DenoiserConfig& config, std::uint64_t init_seed)
    : config_(config) {
  config_.validate();
  const auto w = config_.width;
  input_proj_ = nn::Linear::create(params_, "embed.input", config_.data_dim, w);
  cond_proj_ = nn::Linear::create(params_, "embed.condition", config_.condition_dim, w);
  time_in_ = nn::Linear::create(params_, "embed.time_in", w, w);
  time_out_ = nn::Linear::create(params_, "embed.time_out", w, w);
  for (Eigen::Index l = 0; l < config_.layers; ++l) {
    const std::string p = "block" + std::to_string(l);
    Block b;
    b.self_norm = nn::LayerNorm::create(params_, p + ".self_norm", w);
    b.self_attention = nn::MultiHeadAttention::create(params_, p + ".self_attention", w, config_.heads);
    b.cross_norm = nn::LayerNorm::create(params_, p + ".cross_norm", w);
    b.cross_attention =
        nn::MultiHeadAttention::create(params_, p + ".cross_attention", w, config_.heads);
    b.ff_norm = nn::LayerNorm::create(params_, p + ".ff_norm", w);
    b.ff_in = nn::Linear::create(params_, p + ".feed_forward.in", w, config_.feed_forward());
    b.ff_out = nn::Linear::create(params_, p + ".feed_forward.out", config_.feed_forward(), w);
    blocks_.push_back(b);
  }
  final_norm_ = nn::LayerNorm::create(params_, "final_norm", w);
  output_proj_ = nn::Linear::create(params_, "output", w, config_.data_dim);

  Rng rng(init_seed);
  input_proj_.init(params_, rng);
  cond_proj_.init(params_, rng);
  time_in_.init(params_, rng);
  time_out_.init(params_, rng);
  for (const auto& b : blocks_) {
    b.self_attention.init(params_, rng);
    b.cross_attention.init(params_, rng);
    b.ff_in.init(params_, rng);
    b.ff_out.init(params_, rng);
  }
  // output_proj_ stays zero: an untrained model predicts eps = 0.
}

Matrix DenoiserModel::denoise(const Matrix& x_t, std::size_t t, const Matrix& condition) const {
  Cache cache;
  return forward(x_t, t, condition, cache);
}

Matrix DenoiserModel::forward(const Matrix& x_t, std::size_t t, const Matrix& condition,
                              Cache& cache) const {
  if (x_t.cols() != config_.data_dim) {
    throw DimensionError("denoise: x_t has " + std::to_string(x_t.cols()) + " channels, model expects " +
                         std::to_string(config_.data_dim));
  }
  if (condition.cols() != config_.condition_dim) {
    throw DimensionError("denoise: condition has " + std::to_string(condition.cols()) +
                         " columns, model expects " + std::to_string(config_.condition_dim));
  }
  if (x_t.rows() < 1 || condition.rows() < 1) throw DimensionError("denoise: empty input");
  if (condition.rows() != x_t.rows()) {
    throw DimensionError("denoise: condition has " + std::to_string(condition.rows()) + " frames, x_t has " +
                         std::to_string(x_t.rows()));
  }

  const auto w = config_.width;
  cache.x_t = x_t;
  cache.condition = condition;
  cache.time_sin = nn::sinusoidal_embedding(static_cast<double>(t), w);
  cache.time_pre = time_in_.forward(params_, cache.time_sin);
  cache.time_embedding = time_out_.forward(params_, nn::silu(cache.time_pre)).row(0);

  Matrix h = input_proj_.forward(params_, x_t) + nn::positional_encoding(x_t.rows(), w);
  h.rowwise() += cache.time_embedding;
  cache.cond_tokens =
      cond_proj_.forward(params_, condition) + nn::positional_encoding(condition.rows(), w);

  cache.blocks.resize(blocks_.size());
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    BlockCache& bc = cache.blocks[l];
    bc.input = h;
    bc.self_normed = b.self_norm.forward(params_, h, bc.self_norm);
    bc.after_self =
        h + b.self_attention.forward(params_, bc.self_normed, bc.self_normed, bc.self_attention);
    bc.cross_normed = b.cross_norm.forward(params_, bc.after_self, bc.cross_norm);
    bc.after_cross = bc.after_self + b.cross_attention.forward(params_, bc.cross_normed,
                                                               cache.cond_tokens, bc.cross_attention);
    bc.ff_normed = b.ff_norm.forward(params_, bc.after_cross, bc.ff_norm);
    bc.ff_pre = b.ff_in.forward(params_, bc.ff_normed);
    h = bc.after_cross + b.ff_out.forward(params_, nn::silu(bc.ff_pre));
  }
  cache.final_input = h;
  cache.final_normed = final_norm_.forward(params_, h, cache.final_norm);
  return output_proj_.forward(params_, cache.final_normed);
}

void DenoiserModel::backward(const Cache& cache, const Matrix& d_output, Vector& grad) const {
  if (grad.size() != params_.values().size()) throw DimensionError("denoiser backward: bad gradient size");
  Matrix dh = final_norm_.backward(
      params_, cache.final_norm, output_proj_.backward(params_, cache.final_normed, d_output, grad),
      grad);
  Matrix d_cond = Matrix::Zero(cache.cond_tokens.rows(), cache.cond_tokens.cols());
  Matrix dq;
  Matrix dm;
  for (std::size_t l = blocks_.size(); l-- > 0;) {
    const Block& b = blocks_[l];
    const BlockCache& bc = cache.blocks[l];

    const Matrix d_act = b.ff_out.backward(params_, nn::silu(bc.ff_pre), dh, grad);
    const Matrix d_normed = b.ff_in.backward(params_, bc.ff_normed, nn::silu_backward(bc.ff_pre, d_act), grad);
    dh += b.ff_norm.backward(params_, bc.ff_norm, d_normed, grad);

    b.cross_attention.backward(params_, bc.cross_attention, dh, grad, dq, dm);
    d_cond += dm;
    dh += b.cross_norm.backward(params_, bc.cross_norm, dq, grad);

    b.self_attention.backward(params_, bc.self_attention, dh, grad, dq, dm);
    dq += dm;
    dh += b.self_norm.backward(params_, bc.self_norm, dq, grad);
  }

  input_proj_.backward_params(params_, cache.x_t, dh, grad);
  const Matrix d_temb = dh.colwise().sum();
  const Matrix d_tact = time_out_.backward(params_, nn::silu(cache.time_pre), d_temb, grad);
  time_in_.backward_params(params_, cache.time_sin, nn::silu_backward(cache.time_pre, d_tact), grad);
  cond_proj_.backward_params(params_, cache.condition, d_cond, grad);
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || chunk_length < 4) {
    throw ConfigError("train: epochs and batch_size must be >= 1, chunk_length >= 4");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be finite and >= 0");
  }
  if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw ConfigError("train: drop_prob must lie in [0,1]");
}

FusedCondition chunk_condition(const ChunkedDataset& data, const TrainingChunk& chunk,
                               const StyleTriple& style) {
  const auto cond = build_condition(data.initial_state(chunk), style,
                                    static_cast<std::size_t>(chunk.x0.rows()),
                                    static_cast<std::size_t>(chunk.x0.cols()));
  return fuse_audio(cond, chunk.audio);
}

TrainResult train_denoiser(DenoiserModel& model, const ChunkedDataset& data,
                           const TrainConfig& config, const NoiseSchedule& schedule,
                           const EpochCallback& on_epoch) {
  config.validate();
  if (data.chunks.empty()) throw DatasetError("train: dataset has no chunks");
  TrainResult result{{}, TrainState{make_adam_state(model.parameter_count()), 0, Rng(config.seed)}};
  Rng& rng = result.state.rng;
  const AdamConfig adam{config.learning_rate};

  std::vector<std::size_t> order(data.chunks.size());
  std::vector<DiffusionSample> samples(data.chunks.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < data.chunks.size(); ++i) {
      const auto& chunk = data.chunks[i];
      samples[i] = DiffusionSample{chunk.x0, chunk_condition(data, chunk, data.draw_style(chunk, rng))};
    }
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    std::vector<DiffusionSample> batch;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      for (std::size_t k = begin; k < end; ++k) batch.push_back(samples[order[k]]);
      auto lg = loss_and_grad(model, std::span<const DiffusionSample>(batch), schedule,
                              config.drop_prob, rng);
      if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite diffusion loss at epoch " << epoch << ", optimizer step "
            << result.state.optimizer.step + 1 << " (lr " << config.learning_rate
            << ", grad norm " << lg.grad.norm() << ")";
        throw TrainingError(msg.str());
      }
      adam_step(model.parameters().values(), lg.grad, result.state.optimizer, adam);
      epoch_loss += lg.loss;
      ++batches;
    }
    const double mean = epoch_loss / static_cast<double>(batches);
    result.loss_curve.push_back(mean);
    result.state.epoch = epoch;
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

}  // namespace facediff
