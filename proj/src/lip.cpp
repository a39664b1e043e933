#include "facediff/lip.hpp"

#include "facediff/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace facediff {

namespace {

RowVector sigmoid_row(const RowVector& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

}  // namespace

void LipConfig::validate() const {
  if (audio_dim < 1 || style_dim < 1 || mouth_dim < 1 || hidden < 1 || style_channels < 1 ||
      conv_layers < 1) {
    throw ConfigError("lip model: all dimensions must be >= 1");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("lip model: conv_kernel must be odd");
  if (window < 1) throw ConfigError("lip model: window must be >= 1");
}

LipModel::LipModel(const LipConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  const auto h = config_.hidden;
  lstm_weight_ = params_.add("lstm.weight", config_.audio_dim + h, 4 * h);
  lstm_bias_ = params_.add("lstm.bias", 1, 4 * h);
  Eigen::Index in = config_.style_dim;
  for (Eigen::Index l = 0; l < config_.conv_layers; ++l) {
    conv_.push_back(nn::Linear::create(params_, "conv" + std::to_string(l), config_.conv_kernel * in,
                                       config_.style_channels));
    in = config_.style_channels;
  }
  head_ = nn::Linear::create(params_, "head", h + config_.style_channels, config_.mouth_dim);

  Rng rng(init_seed);
  params_.fill_normal(lstm_weight_, 1.0 / std::sqrt(static_cast<double>(config_.audio_dim + h)), rng);
  // Forget-gate bias starts at 1.
  params_.mutable_slice(lstm_bias_).middleCols(h, h).setConstant(1.0);
  for (const auto& c : conv_) c.init(params_, rng);
  head_.init(params_, rng);
}

Matrix LipModel::im2col(const Matrix& x) const {
  const Eigen::Index k = config_.conv_kernel;
  const Eigen::Index pad = k / 2;
  Matrix cols = Matrix::Zero(x.rows(), k * x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index src = r + j - pad;
      if (src >= 0 && src < x.rows()) cols.block(r, j * x.cols(), 1, x.cols()) = x.row(src);
    }
  }
  return cols;
}

Matrix LipModel::predict(const Matrix& audio, const Matrix& style) const {
  Cache cache;
  return forward(audio, style, cache);
}

Matrix LipModel::forward(const Matrix& audio, const Matrix& style, Cache& cache) const {
  if (audio.cols() != config_.audio_dim) {
    throw DimensionError("lip model: audio has " + std::to_string(audio.cols()) + " features, expected " +
                         std::to_string(config_.audio_dim));
  }
  if (style.cols() != config_.style_dim || style.rows() != 3) {
    throw DimensionError("lip model: style must be 3 frames of width " + std::to_string(config_.style_dim));
  }
  const Eigen::Index steps = audio.rows();
  const Eigen::Index h = config_.hidden;
  const auto w = params_[lstm_weight_];
  const auto b = params_[lstm_bias_];

  cache.audio = audio;
  cache.inputs.resize(static_cast<std::size_t>(steps));
  cache.input_gate.resize(static_cast<std::size_t>(steps));
  cache.forget_gate.resize(static_cast<std::size_t>(steps));
  cache.cell_gate.resize(static_cast<std::size_t>(steps));
  cache.output_gate.resize(static_cast<std::size_t>(steps));
  cache.cell.resize(static_cast<std::size_t>(steps));
  cache.hidden.resize(steps, h);

  RowVector hprev = RowVector::Zero(h);
  RowVector cprev = RowVector::Zero(h);
  for (Eigen::Index t = 0; t < steps; ++t) {
    const auto s = static_cast<std::size_t>(t);
    RowVector z(config_.audio_dim + h);
    z << audio.row(t), hprev;
    const RowVector pre = z * w + b.row(0);
    cache.inputs[s] = z;
    cache.input_gate[s] = sigmoid_row(pre.segment(0, h));
    cache.forget_gate[s] = sigmoid_row(pre.segment(h, h));
    cache.cell_gate[s] = pre.segment(2 * h, h).array().tanh().matrix();
    cache.output_gate[s] = sigmoid_row(pre.segment(3 * h, h));
    cprev = cache.forget_gate[s].cwiseProduct(cprev) + cache.input_gate[s].cwiseProduct(cache.cell_gate[s]);
    cache.cell[s] = cprev;
    hprev = cache.output_gate[s].cwiseProduct(cprev.array().tanh().matrix());
    cache.hidden.row(t) = hprev;
  }

  cache.conv_columns.clear();
  cache.conv_outputs.clear();
  Matrix z = style;
  for (const auto& conv : conv_) {
    cache.conv_columns.push_back(im2col(z));
    z = conv.forward(params_, cache.conv_columns.back()).array().tanh().matrix();
    cache.conv_outputs.push_back(z);
  }
  cache.style = z.colwise().mean();

  cache.head_input.resize(steps, h + config_.style_channels);
  cache.head_input.leftCols(h) = cache.hidden;
  cache.head_input.rightCols(config_.style_channels) = cache.style.replicate(steps, 1);
  return head_.forward(params_, cache.head_input);
}

void LipModel::backward(const Cache& cache, const Matrix& d_output, Vector& grad) const {
  if (grad.size() != params_.values().size()) throw DimensionError("lip backward: bad gradient size");
  const Eigen::Index h = config_.hidden;
  const Eigen::Index steps = cache.hidden.rows();

  const Matrix d_head_in = head_.backward(params_, cache.head_input, d_output, grad);
  const Matrix d_hidden = d_head_in.leftCols(h);
  const RowVector d_style = d_head_in.rightCols(config_.style_channels).colwise().sum();

  // Convolutional style encoder; the style input itself needs no gradient.
  const auto rows = static_cast<double>(cache.conv_outputs.back().rows());
  Matrix dz = (d_style / rows).replicate(cache.conv_outputs.back().rows(), 1);
  for (std::size_t l = conv_.size(); l-- > 0;) {
    const Matrix& out = cache.conv_outputs[l];
    const Matrix d_pre = dz.array() * (1.0 - out.array().square());
    if (l == 0) {
      conv_[l].backward_params(params_, cache.conv_columns[l], d_pre, grad);
      break;
    }
    const Matrix d_cols = conv_[l].backward(params_, cache.conv_columns[l], d_pre, grad);
    const Eigen::Index in = cache.conv_outputs[l - 1].cols();
    const Eigen::Index pad = config_.conv_kernel / 2;
    dz = Matrix::Zero(out.rows(), in);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      for (Eigen::Index j = 0; j < config_.conv_kernel; ++j) {
        const Eigen::Index src = r + j - pad;
        if (src >= 0 && src < out.rows()) dz.row(src) += d_cols.block(r, j * in, 1, in);
      }
    }
  }

  // LSTM, backpropagation through time.
  auto dw = params_.slice_of(grad, lstm_weight_);
  auto db = params_.slice_of(grad, lstm_bias_);
  const auto w = params_[lstm_weight_];
  RowVector dh_next = RowVector::Zero(h);
  RowVector dc_next = RowVector::Zero(h);
  RowVector d_pre(4 * h);
  for (Eigen::Index t = steps; t-- > 0;) {
    const auto s = static_cast<std::size_t>(t);
    const RowVector& ig = cache.input_gate[s];
    const RowVector& fg = cache.forget_gate[s];
    const RowVector& gg = cache.cell_gate[s];
    const RowVector& og = cache.output_gate[s];
    const RowVector tanh_c = cache.cell[s].array().tanh().matrix();
    const RowVector c_prev = t > 0 ? cache.cell[s - 1] : RowVector::Zero(h);

    const RowVector dh = d_hidden.row(t) + dh_next;
    const RowVector d_o = dh.cwiseProduct(tanh_c);
    const RowVector dc =
        (dh.array() * og.array() * (1.0 - tanh_c.array().square())).matrix() + dc_next;
    d_pre.segment(0, h) = (dc.array() * gg.array() * ig.array() * (1.0 - ig.array())).matrix();
    d_pre.segment(h, h) = (dc.array() * c_prev.array() * fg.array() * (1.0 - fg.array())).matrix();
    d_pre.segment(2 * h, h) = (dc.array() * ig.array() * (1.0 - gg.array().square())).matrix();
    d_pre.segment(3 * h, h) = (d_o.array() * og.array() * (1.0 - og.array())).matrix();
    dc_next = dc.cwiseProduct(fg);

    dw.noalias() += cache.inputs[s].transpose() * d_pre;
    db += d_pre;
    dh_next = (d_pre * w.transpose()).tail(h);
  }
}

Matrix style_matrix(const StyleTriple& style) {
  Matrix m(3, style[0].size());
  for (Eigen::Index r = 0; r < 3; ++r) m.row(r) = style[static_cast<std::size_t>(r)];
  return m;
}

std::vector<LipSample> build_lip_dataset(const std::vector<Clip>& clips, const ChannelLayout& layout,
                                         std::size_t window, std::size_t stride, Rng& rng) {
  std::vector<LipSample> out;
  for (const auto& clip : clips) {
    if (clip.sequence.size() < std::max<std::size_t>(window, 3)) continue;
    for (auto& w : sliding_windows(clip.sequence, clip.audio, layout, window, stride)) {
      const auto idx = rng.sample_distinct(clip.sequence.size(), 3);
      Matrix style(3, clip.sequence.frames.cols());
      for (Eigen::Index r = 0; r < 3; ++r) {
        style.row(r) = clip.sequence.frames.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]));
      }
      out.push_back(LipSample{std::move(w.audio), std::move(style), std::move(w.mouth)});
    }
  }
  if (out.empty()) throw DatasetError("lip dataset: no clip is long enough for window " + std::to_string(window));
  return out;
}

LipLoss lip_loss_and_grad(const LipModel& model, std::span<const LipSample> batch) {
  if (batch.empty()) throw DimensionError("lip_loss_and_grad: empty batch");
  LipLoss out{0.0, Vector::Zero(static_cast<Eigen::Index>(model.parameter_count()))};
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  LipModel::Cache cache;
  for (const auto& s : batch) {
    const Matrix pred = model.forward(s.audio, s.style, cache);
    require_same_shape(pred, s.target, "lip loss");
    const Matrix diff = pred - s.target;
    const double n = static_cast<double>(diff.size());
    out.loss += inv_batch * diff.squaredNorm() / n;
    model.backward(cache, (2.0 * inv_batch / n) * diff, out.grad);
  }
  return out;
}

void LipTrainConfig::validate() const {
  if (window < 1 || epochs < 1 || batch_size < 1 || stride < 1) {
    throw ConfigError("lip training: window, epochs, batch_size and stride must be >= 1");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("lip training: learning_rate must be finite and >= 0");
  }
}

LipTrainResult train_lip(LipModel& model, const std::vector<LipSample>& data,
                         const LipTrainConfig& config,
                         const std::function<void(std::size_t, double)>& on_epoch) {
  config.validate();
  if (data.empty()) throw DatasetError("train_lip: empty dataset");
  LipTrainResult result{{}, make_adam_state(model.parameter_count()), 0, Rng(config.seed)};
  const AdamConfig adam{config.learning_rate};
  std::vector<std::size_t> order(data.size());
  std::vector<LipSample> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), result.rng.engine());
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      batch.clear();
      for (std::size_t k = begin; k < std::min(order.size(), begin + config.batch_size); ++k) {
        batch.push_back(data[order[k]]);
      }
      auto lg = lip_loss_and_grad(model, batch);
      if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite lip loss at epoch " << epoch << ", optimizer step " << result.optimizer.step + 1
            << " (lr " << config.learning_rate << ", grad norm " << lg.grad.norm() << ")";
        throw TrainingError(msg.str());
      }
      adam_step(model.parameters().values(), lg.grad, result.optimizer, adam);
      total += lg.loss;
      ++batches;
    }
    result.loss_curve.push_back(total / static_cast<double>(batches));
    result.epoch = epoch;
    if (on_epoch) on_epoch(epoch, result.loss_curve.back());
  }
  return result;
}

ExpressionSequence refine(const LipModel& model, const ExpressionSequence& base,
                          const AudioFeatureSequence& audio, const std::vector<StyleSegment>& style,
                          const ChannelLayout& layout) {
  if (audio.size() != base.size()) {
    throw DimensionError("refine: base has " + std::to_string(base.size()) + " frames, audio has " +
                         std::to_string(audio.size()));
  }
  if (static_cast<std::size_t>(base.frames.cols()) != layout.dim()) {
    throw DimensionError("refine: base sequence does not match the layout");
  }
  ExpressionSequence out = base;
  const auto& mask = layout.mouth_mask();
  if (mask.empty() || base.size() == 0) return out;
  if (static_cast<std::size_t>(model.config().mouth_dim) != mask.size()) {
    throw DimensionError("refine: model predicts " + std::to_string(model.config().mouth_dim) +
                         " mouth channels, layout has " + std::to_string(mask.size()));
  }
  if (style.empty() || style.front().begin != 0) {
    throw ValidationError("refine: style segments must start at frame 0");
  }

  const std::size_t total = base.size();
  const std::size_t win = std::min(model.config().window, total);
  Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(mask.size()));
  Eigen::VectorXd count = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
  std::size_t seg = 0;
  for (std::size_t s = 0; s + win <= total; ++s) {
    while (seg + 1 < style.size() && style[seg + 1].begin <= s) ++seg;
    const auto r = static_cast<Eigen::Index>(s);
    const auto w = static_cast<Eigen::Index>(win);
    sum.middleRows(r, w) += model.predict(audio.feats.middleRows(r, w), style_matrix(style[seg].frames));
    count.segment(r, w).array() += 1.0;
  }
  Matrix mouth = sum.array().colwise() / count.array();
  mouth = mouth.cwiseMax(0.0).cwiseMin(1.0);
  scatter_columns(out.frames, mouth, mask);
  return out;
}

}  // namespace facediff
