#include "facediff/conditioning.hpp"

#include "facediff/error.hpp"

#include <algorithm>
#include <string>

namespace facediff {

std::array<std::size_t, 3> style_rows(std::size_t frames) {
  if (frames < 4) {
    throw ValidationError("condition chunk length " + std::to_string(frames) +
                          " < 4: the middle-three style window is undefined");
  }
  const std::size_t mid = frames / 2;
  return {mid - 1, mid, mid + 1};
}

ConditionMatrix build_condition(const std::optional<ExpressionFrame>& initial,
                                const std::optional<StyleTriple>& style, std::size_t frames,
                                std::size_t cond_dim) {
  const auto rows = style_rows(frames);
  const auto dim = static_cast<Eigen::Index>(cond_dim);
  ConditionMatrix c{Matrix::Zero(static_cast<Eigen::Index>(frames), dim + 1)};

  auto place = [&](std::size_t row, const ExpressionFrame& f) {
    if (f.size() != dim) {
      throw DimensionError("build_condition: frame width " + std::to_string(f.size()) +
                           " != condition dim " + std::to_string(cond_dim));
    }
    const auto r = static_cast<Eigen::Index>(row);
    c.state_style.row(r).head(dim) = f;
    c.state_style(r, dim) = 1.0;
  };

  if (initial) place(0, *initial);
  if (style) {
    for (std::size_t k = 0; k < 3; ++k) place(rows[k], (*style)[k]);
  }
  return c;
}

FusedCondition fuse_audio(const ConditionMatrix& condition, const AudioFeatureSequence& audio) {
  if (condition.state_style.rows() != audio.feats.rows()) {
    throw DimensionError("fuse_audio: condition has " + std::to_string(condition.state_style.rows()) +
                         " rows, audio has " + std::to_string(audio.feats.rows()));
  }
  FusedCondition fused;
  fused.state_width = static_cast<std::size_t>(condition.state_style.cols());
  fused.values.resize(condition.state_style.rows(),
                      condition.state_style.cols() + audio.feats.cols());
  fused.values << condition.state_style, audio.feats;
  return fused;
}

FusedCondition null_condition(const FusedCondition& like) {
  return FusedCondition{Matrix::Zero(like.values.rows(), like.values.cols()), like.state_width};
}

FusedCondition drop_condition(const FusedCondition& condition, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("drop probability must lie in [0, 1]");
  if (rng.bernoulli(p)) return null_condition(condition);
  return condition;
}

AudioFeatureSequence audio_slice(const AudioFeatureSequence& audio, std::size_t begin,
                                 std::size_t frames) {
  AudioFeatureSequence out{Matrix::Zero(static_cast<Eigen::Index>(frames), audio.feats.cols()),
                           audio.fps};
  if (begin < audio.size()) {
    const auto n = static_cast<Eigen::Index>(std::min(frames, audio.size() - begin));
    out.feats.topRows(n) = audio.feats.middleRows(static_cast<Eigen::Index>(begin), n);
  }
  return out;
}

}  // namespace facediff
