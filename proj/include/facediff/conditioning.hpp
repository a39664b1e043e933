#pragma once

#include "facediff/blendshape.hpp"
#include "facediff/rng.hpp"
#include "facediff/tensor.hpp"

#include <array>
#include <cstddef>
#include <optional>

namespace facediff {

struct AudioFeatureSequence {
  Matrix feats;  // frames x feature_dim
  double fps = 25.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(feats.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(feats.cols()); }
};

using StyleTriple = std::array<ExpressionFrame, 3>;

// N x (cond_dim + 1) matrix. Row 0 carries the initial state, the middle
// three rows carry the style frames; the last column marks populated rows.
struct ConditionMatrix {
  Matrix state_style;

  std::size_t frames() const noexcept { return static_cast<std::size_t>(state_style.rows()); }
  std::size_t cond_dim() const noexcept { return static_cast<std::size_t>(state_style.cols()) - 1; }
};

// Condition matrix with the audio features appended column-wise.
struct FusedCondition {
  Matrix values;  // N x (cond_dim + 1 + audio_dim)
  std::size_t state_width = 0;  // cond_dim + 1

  std::size_t frames() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t width() const noexcept { return static_cast<std::size_t>(values.cols()); }
};

// Zero-indexed rows that hold the style frames: floor(N/2)-1 .. floor(N/2)+1.
std::array<std::size_t, 3> style_rows(std::size_t frames);

// Throws ValidationError when frames < 4, DimensionError on a width mismatch.
ConditionMatrix build_condition(const std::optional<ExpressionFrame>& initial,
                                const std::optional<StyleTriple>& style, std::size_t frames,
                                std::size_t cond_dim);

// Throws DimensionError when the row counts differ.
FusedCondition fuse_audio(const ConditionMatrix& condition, const AudioFeatureSequence& audio);

// The all-zero condition (phi) with the same shape as `like`.
FusedCondition null_condition(const FusedCondition& like);

// With probability p returns the null condition, otherwise the input.
// Consumes exactly one uniform draw from `rng`.
FusedCondition drop_condition(const FusedCondition& condition, double p, Rng& rng);

// Rows [begin, begin + frames) of `audio`, zero-padded past its end.
AudioFeatureSequence audio_slice(const AudioFeatureSequence& audio, std::size_t begin,
                                 std::size_t frames);

}  // namespace facediff
