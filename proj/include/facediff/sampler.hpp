#pragma once

#include "facediff/blendshape.hpp"
#include "facediff/conditioning.hpp"
#include "facediff/denoiser.hpp"
#include "facediff/diffusion.hpp"
#include "facediff/rng.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace facediff {

enum class GuidanceMode {
  kClassifierFree,   // eps = (w+1) eps(c) - w eps(phi)
  kConditionalOnly,  // eps = eps(c); no unconditional evaluation
};

struct SamplerConfig {
  std::size_t chunk_length = 32;
  double guidance = 2.0;
  std::uint64_t seed = 0;
  std::size_t step = 0;  // 0 means chunk_length - 1
  GuidanceMode mode = GuidanceMode::kClassifierFree;
  // Ablation switch: when false the initial-state row (and its indicator) stays zero.
  bool use_initial_state = true;

  std::size_t chunk_step() const noexcept { return step == 0 ? chunk_length - 1 : step; }
  void validate() const;
};

// eps_theta(x_t, t, condition). DenoiserModel::denoise fits this signature.
using NoiseModel = std::function<Matrix(const Matrix&, std::size_t, const Matrix&)>;

NoiseModel as_noise_model(const DenoiserModel& model);

// Full reverse chain from x_T ~ N(0, I) down to x_0. Noise draws come only
// from `rng`: one N x D block for x_T, then one per step for t > 1.
Matrix sample_chunk(const NoiseModel& model, const FusedCondition& condition,
                    std::size_t data_dim, const NoiseSchedule& schedule, double guidance,
                    GuidanceMode mode, Rng& rng);

struct ChunkTrace {
  std::size_t start = 0;
  std::array<std::size_t, 3> style_indices{};
  // Initial-state row fed to this chunk (without the indicator); empty when
  // the initial state was disabled.
  RowVector initial_state;
  Matrix chunk;  // full N-frame output before truncation
};

struct LongSampleResult {
  ExpressionSequence sequence;
  std::vector<ChunkTrace> chunks;
  std::size_t initial_style_index = 0;

  // Output indices where a new chunk starts (excluding 0).
  std::vector<std::size_t> boundaries() const;
};

// Long-term sampling over the whole audio track: the first chunk's initial
// state is a random style frame, each chunk draws three fresh style frames,
// and each later chunk is conditioned on the previous chunk's last frame.
// Chunks start every cfg.chunk_step() frames until the output is covered.
LongSampleResult long_term_sample(const NoiseModel& model, const AudioFeatureSequence& audio,
                                  const EmotionStyleClip& style, const SamplerConfig& cfg,
                                  const NoiseSchedule& schedule, Rng& rng);

struct ContinuityReport {
  std::vector<double> per_boundary;
  double global_max = 0.0;
};

// For each boundary b: max over channels of |x[b] - x[b-1]|.
ContinuityReport continuity_jump(const ExpressionSequence& seq,
                                 const std::vector<std::size_t>& boundaries);

}  // namespace facediff
