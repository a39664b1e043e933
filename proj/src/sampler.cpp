#include "facediff/sampler.hpp"

#include "facediff/error.hpp"

#include <algorithm>
#include <cmath>

namespace facediff {

void SamplerConfig::validate() const {
  if (chunk_length < 4) throw ConfigError("sampler: chunk_length must be >= 4");
  const std::size_t s = chunk_step();
  if (s != chunk_length - 1 && s != chunk_length) {
    throw ConfigError("sampler: step must be chunk_length - 1 or chunk_length");
  }
  if (!std::isfinite(guidance)) throw ConfigError("sampler: guidance must be finite");
}

NoiseModel as_noise_model(const DenoiserModel& model) {
  return [&model](const Matrix& x, std::size_t t, const Matrix& c) { return model.denoise(x, t, c); };
}

Matrix sample_chunk(const NoiseModel& model, const FusedCondition& condition,
                    std::size_t data_dim, const NoiseSchedule& schedule, double guidance,
                    GuidanceMode mode, Rng& rng) {
  const auto n = condition.values.rows();
  const auto d = static_cast<Eigen::Index>(data_dim);
  const FusedCondition phi = null_condition(condition);
  Matrix x = rng.normal_matrix(n, d);
  for (std::size_t t = schedule.steps(); t >= 1; --t) {
    const Matrix eps_cond = model(x, t, condition.values);
    Matrix eps = mode == GuidanceMode::kClassifierFree
                     ? cfg_combine(eps_cond, model(x, t, phi.values), guidance)
                     : eps_cond;
    const Matrix z = t > 1 ? rng.normal_matrix(n, d) : Matrix::Zero(n, d);
    x = reverse_step(x, t, eps, z, schedule);
  }
  return x;
}

std::vector<std::size_t> LongSampleResult::boundaries() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k < chunks.size(); ++k) out.push_back(chunks[k].start);
  return out;
}

LongSampleResult long_term_sample(const NoiseModel& model, const AudioFeatureSequence& audio,
                                  const EmotionStyleClip& style, const SamplerConfig& cfg,
                                  const NoiseSchedule& schedule, Rng& rng) {
  cfg.validate();
  if (style.sequence.size() < 3) {
    throw ValidationError("style clip '" + style.clip_id + "' needs at least 3 frames, has " +
                          std::to_string(style.sequence.size()));
  }
  const std::size_t total = audio.size();
  if (total < 1) throw ValidationError("long_term_sample: empty audio");
  const std::size_t n = cfg.chunk_length;
  const std::size_t step = cfg.chunk_step();
  const Matrix& s = style.sequence.frames;
  const auto dim = static_cast<std::size_t>(s.cols());

  LongSampleResult result;
  result.sequence.fps = style.sequence.fps;
  result.sequence.frames = Matrix::Zero(static_cast<Eigen::Index>(total), s.cols());

  auto draw_triple = [&] {
    const auto idx = rng.sample_distinct(style.sequence.size(), 3);
    return std::array<std::size_t, 3>{idx[0], idx[1], idx[2]};
  };
  result.initial_style_index = rng.sample_distinct(style.sequence.size(), 1)[0];
  RowVector initial = s.row(static_cast<Eigen::Index>(result.initial_style_index));
  auto triple = draw_triple();

  for (std::size_t i = 0;; i += step) {
    ChunkTrace trace;
    trace.start = i;
    trace.style_indices = triple;
    const StyleTriple style3{s.row(static_cast<Eigen::Index>(triple[0])),
                             s.row(static_cast<Eigen::Index>(triple[1])),
                             s.row(static_cast<Eigen::Index>(triple[2]))};
    std::optional<ExpressionFrame> init;
    if (cfg.use_initial_state) {
      init = initial;
      trace.initial_state = initial;
    }
    const FusedCondition cond = fuse_audio(build_condition(init, style3, n, dim), audio_slice(audio, i, n));
    trace.chunk = sample_chunk(model, cond, dim, schedule, cfg.guidance, cfg.mode, rng);

    const auto rows = static_cast<Eigen::Index>(std::min(n, total - i));
    result.sequence.frames.middleRows(static_cast<Eigen::Index>(i), rows) = trace.chunk.topRows(rows);
    initial = trace.chunk.row(trace.chunk.rows() - 1);
    result.chunks.push_back(std::move(trace));
    if (i + n >= total) break;
    triple = draw_triple();
  }
  return result;
}

ContinuityReport continuity_jump(const ExpressionSequence& seq,
                                 const std::vector<std::size_t>& boundaries) {
  ContinuityReport report;
  for (auto b : boundaries) {
    if (b < 1 || b >= seq.size()) {
      throw ValidationError("continuity_jump: boundary " + std::to_string(b) + " outside [1, " +
                            std::to_string(seq.size()) + ")");
    }
    const auto r = static_cast<Eigen::Index>(b);
    const double jump = (seq.frames.row(r) - seq.frames.row(r - 1)).cwiseAbs().maxCoeff();
    report.per_boundary.push_back(jump);
    report.global_max = std::max(report.global_max, jump);
  }
  return report;
}

}  // namespace facediff
