#pragma once

#include "facediff/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace facediff {

// Channel order of a frame vector: `expression_dim` blendshape channels
// followed by `pose_dim` head-pose channels. Immutable after construction.
class ChannelLayout {
 public:
  // Validates every invariant; throws ValidationError on violation.
  ChannelLayout(std::size_t expression_dim, std::size_t pose_dim,
                std::vector<std::string> channel_names, std::vector<std::size_t> mouth_mask);

  std::size_t expression_dim() const noexcept { return expression_dim_; }
  std::size_t pose_dim() const noexcept { return pose_dim_; }
  std::size_t dim() const noexcept { return expression_dim_ + pose_dim_; }

  const std::vector<std::string>& channel_names() const noexcept { return names_; }
  // Sorted ascending, unique.
  const std::vector<std::size_t>& mouth_mask() const noexcept { return mouth_; }
  // Complement of the mouth mask over all channels (pose included), ascending.
  const std::vector<std::size_t>& non_mouth() const noexcept { return other_; }

  bool is_mouth(std::size_t channel) const;
  bool is_pose(std::size_t channel) const noexcept { return channel >= expression_dim_; }

  // Throws ValidationError when no channel has this name.
  std::size_t index_of(const std::string& name) const;
  // Indices whose names start with any of the given prefixes, ascending.
  std::vector<std::size_t> channels_with_prefix(const std::vector<std::string>& prefixes) const;

  ChannelLayout with_mouth_mask(std::vector<std::size_t> mask) const;

  friend bool operator==(const ChannelLayout&, const ChannelLayout&) = default;

 private:
  std::size_t expression_dim_;
  std::size_t pose_dim_;
  std::vector<std::string> names_;
  std::vector<std::size_t> mouth_;
  std::vector<std::size_t> other_;
};

// The 52 ARKit blendshape names in Apple's documented order.
const std::vector<std::string>& arkit_blendshape_names();
// headPitch, headYaw, headRoll (radians), headTx, headTy, headTz.
const std::vector<std::string>& head_pose_names();

// 52 ARKit channels plus 6 pose channels; mouth mask = every mouth* / jaw* channel.
ChannelLayout default_layout();

ChannelLayout load_layout(const std::filesystem::path& path);
void save_layout(const ChannelLayout& layout, const std::filesystem::path& path);
nlohmann::json layout_to_json(const ChannelLayout& layout);
ChannelLayout layout_from_json(const nlohmann::json& j);

using ExpressionFrame = RowVector;

struct ExpressionSequence {
  Matrix frames;  // frames x layout.dim()
  double fps = 25.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(frames.rows()); }
  ExpressionFrame frame(std::size_t i) const { return frames.row(static_cast<Eigen::Index>(i)); }
};

struct EmotionStyleClip {
  ExpressionSequence sequence;
  std::string emotion_label;
  std::string clip_id;
};

// Throws ValidationError unless the clip has at least three frames matching `layout`.
void validate_style_clip(const EmotionStyleClip& clip, const ChannelLayout& layout);

// Clips blendshape channels to [0,1]; pose channels pass through.
// Throws ValidationError naming the first non-finite channel.
ExpressionFrame clamp_frame(const ExpressionFrame& frame, const ChannelLayout& layout);
ExpressionSequence clamp_sequence(const ExpressionSequence& seq, const ChannelLayout& layout);

struct MouthSplit {
  RowVector mouth;
  RowVector other;
};

MouthSplit split_mouth(const ExpressionFrame& frame, const ChannelLayout& layout);
ExpressionFrame merge_mouth(const MouthSplit& parts, const ChannelLayout& layout);

// Column gather/scatter over whole sequences.
Matrix gather_columns(const Matrix& m, const std::vector<std::size_t>& columns);
void scatter_columns(Matrix& dst, const Matrix& src, const std::vector<std::size_t>& columns);

}  // namespace facediff
