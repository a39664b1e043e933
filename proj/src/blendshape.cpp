#include "facediff/blendshape.hpp"

#include "facediff/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace facediff {

namespace {

std::vector<std::size_t> complement(std::size_t dim, const std::vector<std::size_t>& sorted_mask) {
  std::vector<std::size_t> out;
  out.reserve(dim - sorted_mask.size());
  std::size_t m = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    if (m < sorted_mask.size() && sorted_mask[m] == i) {
      ++m;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

}  // namespace

ChannelLayout::ChannelLayout(std::size_t expression_dim, std::size_t pose_dim,
                             std::vector<std::string> channel_names,
                             std::vector<std::size_t> mouth_mask)
    : expression_dim_(expression_dim),
      pose_dim_(pose_dim),
      names_(std::move(channel_names)),
      mouth_(std::move(mouth_mask)) {
  if (expression_dim_ < 1) throw ValidationError("layout: expression_dim must be >= 1");
  if (names_.size() != dim()) {
    throw ValidationError("layout: expected " + std::to_string(dim()) + " channel names, got " +
                          std::to_string(names_.size()));
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw ValidationError("layout: empty channel name");
    if (!seen.insert(n).second) throw ValidationError("layout: duplicate channel name '" + n + "'");
  }
  std::sort(mouth_.begin(), mouth_.end());
  if (std::adjacent_find(mouth_.begin(), mouth_.end()) != mouth_.end()) {
    throw ValidationError("layout: duplicate index in mouth_mask");
  }
  for (auto i : mouth_) {
    if (i >= expression_dim_) {
      throw ValidationError("layout: mouth_mask index " + std::to_string(i) +
                            " is outside the blendshape channels");
    }
  }
  other_ = complement(dim(), mouth_);
}

bool ChannelLayout::is_mouth(std::size_t channel) const {
  return std::binary_search(mouth_.begin(), mouth_.end(), channel);
}

std::size_t ChannelLayout::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ValidationError("layout: no channel named '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<std::size_t> ChannelLayout::channels_with_prefix(
    const std::vector<std::string>& prefixes) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    for (const auto& p : prefixes) {
      if (names_[i].rfind(p, 0) == 0) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

ChannelLayout ChannelLayout::with_mouth_mask(std::vector<std::size_t> mask) const {
  return ChannelLayout(expression_dim_, pose_dim_, names_, std::move(mask));
}

const std::vector<std::string>& arkit_blendshape_names() {
  static const std::vector<std::string> names = {
      "eyeBlinkLeft",     "eyeLookDownLeft",   "eyeLookInLeft",     "eyeLookOutLeft",
      "eyeLookUpLeft",    "eyeSquintLeft",     "eyeWideLeft",       "eyeBlinkRight",
      "eyeLookDownRight", "eyeLookInRight",    "eyeLookOutRight",   "eyeLookUpRight",
      "eyeSquintRight",   "eyeWideRight",      "jawForward",        "jawLeft",
      "jawRight",         "jawOpen",           "mouthClose",        "mouthFunnel",
      "mouthPucker",      "mouthLeft",         "mouthRight",        "mouthSmileLeft",
      "mouthSmileRight",  "mouthFrownLeft",    "mouthFrownRight",   "mouthDimpleLeft",
      "mouthDimpleRight", "mouthStretchLeft",  "mouthStretchRight", "mouthRollLower",
      "mouthRollUpper",   "mouthShrugLower",   "mouthShrugUpper",   "mouthPressLeft",
      "mouthPressRight",  "mouthLowerDownLeft", "mouthLowerDownRight", "mouthUpperUpLeft",
      "mouthUpperUpRight", "browDownLeft",     "browDownRight",     "browInnerUp",
      "browOuterUpLeft",  "browOuterUpRight",  "cheekPuff",         "cheekSquintLeft",
      "cheekSquintRight", "noseSneerLeft",     "noseSneerRight",    "tongueOut",
  };
  return names;
}

const std::vector<std::string>& head_pose_names() {
  static const std::vector<std::string> names = {"headPitch", "headYaw", "headRoll",
                                                 "headTx",    "headTy",  "headTz"};
  return names;
}

ChannelLayout default_layout() {
  std::vector<std::string> names = arkit_blendshape_names();
  const auto& pose = head_pose_names();
  names.insert(names.end(), pose.begin(), pose.end());
  std::vector<std::size_t> mouth;
  for (std::size_t i = 0; i < arkit_blendshape_names().size(); ++i) {
    const auto& n = names[i];
    if (n.rfind("mouth", 0) == 0 || n.rfind("jaw", 0) == 0) mouth.push_back(i);
  }
  return ChannelLayout(arkit_blendshape_names().size(), pose.size(), std::move(names),
                       std::move(mouth));
}

nlohmann::json layout_to_json(const ChannelLayout& layout) {
  nlohmann::json j;
  j["expression_dim"] = layout.expression_dim();
  j["pose_dim"] = layout.pose_dim();
  j["channel_names"] = layout.channel_names();
  j["mouth_mask"] = layout.mouth_mask();
  return j;
}

ChannelLayout layout_from_json(const nlohmann::json& j) {
  try {
    return ChannelLayout(j.at("expression_dim").get<std::size_t>(),
                         j.at("pose_dim").get<std::size_t>(),
                         j.at("channel_names").get<std::vector<std::string>>(),
                         j.at("mouth_mask").get<std::vector<std::size_t>>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("layout: ") + e.what());
  }
}

ChannelLayout load_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open layout file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("layout file " + path.string() + ": " + e.what());
  }
  try {
    return layout_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError("layout file " + path.string() + ": " + e.what());
  }
}

void save_layout(const ChannelLayout& layout, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write layout file " + path.string());
  out << layout_to_json(layout).dump(2) << '\n';
}

void validate_style_clip(const EmotionStyleClip& clip, const ChannelLayout& layout) {
  if (clip.sequence.size() < 3) {
    throw ValidationError("style clip '" + clip.clip_id + "' has " +
                          std::to_string(clip.sequence.size()) + " frames; at least 3 required");
  }
  if (static_cast<std::size_t>(clip.sequence.frames.cols()) != layout.dim()) {
    throw DimensionError("style clip '" + clip.clip_id + "' does not match the channel layout");
  }
}

ExpressionFrame clamp_frame(const ExpressionFrame& frame, const ChannelLayout& layout) {
  if (static_cast<std::size_t>(frame.size()) != layout.dim()) {
    throw DimensionError("clamp_frame: frame has " + std::to_string(frame.size()) +
                         " values, layout expects " + std::to_string(layout.dim()));
  }
  ExpressionFrame out = frame;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i])) {
      throw ValidationError("non-finite value in channel '" +
                            layout.channel_names()[static_cast<std::size_t>(i)] + "'");
    }
    if (!layout.is_pose(static_cast<std::size_t>(i))) out[i] = std::clamp(out[i], 0.0, 1.0);
  }
  return out;
}

ExpressionSequence clamp_sequence(const ExpressionSequence& seq, const ChannelLayout& layout) {
  ExpressionSequence out{seq.frames, seq.fps};
  for (Eigen::Index r = 0; r < out.frames.rows(); ++r) {
    out.frames.row(r) = clamp_frame(seq.frames.row(r), layout);
  }
  return out;
}

MouthSplit split_mouth(const ExpressionFrame& frame, const ChannelLayout& layout) {
  if (static_cast<std::size_t>(frame.size()) != layout.dim()) {
    throw DimensionError("split_mouth: frame has " + std::to_string(frame.size()) +
                         " values, layout expects " + std::to_string(layout.dim()));
  }
  MouthSplit parts{RowVector(static_cast<Eigen::Index>(layout.mouth_mask().size())),
                   RowVector(static_cast<Eigen::Index>(layout.non_mouth().size()))};
  Eigen::Index k = 0;
  for (auto i : layout.mouth_mask()) parts.mouth[k++] = frame[static_cast<Eigen::Index>(i)];
  k = 0;
  for (auto i : layout.non_mouth()) parts.other[k++] = frame[static_cast<Eigen::Index>(i)];
  return parts;
}

ExpressionFrame merge_mouth(const MouthSplit& parts, const ChannelLayout& layout) {
  if (static_cast<std::size_t>(parts.mouth.size()) != layout.mouth_mask().size() ||
      static_cast<std::size_t>(parts.other.size()) != layout.non_mouth().size()) {
    throw DimensionError("merge_mouth: part sizes do not match the layout");
  }
  ExpressionFrame frame(static_cast<Eigen::Index>(layout.dim()));
  Eigen::Index k = 0;
  for (auto i : layout.mouth_mask()) frame[static_cast<Eigen::Index>(i)] = parts.mouth[k++];
  k = 0;
  for (auto i : layout.non_mouth()) frame[static_cast<Eigen::Index>(i)] = parts.other[k++];
  return frame;
}

Matrix gather_columns(const Matrix& m, const std::vector<std::size_t>& columns) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] >= static_cast<std::size_t>(m.cols())) {
      throw DimensionError("gather_columns: column index out of range");
    }
    out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(columns[k]));
  }
  return out;
}

void scatter_columns(Matrix& dst, const Matrix& src, const std::vector<std::size_t>& columns) {
  if (src.rows() != dst.rows() || static_cast<std::size_t>(src.cols()) != columns.size()) {
    throw DimensionError("scatter_columns: shape mismatch");
  }
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] >= static_cast<std::size_t>(dst.cols())) {
      throw DimensionError("scatter_columns: column index out of range");
    }
    dst.col(static_cast<Eigen::Index>(columns[k])) = src.col(static_cast<Eigen::Index>(k));
  }
}

}  // namespace facediff
