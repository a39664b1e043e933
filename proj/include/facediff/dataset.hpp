#pragma once

#include "facediff/blendshape.hpp"
#include "facediff/conditioning.hpp"
#include "facediff/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace facediff {

struct ClipManifest {
  struct Entry {
    std::string clip_id;
    std::string emotion_label;
    std::filesystem::path sequence;  // relative paths resolve against base_dir
    std::filesystem::path audio;
  };

  std::vector<Entry> entries;
  std::filesystem::path layout;  // optional; empty means the default layout
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

// JSON: {"version": 1, "layout": "...", "clips": [{"clip_id", "emotion_label",
// "sequence", "audio"}, ...]}. Throws DatasetError on duplicate ids or
// missing referenced files.
ClipManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const ClipManifest& manifest, const std::filesystem::path& path);
ChannelLayout manifest_layout(const ClipManifest& manifest);

struct Clip {
  std::string clip_id;
  std::string emotion_label;
  ExpressionSequence sequence;
  AudioFeatureSequence audio;
};

std::vector<Clip> load_clips(const ClipManifest& manifest, const ChannelLayout& layout);

// Throws DatasetError listing the available ids when `clip_id` is unknown.
EmotionStyleClip find_style_clip(const std::vector<Clip>& clips, const std::string& clip_id);

// ---------------------------------------------------------------------------
// Synthetic oracle dataset

struct EmotionArchetype {
  std::string label;
  double brow_amplitude = 0.5;  // [0,1]
  double blink_rate_hz = 0.3;   // >= 0
  double mouth_base = 0.1;      // [0,1]
};

std::vector<EmotionArchetype> default_archetypes();

struct OracleSpec {
  std::uint64_t seed = 7;
  std::size_t clip_count = 8;
  std::size_t frames_per_clip = 96;
  double fps = 25.0;
  std::size_t audio_dim = 29;
  // Smoothing coefficient of the AR(1) processes behind each audio feature.
  double audio_smoothing = 0.85;
  std::vector<EmotionArchetype> archetypes = default_archetypes();

  void validate() const;
};

// Ground-truth audio -> mouth map:
//   mouth_t = mouth_base(label) * profile + audio_t * weights^T.
struct OracleMap {
  Matrix weights;     // |mouth| x audio_dim
  RowVector profile;  // |mouth|
  std::map<std::string, double> mouth_base;

  Matrix apply(const Matrix& audio, const std::string& label) const;
};

struct OracleClipTruth {
  std::string clip_id;
  std::string emotion_label;
  std::size_t blink_count = 0;
};

struct OracleData {
  std::vector<Clip> clips;
  OracleMap map;
  std::vector<OracleClipTruth> truth;
};

// Deterministic in spec.seed. Audio features are squashed AR(1) processes in
// (0,1); mouth channels follow the oracle map exactly; brow/eye channels are
// archetype sinusoids plus Poisson blink pulses; pose channels are slow
// mean-reverting random walks.
OracleData generate_oracle_data(const OracleSpec& spec, const ChannelLayout& layout);

// Writes manifest.json, layout.json, oracle_truth.json, clips/<id>.csv and
// audio/<id>.feat under `dir`. Returns the manifest.
ClipManifest generate_oracle(const OracleSpec& spec, const ChannelLayout& layout,
                             const std::filesystem::path& dir);

OracleMap load_oracle_map(const std::filesystem::path& truth_json);

// ---------------------------------------------------------------------------
// Training views

struct SequenceWindow {
  std::size_t start = 0;
  Matrix audio;  // T_w x A
  Matrix mouth;  // T_w x |mouth|
};

// Windows at offsets 0, stride, ... fully inside the sequence.
// Throws DatasetError when window > |seq|.
std::vector<SequenceWindow> sliding_windows(const ExpressionSequence& seq,
                                            const AudioFeatureSequence& audio,
                                            const ChannelLayout& layout, std::size_t window,
                                            std::size_t stride);

struct TrainingChunk {
  std::size_t clip = 0;
  std::size_t start = 0;
  Matrix x0;
  AudioFeatureSequence audio;
};

struct ChunkedDataset {
  std::vector<Matrix> clip_frames;
  std::vector<TrainingChunk> chunks;
  std::vector<std::string> warnings;

  // Initial state: the chunk's own first frame.
  ExpressionFrame initial_state(const TrainingChunk& chunk) const { return chunk.x0.row(0); }
  // Three distinct frames drawn uniformly from the chunk's clip.
  StyleTriple draw_style(const TrainingChunk& chunk, Rng& rng) const;
};

// Cuts clips into chunks of `frames` at stride `frames`. Shorter clips are
// skipped with a warning. Throws DatasetError when nothing is left.
ChunkedDataset chunk_dataset(const std::vector<Clip>& clips, std::size_t frames);

}  // namespace facediff
