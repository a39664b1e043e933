#include "facediff/dataset.hpp"

#include "facediff/error.hpp"
#include "facediff/io.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace facediff {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path ClipManifest::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

ClipManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw DatasetError("manifest not found: " + path.string());
  ClipManifest m;
  m.base_dir = path.parent_path();
  try {
    const json j = json::parse(read_text_file(path));
    if (j.at("version").get<int>() != 1) throw DatasetError("manifest: unsupported version");
    if (j.contains("layout")) m.layout = j.at("layout").get<std::string>();
    std::set<std::string> ids;
    for (const auto& c : j.at("clips")) {
      ClipManifest::Entry e{c.at("clip_id").get<std::string>(), c.at("emotion_label").get<std::string>(),
                            c.at("sequence").get<std::string>(), c.at("audio").get<std::string>()};
      if (!ids.insert(e.clip_id).second) throw DatasetError("manifest: duplicate clip_id '" + e.clip_id + "'");
      for (const auto& f : {e.sequence, e.audio}) {
        if (!fs::exists(m.resolve(f))) {
          throw DatasetError("manifest: clip '" + e.clip_id + "' references missing file " +
                             m.resolve(f).string());
        }
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DatasetError("manifest " + path.string() + ": " + e.what());
  }
  if (m.entries.empty()) throw DatasetError("manifest " + path.string() + " lists no clips");
  return m;
}

void save_manifest(const ClipManifest& manifest, const fs::path& path) {
  json j;
  j["version"] = 1;
  if (!manifest.layout.empty()) j["layout"] = manifest.layout.generic_string();
  j["clips"] = json::array();
  for (const auto& e : manifest.entries) {
    j["clips"].push_back({{"clip_id", e.clip_id},
                          {"emotion_label", e.emotion_label},
                          {"sequence", e.sequence.generic_string()},
                          {"audio", e.audio.generic_string()}});
  }
  write_text_file(path, j.dump(2) + "\n");
}

ChannelLayout manifest_layout(const ClipManifest& manifest) {
  if (manifest.layout.empty()) return default_layout();
  return load_layout(manifest.resolve(manifest.layout));
}

std::vector<Clip> load_clips(const ClipManifest& manifest, const ChannelLayout& layout) {
  if (manifest.entries.empty()) throw DatasetError("empty manifest");
  std::vector<Clip> clips;
  for (const auto& e : manifest.entries) {
    Clip c{e.clip_id, e.emotion_label, load_sequence(manifest.resolve(e.sequence), layout),
           AudioFeatureSequence{load_feature_matrix(manifest.resolve(e.audio)), 25.0}};
    if (c.audio.size() != c.sequence.size()) {
      throw DatasetError("clip '" + e.clip_id + "': " + std::to_string(c.sequence.size()) +
                         " frames but " + std::to_string(c.audio.size()) + " audio rows");
    }
    clips.push_back(std::move(c));
  }
  return clips;
}

EmotionStyleClip find_style_clip(const std::vector<Clip>& clips, const std::string& clip_id) {
  for (const auto& c : clips) {
    if (c.clip_id == clip_id) return EmotionStyleClip{c.sequence, c.emotion_label, c.clip_id};
  }
  std::string ids;
  for (const auto& c : clips) ids += (ids.empty() ? "" : ", ") + c.clip_id;
  throw DatasetError("unknown style clip '" + clip_id + "'; available: " + ids);
}

// ---------------------------------------------------------------------------

std::vector<EmotionArchetype> default_archetypes() {
  return {{"neutral", 0.15, 0.3, 0.05},
          {"happy", 0.45, 0.4, 0.2},
          {"angry", 0.8, 0.2, 0.1},
          {"sad", 0.6, 0.5, 0.02}};
}

void OracleSpec::validate() const {
  if (clip_count < 1 || frames_per_clip < 1 || audio_dim < 1 || !(fps > 0.0)) {
    throw ConfigError("oracle: clip_count, frames_per_clip, audio_dim and fps must be positive");
  }
  if (!(audio_smoothing >= 0.0 && audio_smoothing < 1.0)) {
    throw ConfigError("oracle: audio_smoothing must lie in [0,1)");
  }
  if (archetypes.empty()) throw ConfigError("oracle: at least one emotion archetype required");
  std::set<std::string> labels;
  for (const auto& a : archetypes) {
    if (!labels.insert(a.label).second) throw ConfigError("oracle: duplicate archetype '" + a.label + "'");
    if (!(a.blink_rate_hz >= 0.0)) throw ConfigError("oracle: blink rate must be >= 0");
    for (double v : {a.brow_amplitude, a.mouth_base}) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("oracle: amplitudes must lie in [0,1]");
    }
    if (a.mouth_base > 0.4) throw ConfigError("oracle: mouth_base above 0.4 can leave [0,1]");
  }
}

Matrix OracleMap::apply(const Matrix& audio, const std::string& label) const {
  auto it = mouth_base.find(label);
  if (it == mouth_base.end()) throw DatasetError("oracle map has no emotion '" + label + "'");
  Matrix out = audio * weights.transpose();
  out.rowwise() += it->second * profile;
  return out;
}

namespace {

// Total weight of each mouth row; with audio in (0,1) and mouth_base <= 0.4
// mouth values stay inside [0, 1].
constexpr double kMouthRowWeight = 0.55;

OracleMap make_oracle_map(const OracleSpec& spec, std::size_t mouth_dim, Rng& rng) {
  OracleMap map;
  map.weights.resize(static_cast<Eigen::Index>(mouth_dim), static_cast<Eigen::Index>(spec.audio_dim));
  map.profile.resize(static_cast<Eigen::Index>(mouth_dim));
  for (Eigen::Index j = 0; j < map.weights.rows(); ++j) {
    // Fourth powers make each row dominated by a few features.
    for (Eigen::Index k = 0; k < map.weights.cols(); ++k) map.weights(j, k) = std::pow(rng.uniform(), 4);
    map.weights.row(j) *= kMouthRowWeight / map.weights.row(j).sum();
    map.profile[j] = 0.2 + 0.8 * rng.uniform();
  }
  for (const auto& a : spec.archetypes) map.mouth_base[a.label] = a.mouth_base;
  return map;
}

Matrix smooth_audio(const OracleSpec& spec, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(spec.frames_per_clip);
  const auto a = static_cast<Eigen::Index>(spec.audio_dim);
  const double rho = spec.audio_smoothing;
  const double innov = std::sqrt(1.0 - rho * rho);
  Matrix feats(n, a);
  for (Eigen::Index k = 0; k < a; ++k) {
    double u = rng.normal();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (t) u = rho * u + innov * rng.normal();
      feats(t, k) = 0.5 + 0.5 * std::tanh(u);
    }
  }
  return feats;
}

struct BlinkTrack {
  std::vector<double> values;
  std::size_t count = 0;
};

// Poisson blink onsets; each blink is a triangular pulse of half-width 0.1 s.
BlinkTrack blink_track(double rate_hz, std::size_t frames, double fps, Rng& rng) {
  BlinkTrack track{std::vector<double>(frames, 0.0), 0};
  const double duration = static_cast<double>(frames) / fps;
  if (rate_hz <= 0.0) return track;
  constexpr double half_width = 0.1;
  double when = rng.exponential(rate_hz);
  while (when < duration) {
    ++track.count;
    for (std::size_t f = 0; f < frames; ++f) {
      const double t = static_cast<double>(f) / fps;
      track.values[f] = std::max(track.values[f], 1.0 - std::abs(t - when) / half_width);
    }
    when += rng.exponential(rate_hz);
  }
  return track;
}

// Which brow channels an archetype drives: index into {down, innerUp, outerUp}.
int brow_pattern(const std::string& label, std::size_t archetype_index) {
  if (label == "angry") return 0;
  if (label == "sad" || label == "fear" || label == "surprised") return 1;
  if (label == "happy") return 2;
  return static_cast<int>(archetype_index % 3);
}

}  // namespace

OracleData generate_oracle_data(const OracleSpec& spec, const ChannelLayout& layout) {
  spec.validate();
  Rng rng(spec.seed);
  OracleData data;
  data.map = make_oracle_map(spec, layout.mouth_mask().size(), rng);

  auto find = [&](std::initializer_list<const char*> names) {
    std::vector<Eigen::Index> out;
    for (const char* n : names) {
      const auto& cn = layout.channel_names();
      auto it = std::find(cn.begin(), cn.end(), n);
      if (it != cn.end() && !layout.is_mouth(static_cast<std::size_t>(it - cn.begin()))) {
        out.push_back(static_cast<Eigen::Index>(it - cn.begin()));
      }
    }
    return out;
  };
  const auto blink = find({"eyeBlinkLeft", "eyeBlinkRight"});
  const std::vector<Eigen::Index> brows[3] = {find({"browDownLeft", "browDownRight"}),
                                              find({"browInnerUp"}),
                                              find({"browOuterUpLeft", "browOuterUpRight"})};
  const auto squint = find({"eyeSquintLeft", "eyeSquintRight", "cheekSquintLeft", "cheekSquintRight"});
  const auto gaze = find({"eyeLookUpLeft", "eyeLookUpRight", "eyeLookDownLeft", "eyeLookDownRight"});
  const auto sneer = find({"noseSneerLeft", "noseSneerRight"});

  const auto n = static_cast<Eigen::Index>(spec.frames_per_clip);
  const double dt = 1.0 / spec.fps;
  for (std::size_t c = 0; c < spec.clip_count; ++c) {
    const std::size_t ai = c % spec.archetypes.size();
    const EmotionArchetype& arch = spec.archetypes[ai];
    char id[32];
    std::snprintf(id, sizeof(id), "clip%03zu", c);

    Clip clip;
    clip.clip_id = id;
    clip.emotion_label = arch.label;
    clip.audio = AudioFeatureSequence{smooth_audio(spec, rng), spec.fps};
    clip.sequence.fps = spec.fps;
    Matrix& x = clip.sequence.frames;
    x = Matrix::Zero(n, static_cast<Eigen::Index>(layout.dim()));

    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    const double brow_freq = 0.3 + 0.3 * rng.uniform();
    const int pattern = brow_pattern(arch.label, ai);
    for (Eigen::Index t = 0; t < n; ++t) {
      const double time = static_cast<double>(t) * dt;
      const double wave = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * brow_freq * time + phase);
      for (int p = 0; p < 3; ++p) {
        const double level = p == pattern ? arch.brow_amplitude * (0.6 + 0.4 * wave) : 0.05 * wave;
        for (auto ch : brows[p]) x(t, ch) = level;
      }
      for (auto ch : squint) x(t, ch) = 0.25 * arch.brow_amplitude * (0.8 + 0.2 * wave);
      for (auto ch : gaze) x(t, ch) = 0.1 * (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * 0.2 * time + 2.0 * phase));
      for (auto ch : sneer) x(t, ch) = pattern == 0 ? 0.3 * arch.brow_amplitude : 0.0;
    }
    const BlinkTrack blinks = blink_track(arch.blink_rate_hz, spec.frames_per_clip, spec.fps, rng);
    for (Eigen::Index t = 0; t < n; ++t) {
      for (auto ch : blink) x(t, ch) = blinks.values[static_cast<std::size_t>(t)];
    }

    // Pose: mean-reverting random walks; rotations in radians.
    for (std::size_t p = layout.expression_dim(); p < layout.dim(); ++p) {
      const bool rotation = p - layout.expression_dim() < 3;
      const double step = rotation ? 0.01 : 0.05;
      double v = 0.0;
      for (Eigen::Index t = 0; t < n; ++t) {
        v = 0.97 * v + step * rng.normal();
        x(t, static_cast<Eigen::Index>(p)) = v;
      }
    }

    for (Eigen::Index t = 0; t < n; ++t) {
      for (std::size_t ch = 0; ch < layout.expression_dim(); ++ch) {
        auto& v = x(t, static_cast<Eigen::Index>(ch));
        v = std::clamp(v, 0.0, 1.0);
      }
    }
    scatter_columns(x, data.map.apply(clip.audio.feats, arch.label), layout.mouth_mask());

    data.truth.push_back(OracleClipTruth{clip.clip_id, clip.emotion_label, blinks.count});
    data.clips.push_back(std::move(clip));
  }
  return data;
}

ClipManifest generate_oracle(const OracleSpec& spec, const ChannelLayout& layout, const fs::path& dir) {
  const OracleData data = generate_oracle_data(spec, layout);
  std::error_code ec;
  fs::create_directories(dir / "clips", ec);
  fs::create_directories(dir / "audio", ec);
  if (ec) throw IoError("cannot create oracle output directory " + dir.string() + ": " + ec.message());

  ClipManifest manifest;
  manifest.base_dir = dir;
  manifest.layout = "layout.json";
  save_layout(layout, dir / "layout.json");
  for (const auto& clip : data.clips) {
    ClipManifest::Entry e{clip.clip_id, clip.emotion_label, fs::path("clips") / (clip.clip_id + ".csv"),
                          fs::path("audio") / (clip.clip_id + ".feat")};
    save_sequence(clip.sequence, layout, dir / e.sequence);
    save_feature_matrix(clip.audio.feats, dir / e.audio);
    manifest.entries.push_back(std::move(e));
  }
  save_manifest(manifest, dir / "manifest.json");

  json truth;
  truth["version"] = 1;
  truth["seed"] = spec.seed;
  truth["mouth_channels"] = json::array();
  for (auto i : layout.mouth_mask()) truth["mouth_channels"].push_back(layout.channel_names()[i]);
  truth["weights"] = json::array();
  for (Eigen::Index j = 0; j < data.map.weights.rows(); ++j) {
    std::vector<double> row(data.map.weights.row(j).begin(), data.map.weights.row(j).end());
    truth["weights"].push_back(row);
  }
  truth["profile"] = std::vector<double>(data.map.profile.begin(), data.map.profile.end());
  truth["mouth_base"] = data.map.mouth_base;
  truth["clips"] = json::array();
  for (const auto& c : data.truth) {
    truth["clips"].push_back(
        {{"clip_id", c.clip_id}, {"emotion_label", c.emotion_label}, {"blink_count", c.blink_count}});
  }
  write_text_file(dir / "oracle_truth.json", truth.dump(2) + "\n");
  return manifest;
}

OracleMap load_oracle_map(const fs::path& truth_json) {
  try {
    const json j = json::parse(read_text_file(truth_json));
    OracleMap map;
    const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw DatasetError("oracle map has no weights");
    map.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows[0].size()) throw DatasetError("oracle map: ragged weights");
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        map.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    const auto profile = j.at("profile").get<std::vector<double>>();
    map.profile = Eigen::Map<const RowVector>(profile.data(), static_cast<Eigen::Index>(profile.size()));
    map.mouth_base = j.at("mouth_base").get<std::map<std::string, double>>();
    return map;
  } catch (const json::exception& e) {
    throw DatasetError("oracle truth " + truth_json.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

std::vector<SequenceWindow> sliding_windows(const ExpressionSequence& seq,
                                            const AudioFeatureSequence& audio,
                                            const ChannelLayout& layout, std::size_t window,
                                            std::size_t stride) {
  if (window < 1 || stride < 1) throw ValidationError("sliding_windows: window and stride must be >= 1");
  if (window > seq.size()) {
    throw DatasetError("sequence of " + std::to_string(seq.size()) + " frames is too short for window " +
                       std::to_string(window));
  }
  if (audio.size() != seq.size()) throw DimensionError("sliding_windows: audio/sequence length mismatch");
  const Matrix mouth = gather_columns(seq.frames, layout.mouth_mask());
  std::vector<SequenceWindow> out;
  const auto w = static_cast<Eigen::Index>(window);
  for (std::size_t s = 0; s + window <= seq.size(); s += stride) {
    const auto r = static_cast<Eigen::Index>(s);
    out.push_back(SequenceWindow{s, audio.feats.middleRows(r, w), mouth.middleRows(r, w)});
  }
  return out;
}

StyleTriple ChunkedDataset::draw_style(const TrainingChunk& chunk, Rng& rng) const {
  const Matrix& frames = clip_frames.at(chunk.clip);
  const auto idx = rng.sample_distinct(static_cast<std::size_t>(frames.rows()), 3);
  return {frames.row(static_cast<Eigen::Index>(idx[0])), frames.row(static_cast<Eigen::Index>(idx[1])),
          frames.row(static_cast<Eigen::Index>(idx[2]))};
}

ChunkedDataset chunk_dataset(const std::vector<Clip>& clips, std::size_t frames) {
  if (clips.empty()) throw DatasetError("chunk_dataset: empty manifest");
  if (frames < 4) throw ValidationError("chunk_dataset: chunk length must be >= 4");
  ChunkedDataset data;
  const auto n = static_cast<Eigen::Index>(frames);
  for (const auto& clip : clips) {
    if (clip.sequence.size() < frames) {
      data.warnings.push_back("clip '" + clip.clip_id + "' has " + std::to_string(clip.sequence.size()) +
                              " frames (< " + std::to_string(frames) + "); skipped");
      spdlog::warn("{}", data.warnings.back());
      continue;
    }
    if (clip.audio.size() < clip.sequence.size()) {
      throw DatasetError("clip '" + clip.clip_id + "' has fewer audio rows than frames");
    }
    const std::size_t index = data.clip_frames.size();
    data.clip_frames.push_back(clip.sequence.frames);
    for (std::size_t s = 0; s + frames <= clip.sequence.size(); s += frames) {
      const auto r = static_cast<Eigen::Index>(s);
      data.chunks.push_back(TrainingChunk{index, s, clip.sequence.frames.middleRows(r, n),
                                          AudioFeatureSequence{clip.audio.feats.middleRows(r, n), clip.audio.fps}});
    }
  }
  if (data.chunks.empty()) throw DatasetError("chunk_dataset: no clip is long enough for chunks of " +
                                              std::to_string(frames));
  return data;
}

}  // namespace facediff
