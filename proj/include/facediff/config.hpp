#pragma once

#include "facediff/audio.hpp"
#include "facediff/blendshape.hpp"
#include "facediff/dataset.hpp"
#include "facediff/denoiser.hpp"
#include "facediff/diffusion.hpp"
#include "facediff/lip.hpp"
#include "facediff/sampler.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace facediff {

inline constexpr int kRunConfigVersion = 1;

// Architecture knobs only; data and condition widths come from the dataset.
struct DenoiserArch {
  Eigen::Index layers = 4;
  Eigen::Index heads = 4;
  Eigen::Index width = 128;
  Eigen::Index ff_width = 0;
  std::optional<std::uint64_t> init_seed;
};

struct LipArch {
  Eigen::Index hidden = 64;
  Eigen::Index style_channels = 32;
  Eigen::Index conv_layers = 2;
  Eigen::Index conv_kernel = 3;
  std::optional<std::uint64_t> init_seed;
};

struct AudioSection {
  double fps = 25.0;
  LogMelConfig mel;
};

// Command inputs. Paths are absolute after parsing.
struct InputSection {
  std::filesystem::path audio;
  std::string style_clip;
  std::filesystem::path checkpoint;
  std::filesystem::path lip_checkpoint;
  std::filesystem::path sequence;
  std::filesystem::path sidecar;
  std::filesystem::path pred;
  std::filesystem::path baseline;
  std::filesystem::path truth;
  std::filesystem::path oracle_truth;
  std::string emotion_label;
};

struct RunConfig {
  int version = kRunConfigVersion;
  std::uint64_t seed = 0;
  std::filesystem::path layout;  // empty: manifest layout, else default
  ScheduleConfig schedule;
  DenoiserArch denoiser;
  TrainConfig train;
  LipArch lip;
  LipTrainConfig lip_train;
  SamplerConfig sampler;
  std::filesystem::path manifest;
  OracleSpec oracle;
  AudioSection audio;
  std::filesystem::path output_dir = "out";
  InputSection inputs;
  bool eval_ablation = false;

  std::uint64_t denoiser_init_seed() const { return denoiser.init_seed.value_or(seed); }
  std::uint64_t lip_init_seed() const { return lip.init_seed.value_or(seed); }
};

// Unknown keys, wrong types and out-of-range values throw ConfigError naming
// the offending key path. Relative paths resolve against `base_dir`.
// Per-section seeds default to the top-level seed.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Fully explicit document; parse_run_config(to_json(c), any) == c.
nlohmann::json to_json(const RunConfig& config);

// Writes output_dir/resolved_config.<command>.json and returns its path.
std::filesystem::path write_resolved_config(const RunConfig& config, const std::string& command);

}  // namespace facediff
