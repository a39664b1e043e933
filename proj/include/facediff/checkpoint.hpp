#pragma once

#include "facediff/denoiser.hpp"
#include "facediff/lip.hpp"
#include "facediff/params.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace facediff {

// Checkpoint container:
//   8-byte magic "FDCKPT01", uint64 header length, UTF-8 JSON header, then
//   the raw little-endian float64 blobs listed in header["blobs"] in order.
// The header carries {format_version, kind, hyperparams, epoch, rng, meta}.
inline constexpr std::string_view kCheckpointMagic = "FDCKPT01";
inline constexpr int kCheckpointVersion = 1;

struct NamedBlob {
  std::string name;
  Vector values;
};

void write_checkpoint_container(const std::filesystem::path& path, nlohmann::json header,
                                const std::vector<NamedBlob>& blobs);

struct CheckpointContainer {
  nlohmann::json header;
  std::vector<NamedBlob> blobs;

  const Vector& blob(std::string_view name) const;
  bool has_blob(std::string_view name) const;
};

CheckpointContainer read_checkpoint_container(const std::filesystem::path& path);

// Optional training state stored next to the parameters.
struct OptimizerSnapshot {
  AdamState adam;
  std::size_t epoch = 0;
  std::string rng_state;
};

void save_denoiser(const std::filesystem::path& path, const DenoiserModel& model,
                   const std::optional<OptimizerSnapshot>& state = std::nullopt,
                   const nlohmann::json& meta = nlohmann::json::object());

struct LoadedDenoiser {
  DenoiserModel model;
  std::optional<OptimizerSnapshot> state;
  nlohmann::json meta;
};

// Throws ValidationError when the file holds a different model kind.
LoadedDenoiser load_denoiser(const std::filesystem::path& path);

void save_lip_model(const std::filesystem::path& path, const LipModel& model,
                    const std::optional<OptimizerSnapshot>& state = std::nullopt,
                    const nlohmann::json& meta = nlohmann::json::object());

struct LoadedLipModel {
  LipModel model;
  std::optional<OptimizerSnapshot> state;
  nlohmann::json meta;
};

LoadedLipModel load_lip_model(const std::filesystem::path& path);

}  // namespace facediff
