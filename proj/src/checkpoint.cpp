#include "facediff/checkpoint.hpp"

#include "facediff/error.hpp"
#include "facediff/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace facediff {

namespace fs = std::filesystem;
using nlohmann::json;

void write_checkpoint_container(const fs::path& path, json header, const std::vector<NamedBlob>& blobs) {
  header["format_version"] = kCheckpointVersion;
  header["blobs"] = json::array();
  for (const auto& b : blobs) header["blobs"].push_back({{"name", b.name}, {"size", b.values.size()}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  const auto len = static_cast<std::uint64_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : blobs) {
    out.write(reinterpret_cast<const char*>(b.values.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(b.values.size())));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

const Vector& CheckpointContainer::blob(std::string_view name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return b.values;
  }
  throw ValidationError("checkpoint has no blob '" + std::string(name) + "'");
}

bool CheckpointContainer::has_blob(std::string_view name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return true;
  }
  return false;
}

CheckpointContainer read_checkpoint_container(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() != 8 || std::string_view(magic, 8) != kCheckpointMagic) {
    throw ValidationError(path.string() + " is not a checkpoint file");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ValidationError(path.string() + ": truncated checkpoint header");

  CheckpointContainer c;
  try {
    c.header = json::parse(text);
    if (c.header.at("format_version").get<int>() != kCheckpointVersion) {
      throw ValidationError(path.string() + ": unsupported checkpoint version");
    }
    for (const auto& b : c.header.at("blobs")) {
      NamedBlob blob{b.at("name").get<std::string>(), Vector(b.at("size").get<Eigen::Index>())};
      in.read(reinterpret_cast<char*>(blob.values.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(blob.values.size())));
      if (!in) throw ValidationError(path.string() + ": truncated blob '" + blob.name + "'");
      c.blobs.push_back(std::move(blob));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  return c;
}

namespace {

void append_state(json& header, std::vector<NamedBlob>& blobs, const std::optional<OptimizerSnapshot>& state) {
  if (!state) return;
  header["epoch"] = state->epoch;
  header["rng"] = state->rng_state;
  header["optimizer"] = {{"kind", "adam"}, {"step", state->adam.step}};
  blobs.push_back({"adam.first_moment", state->adam.first_moment});
  blobs.push_back({"adam.second_moment", state->adam.second_moment});
}

std::optional<OptimizerSnapshot> read_state(const CheckpointContainer& c) {
  if (!c.header.contains("optimizer")) return std::nullopt;
  OptimizerSnapshot s;
  s.epoch = c.header.at("epoch").get<std::size_t>();
  s.rng_state = c.header.at("rng").get<std::string>();
  s.adam.step = c.header.at("optimizer").at("step").get<std::size_t>();
  s.adam.first_moment = c.blob("adam.first_moment");
  s.adam.second_moment = c.blob("adam.second_moment");
  return s;
}

void require_kind(const CheckpointContainer& c, const std::string& kind, const fs::path& path) {
  const auto got = c.header.value("kind", std::string());
  if (got != kind) throw ValidationError(path.string() + " holds a '" + got + "' model, expected '" + kind + "'");
}

void copy_parameters(ParameterSet& params, const Vector& values, const fs::path& path) {
  if (values.size() != params.values().size()) {
    throw ValidationError(path.string() + ": parameter count " + std::to_string(values.size()) +
                          " does not match the hyperparameters (" + std::to_string(params.values().size()) + ")");
  }
  params.values() = values;
}

}  // namespace

void save_denoiser(const fs::path& path, const DenoiserModel& model,
                   const std::optional<OptimizerSnapshot>& state, const json& meta) {
  const auto& cfg = model.config();
  json header;
  header["kind"] = "denoiser";
  header["hyperparams"] = {{"data_dim", cfg.data_dim}, {"condition_dim", cfg.condition_dim},
                           {"layers", cfg.layers},     {"heads", cfg.heads},
                           {"width", cfg.width},       {"ff_width", cfg.ff_width}};
  header["meta"] = meta;
  std::vector<NamedBlob> blobs{{"parameters", model.parameters().values()}};
  append_state(header, blobs, state);
  write_checkpoint_container(path, std::move(header), blobs);
}

LoadedDenoiser load_denoiser(const fs::path& path) {
  const auto c = read_checkpoint_container(path);
  require_kind(c, "denoiser", path);
  const auto& h = c.header.at("hyperparams");
  DenoiserConfig cfg;
  cfg.data_dim = h.at("data_dim").get<Eigen::Index>();
  cfg.condition_dim = h.at("condition_dim").get<Eigen::Index>();
  cfg.layers = h.at("layers").get<Eigen::Index>();
  cfg.heads = h.at("heads").get<Eigen::Index>();
  cfg.width = h.at("width").get<Eigen::Index>();
  cfg.ff_width = h.at("ff_width").get<Eigen::Index>();
  LoadedDenoiser out{DenoiserModel(cfg, 0), read_state(c), c.header.value("meta", json::object())};
  copy_parameters(out.model.parameters(), c.blob("parameters"), path);
  return out;
}

void save_lip_model(const fs::path& path, const LipModel& model,
                    const std::optional<OptimizerSnapshot>& state, const json& meta) {
  const auto& cfg = model.config();
  json header;
  header["kind"] = "lip";
  header["hyperparams"] = {{"audio_dim", cfg.audio_dim},   {"style_dim", cfg.style_dim},
                           {"mouth_dim", cfg.mouth_dim},   {"hidden", cfg.hidden},
                           {"style_channels", cfg.style_channels}, {"conv_layers", cfg.conv_layers},
                           {"conv_kernel", cfg.conv_kernel}, {"window", cfg.window}};
  header["meta"] = meta;
  std::vector<NamedBlob> blobs{{"parameters", model.parameters().values()}};
  append_state(header, blobs, state);
  write_checkpoint_container(path, std::move(header), blobs);
}

LoadedLipModel load_lip_model(const fs::path& path) {
  const auto c = read_checkpoint_container(path);
  require_kind(c, "lip", path);
  const auto& h = c.header.at("hyperparams");
  LipConfig cfg;
  cfg.audio_dim = h.at("audio_dim").get<Eigen::Index>();
  cfg.style_dim = h.at("style_dim").get<Eigen::Index>();
  cfg.mouth_dim = h.at("mouth_dim").get<Eigen::Index>();
  cfg.hidden = h.at("hidden").get<Eigen::Index>();
  cfg.style_channels = h.at("style_channels").get<Eigen::Index>();
  cfg.conv_layers = h.at("conv_layers").get<Eigen::Index>();
  cfg.conv_kernel = h.at("conv_kernel").get<Eigen::Index>();
  cfg.window = h.at("window").get<std::size_t>();
  LoadedLipModel out{LipModel(cfg, 0), read_state(c), c.header.value("meta", json::object())};
  copy_parameters(out.model.parameters(), c.blob("parameters"), path);
  return out;
}

}  // namespace facediff
