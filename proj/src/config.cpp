#include "facediff/config.hpp"

#include "facediff/error.hpp"
#include "facediff/io.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <type_traits>

namespace facediff {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!doc_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(doc_.at(key), key);
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& out) {
    if (!doc_.contains(key)) return;
    seen_.insert(key);
    const json& v = doc_.at(key);
    if (v.is_null()) {
      out.reset();
    } else {
      out = convert<T>(v, key);
    }
  }

  void read_path(const std::string& key, fs::path& out, const fs::path& base) {
    std::string text;
    read(key, text);
    if (doc_.contains(key)) out = text.empty() ? fs::path{} : resolve(text, base);
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(doc_.at(key), join(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return doc_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + join(key) + "'");
    }
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  static fs::path resolve(const std::string& text, const fs::path& base) {
    fs::path p(text);
    if (p.is_relative()) p = base / p;
    return fs::absolute(p).lexically_normal();
  }

  template <typename T>
  T convert(const json& v, const std::string& key) const {
    const std::string name = join(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("'" + name + "' must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("'" + name + "' must be a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("'" + name + "' must be a number");
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw ConfigError("'" + name + "' must be finite");
      return static_cast<T>(d);
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("'" + name + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
        if (v.get<std::int64_t>() < 0) throw ConfigError("'" + name + "' must be non-negative");
      }
      return static_cast<T>(v.get<std::int64_t>());
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void checked(const std::string& section, F&& validate) {
  try {
    validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("invalid '" + section + "': " + e.what());
  }
}

std::string path_text(const fs::path& p) { return p.empty() ? std::string{} : p.generic_string(); }

std::string mode_name(GuidanceMode m) {
  return m == GuidanceMode::kClassifierFree ? "classifier_free" : "conditional_only";
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  RunConfig c;
  Section root(doc, "");
  if (!doc.contains("version")) throw ConfigError("missing 'version'");
  root.read("version", c.version);
  if (c.version != kRunConfigVersion) {
    throw ConfigError("unsupported config version " + std::to_string(c.version));
  }
  root.read("seed", c.seed);
  root.read_path("layout", c.layout, base_dir);
  root.read_path("output_dir", c.output_dir, base_dir);
  if (!doc.contains("output_dir")) c.output_dir = fs::absolute(base_dir / c.output_dir).lexically_normal();

  c.train.seed = c.seed;
  c.lip_train.seed = c.seed;
  c.sampler.seed = c.seed;
  c.oracle.seed = c.seed;

  if (root.has("schedule")) {
    auto s = root.child("schedule");
    s.read("steps", c.schedule.steps);
    s.read("beta_start", c.schedule.beta_start);
    s.read("beta_end", c.schedule.beta_end);
    std::string kind = "linear";
    s.read("kind", kind);
    if (kind != "linear") throw ConfigError("'schedule.kind' must be \"linear\"");
    s.read("max_terminal_alpha_bar", c.schedule.max_terminal_alpha_bar);
    s.finish();
  }
  checked("schedule", [&] { (void)build_schedule(c.schedule); });

  if (root.has("denoiser")) {
    auto s = root.child("denoiser");
    s.read("layers", c.denoiser.layers);
    s.read("heads", c.denoiser.heads);
    s.read("width", c.denoiser.width);
    s.read("ff_width", c.denoiser.ff_width);
    s.read("init_seed", c.denoiser.init_seed);
    s.finish();
  }
  checked("denoiser", [&] {
    DenoiserConfig probe;
    probe.layers = c.denoiser.layers;
    probe.heads = c.denoiser.heads;
    probe.width = c.denoiser.width;
    probe.ff_width = c.denoiser.ff_width;
    probe.validate();
  });

  if (root.has("train")) {
    auto s = root.child("train");
    s.read("epochs", c.train.epochs);
    s.read("batch_size", c.train.batch_size);
    s.read("learning_rate", c.train.learning_rate);
    s.read("drop_prob", c.train.drop_prob);
    s.read("chunk_length", c.train.chunk_length);
    s.read("seed", c.train.seed);
    s.finish();
  }
  checked("train", [&] { c.train.validate(); });

  if (root.has("lip")) {
    auto s = root.child("lip");
    s.read("hidden", c.lip.hidden);
    s.read("style_channels", c.lip.style_channels);
    s.read("conv_layers", c.lip.conv_layers);
    s.read("conv_kernel", c.lip.conv_kernel);
    s.read("init_seed", c.lip.init_seed);
    s.finish();
  }
  if (root.has("lip_train")) {
    auto s = root.child("lip_train");
    s.read("window", c.lip_train.window);
    s.read("epochs", c.lip_train.epochs);
    s.read("batch_size", c.lip_train.batch_size);
    s.read("learning_rate", c.lip_train.learning_rate);
    s.read("stride", c.lip_train.stride);
    s.read("seed", c.lip_train.seed);
    s.finish();
  }
  checked("lip_train", [&] { c.lip_train.validate(); });
  checked("lip", [&] {
    LipConfig probe;
    probe.hidden = c.lip.hidden;
    probe.style_channels = c.lip.style_channels;
    probe.conv_layers = c.lip.conv_layers;
    probe.conv_kernel = c.lip.conv_kernel;
    probe.window = c.lip_train.window;
    probe.validate();
  });

  if (root.has("sampler")) {
    auto s = root.child("sampler");
    s.read("chunk_length", c.sampler.chunk_length);
    s.read("guidance", c.sampler.guidance);
    s.read("seed", c.sampler.seed);
    s.read("step", c.sampler.step);
    std::string mode = mode_name(c.sampler.mode);
    s.read("mode", mode);
    if (mode == "classifier_free") {
      c.sampler.mode = GuidanceMode::kClassifierFree;
    } else if (mode == "conditional_only") {
      c.sampler.mode = GuidanceMode::kConditionalOnly;
    } else {
      throw ConfigError("'sampler.mode' must be \"classifier_free\" or \"conditional_only\"");
    }
    s.read("use_initial_state", c.sampler.use_initial_state);
    s.finish();
  }
  checked("sampler", [&] { c.sampler.validate(); });

  if (root.has("dataset")) {
    auto s = root.child("dataset");
    s.read_path("manifest", c.manifest, base_dir);
    s.finish();
  }

  if (root.has("oracle")) {
    auto s = root.child("oracle");
    s.read("seed", c.oracle.seed);
    s.read("clip_count", c.oracle.clip_count);
    s.read("frames_per_clip", c.oracle.frames_per_clip);
    s.read("fps", c.oracle.fps);
    s.read("audio_dim", c.oracle.audio_dim);
    s.read("audio_smoothing", c.oracle.audio_smoothing);
    if (s.has("archetypes")) {
      const json& list = s.raw("archetypes");
      if (!list.is_array()) throw ConfigError("'oracle.archetypes' must be an array");
      c.oracle.archetypes.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        Section a(list[i], "oracle.archetypes[" + std::to_string(i) + "]");
        EmotionArchetype arch;
        a.read("label", arch.label);
        a.read("brow_amplitude", arch.brow_amplitude);
        a.read("blink_rate_hz", arch.blink_rate_hz);
        a.read("mouth_base", arch.mouth_base);
        a.finish();
        c.oracle.archetypes.push_back(arch);
      }
    }
    s.finish();
  }
  checked("oracle", [&] { c.oracle.validate(); });

  if (root.has("audio")) {
    auto s = root.child("audio");
    s.read("fps", c.audio.fps);
    s.read("mel_bands", c.audio.mel.mel_bands);
    s.read("fft_size", c.audio.mel.fft_size);
    s.read("min_hz", c.audio.mel.min_hz);
    s.read("max_hz", c.audio.mel.max_hz);
    s.read("log_floor", c.audio.mel.log_floor);
    s.finish();
  }
  if (!(c.audio.fps > 0.0)) throw ConfigError("'audio.fps' must be positive");
  checked("audio", [&] { LogMelExtractor probe(c.audio.mel); });

  if (root.has("inputs")) {
    auto s = root.child("inputs");
    s.read_path("audio", c.inputs.audio, base_dir);
    s.read("style_clip", c.inputs.style_clip);
    s.read_path("checkpoint", c.inputs.checkpoint, base_dir);
    s.read_path("lip_checkpoint", c.inputs.lip_checkpoint, base_dir);
    s.read_path("sequence", c.inputs.sequence, base_dir);
    s.read_path("sidecar", c.inputs.sidecar, base_dir);
    s.read_path("pred", c.inputs.pred, base_dir);
    s.read_path("baseline", c.inputs.baseline, base_dir);
    s.read_path("truth", c.inputs.truth, base_dir);
    s.read_path("oracle_truth", c.inputs.oracle_truth, base_dir);
    s.read("emotion_label", c.inputs.emotion_label);
    s.finish();
  }
  if (root.has("eval")) {
    auto s = root.child("eval");
    s.read("ablation", c.eval_ablation);
    s.finish();
  }
  root.finish();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(doc, fs::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
  json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["layout"] = path_text(c.layout);
  j["output_dir"] = path_text(c.output_dir);
  j["schedule"] = {{"steps", c.schedule.steps},
                   {"beta_start", c.schedule.beta_start},
                   {"beta_end", c.schedule.beta_end},
                   {"kind", "linear"},
                   {"max_terminal_alpha_bar", c.schedule.max_terminal_alpha_bar
                                                  ? json(*c.schedule.max_terminal_alpha_bar)
                                                  : json(nullptr)}};
  j["denoiser"] = {{"layers", c.denoiser.layers},
                   {"heads", c.denoiser.heads},
                   {"width", c.denoiser.width},
                   {"ff_width", c.denoiser.ff_width},
                   {"init_seed", c.denoiser_init_seed()}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"drop_prob", c.train.drop_prob},
                {"chunk_length", c.train.chunk_length},
                {"seed", c.train.seed}};
  j["lip"] = {{"hidden", c.lip.hidden},
              {"style_channels", c.lip.style_channels},
              {"conv_layers", c.lip.conv_layers},
              {"conv_kernel", c.lip.conv_kernel},
              {"init_seed", c.lip_init_seed()}};
  j["lip_train"] = {{"window", c.lip_train.window},
                    {"epochs", c.lip_train.epochs},
                    {"batch_size", c.lip_train.batch_size},
                    {"learning_rate", c.lip_train.learning_rate},
                    {"stride", c.lip_train.stride},
                    {"seed", c.lip_train.seed}};
  j["sampler"] = {{"chunk_length", c.sampler.chunk_length},
                  {"guidance", c.sampler.guidance},
                  {"seed", c.sampler.seed},
                  {"step", c.sampler.step},
                  {"mode", mode_name(c.sampler.mode)},
                  {"use_initial_state", c.sampler.use_initial_state}};
  j["dataset"] = {{"manifest", path_text(c.manifest)}};
  json archetypes = json::array();
  for (const auto& a : c.oracle.archetypes) {
    archetypes.push_back({{"label", a.label},
                          {"brow_amplitude", a.brow_amplitude},
                          {"blink_rate_hz", a.blink_rate_hz},
                          {"mouth_base", a.mouth_base}});
  }
  j["oracle"] = {{"seed", c.oracle.seed},
                 {"clip_count", c.oracle.clip_count},
                 {"frames_per_clip", c.oracle.frames_per_clip},
                 {"fps", c.oracle.fps},
                 {"audio_dim", c.oracle.audio_dim},
                 {"audio_smoothing", c.oracle.audio_smoothing},
                 {"archetypes", archetypes}};
  j["audio"] = {{"fps", c.audio.fps},
                {"mel_bands", c.audio.mel.mel_bands},
                {"fft_size", c.audio.mel.fft_size},
                {"min_hz", c.audio.mel.min_hz},
                {"max_hz", c.audio.mel.max_hz},
                {"log_floor", c.audio.mel.log_floor}};
  j["inputs"] = {{"audio", path_text(c.inputs.audio)},
                 {"style_clip", c.inputs.style_clip},
                 {"checkpoint", path_text(c.inputs.checkpoint)},
                 {"lip_checkpoint", path_text(c.inputs.lip_checkpoint)},
                 {"sequence", path_text(c.inputs.sequence)},
                 {"sidecar", path_text(c.inputs.sidecar)},
                 {"pred", path_text(c.inputs.pred)},
                 {"baseline", path_text(c.inputs.baseline)},
                 {"truth", path_text(c.inputs.truth)},
                 {"oracle_truth", path_text(c.inputs.oracle_truth)},
                 {"emotion_label", c.inputs.emotion_label}};
  j["eval"] = {{"ablation", c.eval_ablation}};
  return j;
}

fs::path write_resolved_config(const RunConfig& config, const std::string& command) {
  const fs::path out = config.output_dir / ("resolved_config." + command + ".json");
  write_text_file(out, to_json(config).dump(2) + "\n");
  return out;
}

}  // namespace facediff
