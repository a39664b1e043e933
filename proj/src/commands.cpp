#include "facediff/cli.hpp"

#include "facediff/audio.hpp"
#include "facediff/checkpoint.hpp"
#include "facediff/config.hpp"
#include "facediff/dataset.hpp"
#include "facediff/error.hpp"
#include "facediff/io.hpp"
#include "facediff/metrics.hpp"
#include "facediff/sampler.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace facediff::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> guidance;
  bool no_initial_state = false;
  bool ablation = false;
  std::string audio, style_clip, checkpoint, lip_checkpoint, sequence, sidecar;
  std::string pred, baseline, truth, oracle_truth, emotion_label;
};

fs::path absolute_path(const std::string& s) { return fs::absolute(s).lexically_normal(); }

RunConfig load_with_overrides(const Overrides& o) {
  RunConfig c = load_run_config(o.config);
  if (!o.output_dir.empty()) c.output_dir = absolute_path(o.output_dir);
  if (!o.audio.empty()) c.inputs.audio = absolute_path(o.audio);
  if (!o.style_clip.empty()) c.inputs.style_clip = o.style_clip;
  if (!o.checkpoint.empty()) c.inputs.checkpoint = absolute_path(o.checkpoint);
  if (!o.lip_checkpoint.empty()) c.inputs.lip_checkpoint = absolute_path(o.lip_checkpoint);
  if (!o.sequence.empty()) c.inputs.sequence = absolute_path(o.sequence);
  if (!o.sidecar.empty()) c.inputs.sidecar = absolute_path(o.sidecar);
  if (!o.pred.empty()) c.inputs.pred = absolute_path(o.pred);
  if (!o.baseline.empty()) c.inputs.baseline = absolute_path(o.baseline);
  if (!o.truth.empty()) c.inputs.truth = absolute_path(o.truth);
  if (!o.oracle_truth.empty()) c.inputs.oracle_truth = absolute_path(o.oracle_truth);
  if (!o.emotion_label.empty()) c.inputs.emotion_label = o.emotion_label;
  if (o.guidance) c.sampler.guidance = *o.guidance;
  if (o.no_initial_state) c.sampler.use_initial_state = false;
  if (o.seed) c.sampler.seed = *o.seed;
  if (o.ablation) c.eval_ablation = true;
  c.sampler.validate();
  fs::create_directories(c.output_dir);
  return c;
}

void require_input(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("missing 'inputs.") + key + "'");
  if (!fs::exists(p)) throw IoError(std::string("inputs.") + key + ": no such file " + p.string());
}

ClipManifest require_manifest(const RunConfig& c) {
  if (c.manifest.empty()) throw DatasetError("no dataset configured ('dataset.manifest')");
  if (!fs::exists(c.manifest)) throw DatasetError("dataset manifest not found: " + c.manifest.string());
  return load_manifest(c.manifest);
}

ChannelLayout resolve_layout(const RunConfig& c, const ClipManifest* manifest) {
  if (!c.layout.empty()) return load_layout(c.layout);
  if (manifest) return manifest_layout(*manifest);
  return default_layout();
}

json schedule_json(const ScheduleConfig& s) {
  return {{"steps", s.steps},
          {"beta_start", s.beta_start},
          {"beta_end", s.beta_end},
          {"kind", "linear"},
          {"max_terminal_alpha_bar",
           s.max_terminal_alpha_bar ? json(*s.max_terminal_alpha_bar) : json(nullptr)}};
}

ScheduleConfig schedule_from_json(const json& j) {
  ScheduleConfig s;
  s.steps = j.at("steps").get<std::size_t>();
  s.beta_start = j.at("beta_start").get<double>();
  s.beta_end = j.at("beta_end").get<double>();
  const auto& bound = j.at("max_terminal_alpha_bar");
  s.max_terminal_alpha_bar = bound.is_null() ? std::nullopt : std::optional<double>(bound.get<double>());
  return s;
}

void write_curve(const fs::path& path, const std::vector<double>& curve) {
  std::string text = "epoch,loss\n";
  for (std::size_t e = 0; e < curve.size(); ++e) {
    text += std::to_string(e + 1) + "," + format_double(curve[e]) + "\n";
  }
  write_text_file(path, text);
}

AudioFeatureSequence read_audio(const RunConfig& c) {
  require_input(c.inputs.audio, "audio");
  const LogMelExtractor extractor(c.audio.mel);
  return load_audio_features(c.inputs.audio, c.audio.fps, &extractor);
}

EmotionStyleClip require_style(const RunConfig& c, const ChannelLayout& layout) {
  if (c.inputs.style_clip.empty()) throw ConfigError("missing 'inputs.style_clip'");
  const ClipManifest manifest = require_manifest(c);
  return find_style_clip(load_clips(manifest, layout), c.inputs.style_clip);
}

int cmd_oracle_gen(const RunConfig& c) {
  const ChannelLayout layout = resolve_layout(c, nullptr);
  const ClipManifest m = generate_oracle(c.oracle, layout, c.output_dir);
  spdlog::info("oracle dataset: {} clips written to {}", m.entries.size(), c.output_dir.string());
  return kExitOk;
}

int cmd_train_diffusion(const RunConfig& c) {
  const ClipManifest manifest = require_manifest(c);
  const ChannelLayout layout = resolve_layout(c, &manifest);
  const auto clips = load_clips(manifest, layout);
  const ChunkedDataset data = chunk_dataset(clips, c.train.chunk_length);
  for (const auto& w : data.warnings) spdlog::warn("{}", w);

  const auto audio_dim = static_cast<Eigen::Index>(clips.front().audio.dim());
  DenoiserConfig dc;
  dc.data_dim = static_cast<Eigen::Index>(layout.dim());
  dc.condition_dim = dc.data_dim + 1 + audio_dim;
  dc.layers = c.denoiser.layers;
  dc.heads = c.denoiser.heads;
  dc.width = c.denoiser.width;
  dc.ff_width = c.denoiser.ff_width;
  DenoiserModel model(dc, c.denoiser_init_seed());
  const NoiseSchedule schedule = build_schedule(c.schedule);
  spdlog::info("training denoiser: {} parameters, {} chunks", model.parameter_count(), data.chunks.size());

  const TrainResult result = train_denoiser(model, data, c.train, schedule, [](std::size_t e, double loss) {
    spdlog::debug("epoch {} loss {}", e, loss);
  });
  spdlog::info("final epoch loss {}", result.loss_curve.back());

  const json meta = {{"layout", layout_to_json(layout)},
                     {"schedule", schedule_json(c.schedule)},
                     {"audio_dim", audio_dim},
                     {"chunk_length", c.train.chunk_length},
                     {"fps", clips.front().sequence.fps}};
  const OptimizerSnapshot snap{result.state.optimizer, result.state.epoch, result.state.rng.serialize()};
  save_denoiser(c.output_dir / "denoiser.ckpt", model, snap, meta);
  write_curve(c.output_dir / "loss_curve.csv", result.loss_curve);
  return kExitOk;
}

int cmd_train_lip(const RunConfig& c) {
  const ClipManifest manifest = require_manifest(c);
  const ChannelLayout layout = resolve_layout(c, &manifest);
  if (layout.mouth_mask().empty()) throw ConfigError("train-lip: layout has an empty mouth mask");
  const auto clips = load_clips(manifest, layout);
  Rng data_rng(c.lip_train.seed);
  const auto samples = build_lip_dataset(clips, layout, c.lip_train.window, c.lip_train.stride, data_rng);

  LipConfig lc;
  lc.audio_dim = static_cast<Eigen::Index>(clips.front().audio.dim());
  lc.style_dim = static_cast<Eigen::Index>(layout.dim());
  lc.mouth_dim = static_cast<Eigen::Index>(layout.mouth_mask().size());
  lc.hidden = c.lip.hidden;
  lc.style_channels = c.lip.style_channels;
  lc.conv_layers = c.lip.conv_layers;
  lc.conv_kernel = c.lip.conv_kernel;
  lc.window = c.lip_train.window;
  LipModel model(lc, c.lip_init_seed());
  spdlog::info("training lip model: {} parameters, {} windows", model.parameter_count(), samples.size());

  const LipTrainResult result = train_lip(model, samples, c.lip_train, [](std::size_t e, double loss) {
    spdlog::debug("epoch {} loss {}", e, loss);
  });
  spdlog::info("final epoch loss {}", result.loss_curve.back());

  const json meta = {{"layout", layout_to_json(layout)}, {"fps", clips.front().sequence.fps}};
  const OptimizerSnapshot snap{result.optimizer, result.epoch, result.rng.serialize()};
  save_lip_model(c.output_dir / "lip.ckpt", model, snap, meta);
  write_curve(c.output_dir / "lip_loss_curve.csv", result.loss_curve);
  return kExitOk;
}

int cmd_generate(const RunConfig& c) {
  require_input(c.inputs.checkpoint, "checkpoint");
  const LoadedDenoiser loaded = load_denoiser(c.inputs.checkpoint);
  const ChannelLayout layout = layout_from_json(loaded.meta.at("layout"));
  const NoiseSchedule schedule = build_schedule(schedule_from_json(loaded.meta.at("schedule")));
  const EmotionStyleClip style = require_style(c, layout);
  const AudioFeatureSequence audio = read_audio(c);
  const auto audio_dim = loaded.meta.at("audio_dim").get<std::size_t>();
  if (audio.dim() != audio_dim) {
    throw DimensionError("audio features have " + std::to_string(audio.dim()) +
                         " columns; the checkpoint expects " + std::to_string(audio_dim));
  }
  const auto trained_n = loaded.meta.value("chunk_length", c.sampler.chunk_length);
  if (trained_n != c.sampler.chunk_length) {
    spdlog::warn("sampler chunk_length {} differs from the trained chunk length {}",
                 c.sampler.chunk_length, trained_n);
  }

  Rng rng(c.sampler.seed);
  const LongSampleResult result =
      long_term_sample(as_noise_model(loaded.model), audio, style, c.sampler, schedule, rng);
  save_sequence(clamp_sequence(result.sequence, layout), layout, c.output_dir / "generated.csv");

  json chunks = json::array();
  for (const auto& ch : result.chunks) {
    chunks.push_back({{"start", ch.start}, {"style_indices", ch.style_indices}});
  }
  const json sidecar = {{"fps", result.sequence.fps},
                        {"frames", result.sequence.size()},
                        {"layout", layout_to_json(layout)},
                        {"seed", c.sampler.seed},
                        {"guidance", c.sampler.guidance},
                        {"chunk_length", c.sampler.chunk_length},
                        {"step", c.sampler.chunk_step()},
                        {"use_initial_state", c.sampler.use_initial_state},
                        {"style_clip", style.clip_id},
                        {"initial_style_index", result.initial_style_index},
                        {"chunk_boundaries", result.boundaries()},
                        {"chunks", chunks}};
  write_text_file(c.output_dir / "generated.json", sidecar.dump(2) + "\n");
  spdlog::info("generated {} frames in {} chunks", result.sequence.size(), result.chunks.size());
  return kExitOk;
}

std::vector<StyleSegment> style_segments(const RunConfig& c, const EmotionStyleClip& style) {
  auto triple = [&](const std::vector<std::size_t>& idx) {
    for (auto i : idx) {
      if (i >= style.sequence.size()) throw ValidationError("sidecar style index out of range");
    }
    return StyleTriple{style.sequence.frame(idx[0]), style.sequence.frame(idx[1]),
                       style.sequence.frame(idx[2])};
  };
  std::vector<StyleSegment> out;
  if (!c.inputs.sidecar.empty()) {
    const json side = json::parse(read_text_file(c.inputs.sidecar));
    for (const auto& ch : side.at("chunks")) {
      out.push_back({ch.at("start").get<std::size_t>(),
                     triple(ch.at("style_indices").get<std::vector<std::size_t>>())});
    }
    if (out.empty()) throw ValidationError("sidecar lists no chunks");
    return out;
  }
  Rng rng(c.sampler.seed);
  out.push_back({0, triple(rng.sample_distinct(style.sequence.size(), 3))});
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

// Rewrites only the mouth fields so every other byte of the input survives.
std::string splice_mouth_text(const std::string& original, const ExpressionSequence& refined,
                              const ChannelLayout& layout) {
  std::string out;
  out.reserve(original.size());
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < original.size()) {
    std::size_t end = original.find('\n', pos);
    const bool has_newline = end != std::string::npos;
    if (!has_newline) end = original.size();
    std::string line = original.substr(pos, end - pos);
    const bool cr = !line.empty() && line.back() == '\r';
    if (cr) line.pop_back();
    if (line_no > 0 && !line.empty() && !layout.mouth_mask().empty()) {
      auto fields = split_fields(line);
      const std::size_t row = line_no - 1;
      for (auto ch : layout.mouth_mask()) {
        fields[ch] = format_double(refined.frames(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(ch)));
      }
      line.clear();
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        line += fields[i];
      }
    }
    out += line;
    if (cr) out += '\r';
    if (has_newline) out += '\n';
    pos = end + 1;
    ++line_no;
  }
  return out;
}

int cmd_refine(const RunConfig& c) {
  require_input(c.inputs.lip_checkpoint, "lip_checkpoint");
  require_input(c.inputs.sequence, "sequence");
  const LoadedLipModel lip = load_lip_model(c.inputs.lip_checkpoint);
  const ChannelLayout layout =
      c.layout.empty() ? layout_from_json(lip.meta.at("layout")) : load_layout(c.layout);
  LoadOptions opts;
  opts.fps = c.audio.fps;
  const ExpressionSequence base = load_sequence(c.inputs.sequence, layout, opts);

  ExpressionSequence refined = base;
  if (!layout.mouth_mask().empty()) {
    const EmotionStyleClip style = require_style(c, layout);
    const AudioFeatureSequence audio = read_audio(c);
    refined = refine(lip.model, base, audio, style_segments(c, style), layout);
  }
  const std::string original = read_text_file(c.inputs.sequence);
  write_text_file(c.output_dir / "refined.csv", splice_mouth_text(original, refined, layout));

  std::vector<std::string> names;
  for (auto ch : layout.mouth_mask()) names.push_back(layout.channel_names()[ch]);
  const json sidecar = {{"source", c.inputs.sequence.generic_string()},
                        {"replaced_channels", names},
                        {"replaced_indices", layout.mouth_mask()},
                        {"frames", base.size()}};
  write_text_file(c.output_dir / "refined.json", sidecar.dump(2) + "\n");
  spdlog::info("refined {} mouth channels over {} frames", names.size(), base.size());
  return kExitOk;
}

SequenceMetrics sequence_metrics(const std::string& name, const ExpressionSequence& seq,
                                 const ChannelLayout& layout, const std::vector<std::size_t>& boundaries) {
  SequenceMetrics m;
  m.name = name;
  const ContinuityReport jumps = continuity_jump(seq, boundaries);
  m.continuity_jumps = jumps.per_boundary;
  m.continuity_max = jumps.global_max;
  m.high_freq_energy = high_freq_energy(seq, eye_region_channels(layout));
  m.diversity = temporal_diversity(seq);
  return m;
}

int cmd_eval(const RunConfig& c) {
  require_input(c.inputs.pred, "pred");
  std::optional<ClipManifest> manifest;
  if (!c.manifest.empty() && fs::exists(c.manifest)) manifest = load_manifest(c.manifest);
  const ChannelLayout layout = resolve_layout(c, manifest ? &*manifest : nullptr);
  LoadOptions opts;
  opts.fps = c.audio.fps;
  const ExpressionSequence pred = load_sequence(c.inputs.pred, layout, opts);

  std::vector<std::size_t> boundaries;
  if (!c.inputs.sidecar.empty()) {
    const json side = json::parse(read_text_file(c.inputs.sidecar));
    boundaries = side.at("chunk_boundaries").get<std::vector<std::size_t>>();
  }

  EvalReport report;
  SequenceMetrics pm = sequence_metrics("pred", pred, layout, boundaries);
  if (!c.inputs.truth.empty()) {
    const ExpressionSequence truth = load_sequence(c.inputs.truth, layout, opts);
    pm.param_lmd = param_lmd(pred, truth);
    pm.mouth_mse = mouth_mse(pred, truth, layout);
  } else if (!c.inputs.oracle_truth.empty()) {
    if (c.inputs.emotion_label.empty()) throw ConfigError("oracle evaluation needs 'inputs.emotion_label'");
    const OracleMap map = load_oracle_map(c.inputs.oracle_truth);
    const AudioFeatureSequence audio = read_audio(c);
    if (audio.size() != pred.size()) {
      throw DimensionError("oracle evaluation: audio has " + std::to_string(audio.size()) +
                           " frames, prediction has " + std::to_string(pred.size()));
    }
    const Matrix target = map.apply(audio.feats, c.inputs.emotion_label);
    const Matrix diff = gather_columns(pred.frames, layout.mouth_mask()) - target;
    pm.mouth_mse = diff.squaredNorm() / static_cast<double>(diff.size());
  }
  report.sequences.push_back(pm);

  if (!c.inputs.baseline.empty()) {
    const ExpressionSequence base = load_sequence(c.inputs.baseline, layout, opts);
    report.sequences.push_back(sequence_metrics("baseline", base, layout, boundaries));
  }

  const json doc = report.to_json();
  write_text_file(c.output_dir / "eval_report.json", doc.dump(2) + "\n");
  const auto problems = validate_report_json(doc);
  for (const auto& p : problems) spdlog::error("eval report: {}", p);
  return problems.empty() ? kExitOk : kExitFailure;
}

int cmd_eval_ablation(const RunConfig& c) {
  if (c.inputs.baseline.empty() || c.inputs.sidecar.empty()) {
    throw ConfigError("ablation mode needs 'inputs.baseline' and 'inputs.sidecar'");
  }
  const int code = cmd_eval(c);
  const json report = json::parse(read_text_file(c.output_dir / "eval_report.json"));
  const json side = json::parse(read_text_file(c.inputs.sidecar));
  const auto boundaries = side.at("chunk_boundaries").get<std::vector<std::size_t>>();
  const auto& seqs = report.at("sequences");
  const auto pred = seqs.at(0).at("continuity_jumps").get<std::vector<double>>();
  const auto base = seqs.at(1).at("continuity_jumps").get<std::vector<double>>();
  std::string text = "boundary,frame,pred_jump,baseline_jump\n";
  for (std::size_t k = 0; k < boundaries.size(); ++k) {
    text += std::to_string(k + 1) + "," + std::to_string(boundaries[k]) + "," + format_double(pred[k]) +
            "," + format_double(base[k]) + "\n";
  }
  write_text_file(c.output_dir / "boundary_jumps.csv", text);
  return code;
}

void configure_logging() {
  spdlog::set_pattern("[%l] %v");
  if (const char* level = std::getenv("FACEDIFF_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

}  // namespace

int run(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Emotion-conditioned facial blendshape diffusion"};
  app.require_subcommand(1);
  Overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (JSON)")->required();
    sub->add_option("--output-dir", o.output_dir, "Override the configured output directory");
  };
  auto* oracle = app.add_subcommand("oracle-gen", "Write the synthetic oracle dataset");
  common(oracle);
  auto* train = app.add_subcommand("train-diffusion", "Train the sequence denoiser");
  common(train);
  auto* train_lip = app.add_subcommand("train-lip", "Train the mouth refinement model");
  common(train_lip);
  auto* generate = app.add_subcommand("generate", "Sample a sequence for an audio track");
  common(generate);
  generate->add_option("--audio", o.audio, "Audio (.wav) or precomputed feature file");
  generate->add_option("--style-clip", o.style_clip, "Style clip id from the dataset");
  generate->add_option("--checkpoint", o.checkpoint, "Denoiser checkpoint");
  generate->add_option("--seed", o.seed, "Sampler seed");
  generate->add_option("--guidance", o.guidance, "Guidance weight w");
  generate->add_flag("--no-initial-state", o.no_initial_state, "Disable initial-state conditioning");
  auto* refine_cmd = app.add_subcommand("refine", "Regenerate the mouth channels of a sequence");
  common(refine_cmd);
  refine_cmd->add_option("--sequence", o.sequence, "Sequence CSV to refine");
  refine_cmd->add_option("--audio", o.audio, "Audio (.wav) or precomputed feature file");
  refine_cmd->add_option("--style-clip", o.style_clip, "Style clip id from the dataset");
  refine_cmd->add_option("--lip-checkpoint", o.lip_checkpoint, "Lip model checkpoint");
  refine_cmd->add_option("--sidecar", o.sidecar, "Sidecar of the generate run (style draws)");
  auto* eval = app.add_subcommand("eval", "Compute evaluation metrics");
  common(eval);
  eval->add_option("--pred", o.pred, "Predicted sequence CSV");
  eval->add_option("--truth", o.truth, "Ground-truth sequence CSV");
  eval->add_option("--baseline", o.baseline, "Second prediction (ablation run)");
  eval->add_option("--sidecar", o.sidecar, "Sidecar with chunk boundaries");
  eval->add_option("--oracle-truth", o.oracle_truth, "oracle_truth.json for mouth evaluation");
  eval->add_option("--audio", o.audio, "Audio features for oracle evaluation");
  eval->add_option("--emotion-label", o.emotion_label, "Emotion label for oracle evaluation");
  eval->add_flag("--ablation", o.ablation, "Write the boundary-jump curve of pred vs baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    const RunConfig config = load_with_overrides(o);
    write_resolved_config(config, name);
    if (name == "oracle-gen") return cmd_oracle_gen(config);
    if (name == "train-diffusion") return cmd_train_diffusion(config);
    if (name == "train-lip") return cmd_train_lip(config);
    if (name == "generate") return cmd_generate(config);
    if (name == "refine") return cmd_refine(config);
    if (name == "eval") return config.eval_ablation ? cmd_eval_ablation(config) : cmd_eval(config);
    return kExitUsage;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitUsage;
  } catch (const DatasetError& e) {
    spdlog::error("dataset error: {}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}

}  // namespace facediff::cli
