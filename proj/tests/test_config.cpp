#include "facediff/config.hpp"
#include "facediff/error.hpp"
#include "facediff/io.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace facediff;
using nlohmann::json;

namespace {

std::string config_error(const json& doc) {
  try {
    parse_run_config(doc, "/base");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults and seed propagation") {
  const RunConfig c = parse_run_config(json{{"version", 1}, {"seed", 42}}, "/base");
  CHECK(c.seed == 42);
  CHECK(c.train.seed == 42);
  CHECK(c.lip_train.seed == 42);
  CHECK(c.sampler.seed == 42);
  CHECK(c.oracle.seed == 42);
  CHECK(c.denoiser_init_seed() == 42);
  CHECK(c.schedule.steps == 1000);
  CHECK(c.sampler.chunk_length == 32);
  CHECK(c.lip_train.window == 8);
  CHECK(c.output_dir == std::filesystem::path("/base/out"));

  const RunConfig d = parse_run_config(json{{"version", 1}, {"seed", 1}, {"sampler", {{"seed", 9}}}}, "/base");
  CHECK(d.sampler.seed == 9);
  CHECK(d.train.seed == 1);
}

TEST_CASE("relative paths resolve against the config directory") {
  const RunConfig c = parse_run_config(
      json{{"version", 1}, {"dataset", {{"manifest", "data/manifest.json"}}}, {"inputs", {{"audio", "/abs/a.wav"}}}},
      "/cfg/dir");
  CHECK(c.manifest == std::filesystem::path("/cfg/dir/data/manifest.json"));
  CHECK(c.inputs.audio == std::filesystem::path("/abs/a.wav"));
}

TEST_CASE("unknown keys and bad values name the key") {
  CHECK(config_error(json{{"version", 1}, {"colour", 3}}).find("colour") != std::string::npos);
  CHECK(config_error(json{{"version", 1}, {"train", {{"epochz", 3}}}}).find("train.epochz") != std::string::npos);
  CHECK(config_error(json{{"version", 1}, {"train", {{"epochs", "many"}}}}).find("train.epochs") != std::string::npos);
  CHECK_FALSE(config_error(json{{"version", 1}, {"sampler", {{"mode", "greedy"}}}}).empty());
  CHECK_FALSE(config_error(json{{"version", 1}, {"sampler", {{"chunk_length", 3}}}}).empty());
  CHECK_FALSE(config_error(json{{"version", 1}, {"schedule", {{"kind", "cosine"}}}}).empty());
  CHECK_FALSE(config_error(json{{"version", 1}, {"schedule", {{"beta_end", 2.0}}}}).empty());
  CHECK_FALSE(config_error(json{{"version", 1}, {"denoiser", {{"width", 30}, {"heads", 4}}}}).empty());
  CHECK_FALSE(config_error(json{{"version", 1}, {"oracle", {{"archetypes", {{{"label", "x"}, {"blink_rate_hz", -1}}}}}}}).empty());
  CHECK_FALSE(config_error(json{{"seed", 1}}).empty());
  CHECK_FALSE(config_error(json{{"version", 2}}).empty());
}

TEST_CASE("resolved config round-trips") {
  json doc = {{"version", 1},
              {"seed", 5},
              {"schedule", {{"steps", 50}, {"beta_end", 0.2}, {"max_terminal_alpha_bar", nullptr}}},
              {"denoiser", {{"layers", 1}, {"heads", 2}, {"width", 16}}},
              {"sampler", {{"guidance", 1.5}, {"mode", "conditional_only"}, {"use_initial_state", false}}},
              {"oracle", {{"clip_count", 3}, {"archetypes", {{{"label", "calm"}, {"blink_rate_hz", 0.2}}}}}},
              {"inputs", {{"style_clip", "clip000"}, {"sequence", "gen.csv"}}},
              {"eval", {{"ablation", true}}}};
  const RunConfig c = parse_run_config(doc, "/base");
  const json once = to_json(c);
  const RunConfig again = parse_run_config(once, "/elsewhere");
  CHECK(to_json(again) == once);
  CHECK(again.inputs.sequence == std::filesystem::path("/base/gen.csv"));
  CHECK_FALSE(again.schedule.max_terminal_alpha_bar.has_value());
  CHECK(again.sampler.mode == GuidanceMode::kConditionalOnly);
  CHECK(again.oracle.archetypes.size() == 1);
  CHECK(again.eval_ablation);

  testing::TempDir dir("cfg");
  RunConfig w = c;
  w.output_dir = dir.path();
  const auto path = write_resolved_config(w, "generate");
  CHECK(path.filename() == "resolved_config.generate.json");
  CHECK(to_json(load_run_config(path)) == to_json(w));
}

TEST_CASE("load_run_config reports unreadable files as config errors") {
  testing::TempDir dir("cfgload");
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ConfigError);
  write_text_file(dir / "bad.json", "{ not json");
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
}
