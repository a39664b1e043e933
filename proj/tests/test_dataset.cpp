#include "facediff/dataset.hpp"
#include "facediff/error.hpp"
#include "facediff/io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>

using namespace facediff;
using testing::TempDir;

namespace {

Clip random_clip(const std::string& id, std::size_t frames, Eigen::Index dim, Eigen::Index audio, Rng& rng) {
  return Clip{id, "neutral", {rng.normal_matrix(static_cast<Eigen::Index>(frames), dim), 25.0},
              {rng.normal_matrix(static_cast<Eigen::Index>(frames), audio), 25.0}};
}

OracleSpec small_spec() {
  OracleSpec s;
  s.clip_count = 6;
  s.frames_per_clip = 64;
  s.audio_dim = 8;
  return s;
}

std::string all_bytes(const std::filesystem::path& dir) {
  std::string out;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out += f.generic_string() + "\n" + read_text_file(dir / f);
  return out;
}

}  // namespace

TEST_CASE("sliding window counts") {
  const ChannelLayout layout = testing::small_layout(4, 2, 1);
  Rng rng(1);
  auto windows = [&](std::size_t frames, std::size_t w, std::size_t stride) {
    const Clip c = random_clip("c", frames, 5, 3, rng);
    return sliding_windows(c.sequence, c.audio, layout, w, stride);
  };
  CHECK(windows(32, 8, 1).size() == 25);
  CHECK(windows(8, 8, 1).size() == 1);
  const auto disjoint = windows(32, 8, 8);
  REQUIRE(disjoint.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(disjoint[k].start == 8 * k);
  CHECK_THROWS_AS(windows(7, 8, 1), DatasetError);

  for (std::size_t frames = 8; frames < 60; frames += 3) {
    for (std::size_t stride = 1; stride < 9; ++stride) {
      CHECK(windows(frames, 8, stride).size() == (frames - 8) / stride + 1);
    }
  }
}

TEST_CASE("sliding windows pair audio with the mouth channels of the same frames") {
  const ChannelLayout layout = testing::small_layout(5, 2, 1);
  Rng rng(2);
  const Clip c = random_clip("c", 20, 6, 3, rng);
  const auto w = sliding_windows(c.sequence, c.audio, layout, 6, 5);
  REQUIRE(w.size() == 3);
  CHECK(w[2].audio == c.audio.feats.middleRows(10, 6));
  CHECK(w[2].mouth == c.sequence.frames.middleRows(10, 6).leftCols(2));
}

TEST_CASE("chunking cuts whole chunks and skips short clips") {
  Rng rng(3);
  std::vector<Clip> clips{random_clip("long", 96, 4, 2, rng), random_clip("short", 31, 4, 2, rng)};
  const ChunkedDataset data = chunk_dataset(clips, 32);
  CHECK(data.chunks.size() == 3);
  REQUIRE(data.warnings.size() == 1);
  CHECK(data.warnings[0].find("short") != std::string::npos);
  CHECK(data.chunks[2].x0 == clips[0].sequence.frames.middleRows(64, 32));
  CHECK(data.initial_state(data.chunks[1]) == clips[0].sequence.frames.row(32));

  CHECK_THROWS_AS(chunk_dataset({clips[1]}, 32), DatasetError);
  CHECK_THROWS_AS(chunk_dataset({}, 32), DatasetError);
}

TEST_CASE("style triples come from the chunk's own clip and are distinct") {
  Rng rng(4);
  std::vector<Clip> clips{random_clip("a", 40, 3, 2, rng), random_clip("b", 40, 3, 2, rng)};
  const ChunkedDataset data = chunk_dataset(clips, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto& chunk = data.chunks[static_cast<std::size_t>(rng.uniform_int(0, 9))];
    const StyleTriple s = data.draw_style(chunk, rng);
    const Matrix& frames = clips[chunk.clip].sequence.frames;
    for (const auto& f : {s[0], s[1], s[2]}) {
      bool found = false;
      for (Eigen::Index r = 0; r < frames.rows(); ++r) found = found || frames.row(r) == f;
      CHECK(found);
    }
    CHECK(s[0] != s[1]);
    CHECK(s[1] != s[2]);
    CHECK(s[0] != s[2]);
  }
}

TEST_CASE("oracle output is byte-identical for a fixed seed") {
  TempDir a("oracle_a"), b("oracle_b"), c("oracle_c");
  const ChannelLayout layout = default_layout();
  OracleSpec spec = small_spec();
  generate_oracle(spec, layout, a.path());
  generate_oracle(spec, layout, b.path());
  CHECK(all_bytes(a.path()) == all_bytes(b.path()));
  spec.seed += 1;
  generate_oracle(spec, layout, c.path());
  CHECK(all_bytes(a.path()) != all_bytes(c.path()));
}

TEST_CASE("oracle map reproduces the stored mouth channels") {
  TempDir dir("oracle_map");
  const ChannelLayout layout = default_layout();
  const OracleSpec spec = small_spec();
  const ClipManifest manifest = generate_oracle(spec, layout, dir.path());
  const OracleMap map = load_oracle_map(dir / "oracle_truth.json");
  const std::vector<Clip> clips = load_clips(load_manifest(dir / "manifest.json"), manifest_layout(manifest));
  REQUIRE(clips.size() == spec.clip_count);
  for (const auto& clip : clips) {
    const Matrix mouth = gather_columns(clip.sequence.frames, layout.mouth_mask());
    CHECK((map.apply(clip.audio.feats, clip.emotion_label) - mouth).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(clip.sequence.size() == spec.frames_per_clip);
    CHECK(clip.audio.dim() == 8);
    const Matrix expr = clip.sequence.frames.leftCols(52);
    CHECK((expr.array() >= 0.0).all());
    CHECK((expr.array() <= 1.0).all());
  }
  CHECK_THROWS_AS(map.apply(clips[0].audio.feats, "bored"), DatasetError);
}

TEST_CASE("least squares on oracle data recovers the audio to mouth map") {
  const ChannelLayout layout = default_layout();
  OracleSpec spec = small_spec();
  spec.clip_count = 8;
  const OracleData data = generate_oracle_data(spec, layout);

  // One intercept column per emotion, then the audio features.
  std::vector<std::string> labels;
  for (const auto& a : spec.archetypes) labels.push_back(a.label);
  const auto rows = static_cast<Eigen::Index>(spec.clip_count * spec.frames_per_clip);
  const auto e = static_cast<Eigen::Index>(labels.size());
  const auto a = static_cast<Eigen::Index>(spec.audio_dim);
  Matrix design = Matrix::Zero(rows, e + a);
  Matrix target(rows, static_cast<Eigen::Index>(layout.mouth_mask().size()));
  Eigen::Index r = 0;
  for (const auto& clip : data.clips) {
    const auto label = std::find(labels.begin(), labels.end(), clip.emotion_label) - labels.begin();
    const auto n = static_cast<Eigen::Index>(clip.sequence.size());
    design.block(r, label, n, 1).setOnes();
    design.block(r, e, n, a) = clip.audio.feats;
    target.middleRows(r, n) = gather_columns(clip.sequence.frames, layout.mouth_mask());
    r += n;
  }
  const Matrix coef = design.colPivHouseholderQr().solve(target);
  const Matrix weights = coef.bottomRows(a).transpose();
  CHECK((weights - data.map.weights).cwiseAbs().maxCoeff() < 1e-6);
  for (Eigen::Index k = 0; k < e; ++k) {
    const RowVector expected = data.map.mouth_base.at(labels[static_cast<std::size_t>(k)]) * data.map.profile;
    CHECK((coef.row(k) - expected).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("blink counts follow Poisson statistics") {
  const ChannelLayout layout = default_layout();
  OracleSpec spec;
  spec.audio_dim = 2;
  spec.frames_per_clip = 250;
  spec.archetypes = {{"calm", 0.3, 0.5, 0.1}};

  // A single 10 s clip at 0.5 Hz: 5 +/- 3 sqrt(5).
  spec.clip_count = 1;
  const OracleData one = generate_oracle_data(spec, layout);
  CHECK(std::abs(static_cast<double>(one.truth[0].blink_count) - 5.0) <= 3.0 * std::sqrt(5.0));

  // The mean over many clips sits within 3 standard errors of 5.
  spec.clip_count = 200;
  const OracleData many = generate_oracle_data(spec, layout);
  double total = 0.0;
  for (const auto& t : many.truth) total += static_cast<double>(t.blink_count);
  CHECK(std::abs(total / 200.0 - 5.0) <= 3.0 * std::sqrt(5.0 / 200.0));

  // A zero rate never blinks.
  spec.archetypes[0].blink_rate_hz = 0.0;
  spec.clip_count = 3;
  for (const auto& t : generate_oracle_data(spec, layout).truth) CHECK(t.blink_count == 0);
}

TEST_CASE("oracle spec validation") {
  OracleSpec s;
  CHECK_NOTHROW(s.validate());
  s.archetypes[0].blink_rate_hz = -0.1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = OracleSpec{};
  s.archetypes[1].brow_amplitude = 1.2;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = OracleSpec{};
  s.archetypes.push_back(s.archetypes[0]);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = OracleSpec{};
  s.clip_count = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("manifest errors") {
  TempDir dir("manifest");
  const ChannelLayout layout = testing::small_layout(3, 1, 0);
  CHECK_THROWS_AS(load_manifest(dir / "none.json"), DatasetError);

  write_text_file(dir / "a.csv", "mouth0,eye1,brow2\n0,0,0\n0,0,0\n0,0,0\n");
  save_feature_matrix(Matrix::Zero(3, 2), dir / "a.feat");
  save_layout(layout, dir / "layout.json");

  ClipManifest m;
  m.layout = "layout.json";
  m.entries.push_back({"a", "happy", "a.csv", "a.feat"});
  save_manifest(m, dir / "ok.json");
  const ClipManifest loaded = load_manifest(dir / "ok.json");
  CHECK(manifest_layout(loaded) == layout);
  const auto clips = load_clips(loaded, layout);
  REQUIRE(clips.size() == 1);
  CHECK(clips[0].sequence.size() == 3);
  CHECK(find_style_clip(clips, "a").emotion_label == "happy");
  try {
    find_style_clip(clips, "zzz");
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("available: a") != std::string::npos);
  }

  m.entries.push_back({"a", "sad", "a.csv", "a.feat"});
  save_manifest(m, dir / "dup.json");
  CHECK_THROWS_AS(load_manifest(dir / "dup.json"), DatasetError);

  m.entries.back() = {"b", "sad", "b.csv", "a.feat"};
  save_manifest(m, dir / "missing.json");
  CHECK_THROWS_AS(load_manifest(dir / "missing.json"), DatasetError);

  write_text_file(dir / "empty.json", R"({"version": 1, "clips": []})");
  CHECK_THROWS_AS(load_manifest(dir / "empty.json"), DatasetError);
  write_text_file(dir / "broken.json", "{");
  CHECK_THROWS_AS(load_manifest(dir / "broken.json"), DatasetError);

  save_feature_matrix(Matrix::Zero(2, 2), dir / "a.feat");
  CHECK_THROWS_AS(load_clips(loaded, layout), DatasetError);
}
