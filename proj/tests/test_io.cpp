#include "facediff/audio.hpp"
#include "facediff/checkpoint.hpp"
#include "facediff/error.hpp"
#include "facediff/io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace facediff;
using testing::TempDir;

namespace {

Matrix in_unit_range(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

std::string file_bytes(const std::filesystem::path& p) { return read_text_file(p); }

}  // namespace

TEST_CASE("number formatting round-trips exactly") {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::ldexp(rng.normal(), static_cast<int>(rng.uniform_int(-40, 40)));
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(parse_double(format_double(0.1)) == 0.1);
  CHECK(parse_double(" 2.5 ") == 2.5);
  CHECK_THROWS_AS(parse_double("1.0x"), ValidationError);
  CHECK_THROWS_AS(parse_double(""), ValidationError);
  CHECK_THROWS_AS(parse_double("1,0"), ValidationError);
}

TEST_CASE("sequence csv round-trip is bit-exact") {
  TempDir dir("seq");
  const ChannelLayout layout = default_layout();
  Rng rng(2);
  ExpressionSequence seq{in_unit_range(rng, 17, 58), 25.0};
  seq.frames.rightCols(6) = 0.3 * rng.normal_matrix(17, 6);
  save_sequence(seq, layout, dir / "a.csv");
  const ExpressionSequence back = load_sequence(dir / "a.csv", layout);
  CHECK(back.frames == seq.frames);
  CHECK(back.fps == 25.0);

  save_sequence(back, layout, dir / "b.csv");
  CHECK(file_bytes(dir / "a.csv") == file_bytes(dir / "b.csv"));
}

TEST_CASE("sequence parse errors carry line numbers") {
  TempDir dir("seqerr");
  const ChannelLayout layout(2, 1, {"a", "b", "p"}, {0});
  auto load = [&](const std::string& text) {
    write_text_file(dir / "x.csv", text);
    return load_sequence(dir / "x.csv", layout);
  };
  CHECK(load("a,b,p\n0.1,0.2,0.3\r\n\n0,1,-2\n").frames.rows() == 2);

  auto line_of = [&](const std::string& text) -> std::size_t {
    try {
      load(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("a,c,p\n0,0,0\n") == 1);
  CHECK(line_of("a,b\n0,0\n") == 1);
  CHECK(line_of("a,b,p\n0,0,0\n0,0\n") == 3);
  CHECK(line_of("a,b,p\n0,0,0\n0,abc,0\n") == 3);
  CHECK(line_of("a,b,p\n0,nan,0\n") == 2);
  CHECK(line_of("a,b,p\n0,inf,0\n") == 2);
  CHECK(line_of("") == 1);
  CHECK_THROWS_AS(load_sequence(dir / "missing.csv", layout), IoError);
}

TEST_CASE("out-of-range blendshape values warn and optionally clamp") {
  TempDir dir("range");
  const ChannelLayout layout(2, 1, {"a", "b", "p"}, {});
  write_text_file(dir / "x.csv", "a,b,p\n1.5,-0.25,-3\n");
  std::vector<std::string> warnings;
  LoadOptions opts;
  opts.on_warning = [&](const std::string& m) { warnings.push_back(m); };
  const ExpressionSequence raw = load_sequence(dir / "x.csv", layout, opts);
  CHECK(warnings.size() == 2);
  CHECK(raw.frames(0, 0) == 1.5);
  CHECK(raw.frames(0, 2) == -3.0);

  opts.clamp = true;
  const ExpressionSequence clamped = load_sequence(dir / "x.csv", layout, opts);
  CHECK(clamped.frames(0, 0) == 1.0);
  CHECK(clamped.frames(0, 1) == 0.0);
  CHECK(clamped.frames(0, 2) == -3.0);
}

TEST_CASE("save_sequence rejects a layout of the wrong width") {
  TempDir dir("seqw");
  CHECK_THROWS_AS(save_sequence({Matrix::Zero(2, 3), 25.0}, default_layout(), dir / "x.csv"), DimensionError);
}

TEST_CASE("feature matrices round-trip in binary and csv") {
  TempDir dir("feat");
  Rng rng(3);
  const Matrix m = rng.normal_matrix(9, 4);
  save_feature_matrix(m, dir / "m.feat");
  CHECK(load_feature_matrix(dir / "m.feat") == m);
  save_feature_csv(m, dir / "m.csv");
  CHECK(load_feature_matrix(dir / "m.csv") == m);

  const std::string bytes = file_bytes(dir / "m.feat");
  CHECK(bytes.substr(0, 8) == "FDFEAT01");
  CHECK(bytes.size() == 8 + 16 + 9 * 4 * 8);
  write_text_file(dir / "short.feat", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_feature_matrix(dir / "short.feat"), ParseError);
  write_text_file(dir / "bad.csv", "f0,f1\n1,2\n3\n");
  CHECK_THROWS_AS(load_feature_matrix(dir / "bad.csv"), ParseError);
}

TEST_CASE("wav round-trip is exact on the 16-bit grid") {
  TempDir dir("wav");
  Waveform w;
  w.sample_rate = 8000;
  for (int i = 0; i < 1000; ++i) w.samples.push_back(static_cast<double>((i * 37) % 65536 - 32768) / 32768.0);
  write_wav(w, dir / "a.wav");
  const Waveform back = read_wav(dir / "a.wav");
  CHECK(back.sample_rate == 8000);
  CHECK(back.samples == w.samples);

  write_text_file(dir / "junk.wav", "not a wav file at all");
  CHECK_THROWS_AS(read_wav(dir / "junk.wav"), IngestionError);

  // Stereo header.
  std::string bytes = file_bytes(dir / "a.wav");
  bytes[22] = 2;
  write_text_file(dir / "stereo.wav", bytes);
  CHECK_THROWS_AS(read_wav(dir / "stereo.wav"), IngestionError);
}

TEST_CASE("log-mel frame count follows duration times fps") {
  CHECK(frame_count(16000, 16000, 25.0) == 25);
  CHECK(frame_count(15999, 16000, 25.0) == 24);
  CHECK(frame_count(639, 16000, 25.0) == 0);
  CHECK(frame_count(640, 16000, 25.0) == 1);
  CHECK(frame_count(48000, 16000, 30.0) == 90);

  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(16000 * 2 + 100, 0.0);
  const AudioFeatureSequence f = LogMelExtractor{}.extract(w, 25.0);
  CHECK(f.size() == 50);
  CHECK(f.dim() == 29);
  CHECK(f.feats.allFinite());

  w.samples.assign(100, 0.0);
  CHECK_THROWS_AS(LogMelExtractor{}.extract(w, 25.0), IngestionError);
}

TEST_CASE("log-mel energy peaks in the band of a pure tone") {
  LogMelConfig cfg;
  cfg.mel_bands = 20;
  const LogMelExtractor ext(cfg);
  Waveform w;
  w.sample_rate = 16000;
  auto peak_band = [&](double hz) {
    w.samples.resize(16000);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      w.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / 16000.0);
    }
    const AudioFeatureSequence f = ext.extract(w, 25.0);
    Eigen::Index band = 0;
    f.feats.row(12).maxCoeff(&band);
    return band;
  };
  const auto low = peak_band(300.0);
  const auto high = peak_band(4000.0);
  CHECK(low < high);
}

TEST_CASE("audio features dispatch on the file extension") {
  TempDir dir("dispatch");
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(16000, 0.0);
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = 0.1 * std::sin(0.05 * static_cast<double>(i));
  write_wav(w, dir / "a.WAV");
  CHECK(load_audio_features(dir / "a.WAV", 25.0).size() == 25);

  Rng rng(1);
  const Matrix m = rng.normal_matrix(7, 3);
  save_feature_matrix(m, dir / "b.feat");
  const AudioFeatureSequence f = load_audio_features(dir / "b.feat", 30.0);
  CHECK(f.feats == m);
  CHECK(f.fps == 30.0);
  save_feature_matrix(Matrix(0, 3), dir / "empty.feat");
  CHECK_THROWS_AS(load_audio_features(dir / "empty.feat", 25.0), IngestionError);
}

TEST_CASE("denoiser checkpoint round-trip is bit-exact") {
  TempDir dir("ckpt");
  DenoiserModel model(testing::tiny_denoiser_config(5, 9, 16, 2, 2), 11);
  Rng rng(4);
  for (Eigen::Index i = 0; i < model.parameters().values().size(); ++i) model.parameters().values()[i] += rng.normal();

  OptimizerSnapshot state;
  state.adam = make_adam_state(model.parameter_count());
  state.adam.first_moment.setRandom();
  state.adam.second_moment.setRandom();
  state.adam.step = 17;
  state.epoch = 3;
  rng.normal();
  state.rng_state = rng.serialize();

  save_denoiser(dir / "m.ckpt", model, state, {{"note", "x"}});
  const LoadedDenoiser back = load_denoiser(dir / "m.ckpt");
  CHECK(back.model.parameters().values() == model.parameters().values());
  REQUIRE(back.state.has_value());
  CHECK(back.state->adam.first_moment == state.adam.first_moment);
  CHECK(back.state->adam.second_moment == state.adam.second_moment);
  CHECK(back.state->adam.step == 17);
  CHECK(back.state->epoch == 3);
  CHECK(back.meta.at("note") == "x");

  Rng restored = Rng::deserialize(back.state->rng_state);
  CHECK(restored.normal() == rng.normal());

  const Matrix x = rng.normal_matrix(4, 5);
  const Matrix c = rng.normal_matrix(4, 9);
  CHECK(back.model.denoise(x, 9, c) == model.denoise(x, 9, c));

  save_denoiser(dir / "m2.ckpt", back.model, back.state, back.meta);
  CHECK(file_bytes(dir / "m.ckpt") == file_bytes(dir / "m2.ckpt"));
}

TEST_CASE("lip checkpoint round-trip and kind mismatch") {
  TempDir dir("lipckpt");
  LipConfig lc;
  lc.audio_dim = 4;
  lc.style_dim = 6;
  lc.mouth_dim = 2;
  lc.hidden = 5;
  lc.style_channels = 3;
  const LipModel model(lc, 2);
  save_lip_model(dir / "l.ckpt", model);
  const LoadedLipModel back = load_lip_model(dir / "l.ckpt");
  CHECK(back.model.parameters().values() == model.parameters().values());
  CHECK_FALSE(back.state.has_value());
  CHECK(back.model.config().hidden == 5);

  CHECK_THROWS_AS(load_denoiser(dir / "l.ckpt"), ValidationError);
  write_text_file(dir / "junk.ckpt", "FDCKPT0X........");
  CHECK_THROWS(load_lip_model(dir / "junk.ckpt"));
  const std::string bytes = file_bytes(dir / "l.ckpt");
  write_text_file(dir / "cut.ckpt", bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS(load_lip_model(dir / "cut.ckpt"));
}

TEST_CASE("rng state serialisation resumes the stream") {
  Rng a(123);
  for (int i = 0; i < 7; ++i) a.normal();
  Rng b = Rng::deserialize(a.serialize());
  for (int i = 0; i < 50; ++i) {
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform() == b.uniform());
  }
}
