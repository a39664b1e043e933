#include "facediff/error.hpp"
#include "facediff/lip.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace facediff;

namespace {

LipConfig tiny_lip(Eigen::Index audio = 5, Eigen::Index style = 7, Eigen::Index mouth = 3) {
  LipConfig c;
  c.audio_dim = audio;
  c.style_dim = style;
  c.mouth_dim = mouth;
  c.hidden = 6;
  c.style_channels = 4;
  c.conv_layers = 2;
  c.conv_kernel = 3;
  c.window = 5;
  return c;
}

StyleTriple triple_of(const Matrix& frames) {
  return {frames.row(0), frames.row(1), frames.row(2)};
}

}  // namespace

TEST_CASE("lip config validation") {
  LipConfig c = tiny_lip();
  CHECK_NOTHROW(c.validate());
  c.conv_kernel = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_lip();
  c.mouth_dim = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("prediction shape and determinism") {
  const LipModel a(tiny_lip(), 3);
  const LipModel b(tiny_lip(), 3);
  Rng rng(1);
  const Matrix audio = rng.normal_matrix(9, 5);
  const Matrix style = rng.normal_matrix(3, 7);
  const Matrix y = a.predict(audio, style);
  CHECK(y.rows() == 9);
  CHECK(y.cols() == 3);
  CHECK(y == b.predict(audio, style));
  CHECK_THROWS_AS(a.predict(rng.normal_matrix(9, 4), style), DimensionError);
  CHECK_THROWS_AS(a.predict(audio, rng.normal_matrix(2, 7)), DimensionError);
}

TEST_CASE("lip gradients match central differences per layer type") {
  LipModel model(tiny_lip(), 5);
  Rng rng(6);
  for (Eigen::Index i = 0; i < model.parameters().values().size(); ++i) {
    model.parameters().values()[i] += 0.2 * rng.normal();
  }
  const Matrix audio = rng.normal_matrix(7, 5);
  const Matrix style = rng.normal_matrix(3, 7);
  const testing::Projection proj{rng.normal_matrix(7, 3)};
  LipModel::Cache cache;
  model.forward(audio, style, cache);
  Vector grad = model.parameters().zeros_like();
  model.backward(cache, proj.weights, grad);
  const auto result = testing::gradient_check(
      model.parameters(), grad, [&] { return proj(model.predict(audio, style)); }, 80, rng);
  CHECK(result.checked.size() == 3);
  for (const auto& [type, err] : result.max_rel_error) {
    INFO(type);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("batch loss gradient matches central differences") {
  LipModel model(tiny_lip(), 8);
  Rng rng(9);
  std::vector<LipSample> batch;
  for (int i = 0; i < 3; ++i) {
    batch.push_back({rng.normal_matrix(5, 5), rng.normal_matrix(3, 7), rng.normal_matrix(5, 3)});
  }
  const LipLoss at = lip_loss_and_grad(model, batch);
  const auto result = testing::gradient_check(
      model.parameters(), at.grad, [&] { return lip_loss_and_grad(model, batch).loss; }, 60, rng);
  CHECK(result.worst < 1e-4);
}

TEST_CASE("training data pairs each window with same-clip style frames") {
  const ChannelLayout layout = testing::small_layout(5, 2, 1);
  Rng rng(1);
  std::vector<Clip> clips;
  for (int c = 0; c < 2; ++c) {
    clips.push_back({"c" + std::to_string(c), "x", {rng.normal_matrix(12, 6), 25.0}, {rng.normal_matrix(12, 4), 25.0}});
  }
  const auto samples = build_lip_dataset(clips, layout, 4, 2, rng);
  CHECK(samples.size() == 2 * 5);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Clip& clip = clips[i / 5];
    for (Eigen::Index r = 0; r < 3; ++r) {
      bool found = false;
      for (Eigen::Index f = 0; f < 12; ++f) found = found || samples[i].style.row(r) == clip.sequence.frames.row(f);
      CHECK(found);
    }
    CHECK(samples[i].target.cols() == 2);
  }
  CHECK_THROWS_AS(build_lip_dataset(clips, layout, 20, 1, rng), DatasetError);
}

TEST_CASE("training reduces the loss and is reproducible") {
  Rng rng(2);
  const Matrix map = rng.normal_matrix(5, 3);
  std::vector<LipSample> data;
  for (int i = 0; i < 24; ++i) {
    LipSample s{rng.normal_matrix(5, 5), rng.normal_matrix(3, 7), Matrix()};
    s.target = 0.3 * s.audio * map;
    data.push_back(s);
  }
  LipTrainConfig tc;
  tc.window = 5;
  tc.epochs = 40;
  tc.batch_size = 8;
  tc.learning_rate = 1e-2;
  tc.seed = 3;
  LipModel a(tiny_lip(), 1);
  const LipTrainResult ra = train_lip(a, data, tc);
  CHECK(ra.loss_curve.back() < 0.3 * ra.loss_curve.front());
  LipModel b(tiny_lip(), 1);
  const LipTrainResult rb = train_lip(b, data, tc);
  CHECK(ra.loss_curve == rb.loss_curve);
}

TEST_CASE("refine replaces only the mouth channels") {
  const ChannelLayout layout = testing::small_layout(6, 3, 2);
  LipConfig lc = tiny_lip(4, 8, 3);
  lc.window = 4;
  const LipModel model(lc, 4);
  Rng rng(5);
  const ExpressionSequence base{3.0 * rng.normal_matrix(11, 8), 25.0};
  const AudioFeatureSequence audio{rng.normal_matrix(11, 4), 25.0};
  const Matrix style_frames = rng.normal_matrix(3, 8);
  const std::vector<StyleSegment> segments{{0, triple_of(style_frames)}, {6, triple_of(-style_frames)}};

  const ExpressionSequence out = refine(model, base, audio, segments, layout);
  for (auto c : layout.non_mouth()) {
    CHECK(out.frames.col(static_cast<Eigen::Index>(c)) == base.frames.col(static_cast<Eigen::Index>(c)));
  }
  const Matrix mouth = gather_columns(out.frames, layout.mouth_mask());
  CHECK((mouth.array() >= 0.0).all());
  CHECK((mouth.array() <= 1.0).all());
  CHECK(mouth != gather_columns(base.frames, layout.mouth_mask()));

  // First window alone covers frame 0.
  const Matrix first = model.predict(audio.feats.topRows(4), style_matrix(segments[0].frames));
  CHECK(mouth(0, 1) == doctest::Approx(std::clamp(first(0, 1), 0.0, 1.0)));
}

TEST_CASE("refine with an empty mask returns the input unchanged") {
  const ChannelLayout layout = testing::small_layout(6, 0, 2);
  const LipModel model(tiny_lip(4, 8, 3), 4);
  Rng rng(5);
  const ExpressionSequence base{rng.normal_matrix(9, 8), 25.0};
  const AudioFeatureSequence audio{rng.normal_matrix(9, 4), 25.0};
  const ExpressionSequence out = refine(model, base, audio, {{0, triple_of(base.frames)}}, layout);
  CHECK(out.frames == base.frames);
}

TEST_CASE("refine input checks") {
  const ChannelLayout layout = testing::small_layout(6, 3, 2);
  const LipModel model(tiny_lip(4, 8, 3), 4);
  Rng rng(5);
  const ExpressionSequence base{rng.normal_matrix(9, 8), 25.0};
  const StyleTriple style = triple_of(base.frames);
  CHECK_THROWS_AS(refine(model, base, {rng.normal_matrix(8, 4), 25.0}, {{0, style}}, layout), DimensionError);
  CHECK_THROWS_AS(refine(model, base, {rng.normal_matrix(9, 4), 25.0}, {{2, style}}, layout), ValidationError);
  const ChannelLayout wide = testing::small_layout(6, 4, 2);
  CHECK_THROWS_AS(refine(model, base, {rng.normal_matrix(9, 4), 25.0}, {{0, style}}, wide), DimensionError);
}
