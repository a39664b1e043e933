#include "facediff/error.hpp"
#include "facediff/metrics.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace facediff;

namespace {

Eigen::VectorXd sinusoid(double hz, std::size_t frames, double fps, double phase = 0.3) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(frames));
  for (Eigen::Index t = 0; t < v.size(); ++t) {
    v[t] = 0.5 + 0.3 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(t) / fps + phase);
  }
  return v;
}

}  // namespace

TEST_CASE("param_lmd of a constant offset") {
  Rng rng(1);
  for (Eigen::Index c : {1, 7, 58}) {
    const ExpressionSequence truth{rng.normal_matrix(12, c), 25.0};
    ExpressionSequence pred = truth;
    pred.frames.array() += 0.1;
    CHECK(param_lmd(pred, truth) == doctest::Approx(0.1 * std::sqrt(static_cast<double>(c))).epsilon(1e-12));
    CHECK(param_lmd(truth, truth) == 0.0);
  }
  CHECK_THROWS_AS(param_lmd({Matrix::Zero(3, 2), 25.0}, {Matrix::Zero(4, 2), 25.0}), DimensionError);
  CHECK_THROWS_AS(param_lmd({Matrix::Zero(0, 2), 25.0}, {Matrix::Zero(0, 2), 25.0}), DimensionError);
}

TEST_CASE("mouth_mse only looks at the mouth channels") {
  const ChannelLayout layout = testing::small_layout(5, 2, 1);
  Rng rng(2);
  const ExpressionSequence truth{rng.normal_matrix(10, 6), 25.0};
  ExpressionSequence pred = truth;
  pred.frames.col(4).array() += 5.0;
  CHECK(mouth_mse(pred, truth, layout) == 0.0);
  pred.frames.col(1).array() += 0.2;
  CHECK(mouth_mse(pred, truth, layout) == doctest::Approx(0.02));
  CHECK(mouth_mse(pred, truth, testing::small_layout(5, 0, 1)) == 0.0);
}

TEST_CASE("high-frequency fraction") {
  const double fps = 25.0;
  CHECK(channel_high_freq_fraction(Eigen::VectorXd::Constant(100, 0.4), fps, 2.0) == 0.0);
  CHECK(channel_high_freq_fraction(sinusoid(5.0, 100, fps), fps, 2.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(channel_high_freq_fraction(sinusoid(0.5, 100, fps), fps, 2.0) < 1e-9);

  // Nyquist-rate alternation is all high frequency.
  Eigen::VectorXd alt(50);
  for (Eigen::Index t = 0; t < alt.size(); ++t) alt[t] = (t % 2) ? 1.0 : 0.0;
  CHECK(channel_high_freq_fraction(alt, fps, 2.0) == doctest::Approx(1.0));

  // Moving-average smoothing lowers the fraction of white noise.
  Rng rng(3);
  Eigen::VectorXd noise(400);
  for (Eigen::Index t = 0; t < noise.size(); ++t) noise[t] = rng.normal();
  Eigen::VectorXd smooth = noise;
  for (Eigen::Index t = 4; t < noise.size(); ++t) smooth[t] = noise.segment(t - 4, 5).mean();
  const double raw = channel_high_freq_fraction(noise, fps, 2.0);
  const double low = channel_high_freq_fraction(smooth, fps, 2.0);
  CHECK(raw > 0.7);
  CHECK(low < raw);

  // Scale and offset invariant.
  CHECK(channel_high_freq_fraction((3.0 * noise.array() + 2.0).matrix(), fps, 2.0) == doctest::Approx(raw));
}

TEST_CASE("eye-region energy reacts to blinks") {
  const ChannelLayout layout = default_layout();
  const auto eyes = eye_region_channels(layout);
  CHECK(eyes.size() == 14 + 5);
  for (auto c : eyes) {
    const auto& n = layout.channel_names()[c];
    CHECK((n.rfind("eye", 0) == 0 || n.rfind("brow", 0) == 0));
  }

  ExpressionSequence seq{Matrix::Zero(100, 58), 25.0};
  for (auto c : eyes) seq.frames.col(static_cast<Eigen::Index>(c)) = sinusoid(0.3, 100, 25.0);
  const double calm = high_freq_energy(seq, eyes);
  seq.frames(50, 0) = 1.0;
  seq.frames(51, 0) = 0.5;
  const double blink = high_freq_energy(seq, eyes);
  CHECK(blink > calm);
}

TEST_CASE("temporal diversity") {
  CHECK(temporal_diversity({Matrix::Constant(10, 3, 0.7), 25.0}) < 1e-12);
  Matrix m(4, 2);
  m << 0, 1, 2, 1, 0, 1, 2, 1;
  CHECK(temporal_diversity({m, 25.0}) == doctest::Approx(0.5));
}

TEST_CASE("report json schema") {
  EvalReport r;
  r.sequences.push_back({"a", 0.5, 0.01, {0.1, 0.3}, 0.3, 0.2, 0.1});
  r.sequences.push_back({"b", std::nullopt, 0.03, {}, 0.0, 0.4, 0.3});
  const nlohmann::json j = r.to_json();
  CHECK(validate_report_json(j).empty());
  CHECK(j["aggregate"]["count"] == 2);
  CHECK(j["aggregate"]["param_lmd"].get<double>() == doctest::Approx(0.5));
  CHECK(j["aggregate"]["mouth_mse"].get<double>() == doctest::Approx(0.02));
  CHECK(j["aggregate"]["continuity_max"].get<double>() == doctest::Approx(0.3));
  CHECK(j["aggregate"]["high_freq_energy"].get<double>() == doctest::Approx(0.3));
  CHECK_FALSE(j["sequences"][1].contains("param_lmd"));

  nlohmann::json bad = j;
  bad["sequences"][0]["diversity"] = "x";
  CHECK(validate_report_json(bad).size() == 1);
  bad = j;
  bad["sequences"][0].erase("name");
  CHECK_FALSE(validate_report_json(bad).empty());
  bad = j;
  bad.erase("aggregate");
  CHECK_FALSE(validate_report_json(bad).empty());
  bad = j;
  bad["version"] = 2;
  CHECK_FALSE(validate_report_json(bad).empty());
  CHECK_FALSE(validate_report_json(nlohmann::json::array()).empty());
  CHECK(validate_report_json(EvalReport{}.to_json()).empty());
}
