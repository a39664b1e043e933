#pragma once

#include "facediff/blendshape.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace facediff {

// Mean over frames of the L2 norm of the per-frame channel difference; a
// parameter-space stand-in for whole-face landmark distance.
double param_lmd(const ExpressionSequence& pred, const ExpressionSequence& truth);

// Mean squared error over the mouth-masked channels.
double mouth_mse(const ExpressionSequence& pred, const ExpressionSequence& truth,
                 const ChannelLayout& layout);

// Fraction of a channel's temporal spectral power (mean removed) above
// `cutoff_hz`. A constant channel scores 0.
double channel_high_freq_fraction(const Eigen::Ref<const Eigen::VectorXd>& values, double fps,
                                  double cutoff_hz);

// Eye and brow channels (names starting with "eye" or "brow").
std::vector<std::size_t> eye_region_channels(const ChannelLayout& layout);

// Average of channel_high_freq_fraction over `channels`.
double high_freq_energy(const ExpressionSequence& seq, const std::vector<std::size_t>& channels,
                        double cutoff_hz = 2.0);

// Mean over channels of the temporal standard deviation.
double temporal_diversity(const ExpressionSequence& seq);

struct SequenceMetrics {
  std::string name;
  std::optional<double> param_lmd;
  std::optional<double> mouth_mse;
  std::vector<double> continuity_jumps;
  double continuity_max = 0.0;
  double high_freq_energy = 0.0;
  double diversity = 0.0;
};

struct EvalReport {
  std::vector<SequenceMetrics> sequences;

  // Aggregates: mean of each metric over the sequences that carry it.
  nlohmann::json to_json() const;
};

// Checks the report shape and that every metric is finite. Returns the list
// of problems; empty means valid.
std::vector<std::string> validate_report_json(const nlohmann::json& report);

}  // namespace facediff
