#include "facediff/metrics.hpp"

#include "facediff/error.hpp"

#include <fftw3.h>

#include <cmath>
#include <vector>

namespace facediff {

using nlohmann::json;

namespace {

void require_comparable(const ExpressionSequence& a, const ExpressionSequence& b, const char* what) {
  if (a.frames.rows() != b.frames.rows() || a.frames.cols() != b.frames.cols()) {
    throw DimensionError(std::string(what) + ": sequences differ in length or layout (" +
                         std::to_string(a.frames.rows()) + "x" + std::to_string(a.frames.cols()) + " vs " +
                         std::to_string(b.frames.rows()) + "x" + std::to_string(b.frames.cols()) + ")");
  }
  if (a.size() == 0) throw DimensionError(std::string(what) + ": empty sequences");
}

}  // namespace

double param_lmd(const ExpressionSequence& pred, const ExpressionSequence& truth) {
  require_comparable(pred, truth, "param_lmd");
  return (pred.frames - truth.frames).rowwise().norm().mean();
}

double mouth_mse(const ExpressionSequence& pred, const ExpressionSequence& truth,
                 const ChannelLayout& layout) {
  require_comparable(pred, truth, "mouth_mse");
  if (layout.mouth_mask().empty()) return 0.0;
  const Matrix diff = gather_columns(pred.frames - truth.frames, layout.mouth_mask());
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

double channel_high_freq_fraction(const Eigen::Ref<const Eigen::VectorXd>& values, double fps,
                                  double cutoff_hz) {
  const auto n = static_cast<std::size_t>(values.size());
  if (n < 2) return 0.0;
  std::vector<double> in(n);
  const double mean = values.mean();
  for (std::size_t i = 0; i < n; ++i) in[i] = values[static_cast<Eigen::Index>(i)] - mean;
  std::vector<fftw_complex> out(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  double total = 0.0;
  double high = 0.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    // One-sided spectrum: interior bins stand for two conjugate bins.
    const double weight = (2 * k == n) ? 1.0 : 2.0;
    const double p = weight * (out[k][0] * out[k][0] + out[k][1] * out[k][1]);
    total += p;
    if (static_cast<double>(k) * fps / static_cast<double>(n) > cutoff_hz) high += p;
  }
  // Relative threshold: a constant channel leaves only rounding noise.
  const double scale = values.cwiseAbs().maxCoeff();
  if (total <= 1e-24 * std::max(1.0, scale * scale) * static_cast<double>(n * n)) return 0.0;
  return high / total;
}

std::vector<std::size_t> eye_region_channels(const ChannelLayout& layout) {
  return layout.channels_with_prefix({"eye", "brow"});
}

double high_freq_energy(const ExpressionSequence& seq, const std::vector<std::size_t>& channels,
                        double cutoff_hz) {
  if (channels.empty()) return 0.0;
  double sum = 0.0;
  for (auto c : channels) {
    if (c >= static_cast<std::size_t>(seq.frames.cols())) throw DimensionError("high_freq_energy: bad channel");
    const Eigen::VectorXd col = seq.frames.col(static_cast<Eigen::Index>(c));
    sum += channel_high_freq_fraction(col, seq.fps, cutoff_hz);
  }
  return sum / static_cast<double>(channels.size());
}

double temporal_diversity(const ExpressionSequence& seq) {
  if (seq.size() < 2) return 0.0;
  const RowVector mean = seq.frames.colwise().mean();
  const Matrix centred = seq.frames.rowwise() - mean;
  const RowVector var = centred.colwise().squaredNorm() / static_cast<double>(seq.size());
  return var.array().sqrt().mean();
}

json EvalReport::to_json() const {
  json j;
  j["version"] = 1;
  j["sequences"] = json::array();
  double lmd = 0.0, mse = 0.0, jump = 0.0, hfe = 0.0, div = 0.0;
  std::size_t n_lmd = 0, n_mse = 0, n_jump = 0;
  for (const auto& s : sequences) {
    json e;
    e["name"] = s.name;
    if (s.param_lmd) {
      e["param_lmd"] = *s.param_lmd;
      lmd += *s.param_lmd;
      ++n_lmd;
    }
    if (s.mouth_mse) {
      e["mouth_mse"] = *s.mouth_mse;
      mse += *s.mouth_mse;
      ++n_mse;
    }
    e["continuity_jumps"] = s.continuity_jumps;
    e["continuity_max"] = s.continuity_max;
    if (!s.continuity_jumps.empty()) {
      jump += s.continuity_max;
      ++n_jump;
    }
    e["high_freq_energy"] = s.high_freq_energy;
    e["diversity"] = s.diversity;
    hfe += s.high_freq_energy;
    div += s.diversity;
    j["sequences"].push_back(std::move(e));
  }
  json agg;
  agg["count"] = sequences.size();
  if (n_lmd) agg["param_lmd"] = lmd / static_cast<double>(n_lmd);
  if (n_mse) agg["mouth_mse"] = mse / static_cast<double>(n_mse);
  if (n_jump) agg["continuity_max"] = jump / static_cast<double>(n_jump);
  if (!sequences.empty()) {
    agg["high_freq_energy"] = hfe / static_cast<double>(sequences.size());
    agg["diversity"] = div / static_cast<double>(sequences.size());
  }
  j["aggregate"] = std::move(agg);
  return j;
}

std::vector<std::string> validate_report_json(const json& report) {
  std::vector<std::string> problems;
  auto finite_number = [&](const json& parent, const char* key, const std::string& where, bool required) {
    if (!parent.contains(key)) {
      if (required) problems.push_back(where + ": missing '" + key + "'");
      return;
    }
    const auto& v = parent.at(key);
    if (!v.is_number()) {
      problems.push_back(where + ": '" + key + "' is not a number");
    } else if (!std::isfinite(v.get<double>())) {
      problems.push_back(where + ": '" + key + "' is not finite");
    }
  };

  if (!report.is_object()) return {"report is not an object"};
  if (!report.contains("version") || report.at("version") != 1) problems.push_back("version must be 1");
  if (!report.contains("sequences") || !report.at("sequences").is_array()) {
    problems.push_back("missing 'sequences' array");
  } else {
    std::size_t i = 0;
    for (const auto& s : report.at("sequences")) {
      const std::string where = "sequences[" + std::to_string(i++) + "]";
      if (!s.is_object() || !s.contains("name") || !s.at("name").is_string()) {
        problems.push_back(where + ": missing 'name'");
        continue;
      }
      finite_number(s, "param_lmd", where, false);
      finite_number(s, "mouth_mse", where, false);
      finite_number(s, "continuity_max", where, true);
      finite_number(s, "high_freq_energy", where, true);
      finite_number(s, "diversity", where, true);
      if (!s.contains("continuity_jumps") || !s.at("continuity_jumps").is_array()) {
        problems.push_back(where + ": missing 'continuity_jumps' array");
      } else {
        for (const auto& v : s.at("continuity_jumps")) {
          if (!v.is_number() || !std::isfinite(v.get<double>())) {
            problems.push_back(where + ": non-finite continuity jump");
          }
        }
      }
    }
  }
  if (!report.contains("aggregate") || !report.at("aggregate").is_object()) {
    problems.push_back("missing 'aggregate' object");
  } else {
    const auto& a = report.at("aggregate");
    for (const char* k : {"param_lmd", "mouth_mse", "continuity_max", "high_freq_energy", "diversity"}) {
      finite_number(a, k, "aggregate", false);
    }
  }
  return problems;
}

}  // namespace facediff
