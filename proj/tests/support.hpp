#pragma once

#include "facediff/blendshape.hpp"
#include "facediff/denoiser.hpp"
#include "facediff/lip.hpp"
#include "facediff/params.hpp"
#include "facediff/rng.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace facediff::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("facediff_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Layer type of a parameter, from its registered name.
inline std::string layer_type(const std::string& name) {
  if (name.rfind("embed.", 0) == 0) return "embedding";
  if (name.find("attention") != std::string::npos) return "attention";
  if (name.find("feed_forward") != std::string::npos) return "feed_forward";
  if (name.find("norm") != std::string::npos) return "normalization";
  if (name.rfind("output", 0) == 0) return "output";
  if (name.rfind("lstm", 0) == 0) return "lstm";
  if (name.rfind("conv", 0) == 0) return "conv";
  if (name.rfind("head", 0) == 0) return "head";
  return "other";
}

struct GradCheckResult {
  std::map<std::string, std::size_t> checked;      // coordinates per layer type
  std::map<std::string, double> max_rel_error;     // per layer type
  double worst = 0.0;
};

// Central finite differences on up to `per_type` random coordinates of every
// layer type. `loss` evaluates the scalar objective at the current parameter
// values; `analytic` is its gradient at the starting point.
inline GradCheckResult gradient_check(ParameterSet& params, const Vector& analytic,
                                      const std::function<double()>& loss, std::size_t per_type,
                                      Rng& rng, double h = 1e-5, double floor = 1e-5) {
  std::map<std::string, std::vector<std::size_t>> coords;
  for (const auto& e : params.entries()) {
    auto& list = coords[layer_type(e.name)];
    for (std::size_t k = 0; k < e.size(); ++k) list.push_back(e.offset + k);
  }
  GradCheckResult out;
  Vector& v = params.values();
  for (auto& [type, list] : coords) {
    std::shuffle(list.begin(), list.end(), rng.engine());
    if (list.size() > per_type) list.resize(per_type);
    double worst = 0.0;
    for (auto i : list) {
      const auto idx = static_cast<Eigen::Index>(i);
      const double saved = v[idx];
      v[idx] = saved + h;
      const double up = loss();
      v[idx] = saved - h;
      const double down = loss();
      v[idx] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[idx];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, rel);
    }
    out.checked[type] = list.size();
    out.max_rel_error[type] = worst;
    out.worst = std::max(out.worst, worst);
  }
  return out;
}

// Projects a model output onto fixed random weights so every output entry
// contributes to a scalar loss.
struct Projection {
  Matrix weights;
  double operator()(const Matrix& out) const { return (weights.array() * out.array()).sum(); }
};

inline DenoiserConfig tiny_denoiser_config(Eigen::Index data_dim, Eigen::Index condition_dim,
                                           Eigen::Index width = 16, Eigen::Index layers = 1,
                                           Eigen::Index heads = 2) {
  DenoiserConfig c;
  c.data_dim = data_dim;
  c.condition_dim = condition_dim;
  c.layers = layers;
  c.heads = heads;
  c.width = width;
  return c;
}

// Small layout: `expr` blendshape channels (names "mouthA".. for the first
// `mouth`, "browX"/"eyeX" for the rest) plus `pose` pose channels.
inline ChannelLayout small_layout(std::size_t expr, std::size_t mouth, std::size_t pose) {
  std::vector<std::string> names;
  std::vector<std::size_t> mask;
  for (std::size_t i = 0; i < expr; ++i) {
    if (i < mouth) {
      names.push_back("mouth" + std::to_string(i));
      mask.push_back(i);
    } else if (i % 2 == 0) {
      names.push_back("brow" + std::to_string(i));
    } else {
      names.push_back("eye" + std::to_string(i));
    }
  }
  for (std::size_t p = 0; p < pose; ++p) names.push_back("pose" + std::to_string(p));
  return ChannelLayout(expr, pose, names, mask);
}

}  // namespace facediff::testing
