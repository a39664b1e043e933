#pragma once

#include "facediff/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace facediff {

// Seeded random source. Owns the engine and the normal-distribution cache so
// the full state can be checkpointed and restored.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  double exponential(double rate) { return std::exponential_distribution<double>(rate)(engine_); }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);

  // `count` distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t count);

  std::mt19937_64& engine() noexcept { return engine_; }

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace facediff
