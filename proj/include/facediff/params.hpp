#pragma once

#include "facediff/rng.hpp"
#include "facediff/tensor.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace facediff {

// Flat parameter vector with a registry of named matrix-shaped slices.
// Gradients and optimizer moments reuse the same layout.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(rows * cols); }
  };

  // Registers a zero-initialised slice; returns its id.
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);

  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry& entry(std::size_t id) const { return entries_.at(id); }

  Vector& values() noexcept { return values_; }
  const Vector& values() const noexcept { return values_; }

  ConstMatrixMap operator[](std::size_t id) const;
  MatrixMap mutable_slice(std::size_t id);
  // The slice `id` of any buffer laid out like the parameters (e.g. a gradient).
  MatrixMap slice_of(Vector& buffer, std::size_t id) const;

  Vector zeros_like() const { return Vector::Zero(values_.size()); }

  void fill_normal(std::size_t id, double stddev, Rng& rng);
  void fill_constant(std::size_t id, double value);

 private:
  std::vector<Entry> entries_;
  Vector values_;
};

struct AdamConfig {
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::size_t step = 0;
};

AdamState make_adam_state(std::size_t parameter_count);
// One bias-corrected adaptive-moment update, no weight decay.
void adam_step(Vector& params, const Vector& grad, AdamState& state, const AdamConfig& config);

}  // namespace facediff
