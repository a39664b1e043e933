#include "facediff/params.hpp"

#include "facediff/error.hpp"

#include <cmath>

namespace facediff {

std::size_t ParameterSet::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) throw DimensionError("parameter '" + name + "' has an empty shape");
  Entry e{std::move(name), rows, cols, static_cast<std::size_t>(values_.size())};
  const Eigen::Index old = values_.size();
  values_.conservativeResize(old + rows * cols);
  values_.segment(old, rows * cols).setZero();
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

ConstMatrixMap ParameterSet::operator[](std::size_t id) const {
  const auto& e = entries_.at(id);
  return ConstMatrixMap(values_.data() + e.offset, e.rows, e.cols);
}

MatrixMap ParameterSet::mutable_slice(std::size_t id) {
  const auto& e = entries_.at(id);
  return MatrixMap(values_.data() + e.offset, e.rows, e.cols);
}

MatrixMap ParameterSet::slice_of(Vector& buffer, std::size_t id) const {
  if (buffer.size() != values_.size()) throw DimensionError("buffer does not match parameter layout");
  const auto& e = entries_.at(id);
  return MatrixMap(buffer.data() + e.offset, e.rows, e.cols);
}

void ParameterSet::fill_normal(std::size_t id, double stddev, Rng& rng) {
  auto m = mutable_slice(id);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = stddev * rng.normal();
  }
}

void ParameterSet::fill_constant(std::size_t id, double value) { mutable_slice(id).setConstant(value); }

AdamState make_adam_state(std::size_t parameter_count) {
  const auto n = static_cast<Eigen::Index>(parameter_count);
  return AdamState{Vector::Zero(n), Vector::Zero(n), 0};
}

void adam_step(Vector& params, const Vector& grad, AdamState& state, const AdamConfig& config) {
  if (grad.size() != params.size() || state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: gradient/state size mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  state.first_moment = config.beta1 * state.first_moment + (1.0 - config.beta1) * grad;
  state.second_moment =
      config.beta2 * state.second_moment + (1.0 - config.beta2) * grad.cwiseProduct(grad);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double m_hat = state.first_moment[i] / c1;
    const double v_hat = state.second_moment[i] / c2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

}  // namespace facediff
