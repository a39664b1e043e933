#pragma once

#include "facediff/params.hpp"
#include "facediff/tensor.hpp"

#include <string>
#include <vector>

// Layer primitives with explicit forward caches and hand-derived backward
// passes. Backward functions accumulate parameter gradients into a buffer
// laid out like the ParameterSet and return the input gradient.
namespace facediff::nn {

// y = x W + b, W: in x out.
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;

  static Linear create(ParameterSet& params, const std::string& name, Eigen::Index in,
                       Eigen::Index out);
  // Weights ~ N(0, 1/in), bias zero.
  void init(ParameterSet& params, Rng& rng) const;

  Matrix forward(const ParameterSet& params, const Matrix& x) const;
  Matrix backward(const ParameterSet& params, const Matrix& x, const Matrix& dy, Vector& grad) const;
  void backward_params(const ParameterSet& params, const Matrix& x, const Matrix& dy,
                       Vector& grad) const;
};

struct LayerNormCache {
  Matrix normalized;
  Vector inv_std;
};

// Per-row normalisation over the feature axis with learned gain and bias.
struct LayerNorm {
  std::size_t gain = 0;
  std::size_t bias = 0;
  double epsilon = 1e-5;

  static LayerNorm create(ParameterSet& params, const std::string& name, Eigen::Index width);

  Matrix forward(const ParameterSet& params, const Matrix& x, LayerNormCache& cache) const;
  Matrix backward(const ParameterSet& params, const LayerNormCache& cache, const Matrix& dy,
                  Vector& grad) const;
};

struct AttentionCache {
  Matrix query_input;
  Matrix memory_input;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // one (queries x keys) matrix per head
  Matrix merged;              // concatenated head outputs
};

// Scaled dot-product attention with `heads` heads; queries from one token
// set, keys/values from another (identical for self-attention).
struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  Eigen::Index heads = 1;

  static MultiHeadAttention create(ParameterSet& params, const std::string& name,
                                   Eigen::Index width, Eigen::Index heads);
  void init(ParameterSet& params, Rng& rng) const;

  Matrix forward(const ParameterSet& params, const Matrix& queries, const Matrix& memory,
                 AttentionCache& cache) const;
  // Writes the gradients w.r.t. the query tokens and the memory tokens.
  void backward(const ParameterSet& params, const AttentionCache& cache, const Matrix& dy,
                Vector& grad, Matrix& d_queries, Matrix& d_memory) const;
};

Matrix silu(const Matrix& x);
Matrix silu_backward(const Matrix& x, const Matrix& dy);

Matrix sigmoid(const Matrix& x);

// Row-wise softmax.
Matrix softmax_rows(const Matrix& x);

// [sin(p f_0), ..., sin(p f_{d/2-1}), cos(p f_0), ...] with f_i = 10000^{-i/(d/2)}.
RowVector sinusoidal_embedding(double position, Eigen::Index dim);
// Row i is sinusoidal_embedding(i, dim).
Matrix positional_encoding(Eigen::Index rows, Eigen::Index dim);

}  // namespace facediff::nn
