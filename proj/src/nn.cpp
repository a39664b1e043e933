#include "facediff/nn.hpp"

#include "facediff/error.hpp"

#include <cmath>

namespace facediff::nn {

Linear Linear::create(ParameterSet& params, const std::string& name, Eigen::Index in,
                      Eigen::Index out) {
  Linear l;
  l.weight = params.add(name + ".weight", in, out);
  l.bias = params.add(name + ".bias", 1, out);
  return l;
}

void Linear::init(ParameterSet& params, Rng& rng) const {
  const auto in = params.entry(weight).rows;
  params.fill_normal(weight, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  params.fill_constant(bias, 0.0);
}

Matrix Linear::forward(const ParameterSet& params, const Matrix& x) const {
  const auto w = params[weight];
  if (x.cols() != w.rows()) {
    throw DimensionError("linear '" + params.entry(weight).name + "': input width " +
                         std::to_string(x.cols()) + " != " + std::to_string(w.rows()));
  }
  Matrix y = x * w;
  y.rowwise() += params[bias].row(0);
  return y;
}

void Linear::backward_params(const ParameterSet& params, const Matrix& x, const Matrix& dy,
                             Vector& grad) const {
  params.slice_of(grad, weight).noalias() += x.transpose() * dy;
  params.slice_of(grad, bias) += dy.colwise().sum();
}

Matrix Linear::backward(const ParameterSet& params, const Matrix& x, const Matrix& dy,
                        Vector& grad) const {
  backward_params(params, x, dy, grad);
  return dy * params[weight].transpose();
}

LayerNorm LayerNorm::create(ParameterSet& params, const std::string& name, Eigen::Index width) {
  LayerNorm ln;
  ln.gain = params.add(name + ".gain", 1, width);
  ln.bias = params.add(name + ".bias", 1, width);
  params.fill_constant(ln.gain, 1.0);
  return ln;
}

Matrix LayerNorm::forward(const ParameterSet& params, const Matrix& x, LayerNormCache& cache) const {
  const auto n = static_cast<double>(x.cols());
  cache.normalized.resize(x.rows(), x.cols());
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / n;
    const double inv = 1.0 / std::sqrt(var + epsilon);
    cache.inv_std[r] = inv;
    cache.normalized.row(r) = (x.row(r).array() - mean) * inv;
  }
  Matrix y = cache.normalized.array().rowwise() * params[gain].row(0).array();
  y.rowwise() += params[bias].row(0);
  return y;
}

Matrix LayerNorm::backward(const ParameterSet& params, const LayerNormCache& cache,
                           const Matrix& dy, Vector& grad) const {
  const auto& xhat = cache.normalized;
  params.slice_of(grad, gain) += (dy.array() * xhat.array()).colwise().sum().matrix();
  params.slice_of(grad, bias) += dy.colwise().sum();

  const Matrix dxhat = dy.array().rowwise() * params[gain].row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).mean();
    const double mean_dx = (dxhat.row(r).array() * xhat.row(r).array()).mean();
    dx.row(r) = cache.inv_std[r] *
                (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& params, const std::string& name,
                                              Eigen::Index width, Eigen::Index heads) {
  if (heads < 1 || width % heads != 0) {
    throw ConfigError("attention '" + name + "': width " + std::to_string(width) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.query = Linear::create(params, name + ".query", width, width);
  a.key = Linear::create(params, name + ".key", width, width);
  a.value = Linear::create(params, name + ".value", width, width);
  a.output = Linear::create(params, name + ".output", width, width);
  a.heads = heads;
  return a;
}

void MultiHeadAttention::init(ParameterSet& params, Rng& rng) const {
  query.init(params, rng);
  key.init(params, rng);
  value.init(params, rng);
  output.init(params, rng);
}

Matrix MultiHeadAttention::forward(const ParameterSet& params, const Matrix& queries,
                                   const Matrix& memory, AttentionCache& cache) const {
  cache.query_input = queries;
  cache.memory_input = memory;
  cache.q = query.forward(params, queries);
  cache.k = key.forward(params, memory);
  cache.v = value.forward(params, memory);
  const Eigen::Index width = cache.q.cols();
  const Eigen::Index hd = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  cache.probs.resize(static_cast<std::size_t>(heads));
  cache.merged.resize(queries.rows(), width);
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto qh = cache.q.middleCols(h * hd, hd);
    const auto kh = cache.k.middleCols(h * hd, hd);
    const auto vh = cache.v.middleCols(h * hd, hd);
    Matrix& p = cache.probs[static_cast<std::size_t>(h)];
    p = softmax_rows(scale * (qh * kh.transpose()));
    cache.merged.middleCols(h * hd, hd).noalias() = p * vh;
  }
  return output.forward(params, cache.merged);
}

void MultiHeadAttention::backward(const ParameterSet& params, const AttentionCache& cache,
                                  const Matrix& dy, Vector& grad, Matrix& d_queries,
                                  Matrix& d_memory) const {
  const Matrix d_merged = output.backward(params, cache.merged, dy, grad);
  const Eigen::Index width = cache.q.cols();
  const Eigen::Index hd = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Matrix dq(cache.q.rows(), width);
  Matrix dk(cache.k.rows(), width);
  Matrix dv(cache.v.rows(), width);
  for (Eigen::Index h = 0; h < heads; ++h) {
    const Matrix& p = cache.probs[static_cast<std::size_t>(h)];
    const auto qh = cache.q.middleCols(h * hd, hd);
    const auto kh = cache.k.middleCols(h * hd, hd);
    const auto vh = cache.v.middleCols(h * hd, hd);
    const auto doh = d_merged.middleCols(h * hd, hd);

    const Matrix dp = doh * vh.transpose();
    dv.middleCols(h * hd, hd).noalias() = p.transpose() * doh;
    const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
    const Matrix ds = p.array() * (dp.array().colwise() - row_dot.array());
    dq.middleCols(h * hd, hd).noalias() = scale * (ds * kh);
    dk.middleCols(h * hd, hd).noalias() = scale * (ds.transpose() * qh);
  }
  d_queries = query.backward(params, cache.query_input, dq, grad);
  d_memory = key.backward(params, cache.memory_input, dk, grad);
  d_memory += value.backward(params, cache.memory_input, dv, grad);
}

Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

Matrix silu(const Matrix& x) { return (x.array() * sigmoid(x).array()).matrix(); }

Matrix silu_backward(const Matrix& x, const Matrix& dy) {
  const Matrix s = sigmoid(x);
  return (dy.array() * s.array() * (1.0 + x.array() * (1.0 - s.array()))).matrix();
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

RowVector sinusoidal_embedding(double position, Eigen::Index dim) {
  RowVector e(dim);
  const Eigen::Index half = dim / 2;
  for (Eigen::Index i = 0; i < half; ++i) {
    const double freq =
        std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(std::max<Eigen::Index>(half, 1)));
    e[i] = std::sin(position * freq);
    e[i + half] = std::cos(position * freq);
  }
  if (dim % 2) e[dim - 1] = 0.0;
  return e;
}

Matrix positional_encoding(Eigen::Index rows, Eigen::Index dim) {
  Matrix pe(rows, dim);
  for (Eigen::Index r = 0; r < rows; ++r) pe.row(r) = sinusoidal_embedding(static_cast<double>(r), dim);
  return pe;
}

}  // namespace facediff::nn
