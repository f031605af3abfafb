#include "cdv/layers.hpp"

#include <cmath>

#include "cdv/error.hpp"

namespace cdv::nn {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void fill_uniform(Tensor2& t, Rng& rng, double scale) {
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
}

}  // namespace

double activate(Activation act, double z) {
  switch (act) {
    case Activation::kTanh: return std::tanh(z);
    case Activation::kSigmoid: return sigmoid(z);
    case Activation::kIdentity: break;
  }
  return z;
}

double activation_slope(Activation act, double y) {
  switch (act) {
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kSigmoid: return y * (1.0 - y);
    case Activation::kIdentity: break;
  }
  return 1.0;
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) p.grad->fill(0.0);
}

Vector dense_forward(std::span<const double> x, const Tensor2& weight,
                     const Tensor2& bias, Activation act) {
  if (x.size() != weight.cols()) {
    throw ShapeError("dense input has dimension " + std::to_string(x.size()) +
                     " but weight expects " + std::to_string(weight.cols()));
  }
  if (bias.size() != weight.rows()) {
    throw ShapeError("dense bias has dimension " + std::to_string(bias.size()) +
                     " but weight has " + std::to_string(weight.rows()) + " rows");
  }
  Vector y = affine(weight, x, &bias);
  for (double& v : y) v = activate(act, v);
  return y;
}

Dense::Dense(std::size_t input_dim, std::size_t output_dim, Activation act)
    : weight(output_dim, input_dim), bias(output_dim, 1),
      grad_weight(output_dim, input_dim), grad_bias(output_dim, 1), activation(act) {}

Vector Dense::forward(std::span<const double> x, DenseTrace* trace) const {
  Vector y = dense_forward(x, weight, bias, activation);
  if (trace != nullptr) {
    trace->input.assign(x.begin(), x.end());
    trace->output = y;
    trace->valid = true;
  }
  return y;
}

Vector Dense::backward(const DenseTrace& trace, std::span<const double> upstream) {
  if (!trace.valid) throw StateError("dense backward called before forward");
  check_dims(output_dim(), upstream.size(), "dense upstream gradient");
  Vector dz(upstream.size());
  for (std::size_t r = 0; r < dz.size(); ++r) {
    dz[r] = upstream[r] * activation_slope(activation, trace.output[r]);
  }
  add_outer(grad_weight, dz, trace.input);
  auto gb = grad_bias.values();
  for (std::size_t r = 0; r < dz.size(); ++r) gb[r] += dz[r];
  Vector dx(input_dim(), 0.0);
  add_transposed_product(weight, dz, dx);
  return dx;
}

void Dense::init_uniform(Rng& rng, double scale) {
  fill_uniform(weight, rng, scale);
  fill_uniform(bias, rng, scale);
}

void Dense::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  out.push_back({prefix + ".bias", &bias, &grad_bias});
}

LstmState lstm_step(const LstmCellParams& params, std::span<const double> h_prev,
                    std::span<const double> c_prev, std::span<const double> x,
                    LstmStepTrace* trace) {
  const std::size_t hidden = params.hidden_dim;
  check_dims(params.input_dim, x.size(), "lstm input");
  check_dims(hidden, h_prev.size(), "lstm previous hidden state");
  check_dims(hidden, c_prev.size(), "lstm previous cell state");

  Vector xh(x.begin(), x.end());
  xh.insert(xh.end(), h_prev.begin(), h_prev.end());
  const Vector z = affine(params.weight, xh, &params.bias);

  LstmStepTrace local;
  LstmStepTrace& t = trace != nullptr ? *trace : local;
  t.i.resize(hidden);
  t.f.resize(hidden);
  t.o.resize(hidden);
  t.g.resize(hidden);
  t.tanh_c.resize(hidden);
  LstmState out{Vector(hidden), Vector(hidden)};
  for (std::size_t k = 0; k < hidden; ++k) {
    t.i[k] = sigmoid(z[k]);
    t.f[k] = sigmoid(z[hidden + k]);
    t.o[k] = sigmoid(z[2 * hidden + k]);
    t.g[k] = std::tanh(z[3 * hidden + k]);
    out.c[k] = t.f[k] * c_prev[k] + t.i[k] * t.g[k];
    t.tanh_c[k] = std::tanh(out.c[k]);
    out.h[k] = t.o[k] * t.tanh_c[k];
  }
  if (trace != nullptr) {
    t.xh = std::move(xh);
    t.c_prev.assign(c_prev.begin(), c_prev.end());
  }
  return out;
}

Lstm::Lstm(std::size_t input_dim, std::size_t hidden_dim)
    : params(input_dim, hidden_dim), grads(input_dim, hidden_dim) {}

std::vector<Vector> Lstm::scan(const std::vector<Vector>& inputs, bool reverse,
                               LstmScanTrace* trace) const {
  const std::size_t n = inputs.size();
  const std::size_t hidden = hidden_dim();
  std::vector<Vector> states(n);
  if (trace != nullptr) {
    trace->steps.assign(n, {});
    trace->reverse = reverse;
    trace->valid = true;
  }
  Vector h(hidden, 0.0), c(hidden, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t pos = reverse ? n - 1 - s : s;
    LstmStepTrace* step = trace != nullptr ? &trace->steps[s] : nullptr;
    LstmState next = lstm_step(params, h, c, inputs[pos], step);
    h = std::move(next.h);
    c = std::move(next.c);
    states[pos] = h;
  }
  return states;
}

std::vector<Vector> Lstm::backward(const LstmScanTrace& trace,
                                   const std::vector<Vector>& d_hidden) {
  if (!trace.valid) throw StateError("lstm backward called before forward");
  const std::size_t n = trace.steps.size();
  check_dims(n, d_hidden.size(), "lstm upstream sequence length");
  const std::size_t hidden = hidden_dim();
  const std::size_t in = input_dim();

  std::vector<Vector> d_inputs(n);
  Vector dh_next(hidden, 0.0), dc_next(hidden, 0.0);
  Vector dz(4 * hidden);
  for (std::size_t s = n; s-- > 0;) {
    const std::size_t pos = trace.reverse ? n - 1 - s : s;
    const LstmStepTrace& t = trace.steps[s];
    check_dims(hidden, d_hidden[pos].size(), "lstm upstream gradient");
    Vector dc_prev(hidden);
    for (std::size_t k = 0; k < hidden; ++k) {
      const double dh = d_hidden[pos][k] + dh_next[k];
      const double dc = dc_next[k] + dh * t.o[k] * (1.0 - t.tanh_c[k] * t.tanh_c[k]);
      const double d_o = dh * t.tanh_c[k];
      const double d_i = dc * t.g[k];
      const double d_g = dc * t.i[k];
      const double d_f = dc * t.c_prev[k];
      dc_prev[k] = dc * t.f[k];
      dz[k] = d_i * t.i[k] * (1.0 - t.i[k]);
      dz[hidden + k] = d_f * t.f[k] * (1.0 - t.f[k]);
      dz[2 * hidden + k] = d_o * t.o[k] * (1.0 - t.o[k]);
      dz[3 * hidden + k] = d_g * (1.0 - t.g[k] * t.g[k]);
    }
    add_outer(grads.weight, dz, t.xh);
    auto gb = grads.bias.values();
    for (std::size_t r = 0; r < dz.size(); ++r) gb[r] += dz[r];
    Vector dxh(in + hidden, 0.0);
    add_transposed_product(params.weight, dz, dxh);
    d_inputs[pos].assign(dxh.begin(), dxh.begin() + static_cast<std::ptrdiff_t>(in));
    dh_next.assign(dxh.begin() + static_cast<std::ptrdiff_t>(in), dxh.end());
    dc_next = std::move(dc_prev);
  }
  return d_inputs;
}

void Lstm::init(Rng& rng, double scale) {
  fill_uniform(params.weight, rng, scale);
  fill_uniform(params.bias, rng, scale);
  const std::size_t hidden = hidden_dim();
  for (std::size_t k = 0; k < hidden; ++k) params.bias(hidden + k, 0) = 1.0;
}

void Lstm::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &params.weight, &grads.weight});
  out.push_back({prefix + ".bias", &params.bias, &grads.bias});
}

BlstmOutput blstm_sequence(const LstmCellParams& fwd, const LstmCellParams& bwd,
                           const std::vector<Vector>& inputs) {
  BiLstm layer;
  layer.fwd.params = fwd;
  layer.bwd.params = bwd;
  return layer.forward(inputs);
}

BlstmOutput BiLstm::forward(const std::vector<Vector>& inputs, BlstmTrace* trace) const {
  if (inputs.empty()) throw EmptyInputError("bidirectional lstm needs a nonempty sequence");
  BlstmOutput out;
  out.forward = fwd.scan(inputs, false, trace != nullptr ? &trace->forward : nullptr);
  out.backward = bwd.scan(inputs, true, trace != nullptr ? &trace->backward : nullptr);
  return out;
}

std::vector<Vector> BiLstm::backward(const BlstmTrace& trace,
                                     const std::vector<Vector>& d_forward,
                                     const std::vector<Vector>& d_backward) {
  std::vector<Vector> dx = fwd.backward(trace.forward, d_forward);
  std::vector<Vector> dx_b = bwd.backward(trace.backward, d_backward);
  for (std::size_t t = 0; t < dx.size(); ++t) {
    for (std::size_t k = 0; k < dx[t].size(); ++k) dx[t][k] += dx_b[t][k];
  }
  return dx;
}

void BiLstm::init(Rng& rng, double scale) {
  fwd.init(rng, scale);
  bwd.init(rng, scale);
}

void BiLstm::collect(ParamList& out, const std::string& prefix) {
  fwd.collect(out, prefix + ".fwd");
  bwd.collect(out, prefix + ".bwd");
}

Vector l2_normalize(std::span<const double> x) {
  const double norm = l2_norm(x);
  Vector y(x.begin(), x.end());
  if (norm == 0.0) return y;
  for (double& v : y) v /= norm;
  return y;
}

Vector l2_normalize_backward(std::span<const double> x, std::span<const double> upstream) {
  check_dims(x.size(), upstream.size(), "l2 normalize upstream gradient");
  const double norm = l2_norm(x);
  Vector dx(upstream.begin(), upstream.end());
  if (norm == 0.0) return dx;
  double proj = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) proj += x[i] * upstream[i];
  proj /= norm * norm;
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = (upstream[i] - x[i] * proj) / norm;
  return dx;
}

}  // namespace cdv::nn
