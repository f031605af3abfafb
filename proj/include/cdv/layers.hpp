#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdv/rng.hpp"
#include "cdv/tensor.hpp"

namespace cdv::nn {

enum class Activation { kIdentity, kTanh, kSigmoid };

double activate(Activation act, double z);
// Derivative expressed through the activation's output y.
double activation_slope(Activation act, double y);

/// A trainable tensor paired with its gradient accumulator.
struct ParamRef {
  std::string name;
  Tensor2* value;
  Tensor2* grad;
};
using ParamList = std::vector<ParamRef>;

void zero_grads(const ParamList& params);

/// activation(W x + b)
Vector dense_forward(std::span<const double> x, const Tensor2& weight,
                     const Tensor2& bias, Activation act);

struct DenseTrace {
  Vector input;
  Vector output;
  bool valid = false;
};

class Dense {
 public:
  Dense() = default;
  Dense(std::size_t input_dim, std::size_t output_dim, Activation act);

  std::size_t input_dim() const noexcept { return weight.cols(); }
  std::size_t output_dim() const noexcept { return weight.rows(); }

  Vector forward(std::span<const double> x, DenseTrace* trace = nullptr) const;
  // Accumulates parameter gradients; returns d(loss)/d(input).
  Vector backward(const DenseTrace& trace, std::span<const double> upstream);

  void init_uniform(Rng& rng, double scale);
  void collect(ParamList& out, const std::string& prefix);

  Tensor2 weight, bias;
  Tensor2 grad_weight, grad_bias;
  Activation activation = Activation::kIdentity;
};

/// Gate rows are stacked [input; forget; output; candidate], columns are [x; h].
struct LstmCellParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor2 weight;  // 4H x (I + H)
  Tensor2 bias;    // 4H x 1

  LstmCellParams() = default;
  LstmCellParams(std::size_t input, std::size_t hidden)
      : input_dim(input), hidden_dim(hidden),
        weight(4 * hidden, input + hidden), bias(4 * hidden, 1) {}
};

struct LstmState {
  Vector h;
  Vector c;
};

struct LstmStepTrace {
  Vector xh;  // [x; h_prev]
  Vector c_prev;
  Vector i, f, o, g;
  Vector tanh_c;
};

LstmState lstm_step(const LstmCellParams& params, std::span<const double> h_prev,
                    std::span<const double> c_prev, std::span<const double> x,
                    LstmStepTrace* trace = nullptr);

struct LstmScanTrace {
  std::vector<LstmStepTrace> steps;  // in processing order
  bool reverse = false;
  bool valid = false;
};

class Lstm {
 public:
  Lstm() = default;
  Lstm(std::size_t input_dim, std::size_t hidden_dim);

  std::size_t input_dim() const noexcept { return params.input_dim; }
  std::size_t hidden_dim() const noexcept { return params.hidden_dim; }

  // Hidden states indexed by input position, zero initial state. When
  // reverse is set the scan runs right to left.
  std::vector<Vector> scan(const std::vector<Vector>& inputs, bool reverse,
                           LstmScanTrace* trace = nullptr) const;
  // d_hidden is indexed by input position; returns gradients per input.
  std::vector<Vector> backward(const LstmScanTrace& trace,
                               const std::vector<Vector>& d_hidden);

  // Uniform weights in [-scale, scale], forget-gate bias 1.
  void init(Rng& rng, double scale = 0.1);
  void collect(ParamList& out, const std::string& prefix);

  LstmCellParams params;
  LstmCellParams grads;
};

struct BlstmTrace {
  LstmScanTrace forward;
  LstmScanTrace backward;
};

struct BlstmOutput {
  std::vector<Vector> forward;   // left-to-right states
  std::vector<Vector> backward;  // right-to-left states, indexed by position
};

/// Bidirectional scan; throws EmptyInputError on an empty sequence.
BlstmOutput blstm_sequence(const LstmCellParams& fwd, const LstmCellParams& bwd,
                           const std::vector<Vector>& inputs);

class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(std::size_t input_dim, std::size_t hidden_dim)
      : fwd(input_dim, hidden_dim), bwd(input_dim, hidden_dim) {}

  std::size_t input_dim() const noexcept { return fwd.input_dim(); }
  std::size_t hidden_dim() const noexcept { return fwd.hidden_dim(); }

  BlstmOutput forward(const std::vector<Vector>& inputs, BlstmTrace* trace = nullptr) const;
  std::vector<Vector> backward(const BlstmTrace& trace, const std::vector<Vector>& d_forward,
                               const std::vector<Vector>& d_backward);

  void init(Rng& rng, double scale = 0.1);
  void collect(ParamList& out, const std::string& prefix);

  Lstm fwd;
  Lstm bwd;
};

/// y = x / |x|; a zero vector passes through unchanged.
Vector l2_normalize(std::span<const double> x);
// Gradient of l2_normalize at x given the upstream gradient.
Vector l2_normalize_backward(std::span<const double> x, std::span<const double> upstream);

}  // namespace cdv::nn
