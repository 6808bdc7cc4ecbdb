#pragma once
// Define-by-run reverse-mode differentiation. A Tape records one forward
// pass at tensor granularity; backward() sweeps the record once in
// reverse. Tapes are rebuilt per forward pass and confined to one worker.

#include <array>
#include <memory>
#include <vector>

#include "sfield/tensor.hpp"

namespace sfield {

class Tape;

// Handle to a tape node. Cheap to copy; only valid while the tape lives.
struct Value {
  Tape* tape = nullptr;
  int id = -1;
};

enum class Op : std::uint8_t {
  kInput,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kScale,      // c * x
  kAddC,       // x + c
  kRelu,
  kAbs,
  kMin,        // elementwise; ties route gradient to the first argument
  kMax,
  kClamp,      // clamp(x, lo, hi); attrs c = lo, c2 = hi
  kSigmoid,
  kExp,
  kLog,
  kSin,
  kCos,
  kSoftmax,    // along the last axis
  kLayerNorm,  // along the last axis, eps 1e-5, no affine
  kConcat,     // two inputs along attrs.axis
  kSlice,      // attrs.axis/start/len
  kSum,        // full reduction to scalar
  kMean,
  kL1Distance, // mean |a - b|
  kL2Norm,     // sqrt(sum x^2)
  kMatmul,
  kTranspose,  // 2D
  kAddRow,     // x[m,n] + row[n]
  kMulRow,     // x[m,n] * row[n]
  kBceLogits,  // mean binary cross-entropy of (logits, targets)
  kConv3d,     // (x, w, b); attrs.stride/pad
  kConvT2d,    // (x, w, b); attrs.stride/pad
  kChwToHwc,   // [C,H,W] -> [H,W,C]
  kReshape,
  kCustom,
};

// Extension point for module-defined differentiable operations (tri-plane
// sampling, the soft rasterizer). backward() accumulates into grad_inputs.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual const char* name() const = 0;
  virtual Tensor forward(const std::vector<const Tensor*>& inputs) = 0;
  virtual void backward(const Tensor& grad_out,
                        const std::vector<const Tensor*>& inputs,
                        const Tensor& output,
                        const std::vector<Tensor*>& grad_inputs) = 0;
};

struct Node {
  Op op = Op::kInput;
  std::vector<int> in;
  Tensor value;
  double c = 0.0, c2 = 0.0;
  int axis = 0, start = 0, len = 0;
  int stride = 1, pad = 0;
  std::shared_ptr<CustomOp> custom;
};

class Tape {
 public:
  // Differentiable leaf (parameters, query points).
  Value input(Tensor v);
  // Leaf that never needs gradients (data, targets, noise draws).
  Value constant(Tensor v);

  Value custom(std::shared_ptr<CustomOp> op, const std::vector<Value>& inputs);

  const Tensor& value(Value v) const { return node(v).value; }
  const std::vector<int>& shape(Value v) const { return node(v).value.shape(); }

  // Reverse sweep from a scalar root. Gradients are then available via
  // grad(); leaves not reaching the root report zeros.
  void backward(Value root);
  const Tensor& grad(Value v);

  int size() const { return static_cast<int>(nodes_.size()); }

  // internal: used by the op builders
  Value emit(Node n);
  const Node& node(Value v) const;

 private:
  void check_owns(Value v) const;
  Tensor& grad_slot(int id);
  void backward_conv(const Node& n, const Tensor& g);  // ops_conv.cpp

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool ran_backward_ = false;
};

// ---- op builders ----------------------------------------------------------

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value div(Value a, Value b);
Value neg(Value a);
Value scale(Value a, double c);
Value add_const(Value a, double c);
Value relu(Value a);
Value abs(Value a);
Value emin(Value a, Value b);
Value emax(Value a, Value b);
Value clamp(Value a, double lo, double hi);
Value sigmoid(Value a);
Value exp(Value a);
Value log(Value a);
Value sin(Value a);
Value cos(Value a);
Value softmax(Value a);
Value layer_norm(Value a);
Value concat(Value a, Value b, int axis);
Value slice(Value a, int axis, int start, int len);
Value sum(Value a);
Value mean(Value a);
Value l1_distance(Value a, Value b);
Value l2_norm(Value a);
Value matmul(Value a, Value b);
Value transpose(Value a);
Value add_row(Value a, Value row);
Value mul_row(Value a, Value row);
Value bce_logits(Value logits, Value targets);
Value reshape(Value a, std::vector<int> shape);
// x [Cin,D,H,W], w [Cout,Cin,k,k,k], b [Cout] -> [Cout,D',H',W']
Value conv3d(Value x, Value w, Value b, int stride, int pad);
// x [Cin,H,W], w [Cin,Cout,k,k], b [Cout] -> [Cout,(H-1)s+k-2p, ...]
Value conv_transpose2d(Value x, Value w, Value b, int stride, int pad);
Value chw_to_hwc(Value a);

// Generic entry by operation kind; covers the core elementwise/reduction
// kinds (used by the property tests to sweep every kind uniformly).
enum class OpKind {
  add, sub, mul, matmul, relu, sigmoid, exp, log, softmax, layer_norm,
  concat, slice, sum, mean, l1_distance, l2_norm,
};
Value forward_op(OpKind kind, const std::vector<Value>& inputs, int axis = 0,
                 int start = 0, int len = 0);

}  // namespace sfield
