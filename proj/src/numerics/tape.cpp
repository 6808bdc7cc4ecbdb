#include "sfield/tape.hpp"

#include <algorithm>
#include <cmath>

#include "sfield/kernels.hpp"

namespace sfield {

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.same_shape(b), op, ": shape mismatch ", shape_str(a.shape()),
          " vs ", shape_str(b.shape()));
}

// rows/cols view of the last axis
std::pair<std::int64_t, int> last_axis_view(const Tensor& t) {
  const int c = t.dim(t.rank() - 1);
  return {t.size() / c, c};
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

constexpr double kLayerNormEps = 1e-5;

}  // namespace

// ---- tape infrastructure ---------------------------------------------------

Value Tape::emit(Node n) {
  require(n.value.all_finite(), "non-finite values produced by op #",
          static_cast<int>(n.op));
  nodes_.push_back(std::move(n));
  ran_backward_ = false;
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

const Node& Tape::node(Value v) const {
  check_owns(v);
  return nodes_[v.id];
}

void Tape::check_owns(Value v) const {
  require(v.tape == this && v.id >= 0 && v.id < size(),
          "value does not belong to this tape");
}

Value Tape::input(Tensor v) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(v);
  return emit(std::move(n));
}

Value Tape::constant(Tensor v) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(v);
  return emit(std::move(n));
}

Value Tape::custom(std::shared_ptr<CustomOp> op,
                   const std::vector<Value>& inputs) {
  std::vector<const Tensor*> ins;
  Node n;
  n.op = Op::kCustom;
  for (Value v : inputs) {
    check_owns(v);
    n.in.push_back(v.id);
    ins.push_back(&nodes_[v.id].value);
  }
  n.value = op->forward(ins);
  n.custom = std::move(op);
  return emit(std::move(n));
}

Tensor& Tape::grad_slot(int id) {
  if (grads_[id].size() == 0) grads_[id] = Tensor(nodes_[id].value.shape());
  return grads_[id];
}

const Tensor& Tape::grad(Value v) {
  check_owns(v);
  require(ran_backward_, "grad() before backward()");
  grads_.resize(nodes_.size());
  return grad_slot(v.id);
}

// ---- backward rules --------------------------------------------------------

void Tape::backward(Value root) {
  check_owns(root);
  require(nodes_[root.id].value.is_scalar(),
          "backward() requires a scalar output, got ",
          shape_str(nodes_[root.id].value.shape()));
  grads_.assign(nodes_.size(), Tensor());
  grad_slot(root.id)[0] = 1.0;
  ran_backward_ = true;

  for (int id = root.id; id >= 0; --id) {
    if (grads_[id].size() == 0) continue;
    const Node& n = nodes_[id];
    const Tensor& g = grads_[id];
    const std::int64_t sz = n.value.size();
    switch (n.op) {
      case Op::kInput:
      case Op::kConstant:
        break;
      case Op::kAdd: {
        K().axpy(grad_slot(n.in[0]).data(), 1.0, g.data(), sz);
        K().axpy(grad_slot(n.in[1]).data(), 1.0, g.data(), sz);
        break;
      }
      case Op::kSub: {
        K().axpy(grad_slot(n.in[0]).data(), 1.0, g.data(), sz);
        K().axpy(grad_slot(n.in[1]).data(), -1.0, g.data(), sz);
        break;
      }
      case Op::kMul: {
        const Tensor& a = nodes_[n.in[0]].value;
        const Tensor& b = nodes_[n.in[1]].value;
        Tensor& da = grad_slot(n.in[0]);
        Tensor& db = grad_slot(n.in[1]);
        for (std::int64_t i = 0; i < sz; ++i) {
          da[i] += g[i] * b[i];
          db[i] += g[i] * a[i];
        }
        break;
      }
      case Op::kDiv: {
        const Tensor& a = nodes_[n.in[0]].value;
        const Tensor& b = nodes_[n.in[1]].value;
        Tensor& da = grad_slot(n.in[0]);
        Tensor& db = grad_slot(n.in[1]);
        for (std::int64_t i = 0; i < sz; ++i) {
          da[i] += g[i] / b[i];
          db[i] -= g[i] * a[i] / (b[i] * b[i]);
        }
        break;
      }
      case Op::kNeg:
        K().axpy(grad_slot(n.in[0]).data(), -1.0, g.data(), sz);
        break;
      case Op::kScale:
        K().axpy(grad_slot(n.in[0]).data(), n.c, g.data(), sz);
        break;
      case Op::kAddC:
        K().axpy(grad_slot(n.in[0]).data(), 1.0, g.data(), sz);
        break;
      case Op::kRelu: {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& dx = grad_slot(n.in[0]);
        for (std::int64_t i = 0; i < sz; ++i)
          if (x[i] > 0.0) dx[i] += g[i];
        break;
      }
      case Op::kAbs: {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& dx = grad_slot(n.in[0]);
        for (std::int64_t i = 0; i < sz; ++i) dx[i] += g[i] * sign(x[i]);
        break;
      }
      case Op::kMin:
      case Op::kMax: {
        const Tensor& a = nodes_[n.in[0]].value;
        const Tensor& b = nodes_[n.in[1]].value;
        Tensor& da = grad_slot(n.in[0]);
        Tensor& db = grad_slot(n.in[1]);
        const bool is_min = n.op == Op::kMin;
        for (std::int64_t i = 0; i < sz; ++i) {
          const bool first = is_min ? (a[i] <= b[i]) : (a[i] >= b[i]);
          (first ? da[i] : db[i]) += g[i];
        }
        break;
      }
      case Op::kClamp: {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& dx = grad_slot(n.in[0]);
        for (std::int64_t i = 0; i < sz; ++i)
          if (x[i] > n.c && x[i] < n.c2) dx[i] += g[i];
        break;
      }
      case Op::kSigmoid: {
        const Tensor& y = n.value;
        Tensor& dx = grad_slot(n.in[0]);
        for (std::int64_t i = 0; i < sz; ++i)
          dx[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::kExp: {
        const Tensor& y = n.value;
        Tensor& dx = grad_slot(n.in[0]);
        for (std::int64_t i = 0; i < sz; ++i) dx[i] += g[i] * y[i];
        break;
      }
      case Op::kLog: {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& dx = grad_slot(n.in[0]);
        for (std::int64_t i = 0; i < sz; ++i) dx[i] += g[i] / x[i];
        break;
      }
      case Op::kSin: {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& dx = grad_slot(n.in[0]);
        for (std::int64_t i = 0; i < sz; ++i) dx[i] += g[i] * std::cos(x[i]);
        break;
      }
      case Op::kCos: {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& dx = grad_slot(n.in[0]);
        for (std::int64_t i = 0; i < sz; ++i) dx[i] -= g[i] * std::sin(x[i]);
        break;
      }
      case Op::kSoftmax: {
        const Tensor& y = n.value;
        Tensor& dx = grad_slot(n.in[0]);
        auto [rows, cols] = last_axis_view(y);
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* yr = y.data() + r * cols;
          const double* gr = g.data() + r * cols;
          const double dot = K().dot(gr, yr, cols);
          double* dr = dx.data() + r * cols;
          for (int j = 0; j < cols; ++j) dr[j] += yr[j] * (gr[j] - dot);
        }
        break;
      }
      case Op::kLayerNorm: {
        const Tensor& x = nodes_[n.in[0]].value;
        const Tensor& y = n.value;
        Tensor& dx = grad_slot(n.in[0]);
        auto [rows, cols] = last_axis_view(y);
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* xr = x.data() + r * cols;
          const double* yr = y.data() + r * cols;
          const double* gr = g.data() + r * cols;
          double mu = K().sum(xr, cols) / cols;
          double var = 0.0;
          for (int j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
          var /= cols;
          const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
          const double gmean = K().sum(gr, cols) / cols;
          const double gymean = K().dot(gr, yr, cols) / cols;
          double* dr = dx.data() + r * cols;
          for (int j = 0; j < cols; ++j)
            dr[j] += inv_std * (gr[j] - gmean - yr[j] * gymean);
        }
        break;
      }
      case Op::kConcat: {
        const Tensor& a = nodes_[n.in[0]].value;
        Tensor& da = grad_slot(n.in[0]);
        Tensor& db = grad_slot(n.in[1]);
        std::int64_t inner = 1, outer = 1;
        for (int i = n.axis + 1; i < n.value.rank(); ++i)
          inner *= n.value.dim(i);
        for (int i = 0; i < n.axis; ++i) outer *= n.value.dim(i);
        const std::int64_t la = a.dim(n.axis) * inner;
        const std::int64_t lb = (n.value.dim(n.axis) - a.dim(n.axis)) * inner;
        for (std::int64_t o = 0; o < outer; ++o) {
          const double* go = g.data() + o * (la + lb);
          K().axpy(da.data() + o * la, 1.0, go, la);
          K().axpy(db.data() + o * lb, 1.0, go + la, lb);
        }
        break;
      }
      case Op::kSlice: {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& dx = grad_slot(n.in[0]);
        std::int64_t inner = 1, outer = 1;
        for (int i = n.axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
        for (int i = 0; i < n.axis; ++i) outer *= x.dim(i);
        const std::int64_t span = x.dim(n.axis) * inner;
        for (std::int64_t o = 0; o < outer; ++o)
          K().axpy(dx.data() + o * span + n.start * inner, 1.0,
                   g.data() + o * n.len * inner, n.len * inner);
        break;
      }
      case Op::kSum: {
        Tensor& dx = grad_slot(n.in[0]);
        const double gv = g[0];
        for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += gv;
        break;
      }
      case Op::kMean: {
        Tensor& dx = grad_slot(n.in[0]);
        const double gv = g[0] / static_cast<double>(dx.size());
        for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += gv;
        break;
      }
      case Op::kL1Distance: {
        const Tensor& a = nodes_[n.in[0]].value;
        const Tensor& b = nodes_[n.in[1]].value;
        Tensor& da = grad_slot(n.in[0]);
        Tensor& db = grad_slot(n.in[1]);
        const double gv = g[0] / static_cast<double>(a.size());
        for (std::int64_t i = 0; i < a.size(); ++i) {
          const double s = sign(a[i] - b[i]);
          da[i] += gv * s;
          db[i] -= gv * s;
        }
        break;
      }
      case Op::kL2Norm: {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& dx = grad_slot(n.in[0]);
        const double norm = n.value[0];
        if (norm > 0.0) {
          const double gv = g[0] / norm;
          K().axpy(dx.data(), gv, x.data(), x.size());
        }
        break;
      }
      case Op::kMatmul: {
        const Tensor& a = nodes_[n.in[0]].value;
        const Tensor& b = nodes_[n.in[1]].value;
        Tensor& da = grad_slot(n.in[0]);
        Tensor& db = grad_slot(n.in[1]);
        const int m = a.rows(), k = a.cols(), nn = b.cols();
        Tensor bt({nn, k});
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < nn; ++j) bt[j * k + i] = b[i * nn + j];
        K().matmul_acc(da.data(), g.data(), bt.data(), m, nn, k);
        Tensor at({k, m});
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
        K().matmul_acc(db.data(), at.data(), g.data(), k, m, nn);
        break;
      }
      case Op::kTranspose: {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& dx = grad_slot(n.in[0]);
        const int r = x.rows(), c = x.cols();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) dx[i * c + j] += g[j * r + i];
        break;
      }
      case Op::kAddRow: {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& dx = grad_slot(n.in[0]);
        Tensor& drow = grad_slot(n.in[1]);
        const int r = x.rows(), c = x.cols();
        K().axpy(dx.data(), 1.0, g.data(), x.size());
        for (int i = 0; i < r; ++i)
          K().axpy(drow.data(), 1.0, g.data() + i * c, c);
        break;
      }
      case Op::kMulRow: {
        const Tensor& x = nodes_[n.in[0]].value;
        const Tensor& row = nodes_[n.in[1]].value;
        Tensor& dx = grad_slot(n.in[0]);
        Tensor& drow = grad_slot(n.in[1]);
        const int r = x.rows(), c = x.cols();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) {
            dx[i * c + j] += g[i * c + j] * row[j];
            drow[j] += g[i * c + j] * x[i * c + j];
          }
        break;
      }
      case Op::kBceLogits: {
        const Tensor& x = nodes_[n.in[0]].value;
        const Tensor& y = nodes_[n.in[1]].value;
        Tensor& dx = grad_slot(n.in[0]);
        Tensor& dy = grad_slot(n.in[1]);
        const double gv = g[0] / static_cast<double>(x.size());
        for (std::int64_t i = 0; i < x.size(); ++i) {
          const double s = 1.0 / (1.0 + std::exp(-x[i]));
          dx[i] += gv * (s - y[i]);
          dy[i] -= gv * x[i];
        }
        break;
      }
      case Op::kReshape:
        K().axpy(grad_slot(n.in[0]).data(), 1.0, g.data(), sz);
        break;
      case Op::kConv3d:
      case Op::kConvT2d:
      case Op::kChwToHwc:
        backward_conv(n, g);  // defined in ops_conv.cpp
        break;
      case Op::kCustom: {
        std::vector<const Tensor*> ins;
        std::vector<Tensor*> gins;
        for (int in_id : n.in) {
          ins.push_back(&nodes_[in_id].value);
          gins.push_back(&grad_slot(in_id));
        }
        n.custom->backward(g, ins, n.value, gins);
        break;
      }
    }
  }
}

// ---- forward builders ------------------------------------------------------

namespace {

Tape& tape_of(Value a) {
  require(a.tape != nullptr, "null value handle");
  return *a.tape;
}

Tape& tape_of(Value a, Value b) {
  require(a.tape != nullptr && a.tape == b.tape,
          "operands belong to different tapes");
  return *a.tape;
}

Node binary_node(Op op, Value a, Value b) {
  Node n;
  n.op = op;
  n.in = {a.id, b.id};
  return n;
}

Node unary_node(Op op, Value a) {
  Node n;
  n.op = op;
  n.in = {a.id};
  return n;
}

using MapFn = double (*)(double);

Value unary_map(Op op, Value a, MapFn f) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  Node n = unary_node(op, a);
  n.value = Tensor(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) n.value[i] = f(x[i]);
  return t.emit(std::move(n));
}

}  // namespace

Value add(Value a, Value b) {
  Tape& t = tape_of(a, b);
  const Tensor &x = t.node(a).value, &y = t.node(b).value;
  check_same_shape(x, y, "add");
  Node n = binary_node(Op::kAdd, a, b);
  n.value = Tensor(x.shape());
  K().add(n.value.data(), x.data(), y.data(), x.size());
  return t.emit(std::move(n));
}

Value sub(Value a, Value b) {
  Tape& t = tape_of(a, b);
  const Tensor &x = t.node(a).value, &y = t.node(b).value;
  check_same_shape(x, y, "sub");
  Node n = binary_node(Op::kSub, a, b);
  n.value = Tensor(x.shape());
  K().sub(n.value.data(), x.data(), y.data(), x.size());
  return t.emit(std::move(n));
}

Value mul(Value a, Value b) {
  Tape& t = tape_of(a, b);
  const Tensor &x = t.node(a).value, &y = t.node(b).value;
  check_same_shape(x, y, "mul");
  Node n = binary_node(Op::kMul, a, b);
  n.value = Tensor(x.shape());
  K().mul(n.value.data(), x.data(), y.data(), x.size());
  return t.emit(std::move(n));
}

Value div(Value a, Value b) {
  Tape& t = tape_of(a, b);
  const Tensor &x = t.node(a).value, &y = t.node(b).value;
  check_same_shape(x, y, "div");
  for (std::int64_t i = 0; i < y.size(); ++i)
    require(y[i] != 0.0, "div: division by zero at index ", i);
  Node n = binary_node(Op::kDiv, a, b);
  n.value = Tensor(x.shape());
  K().div(n.value.data(), x.data(), y.data(), x.size());
  return t.emit(std::move(n));
}

Value neg(Value a) {
  return unary_map(Op::kNeg, a, [](double x) { return -x; });
}

Value scale(Value a, double c) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  Node n = unary_node(Op::kScale, a);
  n.c = c;
  n.value = Tensor(x.shape());
  K().scale(n.value.data(), x.data(), c, x.size());
  return t.emit(std::move(n));
}

Value add_const(Value a, double c) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  Node n = unary_node(Op::kAddC, a);
  n.c = c;
  n.value = Tensor(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) n.value[i] = x[i] + c;
  return t.emit(std::move(n));
}

Value relu(Value a) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  Node n = unary_node(Op::kRelu, a);
  n.value = Tensor(x.shape());
  K().relu(n.value.data(), x.data(), x.size());
  return t.emit(std::move(n));
}

Value abs(Value a) {
  return unary_map(Op::kAbs, a, [](double x) { return std::fabs(x); });
}

Value emin(Value a, Value b) {
  Tape& t = tape_of(a, b);
  const Tensor &x = t.node(a).value, &y = t.node(b).value;
  check_same_shape(x, y, "min");
  Node n = binary_node(Op::kMin, a, b);
  n.value = Tensor(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i)
    n.value[i] = x[i] <= y[i] ? x[i] : y[i];
  return t.emit(std::move(n));
}

Value emax(Value a, Value b) {
  Tape& t = tape_of(a, b);
  const Tensor &x = t.node(a).value, &y = t.node(b).value;
  check_same_shape(x, y, "max");
  Node n = binary_node(Op::kMax, a, b);
  n.value = Tensor(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i)
    n.value[i] = x[i] >= y[i] ? x[i] : y[i];
  return t.emit(std::move(n));
}

Value clamp(Value a, double lo, double hi) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  Node n = unary_node(Op::kClamp, a);
  n.c = lo;
  n.c2 = hi;
  n.value = Tensor(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i)
    n.value[i] = std::min(std::max(x[i], lo), hi);
  return t.emit(std::move(n));
}

Value sigmoid(Value a) {
  return unary_map(Op::kSigmoid, a, [](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  });
}

Value exp(Value a) {
  return unary_map(Op::kExp, a, [](double x) { return std::exp(x); });
}

Value log(Value a) {
  const Tensor& x = tape_of(a).node(a).value;
  for (std::int64_t i = 0; i < x.size(); ++i)
    require(x[i] > 0.0, "log: input must be strictly positive, got ", x[i],
            " at index ", i);
  return unary_map(Op::kLog, a, [](double x) { return std::log(x); });
}

Value sin(Value a) {
  return unary_map(Op::kSin, a, [](double x) { return std::sin(x); });
}

Value cos(Value a) {
  return unary_map(Op::kCos, a, [](double x) { return std::cos(x); });
}

Value softmax(Value a) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  Node n = unary_node(Op::kSoftmax, a);
  n.value = Tensor(x.shape());
  auto [rows, cols] = last_axis_view(x);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = n.value.data() + r * cols;
    double mx = xr[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      denom += yr[j];
    }
    for (int j = 0; j < cols; ++j) yr[j] /= denom;
  }
  return t.emit(std::move(n));
}

Value layer_norm(Value a) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  Node n = unary_node(Op::kLayerNorm, a);
  n.value = Tensor(x.shape());
  auto [rows, cols] = last_axis_view(x);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = n.value.data() + r * cols;
    const double mu = K().sum(xr, cols) / cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= cols;
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    for (int j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * inv_std;
  }
  return t.emit(std::move(n));
}

Value concat(Value a, Value b, int axis) {
  Tape& t = tape_of(a, b);
  const Tensor &x = t.node(a).value, &y = t.node(b).value;
  require(x.rank() == y.rank(), "concat: rank mismatch ",
          shape_str(x.shape()), " vs ", shape_str(y.shape()));
  require(axis >= 0 && axis < x.rank(), "concat: bad axis ", axis);
  for (int i = 0; i < x.rank(); ++i)
    require(i == axis || x.dim(i) == y.dim(i), "concat: shape mismatch ",
            shape_str(x.shape()), " vs ", shape_str(y.shape()));
  std::vector<int> shape = x.shape();
  shape[axis] += y.dim(axis);
  Node n = binary_node(Op::kConcat, a, b);
  n.axis = axis;
  n.value = Tensor(shape);
  std::int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  const std::int64_t la = x.dim(axis) * inner, lb = y.dim(axis) * inner;
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(x.data() + o * la, la, n.value.data() + o * (la + lb));
    std::copy_n(y.data() + o * lb, lb, n.value.data() + o * (la + lb) + la);
  }
  return t.emit(std::move(n));
}

Value slice(Value a, int axis, int start, int len) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  require(axis >= 0 && axis < x.rank(), "slice: bad axis ", axis);
  require(start >= 0 && len > 0 && start + len <= x.dim(axis),
          "slice: range [", start, ",", start + len, ") out of bounds for axis ",
          axis, " of ", shape_str(x.shape()));
  std::vector<int> shape = x.shape();
  shape[axis] = len;
  Node n = unary_node(Op::kSlice, a);
  n.axis = axis;
  n.start = start;
  n.len = len;
  n.value = Tensor(shape);
  std::int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  const std::int64_t span = x.dim(axis) * inner;
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(x.data() + o * span + start * inner, len * inner,
                n.value.data() + o * len * inner);
  return t.emit(std::move(n));
}

Value sum(Value a) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  Node n = unary_node(Op::kSum, a);
  n.value = Tensor::scalar(K().sum(x.data(), x.size()));
  return t.emit(std::move(n));
}

Value mean(Value a) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  Node n = unary_node(Op::kMean, a);
  n.value = Tensor::scalar(K().sum(x.data(), x.size()) /
                           static_cast<double>(x.size()));
  return t.emit(std::move(n));
}

Value l1_distance(Value a, Value b) {
  Tape& t = tape_of(a, b);
  const Tensor &x = t.node(a).value, &y = t.node(b).value;
  check_same_shape(x, y, "l1_distance");
  Node n = binary_node(Op::kL1Distance, a, b);
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) acc += std::fabs(x[i] - y[i]);
  n.value = Tensor::scalar(acc / static_cast<double>(x.size()));
  return t.emit(std::move(n));
}

Value l2_norm(Value a) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  Node n = unary_node(Op::kL2Norm, a);
  n.value = Tensor::scalar(std::sqrt(K().dot(x.data(), x.data(), x.size())));
  return t.emit(std::move(n));
}

Value matmul(Value a, Value b) {
  Tape& t = tape_of(a, b);
  const Tensor &x = t.node(a).value, &y = t.node(b).value;
  require(x.rank() == 2 && y.rank() == 2, "matmul: operands must be 2D, got ",
          shape_str(x.shape()), " and ", shape_str(y.shape()));
  require(x.cols() == y.rows(), "matmul: inner dimension mismatch ",
          shape_str(x.shape()), " vs ", shape_str(y.shape()));
  Node n = binary_node(Op::kMatmul, a, b);
  n.value = Tensor({x.rows(), y.cols()});
  K().matmul_acc(n.value.data(), x.data(), y.data(), x.rows(), x.cols(),
                 y.cols());
  return t.emit(std::move(n));
}

Value transpose(Value a) {
  Tape& t = tape_of(a);
  const Tensor& x = t.node(a).value;
  require(x.rank() == 2, "transpose: operand must be 2D, got ",
          shape_str(x.shape()));
  Node n = unary_node(Op::kTranspose, a);
  n.value = Tensor({x.cols(), x.rows()});
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j)
      n.value[j * x.rows() + i] = x[i * x.cols() + j];
  return t.emit(std::move(n));
}

Value add_row(Value a, Value row) {
  Tape& t = tape_of(a, row);
  const Tensor &x = t.node(a).value, &r = t.node(row).value;
  require(x.rank() == 2 && r.rank() == 1 && r.dim(0) == x.cols(),
          "add_row: shape mismatch ", shape_str(x.shape()), " vs ",
          shape_str(r.shape()));
  Node n = binary_node(Op::kAddRow, a, row);
  n.value = Tensor(x.shape());
  for (int i = 0; i < x.rows(); ++i)
    K().add(n.value.data() + i * x.cols(), x.data() + i * x.cols(), r.data(),
            x.cols());
  return t.emit(std::move(n));
}

Value mul_row(Value a, Value row) {
  Tape& t = tape_of(a, row);
  const Tensor &x = t.node(a).value, &r = t.node(row).value;
  require(x.rank() == 2 && r.rank() == 1 && r.dim(0) == x.cols(),
          "mul_row: shape mismatch ", shape_str(x.shape()), " vs ",
          shape_str(r.shape()));
  Node n = binary_node(Op::kMulRow, a, row);
  n.value = Tensor(x.shape());
  for (int i = 0; i < x.rows(); ++i)
    K().mul(n.value.data() + i * x.cols(), x.data() + i * x.cols(), r.data(),
            x.cols());
  return t.emit(std::move(n));
}

Value bce_logits(Value logits, Value targets) {
  Tape& t = tape_of(logits, targets);
  const Tensor &x = t.node(logits).value, &y = t.node(targets).value;
  check_same_shape(x, y, "bce_logits");
  Node n = binary_node(Op::kBceLogits, logits, targets);
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i)
    acc += std::max(x[i], 0.0) - x[i] * y[i] + std::log1p(std::exp(-std::fabs(x[i])));
  n.value = Tensor::scalar(acc / static_cast<double>(x.size()));
  return t.emit(std::move(n));
}

Value forward_op(OpKind kind, const std::vector<Value>& inputs, int axis,
                 int start, int len) {
  require(!inputs.empty(), "forward_op: no inputs");
  switch (kind) {
    case OpKind::add: return add(inputs.at(0), inputs.at(1));
    case OpKind::sub: return sub(inputs.at(0), inputs.at(1));
    case OpKind::mul: return mul(inputs.at(0), inputs.at(1));
    case OpKind::matmul: return matmul(inputs.at(0), inputs.at(1));
    case OpKind::relu: return relu(inputs.at(0));
    case OpKind::sigmoid: return sigmoid(inputs.at(0));
    case OpKind::exp: return exp(inputs.at(0));
    case OpKind::log: return log(inputs.at(0));
    case OpKind::softmax: return softmax(inputs.at(0));
    case OpKind::layer_norm: return layer_norm(inputs.at(0));
    case OpKind::concat: return concat(inputs.at(0), inputs.at(1), axis);
    case OpKind::slice: return slice(inputs.at(0), axis, start, len);
    case OpKind::sum: return sum(inputs.at(0));
    case OpKind::mean: return mean(inputs.at(0));
    case OpKind::l1_distance: return l1_distance(inputs.at(0), inputs.at(1));
    case OpKind::l2_norm: return l2_norm(inputs.at(0));
  }
  fail("forward_op: unknown kind");
}

}  // namespace sfield
