#include <algorithm>

#include "sfield/tape.hpp"

// Volumetric and transposed-2D convolutions for the scene encoder and the
// feature-plane generator. Channels-first layouts; direct loops in a fixed
// order so forward and backward are deterministic.

namespace sfield {

namespace {

int out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

Value conv3d(Value x, Value w, Value b, int stride, int pad) {
  Tape& t = *x.tape;
  const Tensor& xv = t.node(x).value;
  const Tensor& wv = t.node(w).value;
  const Tensor& bv = t.node(b).value;
  require(xv.rank() == 4, "conv3d: input must be [Cin,D,H,W], got ",
          shape_str(xv.shape()));
  require(wv.rank() == 5, "conv3d: weight must be [Cout,Cin,k,k,k], got ",
          shape_str(wv.shape()));
  require(wv.dim(1) == xv.dim(0), "conv3d: channel mismatch ",
          shape_str(xv.shape()), " vs ", shape_str(wv.shape()));
  require(wv.dim(2) == wv.dim(3) && wv.dim(3) == wv.dim(4),
          "conv3d: kernel must be cubic, got ", shape_str(wv.shape()));
  require(bv.rank() == 1 && bv.dim(0) == wv.dim(0), "conv3d: bias mismatch");
  require(stride >= 1 && pad >= 0, "conv3d: bad stride/pad");

  const int ci = xv.dim(0), d = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const int co = wv.dim(0), k = wv.dim(2);
  const int od = out_extent(d, k, stride, pad);
  const int oh = out_extent(h, k, stride, pad);
  const int ow = out_extent(wd, k, stride, pad);
  require(od > 0 && oh > 0 && ow > 0, "conv3d: empty output for input ",
          shape_str(xv.shape()));

  Node n;
  n.op = Op::kConv3d;
  n.in = {x.id, w.id, b.id};
  n.stride = stride;
  n.pad = pad;
  n.value = Tensor({co, od, oh, ow});
  Tensor& out = n.value;
  for (int oc = 0; oc < co; ++oc)
    for (int z = 0; z < od; ++z)
      for (int y = 0; y < oh; ++y)
        for (int xq = 0; xq < ow; ++xq) {
          double acc = bv[oc];
          for (int ic = 0; ic < ci; ++ic)
            for (int kz = 0; kz < k; ++kz) {
              const int iz = z * stride + kz - pad;
              if (iz < 0 || iz >= d) continue;
              for (int ky = 0; ky < k; ++ky) {
                const int iy = y * stride + ky - pad;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = xq * stride + kx - pad;
                  if (ix < 0 || ix >= wd) continue;
                  acc += xv[((ic * d + iz) * h + iy) * wd + ix] *
                         wv[(((oc * ci + ic) * k + kz) * k + ky) * k + kx];
                }
              }
            }
          out[((oc * od + z) * oh + y) * ow + xq] = acc;
        }
  return t.emit(std::move(n));
}

Value conv_transpose2d(Value x, Value w, Value b, int stride, int pad) {
  Tape& t = *x.tape;
  const Tensor& xv = t.node(x).value;
  const Tensor& wv = t.node(w).value;
  const Tensor& bv = t.node(b).value;
  require(xv.rank() == 3, "conv_transpose2d: input must be [Cin,H,W], got ",
          shape_str(xv.shape()));
  require(wv.rank() == 4, "conv_transpose2d: weight must be [Cin,Cout,k,k]");
  require(wv.dim(0) == xv.dim(0), "conv_transpose2d: channel mismatch");
  require(wv.dim(2) == wv.dim(3), "conv_transpose2d: kernel must be square");
  require(bv.rank() == 1 && bv.dim(0) == wv.dim(1),
          "conv_transpose2d: bias mismatch");

  const int ci = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
  const int co = wv.dim(1), k = wv.dim(2);
  const int oh = (h - 1) * stride + k - 2 * pad;
  const int ow = (wd - 1) * stride + k - 2 * pad;
  require(oh > 0 && ow > 0, "conv_transpose2d: empty output");

  Node n;
  n.op = Op::kConvT2d;
  n.in = {x.id, w.id, b.id};
  n.stride = stride;
  n.pad = pad;
  n.value = Tensor({co, oh, ow});
  Tensor& out = n.value;
  for (int oc = 0; oc < co; ++oc)
    std::fill_n(out.data() + oc * oh * ow, oh * ow, bv[oc]);
  for (int ic = 0; ic < ci; ++ic)
    for (int y = 0; y < h; ++y)
      for (int xq = 0; xq < wd; ++xq) {
        const double xval = xv[(ic * h + y) * wd + xq];
        for (int oc = 0; oc < co; ++oc)
          for (int ky = 0; ky < k; ++ky) {
            const int oy = y * stride + ky - pad;
            if (oy < 0 || oy >= oh) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ox = xq * stride + kx - pad;
              if (ox < 0 || ox >= ow) continue;
              out[(oc * oh + oy) * ow + ox] +=
                  xval * wv[((ic * co + oc) * k + ky) * k + kx];
            }
          }
      }
  return t.emit(std::move(n));
}

Value chw_to_hwc(Value a) {
  Tape& t = *a.tape;
  const Tensor& x = t.node(a).value;
  require(x.rank() == 3, "chw_to_hwc: input must be [C,H,W], got ",
          shape_str(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Node n;
  n.op = Op::kChwToHwc;
  n.in = {a.id};
  n.value = Tensor({h, w, c});
  for (int ic = 0; ic < c; ++ic)
    for (int y = 0; y < h; ++y)
      for (int xq = 0; xq < w; ++xq)
        n.value[(y * w + xq) * c + ic] = x[(ic * h + y) * w + xq];
  return t.emit(std::move(n));
}

void Tape::backward_conv(const Node& n, const Tensor& g) {
  switch (n.op) {
    case Op::kConv3d: {
      const Tensor& xv = nodes_[n.in[0]].value;
      const Tensor& wv = nodes_[n.in[1]].value;
      Tensor& dx = grad_slot(n.in[0]);
      Tensor& dw = grad_slot(n.in[1]);
      Tensor& db = grad_slot(n.in[2]);
      const int ci = xv.dim(0), d = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
      const int co = wv.dim(0), k = wv.dim(2);
      const int od = n.value.dim(1), oh = n.value.dim(2), ow = n.value.dim(3);
      for (int oc = 0; oc < co; ++oc)
        for (int z = 0; z < od; ++z)
          for (int y = 0; y < oh; ++y)
            for (int xq = 0; xq < ow; ++xq) {
              const double gv = g[((oc * od + z) * oh + y) * ow + xq];
              if (gv == 0.0) continue;
              db[oc] += gv;
              for (int ic = 0; ic < ci; ++ic)
                for (int kz = 0; kz < k; ++kz) {
                  const int iz = z * n.stride + kz - n.pad;
                  if (iz < 0 || iz >= d) continue;
                  for (int ky = 0; ky < k; ++ky) {
                    const int iy = y * n.stride + ky - n.pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                      const int ix = xq * n.stride + kx - n.pad;
                      if (ix < 0 || ix >= wd) continue;
                      const std::int64_t xi = ((ic * d + iz) * h + iy) * wd + ix;
                      const std::int64_t wi =
                          (((oc * ci + ic) * k + kz) * k + ky) * k + kx;
                      dx[xi] += gv * wv[wi];
                      dw[wi] += gv * xv[xi];
                    }
                  }
                }
            }
      break;
    }
    case Op::kConvT2d: {
      const Tensor& xv = nodes_[n.in[0]].value;
      const Tensor& wv = nodes_[n.in[1]].value;
      Tensor& dx = grad_slot(n.in[0]);
      Tensor& dw = grad_slot(n.in[1]);
      Tensor& db = grad_slot(n.in[2]);
      const int ci = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
      const int co = wv.dim(1), k = wv.dim(2);
      const int oh = n.value.dim(1), ow = n.value.dim(2);
      for (int oc = 0; oc < co; ++oc)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i)
          db[oc] += g[oc * oh * ow + i];
      for (int ic = 0; ic < ci; ++ic)
        for (int y = 0; y < h; ++y)
          for (int xq = 0; xq < wd; ++xq) {
            const std::int64_t xi = (ic * h + y) * wd + xq;
            const double xval = xv[xi];
            for (int oc = 0; oc < co; ++oc)
              for (int ky = 0; ky < k; ++ky) {
                const int oy = y * n.stride + ky - n.pad;
                if (oy < 0 || oy >= oh) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int ox = xq * n.stride + kx - n.pad;
                  if (ox < 0 || ox >= ow) continue;
                  const double gv = g[(oc * oh + oy) * ow + ox];
                  const std::int64_t wi = ((ic * co + oc) * k + ky) * k + kx;
                  dx[xi] += gv * wv[wi];
                  dw[wi] += gv * xval;
                }
              }
          }
      break;
    }
    case Op::kChwToHwc: {
      const Tensor& x = nodes_[n.in[0]].value;
      Tensor& dx = grad_slot(n.in[0]);
      const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
      for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < h; ++y)
          for (int xq = 0; xq < w; ++xq)
            dx[(ic * h + y) * w + xq] += g[(y * w + xq) * c + ic];
      break;
    }
    default:
      fail("backward_conv: unexpected op");
  }
}

Value reshape(Value a, std::vector<int> shape) {
  Tape& t = *a.tape;
  const Tensor& x = t.node(a).value;
  Tensor reshaped(std::move(shape));
  require(reshaped.size() == x.size(), "reshape: size mismatch ",
          shape_str(x.shape()), " -> ", shape_str(reshaped.shape()));
  std::copy_n(x.data(), x.size(), reshaped.data());
  Node n;
  n.op = Op::kReshape;
  n.in = {a.id};
  n.value = std::move(reshaped);
  return t.emit(std::move(n));
}

}  // namespace sfield
