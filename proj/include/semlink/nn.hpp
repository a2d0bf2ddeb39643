#pragma once

// Dense building blocks with explicit forward/backward passes.
//
// Activations are row-major matrices: one row per pixel (NHWC flattened, so
// row = (b * H + y) * W + x) or per token, one column per channel. Weights
// are stored in the checkpoint order [kh, kw, cin, cout] / [in, out], which
// maps directly onto a (kh*kw*cin) x cout row-major matrix.

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace semlink::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<Mat<T>>;
template <class T>
using CMatMap = Eigen::Map<const Mat<T>>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <class T>
using CRowMap = Eigen::Map<const RowVec<T>>;
template <class T>
using RowMap = Eigen::Map<RowVec<T>>;

// Borrowed view of one weight tensor and its gradient slot.
template <class T>
struct WeightRef {
  const T* value = nullptr;
  T* grad = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  CMatMap<T> mat() const { return CMatMap<T>(value, rows, cols); }
  MatMap<T> grad_mat() const { return MatMap<T>(grad, rows, cols); }
};

template <class T>
struct BiasRef {
  const T* value = nullptr;
  T* grad = nullptr;
  Eigen::Index size = 0;

  CRowMap<T> vec() const { return CRowMap<T>(value, size); }
  RowMap<T> grad_vec() const { return RowMap<T>(grad, size); }
};

// ---------------------------------------------------------------- linear

template <class T>
Mat<T> linear_forward(const Mat<T>& x, const WeightRef<T>& w, const BiasRef<T>* b) {
  Mat<T> y = x * w.mat();
  if (b) y.rowwise() += b->vec();
  return y;
}

// Accumulates dW, db; returns dx when want_dx.
template <class T>
Mat<T> linear_backward(const Mat<T>& x, const Mat<T>& dy, const WeightRef<T>& w, const BiasRef<T>* b,
                       bool want_dx = true) {
  w.grad_mat().noalias() += x.transpose() * dy;
  if (b) b->grad_vec() += dy.colwise().sum();
  if (!want_dx) return {};
  return dy * w.mat().transpose();
}

// ---------------------------------------------------------------- activations

template <class T>
void relu_inplace(Mat<T>& x) {
  x = x.cwiseMax(T(0));
}

// Masks dy by the ReLU output (zero where the activation was clipped).
template <class T>
void relu_backward_inplace(Mat<T>& dy, const Mat<T>& activated) {
  dy = (activated.array() > T(0)).select(dy, T(0));
}

// Exact GELU: x * Phi(x).
template <class T>
Mat<T> gelu_forward(const Mat<T>& x) {
  return x.unaryExpr([](T v) { return T(0.5) * v * (T(1) + std::erf(v * T(std::numbers::sqrt2 / 2))); });
}

template <class T>
Mat<T> gelu_backward(const Mat<T>& x, const Mat<T>& dy) {
  const T inv_sqrt2pi = T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  Mat<T> d = x.unaryExpr([inv_sqrt2pi](T v) {
    const T cdf = T(0.5) * (T(1) + std::erf(v * T(std::numbers::sqrt2 / 2)));
    return cdf + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v);
  });
  return d.cwiseProduct(dy);
}

// ---------------------------------------------------------------- layer norm

template <class T>
struct LayerNormCache {
  Mat<T> xhat;
  std::vector<T> inv_std;
};

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
Mat<T> layernorm_forward(const Mat<T>& x, const BiasRef<T>& gamma, const BiasRef<T>& beta,
                         LayerNormCache<T>& cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  cache.xhat.resize(n, d);
  cache.inv_std.resize(static_cast<std::size_t>(n));
  Mat<T> y(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    const T inv = T(1) / std::sqrt(var + T(kLayerNormEps));
    cache.inv_std[static_cast<std::size_t>(r)] = inv;
    cache.xhat.row(r) = (x.row(r).array() - mean) * inv;
  }
  y = cache.xhat.array().rowwise() * gamma.vec().array();
  y.rowwise() += beta.vec();
  return y;
}

template <class T>
Mat<T> layernorm_backward(const Mat<T>& dy, const BiasRef<T>& gamma, const BiasRef<T>& beta,
                          const LayerNormCache<T>& cache) {
  gamma.grad_vec() += (dy.cwiseProduct(cache.xhat)).colwise().sum();
  beta.grad_vec() += dy.colwise().sum();
  Mat<T> dxhat = dy.array().rowwise() * gamma.vec().array();
  const Eigen::Index n = dy.rows();
  const T inv_d = T(1) / T(dy.cols());
  Mat<T> dx(n, dy.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const T m1 = dxhat.row(r).sum() * inv_d;
    const T m2 = dxhat.row(r).dot(cache.xhat.row(r)) * inv_d;
    dx.row(r) = (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2) *
                cache.inv_std[static_cast<std::size_t>(r)];
  }
  return dx;
}

// ---------------------------------------------------------------- convolution

struct ConvGeometry {
  int batch = 1;
  int height = 32;
  int width = 32;
  int cin = 3;
  int cout = 3;
  int kernel = 3;  // square, odd; padding = kernel / 2
  int stride = 1;

  int out_height() const { return (height + 2 * (kernel / 2) - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * (kernel / 2) - kernel) / stride + 1; }
};

// One image's patch matrix: rows = output pixels, cols = (ky, kx, cin).
template <class T>
void im2col(const T* img, const ConvGeometry& g, Mat<T>& cols) {
  const int ho = g.out_height(), wo = g.out_width(), pad = g.kernel / 2;
  cols.setZero(static_cast<Eigen::Index>(ho) * wo, static_cast<Eigen::Index>(g.kernel) * g.kernel * g.cin);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      T* row = cols.data() + (static_cast<Eigen::Index>(oy) * wo + ox) * cols.cols();
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int iy = oy * g.stride + ky - pad;
        if (iy < 0 || iy >= g.height) continue;
        for (int kx = 0; kx < g.kernel; ++kx) {
          const int ix = ox * g.stride + kx - pad;
          if (ix < 0 || ix >= g.width) continue;
          const T* src = img + (static_cast<std::size_t>(iy) * g.width + ix) * g.cin;
          T* dst = row + (ky * g.kernel + kx) * g.cin;
          for (int c = 0; c < g.cin; ++c) dst[c] = src[c];
        }
      }
    }
  }
}

template <class T>
void col2im_add(const Mat<T>& cols, const ConvGeometry& g, T* img_grad) {
  const int ho = g.out_height(), wo = g.out_width(), pad = g.kernel / 2;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const T* row = cols.data() + (static_cast<Eigen::Index>(oy) * wo + ox) * cols.cols();
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int iy = oy * g.stride + ky - pad;
        if (iy < 0 || iy >= g.height) continue;
        for (int kx = 0; kx < g.kernel; ++kx) {
          const int ix = ox * g.stride + kx - pad;
          if (ix < 0 || ix >= g.width) continue;
          T* dst = img_grad + (static_cast<std::size_t>(iy) * g.width + ix) * g.cin;
          const T* src = row + (ky * g.kernel + kx) * g.cin;
          for (int c = 0; c < g.cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

template <class T>
Mat<T> conv_forward(const Mat<T>& x, const ConvGeometry& g, const WeightRef<T>& w, const BiasRef<T>& b) {
  if (x.rows() != static_cast<Eigen::Index>(g.batch) * g.height * g.width || x.cols() != g.cin) {
    throw std::invalid_argument("conv_forward: input shape mismatch");
  }
  if (g.kernel == 1 && g.stride == 1) return linear_forward(x, w, &b);
  const Eigen::Index out_px = static_cast<Eigen::Index>(g.out_height()) * g.out_width();
  const Eigen::Index in_px = static_cast<Eigen::Index>(g.height) * g.width;
  Mat<T> y(out_px * g.batch, g.cout);
  Mat<T> cols;
  for (int n = 0; n < g.batch; ++n) {
    im2col(x.data() + n * in_px * g.cin, g, cols);
    y.middleRows(n * out_px, out_px).noalias() = cols * w.mat();
  }
  y.rowwise() += b.vec();
  return y;
}

template <class T>
Mat<T> conv_backward(const Mat<T>& x, const Mat<T>& dy, const ConvGeometry& g, const WeightRef<T>& w,
                     const BiasRef<T>& b, bool want_dx = true) {
  if (g.kernel == 1 && g.stride == 1) return linear_backward(x, dy, w, &b, want_dx);
  const Eigen::Index out_px = static_cast<Eigen::Index>(g.out_height()) * g.out_width();
  const Eigen::Index in_px = static_cast<Eigen::Index>(g.height) * g.width;
  b.grad_vec() += dy.colwise().sum();
  Mat<T> dx;
  if (want_dx) dx.setZero(x.rows(), x.cols());
  Mat<T> cols, dcols;
  auto dw = w.grad_mat();
  for (int n = 0; n < g.batch; ++n) {
    im2col(x.data() + n * in_px * g.cin, g, cols);
    const auto dy_n = dy.middleRows(n * out_px, out_px);
    dw.noalias() += cols.transpose() * dy_n;
    if (want_dx) {
      dcols.noalias() = dy_n * w.mat().transpose();
      col2im_add(dcols, g, dx.data() + n * in_px * g.cin);
    }
  }
  return dx;
}

// Nearest-neighbour x2 upsampling on NHWC rows.
template <class T>
Mat<T> upsample2_forward(const Mat<T>& x, int batch, int h, int w) {
  const Eigen::Index c = x.cols();
  Mat<T> y(static_cast<Eigen::Index>(batch) * 4 * h * w, c);
  for (int n = 0; n < batch; ++n)
    for (int oy = 0; oy < 2 * h; ++oy)
      for (int ox = 0; ox < 2 * w; ++ox)
        y.row((static_cast<Eigen::Index>(n) * 2 * h + oy) * 2 * w + ox) =
            x.row((static_cast<Eigen::Index>(n) * h + oy / 2) * w + ox / 2);
  return y;
}

template <class T>
Mat<T> upsample2_backward(const Mat<T>& dy, int batch, int h, int w) {
  Mat<T> dx = Mat<T>::Zero(static_cast<Eigen::Index>(batch) * h * w, dy.cols());
  for (int n = 0; n < batch; ++n)
    for (int oy = 0; oy < 2 * h; ++oy)
      for (int ox = 0; ox < 2 * w; ++ox)
        dx.row((static_cast<Eigen::Index>(n) * h + oy / 2) * w + ox / 2) +=
            dy.row((static_cast<Eigen::Index>(n) * 2 * h + oy) * 2 * w + ox);
  return dx;
}

// ---------------------------------------------------------------- attention

template <class T>
struct AttentionCache {
  Mat<T> qkv;                 // (B*T) x 3d
  std::vector<Mat<T>> probs;  // one T x T softmax matrix per (batch, head)
};

// Multi-head scaled dot-product self-attention over the packed [Q | K | V]
// projection. Returns the concatenated head outputs, (B*T) x d.
template <class T>
Mat<T> attention_forward(const Mat<T>& qkv, int batch, int tokens, int heads, AttentionCache<T>& cache) {
  const Eigen::Index d = qkv.cols() / 3;
  const Eigen::Index dh = d / heads;
  const T scale = T(1) / std::sqrt(T(dh));
  cache.qkv = qkv;
  cache.probs.assign(static_cast<std::size_t>(batch) * heads, Mat<T>());
  Mat<T> out(qkv.rows(), d);
  for (int n = 0; n < batch; ++n) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(n) * tokens;
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.block(r0, h * dh, tokens, dh);
      const auto k = qkv.block(r0, d + h * dh, tokens, dh);
      const auto v = qkv.block(r0, 2 * d + h * dh, tokens, dh);
      Mat<T>& p = cache.probs[static_cast<std::size_t>(n) * heads + h];
      p.noalias() = (q * k.transpose()) * scale;
      for (Eigen::Index r = 0; r < tokens; ++r) {
        const T mx = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - mx).exp();
        p.row(r) /= p.row(r).sum();
      }
      out.block(r0, h * dh, tokens, dh).noalias() = p * v;
    }
  }
  return out;
}

// Returns d(qkv).
template <class T>
Mat<T> attention_backward(const Mat<T>& dout, int batch, int tokens, int heads, const AttentionCache<T>& cache) {
  const Eigen::Index d = dout.cols();
  const Eigen::Index dh = d / heads;
  const T scale = T(1) / std::sqrt(T(dh));
  const Mat<T>& qkv = cache.qkv;
  Mat<T> dqkv(qkv.rows(), qkv.cols());
  Mat<T> dp, ds;
  for (int n = 0; n < batch; ++n) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(n) * tokens;
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.block(r0, h * dh, tokens, dh);
      const auto k = qkv.block(r0, d + h * dh, tokens, dh);
      const auto v = qkv.block(r0, 2 * d + h * dh, tokens, dh);
      const Mat<T>& p = cache.probs[static_cast<std::size_t>(n) * heads + h];
      const auto go = dout.block(r0, h * dh, tokens, dh);
      dqkv.block(r0, 2 * d + h * dh, tokens, dh).noalias() = p.transpose() * go;
      dp.noalias() = go * v.transpose();
      // softmax backward: ds = p * (dp - rowsum(p * dp))
      const Eigen::Matrix<T, Eigen::Dynamic, 1> row_dot = p.cwiseProduct(dp).rowwise().sum();
      dp.colwise() -= row_dot;
      ds = p.cwiseProduct(dp) * scale;
      dqkv.block(r0, h * dh, tokens, dh).noalias() = ds * k;
      dqkv.block(r0, d + h * dh, tokens, dh).noalias() = ds.transpose() * q;
    }
  }
  return dqkv;
}

}  // namespace semlink::nn
