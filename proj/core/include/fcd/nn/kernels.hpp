#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fcd/nn/param.hpp"
#include "fcd/rng.hpp"

namespace fcd::nn {

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// ---------------------------------------------------------------------------
// Conv2d: zero-padded convolution on planar CHW data, im2col + GEMM.
// ---------------------------------------------------------------------------

template <typename S>
struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 1, stride = 1, pad = 0;
  Param<S> w;  // [out_ch, in_ch*k*k]
  Param<S> b;  // [out_ch]

  void init(const std::string& name, int in_c, int out_c, int k, int s, int p, Rng& rng) {
    in_ch = in_c;
    out_ch = out_c;
    ksize = k;
    stride = s;
    pad = p;
    w.resize(name + ".w", {out_c, in_c * k * k});
    b.resize(name + ".b", {out_c});
    double stddev = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
    for (auto& v : w.value) v = static_cast<S>(rng.normal(0.0, stddev));
  }

  int out_extent(int in_extent) const { return (in_extent + 2 * pad - ksize) / stride + 1; }

  void im2col(const S* in, int h, int wd, std::vector<S>& cols) const {
    int oh = out_extent(h), ow = out_extent(wd);
    int patch = in_ch * ksize * ksize;
    cols.resize(static_cast<size_t>(patch) * oh * ow);
    S* dst = cols.data();
    for (int ci = 0; ci < in_ch; ++ci) {
      const S* plane = in + static_cast<size_t>(ci) * h * wd;
      for (int ky = 0; ky < ksize; ++ky)
        for (int kx = 0; kx < ksize; ++kx) {
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) {
              for (int ox = 0; ox < ow; ++ox) *dst++ = S(0);
              continue;
            }
            const S* row = plane + static_cast<size_t>(iy) * wd;
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride - pad + kx;
              *dst++ = (ix < 0 || ix >= wd) ? S(0) : row[ix];
            }
          }
        }
    }
  }

  // out: [out_ch, oh*ow]; cols filled as a side effect for backward.
  void forward(const S* in, int h, int wd, S* out, std::vector<S>& cols) const {
    int oh = out_extent(h), ow = out_extent(wd);
    int n = oh * ow, patch = in_ch * ksize * ksize;
    im2col(in, h, wd, cols);
    ConstMatMap<S> wm(w.value.data(), out_ch, patch);
    ConstMatMap<S> cm(cols.data(), patch, n);
    MatMap<S> om(out, out_ch, n);
    om.noalias() = wm * cm;
    for (int oc = 0; oc < out_ch; ++oc) om.row(oc).array() += b.value[static_cast<size_t>(oc)];
  }

  // din (nullable) must be zeroed by the caller; gradient is scatter-added.
  void backward(const S* dout, int h, int wd, const std::vector<S>& cols, S* din,
                std::vector<S>& dcols_scratch) {
    int oh = out_extent(h), ow = out_extent(wd);
    int n = oh * ow, patch = in_ch * ksize * ksize;
    ConstMatMap<S> dom(dout, out_ch, n);
    ConstMatMap<S> cm(cols.data(), patch, n);
    MatMap<S> dwm(w.grad.data(), out_ch, patch);
    dwm.noalias() += dom * cm.transpose();
    for (int oc = 0; oc < out_ch; ++oc) b.grad[static_cast<size_t>(oc)] += dom.row(oc).sum();
    if (!din) return;

    dcols_scratch.resize(static_cast<size_t>(patch) * n);
    ConstMatMap<S> wm(w.value.data(), out_ch, patch);
    MatMap<S> dcm(dcols_scratch.data(), patch, n);
    dcm.noalias() = wm.transpose() * dom;

    const S* src = dcols_scratch.data();
    for (int ci = 0; ci < in_ch; ++ci) {
      S* plane = din + static_cast<size_t>(ci) * h * wd;
      for (int ky = 0; ky < ksize; ++ky)
        for (int kx = 0; kx < ksize; ++kx) {
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) {
              src += ow;
              continue;
            }
            S* row = plane + static_cast<size_t>(iy) * wd;
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < wd) row[ix] += src[ox];
            }
            src += ow;
          }
        }
    }
  }

  void collect_params(std::vector<Param<S>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

// ---------------------------------------------------------------------------
// Depthwise 3x3 convolution, stride 1, zero pad 1, no bias.
// ---------------------------------------------------------------------------

template <typename S>
struct DepthwiseConv3x3 {
  int channels = 0;
  Param<S> w;  // [channels, 9]

  void init(const std::string& name, int c, Rng& rng) {
    channels = c;
    w.resize(name + ".w", {c, 9});
    double stddev = std::sqrt(2.0 / 9.0);
    for (auto& v : w.value) v = static_cast<S>(rng.normal(0.0, stddev));
  }

  void forward(const S* in, int h, int wd, S* out) const {
    for (int c = 0; c < channels; ++c) {
      const S* plane = in + static_cast<size_t>(c) * h * wd;
      const S* k = &w.value[static_cast<size_t>(c) * 9];
      S* op = out + static_cast<size_t>(c) * h * wd;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < wd; ++x) {
          S acc = S(0);
          for (int ky = -1; ky <= 1; ++ky) {
            int iy = y + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = -1; kx <= 1; ++kx) {
              int ix = x + kx;
              if (ix < 0 || ix >= wd) continue;
              acc += k[(ky + 1) * 3 + (kx + 1)] * plane[static_cast<size_t>(iy) * wd + ix];
            }
          }
          op[static_cast<size_t>(y) * wd + x] = acc;
        }
    }
  }

  // din (nullable) must be zeroed by the caller.
  void backward(const S* in, const S* dout, int h, int wd, S* din) {
    for (int c = 0; c < channels; ++c) {
      const S* plane = in + static_cast<size_t>(c) * h * wd;
      const S* k = &w.value[static_cast<size_t>(c) * 9];
      S* gk = &w.grad[static_cast<size_t>(c) * 9];
      const S* dop = dout + static_cast<size_t>(c) * h * wd;
      S* dip = din ? din + static_cast<size_t>(c) * h * wd : nullptr;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < wd; ++x) {
          S g = dop[static_cast<size_t>(y) * wd + x];
          for (int ky = -1; ky <= 1; ++ky) {
            int iy = y + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = -1; kx <= 1; ++kx) {
              int ix = x + kx;
              if (ix < 0 || ix >= wd) continue;
              gk[(ky + 1) * 3 + (kx + 1)] += g * plane[static_cast<size_t>(iy) * wd + ix];
              if (dip) dip[static_cast<size_t>(iy) * wd + ix] += g * k[(ky + 1) * 3 + (kx + 1)];
            }
          }
        }
    }
  }

  void collect_params(std::vector<Param<S>*>& out) { out.push_back(&w); }
};

// ---------------------------------------------------------------------------
// Linear layer.
// ---------------------------------------------------------------------------

template <typename S>
struct Linear {
  int in_features = 0, out_features = 0;
  Param<S> w;  // [out, in]
  Param<S> b;  // [out]

  void init(const std::string& name, int in_f, int out_f, Rng& rng, double stddev = -1.0) {
    in_features = in_f;
    out_features = out_f;
    w.resize(name + ".w", {out_f, in_f});
    b.resize(name + ".b", {out_f});
    if (stddev < 0) stddev = std::sqrt(2.0 / in_f);
    if (stddev > 0)
      for (auto& v : w.value) v = static_cast<S>(rng.normal(0.0, stddev));
  }

  void forward(const S* in, S* out) const {
    ConstMatMap<S> wm(w.value.data(), out_features, in_features);
    Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>> iv(in, in_features);
    Eigen::Map<Eigen::Vector<S, Eigen::Dynamic>> ov(out, out_features);
    ov.noalias() = wm * iv;
    for (int i = 0; i < out_features; ++i) ov[i] += b.value[static_cast<size_t>(i)];
  }

  void backward(const S* in, const S* dout, S* din) {
    ConstMatMap<S> wm(w.value.data(), out_features, in_features);
    MatMap<S> dwm(w.grad.data(), out_features, in_features);
    Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>> iv(in, in_features);
    Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>> dov(dout, out_features);
    dwm.noalias() += dov * iv.transpose();
    for (int i = 0; i < out_features; ++i) b.grad[static_cast<size_t>(i)] += dout[i];
    if (din) {
      Eigen::Map<Eigen::Vector<S, Eigen::Dynamic>> div(din, in_features);
      div.noalias() += wm.transpose() * dov;
    }
  }

  void collect_params(std::vector<Param<S>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

// ---------------------------------------------------------------------------
// Elementwise and pooling helpers.
// ---------------------------------------------------------------------------

template <typename S>
void relu_forward(S* x, size_t n) {
  for (size_t i = 0; i < n; ++i) x[i] = x[i] > S(0) ? x[i] : S(0);
}

// dx *= 1[activation > 0]; `activated` is the post-relu buffer.
template <typename S>
void relu_backward(const S* activated, S* dx, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (!(activated[i] > S(0))) dx[i] = S(0);
}

template <typename S>
void maxpool2x2_forward(const S* in, int c, int h, int wd, S* out, uint8_t* argmax) {
  int oh = h / 2, ow = wd / 2;
  for (int ci = 0; ci < c; ++ci) {
    const S* plane = in + static_cast<size_t>(ci) * h * wd;
    S* op = out + static_cast<size_t>(ci) * oh * ow;
    uint8_t* am = argmax + static_cast<size_t>(ci) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const S* p = plane + static_cast<size_t>(2 * y) * wd + 2 * x;
        S v0 = p[0], v1 = p[1], v2 = p[wd], v3 = p[wd + 1];
        int best = 0;
        S bv = v0;
        if (v1 > bv) { bv = v1; best = 1; }
        if (v2 > bv) { bv = v2; best = 2; }
        if (v3 > bv) { bv = v3; best = 3; }
        op[static_cast<size_t>(y) * ow + x] = bv;
        am[static_cast<size_t>(y) * ow + x] = static_cast<uint8_t>(best);
      }
  }
}

// din must be zeroed by the caller.
template <typename S>
void maxpool2x2_backward(const S* dout, int c, int h, int wd, const uint8_t* argmax, S* din) {
  int oh = h / 2, ow = wd / 2;
  for (int ci = 0; ci < c; ++ci) {
    S* dip = din + static_cast<size_t>(ci) * h * wd;
    const S* dop = dout + static_cast<size_t>(ci) * oh * ow;
    const uint8_t* am = argmax + static_cast<size_t>(ci) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        int a = am[static_cast<size_t>(y) * ow + x];
        int iy = 2 * y + (a >> 1), ix = 2 * x + (a & 1);
        dip[static_cast<size_t>(iy) * wd + ix] += dop[static_cast<size_t>(y) * ow + x];
      }
  }
}

template <typename S>
void global_avg_pool_forward(const S* in, int c, int hw, S* out) {
  for (int ci = 0; ci < c; ++ci) {
    S acc = S(0);
    const S* p = in + static_cast<size_t>(ci) * hw;
    for (int i = 0; i < hw; ++i) acc += p[i];
    out[ci] = acc / static_cast<S>(hw);
  }
}

// din must be zeroed by the caller.
template <typename S>
void global_avg_pool_backward(const S* dout, int c, int hw, S* din) {
  for (int ci = 0; ci < c; ++ci) {
    S g = dout[ci] / static_cast<S>(hw);
    S* p = din + static_cast<size_t>(ci) * hw;
    for (int i = 0; i < hw; ++i) p[i] += g;
  }
}

// ---------------------------------------------------------------------------
// Bilinear 2x upsampling (half-pixel centers).
// ---------------------------------------------------------------------------

struct UpsampleTap {
  int i0, i1;
  double w0, w1;
};

inline UpsampleTap upsample2x_tap(int o, int n_in) {
  double src = 0.5 * (o + 0.5) - 0.5;
  int i0 = static_cast<int>(std::floor(src));
  double f = src - i0;
  UpsampleTap t;
  t.i0 = std::clamp(i0, 0, n_in - 1);
  t.i1 = std::clamp(i0 + 1, 0, n_in - 1);
  t.w0 = 1.0 - f;
  t.w1 = f;
  return t;
}

template <typename S>
void upsample2x_forward(const S* in, int c, int h, int wd, S* out) {
  int oh = 2 * h, ow = 2 * wd;
  for (int ci = 0; ci < c; ++ci) {
    const S* plane = in + static_cast<size_t>(ci) * h * wd;
    S* op = out + static_cast<size_t>(ci) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      UpsampleTap ty = upsample2x_tap(y, h);
      for (int x = 0; x < ow; ++x) {
        UpsampleTap tx = upsample2x_tap(x, wd);
        double v = ty.w0 * (tx.w0 * plane[static_cast<size_t>(ty.i0) * wd + tx.i0] +
                            tx.w1 * plane[static_cast<size_t>(ty.i0) * wd + tx.i1]) +
                   ty.w1 * (tx.w0 * plane[static_cast<size_t>(ty.i1) * wd + tx.i0] +
                            tx.w1 * plane[static_cast<size_t>(ty.i1) * wd + tx.i1]);
        op[static_cast<size_t>(y) * ow + x] = static_cast<S>(v);
      }
    }
  }
}

// din must be zeroed by the caller.
template <typename S>
void upsample2x_backward(const S* dout, int c, int h, int wd, S* din) {
  int oh = 2 * h, ow = 2 * wd;
  for (int ci = 0; ci < c; ++ci) {
    S* dip = din + static_cast<size_t>(ci) * h * wd;
    const S* dop = dout + static_cast<size_t>(ci) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      UpsampleTap ty = upsample2x_tap(y, h);
      for (int x = 0; x < ow; ++x) {
        UpsampleTap tx = upsample2x_tap(x, wd);
        S g = dop[static_cast<size_t>(y) * ow + x];
        dip[static_cast<size_t>(ty.i0) * wd + tx.i0] += static_cast<S>(ty.w0 * tx.w0) * g;
        dip[static_cast<size_t>(ty.i0) * wd + tx.i1] += static_cast<S>(ty.w0 * tx.w1) * g;
        dip[static_cast<size_t>(ty.i1) * wd + tx.i0] += static_cast<S>(ty.w1 * tx.w0) * g;
        dip[static_cast<size_t>(ty.i1) * wd + tx.i1] += static_cast<S>(ty.w1 * tx.w1) * g;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Softmax and losses.
// ---------------------------------------------------------------------------

template <typename S>
void softmax(const S* logits, int n, S* probs) {
  S mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  S sum = S(0);
  for (int i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (int i = 0; i < n; ++i) probs[i] /= sum;
}

// Cross entropy with integer label; dlogits (nullable) is assigned
// scale * (softmax - onehot).
template <typename S>
S softmax_xent(const S* logits, int n, int label, S* dlogits, S scale) {
  std::vector<S> p(static_cast<size_t>(n));
  softmax(logits, n, p.data());
  S loss = -std::log(std::max(p[static_cast<size_t>(label)], S(1e-12)));
  if (dlogits) {
    for (int i = 0; i < n; ++i) dlogits[i] = scale * (p[static_cast<size_t>(i)] - S(i == label));
  }
  return loss;
}

// Jacobian-vector product of softmax: dz = p .* (dp - <dp, p>).
template <typename S>
void softmax_backward(const S* probs, const S* dprobs, int n, S* dlogits) {
  S dot = S(0);
  for (int i = 0; i < n; ++i) dot += dprobs[i] * probs[i];
  for (int i = 0; i < n; ++i) dlogits[i] = probs[i] * (dprobs[i] - dot);
}

// Two-channel planar cross entropy over all pixels; labels are the binary
// mask. Returns the mean loss; dlogits (nullable) assigned with the 1/hw
// factor folded in, times `scale`.
template <typename S>
S seg_xent2(const S* logits, int hw, const uint8_t* labels, S* dlogits, S scale) {
  S total = S(0);
  S inv = S(1) / static_cast<S>(hw);
  for (int i = 0; i < hw; ++i) {
    S z0 = logits[i], z1 = logits[hw + i];
    S mx = std::max(z0, z1);
    S e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
    S sum = e0 + e1;
    S p0 = e0 / sum, p1 = e1 / sum;
    int y = labels[i] ? 1 : 0;
    total += -std::log(std::max(y ? p1 : p0, S(1e-12)));
    if (dlogits) {
      dlogits[i] = scale * inv * (p0 - S(y == 0));
      dlogits[hw + i] = scale * inv * (p1 - S(y == 1));
    }
  }
  return total * inv;
}

// Logistic loss on a single logit; target_sign is +1 (real) or -1 (fake).
// dlogit (nullable) is assigned scale * dloss/dz.
template <typename S>
S logistic_loss(S logit, int target_sign, S* dlogit, S scale) {
  S yz = static_cast<S>(target_sign) * logit;
  // softplus(-yz), numerically stable on both sides
  S loss = yz > S(0) ? std::log1p(std::exp(-yz)) : -yz + std::log1p(std::exp(yz));
  if (dlogit) {
    S sig = yz > S(0) ? std::exp(-yz) / (S(1) + std::exp(-yz)) : S(1) / (S(1) + std::exp(yz));
    *dlogit = scale * (-static_cast<S>(target_sign) * sig);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// BatchNorm over feature vectors (used by the fusion classifier).
// ---------------------------------------------------------------------------

template <typename S>
struct BatchNorm1d {
  int features = 0;
  double momentum = 0.1;
  double eps = 1e-5;
  Param<S> gamma, beta;
  std::vector<S> running_mean, running_var;

  struct Cache {
    std::vector<S> xmu;      // [n, features]
    std::vector<S> inv_std;  // [features]
    int n = 0;
    bool training = false;
  };

  void init(const std::string& name, int f) {
    features = f;
    gamma.resize(name + ".gamma", {f});
    beta.resize(name + ".beta", {f});
    std::fill(gamma.value.begin(), gamma.value.end(), S(1));
    running_mean.assign(static_cast<size_t>(f), S(0));
    running_var.assign(static_cast<size_t>(f), S(1));
  }

  // x, y: [n, features] row-major. In training mode batch statistics are
  // used (and pushed into the running estimates when update_running).
  void forward(const S* x, int n, S* y, bool training, bool update_running, Cache& cache) {
    cache.n = n;
    cache.training = training;
    cache.xmu.resize(static_cast<size_t>(n) * features);
    cache.inv_std.resize(static_cast<size_t>(features));
    for (int f = 0; f < features; ++f) {
      S mean, var;
      if (training) {
        S m = S(0);
        for (int i = 0; i < n; ++i) m += x[static_cast<size_t>(i) * features + f];
        mean = m / static_cast<S>(n);
        S v = S(0);
        for (int i = 0; i < n; ++i) {
          S d = x[static_cast<size_t>(i) * features + f] - mean;
          v += d * d;
        }
        var = v / static_cast<S>(n);
        if (update_running) {
          S unbiased = n > 1 ? v / static_cast<S>(n - 1) : var;
          running_mean[static_cast<size_t>(f)] =
              static_cast<S>((1.0 - momentum) * running_mean[static_cast<size_t>(f)] + momentum * mean);
          running_var[static_cast<size_t>(f)] =
              static_cast<S>((1.0 - momentum) * running_var[static_cast<size_t>(f)] + momentum * unbiased);
        }
      } else {
        mean = running_mean[static_cast<size_t>(f)];
        var = running_var[static_cast<size_t>(f)];
      }
      S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
      cache.inv_std[static_cast<size_t>(f)] = inv;
      for (int i = 0; i < n; ++i) {
        S xm = x[static_cast<size_t>(i) * features + f] - mean;
        cache.xmu[static_cast<size_t>(i) * features + f] = xm;
        y[static_cast<size_t>(i) * features + f] =
            gamma.value[static_cast<size_t>(f)] * xm * inv + beta.value[static_cast<size_t>(f)];
      }
    }
  }

  // dx (nullable) must be zeroed by the caller; adds into it.
  void backward(const Cache& cache, const S* dy, S* dx) {
    const int n = cache.n;
    for (int f = 0; f < features; ++f) {
      S inv = cache.inv_std[static_cast<size_t>(f)];
      S g = gamma.value[static_cast<size_t>(f)];
      S sum_dy = S(0), sum_dy_xhat = S(0);
      for (int i = 0; i < n; ++i) {
        S xhat = cache.xmu[static_cast<size_t>(i) * features + f] * inv;
        S d = dy[static_cast<size_t>(i) * features + f];
        sum_dy += d;
        sum_dy_xhat += d * xhat;
      }
      gamma.grad[static_cast<size_t>(f)] += sum_dy_xhat;
      beta.grad[static_cast<size_t>(f)] += sum_dy;
      if (!dx) continue;
      if (cache.training) {
        for (int i = 0; i < n; ++i) {
          S xhat = cache.xmu[static_cast<size_t>(i) * features + f] * inv;
          S d = dy[static_cast<size_t>(i) * features + f];
          dx[static_cast<size_t>(i) * features + f] +=
              g * inv * (d - sum_dy / static_cast<S>(n) - xhat * sum_dy_xhat / static_cast<S>(n));
        }
      } else {
        for (int i = 0; i < n; ++i)
          dx[static_cast<size_t>(i) * features + f] += g * inv * dy[static_cast<size_t>(i) * features + f];
      }
    }
  }

  void collect_params(std::vector<Param<S>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

}  // namespace fcd::nn
