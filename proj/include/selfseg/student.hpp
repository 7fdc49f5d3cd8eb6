#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "selfseg/densecrf.hpp"
#include "selfseg/image.hpp"
#include "selfseg/rng.hpp"

namespace selfseg {

// Encoder-decoder with one skip connection per stage:
//
//   conv3x3+relu -> pool2 -> conv3x3+relu -> pool2 -> conv3x3+relu
//   -> up2 -> concat(enc2) -> conv3x3+relu -> up2 -> concat(enc1)
//   -> conv3x3+relu -> conv1x1 -> sigmoid
//
// Decoder features come first in each concatenation, encoder skip second.
struct StudentArch {
  int input_size = 64;
  int c1 = 8;
  int c2 = 16;
  int c3 = 32;

  static constexpr int kKernel = 3;
  static constexpr int kPool = 2;
  static constexpr int kDepth = 2;

  void validate() const {
    if (input_size < kPool * kPool || input_size % (kPool * kPool) != 0)
      throw std::invalid_argument("input_size must be a positive multiple of 4");
    if (c1 < 1 || c2 < 1 || c3 < 1)
      throw std::invalid_argument("channel widths must be positive");
  }

  bool operator==(const StudentArch&) const = default;
};

namespace detail {

struct LayerSpec {
  int out_ch, in_ch, k;
  std::size_t w_off, b_off;
  std::size_t weights() const { return static_cast<std::size_t>(out_ch) * in_ch * k * k; }
};

enum Layer { kEnc1 = 0, kEnc2, kBottleneck, kDec1, kDec2, kHead, kLayerCount };

inline std::array<LayerSpec, kLayerCount> layer_specs(const StudentArch& a) {
  std::array<LayerSpec, kLayerCount> specs{};
  const std::array<std::array<int, 3>, kLayerCount> dims = {{
      {a.c1, 1, 3},            // enc1
      {a.c2, a.c1, 3},         // enc2
      {a.c3, a.c2, 3},         // bottleneck
      {a.c2, a.c3 + a.c2, 3},  // dec1 on concat(up(bottleneck), enc2)
      {a.c1, a.c2 + a.c1, 3},  // dec2 on concat(up(dec1), enc1)
      {1, a.c1, 1},            // head
  }};
  std::size_t off = 0;
  for (int i = 0; i < kLayerCount; ++i) {
    specs[i].out_ch = dims[i][0];
    specs[i].in_ch = dims[i][1];
    specs[i].k = dims[i][2];
    specs[i].w_off = off;
    off += specs[i].weights();
    specs[i].b_off = off;
    off += specs[i].out_ch;
  }
  return specs;
}

inline std::size_t param_count(const StudentArch& a) {
  const auto specs = layer_specs(a);
  const auto& last = specs[kLayerCount - 1];
  return last.b_off + last.out_ch;
}

}  // namespace detail

// All weights and biases in one flat buffer, layer by layer (weights then
// bias), so optimizer steps, checkpoints and gradient checks can treat the
// model as a single vector.
struct StudentParams {
  StudentArch arch;
  std::vector<double> flat;

  std::span<double> weights(int layer) {
    const auto s = detail::layer_specs(arch)[layer];
    return {flat.data() + s.w_off, s.weights()};
  }
  std::span<const double> weights(int layer) const {
    const auto s = detail::layer_specs(arch)[layer];
    return {flat.data() + s.w_off, s.weights()};
  }
  std::span<double> bias(int layer) {
    const auto s = detail::layer_specs(arch)[layer];
    return {flat.data() + s.b_off, static_cast<std::size_t>(s.out_ch)};
  }
  std::span<const double> bias(int layer) const {
    const auto s = detail::layer_specs(arch)[layer];
    return {flat.data() + s.b_off, static_cast<std::size_t>(s.out_ch)};
  }
};

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int epochs = 12;
  int batch_size = 4;
  double dice_smooth = 1.0;
  std::uint64_t seed = 0;
  bool augment_online = true;
  AugmentParams augment;

  void validate() const {
    if (learning_rate < 0) throw std::invalid_argument("learning_rate must be >= 0");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("momentum must be in [0,1)");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (dice_smooth <= 0) throw std::invalid_argument("dice_smooth must be > 0");
    augment.validate();
  }
};

// Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline StudentParams init_params(const StudentArch& arch, std::uint64_t seed) {
  arch.validate();
  StudentParams params;
  params.arch = arch;
  params.flat.assign(detail::param_count(arch), 0.0);
  Rng rng(seed);
  for (int layer = 0; layer < detail::kLayerCount; ++layer) {
    const auto spec = detail::layer_specs(arch)[layer];
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.in_ch) * spec.k * spec.k);
    for (std::size_t i = 0; i < spec.weights(); ++i)
      params.flat[spec.w_off + i] = rng.uniform(-scale, scale);
  }
  return params;
}

namespace detail {

struct FeatureMap {
  int ch = 0, h = 0, w = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int ch_, int h_, int w_)
      : ch(ch_), h(h_), w(w_), data(static_cast<std::size_t>(ch_) * h_ * w_, 0.0) {}

  double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * h * w; }
  const double* plane(int c) const { return data.data() + static_cast<std::size_t>(c) * h * w; }
};

// Same-size correlation with zero padding (k odd). out must be presized.
inline void conv_forward(std::span<const double> w, std::span<const double> b,
                         const FeatureMap& in, int k, FeatureMap& out) {
  const int pad = k / 2, h = in.h, wd = in.w;
  for (int oc = 0; oc < out.ch; ++oc) {
    double* op = out.plane(oc);
    std::fill(op, op + static_cast<std::size_t>(h) * wd, b[oc]);
  }
  for (int oc = 0; oc < out.ch; ++oc) {
    double* op = out.plane(oc);
    for (int ic = 0; ic < in.ch; ++ic) {
      const double* ip = in.plane(ic);
      const double* wt = w.data() + (static_cast<std::size_t>(oc) * in.ch + ic) * k * k;
      for (int dr = -pad; dr <= pad; ++dr) {
        for (int dc = -pad; dc <= pad; ++dc) {
          const double wv = wt[(dr + pad) * k + (dc + pad)];
          const int r0 = std::max(0, -dr), r1 = std::min(h, h - dr);
          const int c0 = std::max(0, -dc), c1 = std::min(wd, wd - dc);
          for (int r = r0; r < r1; ++r) {
            double* orow = op + static_cast<std::size_t>(r) * wd;
            const double* irow = ip + static_cast<std::size_t>(r + dr) * wd + dc;
            for (int c = c0; c < c1; ++c) orow[c] += wv * irow[c];
          }
        }
      }
    }
  }
}

// Gradients w.r.t. weights/bias and (optionally) the layer input.
inline void conv_backward(std::span<const double> w, const FeatureMap& in,
                          const FeatureMap& dout, int k, std::span<double> dw,
                          std::span<double> db, FeatureMap* din) {
  const int pad = k / 2, h = in.h, wd = in.w;
  for (int oc = 0; oc < dout.ch; ++oc) {
    const double* gp = dout.plane(oc);
    double acc = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * wd; ++i) acc += gp[i];
    db[oc] += acc;
    for (int ic = 0; ic < in.ch; ++ic) {
      const double* ip = in.plane(ic);
      double* dwt = dw.data() + (static_cast<std::size_t>(oc) * in.ch + ic) * k * k;
      double* dip = din ? din->plane(ic) : nullptr;
      const double* wt = w.data() + (static_cast<std::size_t>(oc) * in.ch + ic) * k * k;
      for (int dr = -pad; dr <= pad; ++dr) {
        for (int dc = -pad; dc <= pad; ++dc) {
          const int r0 = std::max(0, -dr), r1 = std::min(h, h - dr);
          const int c0 = std::max(0, -dc), c1 = std::min(wd, wd - dc);
          double wacc = 0.0;
          const double wv = wt[(dr + pad) * k + (dc + pad)];
          for (int r = r0; r < r1; ++r) {
            const double* grow = gp + static_cast<std::size_t>(r) * wd;
            const double* irow = ip + static_cast<std::size_t>(r + dr) * wd + dc;
            double* drow = dip ? dip + static_cast<std::size_t>(r + dr) * wd + dc : nullptr;
            for (int c = c0; c < c1; ++c) {
              wacc += grow[c] * irow[c];
              if (drow) drow[c] += wv * grow[c];
            }
          }
          dwt[(dr + pad) * k + (dc + pad)] += wacc;
        }
      }
    }
  }
}

inline void relu_inplace(FeatureMap& z) {
  for (double& v : z.data) v = v > 0.0 ? v : 0.0;
}

// 2x2 max pooling; argmax (first in TL,TR,BL,BR scan order) recorded for
// the backward pass.
inline void maxpool2(const FeatureMap& in, FeatureMap& out, std::vector<std::uint32_t>& idx) {
  const int oh = in.h / 2, ow = in.w / 2;
  out = FeatureMap(in.ch, oh, ow);
  idx.assign(static_cast<std::size_t>(in.ch) * oh * ow, 0);
  for (int c = 0; c < in.ch; ++c) {
    const double* ip = in.plane(c);
    double* op = out.plane(c);
    std::uint32_t* xp = idx.data() + static_cast<std::size_t>(c) * oh * ow;
    for (int r = 0; r < oh; ++r) {
      for (int cc = 0; cc < ow; ++cc) {
        double best = -std::numeric_limits<double>::infinity();
        std::uint32_t best_at = 0;
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) {
            const std::uint32_t at = (2 * r + i) * in.w + (2 * cc + j);
            if (ip[at] > best) {
              best = ip[at];
              best_at = at;
            }
          }
        }
        op[static_cast<std::size_t>(r) * ow + cc] = best;
        xp[static_cast<std::size_t>(r) * ow + cc] = best_at;
      }
    }
  }
}

inline void maxpool2_backward(const FeatureMap& dout, const std::vector<std::uint32_t>& idx,
                              FeatureMap& din) {
  const int oh = dout.h, ow = dout.w;
  for (int c = 0; c < dout.ch; ++c) {
    const double* gp = dout.plane(c);
    double* dp = din.plane(c);
    const std::uint32_t* xp = idx.data() + static_cast<std::size_t>(c) * oh * ow;
    for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) dp[xp[i]] += gp[i];
  }
}

inline void upsample2(const FeatureMap& in, FeatureMap& out) {
  out = FeatureMap(in.ch, in.h * 2, in.w * 2);
  for (int c = 0; c < in.ch; ++c) {
    const double* ip = in.plane(c);
    double* op = out.plane(c);
    for (int r = 0; r < out.h; ++r)
      for (int cc = 0; cc < out.w; ++cc)
        op[static_cast<std::size_t>(r) * out.w + cc] =
            ip[static_cast<std::size_t>(r / 2) * in.w + cc / 2];
  }
}

inline void upsample2_backward(const FeatureMap& dout, FeatureMap& din) {
  for (int c = 0; c < din.ch; ++c) {
    const double* gp = dout.plane(c);
    double* dp = din.plane(c);
    for (int r = 0; r < dout.h; ++r)
      for (int cc = 0; cc < dout.w; ++cc)
        dp[static_cast<std::size_t>(r / 2) * din.w + cc / 2] +=
            gp[static_cast<std::size_t>(r) * dout.w + cc];
  }
}

inline FeatureMap concat(const FeatureMap& a, const FeatureMap& b) {
  FeatureMap out(a.ch + b.ch, a.h, a.w);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

}  // namespace detail

// Everything backward() needs from a forward pass.
struct ForwardCache {
  detail::FeatureMap x0;                    // standardized input
  detail::FeatureMap z1, a1, p1;            // enc1 pre/post relu, pooled
  detail::FeatureMap z2, a2, p2;            // enc2
  detail::FeatureMap z3, a3;                // bottleneck
  detail::FeatureMap cat1, z4, a4;          // dec1
  detail::FeatureMap cat2, z5, a5;          // dec2
  detail::FeatureMap z6;                    // head pre-sigmoid
  std::vector<double> p;                    // sigmoid output, foreground plane
  std::vector<std::uint32_t> idx1, idx2;    // pooling argmax
};

// Forward pass. The input is standardized internally (mean 0, std 1), so
// callers feed raw [0,1] images. Output stores (1-p, p) per pixel.
inline ProbMap forward(const StudentParams& params, const GrayImage& img, ForwardCache& cache) {
  const StudentArch& a = params.arch;
  if (img.height != a.input_size || img.width != a.input_size)
    throw std::invalid_argument("input size does not match architecture");
  const auto specs = detail::layer_specs(a);
  const int s = a.input_size;

  const GrayImage norm = normalize(img);
  cache.x0 = detail::FeatureMap(1, s, s);
  std::copy(norm.data.begin(), norm.data.end(), cache.x0.data.begin());

  auto conv = [&](int layer, const detail::FeatureMap& in, detail::FeatureMap& z) {
    z = detail::FeatureMap(specs[layer].out_ch, in.h, in.w);
    detail::conv_forward(params.weights(layer), params.bias(layer), in, specs[layer].k, z);
  };

  conv(detail::kEnc1, cache.x0, cache.z1);
  cache.a1 = cache.z1;
  detail::relu_inplace(cache.a1);
  detail::maxpool2(cache.a1, cache.p1, cache.idx1);

  conv(detail::kEnc2, cache.p1, cache.z2);
  cache.a2 = cache.z2;
  detail::relu_inplace(cache.a2);
  detail::maxpool2(cache.a2, cache.p2, cache.idx2);

  conv(detail::kBottleneck, cache.p2, cache.z3);
  cache.a3 = cache.z3;
  detail::relu_inplace(cache.a3);

  detail::FeatureMap u1;
  detail::upsample2(cache.a3, u1);
  cache.cat1 = detail::concat(u1, cache.a2);
  conv(detail::kDec1, cache.cat1, cache.z4);
  cache.a4 = cache.z4;
  detail::relu_inplace(cache.a4);

  detail::FeatureMap u2;
  detail::upsample2(cache.a4, u2);
  cache.cat2 = detail::concat(u2, cache.a1);
  conv(detail::kDec2, cache.cat2, cache.z5);
  cache.a5 = cache.z5;
  detail::relu_inplace(cache.a5);

  conv(detail::kHead, cache.a5, cache.z6);

  cache.p.resize(static_cast<std::size_t>(s) * s);
  ProbMap probs(s, s, 2);
  for (std::size_t i = 0; i < cache.p.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-cache.z6.data[i]));
    cache.p[i] = p;
    probs.data[2 * i] = 1.0 - p;
    probs.data[2 * i + 1] = p;
  }
  return probs;
}

// loss = 1 - (2 sum(p*t) + smooth) / (sum(p) + sum(t) + smooth)
inline double dice_loss(std::span<const double> pred_fg, const BinaryMask& target,
                        double smooth) {
  if (pred_fg.size() != target.data.size())
    throw std::invalid_argument("prediction/target dimension mismatch");
  if (smooth < 0) throw std::invalid_argument("smooth must be >= 0");
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < pred_fg.size(); ++i) {
    inter += pred_fg[i] * target.data[i];
    psum += pred_fg[i];
    tsum += target.data[i];
  }
  return 1.0 - (2.0 * inter + smooth) / (psum + tsum + smooth);
}

namespace detail {

// d(dice_loss)/d(pred) written into dp, scaled by `scale`.
inline void dice_loss_grad(std::span<const double> pred_fg, const BinaryMask& target,
                           double smooth, double scale, std::span<double> dp) {
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < pred_fg.size(); ++i) {
    inter += pred_fg[i] * target.data[i];
    psum += pred_fg[i];
    tsum += target.data[i];
  }
  const double denom = psum + tsum + smooth;
  const double num = 2.0 * inter + smooth;
  const double inv_d2 = 1.0 / (denom * denom);
  for (std::size_t i = 0; i < pred_fg.size(); ++i)
    dp[i] = scale * (num - 2.0 * target.data[i] * denom) * inv_d2;
}

inline void relu_backward_inplace(const FeatureMap& z, FeatureMap& dz) {
  for (std::size_t i = 0; i < dz.data.size(); ++i)
    if (z.data[i] <= 0.0) dz.data[i] = 0.0;
}

}  // namespace detail

// Exact analytic gradient of dice_loss(forward(params, img), target) for
// every parameter; accumulates into `grads` (same layout as params.flat)
// scaled by `scale` (1/batch for batch means).
inline void backward(const StudentParams& params, const ForwardCache& cache,
                     const BinaryMask& target, double smooth, double scale,
                     std::vector<double>& grads) {
  const StudentArch& a = params.arch;
  if (target.height != a.input_size || target.width != a.input_size)
    throw std::invalid_argument("target size does not match architecture");
  if (cache.p.size() != static_cast<std::size_t>(a.input_size) * a.input_size)
    throw std::invalid_argument("stale forward cache");
  if (grads.size() != params.flat.size()) throw std::invalid_argument("gradient buffer size");
  const auto specs = detail::layer_specs(a);

  auto dw = [&](int layer) {
    return std::span<double>(grads.data() + specs[layer].w_off, specs[layer].weights());
  };
  auto db = [&](int layer) {
    return std::span<double>(grads.data() + specs[layer].b_off,
                             static_cast<std::size_t>(specs[layer].out_ch));
  };

  const int s = a.input_size;
  // dL/dz6 = dL/dp * sigmoid'
  detail::FeatureMap dz6(1, s, s);
  detail::dice_loss_grad(cache.p, target, smooth, scale,
                         std::span<double>(dz6.data.data(), dz6.data.size()));
  for (std::size_t i = 0; i < dz6.data.size(); ++i)
    dz6.data[i] *= cache.p[i] * (1.0 - cache.p[i]);

  detail::FeatureMap da5(a.c1, s, s);
  detail::conv_backward(params.weights(detail::kHead), cache.a5, dz6, 1, dw(detail::kHead),
                        db(detail::kHead), &da5);

  detail::relu_backward_inplace(cache.z5, da5);
  detail::FeatureMap dcat2(a.c2 + a.c1, s, s);
  detail::conv_backward(params.weights(detail::kDec2), cache.cat2, da5, 3, dw(detail::kDec2),
                        db(detail::kDec2), &dcat2);

  // split concat(up(dec1), enc1)
  detail::FeatureMap du2(a.c2, s, s), da1(a.c1, s, s);
  std::copy_n(dcat2.data.begin(), du2.data.size(), du2.data.begin());
  std::copy_n(dcat2.data.begin() + du2.data.size(), da1.data.size(), da1.data.begin());

  detail::FeatureMap da4(a.c2, s / 2, s / 2);
  detail::upsample2_backward(du2, da4);
  detail::relu_backward_inplace(cache.z4, da4);
  detail::FeatureMap dcat1(a.c3 + a.c2, s / 2, s / 2);
  detail::conv_backward(params.weights(detail::kDec1), cache.cat1, da4, 3, dw(detail::kDec1),
                        db(detail::kDec1), &dcat1);

  detail::FeatureMap du1(a.c3, s / 2, s / 2), da2(a.c2, s / 2, s / 2);
  std::copy_n(dcat1.data.begin(), du1.data.size(), du1.data.begin());
  std::copy_n(dcat1.data.begin() + du1.data.size(), da2.data.size(), da2.data.begin());

  detail::FeatureMap da3(a.c3, s / 4, s / 4);
  detail::upsample2_backward(du1, da3);
  detail::relu_backward_inplace(cache.z3, da3);
  detail::FeatureMap dp2(a.c2, s / 4, s / 4);
  detail::conv_backward(params.weights(detail::kBottleneck), cache.p2, da3, 3,
                        dw(detail::kBottleneck), db(detail::kBottleneck), &dp2);

  detail::maxpool2_backward(dp2, cache.idx2, da2);
  detail::relu_backward_inplace(cache.z2, da2);
  detail::FeatureMap dp1(a.c1, s / 2, s / 2);
  detail::conv_backward(params.weights(detail::kEnc2), cache.p1, da2, 3, dw(detail::kEnc2),
                        db(detail::kEnc2), &dp1);

  detail::maxpool2_backward(dp1, cache.idx1, da1);
  detail::relu_backward_inplace(cache.z1, da1);
  detail::conv_backward(params.weights(detail::kEnc1), cache.x0, da1, 3, dw(detail::kEnc1),
                        db(detail::kEnc1), nullptr);
}

// v <- momentum * v + g;  params <- params - lr * v
inline void sgd_step(StudentParams& params, const std::vector<double>& grads,
                     std::vector<double>& velocity, const TrainConfig& cfg) {
  if (grads.size() != params.flat.size() || velocity.size() != params.flat.size())
    throw std::invalid_argument("sgd buffers must match parameter count");
  for (std::size_t i = 0; i < params.flat.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + grads[i];
    params.flat[i] -= cfg.learning_rate * velocity[i];
  }
}

struct Prediction {
  ProbMap probs;
  BinaryMask mask;
};

// Forward pass and threshold: p >= 0.5 maps to foreground.
inline Prediction predict(const StudentParams& params, const GrayImage& img) {
  ForwardCache cache;
  ProbMap probs = forward(params, img, cache);
  BinaryMask mask(img.height, img.width);
  for (int i = 0; i < img.pixels(); ++i) mask.data[i] = cache.p[i] >= 0.5 ? 1 : 0;
  return {std::move(probs), std::move(mask)};
}

namespace detail {
inline constexpr std::uint64_t kShuffleStream = 0x73687566666c6531ULL;
inline constexpr std::uint64_t kAugmentStream = 0x6175676d656e7431ULL;
}  // namespace detail

struct TrainResult {
  StudentParams params;
  std::vector<double> loss_history;  // per-epoch mean sample loss
};

// Momentum SGD over seeded shuffled mini-batches; optional per-epoch online
// augmentation. Bit-deterministic given (seed, data order, config).
inline TrainResult train(StudentParams params,
                         const std::vector<std::pair<GrayImage, BinaryMask>>& samples,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("training set is empty");
  for (const auto& [img, mask] : samples) {
    if (img.height != params.arch.input_size || img.width != params.arch.input_size)
      throw std::invalid_argument("sample size does not match architecture");
    require_same_shape(img, mask);
  }

  std::vector<double> history;
  std::vector<double> velocity(params.flat.size(), 0.0);
  std::vector<double> grads(params.flat.size(), 0.0);
  std::vector<std::size_t> order(samples.size());
  ForwardCache cache;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, detail::kShuffleStream, epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t si = order[b];
        const GrayImage* img = &samples[si].first;
        const BinaryMask* mask = &samples[si].second;
        GrayImage aug_img;
        BinaryMask aug_mask;
        if (cfg.augment_online) {
          Rng aug_rng(mix_seed(mix_seed(cfg.seed, detail::kAugmentStream, epoch), si));
          std::tie(aug_img, aug_mask) = augment(*img, *mask, cfg.augment, aug_rng);
          img = &aug_img;
          mask = &aug_mask;
        }
        forward(params, *img, cache);
        epoch_loss += dice_loss(cache.p, *mask, cfg.dice_smooth);
        backward(params, cache, *mask, cfg.dice_smooth, scale, grads);
      }
      sgd_step(params, grads, velocity, cfg);
    }
    history.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  return {std::move(params), std::move(history)};
}

// --- checkpoint format ------------------------------------------------------
//
//   bytes 0..7   magic "SSEGNET1"
//   4 x u32 LE   input_size, c1, c2, c3
//   u64 LE       parameter count (must match the architecture)
//   n x f64 LE   parameters in declaration order

namespace detail {

inline constexpr char kCkptMagic[8] = {'S', 'S', 'E', 'G', 'N', 'E', 'T', '1'};

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const StudentParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(detail::kCkptMagic, 8);
  detail::put_u32(out, static_cast<std::uint32_t>(params.arch.input_size));
  detail::put_u32(out, static_cast<std::uint32_t>(params.arch.c1));
  detail::put_u32(out, static_cast<std::uint32_t>(params.arch.c2));
  detail::put_u32(out, static_cast<std::uint32_t>(params.arch.c3));
  detail::put_u64(out, params.flat.size());
  for (double v : params.flat) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    detail::put_u64(out, bits);
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline StudentParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": no such file or cannot be opened");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw std::runtime_error(path + ": not a student checkpoint");
  StudentArch arch;
  arch.input_size = static_cast<int>(detail::get_u32(in));
  arch.c1 = static_cast<int>(detail::get_u32(in));
  arch.c2 = static_cast<int>(detail::get_u32(in));
  arch.c3 = static_cast<int>(detail::get_u32(in));
  if (!in) throw std::runtime_error(path + ": truncated checkpoint header");
  arch.validate();
  const std::uint64_t n = detail::get_u64(in);
  if (n != detail::param_count(arch))
    throw std::runtime_error(path + ": parameter count does not match architecture");
  StudentParams params;
  params.arch = arch;
  params.flat.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t bits = detail::get_u64(in);
    std::memcpy(&params.flat[i], &bits, 8);
  }
  if (!in) throw std::runtime_error(path + ": truncated checkpoint");
  return params;
}

// Checks whether a file starts with the checkpoint magic.
inline bool is_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  in.read(magic, 8);
  return in && std::memcmp(magic, detail::kCkptMagic, 8) == 0;
}

}  // namespace selfseg
