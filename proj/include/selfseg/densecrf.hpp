#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "selfseg/image.hpp"

namespace selfseg {

// Channel features are byte-scale (intensity * 255), the convention 8-bit
// dense-CRF tooling assumes; channel bandwidths like schan=10 are meaningless
// against [0,1] intensities.
inline constexpr double kIntensityFeatureScale = 255.0;

// Per-pixel label distribution, layout (row*width + col)*num_labels + label.
struct ProbMap {
  int height = 0;
  int width = 0;
  int num_labels = 2;
  std::vector<double> data;

  ProbMap() = default;
  ProbMap(int h, int w, int labels)
      : height(h), width(w), num_labels(check_labels(labels)),
        data(GrayImage::check_dims(h, w) * labels, 0.0) {}

  double& at(int r, int c, int l) {
    return data[(static_cast<std::size_t>(r) * width + c) * num_labels + l];
  }
  double at(int r, int c, int l) const {
    return data[(static_cast<std::size_t>(r) * width + c) * num_labels + l];
  }
  int pixels() const { return height * width; }

  static int check_labels(int labels) {
    if (labels < 2) throw std::invalid_argument("num_labels must be >= 2");
    return labels;
  }
};

// Per-pixel, per-label Gibbs energies; same layout as ProbMap.
struct UnaryField {
  int height = 0;
  int width = 0;
  int num_labels = 2;
  std::vector<double> data;

  UnaryField() = default;
  UnaryField(int h, int w, int labels)
      : height(h), width(w), num_labels(ProbMap::check_labels(labels)),
        data(GrayImage::check_dims(h, w) * labels, 0.0) {}

  double& at(int r, int c, int l) {
    return data[(static_cast<std::size_t>(r) * width + c) * num_labels + l];
  }
  double at(int r, int c, int l) const {
    return data[(static_cast<std::size_t>(r) * width + c) * num_labels + l];
  }
  int pixels() const { return height * width; }
};

struct PairwiseKernel {
  double weight = 1.0;
  double spatial_stddev = 1.0;
  std::optional<double> channel_stddev;  // absent for the purely spatial kernel

  void validate() const {
    if (weight < 0) throw std::invalid_argument("kernel weight must be >= 0");
    if (spatial_stddev <= 0) throw std::invalid_argument("spatial_stddev must be > 0");
    if (channel_stddev && *channel_stddev <= 0)
      throw std::invalid_argument("channel_stddev must be > 0");
  }
};

// Defaults follow Table-I conventions: bilateral sdims 10 / schan 10,
// smoothness kernel sdims 3, Potts strength 3, 50 inference steps. All
// pairwise strength is carried by `compat`; both kernel weights default to 1.
struct CrfParams {
  PairwiseKernel bilateral{1.0, 10.0, 10.0};
  PairwiseKernel spatial{1.0, 3.0, std::nullopt};
  double compat = 3.0;
  int steps = 50;
  double unary_clamp = 1e-8;

  void validate() const {
    bilateral.validate();
    spatial.validate();
    if (compat < 0) throw std::invalid_argument("compat must be >= 0");
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (unary_clamp <= 0 || unary_clamp >= 0.5)
      throw std::invalid_argument("unary_clamp must be in (0, 0.5)");
  }
};

// psi_u(x_i = l) = -log(max(q_i(l), clamp)).
inline UnaryField unary_from_probs(const ProbMap& p, double clamp) {
  UnaryField u(p.height, p.width, p.num_labels);
  for (std::size_t i = 0; i < p.data.size(); ++i)
    u.data[i] = -std::log(std::max(p.data[i], clamp));
  return u;
}

// Gaussian feature kernel over explicit per-axis spatial distances and an
// optional channel distance; always in (0, 1].
inline double feature_kernel(std::span<const double> spatial_deltas,
                             std::optional<double> channel_delta,
                             const PairwiseKernel& kernel) {
  kernel.validate();
  double e = 0.0;
  const double inv2s = 1.0 / (2.0 * kernel.spatial_stddev * kernel.spatial_stddev);
  for (double d : spatial_deltas) e += d * d * inv2s;
  if (kernel.channel_stddev) {
    const double dc = channel_delta.value_or(0.0);
    e += dc * dc / (2.0 * *kernel.channel_stddev * *kernel.channel_stddev);
  }
  return std::exp(-e);
}

namespace detail {

// Precomputed constants for the combined pair weight
// w_b*k_b(f_i,f_j) + w_s*k_s(f_i,f_j), with optional per-kernel per-axis
// truncation radii (the fast path drops pairs beyond 3 sigma).
struct PairWeightFn {
  double wb, inv2sb, inv2cb;  // bilateral weight, spatial, channel factors
  double ws, inv2ss;          // smoothness kernel
  int rb, rs;                 // per-axis truncation radii (INT_MAX = exact)

  PairWeightFn(const CrfParams& p, bool truncate) {
    wb = p.bilateral.weight;
    inv2sb = 1.0 / (2.0 * p.bilateral.spatial_stddev * p.bilateral.spatial_stddev);
    inv2cb = p.bilateral.channel_stddev
                 ? 1.0 / (2.0 * *p.bilateral.channel_stddev * *p.bilateral.channel_stddev)
                 : 0.0;
    ws = p.spatial.weight;
    inv2ss = 1.0 / (2.0 * p.spatial.spatial_stddev * p.spatial.spatial_stddev);
    rb = truncate ? radius_of(p.bilateral.spatial_stddev) : std::numeric_limits<int>::max();
    rs = truncate ? radius_of(p.spatial.spatial_stddev) : std::numeric_limits<int>::max();
  }

  static int radius_of(double stddev) {
    return static_cast<int>(std::floor(3.0 * stddev));
  }

  int union_radius() const { return std::max(rb, rs); }

  double operator()(int dr, int dc, double chan_delta) const {
    const double d2 = static_cast<double>(dr) * dr + static_cast<double>(dc) * dc;
    const int ar = std::abs(dr), ac = std::abs(dc);
    double w = 0.0;
    if (ar <= rb && ac <= rb)
      w += wb * std::exp(-(d2 * inv2sb + chan_delta * chan_delta * inv2cb));
    if (ar <= rs && ac <= rs) w += ws * std::exp(-d2 * inv2ss);
    return w;
  }
};

inline std::vector<double> channel_features(const GrayImage& img) {
  std::vector<double> chan(img.data.size());
  for (std::size_t i = 0; i < chan.size(); ++i)
    chan[i] = img.data[i] * kIntensityFeatureScale;
  return chan;
}

inline void stable_softmax(const double* logits, int labels, double* out) {
  double m = logits[0];
  for (int l = 1; l < labels; ++l) m = std::max(m, logits[l]);
  double sum = 0.0;
  for (int l = 0; l < labels; ++l) {
    out[l] = std::exp(logits[l] - m);
    sum += out[l];
  }
  const double inv = 1.0 / sum;
  for (int l = 0; l < labels; ++l) out[l] *= inv;
}

inline ProbMap softmax_neg_unary(const UnaryField& u) {
  ProbMap q(u.height, u.width, u.num_labels);
  const int L = u.num_labels;
  std::vector<double> logits(L);
  for (int i = 0; i < u.pixels(); ++i) {
    for (int l = 0; l < L; ++l) logits[l] = -u.data[static_cast<std::size_t>(i) * L + l];
    stable_softmax(logits.data(), L, &q.data[static_cast<std::size_t>(i) * L]);
  }
  return q;
}

// Runs fn(begin, end) over [0, n) split across up to two worker threads.
// Pixel ranges are disjoint, so results do not depend on scheduling.
template <typename Fn>
void parallel_range(int n, Fn&& fn) {
  const unsigned hw = std::thread::hardware_concurrency();
  if (hw < 2 || n < 2048) {
    fn(0, n);
    return;
  }
  const int mid = n / 2;
  std::thread worker([&] { fn(0, mid); });
  fn(mid, n);
  worker.join();
}

// Message accumulation shared by both inference paths. For each pixel in
// [begin, end) it sums, over the neighbours the weight source enumerates in
// row-major order, the total kernel mass K_i and S_i(l) = sum_j w_ij q_j(l).
// The Potts message is then m_i(l) = compat * (K_i - S_i(l)).
struct MessageBuffers {
  std::vector<double> s;  // pixels x labels
  std::vector<double> k;  // pixels
};

template <typename WeightAt>
void accumulate_window(const ProbMap& q, int begin, int end, int radius, WeightAt&& weight_at,
                       MessageBuffers& out) {
  const int h = q.height, w = q.width, L = q.num_labels;
  for (int i = begin; i < end; ++i) {
    const int r = i / w, c = i % w;
    const int r0 = std::max(0, r - radius), r1 = std::min(h - 1, r + radius);
    const int c0 = std::max(0, c - radius), c1 = std::min(w - 1, c + radius);
    double ktot = 0.0;
    double* srow = &out.s[static_cast<std::size_t>(i) * L];
    std::fill(srow, srow + L, 0.0);
    for (int rr = r0; rr <= r1; ++rr) {
      const double* qrow = &q.data[(static_cast<std::size_t>(rr) * w + c0) * L];
      for (int cc = c0; cc <= c1; ++cc, qrow += L) {
        const double wij = weight_at(i, r, c, rr, cc);
        ktot += wij;
        for (int l = 0; l < L; ++l) srow[l] += wij * qrow[l];
      }
    }
    out.k[i] = ktot;
  }
}

}  // namespace detail

using StepObserver = std::function<void(const ProbMap& q, int step)>;

// E(x) = sum_i psi_u(x_i) + sum_{i<j} mu(x_i,x_j) * (w_b k_b + w_s k_s),
// with Potts mu(a,b) = compat * [a != b]. Exact over all unordered pairs;
// O(N^2), intended for small inputs and testing.
inline double gibbs_energy(const std::vector<int>& labels, const UnaryField& unary,
                           const GrayImage& img, const CrfParams& params) {
  params.validate();
  if (img.height != unary.height || img.width != unary.width)
    throw std::invalid_argument("unary/image dimension mismatch");
  if (labels.size() != static_cast<std::size_t>(unary.pixels()))
    throw std::invalid_argument("label field size mismatch");
  const int L = unary.num_labels;
  for (int x : labels)
    if (x < 0 || x >= L) throw std::invalid_argument("label out of range");

  const int n = unary.pixels();
  const int w = unary.width;
  double energy = 0.0;
  for (int i = 0; i < n; ++i) energy += unary.data[static_cast<std::size_t>(i) * L + labels[i]];

  const detail::PairWeightFn weight(params, /*truncate=*/false);
  const std::vector<double> chan = detail::channel_features(img);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (labels[i] == labels[j]) continue;
      const int dr = i / w - j / w, dc = i % w - j % w;
      energy += params.compat * weight(dr, dc, chan[i] - chan[j]);
    }
  }
  return energy;
}

inline double gibbs_energy(const BinaryMask& labels, const UnaryField& unary,
                           const GrayImage& img, const CrfParams& params) {
  std::vector<int> x(labels.data.begin(), labels.data.end());
  return gibbs_energy(x, unary, img, params);
}

namespace detail {

template <typename MessagePass>
ProbMap mean_field_run(const UnaryField& unary, const CrfParams& params, MessagePass&& pass,
                       const StepObserver& observer) {
  const int n = unary.pixels();
  const int L = unary.num_labels;
  ProbMap q = softmax_neg_unary(unary);
  if (params.steps == 0) return q;

  MessageBuffers buf;
  buf.s.assign(static_cast<std::size_t>(n) * L, 0.0);
  buf.k.assign(n, 0.0);
  ProbMap next(unary.height, unary.width, L);
  std::vector<double> logits(L);

  for (int step = 1; step <= params.steps; ++step) {
    pass(q, buf);
    for (int i = 0; i < n; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * L;
      for (int l = 0; l < L; ++l)
        logits[l] = -unary.data[base + l] - params.compat * (buf.k[i] - buf.s[base + l]);
      stable_softmax(logits.data(), L, &next.data[base]);
    }
    q.data.swap(next.data);
    if (observer) observer(q, step);
  }
  return q;
}

inline void check_mf_inputs(const UnaryField& unary, const GrayImage& img) {
  if (img.height != unary.height || img.width != unary.width)
    throw std::invalid_argument("unary/image dimension mismatch");
}

}  // namespace detail

// Parallel mean-field with exact all-pairs Gaussian messages. The oracle
// path: O(N^2 * steps).
inline ProbMap mean_field_brute(const UnaryField& unary, const GrayImage& img,
                                const CrfParams& params, const StepObserver& observer = {}) {
  params.validate();
  detail::check_mf_inputs(unary, img);
  const detail::PairWeightFn weight(params, /*truncate=*/false);
  const std::vector<double> chan = detail::channel_features(img);
  const int full_radius = std::max(unary.height, unary.width);  // window covers everything

  auto pass = [&](const ProbMap& q, detail::MessageBuffers& buf) {
    auto weight_at = [&](int i, int r, int c, int rr, int cc) -> double {
      if (rr == r && cc == c) return 0.0;
      const int j = rr * q.width + cc;
      return weight(r - rr, c - cc, chan[i] - chan[j]);
    };
    detail::parallel_range(q.pixels(), [&](int begin, int end) {
      detail::accumulate_window(q, begin, end, full_radius, weight_at, buf);
    });
  };
  return detail::mean_field_run(unary, params, pass, observer);
}

// Same update schedule with truncated-window message sums: each kernel drops
// pairs beyond 3 sigma per axis. Pair weights are cached per image when they
// fit in memory, so the 50-step default costs one weight evaluation per pair.
// Agrees with mean_field_brute bit-for-bit when no pair is truncated.
inline ProbMap mean_field_fast(const UnaryField& unary, const GrayImage& img,
                               const CrfParams& params, const StepObserver& observer = {}) {
  params.validate();
  detail::check_mf_inputs(unary, img);
  const detail::PairWeightFn weight(params, /*truncate=*/true);
  const std::vector<double> chan = detail::channel_features(img);
  const int h = unary.height, w = unary.width, n = unary.pixels();
  const int radius = weight.union_radius();

  // Per-pixel clipped window extents, flattened row-major.
  std::vector<std::uint64_t> offset(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) {
    const int r = i / w, c = i % w;
    const std::uint64_t rows = std::min(h - 1, r + radius) - std::max(0, r - radius) + 1;
    const std::uint64_t cols = std::min(w - 1, c + radius) - std::max(0, c - radius) + 1;
    offset[i + 1] = offset[i] + rows * cols;
  }

  constexpr std::uint64_t kMaxCacheBytes = 384ull << 20;
  const bool cached = offset[n] * sizeof(double) <= kMaxCacheBytes;

  auto weight_at = [&](int i, int r, int c, int rr, int cc) -> double {
    if (rr == r && cc == c) return 0.0;
    const int j = rr * w + cc;
    return weight(r - rr, c - cc, chan[i] - chan[j]);
  };

  std::vector<double> cache;
  if (cached) {
    cache.resize(offset[n]);
    detail::parallel_range(n, [&](int begin, int end) {
      for (int i = begin; i < end; ++i) {
        const int r = i / w, c = i % w;
        std::uint64_t pos = offset[i];
        for (int rr = std::max(0, r - radius); rr <= std::min(h - 1, r + radius); ++rr)
          for (int cc = std::max(0, c - radius); cc <= std::min(w - 1, c + radius); ++cc)
            cache[pos++] = weight_at(i, r, c, rr, cc);
      }
    });
  }

  // Hot loop: walks the cache slab sequentially, same neighbour enumeration
  // and summation order as the brute pass.
  auto cached_pass = [&](const ProbMap& q, detail::MessageBuffers& buf, int begin, int end) {
    const int L = q.num_labels;
    for (int i = begin; i < end; ++i) {
      const int r = i / w, c = i % w;
      const int r0 = std::max(0, r - radius), r1 = std::min(h - 1, r + radius);
      const int c0 = std::max(0, c - radius), c1 = std::min(w - 1, c + radius);
      const double* wp = &cache[offset[i]];
      double* srow = &buf.s[static_cast<std::size_t>(i) * L];
      double ktot = 0.0;
      if (L == 2) {
        double s0 = 0.0, s1 = 0.0;
        for (int rr = r0; rr <= r1; ++rr) {
          const double* qrow = &q.data[(static_cast<std::size_t>(rr) * w + c0) * 2];
          for (int cc = c0; cc <= c1; ++cc, qrow += 2) {
            const double wij = *wp++;
            ktot += wij;
            s0 += wij * qrow[0];
            s1 += wij * qrow[1];
          }
        }
        srow[0] = s0;
        srow[1] = s1;
      } else {
        std::fill(srow, srow + L, 0.0);
        for (int rr = r0; rr <= r1; ++rr) {
          const double* qrow = &q.data[(static_cast<std::size_t>(rr) * w + c0) * L];
          for (int cc = c0; cc <= c1; ++cc, qrow += L) {
            const double wij = *wp++;
            ktot += wij;
            for (int l = 0; l < L; ++l) srow[l] += wij * qrow[l];
          }
        }
      }
      buf.k[i] = ktot;
    }
  };

  auto pass = [&](const ProbMap& q, detail::MessageBuffers& buf) {
    if (cached) {
      detail::parallel_range(n, [&](int begin, int end) { cached_pass(q, buf, begin, end); });
    } else {
      detail::parallel_range(n, [&](int begin, int end) {
        detail::accumulate_window(q, begin, end, radius, weight_at, buf);
      });
    }
  };
  return detail::mean_field_run(unary, params, pass, observer);
}

struct RefineResult {
  BinaryMask mask;
  ProbMap marginals;
};

// Per-pixel argmax; ties resolve to the lower label index.
inline BinaryMask argmax_mask(const ProbMap& q) {
  if (q.num_labels != 2) throw std::invalid_argument("argmax_mask expects two labels");
  BinaryMask mask(q.height, q.width);
  for (int i = 0; i < q.pixels(); ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * 2;
    mask.data[i] = q.data[base + 1] > q.data[base] ? 1 : 0;
  }
  return mask;
}

// The teacher: negative-log unaries from the student's probabilities, then
// truncated-window mean field for params.steps updates.
inline RefineResult refine(const ProbMap& student_probs, const GrayImage& img,
                           const CrfParams& params) {
  if (student_probs.num_labels != 2)
    throw std::invalid_argument("refine expects two-label probability maps");
  if (student_probs.height != img.height || student_probs.width != img.width)
    throw std::invalid_argument("probability map/image dimension mismatch");
  const UnaryField unary = unary_from_probs(student_probs, params.unary_clamp);
  ProbMap q = mean_field_fast(unary, img, params);
  BinaryMask mask = argmax_mask(q);
  return {std::move(mask), std::move(q)};
}

}  // namespace selfseg
