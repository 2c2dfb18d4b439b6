#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "websed/error.hpp"
#include "websed/parallel.hpp"
#include "websed/random.hpp"

namespace websed {

struct Conv2dSpec {
  int filters = 80;
  int kernel_h = 57;
  int kernel_w = 6;
  int stride_h = 1;
  int stride_w = 1;
  friend bool operator==(const Conv2dSpec&, const Conv2dSpec&) = default;
};

struct Pool2dSpec {
  int pool_h = 4;
  int pool_w = 3;
  int stride_h = 1;
  int stride_w = 3;
  friend bool operator==(const Pool2dSpec&, const Pool2dSpec&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Conv2dSpec, filters, kernel_h, kernel_w, stride_h, stride_w)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Pool2dSpec, pool_h, pool_w, stride_h, stride_w)

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct StageShapes {
  Shape3 input;
  Shape3 conv1;
  Shape3 pool1;
  Shape3 conv2;
  Shape3 pool2;
  std::size_t flatten = 0;
};

/// Two valid-convolution + max-pool stages, two ReLU fully connected layers
/// and a softmax output. Defaults reproduce the 60x101x2 reference network.
struct CnnConfig {
  int input_height = 60;
  int input_width = 101;
  int input_channels = 2;
  Conv2dSpec conv1{80, 57, 6, 1, 1};
  Pool2dSpec pool1{4, 3, 1, 3};
  Conv2dSpec conv2{80, 1, 3, 1, 1};
  Pool2dSpec pool2{1, 3, 1, 3};
  int fc_width = 5000;
  int num_classes = 10;
  double dropout_p = 0.5;

  StageShapes stages() const {
    auto conv = [](const Shape3& in, const Conv2dSpec& c, std::string_view name) {
      if (c.filters < 1 || c.kernel_h < 1 || c.kernel_w < 1 || c.stride_h < 1 || c.stride_w < 1)
        throw Error(ErrorKind::InvalidConfig, std::string(name) + ": filter, kernel and stride must be positive");
      Shape3 out{c.filters, (in.height - c.kernel_h) / c.stride_h + 1, (in.width - c.kernel_w) / c.stride_w + 1};
      if (in.height < c.kernel_h || in.width < c.kernel_w)
        throw Error(ErrorKind::InvalidConfig, std::string(name) + ": kernel larger than its input");
      return out;
    };
    auto pool = [](const Shape3& in, const Pool2dSpec& p, std::string_view name) {
      if (p.pool_h < 1 || p.pool_w < 1 || p.stride_h < 1 || p.stride_w < 1)
        throw Error(ErrorKind::InvalidConfig, std::string(name) + ": pool shape and stride must be positive");
      if (in.height < p.pool_h || in.width < p.pool_w)
        throw Error(ErrorKind::InvalidConfig, std::string(name) + ": pool larger than its input");
      return Shape3{in.channels, (in.height - p.pool_h) / p.stride_h + 1, (in.width - p.pool_w) / p.stride_w + 1};
    };
    if (input_height < 1 || input_width < 1 || input_channels < 1)
      throw Error(ErrorKind::InvalidConfig, "input shape must be positive");
    StageShapes s;
    s.input = {input_channels, input_height, input_width};
    s.conv1 = conv(s.input, conv1, "conv1");
    s.pool1 = pool(s.conv1, pool1, "pool1");
    s.conv2 = conv(s.pool1, conv2, "conv2");
    s.pool2 = pool(s.conv2, pool2, "pool2");
    s.flatten = s.pool2.size();
    return s;
  }

  void validate() const {
    stages();
    if (fc_width < 1) throw Error(ErrorKind::InvalidConfig, "fc_width must be positive");
    if (num_classes < 2) throw Error(ErrorKind::InvalidConfig, "num_classes must be >= 2");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw Error(ErrorKind::InvalidConfig, "dropout_p must be in [0, 1)");
  }

  std::size_t input_size() const { return static_cast<std::size_t>(input_channels) * input_height * input_width; }

  friend bool operator==(const CnnConfig&, const CnnConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CnnConfig, input_height, input_width, input_channels, conv1, pool1,
                                                conv2, pool2, fc_width, num_classes, dropout_p)

// ---------------------------------------------------------------------------
// Parameters

/// Parameter blocks in their fixed serialization order. Convolution kernels
/// are [filters][in_channels][kernel_h][kernel_w]; dense weights are stored
/// input-major, [in][out].
enum Block : std::size_t {
  kConv1W, kConv1B, kConv2W, kConv2B, kFc1W, kFc1B, kFc2W, kFc2B, kOutW, kOutB, kBlockCount
};

inline constexpr std::array<std::string_view, kBlockCount> kBlockNames = {
    "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "fc1.weight",
    "fc1.bias",     "fc2.weight", "fc2.bias",     "out.weight", "out.bias"};

/// Weights (not biases) carry the L2 penalty.
constexpr bool is_weight_block(std::size_t b) { return b % 2 == 0; }

template <class T>
struct Parameters {
  std::array<std::vector<T>, kBlockCount> blocks;

  std::vector<T>& operator[](std::size_t b) { return blocks[b]; }
  const std::vector<T>& operator[](std::size_t b) const { return blocks[b]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.size();
    return n;
  }

  static Parameters zeros_like(const Parameters& other) {
    Parameters p;
    for (std::size_t b = 0; b < kBlockCount; ++b) p.blocks[b].assign(other.blocks[b].size(), T(0));
    return p;
  }

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

inline std::array<std::size_t, kBlockCount> block_sizes(const CnnConfig& cfg) {
  const auto s = cfg.stages();
  const auto c1 = static_cast<std::size_t>(cfg.conv1.filters);
  const auto c2 = static_cast<std::size_t>(cfg.conv2.filters);
  const auto fc = static_cast<std::size_t>(cfg.fc_width);
  const auto k = static_cast<std::size_t>(cfg.num_classes);
  return {c1 * s.input.channels * cfg.conv1.kernel_h * cfg.conv1.kernel_w,
          c1,
          c2 * s.pool1.channels * cfg.conv2.kernel_h * cfg.conv2.kernel_w,
          c2,
          s.flatten * fc,
          fc,
          fc * fc,
          fc,
          fc * k,
          k};
}

template <class T>
struct Network {
  CnnConfig config;
  StageShapes shapes;
  Parameters<T> params;
};

/// He-uniform weights (limit sqrt(6 / fan_in)) drawn from SplitMix64(seed) in
/// block order; zero biases.
template <class T>
Network<T> make_network(const CnnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network<T> net{cfg, cfg.stages(), {}};
  const auto sizes = block_sizes(cfg);
  const auto& s = net.shapes;
  const std::array<double, kBlockCount> fan_in = {
      double(s.input.channels) * cfg.conv1.kernel_h * cfg.conv1.kernel_w, 1.0,
      double(s.pool1.channels) * cfg.conv2.kernel_h * cfg.conv2.kernel_w, 1.0,
      double(s.flatten), 1.0, double(cfg.fc_width), 1.0, double(cfg.fc_width), 1.0};
  SplitMix64 rng(seed);
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    net.params[b].assign(sizes[b], T(0));
    if (!is_weight_block(b)) continue;
    const double limit = std::sqrt(6.0 / fan_in[b]);
    for (auto& w : net.params[b]) w = static_cast<T>(rng.uniform(-limit, limit));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

template <class T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  for (; i < n; ++i) acc[0] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

/// Valid cross-correlation with bias, ReLU optional. Parallel over samples.
template <class T>
void conv_forward(const std::vector<T>& in, const Shape3& is, const std::vector<T>& w, const std::vector<T>& bias,
                  const Conv2dSpec& c, const Shape3& os, std::size_t batch, bool relu, std::vector<T>& out,
                  std::size_t threads) {
  out.assign(batch * os.size(), T(0));
  const std::size_t kh = c.kernel_h, kw = c.kernel_w, sh = c.stride_h, sw = c.stride_w;
  const std::size_t ow = os.width, oh = os.height, iw = is.width;
  parallel_for(batch, threads, [&](std::size_t b) {
    const T* x = in.data() + b * is.size();
    T* y = out.data() + b * os.size();
    for (int f = 0; f < os.channels; ++f) {
      T* yf = y + f * os.plane();
      std::fill(yf, yf + os.plane(), bias[f]);
      for (int ch = 0; ch < is.channels; ++ch) {
        const T* xc = x + ch * is.plane();
        const T* wk = w.data() + ((static_cast<std::size_t>(f) * is.channels + ch) * kh) * kw;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T wv = wk[ky * kw + kx];
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const T* row = xc + (oy * sh + ky) * iw + kx;
              T* yr = yf + oy * ow;
              if (sw == 1) {
                axpy(wv, row, yr, ow);
              } else {
                for (std::size_t ox = 0; ox < ow; ++ox) yr[ox] += wv * row[ox * sw];
              }
            }
          }
      }
      if (relu)
        for (std::size_t i = 0; i < os.plane(); ++i) yf[i] = std::max(yf[i], T(0));
    }
  });
}

/// Weight and bias gradients, parallel over filters; each filter reduces over
/// the batch in sample order.
template <class T>
void conv_backward_params(const std::vector<T>& in, const Shape3& is, const std::vector<T>& dout, const Conv2dSpec& c,
                          const Shape3& os, std::size_t batch, std::vector<T>& dw, std::vector<T>& db,
                          std::size_t threads) {
  const std::size_t kh = c.kernel_h, kw = c.kernel_w, sh = c.stride_h, sw = c.stride_w;
  const std::size_t ow = os.width, oh = os.height, iw = is.width;
  dw.assign(static_cast<std::size_t>(os.channels) * is.channels * kh * kw, T(0));
  db.assign(os.channels, T(0));
  parallel_for(static_cast<std::size_t>(os.channels), threads, [&](std::size_t f) {
    T bias_acc = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* g = dout.data() + b * os.size() + f * os.plane();
      for (std::size_t i = 0; i < os.plane(); ++i) bias_acc += g[i];
      const T* x = in.data() + b * is.size();
      for (int ch = 0; ch < is.channels; ++ch) {
        const T* xc = x + ch * is.plane();
        T* dk = dw.data() + ((f * is.channels + ch) * kh) * kw;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            T acc = 0;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const T* row = xc + (oy * sh + ky) * iw + kx;
              const T* gr = g + oy * ow;
              if (sw == 1) {
                acc += dot(row, gr, ow);
              } else {
                for (std::size_t ox = 0; ox < ow; ++ox) acc += row[ox * sw] * gr[ox];
              }
            }
            dk[ky * kw + kx] += acc;
          }
      }
    }
    db[f] = bias_acc;
  });
}

/// Input gradient, parallel over samples.
template <class T>
void conv_backward_input(const std::vector<T>& w, const Shape3& is, const std::vector<T>& dout, const Conv2dSpec& c,
                         const Shape3& os, std::size_t batch, std::vector<T>& din, std::size_t threads) {
  const std::size_t kh = c.kernel_h, kw = c.kernel_w, sh = c.stride_h, sw = c.stride_w;
  const std::size_t ow = os.width, oh = os.height, iw = is.width;
  din.assign(batch * is.size(), T(0));
  parallel_for(batch, threads, [&](std::size_t b) {
    T* dx = din.data() + b * is.size();
    const T* g = dout.data() + b * os.size();
    for (int f = 0; f < os.channels; ++f) {
      const T* gf = g + f * os.plane();
      for (int ch = 0; ch < is.channels; ++ch) {
        T* dxc = dx + ch * is.plane();
        const T* wk = w.data() + ((static_cast<std::size_t>(f) * is.channels + ch) * kh) * kw;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T wv = wk[ky * kw + kx];
            for (std::size_t oy = 0; oy < oh; ++oy) {
              T* row = dxc + (oy * sh + ky) * iw + kx;
              const T* gr = gf + oy * ow;
              if (sw == 1) {
                axpy(wv, gr, row, ow);
              } else {
                for (std::size_t ox = 0; ox < ow; ++ox) row[ox * sw] += wv * gr[ox];
              }
            }
          }
      }
    }
  });
}

/// Max pooling; `arg` records the in-plane index of each winner (first
/// maximum on ties).
template <class T>
void pool_forward(const std::vector<T>& in, const Shape3& is, const Pool2dSpec& p, const Shape3& os,
                  std::size_t batch, std::vector<T>& out, std::vector<std::uint32_t>& arg) {
  out.assign(batch * os.size(), T(0));
  arg.assign(batch * os.size(), 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (int ch = 0; ch < os.channels; ++ch) {
      const T* x = in.data() + b * is.size() + ch * is.plane();
      T* y = out.data() + b * os.size() + ch * os.plane();
      std::uint32_t* a = arg.data() + b * os.size() + ch * os.plane();
      for (int oy = 0; oy < os.height; ++oy)
        for (int ox = 0; ox < os.width; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          std::uint32_t best_at = 0;
          for (int py = 0; py < p.pool_h; ++py)
            for (int px = 0; px < p.pool_w; ++px) {
              const auto idx = static_cast<std::uint32_t>((oy * p.stride_h + py) * is.width + ox * p.stride_w + px);
              if (x[idx] > best) {
                best = x[idx];
                best_at = idx;
              }
            }
          y[oy * os.width + ox] = best;
          a[oy * os.width + ox] = best_at;
        }
    }
}

template <class T>
void pool_backward(const std::vector<T>& dout, const std::vector<std::uint32_t>& arg, const Shape3& is,
                   const Shape3& os, std::size_t batch, std::vector<T>& din) {
  din.assign(batch * is.size(), T(0));
  for (std::size_t b = 0; b < batch; ++b)
    for (int ch = 0; ch < os.channels; ++ch) {
      const std::size_t o = b * os.size() + ch * os.plane();
      T* dx = din.data() + b * is.size() + ch * is.plane();
      for (std::size_t i = 0; i < os.plane(); ++i) dx[arg[o + i]] += dout[o + i];
    }
}

/// y[b] = x[b] W + bias with W stored [in][out]. Parallel over samples.
template <class T>
void dense_forward(const std::vector<T>& x, std::size_t in, const std::vector<T>& w, const std::vector<T>& bias,
                   std::size_t out, std::size_t batch, bool relu, std::vector<T>& y, std::size_t threads) {
  y.assign(batch * out, T(0));
  parallel_for(batch, threads, [&](std::size_t b) {
    T* yb = y.data() + b * out;
    std::copy(bias.begin(), bias.end(), yb);
    const T* xb = x.data() + b * in;
    for (std::size_t i = 0; i < in; ++i)
      if (xb[i] != T(0)) axpy(xb[i], w.data() + i * out, yb, out);
    if (relu)
      for (std::size_t o = 0; o < out; ++o) yb[o] = std::max(yb[o], T(0));
  });
}

template <class T>
void dense_backward(const std::vector<T>& x, std::size_t in, const std::vector<T>& w, const std::vector<T>& dy,
                    std::size_t out, std::size_t batch, std::vector<T>& dw, std::vector<T>& db, std::vector<T>* dx,
                    std::size_t threads) {
  dw.assign(in * out, T(0));
  db.assign(out, T(0));
  parallel_for(in, threads, [&](std::size_t i) {
    T* row = dw.data() + i * out;
    for (std::size_t b = 0; b < batch; ++b) {
      const T xv = x[b * in + i];
      if (xv != T(0)) axpy(xv, dy.data() + b * out, row, out);
    }
  });
  for (std::size_t b = 0; b < batch; ++b) axpy(T(1), dy.data() + b * out, db.data(), out);
  if (!dx) return;
  dx->assign(batch * in, T(0));
  parallel_for(batch, threads, [&](std::size_t b) {
    const T* g = dy.data() + b * out;
    T* d = dx->data() + b * in;
    for (std::size_t i = 0; i < in; ++i) d[i] = dot(w.data() + i * out, g, out);
  });
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Forward / backward

enum class Mode { Train, Infer };

/// Everything the backward pass needs from a forward pass.
template <class T>
struct Activations {
  std::size_t batch = 0;
  std::vector<T> input;  // [B][C][H][W]
  std::vector<T> conv1, pool1, conv2, pool2;
  std::vector<std::uint32_t> pool1_arg, pool2_arg;
  std::vector<T> fc1, fc1_out, mask1;  // fc1 post-ReLU, fc1_out after dropout
  std::vector<T> fc2, fc2_out, mask2;
  std::vector<T> logits, probs;
};

namespace detail {

template <class T>
void dropout(const std::vector<T>& in, double p, SplitMix64& rng, std::vector<T>& mask, std::vector<T>& out) {
  mask.resize(in.size());
  out.resize(in.size());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < in.size(); ++i) {
    mask[i] = rng.uniform() < p ? T(0) : keep_scale;
    out[i] = in[i] * mask[i];
  }
}

}  // namespace detail

/// Runs the network on `batch` samples laid out [B][H][W][C] (the patch
/// layout) and returns the [B][num_classes] softmax rows. Train mode applies
/// inverted dropout to both hidden FC layers, drawing masks from `rng`.
template <class T>
std::span<const T> forward(const Network<T>& net, std::span<const T> batch_hwc, std::size_t batch, Mode mode,
                           SplitMix64* rng, Activations<T>& act, std::size_t threads = 1) {
  const auto& cfg = net.config;
  const auto& s = net.shapes;
  if (batch_hwc.size() != batch * cfg.input_size())
    throw Error(ErrorKind::ShapeMismatch, "batch has " + std::to_string(batch_hwc.size()) + " values, expected " +
                                              std::to_string(batch * cfg.input_size()));
  act.batch = batch;
  const std::size_t H = s.input.height, W = s.input.width, C = s.input.channels;
  act.input.resize(batch * s.input.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        for (std::size_t c = 0; c < C; ++c)
          act.input[((b * C + c) * H + h) * W + w] = batch_hwc[((b * H + h) * W + w) * C + c];

  const auto& P = net.params;
  kernels::conv_forward(act.input, s.input, P[kConv1W], P[kConv1B], cfg.conv1, s.conv1, batch, true, act.conv1,
                        threads);
  kernels::pool_forward(act.conv1, s.conv1, cfg.pool1, s.pool1, batch, act.pool1, act.pool1_arg);
  kernels::conv_forward(act.pool1, s.pool1, P[kConv2W], P[kConv2B], cfg.conv2, s.conv2, batch, true, act.conv2,
                        threads);
  kernels::pool_forward(act.conv2, s.conv2, cfg.pool2, s.pool2, batch, act.pool2, act.pool2_arg);

  const std::size_t fc = cfg.fc_width, K = cfg.num_classes;
  const bool drop = mode == Mode::Train && cfg.dropout_p > 0.0;
  if (drop && !rng) throw Error(ErrorKind::InvalidConfig, "train-mode dropout needs a random generator");

  kernels::dense_forward(act.pool2, s.flatten, P[kFc1W], P[kFc1B], fc, batch, true, act.fc1, threads);
  if (drop) {
    detail::dropout(act.fc1, cfg.dropout_p, *rng, act.mask1, act.fc1_out);
  } else {
    act.mask1.clear();
    act.fc1_out = act.fc1;
  }
  kernels::dense_forward(act.fc1_out, fc, P[kFc2W], P[kFc2B], fc, batch, true, act.fc2, threads);
  if (drop) {
    detail::dropout(act.fc2, cfg.dropout_p, *rng, act.mask2, act.fc2_out);
  } else {
    act.mask2.clear();
    act.fc2_out = act.fc2;
  }
  kernels::dense_forward(act.fc2_out, fc, P[kOutW], P[kOutB], K, batch, false, act.logits, threads);

  act.probs.resize(batch * K);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* z = act.logits.data() + b * K;
    T* p = act.probs.data() + b * K;
    const T zmax = *std::max_element(z, z + K);
    T sum = 0;
    for (std::size_t k = 0; k < K; ++k) sum += p[k] = std::exp(z[k] - zmax);
    for (std::size_t k = 0; k < K; ++k) p[k] /= sum;
  }
  return act.probs;
}

template <class T>
double l2_penalty(const Parameters<T>& params, double l2) {
  if (l2 == 0.0) return 0.0;
  double sq = 0.0;
  for (std::size_t b = 0; b < kBlockCount; ++b)
    if (is_weight_block(b))
      for (T w : params[b]) sq += static_cast<double>(w) * static_cast<double>(w);
  return l2 * sq;
}

template <class T>
struct BackwardResult {
  double data_loss = 0.0;  // mean categorical cross-entropy
  double loss = 0.0;       // data_loss + l2 * sum of squared weights
  Parameters<T> grads;     // gradient of data_loss; sgd_step adds the L2 term
};

/// Gradients of the mean cross-entropy for the batch recorded in `act`
/// (labels are class indices). The L2 penalty is included in `loss` but its
/// gradient, 2 * l2 * W, is applied by sgd_step.
template <class T>
BackwardResult<T> backward(const Network<T>& net, const Activations<T>& act, std::span<const std::size_t> labels,
                           double l2, std::size_t threads = 1) {
  const auto& cfg = net.config;
  const auto& s = net.shapes;
  const std::size_t B = act.batch, K = cfg.num_classes, fc = cfg.fc_width;
  if (labels.size() != B || act.probs.size() != B * K)
    throw Error(ErrorKind::ShapeMismatch, "labels do not match the recorded batch");

  BackwardResult<T> r;
  std::vector<T> dlogits(B * K);
  double ce = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] >= K) throw Error(ErrorKind::ShapeMismatch, "label index out of range");
    const T* z = act.logits.data() + b * K;
    const double zmax = static_cast<double>(*std::max_element(z, z + K));
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(static_cast<double>(z[k]) - zmax);
    ce += zmax + std::log(sum) - static_cast<double>(z[labels[b]]);
    for (std::size_t k = 0; k < K; ++k)
      dlogits[b * K + k] = (act.probs[b * K + k] - (k == labels[b] ? T(1) : T(0))) / static_cast<T>(B);
  }
  r.data_loss = ce / static_cast<double>(B);
  r.loss = r.data_loss + l2_penalty(net.params, l2);

  const auto& P = net.params;
  auto& G = r.grads;
  std::vector<T> dh2, dh1, dflat, dconv2, dpool1, dconv1;

  kernels::dense_backward(act.fc2_out, fc, P[kOutW], dlogits, K, B, G[kOutW], G[kOutB], &dh2, threads);
  for (std::size_t i = 0; i < dh2.size(); ++i) {
    if (!act.mask2.empty()) dh2[i] *= act.mask2[i];
    if (!(act.fc2[i] > T(0))) dh2[i] = T(0);
  }
  kernels::dense_backward(act.fc1_out, fc, P[kFc2W], dh2, fc, B, G[kFc2W], G[kFc2B], &dh1, threads);
  for (std::size_t i = 0; i < dh1.size(); ++i) {
    if (!act.mask1.empty()) dh1[i] *= act.mask1[i];
    if (!(act.fc1[i] > T(0))) dh1[i] = T(0);
  }
  kernels::dense_backward(act.pool2, s.flatten, P[kFc1W], dh1, fc, B, G[kFc1W], G[kFc1B], &dflat, threads);

  kernels::pool_backward(dflat, act.pool2_arg, s.conv2, s.pool2, B, dconv2);
  for (std::size_t i = 0; i < dconv2.size(); ++i)
    if (!(act.conv2[i] > T(0))) dconv2[i] = T(0);
  kernels::conv_backward_params(act.pool1, s.pool1, dconv2, cfg.conv2, s.conv2, B, G[kConv2W], G[kConv2B], threads);
  kernels::conv_backward_input(P[kConv2W], s.pool1, dconv2, cfg.conv2, s.conv2, B, dpool1, threads);

  kernels::pool_backward(dpool1, act.pool1_arg, s.conv1, s.pool1, B, dconv1);
  for (std::size_t i = 0; i < dconv1.size(); ++i)
    if (!(act.conv1[i] > T(0))) dconv1[i] = T(0);
  kernels::conv_backward_params(act.input, s.input, dconv1, cfg.conv1, s.conv1, B, G[kConv1W], G[kConv1B], threads);
  return r;
}

struct SgdConfig {
  double learning_rate = 0.002;
  double momentum = 0.9;
  double l2 = 0.001;
};

/// Nesterov momentum in the lookahead-free form used by Keras/Sutskever:
///   g  = grad + 2 l2 W          (weights only)
///   v <- mu v - lr g
///   W <- W + mu v - lr g
/// which equals v <- mu v - lr grad(phi + mu v) tracked at phi = W + mu v.
template <class T>
void sgd_step(Parameters<T>& params, const Parameters<T>& grads, Parameters<T>& velocity, const SgdConfig& cfg) {
  const T lr = static_cast<T>(cfg.learning_rate), mu = static_cast<T>(cfg.momentum);
  const T decay = static_cast<T>(2.0 * cfg.l2);
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    auto& w = params[b];
    const auto& g = grads[b];
    auto& v = velocity[b];
    if (g.size() != w.size()) throw Error(ErrorKind::ShapeMismatch, std::string(kBlockNames[b]) + " gradient size");
    if (v.size() != w.size()) v.assign(w.size(), T(0));
    const bool weight = is_weight_block(b);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T gi = g[i] + (weight ? decay * w[i] : T(0));
      v[i] = mu * v[i] - lr * gi;
      w[i] += mu * v[i] - lr * gi;
    }
  }
}

}  // namespace websed
