#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "websed/error.hpp"

namespace websed {

enum class SpectrumKind { Power, Magnitude };
enum class LogBase { Natural, Ten };

struct FeatureConfig {
  std::size_t fft_window = 1024;
  std::size_t hop = 512;
  std::size_t mel_bands = 60;
  int sample_rate = 44100;
  std::size_t frames_per_patch = 101;
  std::size_t patch_stride_frames = 10;
  double log_floor = 1e-10;
  std::size_t delta_half_window = 4;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 means Nyquist
  SpectrumKind spectrum = SpectrumKind::Power;
  LogBase log_base = LogBase::Natural;

  double upper_hz() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
  std::size_t bins() const { return fft_window / 2 + 1; }
  /// Samples covered by one patch under non-centered framing.
  std::size_t patch_samples() const { return (frames_per_patch - 1) * hop + fft_window; }

  void validate() const {
    if (fft_window < 2 || !std::has_single_bit(fft_window))
      throw Error(ErrorKind::InvalidConfig, "fft_window must be a power of two");
    if (hop == 0) throw Error(ErrorKind::InvalidConfig, "hop must be positive");
    if (mel_bands < 1) throw Error(ErrorKind::InvalidConfig, "mel_bands must be >= 1");
    if (frames_per_patch < 1 || patch_stride_frames < 1)
      throw Error(ErrorKind::InvalidConfig, "frames_per_patch and patch_stride_frames must be >= 1");
    if (sample_rate <= 0) throw Error(ErrorKind::InvalidConfig, "sample_rate must be positive");
    if (!(log_floor > 0.0)) throw Error(ErrorKind::InvalidConfig, "log_floor must be positive");
    if (fmin < 0.0 || upper_hz() <= fmin || upper_hz() > sample_rate / 2.0)
      throw Error(ErrorKind::InvalidConfig, "need 0 <= fmin < fmax <= Nyquist");
  }

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

NLOHMANN_JSON_SERIALIZE_ENUM(SpectrumKind, {{SpectrumKind::Power, "power"}, {SpectrumKind::Magnitude, "magnitude"}})
NLOHMANN_JSON_SERIALIZE_ENUM(LogBase, {{LogBase::Natural, "e"}, {LogBase::Ten, "10"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FeatureConfig, fft_window, hop, mel_bands, sample_rate,
                                                frames_per_patch, patch_stride_frames, log_floor, delta_half_window,
                                                fmin, fmax, spectrum, log_base)

/// Row-major float matrix; features use rows = mel bands, cols = frames.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// ---------------------------------------------------------------------------
// Mel filterbank

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelFilterbank {
  std::size_t bands = 0;
  std::size_t bins = 0;
  std::vector<double> weights;        // bands x bins
  std::vector<double> center_hz;      // bands
  std::vector<double> edge_hz;        // bands + 2 (lower edge, centers..., upper edge)

  double weight(std::size_t band, std::size_t bin) const { return weights[band * bins + bin]; }
};

/// HTK-style triangles: bands + 2 points equally spaced in mel between fmin
/// and fmax; band i rises from point i to point i+1 and falls to point i+2.
/// Weights are unnormalized (peak 1).
inline MelFilterbank build_mel_filterbank(const FeatureConfig& cfg) {
  cfg.validate();
  MelFilterbank fb;
  fb.bands = cfg.mel_bands;
  fb.bins = cfg.bins();
  fb.weights.assign(fb.bands * fb.bins, 0.0);
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.upper_hz());
  fb.edge_hz.resize(fb.bands + 2);
  for (std::size_t i = 0; i < fb.edge_hz.size(); ++i)
    fb.edge_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(fb.bands + 1));
  fb.center_hz.assign(fb.edge_hz.begin() + 1, fb.edge_hz.end() - 1);

  const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.fft_window);
  for (std::size_t b = 0; b < fb.bands; ++b) {
    const double lo = fb.edge_hz[b], mid = fb.edge_hz[b + 1], hi = fb.edge_hz[b + 2];
    for (std::size_t k = 0; k < fb.bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double w = std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid));
      fb.weights[b * fb.bins + k] = std::max(0.0, w);
    }
  }
  return fb;
}

// ---------------------------------------------------------------------------
// STFT

/// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

/// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

inline std::size_t frame_count(std::size_t length, std::size_t window, std::size_t hop) {
  return length < window ? 0 : (length - window) / hop + 1;
}

/// Non-centered Hann-windowed STFT; returns frames x (fft_window/2 + 1)
/// values of |X|^2 (or |X| for SpectrumKind::Magnitude).
inline std::vector<std::vector<double>> spectrogram(std::span<const float> samples, const FeatureConfig& cfg) {
  cfg.validate();
  if (samples.size() < cfg.fft_window)
    throw Error(ErrorKind::InputTooShort, std::to_string(samples.size()) + " samples < window " +
                                               std::to_string(cfg.fft_window));
  const std::size_t frames = frame_count(samples.size(), cfg.fft_window, cfg.hop);
  const auto window = hann_window(cfg.fft_window);
  std::vector<std::vector<double>> out(frames, std::vector<double>(cfg.bins()));
  std::vector<std::complex<double>> buf(cfg.fft_window);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * cfg.hop;
    for (std::size_t i = 0; i < cfg.fft_window; ++i) buf[i] = {samples[start + i] * window[i], 0.0};
    fft_inplace(buf);
    for (std::size_t k = 0; k < cfg.bins(); ++k) {
      const double p = std::norm(buf[k]);
      out[t][k] = cfg.spectrum == SpectrumKind::Power ? p : std::sqrt(p);
    }
  }
  return out;
}

/// Mel-projected, floored, log-compressed spectrogram: [mel_bands][frames].
inline Matrix log_mel_spectrogram(std::span<const float> samples, const FeatureConfig& cfg,
                                  const MelFilterbank& fb) {
  const auto spec = spectrogram(samples, cfg);
  if (fb.bands != cfg.mel_bands || fb.bins != cfg.bins())
    throw Error(ErrorKind::ShapeMismatch, "filterbank does not match feature config");
  Matrix out(cfg.mel_bands, spec.size());
  const double log_scale = cfg.log_base == LogBase::Natural ? 1.0 : 1.0 / std::numbers::ln10;
  for (std::size_t t = 0; t < spec.size(); ++t) {
    for (std::size_t b = 0; b < fb.bands; ++b) {
      const double* w = &fb.weights[b * fb.bins];
      double e = 0.0;
      for (std::size_t k = 0; k < fb.bins; ++k) e += w[k] * spec[t][k];
      out(b, t) = static_cast<float>(std::log(std::max(e, cfg.log_floor)) * log_scale);
    }
  }
  return out;
}

inline Matrix log_mel_spectrogram(std::span<const float> samples, const FeatureConfig& cfg) {
  return log_mel_spectrogram(samples, cfg, build_mel_filterbank(cfg));
}

/// Regression deltas d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2), with
/// out-of-range frames replaced by the nearest edge frame.
inline Matrix delta_coefficients(const Matrix& c, std::size_t half_window = 4) {
  Matrix d(c.rows, c.cols);
  if (c.cols == 0 || half_window == 0) return d;
  double denom = 0.0;
  for (std::size_t n = 1; n <= half_window; ++n) denom += 2.0 * static_cast<double>(n * n);
  const auto last = static_cast<long long>(c.cols) - 1;
  for (std::size_t r = 0; r < c.rows; ++r) {
    for (long long t = 0; t <= last; ++t) {
      double acc = 0.0;
      for (std::size_t n = 1; n <= half_window; ++n) {
        const auto nn = static_cast<long long>(n);
        const auto ahead = static_cast<std::size_t>(std::min(t + nn, last));
        const auto behind = static_cast<std::size_t>(std::max(t - nn, 0LL));
        acc += static_cast<double>(n) * (static_cast<double>(c(r, ahead)) - static_cast<double>(c(r, behind)));
      }
      d(r, static_cast<std::size_t>(t)) = static_cast<float>(acc / denom);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Patches

inline constexpr std::size_t kPatchChannels = 2;

/// One CNN input: values laid out [mel][frame][channel], channel 0 = log-mel,
/// channel 1 = delta.
struct FeaturePatch {
  std::string segment_id;
  std::size_t mel_bands = 60;
  std::size_t frames = 101;
  std::vector<float> values;

  std::size_t index(std::size_t mel, std::size_t frame, std::size_t channel) const {
    return (mel * frames + frame) * kPatchChannels + channel;
  }
  float at(std::size_t mel, std::size_t frame, std::size_t channel) const { return values[index(mel, frame, channel)]; }
};

inline std::size_t patch_count(std::size_t frames, std::size_t frames_per_patch, std::size_t stride_frames) {
  return frames < frames_per_patch ? 0 : (frames - frames_per_patch) / stride_frames + 1;
}

inline std::vector<FeaturePatch> patchify(const Matrix& logmel, const Matrix& delta, const FeatureConfig& cfg,
                                          std::string_view id_prefix = "patch") {
  if (logmel.rows != delta.rows || logmel.cols != delta.cols)
    throw Error(ErrorKind::ShapeMismatch, "log-mel and delta shapes differ");
  const std::size_t n = patch_count(logmel.cols, cfg.frames_per_patch, cfg.patch_stride_frames);
  std::vector<FeaturePatch> out;
  out.reserve(n);
  for (std::size_t p = 0; p < n; ++p) {
    FeaturePatch patch;
    patch.segment_id = n == 1 ? std::string(id_prefix) : std::string(id_prefix) + "_p" + std::to_string(p);
    patch.mel_bands = logmel.rows;
    patch.frames = cfg.frames_per_patch;
    patch.values.resize(patch.mel_bands * patch.frames * kPatchChannels);
    const std::size_t offset = p * cfg.patch_stride_frames;
    for (std::size_t m = 0; m < patch.mel_bands; ++m)
      for (std::size_t t = 0; t < patch.frames; ++t) {
        patch.values[patch.index(m, t, 0)] = logmel(m, offset + t);
        patch.values[patch.index(m, t, 1)] = delta(m, offset + t);
      }
    out.push_back(std::move(patch));
  }
  return out;
}

/// Log-mel + delta + patchify over a block of samples.
inline std::vector<FeaturePatch> extract_patches(std::span<const float> samples, const FeatureConfig& cfg,
                                                 const MelFilterbank& fb, std::string_view id_prefix) {
  if (samples.size() < cfg.fft_window) return {};
  const auto logmel = log_mel_spectrogram(samples, cfg, fb);
  const auto delta = delta_coefficients(logmel, cfg.delta_half_window);
  return patchify(logmel, delta, cfg, id_prefix);
}

// ---------------------------------------------------------------------------
// Normalization

struct NormStats {
  std::array<double, kPatchChannels> mean{0.0, 0.0};
  std::array<double, kPatchChannels> stddev{1.0, 1.0};

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline void to_json(nlohmann::json& j, const NormStats& s) { j = {{"mean", s.mean}, {"std", s.stddev}}; }
inline void from_json(const nlohmann::json& j, NormStats& s) {
  j.at("mean").get_to(s.mean);
  j.at("std").get_to(s.stddev);
}

/// Per-channel population mean and standard deviation over every value of
/// every patch (two passes, accumulated in double).
inline NormStats compute_norm_stats(std::span<const FeaturePatch> patches) {
  NormStats stats;
  std::array<double, kPatchChannels> sum{}, count{};
  for (const auto& p : patches)
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      sum[i % kPatchChannels] += p.values[i];
      count[i % kPatchChannels] += 1.0;
    }
  for (std::size_t c = 0; c < kPatchChannels; ++c) stats.mean[c] = count[c] > 0 ? sum[c] / count[c] : 0.0;
  std::array<double, kPatchChannels> sq{};
  for (const auto& p : patches)
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double d = p.values[i] - stats.mean[i % kPatchChannels];
      sq[i % kPatchChannels] += d * d;
    }
  for (std::size_t c = 0; c < kPatchChannels; ++c) stats.stddev[c] = count[c] > 0 ? std::sqrt(sq[c] / count[c]) : 0.0;
  return stats;
}

/// z-scores each channel in place; a channel whose std is zero (to within
/// rounding of its mean) is rejected.
inline void normalize(std::span<FeaturePatch> patches, const NormStats& stats) {
  for (std::size_t c = 0; c < kPatchChannels; ++c)
    if (!(stats.stddev[c] > 1e-9 * std::max(1.0, std::abs(stats.mean[c]))) || !std::isfinite(stats.stddev[c]))
      throw Error(ErrorKind::DegenerateStd, "channel " + std::to_string(c) + " has std " +
                                                std::to_string(stats.stddev[c]));
  for (auto& p : patches)
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const std::size_t c = i % kPatchChannels;
      p.values[i] = static_cast<float>((p.values[i] - stats.mean[c]) / stats.stddev[c]);
    }
}

// ---------------------------------------------------------------------------
// On-disk patch cache: <stem>.bin holds little-endian float32 blocks of
// [mel][frame][channel]; <stem>.json lists one entry per block plus the
// config hash and block shape.

struct PatchCacheEntry {
  std::string segment_id;
  std::string label;    // empty for unlabeled corpus patches
  std::string clip_id;  // source clip or video

  friend bool operator==(const PatchCacheEntry&, const PatchCacheEntry&) = default;
};

struct PatchCache {
  std::string config_hash;
  std::vector<PatchCacheEntry> entries;
  std::vector<FeaturePatch> patches;
};

namespace detail {
inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
  return v;
}
}  // namespace detail

inline void write_patch_cache(const std::filesystem::path& stem, const PatchCache& cache) {
  if (cache.entries.size() != cache.patches.size())
    throw Error(ErrorKind::ShapeMismatch, "patch cache entries and patches differ in count");
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::size_t mel = 60, frames = 101;
  if (!cache.patches.empty()) {
    mel = cache.patches.front().mel_bands;
    frames = cache.patches.front().frames;
  }
  std::ofstream bin(std::filesystem::path(stem).concat(".bin"), std::ios::binary);
  if (!bin) throw Error(ErrorKind::UnreadableFile, "cannot write " + stem.string() + ".bin");
  std::vector<std::uint32_t> block;
  for (const auto& p : cache.patches) {
    if (p.mel_bands != mel || p.frames != frames || p.values.size() != mel * frames * kPatchChannels)
      throw Error(ErrorKind::ShapeMismatch, "patch " + p.segment_id + " has a different shape");
    block.resize(p.values.size());
    for (std::size_t i = 0; i < block.size(); ++i) block[i] = detail::to_le(std::bit_cast<std::uint32_t>(p.values[i]));
    bin.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size() * 4));
  }
  nlohmann::json side;
  side["config_hash"] = cache.config_hash;
  side["shape"] = {mel, frames, kPatchChannels};
  side["dtype"] = "float32-le";
  auto& entries = side["entries"] = nlohmann::json::array();
  for (const auto& e : cache.entries)
    entries.push_back({{"segment_id", e.segment_id}, {"label", e.label}, {"clip_id", e.clip_id}});
  std::ofstream js(std::filesystem::path(stem).concat(".json"), std::ios::binary);
  js << side.dump(1) << '\n';
}

inline PatchCache read_patch_cache(const std::filesystem::path& stem) {
  const auto json_path = std::filesystem::path(stem).concat(".json");
  const auto bin_path = std::filesystem::path(stem).concat(".bin");
  std::ifstream js(json_path);
  if (!js) throw Error(ErrorKind::MissingFile, json_path.string());
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptFile, json_path.string() + ": " + e.what());
  }
  PatchCache cache;
  cache.config_hash = side.value("config_hash", "");
  const auto shape = side.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3 || shape[2] != kPatchChannels)
    throw Error(ErrorKind::CorruptFile, json_path.string() + ": bad shape");
  const std::size_t block = shape[0] * shape[1] * shape[2];
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(ErrorKind::MissingFile, bin_path.string());
  std::vector<std::uint32_t> raw(block);
  for (const auto& e : side.at("entries")) {
    PatchCacheEntry entry{e.at("segment_id").get<std::string>(), e.value("label", ""), e.value("clip_id", "")};
    bin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(block * 4));
    if (bin.gcount() != static_cast<std::streamsize>(block * 4))
      throw Error(ErrorKind::CorruptFile, bin_path.string() + ": truncated");
    FeaturePatch p;
    p.segment_id = entry.segment_id;
    p.mel_bands = shape[0];
    p.frames = shape[1];
    p.values.resize(block);
    for (std::size_t i = 0; i < block; ++i) p.values[i] = std::bit_cast<float>(detail::to_le(raw[i]));
    cache.entries.push_back(std::move(entry));
    cache.patches.push_back(std::move(p));
  }
  return cache;
}

}  // namespace websed
