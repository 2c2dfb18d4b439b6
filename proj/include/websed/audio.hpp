#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "websed/csv.hpp"
#include "websed/error.hpp"

namespace websed {

inline constexpr int kCanonicalSampleRate = 44100;

struct AudioClip {
  std::vector<float> samples;  // mono, in [-1, 1]
  int sample_rate = kCanonicalSampleRate;
  std::string source_id;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Interleaved multi-channel PCM as found in the file, scaled to [-1, 1].
struct WavData {
  std::vector<float> interleaved;
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;

  std::size_t frames() const { return channels > 0 ? interleaved.size() / channels : 0; }
};

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  std::uint16_t format = 0;
  std::size_t frames = 0;

  double duration_s() const { return sample_rate > 0 ? static_cast<double>(frames) / sample_rate : 0.0; }
};

namespace wav_detail {

inline constexpr std::uint16_t kFormatPcm = 1;
inline constexpr std::uint16_t kFormatFloat = 3;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

inline std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

struct Parsed {
  WavInfo info;
  std::span<const unsigned char> data;
};

// Walks the RIFF chunk list; `bytes` must outlive the returned span.
inline Parsed parse(std::span<const unsigned char> bytes, const std::string& name) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorKind::UnreadableFile, name + ": not a RIFF/WAVE file");
  Parsed out;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const auto* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw Error(ErrorKind::UnreadableFile, name + ": short fmt chunk");
      const auto* f = bytes.data() + body;
      out.info.format = le16(f);
      out.info.channels = le16(f + 2);
      out.info.sample_rate = static_cast<int>(le32(f + 4));
      out.info.bits_per_sample = le16(f + 14);
      if (out.info.format == kFormatExtensible) {
        if (avail < 26) throw Error(ErrorKind::UnreadableFile, name + ": short extensible fmt chunk");
        out.info.format = le16(f + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      // Streams written before the length is known may carry 0 or 0xFFFFFFFF.
      const std::size_t len = (size == 0 || size == 0xFFFFFFFFu) ? bytes.size() - body : avail;
      out.data = bytes.subspan(body, len);
      have_data = true;
      if (have_fmt) break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data) throw Error(ErrorKind::UnreadableFile, name + ": missing fmt or data chunk");
  const auto& info = out.info;
  if (info.channels <= 0 || info.sample_rate <= 0)
    throw Error(ErrorKind::UnreadableFile, name + ": invalid channel count or sample rate");
  const bool pcm_ok = info.format == kFormatPcm &&
                      (info.bits_per_sample == 8 || info.bits_per_sample == 16 || info.bits_per_sample == 24 ||
                       info.bits_per_sample == 32);
  const bool float_ok = info.format == kFormatFloat && (info.bits_per_sample == 32 || info.bits_per_sample == 64);
  if (!pcm_ok && !float_ok)
    throw Error(ErrorKind::UnsupportedEncoding, name + ": format " + std::to_string(info.format) + " with " +
                                                    std::to_string(info.bits_per_sample) + " bits");
  out.info.frames = out.data.size() / (static_cast<std::size_t>(info.channels) * (info.bits_per_sample / 8));
  return out;
}

inline std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace wav_detail

/// Decodes an in-memory RIFF/WAVE image (PCM 8/16/24/32-bit, IEEE float 32/64).
inline WavData decode_wav(std::span<const unsigned char> bytes, const std::string& name = "<memory>") {
  const auto parsed = wav_detail::parse(bytes, name);
  const auto& info = parsed.info;
  WavData out;
  out.sample_rate = info.sample_rate;
  out.channels = info.channels;
  out.bits_per_sample = info.bits_per_sample;
  const std::size_t count = info.frames * static_cast<std::size_t>(info.channels);
  out.interleaved.resize(count);
  const unsigned char* p = parsed.data.data();
  const int width = info.bits_per_sample / 8;
  for (std::size_t i = 0; i < count; ++i, p += width) {
    float v = 0.0f;
    if (info.format == wav_detail::kFormatFloat) {
      if (width == 4) {
        v = std::bit_cast<float>(wav_detail::le32(p));
      } else {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) bits = bits << 8 | p[b];
        v = static_cast<float>(std::bit_cast<double>(bits));
      }
      if (!std::isfinite(v)) v = 0.0f;
    } else {
      switch (width) {
        case 1: v = (static_cast<int>(p[0]) - 128) / 128.0f; break;
        case 2: v = static_cast<std::int16_t>(wav_detail::le16(p)) / 32768.0f; break;
        case 3: {
          std::int32_t s = std::int32_t(p[0]) | std::int32_t(p[1]) << 8 | std::int32_t(p[2]) << 16;
          if (s & 0x800000) s -= 0x1000000;
          v = static_cast<float>(s / 8388608.0);
          break;
        }
        default: v = static_cast<float>(static_cast<std::int32_t>(wav_detail::le32(p)) / 2147483648.0);
      }
    }
    out.interleaved[i] = std::clamp(v, -1.0f, 1.0f);
  }
  return out;
}

inline WavData read_wav(const std::filesystem::path& path) {
  const auto bytes = wav_detail::slurp(path);
  return decode_wav(bytes, path.string());
}

/// Format and length without converting samples; used by fetchers for durations.
inline WavInfo read_wav_info(const std::filesystem::path& path) {
  const auto bytes = wav_detail::slurp(path);
  return wav_detail::parse(bytes, path.string()).info;
}

/// 16-bit PCM RIFF/WAVE image of interleaved samples (clipped to [-1, 1]).
inline std::string encode_wav_pcm16(std::span<const float> samples, int sample_rate, int channels = 1) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i) & 0xFF));
  };
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
  };
  out += "RIFF";
  put32(36 + data_bytes);
  out += "WAVEfmt ";
  put32(16);
  put16(wav_detail::kFormatPcm);
  put16(static_cast<std::uint16_t>(channels));
  put32(static_cast<std::uint32_t>(sample_rate));
  put32(static_cast<std::uint32_t>(sample_rate * channels) * 2);
  put16(static_cast<std::uint16_t>(2 * channels));
  put16(16);
  out += "data";
  put32(data_bytes);
  for (float s : samples) {
    const double scaled = std::round(std::clamp(static_cast<double>(s), -1.0, 1.0) * 32768.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0))));
  }
  return out;
}

inline void write_wav_pcm16(const std::filesystem::path& path, std::span<const float> samples, int sample_rate,
                            int channels = 1) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  const auto bytes = encode_wav_pcm16(samples, sample_rate, channels);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Arithmetic mean across channels.
inline std::vector<float> downmix(const WavData& wav) {
  const std::size_t frames = wav.frames();
  std::vector<float> mono(frames);
  const auto channels = static_cast<std::size_t>(wav.channels);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += wav.interleaved[f * channels + c];
    mono[f] = static_cast<float>(acc / static_cast<double>(channels));
  }
  return mono;
}

struct ResamplerConfig {
  int taps_per_phase = 64;
  double kaiser_beta = 8.0;
  /// Passband edge as a fraction of the narrower Nyquist frequency.
  double rolloff = 0.95;
};

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc prototype.
///
/// The output rate is in_rate * up / down with up/down reduced by their gcd.
/// The prototype filter lives at the virtual rate in_rate * up, spans
/// taps_per_phase input samples on either side combined (2 * half + 1 taps at
/// the virtual rate, half = taps_per_phase * up / 2) and is scaled by `up` so
/// passband gain is unity. Output sample m sits at virtual position m * down.
class PolyphaseResampler {
 public:
  PolyphaseResampler(int in_rate, int out_rate, ResamplerConfig cfg = {}) : cfg_(cfg) {
    if (in_rate <= 0 || out_rate <= 0) throw Error(ErrorKind::InvalidConfig, "sample rates must be positive");
    const int g = std::gcd(in_rate, out_rate);
    up_ = out_rate / g;
    down_ = in_rate / g;
    half_ = static_cast<long long>(cfg_.taps_per_phase) * up_ / 2;
    const double cutoff = cfg_.rolloff * 0.5 / std::max(up_, down_);  // cycles per virtual sample
    const double i0_beta = std::cyl_bessel_i(0.0, cfg_.kaiser_beta);
    table_.resize(static_cast<std::size_t>(2 * half_ + 1));
    for (long long n = -half_; n <= half_; ++n) {
      const double x = static_cast<double>(n);
      const double arg = 2.0 * cutoff * x;
      const double sinc = n == 0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double r = x / static_cast<double>(half_);
      const double window = std::cyl_bessel_i(0.0, cfg_.kaiser_beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      table_[static_cast<std::size_t>(n + half_)] = up_ * 2.0 * cutoff * sinc * window;
    }
  }

  int up() const noexcept { return up_; }
  int down() const noexcept { return down_; }

  std::size_t output_length(std::size_t input_length) const {
    return static_cast<std::size_t>((static_cast<unsigned long long>(input_length) * up_ + down_ - 1) / down_);
  }

  std::vector<float> process(std::span<const float> input) const {
    if (up_ == 1 && down_ == 1) return {input.begin(), input.end()};
    std::vector<float> out(output_length(input.size()));
    const auto n_in = static_cast<long long>(input.size());
    for (std::size_t m = 0; m < out.size(); ++m) {
      const long long t = static_cast<long long>(m) * down_;
      // input index k contributes when |t - k*up| <= half
      long long k_lo = t - half_ <= 0 ? -((half_ - t) / up_) : (t - half_ + up_ - 1) / up_;
      long long k_hi = (t + half_) / up_;
      k_lo = std::max(k_lo, 0LL);
      k_hi = std::min(k_hi, n_in - 1);
      double acc = 0.0;
      for (long long k = k_lo; k <= k_hi; ++k)
        acc += static_cast<double>(input[static_cast<std::size_t>(k)]) *
               table_[static_cast<std::size_t>(t - k * up_ + half_)];
      out[m] = static_cast<float>(acc);
    }
    return out;
  }

 private:
  ResamplerConfig cfg_;
  int up_ = 1;
  int down_ = 1;
  long long half_ = 0;
  std::vector<double> table_;
};

inline std::vector<float> resample(std::span<const float> input, int in_rate, int out_rate,
                                   ResamplerConfig cfg = {}) {
  return PolyphaseResampler(in_rate, out_rate, cfg).process(input);
}

/// Canonical form of an in-memory WAV: mono by channel averaging, resampled
/// to `target_rate`, clamped to [-1, 1].
inline AudioClip canonicalize(const WavData& wav, std::string source_id, int target_rate = kCanonicalSampleRate) {
  AudioClip clip;
  clip.source_id = std::move(source_id);
  clip.sample_rate = target_rate;
  auto mono = downmix(wav);
  clip.samples = wav.sample_rate == target_rate ? std::move(mono) : resample(mono, wav.sample_rate, target_rate);
  for (auto& s : clip.samples) s = std::clamp(s, -1.0f, 1.0f);
  return clip;
}

inline AudioClip decode_and_canonicalize(const std::filesystem::path& path, int target_rate = kCanonicalSampleRate) {
  return canonicalize(read_wav(path), path.stem().string(), target_rate);
}

// ---------------------------------------------------------------------------
// Segmentation

/// 100 hops of 512 plus one 1024-sample window: exactly 101 frames.
inline constexpr std::size_t kSegmentWindowSamples = 100 * 512 + 1024;
/// 10 hops: consecutive segments share 91 of their 101 frames.
inline constexpr std::size_t kSegmentStrideSamples = 10 * 512;

struct Segment {
  std::string segment_id;
  std::string source_id;
  std::size_t start_sample = 0;
  std::size_t length_samples = kSegmentWindowSamples;

  friend bool operator==(const Segment&, const Segment&) = default;
};

inline std::string make_segment_id(std::string_view source_id, std::size_t index) {
  std::string idx = std::to_string(index);
  if (idx.size() < 5) idx.insert(0, 5 - idx.size(), '0');
  return std::string(source_id) + "_s" + idx;
}

inline std::size_t segment_count(std::size_t length, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0 || length < window) return 0;
  return (length - window) / stride + 1;
}

inline std::vector<Segment> segment_clip(const AudioClip& clip, std::size_t window_samples = kSegmentWindowSamples,
                                         std::size_t stride_samples = kSegmentStrideSamples) {
  if (window_samples == 0 || stride_samples == 0)
    throw Error(ErrorKind::InvalidConfig, "segment window and stride must be positive");
  const std::size_t n = segment_count(clip.samples.size(), window_samples, stride_samples);
  std::vector<Segment> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({make_segment_id(clip.source_id, i), clip.source_id, i * stride_samples, window_samples});
  return out;
}

inline std::span<const float> segment_samples(const AudioClip& clip, const Segment& seg) {
  if (seg.start_sample + seg.length_samples > clip.samples.size())
    throw Error(ErrorKind::ShapeMismatch, "segment " + seg.segment_id + " exceeds its clip");
  return std::span<const float>(clip.samples).subspan(seg.start_sample, seg.length_samples);
}

inline void write_segment_inventory(const std::filesystem::path& path, const std::vector<Segment>& segments,
                                    std::string_view config_hash = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "segment_id,source_id,start_sample,length_samples\n";
  for (const auto& s : segments)
    out << csv::escape(s.segment_id) << ',' << csv::escape(s.source_id) << ',' << s.start_sample << ','
        << s.length_samples << '\n';
}

inline std::vector<Segment> read_segment_inventory(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  csv::require_header(table, {"segment_id", "source_id", "start_sample", "length_samples"}, path);
  std::vector<Segment> out;
  for (const auto& row : table.rows) {
    if (row.fields.size() < 4)
      throw Error(ErrorKind::MalformedRow, path.string() + ": line " + std::to_string(row.line_no));
    try {
      out.push_back({row.fields[0], row.fields[1], std::stoull(row.fields[2]), std::stoull(row.fields[3])});
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::MalformedRow, path.string() + ": line " + std::to_string(row.line_no));
    }
  }
  return out;
}

}  // namespace websed
