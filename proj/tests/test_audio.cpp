#include <cmath>
#include <cstring>
#include <fstream>

#include <gtest/gtest.h>

#include "support.hpp"
#include "websed/audio.hpp"
#include "websed/random.hpp"

using namespace websed;
using websed::testing::naive_dft;
using websed::testing::sine;
using websed::testing::TempDir;

namespace {

/// Hand-assembled RIFF image: `fmt` then `data`, with an optional junk chunk
/// in between.
std::vector<unsigned char> riff(std::uint16_t format, int channels, int rate, int bits,
                                const std::vector<unsigned char>& data, bool extensible = false, bool junk = false) {
  std::vector<unsigned char> fmt, out;
  const auto put = [](std::vector<unsigned char>& v, std::uint64_t x, int n) {
    for (int i = 0; i < n; ++i) v.push_back(static_cast<unsigned char>(x >> (8 * i)));
  };
  put(fmt, extensible ? 0xFFFE : format, 2);
  put(fmt, channels, 2);
  put(fmt, rate, 4);
  put(fmt, rate * channels * bits / 8, 4);
  put(fmt, channels * bits / 8, 2);
  put(fmt, bits, 2);
  if (extensible) {
    put(fmt, 22, 2);
    put(fmt, bits, 2);
    put(fmt, 0, 4);
    put(fmt, format, 2);  // subformat GUID starts with the format tag
    for (int i = 0; i < 14; ++i) fmt.push_back(0);
  }
  std::vector<unsigned char> body = {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '};
  put(body, fmt.size(), 4);
  body.insert(body.end(), fmt.begin(), fmt.end());
  if (junk) {
    const char tag[] = "LIST";
    body.insert(body.end(), tag, tag + 4);
    put(body, 3, 4);
    body.insert(body.end(), {1, 2, 3, 0});  // odd size + pad byte
  }
  const char data_tag[] = "data";
  body.insert(body.end(), data_tag, data_tag + 4);
  put(body, data.size(), 4);
  body.insert(body.end(), data.begin(), data.end());
  out = {'R', 'I', 'F', 'F'};
  put(out, body.size(), 4);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

double rms(std::span<const float> x) {
  double s = 0.0;
  for (float v : x) s += double(v) * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

TEST(Wav, Pcm16RoundTrip) {
  SplitMix64 rng(1);
  std::vector<float> x(1000);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto bytes = encode_wav_pcm16(x, 44100);
  const auto wav = decode_wav(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
  ASSERT_EQ(wav.interleaved.size(), x.size());
  EXPECT_EQ(wav.sample_rate, 44100);
  EXPECT_EQ(wav.channels, 1);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(wav.interleaved[i], x[i], 1.0 / 32768.0 + 1e-7);
}

TEST(Wav, DecodesEveryIntegerAndFloatWidth) {
  // Each case encodes the values {0, 0.5, -0.5}.
  struct Case {
    std::uint16_t format;
    int bits;
    std::vector<unsigned char> data;
  };
  std::vector<unsigned char> f32(12), f64(24);
  for (int i = 0; i < 3; ++i) {
    const float vf = i == 0 ? 0.0f : (i == 1 ? 0.5f : -0.5f);
    const double vd = vf;
    std::memcpy(f32.data() + 4 * i, &vf, 4);
    std::memcpy(f64.data() + 8 * i, &vd, 8);
  }
  const std::vector<Case> cases = {
      {1, 8, {128, 192, 64}},
      {1, 16, {0, 0, 0x00, 0x40, 0x00, 0xC0}},
      {1, 24, {0, 0, 0, 0, 0, 0x40, 0, 0, 0xC0}},
      {1, 32, {0, 0, 0, 0, 0, 0, 0, 0x40, 0, 0, 0, 0xC0}},
      {3, 32, f32},
      {3, 64, f64},
  };
  for (const auto& c : cases)
    for (bool ext : {false, true}) {
      const auto bytes = riff(c.format, 1, 8000, c.bits, c.data, ext, true);
      const auto wav = decode_wav(bytes);
      ASSERT_EQ(wav.interleaved.size(), 3u) << c.bits;
      EXPECT_FLOAT_EQ(wav.interleaved[0], 0.0f);
      EXPECT_FLOAT_EQ(wav.interleaved[1], 0.5f) << c.bits << " ext " << ext;
      EXPECT_FLOAT_EQ(wav.interleaved[2], -0.5f) << c.bits << " ext " << ext;
    }
}

TEST(Wav, RejectsUnsupportedAndGarbage) {
  try {
    decode_wav(riff(2, 1, 8000, 4, {0, 0}));  // ADPCM
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedEncoding);
  }
  const std::vector<unsigned char> junk = {'n', 'o', 'p', 'e'};
  try {
    decode_wav(junk);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnreadableFile);
  }
  try {
    read_wav("/nonexistent/x.wav");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnreadableFile);
  }
}

TEST(Downmix, OppositeChannelsCancelAndEqualChannelsPass) {
  WavData w;
  w.channels = 2;
  w.sample_rate = 44100;
  for (int i = 0; i < 100; ++i) {
    const float v = std::sin(0.1f * i);
    w.interleaved.push_back(v);
    w.interleaved.push_back(-v);
  }
  for (float v : downmix(w)) EXPECT_EQ(v, 0.0f);
  for (std::size_t i = 0; i < w.interleaved.size(); i += 2) w.interleaved[i + 1] = w.interleaved[i];
  const auto mono = downmix(w);
  for (std::size_t i = 0; i < mono.size(); ++i) EXPECT_FLOAT_EQ(mono[i], w.interleaved[2 * i]);
}

TEST(Resample, SameRateIsIdentity) {
  const auto x = sine(440.0, 4096, 44100);
  EXPECT_EQ(resample(x, 44100, 44100), x);
}

TEST(Resample, ToneKeepsFrequencyAndLevel) {
  // 22.05 kHz -> 44.1 kHz and 48 kHz -> 44.1 kHz; the spectral peak of the
  // output (naive DFT) must sit at the tone's bin and the RMS stay within 1 dB.
  for (int in_rate : {22050, 48000, 16000}) {
    const std::size_t n_in = static_cast<std::size_t>(in_rate);  // one second
    const auto x = sine(440.0, n_in, in_rate);
    const auto y = resample(x, in_rate, 44100);
    EXPECT_NEAR(static_cast<double>(y.size()), 44100.0, 1.0) << in_rate;
    // Middle 4096 samples, away from filter edges.
    const std::size_t n = 4096, off = y.size() / 2 - n / 2;
    std::vector<double> mid(y.begin() + off, y.begin() + off + n);
    const auto spec = naive_dft(mid);
    std::size_t peak = 0;
    for (std::size_t k = 1; k < spec.size(); ++k)
      if (std::abs(spec[k]) > std::abs(spec[peak])) peak = k;
    const double expected_bin = 440.0 * n / 44100.0;
    EXPECT_LE(std::abs(static_cast<double>(peak) - expected_bin), 1.0) << in_rate;
    const std::span<const float> ys(y.data() + off, n);
    const std::span<const float> xs(x.data() + x.size() / 4, x.size() / 2);
    EXPECT_LT(std::abs(20.0 * std::log10(rms(ys) / rms(xs))), 1.0) << in_rate;
  }
}

TEST(Resample, OutputLengthFollowsRateRatio) {
  PolyphaseResampler r(22050, 44100);
  EXPECT_EQ(r.up(), 2);
  EXPECT_EQ(r.down(), 1);
  for (std::size_t n : {0u, 1u, 7u, 1000u}) EXPECT_EQ(r.process(std::vector<float>(n, 0.1f)).size(), r.output_length(n));
}

TEST(Canonicalize, StereoLowRateBecomesMono44k) {
  TempDir dir("canon");
  const auto left = sine(1000.0, 22050, 22050);
  std::vector<float> stereo;
  for (float v : left) {
    stereo.push_back(v);
    stereo.push_back(v);
  }
  write_wav_pcm16(dir / "s.wav", stereo, 22050, 2);
  const auto clip = decode_and_canonicalize(dir / "s.wav");
  EXPECT_EQ(clip.sample_rate, 44100);
  EXPECT_EQ(clip.source_id, "s");
  EXPECT_NEAR(clip.duration_s(), 1.0, 1e-3);
}

TEST(Segmentation, CountsMatchBruteForceEnumeration) {
  const auto brute = [](std::size_t len, std::size_t window, std::size_t stride) {
    std::size_t n = 0;
    for (std::size_t start = 0; start + window <= len; start += stride) ++n;
    return n;
  };
  for (std::size_t len = 0; len <= 200000; len += 97)
    ASSERT_EQ(segment_count(len, kSegmentWindowSamples, kSegmentStrideSamples),
              brute(len, kSegmentWindowSamples, kSegmentStrideSamples))
        << len;
  for (std::size_t len : {52223u, 52224u, 57343u, 57344u, 103424u, 200000u})
    EXPECT_EQ(segment_count(len, kSegmentWindowSamples, kSegmentStrideSamples),
              brute(len, kSegmentWindowSamples, kSegmentStrideSamples));
  EXPECT_EQ(segment_count(103424, kSegmentWindowSamples, kSegmentStrideSamples), 11u);
  EXPECT_EQ(segment_count(52223, kSegmentWindowSamples, kSegmentStrideSamples), 0u);
}

TEST(Segmentation, SegmentsCoverExpectedSamples) {
  AudioClip clip;
  clip.source_id = "vid";
  clip.samples.resize(103424);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) clip.samples[i] = static_cast<float>(i);
  const auto segs = segment_clip(clip);
  ASSERT_EQ(segs.size(), 11u);
  EXPECT_EQ(segs[0].segment_id, "vid_s00000");
  EXPECT_EQ(segs[10].segment_id, "vid_s00010");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto s = segment_samples(clip, segs[i]);
    ASSERT_EQ(s.size(), kSegmentWindowSamples);
    EXPECT_EQ(s.front(), static_cast<float>(i * kSegmentStrideSamples));
  }
}

TEST(Segmentation, InventoryRoundTrip) {
  TempDir dir("seginv");
  AudioClip clip;
  clip.source_id = "a,b";
  clip.samples.resize(70000);
  const auto segs = segment_clip(clip);
  write_segment_inventory(dir / "s.csv", segs, "h");
  EXPECT_EQ(read_segment_inventory(dir / "s.csv"), segs);
}
