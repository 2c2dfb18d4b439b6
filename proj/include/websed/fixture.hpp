#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "websed/audio.hpp"
#include "websed/csv.hpp"
#include "websed/random.hpp"
#include "websed/vocabulary.hpp"

namespace websed::fixture {

/// Synthetic three-class tone corpus: noisy sines at 440 Hz, 1 kHz and 3 kHz.
struct ToneClass {
  std::string label;
  double frequency_hz;
};

inline const std::vector<ToneClass>& tone_classes() {
  static const std::vector<ToneClass> classes = {
      {"low tone", 440.0}, {"mid tone", 1000.0}, {"high tone", 3000.0}};
  return classes;
}

inline LabelVocabulary tone_vocabulary() {
  std::vector<std::string> labels;
  for (const auto& c : tone_classes()) labels.push_back(c.label);
  return {DatasetId::Custom, labels};
}

/// A sine with small frequency jitter, random phase and level, plus white
/// noise about 10 dB below the tone.
inline std::vector<float> tone_clip(double frequency_hz, std::size_t samples, int sample_rate, SplitMix64& rng) {
  const double f = frequency_hz * rng.uniform(0.98, 1.02);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double amp = rng.uniform(0.2, 0.5);
  const double noise = amp * rng.uniform(0.15, 0.3);
  std::vector<float> out(samples);
  for (std::size_t i = 0; i < samples; ++i)
    out[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / sample_rate + phase) +
                                noise * rng.normal());
  return out;
}

struct FixtureOptions {
  std::size_t clips_per_class = 60;
  std::size_t clip_samples = kSegmentWindowSamples;  // one patch per clip
  std::size_t crawl_videos_per_class = 6;
  double crawl_mislabeled_fraction = 0.3;  // videos whose audio is another class's tone
  std::uint64_t seed = 7;
};

struct FixturePaths {
  std::filesystem::path root;
  std::filesystem::path manifest;      // labeled clips
  std::filesystem::path vocabulary;    // one label per line
  std::filesystem::path crawl_root;    // <label>/*.wav, for LocalDirectoryFetcher
};

/// Writes the labeled clips + manifest and a small "web" corpus laid out by
/// query label. Crawl videos include a few too short to be accepted, some
/// stereo 22.05 kHz files, and a share whose audio belongs to another class,
/// so query ground truth and real content disagree.
inline FixturePaths write_tone_fixture(const std::filesystem::path& root, const FixtureOptions& opts = {}) {
  FixturePaths paths{root, root / "manifest.csv", root / "vocabulary.txt", root / "crawl"};
  std::filesystem::create_directories(root);
  SplitMix64 rng(opts.seed);
  const auto& classes = tone_classes();

  {
    std::ofstream vocab(paths.vocabulary, std::ios::binary);
    for (const auto& c : classes) vocab << c.label << '\n';
  }

  std::ofstream manifest(paths.manifest, std::ios::binary);
  manifest << "clip_id,file_path,dataset_id,label\n";
  for (const auto& c : classes) {
    const auto slug = slugify(c.label);
    for (std::size_t i = 0; i < opts.clips_per_class; ++i) {
      const auto id = slug + "-" + std::to_string(i);
      const auto rel = std::filesystem::path("clips") / slug / (id + ".wav");
      write_wav_pcm16(root / rel, tone_clip(c.frequency_hz, opts.clip_samples, kCanonicalSampleRate, rng),
                      kCanonicalSampleRate);
      manifest << csv::join({id, rel.generic_string(), "custom", c.label}) << '\n';
    }
  }

  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const auto dir = paths.crawl_root / classes[ci].label;
    std::filesystem::create_directories(dir);
    for (std::size_t v = 0; v < opts.crawl_videos_per_class; ++v) {
      std::size_t content = ci;
      if (rng.uniform() < opts.crawl_mislabeled_fraction)
        content = (ci + 1 + rng.below(classes.size() - 1)) % classes.size();
      const auto name = dir / ("vid" + std::to_string(ci) + std::to_string(v) + ".wav");
      if (v == 0) {
        // too short: rejected by the duration filter
        write_wav_pcm16(name, tone_clip(classes[content].frequency_hz, 2 * kCanonicalSampleRate, kCanonicalSampleRate, rng),
                        kCanonicalSampleRate);
        continue;
      }
      const double seconds = rng.uniform(3.0, 5.0);
      if (v % 2 == 1) {
        const int rate = 22050;
        const auto n = static_cast<std::size_t>(seconds * rate);
        auto left = tone_clip(classes[content].frequency_hz, n, rate, rng);
        std::vector<float> stereo(2 * n);
        for (std::size_t i = 0; i < n; ++i) stereo[2 * i] = stereo[2 * i + 1] = left[i];
        write_wav_pcm16(name, stereo, rate, 2);
      } else {
        const auto n = static_cast<std::size_t>(seconds * kCanonicalSampleRate);
        write_wav_pcm16(name, tone_clip(classes[content].frequency_hz, n, kCanonicalSampleRate, rng),
                        kCanonicalSampleRate);
      }
    }
  }
  return paths;
}

}  // namespace websed::fixture
