#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <unistd.h>

#include "websed/cnn.hpp"
#include "websed/features.hpp"
#include "websed/random.hpp"

namespace websed::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("websed-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// O(n^2) DFT, bins 0..n/2, straight from the definition.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n));
    out[k] = acc;
  }
  return out;
}

inline std::vector<float> sine(double freq, std::size_t n, int rate, double amp = 0.5) {
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate));
  return out;
}

/// Small network with every stage of the full one: 12x15x2 input,
/// conv 4@9x4, pool 2x3/1x3, conv 4@1x2, pool 1x3/1x3, two FC of 8.
inline CnnConfig tiny_cnn(int classes = 3, double dropout = 0.0) {
  CnnConfig c;
  c.input_height = 12;
  c.input_width = 15;
  c.conv1 = {4, 9, 4, 1, 1};
  c.pool1 = {2, 3, 1, 3};
  c.conv2 = {4, 1, 2, 1, 1};
  c.pool2 = {1, 3, 1, 3};
  c.fc_width = 8;
  c.num_classes = classes;
  c.dropout_p = dropout;
  return c;
}

/// Patch shaped for `cfg` with uniform values in [-1, 1).
inline FeaturePatch random_patch(const CnnConfig& cfg, SplitMix64& rng, std::string id = "p") {
  FeaturePatch p;
  p.segment_id = std::move(id);
  p.mel_bands = static_cast<std::size_t>(cfg.input_height);
  p.frames = static_cast<std::size_t>(cfg.input_width);
  p.values.resize(cfg.input_size());
  for (auto& v : p.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return p;
}

}  // namespace websed::testing
