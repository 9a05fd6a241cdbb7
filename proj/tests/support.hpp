#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "wavemat/core.hpp"

namespace wavemat::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("wavemat-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

inline std::vector<MaterialClass> class_table(int k) {
  std::vector<MaterialClass> out;
  for (int i = 0; i < k; ++i) out.push_back({i, "m" + std::to_string(i)});
  return out;
}

// Random but valid dataset: amplitudes in [0, ceiling], protocol yaws.
inline Dataset random_dataset(std::mt19937_64& gen, std::size_t n, int k, double ceiling = 1.0) {
  std::uniform_real_distribution<double> amp(0.0, ceiling);
  std::uniform_int_distribution<int> label(0, k - 1), rep(1, 5), angle(0, 8);
  std::vector<LabeledSample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(kWaveformLength);
    for (auto& v : w) v = amp(gen);
    if (i % 3 == 0) w[7] = ceiling;
    if (i % 4 == 0) w[9] = 0.0;
    LabeledSample s;
    s.sample_id = 100 + 3 * i;
    s.waveform = Waveform(w);
    s.meta.yaw_deg = -60.0 + 15.0 * angle(gen);
    s.meta.distance_m = 1.0 + 0.125 * static_cast<double>(i % 3);
    s.meta.repetition = rep(gen);
    s.label = label(gen);
    samples.push_back(std::move(s));
  }
  return Dataset(std::move(samples), class_table(k), gen(), ceiling);
}

}  // namespace wavemat::test
