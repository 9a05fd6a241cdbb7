#pragma once

// Domain types shared by every module: waveforms, labels, capture metadata
// and the dataset container with its CSV file format.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wavemat {

inline constexpr std::size_t kWaveformLength = 256;

using ClassId = int;
/// Background points that are not on the material board. Never a training target.
inline constexpr ClassId kUnknownClass = -1;

/// One low-power return pulse: 256 consecutive amplitude samples.
class Waveform {
 public:
  using Samples = std::array<double, kWaveformLength>;

  Waveform() { samples_.fill(0.0); }
  /// Throws DataError unless `samples` has 256 finite, non-negative entries.
  explicit Waveform(std::span<const double> samples);

  const Samples& samples() const noexcept { return samples_; }
  double operator[](std::size_t i) const noexcept { return samples_[i]; }
  static constexpr std::size_t size() noexcept { return kWaveformLength; }
  double max() const noexcept;

  friend bool operator==(const Waveform&, const Waveform&) = default;
  friend auto operator<=>(const Waveform&, const Waveform&) = default;

 private:
  Samples samples_;
};

struct MaterialClass {
  ClassId id = kUnknownClass;
  std::string name;

  bool is_unknown() const noexcept { return id == kUnknownClass; }
  static MaterialClass unknown() { return {kUnknownClass, "unknown"}; }
  friend bool operator==(const MaterialClass&, const MaterialClass&) = default;
};

enum class PowerMode { Low };

std::string_view to_string(PowerMode mode);

/// Yaw grid of the capture protocol: -60..60 degrees in 15 degree steps.
std::span<const double> protocol_angles();
bool is_protocol_angle(double yaw_deg);

struct CaptureMeta {
  double yaw_deg = 0.0;
  double distance_m = 1.0;
  int repetition = 1;
  PowerMode power_mode = PowerMode::Low;

  friend bool operator==(const CaptureMeta&, const CaptureMeta&) = default;
};

struct LabeledSample {
  std::uint64_t sample_id = 0;
  Waveform waveform;
  CaptureMeta meta;
  ClassId label = kUnknownClass;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

/// Immutable collection of labelled waveforms. All invariants are checked in
/// the constructor:
///  - class ids are dense 0..K-1 and names unique
///  - every label is a valid id (never UNKNOWN)
///  - samples lie in [0, amplitude_ceiling]; sample ids are unique
///  - distance > 0, repetition >= 1
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<LabeledSample> samples, std::vector<MaterialClass> classes,
          std::uint64_t seed, double amplitude_ceiling = 1.0);

  const std::vector<LabeledSample>& samples() const noexcept { return samples_; }
  const std::vector<MaterialClass>& classes() const noexcept { return classes_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double amplitude_ceiling() const noexcept { return amplitude_ceiling_; }

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  std::size_t class_count() const noexcept { return classes_.size(); }
  const LabeledSample& operator[](std::size_t i) const noexcept { return samples_[i]; }

  std::vector<ClassId> labels() const;
  /// Number of distinct labels actually present in the samples.
  std::size_t distinct_label_count() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<LabeledSample> samples_;
  std::vector<MaterialClass> classes_;
  std::uint64_t seed_ = 0;
  double amplitude_ceiling_ = 1.0;
};

// ---------------------------------------------------------------------------
// Dataset files

struct ReadOptions {
  /// Reject yaw angles outside the protocol grid.
  bool strict_protocol = false;
};

/// Sidecar path for a dataset CSV: `foo.csv` -> `foo.meta`.
std::filesystem::path meta_path_for(const std::filesystem::path& csv_path);

std::string dataset_csv_header();

/// Writes the CSV and its `.meta` sidecar. Output is byte-deterministic.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path, const ReadOptions& options = {});

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
double parse_double(std::string_view text);

// ---------------------------------------------------------------------------

/// Returns (train, test): a sample goes to test iff its repetition is in
/// `test_reps`. Both partitions keep the full class table.
std::pair<Dataset, Dataset> split_by_repetition(const Dataset& dataset, const std::set<int>& test_reps);

}  // namespace wavemat
