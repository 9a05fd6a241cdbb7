#pragma once

// Parametric full-waveform return-pulse simulator and the capture protocol
// that turns it into labelled datasets.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wavemat/config.hpp"
#include "wavemat/core.hpp"

namespace wavemat {

/// Upper bound on reflectivity x colour_scale. Values above 1 saturate the
/// receiver at normal incidence.
inline constexpr double kReflectivityMax = 4.0;

struct MaterialProfile {
  std::string name;
  double reflectivity = 0.5;     // peak return fraction of A_sat at 0 deg yaw
  double tail_gain = 0.0;        // tail amplitude relative to the peak
  double tail_decay = 10.0;      // tail e-folding length, in samples
  double width_scale = 1.0;      // return width relative to the emitted pulse
  double colour_scale = 1.0;     // colour-dependent reflectance multiplier
  double specular_exponent = 1.0;  // angle falloff cos(yaw)^n; n = 1 is Lambertian

  void validate() const;
  friend bool operator==(const MaterialProfile&, const MaterialProfile&) = default;
};

struct SensorModel {
  std::size_t n_samples = kWaveformLength;
  double pulse_width = 3.0;         // emitted Gaussian std-dev, samples
  double samples_per_metre = 30.0;  // round-trip range to sample index
  double amplitude_ceiling = 1.0;   // saturation level A_sat
  double noise_std = 0.0;           // additive Gaussian noise
  double baseline = 0.0;            // level before the return arrives
  double gain_jitter = 0.0;         // relative std-dev of the per-capture return gain
  double yaw_jitter_deg = 0.0;      // std-dev of the per-capture mount error, degrees
  int adc_levels = 0;               // digitiser codes spanning [0, amplitude_ceiling]; 0 keeps reals

  void validate() const;
};

struct ProtocolSpec {
  std::vector<MaterialProfile> materials;
  std::vector<double> angles_deg;
  double distance_m = 1.0;
  int repetitions = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Where a return lands in the sample window.
struct PulseGeometry {
  double onset = 0.0;   // i0, rounded round-trip index
  double sigma = 0.0;   // effective lobe std-dev
  double centre = 0.0;  // i0 + 3 sigma
  double amplitude = 0.0;  // noiseless, unclipped peak of the main lobe
};

PulseGeometry pulse_geometry(const MaterialProfile& material, const SensorModel& sensor, double yaw_deg,
                             double distance_m);

/// Simulates one capture. Pure function of its arguments; all randomness is
/// drawn from a counter generator keyed by `noise_seed`.
/// Throws UsageError naming the parameter when the pulse does not fit the window.
Waveform simulate_return(const MaterialProfile& material, const SensorModel& sensor, double yaw_deg,
                         double distance_m, std::uint64_t noise_seed);

/// Noise seed of one capture. Keyed by material name so that reordering the
/// material list does not change any waveform.
std::uint64_t capture_seed(std::uint64_t protocol_seed, std::string_view material, double yaw_deg, int repetition);

/// One sample per (material, angle, repetition), material-major order.
Dataset generate_dataset(const ProtocolSpec& spec, const SensorModel& sensor);

/// First sample index that any capture of `spec` can deviate from the
/// baseline at; indices below it are the flat pre-return head.
std::size_t flat_head_end(const ProtocolSpec& spec, const SensorModel& sensor);

// --- configuration -------------------------------------------------------------

SensorModel sensor_from_config(const KeyValueConfig& config);
/// Reads `materials=`, `material.<name>.*` and `cardboard_colours=` entries.
/// Colour variants `cardboard_<colour>` copy the black_cardboard shape and
/// differ only in colour_scale.
std::vector<MaterialProfile> material_bank_from_config(const KeyValueConfig& config);
ProtocolSpec protocol_from_config(const KeyValueConfig& config);

SensorModel default_sensor();
std::vector<MaterialProfile> default_material_bank();

enum class MaterialSet { Pair, AllMaterials, Colours };
enum class AngleMode { Zero, All };

MaterialSet parse_material_set(std::string_view text);
AngleMode parse_angle_mode(std::string_view text);
std::string_view to_string(MaterialSet set);
std::string_view to_string(AngleMode mode);

std::vector<std::string> material_set_names(MaterialSet set, const KeyValueConfig& config);
std::vector<double> angle_list(AngleMode mode);
/// Picks profiles from `bank` by name, in the order given.
std::vector<MaterialProfile> select_materials(std::span<const MaterialProfile> bank,
                                              std::span<const std::string> names);

// --- board labelling -------------------------------------------------------------

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct BoardPoint {
  Point3 position;
  std::size_t waveform_index = 0;
};

/// Points inside the closed box centre +- half_extent take `material`;
/// everything else is UNKNOWN background.
std::vector<MaterialClass> label_board_points(std::span<const BoardPoint> points, const Point3& board_centre,
                                              const Point3& half_extent, const MaterialClass& material);

}  // namespace wavemat
