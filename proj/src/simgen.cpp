#include "wavemat/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wavemat/error.hpp"
#include "wavemat/rng.hpp"

namespace wavemat {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
// Main lobe support, in effective std-devs either side of the centre. The
// centre sits 3 sigma after the onset, so nothing precedes i0 - 3 sigma.
constexpr double kLobeSupport = 6.0;
constexpr std::uint64_t kGainCounter = 1u << 20;
constexpr std::uint64_t kYawCounter = kGainCounter + 1;
// Mount error is drawn within this many standard deviations.
constexpr double kYawJitterBound = 3.0;

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

bool finite_all(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void MaterialProfile::validate() const {
  const std::string who = "material '" + name + "': ";
  require(!name.empty(), "material name must not be empty");
  require(finite_all({reflectivity, tail_gain, tail_decay, width_scale, colour_scale, specular_exponent}),
          who + "all parameters must be finite");
  require(reflectivity > 0.0 && reflectivity <= kReflectivityMax, who + "reflectivity outside (0, R_max]");
  require(tail_gain >= 0.0, who + "tail_gain must be >= 0");
  require(tail_decay > 0.0, who + "tail_decay must be > 0");
  require(width_scale > 0.0, who + "width_scale must be > 0");
  require(colour_scale > 0.0 && colour_scale <= 1.0, who + "colour_scale outside (0, 1]");
  require(reflectivity * colour_scale <= kReflectivityMax, who + "reflectivity x colour_scale exceeds R_max");
  require(specular_exponent >= 1.0, who + "specular_exponent must be >= 1");
}

void SensorModel::validate() const {
  require(n_samples == kWaveformLength, "sensor n_samples must be " + std::to_string(kWaveformLength));
  require(finite_all({pulse_width, samples_per_metre, amplitude_ceiling, noise_std, baseline, gain_jitter, yaw_jitter_deg}),
          "sensor parameters must be finite");
  require(pulse_width > 0.0, "sensor pulse_width must be > 0");
  require(samples_per_metre > 0.0, "sensor samples_per_metre must be > 0");
  require(amplitude_ceiling > 0.0, "sensor amplitude_ceiling must be > 0");
  require(noise_std >= 0.0, "sensor noise_std must be >= 0");
  require(baseline >= 0.0 && baseline < amplitude_ceiling, "sensor baseline must lie in [0, amplitude_ceiling)");
  require(gain_jitter >= 0.0, "sensor gain_jitter must be >= 0");
  require(yaw_jitter_deg >= 0.0 && yaw_jitter_deg <= 5.0, "sensor yaw_jitter_deg outside [0, 5]");
  require(adc_levels >= 0, "sensor adc_levels must be >= 0");
}

void ProtocolSpec::validate() const {
  require(!materials.empty(), "protocol needs at least one material");
  for (const auto& m : materials) m.validate();
  for (std::size_t i = 0; i < materials.size(); ++i) {
    for (std::size_t j = i + 1; j < materials.size(); ++j) {
      require(materials[i].name != materials[j].name, "duplicate material '" + materials[i].name + "'");
    }
  }
  require(!angles_deg.empty(), "protocol needs at least one angle");
  for (double a : angles_deg) {
    require(std::isfinite(a) && std::abs(a) < 90.0, "protocol angle must lie in (-90, 90) degrees");
  }
  require(std::isfinite(distance_m) && distance_m > 0.0, "protocol distance_m must be > 0");
  require(repetitions >= 1, "protocol repetitions must be >= 1");
}

PulseGeometry pulse_geometry(const MaterialProfile& material, const SensorModel& sensor, double yaw_deg,
                             double distance_m) {
  require(std::isfinite(yaw_deg) && std::abs(yaw_deg) < 90.0, "yaw_deg must lie in (-90, 90)");
  require(std::isfinite(distance_m) && distance_m > 0.0, "distance_m must be > 0");
  const double c = std::cos(yaw_deg * kDegToRad);
  PulseGeometry g;
  g.onset = std::round(2.0 * distance_m * sensor.samples_per_metre);
  g.sigma = sensor.pulse_width * material.width_scale / c;
  g.centre = g.onset + 3.0 * g.sigma;
  g.amplitude = sensor.amplitude_ceiling * material.reflectivity * material.colour_scale *
                std::pow(c, material.specular_exponent);
  return g;
}

Waveform simulate_return(const MaterialProfile& material, const SensorModel& sensor, double yaw_deg,
                         double distance_m, std::uint64_t noise_seed) {
  material.validate();
  sensor.validate();
  const CounterRng rng(noise_seed);
  const double mount_error =
      sensor.yaw_jitter_deg * std::clamp(rng.normal(kYawCounter), -kYawJitterBound, kYawJitterBound);
  const PulseGeometry g = pulse_geometry(material, sensor, yaw_deg + mount_error, distance_m);
  const double last = static_cast<double>(sensor.n_samples - 1);
  if (g.onset > last) throw UsageError("distance_m places the return beyond the sample window");
  const auto fits = [&](double sigma) { return g.onset - 3.0 * sigma >= 0.0 && g.onset + 6.0 * sigma <= last; };
  if (!fits(g.sigma)) {
    const double flat_sigma = sensor.pulse_width * material.width_scale;
    if (fits(flat_sigma)) throw UsageError("yaw_deg widens the pulse past the sample window");
    if (fits(sensor.pulse_width)) throw UsageError("pulse_width/width_scale too large for the sample window");
    throw UsageError("distance_m puts the pulse outside the sample window");
  }

  const double gain = std::max(0.0, 1.0 + sensor.gain_jitter * rng.normal(kGainCounter));
  const double peak = g.amplitude * gain;
  const double tail_peak = peak * material.tail_gain;
  const double two_var = 2.0 * g.sigma * g.sigma;

  std::array<double, kWaveformLength> out{};
  for (std::size_t i = 0; i < sensor.n_samples; ++i) {
    const double d = static_cast<double>(i) - g.centre;
    double v = sensor.baseline;
    if (std::abs(d) < kLobeSupport * g.sigma) v += peak * std::exp(-d * d / two_var);
    if (d > 0.0) v += tail_peak * std::exp(-d / material.tail_decay);
    if (sensor.noise_std > 0.0) v += sensor.noise_std * rng.normal(i);
    out[i] = std::clamp(v, 0.0, sensor.amplitude_ceiling);
    if (sensor.adc_levels > 0) {
      const double code = std::round(out[i] / sensor.amplitude_ceiling * sensor.adc_levels);
      out[i] = code >= sensor.adc_levels ? sensor.amplitude_ceiling : code * sensor.amplitude_ceiling / sensor.adc_levels;
    }
  }
  return Waveform(out);
}

std::uint64_t capture_seed(std::uint64_t protocol_seed, std::string_view material, double yaw_deg, int repetition) {
  const auto milli_deg = static_cast<std::int64_t>(std::llround(yaw_deg * 1000.0));
  return hash_seed(protocol_seed, hash_string(material), static_cast<std::uint64_t>(milli_deg),
                   static_cast<std::uint64_t>(repetition));
}

Dataset generate_dataset(const ProtocolSpec& spec, const SensorModel& sensor) {
  spec.validate();
  sensor.validate();
  std::vector<MaterialClass> classes;
  for (std::size_t m = 0; m < spec.materials.size(); ++m) {
    classes.push_back({static_cast<ClassId>(m), spec.materials[m].name});
  }
  std::vector<LabeledSample> samples;
  samples.reserve(spec.materials.size() * spec.angles_deg.size() * static_cast<std::size_t>(spec.repetitions));
  std::uint64_t next_id = 0;
  for (std::size_t m = 0; m < spec.materials.size(); ++m) {
    const auto& material = spec.materials[m];
    for (double yaw : spec.angles_deg) {
      for (int rep = 1; rep <= spec.repetitions; ++rep) {
        LabeledSample s;
        s.sample_id = next_id++;
        s.label = static_cast<ClassId>(m);
        s.meta = {yaw, spec.distance_m, rep, PowerMode::Low};
        s.waveform = simulate_return(material, sensor, yaw, spec.distance_m,
                                     capture_seed(spec.seed, material.name, yaw, rep));
        samples.push_back(std::move(s));
      }
    }
  }
  return Dataset(std::move(samples), std::move(classes), spec.seed, sensor.amplitude_ceiling);
}

std::size_t flat_head_end(const ProtocolSpec& spec, const SensorModel& sensor) {
  double first = static_cast<double>(sensor.n_samples);
  for (const auto& m : spec.materials) {
    for (double yaw : spec.angles_deg) {
      for (double err : {-1.0, 0.0, 1.0}) {
        const double y = yaw + err * kYawJitterBound * sensor.yaw_jitter_deg;
        const auto g = pulse_geometry(m, sensor, std::clamp(y, -89.0, 89.0), spec.distance_m);
        first = std::min(first, g.centre - kLobeSupport * g.sigma);
      }
    }
  }
  // Samples strictly below the lobe support are untouched by any return.
  return static_cast<std::size_t>(std::max(0.0, std::ceil(first)));
}

// --- configuration -------------------------------------------------------------

SensorModel sensor_from_config(const KeyValueConfig& config) {
  SensorModel s;
  s.pulse_width = config.get_double("sensor.pulse_width");
  s.samples_per_metre = config.get_double("sensor.samples_per_metre");
  s.amplitude_ceiling = config.get_double("sensor.amplitude_ceiling");
  s.noise_std = config.get_double("sensor.noise_std");
  s.baseline = config.get_double("sensor.baseline");
  s.gain_jitter = config.get_double_or("sensor.gain_jitter", 0.0);
  s.yaw_jitter_deg = config.get_double_or("sensor.yaw_jitter_deg", 0.0);
  if (config.contains("sensor.adc_levels")) s.adc_levels = static_cast<int>(config.get_int("sensor.adc_levels"));
  s.validate();
  return s;
}

namespace {

MaterialProfile profile_from_config(const KeyValueConfig& config, const std::string& name) {
  const std::string p = "material." + name + ".";
  MaterialProfile m;
  m.name = name;
  m.reflectivity = config.get_double(p + "reflectivity");
  m.tail_gain = config.get_double(p + "tail_gain");
  m.tail_decay = config.get_double(p + "tail_decay");
  m.width_scale = config.get_double(p + "width_scale");
  m.colour_scale = config.get_double_or(p + "colour_scale", 1.0);
  m.specular_exponent = config.get_double_or(p + "specular_exponent", 1.0);
  return m;
}

}  // namespace

std::vector<MaterialProfile> material_bank_from_config(const KeyValueConfig& config) {
  std::vector<MaterialProfile> bank;
  for (const auto& name : config.get_list("materials")) bank.push_back(profile_from_config(config, name));

  if (config.contains("cardboard_colours")) {
    const MaterialProfile base = profile_from_config(config, "black_cardboard");
    for (const auto& colour : config.get_list("cardboard_colours")) {
      MaterialProfile variant = base;
      variant.name = "cardboard_" + colour;
      variant.colour_scale = config.get_double("cardboard_colour." + colour);
      bank.push_back(std::move(variant));
    }
  }
  for (const auto& m : bank) m.validate();
  return bank;
}

ProtocolSpec protocol_from_config(const KeyValueConfig& config) {
  ProtocolSpec spec;
  spec.materials = material_bank_from_config(config);
  spec.angles_deg.assign(protocol_angles().begin(), protocol_angles().end());
  spec.distance_m = config.get_double("protocol.distance_m");
  spec.repetitions = static_cast<int>(config.get_int("protocol.repetitions"));
  spec.seed = config.get_u64("protocol.seed");
  return spec;
}

SensorModel default_sensor() { return sensor_from_config(builtin_config()); }

std::vector<MaterialProfile> default_material_bank() { return material_bank_from_config(builtin_config()); }

MaterialSet parse_material_set(std::string_view text) {
  if (text == "pair") return MaterialSet::Pair;
  if (text == "all-materials") return MaterialSet::AllMaterials;
  if (text == "colours" || text == "colors") return MaterialSet::Colours;
  throw UsageError("unknown material set '" + std::string(text) + "' (expected pair, all-materials, colours)");
}

AngleMode parse_angle_mode(std::string_view text) {
  if (text == "zero") return AngleMode::Zero;
  if (text == "all") return AngleMode::All;
  throw UsageError("unknown angle mode '" + std::string(text) + "' (expected zero, all)");
}

std::string_view to_string(MaterialSet set) {
  switch (set) {
    case MaterialSet::Pair:
      return "pair";
    case MaterialSet::AllMaterials:
      return "all-materials";
    case MaterialSet::Colours:
      return "colours";
  }
  return "pair";
}

std::string_view to_string(AngleMode mode) { return mode == AngleMode::Zero ? "zero" : "all"; }

std::vector<std::string> material_set_names(MaterialSet set, const KeyValueConfig& config) {
  switch (set) {
    case MaterialSet::Pair:
      return {"aluminum", "black_cloth"};
    case MaterialSet::AllMaterials:
      return config.get_list("materials");
    case MaterialSet::Colours: {
      std::vector<std::string> names;
      for (const auto& c : config.get_list("cardboard_colours")) names.push_back("cardboard_" + c);
      return names;
    }
  }
  return {};
}

std::vector<double> angle_list(AngleMode mode) {
  if (mode == AngleMode::Zero) return {0.0};
  return {protocol_angles().begin(), protocol_angles().end()};
}

std::vector<MaterialProfile> select_materials(std::span<const MaterialProfile> bank,
                                              std::span<const std::string> names) {
  std::vector<MaterialProfile> out;
  for (const auto& name : names) {
    const auto it = std::find_if(bank.begin(), bank.end(), [&](const auto& m) { return m.name == name; });
    if (it == bank.end()) throw UsageError("material '" + name + "' is not in the material bank");
    out.push_back(*it);
  }
  return out;
}

// --- board labelling -------------------------------------------------------------

std::vector<MaterialClass> label_board_points(std::span<const BoardPoint> points, const Point3& board_centre,
                                              const Point3& half_extent, const MaterialClass& material) {
  if (!(half_extent.x > 0.0 && half_extent.y > 0.0 && half_extent.z > 0.0)) {
    throw UsageError("board extents must be positive");
  }
  std::vector<MaterialClass> labels;
  labels.reserve(points.size());
  for (const auto& p : points) {
    const bool inside = std::abs(p.position.x - board_centre.x) <= half_extent.x &&
                        std::abs(p.position.y - board_centre.y) <= half_extent.y &&
                        std::abs(p.position.z - board_centre.z) <= half_extent.z;
    labels.push_back(inside ? material : MaterialClass::unknown());
  }
  return labels;
}

}  // namespace wavemat
