#include "wavemat/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "wavemat/error.hpp"

namespace wavemat {

namespace {

constexpr std::array<double, 9> kProtocolAngles = {-60.0, -45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0, 60.0};
constexpr std::size_t kFixedColumns = 7;

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename Int>
Int parse_int(std::string_view text) {
  Int value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DataError("not an integer: '" + std::string(text) + "'");
  }
  return value;
}

std::string sample_column(std::size_t i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "s%03zu", i);
  return buf;
}

}  // namespace

// --- Waveform ---------------------------------------------------------------

Waveform::Waveform(std::span<const double> samples) {
  if (samples.size() != kWaveformLength) {
    throw DataError("waveform must have " + std::to_string(kWaveformLength) + " samples, got " +
                    std::to_string(samples.size()));
  }
  for (std::size_t i = 0; i < kWaveformLength; ++i) {
    const double v = samples[i];
    if (!std::isfinite(v)) throw DataError("waveform sample " + std::to_string(i) + " is not finite");
    if (v < 0.0) throw DataError("waveform sample " + std::to_string(i) + " is negative");
    samples_[i] = v;
  }
}

double Waveform::max() const noexcept { return *std::max_element(samples_.begin(), samples_.end()); }

std::string_view to_string(PowerMode mode) {
  switch (mode) {
    case PowerMode::Low:
      return "LOW";
  }
  return "LOW";
}

std::span<const double> protocol_angles() { return kProtocolAngles; }

bool is_protocol_angle(double yaw_deg) {
  return std::find(kProtocolAngles.begin(), kProtocolAngles.end(), yaw_deg) != kProtocolAngles.end();
}

// --- Dataset ----------------------------------------------------------------

Dataset::Dataset(std::vector<LabeledSample> samples, std::vector<MaterialClass> classes, std::uint64_t seed,
                 double amplitude_ceiling)
    : samples_(std::move(samples)), classes_(std::move(classes)), seed_(seed), amplitude_ceiling_(amplitude_ceiling) {
  if (!(amplitude_ceiling_ > 0.0) || !std::isfinite(amplitude_ceiling_)) {
    throw DataError("amplitude ceiling must be positive and finite");
  }
  std::unordered_set<std::string> names;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].id != static_cast<ClassId>(i)) {
      throw DataError("class table ids must be dense 0..K-1; entry " + std::to_string(i) + " has id " +
                      std::to_string(classes_[i].id));
    }
    if (classes_[i].name.empty()) throw DataError("class " + std::to_string(i) + " has an empty name");
    if (!names.insert(classes_[i].name).second) throw DataError("duplicate class name '" + classes_[i].name + "'");
  }
  std::unordered_set<std::uint64_t> ids;
  for (const auto& s : samples_) {
    const std::string where = "sample " + std::to_string(s.sample_id);
    if (s.label < 0 || s.label >= static_cast<ClassId>(classes_.size())) {
      throw DataError(where + ": label id " + std::to_string(s.label) + " outside class table of size " +
                      std::to_string(classes_.size()));
    }
    if (!ids.insert(s.sample_id).second) throw DataError(where + ": duplicate sample id");
    if (!(s.meta.distance_m > 0.0) || !std::isfinite(s.meta.distance_m)) {
      throw DataError(where + ": distance must be positive");
    }
    if (!std::isfinite(s.meta.yaw_deg) || std::abs(s.meta.yaw_deg) >= 90.0) {
      throw DataError(where + ": yaw must lie in (-90, 90) degrees");
    }
    if (s.meta.repetition < 1) throw DataError(where + ": repetition must be >= 1");
    if (s.waveform.max() > amplitude_ceiling_) {
      throw DataError(where + ": amplitude exceeds the saturation ceiling");
    }
  }
}

std::vector<ClassId> Dataset::labels() const {
  std::vector<ClassId> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.label);
  return out;
}

std::size_t Dataset::distinct_label_count() const {
  std::set<ClassId> seen;
  for (const auto& s : samples_) seen.insert(s.label);
  return seen.size();
}

// --- number formatting --------------------------------------------------------

std::string format_double(double value) {
  if (!std::isfinite(value)) throw DataError("cannot serialize non-finite value");
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw DataError("number formatting failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw DataError("not a number: '" + std::string(text) + "'");
  }
  if (!std::isfinite(value)) throw DataError("non-finite number: '" + std::string(text) + "'");
  return value;
}

// --- files --------------------------------------------------------------------

std::filesystem::path meta_path_for(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".meta");
  return p;
}

std::string dataset_csv_header() {
  std::string header = "sample_id,label_id,label_name,yaw_deg,distance_m,repetition,power_mode";
  for (std::size_t i = 0; i < kWaveformLength; ++i) header += "," + sample_column(i);
  return header;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  // Format everything first so a failure never leaves a partial file.
  std::string csv = dataset_csv_header() + "\n";
  for (const auto& s : dataset.samples()) {
    csv += std::to_string(s.sample_id);
    csv += ',' + std::to_string(s.label);
    csv += ',' + dataset.classes()[static_cast<std::size_t>(s.label)].name;
    csv += ',' + format_double(s.meta.yaw_deg);
    csv += ',' + format_double(s.meta.distance_m);
    csv += ',' + std::to_string(s.meta.repetition);
    csv += ',';
    csv += to_string(s.meta.power_mode);
    for (double v : s.waveform.samples()) {
      csv += ',';
      csv += format_double(v);
    }
    csv += '\n';
  }
  std::string meta = "seed=" + std::to_string(dataset.seed()) + "\n";
  meta += "amplitude_ceiling=" + format_double(dataset.amplitude_ceiling()) + "\n";
  for (const auto& c : dataset.classes()) meta += "class." + std::to_string(c.id) + "=" + c.name + "\n";

  const auto write_file = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + p.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw DataError("write failed for '" + p.string() + "'");
  };
  write_file(path, csv);
  write_file(meta_path_for(path), meta);
}

namespace {

struct MetaFile {
  std::uint64_t seed = 0;
  double amplitude_ceiling = 1.0;
  std::vector<MaterialClass> classes;
};

MetaFile read_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset sidecar '" + path.string() + "'");
  MetaFile meta;
  std::map<int, std::string> classes;
  bool have_seed = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string_view key = std::string_view(line).substr(0, eq);
    const std::string_view value = std::string_view(line).substr(eq + 1);
    if (key == "seed") {
      meta.seed = parse_int<std::uint64_t>(value);
      have_seed = true;
    } else if (key == "amplitude_ceiling") {
      meta.amplitude_ceiling = parse_double(value);
    } else if (key.starts_with("class.")) {
      const int id = parse_int<int>(key.substr(6));
      if (!classes.emplace(id, std::string(value)).second) {
        throw DataError(path.string() + ": duplicate class id " + std::to_string(id));
      }
    } else {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_seed) throw DataError(path.string() + ": missing seed");
  for (const auto& [id, name] : classes) meta.classes.push_back({id, name});
  return meta;
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& path, const ReadOptions& options) {
  const MetaFile meta = read_meta(meta_path_for(path));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line) || line != dataset_csv_header()) {
    throw DataError(path.string() + ": row 1: header does not match the dataset schema");
  }
  const std::size_t expected_fields = kFixedColumns + kWaveformLength;
  std::vector<LabeledSample> samples;
  std::size_t row = 1;
  std::array<double, kWaveformLength> buf{};
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::string where = path.string() + ": row " + std::to_string(row);
    try {
      const auto fields = split_fields(line, ',');
      if (fields.size() != expected_fields) {
        throw DataError("expected " + std::to_string(expected_fields) + " columns, got " +
                        std::to_string(fields.size()));
      }
      LabeledSample s;
      s.sample_id = parse_int<std::uint64_t>(fields[0]);
      s.label = parse_int<int>(fields[1]);
      if (s.label < 0 || s.label >= static_cast<int>(meta.classes.size())) {
        throw DataError("label id " + std::to_string(s.label) + " outside class table of size " +
                        std::to_string(meta.classes.size()));
      }
      if (fields[2] != meta.classes[static_cast<std::size_t>(s.label)].name) {
        throw DataError("label name '" + std::string(fields[2]) + "' does not match class table");
      }
      s.meta.yaw_deg = parse_double(fields[3]);
      s.meta.distance_m = parse_double(fields[4]);
      s.meta.repetition = parse_int<int>(fields[5]);
      if (fields[6] != "LOW") throw DataError("unsupported power mode '" + std::string(fields[6]) + "'");
      if (options.strict_protocol) {
        if (!is_protocol_angle(s.meta.yaw_deg)) {
          throw DataError("yaw " + std::string(fields[3]) + " is not on the protocol grid");
        }
        if (s.meta.repetition < 1 || s.meta.repetition > 5) throw DataError("repetition outside 1..5");
      }
      for (std::size_t i = 0; i < kWaveformLength; ++i) buf[i] = parse_double(fields[kFixedColumns + i]);
      s.waveform = Waveform(buf);
      samples.push_back(std::move(s));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  try {
    return Dataset(std::move(samples), meta.classes, meta.seed, meta.amplitude_ceiling);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// --- splits -------------------------------------------------------------------

std::pair<Dataset, Dataset> split_by_repetition(const Dataset& dataset, const std::set<int>& test_reps) {
  if (test_reps.empty()) throw UsageError("test repetitions must not be empty");
  for (int r : test_reps) {
    if (r < 1 || r > 5) throw UsageError("test repetition " + std::to_string(r) + " outside 1..5");
  }
  std::set<int> present;
  for (const auto& s : dataset.samples()) present.insert(s.meta.repetition);
  if (std::includes(test_reps.begin(), test_reps.end(), present.begin(), present.end())) {
    throw UsageError("test repetitions cover every repetition in the dataset; the split is degenerate");
  }
  std::vector<LabeledSample> train, test;
  for (const auto& s : dataset.samples()) {
    (test_reps.contains(s.meta.repetition) ? test : train).push_back(s);
  }
  return {Dataset(std::move(train), dataset.classes(), dataset.seed(), dataset.amplitude_ceiling()),
          Dataset(std::move(test), dataset.classes(), dataset.seed(), dataset.amplitude_ceiling())};
}

}  // namespace wavemat
