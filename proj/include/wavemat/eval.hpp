#pragma once

// IOU metrics, the material-classification experiment grid, feature
// importance reports and the material-channel segmentation ablation.

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wavemat/config.hpp"
#include "wavemat/core.hpp"
#include "wavemat/forest.hpp"
#include "wavemat/simgen.hpp"
#include "wavemat/tcn.hpp"

namespace wavemat {

// --- metrics -------------------------------------------------------------------

struct ConfusionCounts {
  std::vector<std::uint64_t> tp, fp, fn;

  explicit ConfusionCounts(std::size_t n_classes = 0) : tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0) {}
  std::size_t class_count() const noexcept { return tp.size(); }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Multi-class counts over positions whose truth is not UNKNOWN. A prediction
/// of UNKNOWN counts as a miss for the true class.
ConfusionCounts confusion(std::span<const ClassId> predictions, std::span<const ClassId> truth, std::size_t n_classes);

struct IouReport {
  /// TP / (TP + FP + FN); empty for classes absent from both predictions and truth.
  std::vector<std::optional<double>> per_class_iou;
  /// Unweighted mean over the classes that have a value.
  double miou = 0.0;
};

/// Throws DataError when every class has TP + FP + FN = 0.
IouReport iou_report(const ConfusionCounts& counts);

// --- models --------------------------------------------------------------------

enum class ModelKind { RandomForest, Tcn };

ModelKind parse_model_kind(std::string_view text);
std::string_view to_string(ModelKind kind);

using Model = std::variant<Forest, TcnModel>;

const std::vector<MaterialClass>& model_classes(const Model& model);
std::vector<ClassId> predict_all(const Model& model, const Dataset& data);
IouReport evaluate_model(const Model& model, const Dataset& data);

ForestParams forest_params_from_config(const KeyValueConfig& config);
TcnParams tcn_params_from_config(const KeyValueConfig& config);

// --- experiments ---------------------------------------------------------------

struct ExperimentSpec {
  MaterialSet set = MaterialSet::Pair;
  AngleMode angles = AngleMode::Zero;
  ModelKind model = ModelKind::RandomForest;
  std::vector<MaterialProfile> materials;
  SensorModel sensor;
  double distance_m = 1.0;
  int repetitions = 5;
  std::uint64_t data_seed = 0;
  std::set<int> test_reps = {5};
  ForestParams forest;
  TcnParams tcn;
};

/// Builds the spec for one grid cell from configuration defaults.
ExperimentSpec make_experiment(MaterialSet set, AngleMode angles, ModelKind model, const KeyValueConfig& config);

struct ResultRow {
  std::string experiment;
  std::string model;
  std::string angles;
  double miou = 0.0;
};

struct ExperimentResult {
  ResultRow row;
  IouReport report;
  std::vector<MaterialClass> classes;
  Model model;
};

Dataset experiment_dataset(const ExperimentSpec& spec);
/// Generate, split by repetition, train, evaluate on the held-out repetitions.
ExperimentResult run_experiment(const ExperimentSpec& spec);

std::string results_csv(std::span<const ResultRow> rows);
/// `experiment,model,angles,class,iou` with an empty iou for excluded classes.
std::string per_class_csv(std::span<const ExperimentResult> results);

// --- feature importance --------------------------------------------------------

struct ImportanceRow {
  std::size_t index = 0;
  double importance = 0.0;
};

std::vector<ImportanceRow> importance_report(const Forest& forest);
std::string importance_csv(std::span<const ImportanceRow> rows);
/// Mean waveform of every class: `index,<class 0>,<class 1>,...`.
std::string averaged_waveforms_csv(const Dataset& data);

// --- semantic classes and the segmentation ablation -------------------------------

/// The 20 indoor semantic classes and the 8 materials they are assigned.
std::span<const std::string_view> semantic_class_names();
std::span<const std::string_view> semantic_material_names();
/// Case-insensitive lookup; throws UsageError for an unknown label.
MaterialClass map_semantic_to_material(std::string_view semantic_label);

struct SceneConfig {
  std::vector<std::string> classes = {"Wall", "Toilet", "Picture", "Floor", "Table", "Bed",
                                      "Counter", "Window", "Sofa", "Chair", "Door", "Sink"};
  std::size_t train_points_per_class = 60;
  std::size_t test_points_per_class = 60;
  /// Classes in one colour group share a colour distribution; each group
  /// holds classes with distinct materials.
  std::size_t colour_groups = 4;
  /// Std-dev of per-point colour noise (colour in [0,1]^3).
  double colour_noise = 0.06;
  /// When false, every class gets its own well-separated colour box and
  /// colour alone identifies the class.
  bool colour_ambiguous = true;
  ForestParams forest;
};

/// Test mIOU of a point-wise forest on a synthetic scene, using colour and,
/// when `with_material`, the per-point material one-hot as features.
double segmentation_ablation(std::uint64_t scene_seed, bool with_material, const SceneConfig& config = {});

struct AblationPair {
  double without_material = 0.0;
  double with_material = 0.0;
};
AblationPair segmentation_ablation_pair(std::uint64_t scene_seed, const SceneConfig& config = {});

}  // namespace wavemat
