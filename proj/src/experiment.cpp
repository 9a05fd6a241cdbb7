#include <algorithm>
#include <cmath>

#include "wavemat/error.hpp"
#include "wavemat/eval.hpp"

namespace wavemat {

// --- models --------------------------------------------------------------------

ModelKind parse_model_kind(std::string_view text) {
  if (text == "rf") return ModelKind::RandomForest;
  if (text == "tcn") return ModelKind::Tcn;
  throw UsageError("unknown model '" + std::string(text) + "' (expected rf, tcn)");
}

std::string_view to_string(ModelKind kind) { return kind == ModelKind::RandomForest ? "rf" : "tcn"; }

const std::vector<MaterialClass>& model_classes(const Model& model) {
  return std::visit([](const auto& m) -> const std::vector<MaterialClass>& { return m.classes; }, model);
}

std::vector<ClassId> predict_all(const Model& model, const Dataset& data) {
  if (model_classes(model) != data.classes()) {
    throw DataError("the model's class table does not match the dataset's");
  }
  if (const auto* forest = std::get_if<Forest>(&model)) {
    std::vector<ClassId> out;
    out.reserve(data.size());
    for (const auto& s : data.samples()) out.push_back(predict_forest_id(*forest, s.waveform.samples()));
    return out;
  }
  const auto& tcn = std::get<TcnModel>(model);
  std::vector<Sequence> xs;
  xs.reserve(data.size());
  for (const auto& s : data.samples()) xs.push_back(to_sequence(s.waveform));
  return predict_tcn_batch(tcn, xs);
}

IouReport evaluate_model(const Model& model, const Dataset& data) {
  const auto predictions = predict_all(model, data);
  return iou_report(confusion(predictions, data.labels(), data.class_count()));
}

ForestParams forest_params_from_config(const KeyValueConfig& config) {
  ForestParams p;
  p.n_trees = static_cast<int>(config.get_int("forest.n_trees"));
  p.max_depth = static_cast<int>(config.get_int("forest.max_depth"));
  p.features_per_node = static_cast<int>(config.get_int("forest.features_per_node"));
  p.min_samples_leaf = static_cast<int>(config.get_int("forest.min_samples_leaf"));
  p.bootstrap = config.get_bool("forest.bootstrap");
  p.seed = config.get_u64("forest.seed");
  p.validate();
  return p;
}

TcnParams tcn_params_from_config(const KeyValueConfig& config) {
  TcnParams p;
  p.kernel_size = static_cast<int>(config.get_int("tcn.kernel_size"));
  p.dropout = config.get_double("tcn.dropout");
  p.channel_sizes = config.get_int_list("tcn.channel_sizes");
  p.batch_size = static_cast<int>(config.get_int("tcn.batch_size"));
  p.iterations = static_cast<int>(config.get_int("tcn.iterations"));
  p.learning_rate = config.get_double("tcn.learning_rate");
  p.adam_beta1 = config.get_double("tcn.adam_beta1");
  p.adam_beta2 = config.get_double("tcn.adam_beta2");
  p.adam_eps = config.get_double("tcn.adam_eps");
  p.readout = parse_readout(config.get_string("tcn.readout"));
  p.layout = parse_layout(config.get_string("tcn.layout"));
  p.seed = config.get_u64("tcn.seed");
  p.validate();
  return p;
}

// --- experiments -----------------------------------------------------------------

ExperimentSpec make_experiment(MaterialSet set, AngleMode angles, ModelKind model, const KeyValueConfig& config) {
  ExperimentSpec spec;
  spec.set = set;
  spec.angles = angles;
  spec.model = model;
  const auto bank = material_bank_from_config(config);
  const auto names = material_set_names(set, config);
  spec.materials = select_materials(bank, names);
  spec.sensor = sensor_from_config(config);
  spec.distance_m = config.get_double("protocol.distance_m");
  spec.repetitions = static_cast<int>(config.get_int("protocol.repetitions"));
  spec.data_seed = config.get_u64("protocol.seed");
  const auto reps = config.get_int_list("experiment.test_reps");
  spec.test_reps = {reps.begin(), reps.end()};
  spec.forest = forest_params_from_config(config);
  spec.tcn = tcn_params_from_config(config);
  return spec;
}

Dataset experiment_dataset(const ExperimentSpec& spec) {
  ProtocolSpec protocol;
  protocol.materials = spec.materials;
  protocol.angles_deg = angle_list(spec.angles);
  protocol.distance_m = spec.distance_m;
  protocol.repetitions = spec.repetitions;
  protocol.seed = spec.data_seed;
  return generate_dataset(protocol, spec.sensor);
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  const Dataset data = experiment_dataset(spec);
  auto [train, test] = split_by_repetition(data, spec.test_reps);
  Model model = spec.model == ModelKind::RandomForest ? Model{train_forest(train, spec.forest)}
                                                      : Model{train_tcn(train, spec.tcn)};
  ExperimentResult result{.row = {},
                          .report = evaluate_model(model, test),
                          .classes = data.classes(),
                          .model = std::move(model)};
  result.row = {std::string(to_string(spec.set)), std::string(to_string(spec.model)),
                std::string(to_string(spec.angles)), result.report.miou};
  return result;
}

std::string results_csv(std::span<const ResultRow> rows) {
  std::string out = "experiment,model,angles,miou\n";
  for (const auto& r : rows) {
    out += r.experiment + "," + r.model + "," + r.angles + "," + format_double(r.miou) + "\n";
  }
  return out;
}

std::string per_class_csv(std::span<const ExperimentResult> results) {
  std::string out = "experiment,model,angles,class,iou\n";
  for (const auto& r : results) {
    for (std::size_t k = 0; k < r.classes.size(); ++k) {
      const auto& iou = r.report.per_class_iou[k];
      out += r.row.experiment + "," + r.row.model + "," + r.row.angles + "," + r.classes[k].name + "," +
             (iou ? format_double(*iou) : std::string()) + "\n";
    }
  }
  return out;
}

// --- feature importance ------------------------------------------------------------

std::vector<ImportanceRow> importance_report(const Forest& forest) {
  const auto importance = feature_importance(forest);
  std::vector<ImportanceRow> rows;
  rows.reserve(importance.size());
  for (std::size_t i = 0; i < importance.size(); ++i) rows.push_back({i, importance[i]});
  return rows;
}

std::string importance_csv(std::span<const ImportanceRow> rows) {
  std::string out = "index,importance\n";
  for (const auto& r : rows) out += std::to_string(r.index) + "," + format_double(r.importance) + "\n";
  return out;
}

std::string averaged_waveforms_csv(const Dataset& data) {
  const std::size_t k = data.class_count();
  std::vector<std::vector<double>> sums(k, std::vector<double>(kWaveformLength, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (const auto& s : data.samples()) {
    auto& acc = sums[static_cast<std::size_t>(s.label)];
    for (std::size_t i = 0; i < kWaveformLength; ++i) acc[i] += s.waveform[i];
    ++counts[static_cast<std::size_t>(s.label)];
  }
  std::string out = "index";
  for (const auto& c : data.classes()) out += "," + c.name;
  out += "\n";
  for (std::size_t i = 0; i < kWaveformLength; ++i) {
    out += std::to_string(i);
    for (std::size_t c = 0; c < k; ++c) {
      out += ",";
      if (counts[c] > 0) out += format_double(sums[c][i] / static_cast<double>(counts[c]));
    }
    out += "\n";
  }
  return out;
}

}  // namespace wavemat
