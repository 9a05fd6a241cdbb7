#include "wavemat/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>

#include "wavemat/config.hpp"
#include "wavemat/error.hpp"
#include "wavemat/eval.hpp"
#include "wavemat/parallel.hpp"

namespace wavemat {

namespace fs = std::filesystem;

namespace {

// Everything a subcommand needs, collected from flags before anything runs.
struct RunConfig {
  std::string subcommand;
  bool ci = false;
  std::optional<fs::path> config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;

  std::optional<fs::path> data;
  std::optional<fs::path> model_file;
  std::optional<fs::path> out;

  std::optional<std::string> preset;
  std::vector<std::string> angles;
  std::optional<int> repetitions;
  std::optional<std::string> model;
  std::optional<int> iterations;
  std::vector<int> test_reps;
  std::string split = "test";
  std::optional<std::string> grid;
  std::vector<std::string> experiments;
  std::vector<std::string> models;
  std::optional<std::size_t> jobs;
  bool waveforms = false;

  KeyValueConfig config;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f.flush()) throw DataError("failed writing " + path.string());
}

fs::path resolve_input(const fs::path& p, std::string_view what) {
  const fs::path abs = fs::absolute(p).lexically_normal();
  if (!fs::is_regular_file(abs)) throw DataError(std::string(what) + " not found: " + abs.string());
  return abs;
}

fs::path resolve_output_dir(const fs::path& p) {
  const fs::path abs = fs::absolute(p).lexically_normal();
  if (fs::exists(abs) && !fs::is_directory(abs)) throw UsageError("--out is not a directory: " + abs.string());
  return abs;
}

std::set<int> test_rep_set(const RunConfig& run) {
  if (!run.test_reps.empty()) return {run.test_reps.begin(), run.test_reps.end()};
  const auto reps = run.config.get_int_list("experiment.test_reps");
  return {reps.begin(), reps.end()};
}

// Builtin defaults < --config file < --set < dedicated flags.
void build_config(RunConfig& run) {
  KeyValueConfig config = builtin_config();
  if (run.config_path) config.merge(KeyValueConfig::load(*run.config_path));
  for (const auto& kv : run.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (run.seed) {
    const std::string s = std::to_string(*run.seed);
    config.set("protocol.seed", s);
    config.set("forest.seed", s);
    config.set("tcn.seed", s);
  }
  if (run.repetitions) config.set("protocol.repetitions", std::to_string(*run.repetitions));
  if (run.iterations) config.set("tcn.iterations", std::to_string(*run.iterations));
  if (!run.test_reps.empty()) {
    std::string reps;
    for (int r : run.test_reps) reps += (reps.empty() ? "" : ",") + std::to_string(r);
    config.set("experiment.test_reps", reps);
  }
  run.config = std::move(config);
}

void validate(RunConfig& run) {
  if (run.ci && !run.seed) throw UsageError("--seed is required in CI mode");
  if (run.config_path) run.config_path = resolve_input(*run.config_path, "config file");
  if (run.data) run.data = resolve_input(*run.data, "dataset");
  if (run.model_file) run.model_file = resolve_input(*run.model_file, "model file");

  const std::string& cmd = run.subcommand;
  if (cmd == "generate") {
    if (!run.out) throw UsageError("generate needs --out");
    if (run.angles.size() > 1) throw UsageError("generate takes a single --angles value");
    run.out = fs::absolute(*run.out).lexically_normal();
    if (fs::is_directory(*run.out)) throw UsageError("--out names a directory: " + run.out->string());
  } else if (cmd == "train") {
    if (!run.data) throw UsageError("train needs --data");
    if (!run.model) throw UsageError("train needs --model");
    if (run.iterations && *run.model != "tcn") throw UsageError("--iterations applies only to --model tcn");
    if (!run.out) throw UsageError("train needs --out");
  } else if (cmd == "evaluate") {
    if (!run.data) throw UsageError("evaluate needs --data");
    if (!run.model_file) throw UsageError("evaluate needs --model-file");
    if (!run.out) throw UsageError("evaluate needs --out");
    if (run.split == "all" && !run.test_reps.empty()) throw UsageError("--test-reps conflicts with --split all");
  } else if (cmd == "experiment") {
    if (run.grid && (!run.experiments.empty() || !run.angles.empty() || !run.models.empty())) {
      throw UsageError("--grid conflicts with --experiments, --angles and --models");
    }
    if (!run.out) throw UsageError("experiment needs --out");
  } else if (cmd == "importance") {
    if (run.data && (run.preset || !run.angles.empty())) {
      throw UsageError("--data conflicts with --preset and --angles");
    }
    if (run.angles.size() > 1) throw UsageError("importance takes a single --angles value");
    if (!run.out) throw UsageError("importance needs --out");
  }
  if (run.out && cmd != "generate") run.out = resolve_output_dir(*run.out);
  build_config(run);
}

Dataset preset_dataset(const KeyValueConfig& config, MaterialSet set, AngleMode angles) {
  ProtocolSpec protocol = protocol_from_config(config);
  protocol.materials = select_materials(material_bank_from_config(config), material_set_names(set, config));
  protocol.angles_deg = angle_list(angles);
  return generate_dataset(protocol, sensor_from_config(config));
}

Model load_model(const fs::path& path) {
  std::ifstream f(path);
  std::string magic;
  f >> magic;
  if (magic == "wavemat-forest") return load_forest(path);
  if (magic == "wavemat-tcn") return load_tcn(path);
  throw DataError("not a model checkpoint: " + path.string());
}

std::string iou_table(const IouReport& report, const ConfusionCounts& counts, const std::vector<MaterialClass>& classes) {
  std::string out = "class,tp,fp,fn,iou\n";
  for (std::size_t k = 0; k < classes.size(); ++k) {
    out += classes[k].name + "," + std::to_string(counts.tp[k]) + "," + std::to_string(counts.fp[k]) + "," +
           std::to_string(counts.fn[k]) + "," +
           (report.per_class_iou[k] ? format_double(*report.per_class_iou[k]) : std::string()) + "\n";
  }
  return out;
}

int cmd_generate(const RunConfig& run, std::ostream& out) {
  const auto set = parse_material_set(run.preset.value_or("all-materials"));
  const auto angles = parse_angle_mode(run.angles.empty() ? "all" : run.angles.front());
  const Dataset data = preset_dataset(run.config, set, angles);
  write_dataset(data, *run.out);
  out << "wrote " << data.size() << " samples to " << run.out->string() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& run, std::ostream& out) {
  const ModelKind kind = parse_model_kind(*run.model);
  const Dataset data = read_dataset(*run.data);
  const auto [train, test] = split_by_repetition(data, test_rep_set(run));
  fs::create_directories(*run.out);

  Model model;
  if (kind == ModelKind::RandomForest) {
    ForestParams params = forest_params_from_config(run.config);
    params.jobs = run.jobs.value_or(default_jobs());
    Forest forest = train_forest(train, params);
    std::string log = "tree,internal_nodes,depth\n";
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
      log += std::to_string(t) + "," + std::to_string(forest.trees[t].internal_node_count()) + "," +
             std::to_string(forest.trees[t].depth()) + "\n";
    }
    write_text(*run.out / "forest_log.csv", log);
    save_forest(forest, *run.out / "model.forest");
    model = std::move(forest);
  } else {
    std::string log;
    TcnModel tcn = train_tcn(train, tcn_params_from_config(run.config), [&](int it, double loss) {
      log += std::to_string(it) + "," + format_double(loss) + "\n";
    });
    write_text(*run.out / "loss_log.csv", log);
    save_tcn(tcn, *run.out / "model.tcn");
    model = std::move(tcn);
  }
  write_text(*run.out / "config.cfg", run.config.render());

  const double train_miou = evaluate_model(model, train).miou;
  const double test_miou = evaluate_model(model, test).miou;
  write_text(*run.out / "metrics.csv",
             "split,miou\ntrain," + format_double(train_miou) + "\ntest," + format_double(test_miou) + "\n");
  out << "train mIOU " << format_double(train_miou) << "\n";
  out << "test mIOU " << format_double(test_miou) << "\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& run, std::ostream& out) {
  const Model model = load_model(*run.model_file);
  const Dataset data = read_dataset(*run.data);
  Dataset subset;
  if (run.split == "all") {
    subset = data;
  } else {
    auto [train, test] = split_by_repetition(data, test_rep_set(run));
    subset = run.split == "train" ? std::move(train) : std::move(test);
  }
  const auto counts = confusion(predict_all(model, subset), subset.labels(), subset.class_count());
  const IouReport report = iou_report(counts);
  fs::create_directories(*run.out);
  write_text(*run.out / "per_class.csv", iou_table(report, counts, subset.classes()));
  write_text(*run.out / "summary.csv", "split,miou\n" + run.split + "," + format_double(report.miou) + "\n");
  out << run.split << " mIOU " << format_double(report.miou) << "\n";
  return kExitOk;
}

template <typename T, typename Parse>
std::vector<T> parse_all(const std::vector<std::string>& texts, std::vector<T> all, Parse parse) {
  if (texts.empty()) return all;
  std::vector<T> out;
  for (const auto& t : texts) out.push_back(parse(t));
  return out;
}

int cmd_experiment(RunConfig& run, std::ostream& out, std::ostream& err) {
  const auto sets = parse_all<MaterialSet>(run.experiments,
                                           {MaterialSet::Pair, MaterialSet::AllMaterials, MaterialSet::Colours},
                                           parse_material_set);
  const auto angles = parse_all<AngleMode>(run.angles, {AngleMode::Zero, AngleMode::All}, parse_angle_mode);
  const auto models = parse_all<ModelKind>(run.models, {ModelKind::RandomForest, ModelKind::Tcn}, parse_model_kind);

  std::vector<ExperimentSpec> cells;
  std::string names[3];
  for (auto s : sets) names[0] += (names[0].empty() ? "" : ",") + std::string(to_string(s));
  for (auto a : angles) names[1] += (names[1].empty() ? "" : ",") + std::string(to_string(a));
  for (auto m : models) names[2] += (names[2].empty() ? "" : ",") + std::string(to_string(m));
  for (auto s : sets) {
    for (auto a : angles) {
      for (auto m : models) cells.push_back(make_experiment(s, a, m, run.config));
    }
  }

  KeyValueConfig echo = run.config;
  echo.set("grid.experiments", names[0]);
  echo.set("grid.angles", names[1]);
  echo.set("grid.models", names[2]);
  const fs::path dir = *run.out / ("run-" + echo.hash_hex());

  const std::size_t jobs = std::min(run.jobs.value_or(default_jobs()), cells.size());
  // Forest training threads share the budget left over by the grid fan-out.
  for (auto& c : cells) c.forest.jobs = std::max<std::size_t>(1, run.jobs.value_or(default_jobs()) / jobs);
  std::vector<std::optional<ExperimentResult>> slots(cells.size());
  std::mutex log_mutex;
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    slots[i] = run_experiment(cells[i]);
    const std::lock_guard lock(log_mutex);
    const auto& r = slots[i]->row;
    err << "done " << r.experiment << "/" << r.angles << "/" << r.model << "\n";
  });

  std::vector<ExperimentResult> results;
  std::vector<ResultRow> rows;
  for (auto& s : slots) {
    rows.push_back(s->row);
    results.push_back(std::move(*s));
  }
  const std::string table = results_csv(rows);
  write_text(dir / "results.csv", table);
  write_text(dir / "per_class.csv", per_class_csv(results));
  write_text(dir / "config.cfg", echo.render());
  out << table << "wrote " << dir.string() << "\n";
  return kExitOk;
}

int cmd_importance(const RunConfig& run, std::ostream& out) {
  Dataset data;
  if (run.data) {
    data = read_dataset(*run.data);
  } else {
    const auto set = parse_material_set(run.preset.value_or("all-materials"));
    const auto angles = parse_angle_mode(run.angles.empty() ? "all" : run.angles.front());
    data = preset_dataset(run.config, set, angles);
  }
  Forest forest;
  if (run.model_file) {
    forest = load_forest(*run.model_file);
  } else {
    ForestParams params = forest_params_from_config(run.config);
    params.jobs = run.jobs.value_or(default_jobs());
    forest = train_forest(split_by_repetition(data, test_rep_set(run)).first, params);
  }
  const auto rows = importance_report(forest);
  fs::create_directories(*run.out);
  write_text(*run.out / "importance.csv", importance_csv(rows));
  if (run.waveforms) write_text(*run.out / "averaged_waveforms.csv", averaged_waveforms_csv(data));
  write_text(*run.out / "config.cfg", run.config.render());
  const auto top = std::max_element(rows.begin(), rows.end(),
                                     [](const auto& a, const auto& b) { return a.importance < b.importance; });
  out << "top feature " << top->index << " importance " << format_double(top->importance) << "\n";
  out << "wrote " << (*run.out / "importance.csv").string() << "\n";
  return kExitOk;
}

int dispatch(RunConfig& run, std::ostream& out, std::ostream& err) {
  validate(run);
  if (run.subcommand == "generate") return cmd_generate(run, out);
  if (run.subcommand == "train") return cmd_train(run, out);
  if (run.subcommand == "evaluate") return cmd_evaluate(run, out);
  if (run.subcommand == "experiment") return cmd_experiment(run, out, err);
  return cmd_importance(run, out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig run;
  CLI::App app{"Material classification from simulated low-power lidar return waveforms"};
  app.name("wavemat");
  app.require_subcommand(1);

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", run.config_path, "key=value config file merged over the defaults");
    sub->add_option("--seed", run.seed, "seed for data generation and model training");
    sub->add_option("--set", run.overrides, "override one config entry, key=value");
    sub->add_flag("--ci", run.ci, "CI mode: --seed becomes mandatory");
  };
  const auto add_preset = [&](CLI::App* sub) {
    sub->add_option("--preset", run.preset, "pair, all-materials or colours")
        ->check(CLI::IsMember({"pair", "all-materials", "colours"}));
  };

  auto* generate = app.add_subcommand("generate", "simulate a dataset and write CSV + .meta");
  add_common(generate);
  add_preset(generate);
  generate->add_option("--angles", run.angles, "zero or all")->check(CLI::IsMember({"zero", "all"}));
  generate->add_option("--reps", run.repetitions, "repetitions per material and angle")->check(CLI::PositiveNumber);
  generate->add_option("--out", run.out, "dataset CSV path");

  auto* train = app.add_subcommand("train", "train on the train split and report mIOU");
  add_common(train);
  train->add_option("--data", run.data, "dataset CSV");
  train->add_option("--model", run.model, "rf or tcn")->check(CLI::IsMember({"rf", "tcn"}));
  train->add_option("--out", run.out, "output directory");
  train->add_option("--iterations", run.iterations, "TCN training iterations")->check(CLI::PositiveNumber);
  train->add_option("--test-reps", run.test_reps, "repetitions held out for testing")->delimiter(',');
  train->add_option("--jobs", run.jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "per-class IOU of a checkpoint on a dataset");
  add_common(evaluate);
  evaluate->add_option("--data", run.data, "dataset CSV");
  evaluate->add_option("--model-file", run.model_file, "model.forest or model.tcn");
  evaluate->add_option("--split", run.split, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
  evaluate->add_option("--test-reps", run.test_reps, "repetitions held out for testing")->delimiter(',');
  evaluate->add_option("--out", run.out, "output directory");

  auto* experiment = app.add_subcommand("experiment", "run a grid of experiment x angles x model");
  add_common(experiment);
  experiment->add_option("--grid", run.grid, "full")->check(CLI::IsMember({"full"}));
  experiment->add_option("--experiments", run.experiments, "subset of pair,all-materials,colours")
      ->delimiter(',')
      ->check(CLI::IsMember({"pair", "all-materials", "colours"}));
  experiment->add_option("--angles", run.angles, "subset of zero,all")
      ->delimiter(',')
      ->check(CLI::IsMember({"zero", "all"}));
  experiment->add_option("--models", run.models, "subset of rf,tcn")->delimiter(',')->check(CLI::IsMember({"rf", "tcn"}));
  experiment->add_option("--iterations", run.iterations, "TCN training iterations")->check(CLI::PositiveNumber);
  experiment->add_option("--jobs", run.jobs, "grid cells run in parallel")->check(CLI::PositiveNumber);
  experiment->add_option("--out", run.out, "base output directory");

  auto* importance = app.add_subcommand("importance", "random-forest feature importance per sample index");
  add_common(importance);
  importance->add_option("--data", run.data, "dataset CSV (default: simulate the preset)");
  add_preset(importance);
  importance->add_option("--angles", run.angles, "zero or all")->check(CLI::IsMember({"zero", "all"}));
  importance->add_option("--model-file", run.model_file, "use a trained model.forest");
  importance->add_flag("--waveforms", run.waveforms, "also write per-class averaged waveforms");
  importance->add_option("--jobs", run.jobs, "worker threads")->check(CLI::PositiveNumber);
  importance->add_option("--out", run.out, "output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  run.subcommand = app.get_subcommands().front()->get_name();
  if (const char* env = std::getenv("WAVEMAT_CI"); env != nullptr && *env != '\0' && std::string(env) != "0") {
    run.ci = true;
  }

  try {
    return dispatch(run, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace wavemat
