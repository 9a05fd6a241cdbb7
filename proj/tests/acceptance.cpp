// Acceptance checks AC1-AC8. Prints one [PASS]/[FAIL] line per criterion and
// exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "support.hpp"
#include "wavemat/cli.hpp"
#include "wavemat/config.hpp"
#include "wavemat/eval.hpp"
#include "wavemat/parallel.hpp"
#include "wavemat/simgen.hpp"

using namespace wavemat;
using namespace wavemat::test;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int run_cli_quiet(std::vector<std::string> args) {
  std::ostringstream out, err;
  return run_cli(args, out, err);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(path));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream s(line);
    for (std::string cell; std::getline(s, cell, ',');) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

fs::path only_run_dir(const fs::path& base) {
  for (const auto& e : fs::directory_iterator(base)) return e.path();
  throw std::runtime_error("no run directory under " + base.string());
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

// --- AC1 -----------------------------------------------------------------------

Verdict ac1_gradients() {
  const auto start = Clock::now();
  std::mt19937_64 gen(1);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int kernel : {1, 2}) {
    TcnParams p;
    p.channel_sizes = {4, 4};
    p.kernel_size = kernel;
    p.dropout = 0.1;
    const TcnModel model = init_tcn(p, 3, 100 + static_cast<std::uint64_t>(kernel));
    const auto xs = random_batch(gen, 6, 8);
    const std::vector<ClassId> ys = {0, 1, 2, 2, 1, 0};
    const auto r = finite_difference_check(model, xs, ys, 7);
    worst = std::max(worst, r.worst_relative);
    checked += r.checked;
  }
  const double t = seconds_since(start);
  return {worst < 1e-4 && t < 10.0,
          std::to_string(checked) + " parameters, worst relative error " + fmt(worst, 3) + ", " + fmt(t, 3) + " s"};
}

// --- AC2 -----------------------------------------------------------------------

Verdict ac2_forest() {
  const auto start = Clock::now();
  std::mt19937_64 gen(2);
  int root_ok = 0, pred_ok = 0;
  constexpr int kDatasets = 20;
  for (int d = 0; d < kDatasets; ++d) {
    const std::size_t n = 10 + gen() % 41;
    const std::size_t k = 2 + gen() % 3;
    const auto active = random_active(gen, 1 + gen() % 8);
    const FeatureTable table = masked_table(gen, n, k, active);
    const auto classes = class_table(static_cast<int>(k));

    ForestParams stump;
    stump.n_trees = 1;
    stump.max_depth = 1;
    stump.bootstrap = false;
    stump.seed = gen();
    const Forest single = train_forest(table, classes, stump);
    const RootSplit expected = exhaustive_root_split(table, k);
    const TreeNode& root = single.trees.front().nodes.front();
    root_ok += expected.admits(root.feature, root.threshold);

    ForestParams full;
    full.n_trees = 25;
    full.seed = gen();
    const Forest forest = train_forest(table, classes, full);
    const FeatureTable queries = masked_table(gen, 30, k, active);
    bool all = true;
    for (std::size_t r = 0; r < queries.rows(); ++r) {
      all = all && predict_forest_id(forest, queries.row(r)) == oracle_predict(forest, queries.row(r)) &&
            vote_tally(forest, queries.row(r)) == oracle_tally(forest, queries.row(r));
    }
    pred_ok += all;
  }
  const double t = seconds_since(start);
  return {root_ok == kDatasets && pred_ok == kDatasets && t < 10.0,
          "root splits " + std::to_string(root_ok) + "/20, predictions " + std::to_string(pred_ok) + "/20, " +
              fmt(t, 3) + " s"};
}

// --- AC3 -----------------------------------------------------------------------

Verdict ac3_metrics() {
  std::mt19937_64 gen(3);
  int matched = 0, attempted = 0;
  double worst = 0.0;
  while (attempted < 100) {
    const std::size_t k = 2 + gen() % 6;
    const std::size_t n = 1 + gen() % 80;
    std::uniform_int_distribution<int> cls(-1, static_cast<int>(k) - 1);
    std::vector<ClassId> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = cls(gen);
      truth[i] = cls(gen);
    }
    const auto oracle = brute_force_iou(pred, truth, k);
    if (std::isnan(oracle.miou)) continue;
    ++attempted;
    const auto r = iou_report(confusion(pred, truth, k));
    bool same = std::abs(r.miou - oracle.miou) <= 1e-12;
    worst = std::max(worst, std::abs(r.miou - oracle.miou));
    for (std::size_t c = 0; c < k; ++c) {
      same = same && r.per_class_iou[c].has_value() == !std::isnan(oracle.per_class[c]);
      if (r.per_class_iou[c]) {
        same = same && std::abs(*r.per_class_iou[c] - oracle.per_class[c]) <= 1e-12;
        worst = std::max(worst, std::abs(*r.per_class_iou[c] - oracle.per_class[c]));
      }
    }
    matched += same;
  }
  const std::vector<ClassId> truth = {0, 1, 1, 0, 1};
  const std::vector<ClassId> swapped = {1, 0, 0, 1, 0};
  const double perfect = iou_report(confusion(truth, truth, 2)).miou;
  const double disjoint = iou_report(confusion(swapped, truth, 2)).miou;
  return {matched == 100 && perfect == 1.0 && disjoint == 0.0,
          std::to_string(matched) + "/100 pairs match (max |diff| " + fmt(worst, 3) + "), perfect " + fmt(perfect) +
              ", swapped " + fmt(disjoint)};
}

// --- AC4 -----------------------------------------------------------------------

Verdict ac4_trends(const fs::path& scratch) {
  const auto start = Clock::now();
  const fs::path base = scratch / "grid";
  const int code = run_cli_quiet({"experiment", "--grid", "full", "--out", base.string()});
  const double t = seconds_since(start);
  if (code != kExitOk) return {false, "experiment --grid full exited with " + std::to_string(code)};

  std::map<std::string, double> miou;
  const auto rows = read_csv(only_run_dir(base) / "results.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) miou[rows[i][0] + "/" + rows[i][1] + "/" + rows[i][2]] = parse_double(rows[i][3]);

  bool regime = true, angle = true, order = true;
  std::string table;
  for (const std::string model : {"rf", "tcn"}) {
    const auto at = [&](const std::string& set, const std::string& angles) { return miou.at(set + "/" + model + "/" + angles); };
    regime = regime && at("pair", "zero") >= 0.90;
    for (const std::string set : {"pair", "all-materials", "colours"}) {
      angle = angle && at(set, "zero") > at(set, "all");
      table += " " + model + "/" + set + " " + fmt(at(set, "zero"), 3) + "/" + fmt(at(set, "all"), 3) + ";";
    }
    for (const std::string angles : {"zero", "all"}) {
      order = order && at("pair", angles) >= at("all-materials", angles) &&
              at("all-materials", angles) >= at("colours", angles);
    }
  }
  const bool fast = t < 15.0 * 60.0;
  std::string detail = std::string("(a) ") + (regime ? "ok" : "no") + " (b) " + (angle ? "ok" : "no") + " (c) " +
                       (order ? "ok" : "no") + ", runtime " + fmt(t, 4) + " s on " +
                       std::to_string(default_jobs()) + " thread(s)" + (fast ? "" : " exceeds 900 s") + ";" + table;
  return {regime && angle && order && fast, detail};
}

// --- AC5 -----------------------------------------------------------------------

Verdict ac5_importance(const fs::path& scratch) {
  const fs::path out = scratch / "importance";
  const int code = run_cli_quiet({"importance", "--preset", "all-materials", "--angles", "all", "--out", out.string()});
  if (code != kExitOk) return {false, "importance exited with " + std::to_string(code)};
  std::vector<double> imp;
  const auto rows = read_csv(out / "importance.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) imp.push_back(parse_double(rows[i][1]));

  const auto& config = builtin_config();
  const auto spec = make_experiment(MaterialSet::AllMaterials, AngleMode::All, ModelKind::RandomForest, config);
  ProtocolSpec protocol;
  protocol.materials = spec.materials;
  protocol.angles_deg = angle_list(AngleMode::All);
  protocol.distance_m = spec.distance_m;
  const std::size_t head = flat_head_end(protocol, spec.sensor);

  // Main lobe: from the earliest onset to the latest centre + 3 sigma.
  double lobe_lo = kWaveformLength, lobe_hi = 0.0;
  for (const auto& m : protocol.materials) {
    for (double yaw : protocol.angles_deg) {
      const auto g = pulse_geometry(m, spec.sensor, yaw, protocol.distance_m);
      lobe_lo = std::min(lobe_lo, g.onset);
      lobe_hi = std::max(lobe_hi, g.centre + 3.0 * g.sigma);
    }
  }
  double sum = 0.0, head_mass = 0.0;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < imp.size(); ++i) {
    sum += imp[i];
    if (i < head) head_mass += imp[i];
    if (imp[i] > imp[arg]) arg = i;
  }
  const bool in_lobe = static_cast<double>(arg) >= lobe_lo && static_cast<double>(arg) <= lobe_hi;
  return {imp.size() == kWaveformLength && head_mass < 0.01 && in_lobe && std::abs(sum - 1.0) <= 1e-12,
          "head [0," + std::to_string(head) + ") mass " + fmt(head_mass, 3) + ", arg-max " + std::to_string(arg) +
              " in lobe [" + fmt(lobe_lo) + "," + fmt(lobe_hi) + "]: " + (in_lobe ? "yes" : "no") + ", sum-1 " +
              fmt(sum - 1.0, 3)};
}

// --- AC6 -----------------------------------------------------------------------

Verdict ac6_ablation() {
  int positive = 0;
  std::string gains;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto pair = segmentation_ablation_pair(seed);
    const double gain = pair.with_material - pair.without_material;
    positive += gain > 0.0;
    gains += (gains.empty() ? "" : " ") + fmt(gain, 3);
  }
  return {positive >= 9, std::to_string(positive) + "/10 seeds positive; gains " + gains};
}

// --- AC7 -----------------------------------------------------------------------

// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

Verdict ac7_determinism(const fs::path& scratch) {
  const auto invocations = [](const fs::path& root) -> std::vector<std::vector<std::string>> {
    const std::string d = (root / "data.csv").string();
    return {
        {"generate", "--preset", "all-materials", "--angles", "all", "--seed", "7", "--out", d},
        {"train", "--data", d, "--model", "rf", "--seed", "7", "--out", (root / "rf").string()},
        {"train", "--data", d, "--model", "tcn", "--iterations", "25", "--seed", "7", "--set",
         "tcn.channel_sizes=8,8,16", "--out", (root / "tcn").string()},
        {"evaluate", "--data", d, "--model-file", (root / "rf" / "model.forest").string(), "--out",
         (root / "eval-rf").string()},
        {"evaluate", "--data", d, "--model-file", (root / "tcn" / "model.tcn").string(), "--split", "all", "--out",
         (root / "eval-tcn").string()},
        {"experiment", "--experiments", "pair,colours", "--seed", "7", "--iterations", "20", "--set",
         "tcn.channel_sizes=8,8", "--out", (root / "exp").string()},
        {"importance", "--data", d, "--waveforms", "--seed", "7", "--out", (root / "imp").string()},
    };
  };
  std::vector<std::map<std::string, std::string>> runs;
  for (const std::string tag : {"first", "second"}) {
    // Same flags both times: the output root is the only difference and it
    // never appears inside the compared files.
    const fs::path root = scratch / "determinism" / "run";
    fs::remove_all(root);
    fs::create_directories(root);
    for (auto& args : invocations(root)) {
      const int code = run_cli_quiet(args);
      if (code != kExitOk) return {false, args.front() + " exited with " + std::to_string(code) + " (" + tag + ")"};
    }
    runs.push_back(snapshot(root));
  }
  std::size_t csv = 0;
  std::string differing;
  for (const auto& [name, body] : runs[0]) {
    if (name.ends_with(".csv")) ++csv;
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != body) differing += " " + name;
  }
  if (runs[0].size() != runs[1].size()) differing += " (file sets differ)";
  return {differing.empty() && csv > 0, std::to_string(runs[0].size()) + " files (" + std::to_string(csv) +
                                            " CSV) compared across 5 subcommands" +
                                            (differing.empty() ? ", all identical" : "; differ:" + differing)};
}

// --- AC8 -----------------------------------------------------------------------

Verdict ac8_counting(const fs::path& scratch) {
  const fs::path path = scratch / "counting.csv";
  const int code = run_cli_quiet({"generate", "--preset", "all-materials", "--angles", "all", "--out", path.string()});
  if (code != kExitOk) return {false, "generate exited with " + std::to_string(code)};
  const std::string text = slurp(path);
  const auto lines = std::count(text.begin(), text.end(), '\n');
  const Dataset data = read_dataset(path);
  const auto [train, test] = split_by_repetition(data, {5});
  return {lines == 181 && data.size() == 180 && train.size() == 144 && test.size() == 36,
          std::to_string(data.size()) + " rows, split " + std::to_string(train.size()) + "/" +
              std::to_string(test.size())};
}

}  // namespace

// Optional arguments select criteria by tag, e.g. `wavemat_acceptance AC1 AC3`.
int main(int argc, char** argv) {
  const std::vector<std::string> only(argv + 1, argv + argc);
  TempDir scratch("acceptance");
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"AC1 gradient oracle", ac1_gradients},
      {"AC2 forest oracle", ac2_forest},
      {"AC3 metric oracle", ac3_metrics},
      {"AC5 feature importance", [&] { return ac5_importance(scratch.path()); }},
      {"AC6 material-channel ablation", ac6_ablation},
      {"AC7 CLI determinism", [&] { return ac7_determinism(scratch.path()); }},
      {"AC8 protocol counting", [&] { return ac8_counting(scratch.path()); }},
      {"AC4 experiment-grid trends", [&] { return ac4_trends(scratch.path()); }},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && std::none_of(only.begin(), only.end(), [&](const std::string& tag) {
          return name.starts_with(tag + " ");
        }))
      continue;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << name << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
