#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "wavemat/error.hpp"
#include "wavemat/eval.hpp"

using namespace wavemat;
using wavemat::test::brute_force_iou;

namespace {

std::pair<std::vector<ClassId>, std::vector<ClassId>> random_pair(std::mt19937_64& gen, std::size_t n,
                                                                  std::size_t k) {
  std::uniform_int_distribution<int> cls(-1, static_cast<int>(k) - 1);
  std::vector<ClassId> pred(n), truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred[i] = cls(gen);
    truth[i] = cls(gen);
  }
  return {pred, truth};
}

}  // namespace

TEST_CASE("hand-tallied confusion example") {
  // Class 0 (A): one hit, one false alarm on a B point.
  const std::vector<ClassId> truth = {0, 1, 1};
  const std::vector<ClassId> pred = {0, 0, 1};
  const auto c = confusion(pred, truth, 2);
  CHECK(c.tp == std::vector<std::uint64_t>{1, 1});
  CHECK(c.fp == std::vector<std::uint64_t>{1, 0});
  CHECK(c.fn == std::vector<std::uint64_t>{0, 1});
  const auto r = iou_report(c);
  CHECK(*r.per_class_iou[0] == 0.5);
  CHECK(*r.per_class_iou[1] == 0.5);
  CHECK(r.miou == 0.5);
}

TEST_CASE("perfect and swapped predictions") {
  const std::vector<ClassId> truth = {0, 1, 0, 1, 1};
  const auto perfect = confusion(truth, truth, 2);
  CHECK(perfect.fp == std::vector<std::uint64_t>{0, 0});
  CHECK(perfect.fn == std::vector<std::uint64_t>{0, 0});
  CHECK(iou_report(perfect).miou == 1.0);
  std::vector<ClassId> swapped = truth;
  for (auto& y : swapped) y = 1 - y;
  CHECK(iou_report(confusion(swapped, truth, 2)).miou == 0.0);
}

TEST_CASE("all-unknown truth yields zero counts and an error") {
  const std::vector<ClassId> truth(4, kUnknownClass);
  const std::vector<ClassId> pred = {0, 1, 2, 0};
  const auto c = confusion(pred, truth, 3);
  CHECK(c == ConfusionCounts(3));
  CHECK_THROWS_AS(iou_report(c), DataError);
  CHECK_THROWS_AS(confusion(pred, std::vector<ClassId>(3, 0), 3), UsageError);
  CHECK_THROWS_AS(confusion(std::vector<ClassId>{5}, std::vector<ClassId>{0}, 3), DataError);
}

TEST_CASE("iou_report matches a brute-force set computation") {
  std::mt19937_64 gen(100);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + gen() % 6;
    const auto [pred, truth] = random_pair(gen, 1 + gen() % 60, k);
    const auto oracle = brute_force_iou(pred, truth, k);
    if (std::isnan(oracle.miou)) {
      CHECK_THROWS_AS(iou_report(confusion(pred, truth, k)), DataError);
      continue;
    }
    const auto r = iou_report(confusion(pred, truth, k));
    for (std::size_t c = 0; c < k; ++c) {
      CHECK(r.per_class_iou[c].has_value() == !std::isnan(oracle.per_class[c]));
      if (r.per_class_iou[c]) CHECK(std::abs(*r.per_class_iou[c] - oracle.per_class[c]) <= 1e-12);
    }
    CHECK(std::abs(r.miou - oracle.miou) <= 1e-12);
    CHECK(r.miou >= 0.0);
    CHECK(r.miou <= 1.0);
    const bool equal = std::equal(pred.begin(), pred.end(), truth.begin(), [](ClassId p, ClassId t) {
      return t == kUnknownClass || p == t;
    });
    CHECK((r.miou == 1.0) == equal);
  }
}

TEST_CASE("counts are invariant to a joint permutation") {
  std::mt19937_64 gen(101);
  for (int trial = 0; trial < 50; ++trial) {
    auto [pred, truth] = random_pair(gen, 40, 4);
    const auto before = confusion(pred, truth, 4);
    std::vector<std::size_t> order(pred.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), gen);
    std::vector<ClassId> p2, t2;
    for (auto i : order) {
      p2.push_back(pred[i]);
      t2.push_back(truth[i]);
    }
    CHECK(confusion(p2, t2, 4) == before);
  }
}

TEST_CASE("adding unknown-truth points changes nothing") {
  std::mt19937_64 gen(102);
  for (int trial = 0; trial < 50; ++trial) {
    auto [pred, truth] = random_pair(gen, 30, 3);
    const auto before = confusion(pred, truth, 3);
    for (int extra = 0; extra < 10; ++extra) {
      const auto at = gen() % (pred.size() + 1);
      pred.insert(pred.begin() + static_cast<std::ptrdiff_t>(at), static_cast<ClassId>(gen() % 3));
      truth.insert(truth.begin() + static_cast<std::ptrdiff_t>(at), kUnknownClass);
    }
    CHECK(confusion(pred, truth, 3) == before);
  }
}

TEST_CASE("semantic classes map to their materials") {
  CHECK(map_semantic_to_material("Toilet").name == "Enamel");
  CHECK(map_semantic_to_material("Floor").name == "Vinyl Laminate");
  CHECK(map_semantic_to_material("Desk").name == "Wood");
  CHECK(map_semantic_to_material("shower curtain").name == "Fabric");
  CHECK(map_semantic_to_material("Wall").name == "Drywall");
  CHECK(map_semantic_to_material("Counter").name == "Granite");
  CHECK(map_semantic_to_material("Window").name == "Glass");
  CHECK(map_semantic_to_material("Picture").name == "Paper");
  CHECK(semantic_class_names().size() == 20);
  CHECK(semantic_material_names().size() == 8);
  for (const auto name : semantic_class_names()) {
    const auto m = map_semantic_to_material(name);
    CHECK(semantic_material_names()[static_cast<std::size_t>(m.id)] == m.name);
  }
  CHECK_THROWS_AS(map_semantic_to_material("Lamp"), UsageError);
}

TEST_CASE("segmentation ablation") {
  SUBCASE("colour alone separates the classes") {
    SceneConfig config;
    config.colour_ambiguous = false;
    config.forest.n_trees = 30;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto pair = segmentation_ablation_pair(seed, config);
      CHECK(pair.without_material == 1.0);
      CHECK(pair.with_material == 1.0);
    }
  }
  SUBCASE("a single class has nothing to separate") {
    SceneConfig config;
    config.classes = {"Wall"};
    CHECK_THROWS_AS(segmentation_ablation(1, false, config), DataError);
  }
  SUBCASE("deterministic in the seed") {
    SceneConfig config;
    config.forest.n_trees = 20;
    config.train_points_per_class = 20;
    config.test_points_per_class = 20;
    CHECK(segmentation_ablation(4, true, config) == segmentation_ablation(4, true, config));
  }
}

TEST_CASE("result and per-class CSV layouts") {
  const std::vector<ResultRow> rows = {{"PAIR", "RF", "ZERO", 0.75}, {"COLOURS", "TCN", "ALL", 0.5}};
  CHECK(results_csv(rows) == "experiment,model,angles,miou\nPAIR,RF,ZERO,0.75\nCOLOURS,TCN,ALL,0.5\n");
  ExperimentResult r{rows[0], {}, {{0, "a"}, {1, "b"}}, Forest{}};
  r.report.per_class_iou = {0.5, std::nullopt};
  const std::vector<ExperimentResult> results = {r};
  CHECK(per_class_csv(results) == "experiment,model,angles,class,iou\nPAIR,RF,ZERO,a,0.5\nPAIR,RF,ZERO,b,\n");
}

TEST_CASE("importance report covers every sample and sums to one") {
  std::mt19937_64 gen(103);
  const Dataset d = wavemat::test::random_dataset(gen, 60, 3);
  ForestParams params;
  params.n_trees = 20;
  params.seed = 3;
  const Forest f = train_forest(d, params);
  const auto rows = importance_report(f);
  REQUIRE(rows.size() == kWaveformLength);
  double sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].index == i);
    sum += rows[i].importance;
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  const std::string csv = importance_csv(rows);
  CHECK(csv.starts_with("index,importance\n0,"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 257);
  const std::string avg = averaged_waveforms_csv(d);
  CHECK(avg.starts_with("index,m0,m1,m2\n"));
  CHECK(std::count(avg.begin(), avg.end(), '\n') == 257);
}

TEST_CASE("model kinds parse and evaluate through the variant") {
  CHECK(parse_model_kind("rf") == ModelKind::RandomForest);
  CHECK(parse_model_kind("tcn") == ModelKind::Tcn);
  CHECK_THROWS_AS(parse_model_kind("svm"), UsageError);
  std::mt19937_64 gen(104);
  const Dataset d = wavemat::test::random_dataset(gen, 30, 2);
  ForestParams params;
  params.n_trees = 10;
  params.seed = 1;
  const Model m = train_forest(d, params);
  CHECK(model_classes(m) == d.classes());
  const auto preds = predict_all(m, d);
  std::vector<ClassId> truth;
  for (const auto& s : d.samples()) truth.push_back(s.label);
  CHECK(evaluate_model(m, d).miou == iou_report(confusion(preds, truth, 2)).miou);
}
