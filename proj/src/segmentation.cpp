#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "wavemat/error.hpp"
#include "wavemat/eval.hpp"
#include "wavemat/rng.hpp"

namespace wavemat {

namespace {

constexpr std::array<std::string_view, 8> kMaterials = {"Drywall", "Vinyl Laminate", "Granite", "Glass",
                                                         "Paper",   "Enamel",         "Fabric",  "Wood"};

struct SemanticEntry {
  std::string_view label;
  int material;
};

constexpr std::array<SemanticEntry, 20> kSemanticTable = {{
    {"Wall", 0},
    {"Floor", 1},
    {"Counter", 2},
    {"Window", 3},
    {"Picture", 4},
    {"Bathtub", 5},
    {"Toilet", 5},
    {"Sink", 5},
    {"Refrigerator", 5},
    {"Bed", 6},
    {"Sofa", 6},
    {"Curtain", 6},
    {"Shower Curtain", 6},
    {"Cabinet", 7},
    {"Chair", 7},
    {"Table", 7},
    {"Door", 7},
    {"Bookshelf", 7},
    {"Desk", 7},
    {"Other Furniture", 7},
}};

constexpr std::array<std::string_view, 20> kSemanticNames = [] {
  std::array<std::string_view, 20> names{};
  for (std::size_t i = 0; i < kSemanticTable.size(); ++i) names[i] = kSemanticTable[i].label;
  return names;
}();

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

using Colour = std::array<double, 3>;

struct Scene {
  FeatureTable train;
  FeatureTable test;
  std::vector<MaterialClass> classes;
};

// Greedy assignment of classes to colour groups so that no group holds two
// classes of the same material.
std::vector<std::size_t> colour_groups(const std::vector<int>& materials, std::size_t n_groups) {
  std::vector<std::vector<int>> used(n_groups);
  std::vector<std::size_t> group(materials.size());
  for (std::size_t i = 0; i < materials.size(); ++i) {
    bool placed = false;
    for (std::size_t step = 0; step < n_groups && !placed; ++step) {
      const std::size_t g = (i + step) % n_groups;
      if (std::find(used[g].begin(), used[g].end(), materials[i]) == used[g].end()) {
        used[g].push_back(materials[i]);
        group[i] = g;
        placed = true;
      }
    }
    if (!placed) throw UsageError("cannot place every class in a colour group with distinct materials");
  }
  return group;
}

std::vector<Colour> spread_colours(std::size_t n, double min_distance, Rng& rng) {
  std::vector<Colour> out;
  for (int attempt = 0; out.size() < n; ++attempt) {
    if (attempt > 100000) throw UsageError("cannot place colour groups that far apart");
    const Colour c = {rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)};
    const bool far = std::all_of(out.begin(), out.end(), [&](const Colour& o) {
      const double d2 = (c[0] - o[0]) * (c[0] - o[0]) + (c[1] - o[1]) * (c[1] - o[1]) + (c[2] - o[2]) * (c[2] - o[2]);
      return d2 >= min_distance * min_distance;
    });
    if (far) out.push_back(c);
  }
  return out;
}

Scene make_scene(std::uint64_t seed, bool with_material, const SceneConfig& config) {
  const std::size_t k = config.classes.size();
  if (k == 0) throw UsageError("a scene needs at least one semantic class");
  std::vector<int> materials;
  Scene scene;
  for (std::size_t i = 0; i < k; ++i) {
    materials.push_back(map_semantic_to_material(config.classes[i]).id);
    scene.classes.push_back({static_cast<ClassId>(i), config.classes[i]});
  }

  Rng rng(hash_seed(seed, 0));
  // Per-class colour centre and noise model.
  std::vector<Colour> centre(k);
  std::vector<double> box_half(k, 0.0);
  if (config.colour_ambiguous) {
    const std::size_t n_groups = std::max<std::size_t>(1, std::min(config.colour_groups, k));
    const auto group = colour_groups(materials, n_groups);
    const auto group_colour = spread_colours(n_groups, 0.3, rng);
    for (std::size_t i = 0; i < k; ++i) {
      centre[i] = group_colour[group[i]];
      for (auto& ch : centre[i]) ch += 0.5 * config.colour_noise * rng.normal();
    }
  } else {
    // Each class owns a distinct slot on every channel, with gaps wider
    // than the boxes, so any midpoint threshold separates whole boxes.
    const double spacing = 1.0 / static_cast<double>(k + 1);
    std::array<std::vector<std::size_t>, 3> slots;
    for (auto& s : slots) {
      s.resize(k);
      for (std::size_t i = 0; i < k; ++i) s[i] = i;
      for (std::size_t i = k; i > 1; --i) std::swap(s[i - 1], s[rng.below(i)]);
    }
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t ch = 0; ch < 3; ++ch) centre[i][ch] = spacing * static_cast<double>(slots[ch][i] + 1);
      box_half[i] = spacing / 6.0;
    }
  }

  const std::size_t width = 3 + (with_material ? kMaterials.size() : 0);
  scene.train.n_features = scene.test.n_features = width;
  std::vector<double> row(width);
  const auto emit = [&](FeatureTable& table, std::size_t count, std::uint64_t stream) {
    Rng points(hash_seed(seed, stream));
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t n = 0; n < count; ++n) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          row[ch] = config.colour_ambiguous ? centre[i][ch] + config.colour_noise * points.normal()
                                            : centre[i][ch] + points.uniform(-box_half[i], box_half[i]);
        }
        if (with_material) {
          for (std::size_t m = 0; m < kMaterials.size(); ++m) {
            row[3 + m] = static_cast<int>(m) == materials[i] ? 1.0 : 0.0;
          }
        }
        table.add_row(row, static_cast<ClassId>(i));
      }
    }
  };
  emit(scene.train, config.train_points_per_class, 1);
  emit(scene.test, config.test_points_per_class, 2);
  return scene;
}

}  // namespace

std::span<const std::string_view> semantic_class_names() { return kSemanticNames; }

std::span<const std::string_view> semantic_material_names() { return kMaterials; }

MaterialClass map_semantic_to_material(std::string_view semantic_label) {
  for (const auto& e : kSemanticTable) {
    if (iequals(e.label, semantic_label)) {
      return {e.material, std::string(kMaterials[static_cast<std::size_t>(e.material)])};
    }
  }
  throw UsageError("unknown semantic class '" + std::string(semantic_label) + "'");
}

double segmentation_ablation(std::uint64_t scene_seed, bool with_material, const SceneConfig& config) {
  const Scene scene = make_scene(scene_seed, with_material, config);
  ForestParams params = config.forest;
  params.features_per_node =
      std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(scene.train.n_features)))));
  params.seed = hash_combine(config.forest.seed, scene_seed);
  // Throws for a single-class scene: there is nothing to separate.
  const Forest forest = train_forest(scene.train, scene.classes, params);
  std::vector<ClassId> predictions;
  predictions.reserve(scene.test.rows());
  for (std::size_t i = 0; i < scene.test.rows(); ++i) predictions.push_back(predict_forest_id(forest, scene.test.row(i)));
  return iou_report(confusion(predictions, scene.test.labels, scene.classes.size())).miou;
}

AblationPair segmentation_ablation_pair(std::uint64_t scene_seed, const SceneConfig& config) {
  return {segmentation_ablation(scene_seed, false, config), segmentation_ablation(scene_seed, true, config)};
}

}  // namespace wavemat
