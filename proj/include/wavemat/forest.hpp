#pragma once

// Random-forest classifier over fixed-length feature vectors (raw waveform
// amplitudes by default) with split-frequency feature importance.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wavemat/core.hpp"

namespace wavemat {

struct ForestParams {
  int n_trees = 100;
  int max_depth = 50;
  int features_per_node = 16;  // floor(sqrt(256))
  int min_samples_leaf = 1;
  std::uint64_t seed = 0;
  /// Train each tree on an n-with-replacement resample. Off only for oracle tests.
  bool bootstrap = true;
  /// Threads used for training; does not affect the result.
  std::size_t jobs = 1;

  void validate() const;
};

/// Row-major feature matrix with one label per row.
struct FeatureTable {
  std::size_t n_features = 0;
  std::vector<double> values;
  std::vector<ClassId> labels;

  std::size_t rows() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return {values.data() + i * n_features, n_features};
  }
  void add_row(std::span<const double> features, ClassId label);

  static FeatureTable from_dataset(const Dataset& dataset);
};

/// Internal nodes route `x[feature] <= threshold` to the left child.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int depth = 0;
  std::vector<std::uint32_t> class_votes;  // leaves only

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Nodes stored flat; the root is nodes[0].
struct DecisionTree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(std::span<const double> x) const;
  std::size_t internal_node_count() const;
  int depth() const;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct Forest {
  std::vector<DecisionTree> trees;
  std::vector<MaterialClass> classes;
  ForestParams params;
  std::size_t n_features = 0;
  /// Times each feature index was chosen for a split, over all trees.
  std::vector<std::uint64_t> split_counts;

  std::size_t internal_node_count() const;
  bool operator==(const Forest& other) const;
};

/// Trains on waveform amplitudes. Throws DataError for an empty or single-class set.
Forest train_forest(const Dataset& train, const ForestParams& params);
Forest train_forest(const FeatureTable& train, std::vector<MaterialClass> classes, const ForestParams& params);

/// Summed leaf votes per class across all trees.
std::vector<std::uint64_t> vote_tally(const Forest& forest, std::span<const double> x);
/// Argmax of the vote tally; ties go to the lowest class id.
ClassId predict_forest_id(const Forest& forest, std::span<const double> x);
MaterialClass predict_forest(const Forest& forest, const Waveform& waveform);

/// split_counts normalised to sum to 1. Throws DataError when the forest has no splits.
std::vector<double> feature_importance(const Forest& forest);

// Versioned text format; see README.
void write_forest(const Forest& forest, std::ostream& out);
Forest read_forest(std::istream& in);
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

}  // namespace wavemat
