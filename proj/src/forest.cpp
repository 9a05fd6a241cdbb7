#include "wavemat/forest.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "wavemat/error.hpp"
#include "wavemat/parallel.hpp"
#include "wavemat/rng.hpp"

namespace wavemat {

namespace {

constexpr std::string_view kForestMagic = "wavemat-forest";
constexpr int kForestVersion = 1;

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureTable& data, std::size_t n_classes, const ForestParams& params, std::uint64_t seed)
      : data_(data), n_classes_(n_classes), params_(params), rng_(seed) {
    feature_pool_.resize(data.n_features);
    std::iota(feature_pool_.begin(), feature_pool_.end(), 0);
  }

  DecisionTree build(std::vector<std::size_t> rows, std::vector<std::uint64_t>& split_counts) {
    DecisionTree tree;
    tree.nodes.emplace_back();
    struct Pending {
      int node;
      std::vector<std::size_t> rows;
    };
    std::vector<Pending> stack;
    stack.push_back({0, std::move(rows)});
    while (!stack.empty()) {
      Pending job = std::move(stack.back());
      stack.pop_back();
      const int depth = tree.nodes[static_cast<std::size_t>(job.node)].depth;
      const auto counts = class_counts(job.rows);
      const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
      const auto n = job.rows.size();
      SplitChoice split;
      if (!pure && depth < params_.max_depth && n >= 2 * static_cast<std::size_t>(params_.min_samples_leaf)) {
        split = best_split(job.rows, counts);
      }
      if (split.feature < 0) {
        tree.nodes[static_cast<std::size_t>(job.node)].class_votes = counts;
        continue;
      }
      std::vector<std::size_t> left_rows, right_rows;
      for (auto r : job.rows) {
        (data_.row(r)[static_cast<std::size_t>(split.feature)] <= split.threshold ? left_rows : right_rows)
            .push_back(r);
      }
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      tree.nodes[static_cast<std::size_t>(left)].depth = depth + 1;
      tree.nodes[static_cast<std::size_t>(left) + 1].depth = depth + 1;
      TreeNode& node = tree.nodes[static_cast<std::size_t>(job.node)];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      ++split_counts[static_cast<std::size_t>(split.feature)];
      // Right pushed first so the left subtree is expanded first.
      stack.push_back({left + 1, std::move(right_rows)});
      stack.push_back({left, std::move(left_rows)});
    }
    return tree;
  }

 private:
  std::vector<std::uint32_t> class_counts(const std::vector<std::size_t>& rows) const {
    std::vector<std::uint32_t> counts(n_classes_, 0);
    for (auto r : rows) ++counts[static_cast<std::size_t>(data_.labels[r])];
    return counts;
  }

  // Draws features without replacement until features_per_node of them vary
  // within the node; constant features do not count towards the quota.
  std::vector<int> sample_features(const std::vector<std::size_t>& rows) {
    const std::size_t d = feature_pool_.size();
    const auto quota = static_cast<std::size_t>(params_.features_per_node);
    std::vector<int> chosen;
    for (std::size_t i = 0; i < d && chosen.size() < quota; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_.below(d - i));
      std::swap(feature_pool_[i], feature_pool_[j]);
      const auto f = static_cast<std::size_t>(feature_pool_[i]);
      const double first = data_.row(rows.front())[f];
      const bool varies =
          std::any_of(rows.begin() + 1, rows.end(), [&](std::size_t r) { return data_.row(r)[f] != first; });
      if (varies) chosen.push_back(feature_pool_[i]);
    }
    return chosen;
  }

  // Weighted child Gini is 1 - S / n with S = sum_k l_k^2 / n_l + sum_k r_k^2 / n_r,
  // so the best split maximises S. Scores are compared as exact integer
  // fractions: equal partitions tie exactly and ties resolve by scan order,
  // features in draw order then ascending threshold.
  SplitChoice best_split(const std::vector<std::size_t>& rows, const std::vector<std::uint32_t>& counts) {
    using Wide = unsigned __int128;
    const auto n = rows.size();
    std::uint64_t parent_sq = 0;
    for (auto c : counts) parent_sq += static_cast<std::uint64_t>(c) * c;
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);

    // A split must beat the parent score parent_sq / n strictly.
    Wide best_num = parent_sq;
    Wide best_den = n;
    SplitChoice best;
    std::vector<std::pair<double, ClassId>> column(n);
    std::vector<std::uint32_t> left(n_classes_), right(n_classes_);
    for (int f : sample_features(rows)) {
      for (std::size_t i = 0; i < n; ++i) {
        column[i] = {data_.row(rows[i])[static_cast<std::size_t>(f)], data_.labels[rows[i]]};
      }
      std::sort(column.begin(), column.end());
      std::fill(left.begin(), left.end(), 0);
      right = counts;
      std::uint64_t left_sq = 0, right_sq = parent_sq;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto k = static_cast<std::size_t>(column[i].second);
        left_sq += 2 * static_cast<std::uint64_t>(left[k]) + 1;
        right_sq -= 2 * static_cast<std::uint64_t>(right[k]) - 1;
        ++left[k];
        --right[k];
        const double a = column[i].first, b = column[i + 1].first;
        if (a == b) continue;
        const std::size_t n_left = i + 1, n_right = n - n_left;
        if (n_left < min_leaf || n_right < min_leaf) continue;
        const Wide num = Wide{left_sq} * n_right + Wide{right_sq} * n_left;
        const Wide den = Wide{n_left} * n_right;
        if (num * best_den > best_num * den) {
          best_num = num;
          best_den = den;
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best.feature = f;
          best.threshold = mid;
        }
      }
    }
    return best;
  }

  const FeatureTable& data_;
  std::size_t n_classes_;
  const ForestParams& params_;
  Rng rng_;
  std::vector<int> feature_pool_;
};

void expect_token(std::istream& in, std::string_view token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw DataError("forest file: expected '" + std::string(token) + "', got '" + got + "'");
  }
}

template <typename T>
T read_value(std::istream& in, std::string_view what) {
  T v{};
  if (!(in >> v)) throw DataError("forest file: cannot read " + std::string(what));
  return v;
}

double read_exact_double(std::istream& in, std::string_view what) {
  return parse_double(read_value<std::string>(in, what));
}

}  // namespace

void ForestParams::validate() const {
  if (n_trees < 1) throw UsageError("n_trees must be >= 1");
  if (max_depth < 1) throw UsageError("max_depth must be >= 1");
  if (features_per_node < 1) throw UsageError("features_per_node must be >= 1");
  if (min_samples_leaf < 1) throw UsageError("min_samples_leaf must be >= 1");
}

void FeatureTable::add_row(std::span<const double> features, ClassId label) {
  if (n_features == 0 && labels.empty()) n_features = features.size();
  if (features.size() != n_features) throw DataError("feature row has the wrong width");
  values.insert(values.end(), features.begin(), features.end());
  labels.push_back(label);
}

FeatureTable FeatureTable::from_dataset(const Dataset& dataset) {
  FeatureTable t;
  t.n_features = kWaveformLength;
  t.values.reserve(dataset.size() * kWaveformLength);
  for (const auto& s : dataset.samples()) t.add_row(s.waveform.samples(), s.label);
  return t;
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf()) {
    node = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(node->feature)] <= node->threshold
                                               ? node->left
                                               : node->right)];
  }
  return *node;
}

std::size_t DecisionTree::internal_node_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return !n.is_leaf(); }));
}

int DecisionTree::depth() const {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

std::size_t Forest::internal_node_count() const {
  std::size_t total = 0;
  for (const auto& t : trees) total += t.internal_node_count();
  return total;
}

bool Forest::operator==(const Forest& other) const {
  const auto key = [](const ForestParams& p) {
    return std::tuple(p.n_trees, p.max_depth, p.features_per_node, p.min_samples_leaf, p.seed, p.bootstrap);
  };
  return trees == other.trees && classes == other.classes && key(params) == key(other.params) &&
         n_features == other.n_features && split_counts == other.split_counts;
}

Forest train_forest(const Dataset& train, const ForestParams& params) {
  return train_forest(FeatureTable::from_dataset(train), train.classes(), params);
}

Forest train_forest(const FeatureTable& train, std::vector<MaterialClass> classes, const ForestParams& params) {
  params.validate();
  if (train.rows() == 0) throw DataError("cannot train a forest on an empty dataset");
  if (train.n_features == 0) throw DataError("cannot train a forest without features");
  std::vector<bool> seen(classes.size(), false);
  for (ClassId label : train.labels) {
    if (label < 0 || label >= static_cast<ClassId>(classes.size())) {
      throw DataError("training label " + std::to_string(label) + " outside the class table");
    }
    seen[static_cast<std::size_t>(label)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) {
    throw DataError("forest training needs at least two classes; nothing to split");
  }

  Forest forest;
  forest.classes = std::move(classes);
  forest.params = params;
  forest.n_features = train.n_features;
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));
  std::vector<std::vector<std::uint64_t>> per_tree_counts(forest.trees.size(),
                                                          std::vector<std::uint64_t>(train.n_features, 0));
  const std::size_t n = train.rows();
  parallel_for(forest.trees.size(), params.jobs, [&](std::size_t t) {
    const std::uint64_t tree_seed = hash_seed(params.seed, t);
    TreeBuilder builder(train, forest.classes.size(), params, hash_combine(tree_seed, 1));
    std::vector<std::size_t> rows(n);
    if (params.bootstrap) {
      Rng draw(hash_combine(tree_seed, 0));
      for (auto& r : rows) r = static_cast<std::size_t>(draw.below(n));
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    forest.trees[t] = builder.build(std::move(rows), per_tree_counts[t]);
  });
  forest.split_counts.assign(train.n_features, 0);
  for (const auto& counts : per_tree_counts) {
    for (std::size_t f = 0; f < counts.size(); ++f) forest.split_counts[f] += counts[f];
  }
  return forest;
}

std::vector<std::uint64_t> vote_tally(const Forest& forest, std::span<const double> x) {
  if (x.size() != forest.n_features) throw DataError("feature vector width does not match the forest");
  std::vector<std::uint64_t> votes(forest.classes.size(), 0);
  for (const auto& tree : forest.trees) {
    const auto& leaf = tree.leaf_for(x);
    for (std::size_t k = 0; k < votes.size(); ++k) votes[k] += leaf.class_votes[k];
  }
  return votes;
}

ClassId predict_forest_id(const Forest& forest, std::span<const double> x) {
  const auto votes = vote_tally(forest, x);
  return static_cast<ClassId>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

MaterialClass predict_forest(const Forest& forest, const Waveform& waveform) {
  return forest.classes[static_cast<std::size_t>(predict_forest_id(forest, waveform.samples()))];
}

std::vector<double> feature_importance(const Forest& forest) {
  const std::uint64_t total = std::accumulate(forest.split_counts.begin(), forest.split_counts.end(), std::uint64_t{0});
  if (total == 0) throw DataError("forest has no internal nodes; feature importance is undefined");
  std::vector<double> out(forest.split_counts.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(forest.split_counts[i]) / static_cast<double>(total);
  }
  return out;
}

// --- serialization --------------------------------------------------------------

void write_forest(const Forest& forest, std::ostream& out) {
  const auto& p = forest.params;
  out << kForestMagic << ' ' << kForestVersion << '\n';
  out << "features " << forest.n_features << '\n';
  out << "classes " << forest.classes.size() << '\n';
  for (const auto& c : forest.classes) out << "class " << c.id << ' ' << c.name << '\n';
  out << "params " << p.n_trees << ' ' << p.max_depth << ' ' << p.features_per_node << ' ' << p.min_samples_leaf
      << ' ' << p.seed << ' ' << (p.bootstrap ? 1 : 0) << '\n';
  out << "split_counts";
  for (auto c : forest.split_counts) out << ' ' << c;
  out << '\n';
  out << "trees " << forest.trees.size() << '\n';
  for (const auto& tree : forest.trees) {
    out << "tree " << tree.nodes.size() << '\n';
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) {
        out << "L " << node.depth;
        for (auto v : node.class_votes) out << ' ' << v;
      } else {
        out << "I " << node.depth << ' ' << node.feature << ' ' << format_double(node.threshold) << ' ' << node.left
            << ' ' << node.right;
      }
      out << '\n';
    }
  }
  out << "end\n";
}

Forest read_forest(std::istream& in) {
  expect_token(in, kForestMagic);
  if (read_value<int>(in, "version") != kForestVersion) throw DataError("forest file: unsupported version");
  Forest f;
  expect_token(in, "features");
  f.n_features = read_value<std::size_t>(in, "feature count");
  expect_token(in, "classes");
  const auto n_classes = read_value<std::size_t>(in, "class count");
  for (std::size_t k = 0; k < n_classes; ++k) {
    expect_token(in, "class");
    MaterialClass c;
    c.id = read_value<int>(in, "class id");
    c.name = read_value<std::string>(in, "class name");
    if (c.id != static_cast<int>(k)) throw DataError("forest file: class ids must be dense");
    f.classes.push_back(c);
  }
  expect_token(in, "params");
  auto& p = f.params;
  p.n_trees = read_value<int>(in, "n_trees");
  p.max_depth = read_value<int>(in, "max_depth");
  p.features_per_node = read_value<int>(in, "features_per_node");
  p.min_samples_leaf = read_value<int>(in, "min_samples_leaf");
  p.seed = read_value<std::uint64_t>(in, "seed");
  p.bootstrap = read_value<int>(in, "bootstrap") != 0;
  expect_token(in, "split_counts");
  f.split_counts.resize(f.n_features);
  for (auto& c : f.split_counts) c = read_value<std::uint64_t>(in, "split count");
  expect_token(in, "trees");
  f.trees.resize(read_value<std::size_t>(in, "tree count"));
  for (auto& tree : f.trees) {
    expect_token(in, "tree");
    tree.nodes.resize(read_value<std::size_t>(in, "node count"));
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      auto& node = tree.nodes[i];
      const auto kind = read_value<std::string>(in, "node kind");
      node.depth = read_value<int>(in, "depth");
      if (kind == "L") {
        node.class_votes.resize(n_classes);
        for (auto& v : node.class_votes) v = read_value<std::uint32_t>(in, "vote");
      } else if (kind == "I") {
        node.feature = read_value<int>(in, "feature");
        node.threshold = read_exact_double(in, "threshold");
        node.left = read_value<int>(in, "left");
        node.right = read_value<int>(in, "right");
        const auto bad = [&](int child) { return child <= static_cast<int>(i) || child >= static_cast<int>(tree.nodes.size()); };
        if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= f.n_features || bad(node.left) ||
            bad(node.right)) {
          throw DataError("forest file: malformed internal node");
        }
      } else {
        throw DataError("forest file: unknown node kind '" + kind + "'");
      }
    }
  }
  expect_token(in, "end");
  return f;
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  std::ostringstream text;
  write_forest(forest, text);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text.str();
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open forest '" + path.string() + "'");
  return read_forest(in);
}

}  // namespace wavemat
