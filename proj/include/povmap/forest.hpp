#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace povmap {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ForestParams {
  int n_trees = 50;
  int max_features = 0;  // 0 -> ceil(D / 3)
  int min_samples_leaf = 2;
  int max_depth = -1;    // < 0 -> unlimited
  bool bootstrap = true;

  int features_for(int d) const { return max_features > 0 ? std::min(max_features, d) : (d + 2) / 3; }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  bool operator==(const TreeNode&) const = default;
};

// CART regression tree: variance-reduction splits, leaves hold the mean target.
// Candidate splits sit halfway between consecutive distinct feature values;
// among equal improvements the lower feature index, then the lower threshold wins.
class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  void fit(const FeatureMatrix& x, std::span<const double> y, std::span<const std::size_t> rows,
           const ForestParams& params, std::uint64_t seed);
  double predict(const double* row) const;
  double predict(const Eigen::Ref<const Eigen::VectorXd>& row) const { return predict(row.data()); }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t depth() const;
  bool operator==(const RegressionTree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
};

class RandomForest {
 public:
  RandomForest() = default;
  explicit RandomForest(std::vector<RegressionTree> trees) : trees_(std::move(trees)) {}

  // Trees are fit in parallel; tree t uses derive_seed(seed, t).
  void fit(const FeatureMatrix& x, std::span<const double> y, std::uint64_t seed, const ForestParams& params = {});

  bool fitted() const { return !trees_.empty(); }
  // Mean over trees in tree-index order. Throws StateError before fit.
  double predict(const Eigen::Ref<const Eigen::VectorXd>& row) const;
  std::vector<double> predict_rows(const FeatureMatrix& x) const;

  const std::vector<RegressionTree>& trees() const { return trees_; }
  void add_tree(RegressionTree t) { trees_.push_back(std::move(t)); }
  bool operator==(const RandomForest&) const = default;

 private:
  std::vector<RegressionTree> trees_;
};

// Bootstrap rows for tree `t` (or all rows in order without bootstrap).
std::vector<std::size_t> bootstrap_rows(std::size_t n, std::uint64_t tree_seed, bool bootstrap);

// tree,node,feature,threshold,left,right,value
void write_forest_csv(const RandomForest& f, const std::filesystem::path& path);
RandomForest read_forest_csv(const std::filesystem::path& path);

}  // namespace povmap
