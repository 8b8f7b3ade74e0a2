#include "povmap/forest.hpp"

#include <algorithm>
#include <exception>
#include <numeric>

#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/rng.hpp"

namespace povmap {

namespace {

struct Builder {
  const FeatureMatrix& x;
  std::span<const double> y;
  const ForestParams& params;
  Rng rng;
  int n_features;
  std::vector<TreeNode> nodes;
  std::vector<int> feature_pool;

  double mean_of(std::span<const std::size_t> rows) const {
    double s = 0.0;
    for (std::size_t r : rows) s += y[r];
    return s / static_cast<double>(rows.size());
  }

  // Returns the index of the node built for `rows` (which it reorders).
  int build(std::span<std::size_t> rows, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[id].value = mean_of(rows);

    const std::size_t n = rows.size();
    const auto min_leaf = static_cast<std::size_t>(std::max(1, params.min_samples_leaf));
    const bool depth_ok = params.max_depth < 0 || depth < params.max_depth;
    const bool constant = std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return y[r] == y[rows[0]]; });
    if (!depth_ok || constant || n < 2 * min_leaf) return id;

    // Draw the candidate features (partial Fisher-Yates), then scan them in index order.
    std::iota(feature_pool.begin(), feature_pool.end(), 0);
    const int k = params.features_for(n_features);
    for (int i = 0; i < k; ++i) {
      const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_features - i)));
      std::swap(feature_pool[i], feature_pool[j]);
    }
    std::vector<int> candidates(feature_pool.begin(), feature_pool.begin() + k);
    std::sort(candidates.begin(), candidates.end());

    double total = 0.0, total_sq = 0.0;
    for (std::size_t r : rows) {
      total += y[r];
      total_sq += y[r] * y[r];
    }
    const double parent_sse = total_sq - total * total / static_cast<double>(n);

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 0.0;
    // Identical partitions reached through different features differ only by
    // rounding in the running sums, so improvements must clear this margin.
    const double margin = 1e-12 * std::max(1.0, std::abs(parent_sse));
    std::vector<std::size_t> order(rows.begin(), rows.end());
    for (int f : candidates) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
      double left = 0.0, left_sq = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double v = y[order[i]];
        left += v;
        left_sq += v * v;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double xa = x(order[i], f), xb = x(order[i + 1], f);
        if (!(xa < xb)) continue;
        const double right = total - left, right_sq = total_sq - left_sq;
        const double sse = (left_sq - left * left / static_cast<double>(nl)) +
                           (right_sq - right * right / static_cast<double>(nr));
        const double gain = parent_sse - sse;
        if (gain > best_gain + margin) {
          best_gain = gain;
          best_feature = f;
          best_threshold = xa + 0.5 * (xb - xa);
        }
      }
    }
    if (best_feature < 0) return id;

    auto mid = std::stable_partition(rows.begin(), rows.end(),
                                     [&](std::size_t r) { return x(r, best_feature) <= best_threshold; });
    const auto n_left = static_cast<std::size_t>(mid - rows.begin());
    if (n_left == 0 || n_left == n) return id;
    nodes[id].feature = best_feature;
    nodes[id].threshold = best_threshold;
    const int l = build(rows.subspan(0, n_left), depth + 1);
    const int r = build(rows.subspan(n_left), depth + 1);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }
};

}  // namespace

void RegressionTree::fit(const FeatureMatrix& x, std::span<const double> y, std::span<const std::size_t> rows,
                         const ForestParams& params, std::uint64_t seed) {
  if (rows.empty()) throw DomainError("regression tree: no training rows");
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw DomainError("regression tree: x/y size mismatch");
  if (x.cols() < 1) throw DomainError("regression tree: no features");
  Builder b{x, y, params, Rng(seed), static_cast<int>(x.cols()), {}, std::vector<int>(static_cast<std::size_t>(x.cols()))};
  std::vector<std::size_t> work(rows.begin(), rows.end());
  b.build(work, 0);
  nodes_ = std::move(b.nodes);
}

double RegressionTree::predict(const double* row) const {
  if (nodes_.empty()) throw StateError("regression tree used before fit");
  int id = 0;
  while (nodes_[id].feature >= 0) id = row[nodes_[id].feature] <= nodes_[id].threshold ? nodes_[id].left : nodes_[id].right;
  return nodes_[id].value;
}

std::size_t RegressionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 1}};
  std::size_t best = 0;
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (nodes_[id].feature >= 0) {
      stack.push_back({nodes_[id].left, d + 1});
      stack.push_back({nodes_[id].right, d + 1});
    }
  }
  return best;
}

std::vector<std::size_t> bootstrap_rows(std::size_t n, std::uint64_t tree_seed, bool bootstrap) {
  std::vector<std::size_t> rows(n);
  if (!bootstrap) {
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
  }
  Rng rng(derive_seed(tree_seed, "bootstrap"));
  for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
  return rows;
}

void RandomForest::fit(const FeatureMatrix& x, std::span<const double> y, std::uint64_t seed, const ForestParams& params) {
  if (x.rows() < 2) throw DomainError("random forest: need at least 2 training rows");
  if (params.n_trees < 1) throw DomainError("random forest: n_trees must be positive");
  std::vector<RegressionTree> trees(static_cast<std::size_t>(params.n_trees));
  std::vector<std::exception_ptr> errors(trees.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int t = 0; t < params.n_trees; ++t) {
    try {
      const std::uint64_t ts = derive_seed(seed, static_cast<std::uint64_t>(t));
      const auto rows = bootstrap_rows(static_cast<std::size_t>(x.rows()), ts, params.bootstrap);
      trees[t].fit(x, y, rows, params, derive_seed(ts, "splits"));
    } catch (...) {
      errors[t] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  trees_ = std::move(trees);
}

double RandomForest::predict(const Eigen::Ref<const Eigen::VectorXd>& row) const {
  if (trees_.empty()) throw StateError("random forest used before fit");
  double s = 0.0;
  for (const auto& t : trees_) s += t.predict(row.data());
  return s / static_cast<double>(trees_.size());
}

std::vector<double> RandomForest::predict_rows(const FeatureMatrix& x) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    out[static_cast<std::size_t>(i)] = predict(row);
  }
  return out;
}

void write_forest_csv(const RandomForest& f, const std::filesystem::path& path) {
  std::vector<csv::Row> rows{{"tree", "node", "feature", "threshold", "left", "right", "value"}};
  for (std::size_t t = 0; t < f.trees().size(); ++t) {
    const auto& nodes = f.trees()[t].nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const TreeNode& n = nodes[i];
      rows.push_back({std::to_string(t), std::to_string(i), std::to_string(n.feature), csv::format_double(n.threshold),
                      std::to_string(n.left), std::to_string(n.right), csv::format_double(n.value)});
    }
  }
  csv::write_file(path, rows);
}

RandomForest read_forest_csv(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw ValidationError("forest file is empty: " + path.string());
  std::vector<std::vector<TreeNode>> trees;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 7) throw ValidationError("forest file: expected 7 columns on line " + std::to_string(i + 1));
    const auto t = static_cast<std::size_t>(csv::parse_int(r[0], "forest field"));
    const auto node = static_cast<std::size_t>(csv::parse_int(r[1], "forest field"));
    if (t >= trees.size()) trees.resize(t + 1);
    if (node != trees[t].size()) throw ValidationError("forest file: nodes out of order");
    trees[t].push_back({static_cast<int>(csv::parse_int(r[2], "forest field")), csv::parse_double(r[3], "forest field"),
                        static_cast<int>(csv::parse_int(r[4], "forest field")), static_cast<int>(csv::parse_int(r[5], "forest field")),
                        csv::parse_double(r[6], "forest field")});
  }
  std::vector<RegressionTree> out;
  for (auto& nodes : trees) out.emplace_back(std::move(nodes));
  return RandomForest(std::move(out));
}

}  // namespace povmap
