#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "povmap/district.hpp"
#include "povmap/forest.hpp"
#include "povmap/metrics.hpp"
#include "povmap/pipeline.hpp"

namespace povmap {

struct MetricStats {
  double mean = 0.0;
  double sd = 0.0;     // sample standard deviation over defined repetitions
  std::size_t defined = 0;
};

struct MetricTriple {
  MetricStats pearson, spearman, r2;
};

// Mean and sample sd over the finite entries.
MetricStats summarize(std::span<const double> values);

struct VariantResult {
  std::string name;
  // One entry per repetition; NaN where the metric is undefined on that test fold.
  std::vector<double> pearson, spearman, r2;
  MetricTriple summary;
  // Test-fold predictions per district, in repetition order.
  std::map<std::int64_t, std::vector<double>> test_predictions;
};

struct EvalSettings {
  std::uint64_t forest_seed = 0;
  ForestParams forest;
};

// Per repetition: fit a forest on the train districts, score the test districts.
VariantResult evaluate_variant(const std::string& name, const FeatureMatrix& features, std::span<const double> targets,
                               std::span<const std::int64_t> district_ids, const SplitPlan& plan,
                               const EvalSettings& settings);

// Feature sets of the ablation protocol. "econ" is the adjusted economic
// block alone; "proxy" is the unadjusted one alone.
inline const std::vector<std::string> kVariantNames = {"full",       "noaccess", "nomorph", "noecon",
                                                       "nobackdoor", "proxy",    "econ"};
bool is_variant(const std::string& name);
// Blocks in (morph, access, econ) order with the variant's removals applied.
FeatureMatrix variant_features(const CityFeatures& f, const std::string& variant);

std::vector<VariantResult> ablate(const CityFeatures& f, std::span<const std::string> variants, const SplitPlan& plan,
                                  const EvalSettings& settings);

struct QuartileRow {
  std::string group;  // bottom25, bottom50, top25, top50
  std::vector<std::int64_t> members;
  double pearson = 0.0;  // NaN when undefined (fewer than 2 members or constant input)
};

// Groups are formed on the ground truth: the round(N/4) and round(N/2)
// lowest / highest headcounts (ties by district id).
std::vector<QuartileRow> quartile_analysis(std::span<const std::int64_t> ids, std::span<const double> y_true,
                                           std::span<const double> y_pred);

// Mean test-fold prediction per district (districts never tested are dropped).
struct MeanPredictions {
  std::vector<std::int64_t> ids;
  std::vector<double> truth, pred;
};
MeanPredictions mean_test_predictions(const VariantResult& v, const CityFeatures& f);

struct PairedComparison {
  std::string a, b;
  TTestResult test;
  std::size_t pairs = 0;
};
// Paired t-test on per-repetition Pearson, over repetitions where both are defined.
PairedComparison compare(const VariantResult& a, const VariantResult& b);

struct TransferCell {
  std::string source, target;
  MetricTriple full, proxy;
  double full_pearson = 0.0, proxy_pearson = 0.0;
};

struct TransferResult {
  std::vector<std::string> cities;
  std::vector<TransferCell> cells;  // row-major: source major, target minor
  double off_diagonal_full = 0.0;
  double off_diagonal_proxy = 0.0;
};

// pooled[s][t]: features of city t embedded with the encoders of city s.
// Forests are fit and scored on the target city with the target's plan.
TransferResult transfer_matrix(std::span<const std::string> cities,
                               const std::vector<std::vector<CityFeatures>>& pooled,
                               std::span<const SplitPlan> plans, const EvalSettings& settings);

struct PcaBlock {
  std::string block;
  std::vector<double> ratios;
};
std::vector<PcaBlock> pca_blocks(const CityFeatures& f);

struct ComponentRow {
  std::string name;
  VariantResult result;
};

struct EvalReport {
  std::string config_echo;
  std::vector<VariantResult> variants;
  std::vector<PairedComparison> comparisons;
  std::map<std::string, std::vector<QuartileRow>> quartiles;
  std::vector<PcaBlock> pca;
  std::vector<ComponentRow> components;
  std::optional<TransferResult> transfer;
  std::vector<std::string> warnings;
};

// Variants plus the comparisons, quartile tables and PCA that go with them.
EvalReport build_report(const CityFeatures& f, std::span<const std::string> variants, const SplitPlan& plan,
                        const EvalSettings& settings, const std::string& config_echo);

// report.csv (variant,repetition,metric,value), summary.md and SVG plots.
void write_report(const EvalReport& r, const std::filesystem::path& dir);
void write_transfer(const TransferResult& t, const std::filesystem::path& dir, const std::string& config_echo);

}  // namespace povmap
