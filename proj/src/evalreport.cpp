#include "povmap/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/rng.hpp"
#include "povmap/svg.hpp"

namespace povmap {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename F>
double or_nan(F&& f) {
  try {
    return f();
  } catch (const UndefinedMetricError&) {
    return kNaN;
  }
}

FeatureMatrix hconcat(const std::vector<const FeatureMatrix*>& blocks) {
  if (blocks.empty()) throw DomainError("no feature blocks selected");
  const Eigen::Index rows = blocks.front()->rows();
  Eigen::Index cols = 0;
  for (const auto* b : blocks) {
    if (b->rows() != rows) throw DomainError("feature blocks disagree on district count");
    cols += b->cols();
  }
  if (cols == 0) throw DomainError("empty feature set");
  FeatureMatrix out(rows, cols);
  Eigen::Index off = 0;
  for (const auto* b : blocks) {
    out.middleCols(off, b->cols()) = *b;
    off += b->cols();
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string fmt_num(double v, int digits = 4) {
  return std::isfinite(v) ? fmt::format("{:.{}f}", v, digits) : std::string("n/a");
}

std::string fmt_stats(const MetricStats& s) { return fmt::format("{} ± {}", fmt_num(s.mean), fmt_num(s.sd)); }

}  // namespace

MetricStats summarize(std::span<const double> values) {
  MetricStats s;
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    sum += v;
    ++s.defined;
  }
  if (s.defined == 0) return {kNaN, kNaN, 0};
  s.mean = sum / static_cast<double>(s.defined);
  double ss = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
  }
  s.sd = s.defined > 1 ? std::sqrt(ss / static_cast<double>(s.defined - 1)) : 0.0;
  return s;
}

VariantResult evaluate_variant(const std::string& name, const FeatureMatrix& features, std::span<const double> targets,
                               std::span<const std::int64_t> district_ids, const SplitPlan& plan,
                               const EvalSettings& settings) {
  if (features.cols() == 0) throw DomainError("evaluate_variant: empty feature set for " + name);
  if (static_cast<std::size_t>(features.rows()) != targets.size() || targets.size() != district_ids.size()) {
    throw DomainError("evaluate_variant: features, targets and ids are not aligned");
  }
  std::map<std::int64_t, Eigen::Index> row_of;
  for (std::size_t i = 0; i < district_ids.size(); ++i) row_of[district_ids[i]] = static_cast<Eigen::Index>(i);
  const auto rows_for = [&](const std::vector<std::int64_t>& ids) {
    std::vector<Eigen::Index> out;
    for (auto id : ids) {
      auto it = row_of.find(id);
      if (it == row_of.end()) throw DomainError(fmt::format("split references unknown district {}", id));
      out.push_back(it->second);
    }
    return out;
  };

  VariantResult res;
  res.name = name;
  for (std::size_t r = 0; r < plan.reps.size(); ++r) {
    const auto train = rows_for(plan.reps[r].train);
    const auto test = rows_for(plan.reps[r].test);
    FeatureMatrix xtr(static_cast<Eigen::Index>(train.size()), features.cols());
    std::vector<double> ytr;
    for (std::size_t i = 0; i < train.size(); ++i) {
      xtr.row(static_cast<Eigen::Index>(i)) = features.row(train[i]);
      ytr.push_back(targets[static_cast<std::size_t>(train[i])]);
    }
    RandomForest forest;
    forest.fit(xtr, ytr, derive_seed(settings.forest_seed, static_cast<std::uint64_t>(r)), settings.forest);
    std::vector<double> yte, pred;
    for (Eigen::Index row : test) {
      const Eigen::VectorXd x = features.row(row).transpose();
      const double p = forest.predict(x);
      pred.push_back(p);
      yte.push_back(targets[static_cast<std::size_t>(row)]);
      res.test_predictions[district_ids[static_cast<std::size_t>(row)]].push_back(p);
    }
    res.pearson.push_back(or_nan([&] { return pearson(pred, yte); }));
    res.spearman.push_back(or_nan([&] { return spearman(pred, yte); }));
    res.r2.push_back(or_nan([&] { return r_squared(yte, pred); }));
  }
  res.summary = {summarize(res.pearson), summarize(res.spearman), summarize(res.r2)};
  return res;
}

bool is_variant(const std::string& name) {
  return std::find(kVariantNames.begin(), kVariantNames.end(), name) != kVariantNames.end();
}

FeatureMatrix variant_features(const CityFeatures& f, const std::string& variant) {
  const auto need = [&](const FeatureMatrix& m, const char* what) {
    if (m.rows() == 0) throw ConfigError(fmt::format("variant '{}' needs the {} checkpoint", variant, what));
    return &m;
  };
  if (variant == "full") return hconcat({need(f.morph, "morph"), need(f.access, "access"), need(f.econ, "econ")});
  if (variant == "noaccess") return hconcat({need(f.morph, "morph"), need(f.econ, "econ")});
  if (variant == "nomorph") return hconcat({need(f.access, "access"), need(f.econ, "econ")});
  if (variant == "noecon") return hconcat({need(f.morph, "morph"), need(f.access, "access")});
  if (variant == "nobackdoor") {
    return hconcat({need(f.morph, "morph"), need(f.access, "access"), need(f.proxy, "q=0 econ")});
  }
  if (variant == "proxy") return hconcat({need(f.proxy, "q=0 econ")});
  if (variant == "econ") return hconcat({need(f.econ, "econ")});
  throw DomainError(fmt::format("unknown variant '{}' (valid: {})", variant, fmt::join(kVariantNames, ", ")));
}

std::vector<VariantResult> ablate(const CityFeatures& f, std::span<const std::string> variants, const SplitPlan& plan,
                                  const EvalSettings& settings) {
  std::vector<VariantResult> out;
  for (const auto& v : variants) {
    out.push_back(evaluate_variant(v, variant_features(f, v), f.targets, f.district_ids, plan, settings));
  }
  return out;
}

std::vector<QuartileRow> quartile_analysis(std::span<const std::int64_t> ids, std::span<const double> y_true,
                                           std::span<const double> y_pred) {
  const std::size_t n = ids.size();
  if (y_true.size() != n || y_pred.size() != n) throw DomainError("quartile_analysis: inputs not aligned");
  if (n < 8) throw DomainError("quartile_analysis: need at least 8 districts");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return y_true[a] != y_true[b] ? y_true[a] < y_true[b] : ids[a] < ids[b];
  });
  const auto q = static_cast<std::size_t>(std::llround(0.25 * static_cast<double>(n)));
  const auto h = static_cast<std::size_t>(std::llround(0.5 * static_cast<double>(n)));
  const auto group = [&](const std::string& name, std::size_t first, std::size_t count) {
    QuartileRow row;
    row.group = name;
    std::vector<double> t, p;
    for (std::size_t k = first; k < first + count; ++k) {
      row.members.push_back(ids[order[k]]);
      t.push_back(y_true[order[k]]);
      p.push_back(y_pred[order[k]]);
    }
    std::sort(row.members.begin(), row.members.end());
    row.pearson = count < 2 ? kNaN : or_nan([&] { return pearson(p, t); });
    return row;
  };
  return {group("bottom25", 0, q), group("bottom50", 0, h), group("top25", n - q, q), group("top50", n - h, h)};
}

MeanPredictions mean_test_predictions(const VariantResult& v, const CityFeatures& f) {
  MeanPredictions out;
  for (std::size_t i = 0; i < f.district_ids.size(); ++i) {
    auto it = v.test_predictions.find(f.district_ids[i]);
    if (it == v.test_predictions.end() || it->second.empty()) continue;
    out.ids.push_back(f.district_ids[i]);
    out.truth.push_back(f.targets[i]);
    out.pred.push_back(std::accumulate(it->second.begin(), it->second.end(), 0.0) / static_cast<double>(it->second.size()));
  }
  return out;
}

PairedComparison compare(const VariantResult& a, const VariantResult& b) {
  std::vector<double> xa, xb;
  for (std::size_t i = 0; i < std::min(a.pearson.size(), b.pearson.size()); ++i) {
    if (std::isfinite(a.pearson[i]) && std::isfinite(b.pearson[i])) {
      xa.push_back(a.pearson[i]);
      xb.push_back(b.pearson[i]);
    }
  }
  PairedComparison c{a.name, b.name, {}, xa.size()};
  if (xa.size() >= 2) {
    c.test = paired_ttest(xa, xb);
  } else {
    c.test.degenerate = true;
    c.test.t = c.test.p = kNaN;
  }
  return c;
}

TransferResult transfer_matrix(std::span<const std::string> cities, const std::vector<std::vector<CityFeatures>>& pooled,
                               std::span<const SplitPlan> plans, const EvalSettings& settings) {
  const std::size_t n = cities.size();
  if (n < 2) throw DomainError("transfer_matrix: need at least 2 cities");
  if (pooled.size() != n || plans.size() != n) throw DomainError("transfer_matrix: inputs not aligned");
  TransferResult res;
  res.cities.assign(cities.begin(), cities.end());
  double sum_full = 0.0, sum_proxy = 0.0;
  std::size_t off = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (pooled[s].size() != n) throw DomainError("transfer_matrix: pooled features must be square");
    for (std::size_t t = 0; t < n; ++t) {
      const CityFeatures& f = pooled[s][t];
      const auto full = evaluate_variant("full", variant_features(f, "full"), f.targets, f.district_ids, plans[t], settings);
      const auto proxy = evaluate_variant("proxy", variant_features(f, "proxy"), f.targets, f.district_ids, plans[t], settings);
      TransferCell cell{cities[s], cities[t], full.summary, proxy.summary, full.summary.pearson.mean,
                        proxy.summary.pearson.mean};
      if (s != t) {
        sum_full += cell.full_pearson;
        sum_proxy += cell.proxy_pearson;
        ++off;
      }
      res.cells.push_back(std::move(cell));
    }
  }
  res.off_diagonal_full = sum_full / static_cast<double>(off);
  res.off_diagonal_proxy = sum_proxy / static_cast<double>(off);
  return res;
}

std::vector<PcaBlock> pca_blocks(const CityFeatures& f) {
  std::vector<PcaBlock> out;
  const std::pair<const char*, const FeatureMatrix*> blocks[] = {
      {"morph", &f.morph}, {"access", &f.access}, {"econ", &f.econ}, {"proxy", &f.proxy}};
  for (const auto& [name, m] : blocks) {
    if (m->rows() < 2) continue;
    out.push_back({name, pca_explained(Eigen::MatrixXd(*m))});
  }
  return out;
}

EvalReport build_report(const CityFeatures& f, std::span<const std::string> variants, const SplitPlan& plan,
                        const EvalSettings& settings, const std::string& config_echo) {
  EvalReport r;
  r.config_echo = config_echo;
  r.warnings = f.warnings;
  r.variants = ablate(f, variants, plan, settings);
  const auto find = [&](const std::string& name) -> const VariantResult* {
    for (const auto& v : r.variants) {
      if (v.name == name) return &v;
    }
    return nullptr;
  };
  if (const auto* full = find("full")) {
    for (const auto& v : r.variants) {
      if (v.name != "full") r.comparisons.push_back(compare(*full, v));
    }
  }
  if (const auto* e = find("econ"); e && find("proxy")) r.comparisons.push_back(compare(*e, *find("proxy")));
  if (f.district_ids.size() >= 8) {
    for (const auto& v : r.variants) {
      const MeanPredictions mp = mean_test_predictions(v, f);
      if (mp.ids.size() >= 8) r.quartiles[v.name] = quartile_analysis(mp.ids, mp.truth, mp.pred);
    }
  }
  r.pca = pca_blocks(f);
  return r;
}

void write_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<csv::Row> rows{{"variant", "repetition", "metric", "value"}};
  const auto emit = [&](const std::string& name, const VariantResult& v) {
    for (std::size_t i = 0; i < v.pearson.size(); ++i) {
      rows.push_back({name, std::to_string(i), "pearson", csv::format_double(v.pearson[i])});
      rows.push_back({name, std::to_string(i), "spearman", csv::format_double(v.spearman[i])});
      rows.push_back({name, std::to_string(i), "r2", csv::format_double(v.r2[i])});
    }
  };
  for (const auto& v : r.variants) emit(v.name, v);
  for (const auto& c : r.components) emit(c.name, c.result);
  csv::write_file(dir / "report.csv", rows);

  std::string md = "# Poverty mapping evaluation\n\n";
  md += "## Variants\n\nMean ± sd over split repetitions (test folds).\n\n";
  md += "| variant | pearson | spearman | r2 | defined reps |\n|---|---|---|---|---|\n";
  const auto table_row = [&](const std::string& name, const VariantResult& v) {
    md += fmt::format("| {} | {} | {} | {} | {} |\n", name, fmt_stats(v.summary.pearson), fmt_stats(v.summary.spearman),
                      fmt_stats(v.summary.r2), v.summary.pearson.defined);
  };
  for (const auto& v : r.variants) table_row(v.name, v);
  if (!r.components.empty()) {
    md += "\n## Component analysis\n\n| variant | pearson | spearman | r2 | defined reps |\n|---|---|---|---|---|\n";
    for (const auto& c : r.components) table_row(c.name, c.result);
  }
  if (!r.comparisons.empty()) {
    md += "\n## Paired t-tests on per-repetition Pearson\n\n| a | b | mean(a-b) | t | p | pairs |\n|---|---|---|---|---|---|\n";
    for (const auto& c : r.comparisons) {
      md += fmt::format("| {} | {} | {} | {} | {} | {}{} |\n", c.a, c.b, fmt_num(c.test.mean_diff), fmt_num(c.test.t, 3),
                        c.test.degenerate ? std::string("degenerate") : fmt::format("{:.3g}", c.test.p), c.pairs,
                        c.test.degenerate ? " (zero spread)" : "");
    }
  }
  if (!r.quartiles.empty()) {
    md += "\n## Quartile analysis\n\nPearson of mean test prediction vs truth within ground-truth groups.\n\n";
    md += "| variant | bottom25 | bottom50 | top25 | top50 |\n|---|---|---|---|---|\n";
    std::vector<svg::Series> series;
    for (const auto& v : r.variants) {
      auto it = r.quartiles.find(v.name);
      if (it == r.quartiles.end()) continue;
      std::vector<double> vals;
      md += "| " + v.name;
      for (const auto& q : it->second) {
        md += " | " + fmt_num(q.pearson);
        vals.push_back(q.pearson);
      }
      md += " |\n";
      series.push_back({v.name, vals});
    }
    write_text(dir / "quartiles.svg",
               svg::bar_chart("Pearson by ground-truth group", {"bottom25", "bottom50", "top25", "top50"}, series,
                              "Pearson"));
  }
  if (!r.pca.empty()) {
    md += "\n## PCA explained variance (district features)\n\n| block | PC1 | PC2 | PC3 | PC1-3 |\n|---|---|---|---|---|\n";
    std::vector<svg::Series> series;
    for (const auto& p : r.pca) {
      const auto at = [&](std::size_t i) { return i < p.ratios.size() ? p.ratios[i] : 0.0; };
      md += fmt::format("| {} | {} | {} | {} | {} |\n", p.block, fmt_num(at(0)), fmt_num(at(1)), fmt_num(at(2)),
                        fmt_num(at(0) + at(1) + at(2)));
      std::vector<double> head(p.ratios.begin(), p.ratios.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(10, p.ratios.size())));
      series.push_back({p.block, head});
    }
    write_text(dir / "pca_scree.svg", svg::line_chart("PCA scree (first 10 components)", series, "component",
                                                       "explained variance ratio"));
  }
  if (!r.variants.empty()) {
    std::vector<std::string> names;
    std::vector<double> p, s, q;
    for (const auto& v : r.variants) {
      names.push_back(v.name);
      p.push_back(v.summary.pearson.mean);
      s.push_back(v.summary.spearman.mean);
      q.push_back(v.summary.r2.mean);
    }
    write_text(dir / "variants.svg", svg::bar_chart("Test metrics by variant", names,
                                                    {{"pearson", p}, {"spearman", s}, {"r2", q}}, "mean over repetitions"));
  }
  if (!r.warnings.empty()) {
    md += "\n## Warnings\n\n";
    for (const auto& w : r.warnings) md += "- " + w + "\n";
  }
  md += "\n## Configuration\n\n```\n" + r.config_echo + "```\n";
  write_text(dir / "summary.md", md);
}

void write_transfer(const TransferResult& t, const std::filesystem::path& dir, const std::string& config_echo) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<csv::Row> rows{{"source", "target", "variant", "pearson_mean", "pearson_sd", "spearman_mean", "r2_mean"}};
  const std::size_t n = t.cities.size();
  std::vector<std::vector<double>> full(n, std::vector<double>(n)), proxy(n, std::vector<double>(n));
  for (std::size_t k = 0; k < t.cells.size(); ++k) {
    const auto& c = t.cells[k];
    for (const auto& [name, m] : {std::pair<const char*, const MetricTriple*>{"full", &c.full}, {"proxy", &c.proxy}}) {
      rows.push_back({c.source, c.target, name, csv::format_double(m->pearson.mean), csv::format_double(m->pearson.sd),
                      csv::format_double(m->spearman.mean), csv::format_double(m->r2.mean)});
    }
    full[k / n][k % n] = c.full_pearson;
    proxy[k / n][k % n] = c.proxy_pearson;
  }
  csv::write_file(dir / "transfer.csv", rows);
  write_text(dir / "transfer_full.svg", svg::heatmap("Transfer Pearson, full model (rows: source)", t.cities, t.cities, full, 0.0, 1.0));
  write_text(dir / "transfer_proxy.svg",
             svg::heatmap("Transfer Pearson, nightlight proxy (rows: source)", t.cities, t.cities, proxy, 0.0, 1.0));
  std::string md = "# Transferability\n\nMean test Pearson; rows are source cities, columns target cities.\n\n";
  for (const auto& [label, mat] : {std::pair<const char*, const std::vector<std::vector<double>>*>{"full", &full},
                                   {"proxy", &proxy}}) {
    md += fmt::format("### {}\n\n| source \\ target |", label);
    for (const auto& c : t.cities) md += " " + c + " |";
    md += "\n|---|";
    for (std::size_t i = 0; i < n; ++i) md += "---|";
    md += "\n";
    for (std::size_t i = 0; i < n; ++i) {
      md += "| " + t.cities[i] + " |";
      for (std::size_t j = 0; j < n; ++j) md += " " + fmt_num((*mat)[i][j]) + " |";
      md += "\n";
    }
    md += "\n";
  }
  md += fmt::format("Mean off-diagonal Pearson: full {}, proxy {}\n", fmt_num(t.off_diagonal_full),
                    fmt_num(t.off_diagonal_proxy));
  md += "\n## Configuration\n\n```\n" + config_echo + "```\n";
  write_text(dir / "transfer.md", md);
}

}  // namespace povmap
