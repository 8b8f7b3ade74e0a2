// Acceptance run: one PASS/FAIL line per criterion. The pipeline criteria
// drive the command-line tool end to end inside --work-dir.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "oracles.hpp"
#include "povmap/backdoor.hpp"
#include "povmap/checkpoint.hpp"
#include "povmap/cli.hpp"
#include "povmap/csv.hpp"
#include "povmap/geoindex.hpp"
#include "povmap/losses.hpp"
#include "povmap/metrics.hpp"
#include "povmap/traitsets.hpp"

namespace fs = std::filesystem;
using namespace povmap;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::mt19937_64 gen(20250117);

double uni(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
int uni_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
double gauss() { return std::normal_distribution<double>(0.0, 1.0)(gen); }

std::vector<double> random_vector(std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = uni(lo, hi);
  return v;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::pair<int, bool>> g_results;
std::ofstream g_log;  // the same lines, kept in the work directory

void report(int n, const std::string& title, const Outcome& o) {
  const auto line = fmt::format("[{}] criterion {}: {}: {}", o.pass ? "PASS" : "FAIL", n, title, o.detail);
  std::printf("%s\n", line.c_str());
  g_log << line << std::endl;
  std::fflush(stdout);
  g_results.emplace_back(n, o.pass);
}

void note(const std::string& s) {
  std::printf("  note: %s\n", s.c_str());
  g_log << "  note: " << s << std::endl;
  std::fflush(stdout);
}

RowMat<double> random_rows(int b, int d) {
  RowMat<double> m(b, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss();
  return m;
}

std::vector<double> flatten(const RowMat<double>& m) { return {m.data(), m.data() + m.size()}; }

RowMat<double> unflatten(const std::vector<double>& v, std::size_t off, int rows, int cols) {
  RowMat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = v[off + static_cast<std::size_t>(i)];
  return m;
}

oracle::Rows to_rows(const RowMat<double>& m) {
  oracle::Rows r(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) r[i].assign(m.row(i).data(), m.row(i).data() + m.cols());
  return r;
}

// ---- criterion 1 ----

Outcome gradient_check() {
  const auto t0 = Clock::now();
  double worst[4] = {0, 0, 0, 0};
  const double lambda = 0.1;
  for (int inst = 0; inst < 100; ++inst) {
    const int b = uni_int(2, 8), d = uni_int(2, 6), k = 4;
    const RowMat<double> img = random_rows(b, d), poi = random_rows(b, d), logits = random_rows(b, k);
    RowMat<double> labels(b, k);
    for (Eigen::Index i = 0; i < labels.size(); ++i) labels.data()[i] = uni_int(0, 1);
    const double log_tau = uni(std::log(0.05), 0.0);

    // contrastive: image rows, POI rows, log temperature
    std::vector<double> x = flatten(img);
    const auto p = flatten(poi);
    x.insert(x.end(), p.begin(), p.end());
    x.push_back(log_tau);
    const auto fc = [&](const std::vector<double>& v) {
      return contrastive_loss(unflatten(v, 0, b, d), unflatten(v, static_cast<std::size_t>(b * d), b, d), v.back()).loss;
    };
    const auto c = contrastive_loss(img, poi, log_tau);
    std::vector<double> an = flatten(c.d_image);
    const auto dp = flatten(c.d_poi);
    an.insert(an.end(), dp.begin(), dp.end());
    an.push_back(c.d_log_tau);
    worst[0] = std::max(worst[0], oracle::vector_rel_err(an, oracle::central_fd(fc, x)));

    // precondition
    const auto fp = [&](const std::vector<double>& v) { return precondition_loss(unflatten(v, 0, b, k), labels).loss; };
    const auto pr = precondition_loss(logits, labels);
    worst[1] = std::max(worst[1], oracle::vector_rel_err(flatten(pr.d_logits), oracle::central_fd(fp, flatten(logits))));

    // combined over every input
    std::vector<double> xc = x;
    const auto lg = flatten(logits);
    xc.insert(xc.end(), lg.begin(), lg.end());
    const std::size_t lo = x.size();
    const auto fcomb = [&](const std::vector<double>& v) {
      const std::vector<double> head(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo));
      return combined_access_loss(fc(head), precondition_loss(unflatten(v, lo, b, k), labels).loss, lambda).value;
    };
    std::vector<double> anc = an;
    for (double g : flatten(pr.d_logits)) anc.push_back(lambda * g);
    worst[2] = std::max(worst[2], oracle::vector_rel_err(anc, oracle::central_fd(fcomb, xc)));

    // Pearson
    const int n = uni_int(3, 32);
    const auto pred = random_vector(static_cast<std::size_t>(n)), tgt = random_vector(static_cast<std::size_t>(n));
    const auto fpe = [&](const std::vector<double>& v) { return pearson_loss(v, tgt).loss; };
    const auto pe = pearson_loss(pred, tgt);
    const std::vector<double> dpe(pe.d_pred.data(), pe.d_pred.data() + pe.d_pred.size());
    worst[3] = std::max(worst[3], oracle::vector_rel_err(dpe, oracle::central_fd(fpe, pred)));
  }
  const double secs = seconds_since(t0);
  const double w = *std::max_element(std::begin(worst), std::end(worst));
  return {w < 1e-6 && secs < 60.0,
          fmt::format("worst relative error contrastive {:.2e}, precondition {:.2e}, combined {:.2e}, pearson {:.2e} "
                      "(limit 1e-6); {:.1f} s (limit 60 s)",
                      worst[0], worst[1], worst[2], worst[3], secs)};
}

// ---- criterion 2 ----

Outcome loss_oracles() {
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const int b = uni_int(1, 16), d = uni_int(1, 8);
    const auto img = random_rows(b, d), poi = random_rows(b, d);
    const double log_tau = uni(std::log(0.05), std::log(2.0));
    const double got = contrastive_loss(img, poi, log_tau).loss;
    const double want = oracle::contrastive(to_rows(img), to_rows(poi), std::exp(log_tau));
    worst = std::max(worst, std::abs(got - want));
  }
  bool single_zero = true;
  for (int inst = 0; inst < 20; ++inst) {
    single_zero = single_zero && contrastive_loss(random_rows(1, 5), random_rows(1, 5), uni(-3, 1)).loss == 0.0;
  }
  double affine = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const auto t = random_vector(static_cast<std::size_t>(uni_int(2, 40)));
    const double a = uni(0.01, 10), c = uni(-5, 5);
    std::vector<double> p;
    for (double v : t) p.push_back(a * v + c);
    affine = std::max(affine, std::abs(pearson_loss(p, t).loss + 1.0));
  }
  return {worst <= 1e-10 && single_zero && affine <= 1e-12,
          fmt::format("contrastive vs brute-force LSE max |diff| {:.2e} (limit 1e-10); B=1 loss exactly 0: {}; "
                      "affine Pearson loss max |L+1| {:.2e} (limit 1e-12)",
                      worst, single_zero ? "yes" : "no", affine)};
}

// ---- criterion 3 ----

Outcome backdoor_oracle() {
  int exact = 0, count_ok = 0, fallback_images = 0;
  const int g = 8;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    const int px = g * uni_int(1, 4);
    const auto img = random_vector(static_cast<std::size_t>(px * px * 3), 0.0, 1.0);
    AttentionMap map{g, random_vector(64, 0.0, 1.0)};
    // Every fourth map concentrates attention so some non-causal patches have no causal neighbour.
    if (trial % 4 == 0) {
      const int centre = uni_int(0, 63);
      for (int i = 0; i < 64; ++i) {
        const int dr = std::abs(i / g - centre / g), dc = std::abs(i % g - centre % g);
        map.scores[i] = 1.0 / (1.0 + dr * dr + dc * dc) + 1e-3 * uni(0, 1);
      }
    }
    const PatchPartition part = partition_patches(map, 0.3);
    std::vector<int> nc;
    for (auto c : part.causal) nc.push_back(c ? 0 : 1);
    const auto want_mask = oracle::bottom_quantile_mask(map.scores, 0.3);
    const auto got = adjust_image<double>(img, px, part);
    const auto want = oracle::backdoor_adjust(img, px, g, want_mask);
    exact += (nc == want_mask && got == want);
    count_ok += part.non_causal_count() == 20;
    bool fb = false;
    for (int i = 0; i < 64 && !fb; ++i) {
      if (!nc[i]) continue;
      bool any = false;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int r = i / g + dr, c = i % g + dc;
          if ((dr || dc) && r >= 0 && c >= 0 && r < g && c < g && !nc[r * g + c]) any = true;
        }
      fb = !any;
    }
    fallback_images += fb;
  }
  return {exact == trials && count_ok == trials && fallback_images > 0,
          fmt::format("{}/{} images bit-exact vs explicit-neighbour oracle; {}/{} with exactly 20 replaced patches; "
                      "{} images exercised the zero-causal-neighbour fallback",
                      exact, trials, count_ok, trials, fallback_images)};
}

// ---- criterion 4 ----

Outcome metric_oracles() {
  double worst = 0.0;
  int checked = 0, tied = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(uni_int(3, 60));
    std::vector<double> x, y;
    if (trial % 2) {
      for (std::size_t i = 0; i < n; ++i) {
        x.push_back(uni_int(0, 6) * 0.5);
        y.push_back(uni_int(0, 4));
      }
    } else {
      x = random_vector(n, -100, 100);
      y = random_vector(n);
    }
    const auto constant = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [&](double a) { return a == v[0]; });
    };
    if (constant(x) || constant(y)) continue;
    ++checked;
    tied += trial % 2;
    worst = std::max(worst, std::abs(pearson(x, y) - static_cast<double>(oracle::hp_pearson(x, y))));
    worst = std::max(worst, std::abs(spearman(x, y) - static_cast<double>(oracle::hp_spearman(x, y))));
    const double r2 = static_cast<double>(oracle::hp_r2(x, y));
    worst = std::max(worst, std::abs(r_squared(x, y) - r2) / std::max(1.0, std::abs(r2)));
    const auto t = paired_ttest(x, y);
    if (!t.degenerate) worst = std::max(worst, std::abs(t.p - static_cast<double>(oracle::hp_paired_ttest(x, y).p)));
  }
  return {worst <= 1e-8 && checked >= 900,
          fmt::format("{} vector pairs ({} with tied ranks); max deviation from 50-digit oracles {:.2e} (limit 1e-8)",
                      checked, tied, worst)};
}

// ---- criterion 9 ----

Outcome geo_oracles() {
  double tile = 0.0, dist = 0.0, area = 0.0, raster = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int z = uni_int(1, 20);
    const std::int64_t n = std::int64_t{1} << z;
    const TileRef t(z, static_cast<std::int64_t>(uni(0, 1) * n), static_cast<std::int64_t>(uni(0, 1) * n));
    const GeoPoint c = tile_center(t);
    const double want_lat = oracle::gudermannian_lat((static_cast<double>(t.y) + 0.5) / static_cast<double>(n));
    const double want_lon = (static_cast<double>(t.x) + 0.5) / static_cast<double>(n) * 360.0 - 180.0;
    tile = std::max({tile, std::abs(c.lat - want_lat), std::abs(c.lon - want_lon)});
  }
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint a(uni(-180, 180), uni(-80, 80)), b(uni(-180, 180), uni(-80, 80));
    const double want = oracle::chord_distance(a.lon, a.lat, b.lon, b.lat);
    dist = std::max(dist, std::abs(geo_distance_m(a, b) - want) / std::max(1.0, want));
  }
  for (int i = 0; i < 200; ++i) {
    const double lon = uni(-170, 170), lat = uni(-60, 60), r = uni(0.001, 0.02);
    std::vector<std::array<double, 2>> raw;
    std::vector<GeoPoint> pts;
    const int k = uni_int(3, 9);
    for (int j = 0; j < k; ++j) {
      const double ang = 2 * oracle::kPi * j / k;
      raw.push_back({lon + r * std::cos(ang), lat + r * std::sin(ang)});
      pts.emplace_back(raw.back()[0], raw.back()[1]);
    }
    const double want = oracle::spherical_area(raw);
    area = std::max(area, std::abs(polygon_area_m2(Polygon(pts)) - want) / want);
  }
  for (int i = 0; i < 20; ++i) {
    const TileRef t(18, 150000 + uni_int(0, 1000), 120000 + uni_int(0, 1000));
    const LonLatBox b = tile_bounds(t);
    NightlightRaster r;
    r.rows = uni_int(1, 9);
    r.cols = uni_int(1, 9);
    const double pw = b.width() * uni(0, 2), ph = b.height() * uni(0, 2);
    r.bounds = {b.lon_min - pw * uni(0, 1), b.lat_min - ph * uni(0, 1), b.lon_max + pw, b.lat_max + ph};
    r.values = random_vector(static_cast<std::size_t>(r.rows * r.cols), 0, 100);
    ImageTile tile;
    tile.tile_id = t.id();
    tile.tile = t;
    const double want = oracle::monte_carlo_mean(gen, b.lon_min, b.lat_min, b.lon_max, b.lat_max, 100000,
                                                 [&](double lon, double lat) {
                                                   const int c = std::min(r.cols - 1, static_cast<int>((lon - r.bounds.lon_min) / r.cell_width()));
                                                   const int row = std::min(r.rows - 1, static_cast<int>((r.bounds.lat_max - lat) / r.cell_height()));
                                                   return r.at(row, c);
                                                 });
    raster = std::max(raster, std::abs(nightlight_intensity(tile, r) - want) / want);
  }
  return {tile <= 1e-9 && dist <= 1e-8 && area <= 1e-3 && raster <= 0.01,
          fmt::format("tile centre vs Gudermannian max {:.1e} deg (limit 1e-9); distance vs chord max rel {:.1e} (limit "
                      "1e-8); polygon area vs spherical excess max rel {:.1e} (limit 1e-3); raster mean vs Monte Carlo "
                      "max rel {:.1e} (limit 1e-2)",
                      tile, dist, area, raster)};
}

// ---- pipeline helpers ----

void run_or_throw(std::vector<std::string> args) {
  std::string line = "povmap";
  for (const auto& a : args) line += " " + a;
  std::printf("  $ %s\n", line.c_str());
  std::fflush(stdout);
  args.insert(args.begin(), "povmap");
  const int code = run_cli(args);
  if (code != 0) throw std::runtime_error(fmt::format("'{}' exited with {}", line, code));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CityRun {
  fs::path bundle, ck;
  double seconds = 0.0;
};

const char* kModels[] = {"morph", "access", "econ", "proxy"};

CityRun prepare_city(const fs::path& work, int seed, bool reuse) {
  CityRun c{work / fmt::format("city{}", seed) / "bundle", work / fmt::format("city{}", seed) / "ck", 0.0};
  bool have = fs::exists(c.bundle / "ledger.csv");
  for (const char* m : kModels) have = have && fs::exists(c.ck / (std::string(m) + ".ckpt"));
  if (reuse && have) {
    note(fmt::format("city {}: reusing bundle and checkpoints from an earlier run", seed));
    return c;
  }
  fs::remove_all(work / fmt::format("city{}", seed));
  const auto t0 = Clock::now();
  const auto s = std::to_string(seed);
  run_or_throw({"synth", "--seed", s, "--out", c.bundle.string(), "--ledger"});
  run_or_throw({"train", "--module", "morph", "--bundle", c.bundle.string(), "--out", c.ck.string(), "--seed", s});
  run_or_throw({"train", "--module", "access", "--bundle", c.bundle.string(), "--out", c.ck.string(), "--seed", s});
  const auto morph = (c.ck / "morph.ckpt").string();
  run_or_throw({"train", "--module", "econ", "--bundle", c.bundle.string(), "--out", c.ck.string(), "--seed", s,
                "--morph-checkpoint", morph});
  run_or_throw({"train", "--module", "econ", "--bundle", c.bundle.string(), "--out", c.ck.string(), "--seed", s,
                "--morph-checkpoint", morph, "--q", "0"});
  c.seconds = seconds_since(t0);
  return c;
}

const std::string kAllVariants = "full,noaccess,nomorph,noecon,nobackdoor,proxy,econ";

// report.csv -> variant -> per-repetition Pearson
std::map<std::string, std::vector<double>> read_pearson(const fs::path& report) {
  std::map<std::string, std::vector<double>> out;
  const auto rows = csv::read_file(report);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][2] == "pearson") out[rows[i][0]].push_back(rows[i][3] == "nan" ? NAN : std::stod(rows[i][3]));
  }
  return out;
}

double finite_mean(const std::vector<double>& v) {
  double s = 0.0;
  int n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  }
  return n ? s / n : NAN;
}

// Diagnostics tied to the trained encoders, printed as notes.
void encoder_notes(const CityRun& c) {
  const CityBundle b = load_bundle(c.bundle);
  const TraitSets sets = build_all(b);
  std::map<std::string, bool> industrial;
  const auto ledger = csv::read_file(c.bundle / "ledger.csv");
  for (std::size_t i = 1; i < ledger.size(); ++i) industrial[ledger[i][0]] = ledger[i][2] == "1";
  std::map<std::string, const ImageTile*> by_id;
  for (const auto& t : b.tiles) by_id[t.tile_id] = &t;

  const Checkpoint morph = load_checkpoint(c.ck / "morph.ckpt");
  const Checkpoint econ = load_checkpoint(c.ck / "econ.ckpt");
  const Checkpoint proxy = load_checkpoint(c.ck / "proxy.ckpt");
  const auto predict = [](const Checkpoint& ck, std::span<const float> px) {
    return static_cast<double>((ck.model.head_w() * ck.model.image.encode(px))(0));
  };

  std::vector<double> fa_pred, fa_true;
  std::vector<ImageTile> tiles;
  for (const auto& s : sets.morph) {
    const ImageTile& t = *by_id.at(s.tile_id);
    tiles.push_back(t);
    fa_pred.push_back(predict(morph, t.pixels<float>()));
    fa_true.push_back(s.log_fa);
  }
  note(fmt::format("morph encoder fit: Pearson(pred, log_fa) over all {} tiles = {:.3f} (reference target 0.8)",
                   tiles.size(), pearson(fa_pred, fa_true)));

  const AdjustedDataset adj = adjust_dataset(tiles, morph.model.image, econ.quantile);
  const int g = morph.model.image.config().grid(), ps = morph.model.image.config().patch_px;
  long bright = 0, bright_nc = 0;
  std::vector<double> res_econ, res_proxy, res_true;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const ImageTile& t = tiles[i];
    if (industrial.at(t.tile_id)) {
      // bright patch: at least half its pixels have every channel >= 0.7
      for (int p = 0; p < g * g; ++p) {
        int lit = 0;
        for (int y = 0; y < ps; ++y)
          for (int x = 0; x < ps; ++x) {
            const std::size_t k = ((static_cast<std::size_t>(p / g) * ps + y) * kTilePx + (p % g) * ps + x) * 3;
            lit += t.levels[k] >= 179 && t.levels[k + 1] >= 179 && t.levels[k + 2] >= 179;
          }
        if (2 * lit >= ps * ps) {
          ++bright;
          bright_nc += adj.partitions[i].causal[p] == 0;
        }
      }
    } else {
      res_econ.push_back(predict(econ, adj.image(t, i)));
      res_proxy.push_back(predict(proxy, t.pixels<float>()));
      res_true.push_back(sets.econ[i].log_ni);
    }
  }
  note(fmt::format("industrial tiles: {} bright patches, {:.1f}% of them non-causal under the morph attention "
                   "(reference target 70%)",
                   bright, bright ? 100.0 * bright_nc / bright : 0.0));
  note(fmt::format("residential tiles (in-sample, training used every tile): Pearson(pred, log_ni) q={} {:.3f} vs "
                   "q=0 {:.3f}",
                   econ.quantile, pearson(res_econ, res_true), pearson(res_proxy, res_true)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work;
  bool reuse = false, strict = false, skip_pipeline = false;
  app.add_option("--work-dir", work, "scratch directory for bundles, checkpoints and reports")->required();
  app.add_flag("--reuse", reuse, "reuse bundles/checkpoints left by an earlier run (runtime then not measured)");
  app.add_flag("--strict", strict, "exit non-zero when any criterion fails");
  app.add_flag("--skip-pipeline", skip_pipeline, "only run the oracle criteria (1-4, 9)");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  const fs::path wd = work;
  g_log.open(wd / "acceptance_results.txt");
  std::printf("acceptance: %d OpenMP thread(s), %d processor(s)\n", omp_get_max_threads(), omp_get_num_procs());

  report(1, "loss gradients vs central differences", gradient_check());
  report(2, "loss oracles", loss_oracles());
  report(3, "backdoor adjustment oracle", backdoor_oracle());
  report(4, "metric oracles", metric_oracles());

  bool pipeline_error = false;
  if (!skip_pipeline) {
    try {
      // 5: seed 7 end to end, timed from synth to report.
      const auto t0 = Clock::now();
      const CityRun c7 = prepare_city(wd, 7, reuse);
      const auto eval_dir = wd / "city7" / "report";
      run_or_throw({"evaluate", "--bundle", c7.bundle.string(), "--checkpoints", c7.ck.string(), "--out",
                    eval_dir.string(), "--variants", kAllVariants});
      const double secs = seconds_since(t0);
      const auto pear = read_pearson(eval_dir / "report.csv");
      const double full = finite_mean(pear.at("full"));
      const bool timed = c7.seconds > 0.0;
      const bool four_cores = omp_get_num_procs() >= 4;
      std::string runtime;
      bool runtime_ok = true;
      if (!timed) {
        runtime = "runtime not measured (--reuse)";
      } else if (four_cores) {
        runtime_ok = secs <= 900.0;
        runtime = fmt::format("runtime {:.1f} min (limit 15 min)", secs / 60.0);
      } else {
        runtime = fmt::format("runtime {:.1f} min on {} processor(s); the 15 min limit is stated for 4 cores and is "
                              "not judged on this host",
                              secs / 60.0, omp_get_num_procs());
      }
      report(5, "end-to-end synthetic recovery (seed 7, 20x100 tiles, confound 0.2, 30 epochs, 50 splits)",
             {full >= 0.80 && runtime_ok, fmt::format("full-model mean test Pearson {:.4f} (target 0.80); {}", full,
                                                      runtime)});
      encoder_notes(c7);

      // 6: ablation ordering with paired t-tests.
      bool ok6 = true;
      std::string d6;
      const auto pair = [&](const std::string& a, const std::string& b) {
        const auto& xa = pear.at(a);
        const auto& xb = pear.at(b);
        std::vector<double> pa, pb;
        for (std::size_t i = 0; i < xa.size(); ++i) {
          if (std::isfinite(xa[i]) && std::isfinite(xb[i])) {
            pa.push_back(xa[i]);
            pb.push_back(xb[i]);
          }
        }
        const double margin = finite_mean(xa) - finite_mean(xb);
        const auto t = paired_ttest(pa, pb);
        ok6 = ok6 && margin >= 0.0;
        d6 += fmt::format("{} - {} = {:+.4f} (t {:.2f}, p {:.3g}); ", a, b, margin, t.t, t.p);
      };
      for (const char* v : {"noaccess", "nomorph", "noecon", "nobackdoor"}) pair("full", v);
      pair("econ", "proxy");
      d6 += "means:";
      for (const auto& [name, v] : pear) d6 += fmt::format(" {} {:.4f}", name, finite_mean(v));
      report(6, "ablation ordering over 50 splits", {ok6, d6});

      // 8: determinism of evaluate and checkpoint round trips.
      const auto again = wd / "city7" / "report_again";
      run_or_throw({"evaluate", "--bundle", c7.bundle.string(), "--checkpoints", c7.ck.string(), "--out",
                    again.string(), "--variants", kAllVariants});
      const bool same_report = slurp(eval_dir / "report.csv") == slurp(again / "report.csv");
      int round_trips = 0;
      for (const char* m : kModels) {
        const auto path = c7.ck / (std::string(m) + ".ckpt");
        const auto resaved = wd / "city7" / (std::string(m) + ".resaved.ckpt");
        save_checkpoint(load_checkpoint(path), resaved);
        round_trips += slurp(path) == slurp(resaved) && serialize_checkpoint(load_checkpoint(resaved)) == slurp(path);
      }
      report(8, "determinism",
             {same_report && round_trips == 4,
              fmt::format("two evaluate runs give byte-identical report.csv: {}; checkpoint save/load/save byte-identical: "
                          "{}/4",
                          same_report ? "yes" : "no", round_trips)});

      // 7: transfer across three cities.
      const CityRun c11 = prepare_city(wd, 11, reuse);
      const CityRun c13 = prepare_city(wd, 13, reuse);
      const auto tdir = wd / "transfer";
      run_or_throw({"transfer", "--bundles", fmt::format("{},{},{}", c7.bundle.string(), c11.bundle.string(), c13.bundle.string()),
                    "--checkpoints", fmt::format("{},{},{}", c7.ck.string(), c11.ck.string(), c13.ck.string()), "--out",
                    tdir.string()});
      const auto rows = csv::read_file(tdir / "transfer.csv");
      double off_full = 0.0, off_proxy = 0.0;
      int nf = 0, np = 0;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i][0] == rows[i][1]) continue;
        const double v = std::stod(rows[i][3]);
        if (rows[i][2] == "full") {
          off_full += v;
          ++nf;
        } else {
          off_proxy += v;
          ++np;
        }
      }
      off_full /= nf;
      off_proxy /= np;
      report(7, "transfer direction (seeds 7, 11, 13)",
             {nf == 6 && np == 6 && off_full >= off_proxy, fmt::format("mean off-diagonal Pearson full {:.4f} vs nightlight proxy {:.4f} over "
                                                 "{} source-target pairs",
                                                 off_full, off_proxy, nf)});
    } catch (const std::exception& e) {
      std::printf("pipeline error: %s\n", e.what());
      pipeline_error = true;
    }
  }

  report(9, "geospatial oracles", geo_oracles());

  std::set<int> failed;
  for (const auto& [n, ok] : g_results) {
    if (!ok) failed.insert(n);
  }
  const auto summary = fmt::format("acceptance summary: {}/{} criteria passed", g_results.size() - failed.size(), g_results.size());
  std::printf("%s\n", summary.c_str());
  g_log << summary << std::endl;
  if (pipeline_error) return 1;
  return strict && !failed.empty() ? 1 : 0;
}
