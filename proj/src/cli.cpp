#include "povmap/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "povmap/checkpoint.hpp"
#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/evalreport.hpp"
#include "povmap/pipeline.hpp"
#include "povmap/rng.hpp"
#include "povmap/synth.hpp"
#include "povmap/traitsets.hpp"

namespace povmap {

namespace fs = std::filesystem;

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "seed",          "epochs",        "learning_rate",  "batch_size", "lambda1",   "q",
      "gamma",         "beta1",         "beta2",          "weight_decay", "adam_eps", "poi_embed_dim",
      "poi_hidden_dim", "poi_categories", "contrastive",   "patch_px",   "embed_dim", "layers",
      "heads",         "mlp_ratio",     "repetitions",    "trees",      "variants"};
  return keys;
}

RunConfig RunConfig::defaults() {
  const TrainConfig t;
  RunConfig c;
  c.values_ = {{"seed", "7"},
               {"epochs", std::to_string(t.epochs)},
               {"learning_rate", csv::format_double(t.learning_rate)},
               {"batch_size", std::to_string(t.batch_size)},
               {"lambda1", csv::format_double(t.lambda1)},
               {"q", csv::format_double(t.quantile)},
               {"gamma", csv::format_double(t.radius_m)},
               {"beta1", csv::format_double(t.beta1)},
               {"beta2", csv::format_double(t.beta2)},
               {"weight_decay", csv::format_double(t.weight_decay)},
               {"adam_eps", csv::format_double(t.adam_eps)},
               {"poi_embed_dim", std::to_string(t.poi_embed_dim)},
               {"poi_hidden_dim", std::to_string(t.poi_hidden_dim)},
               {"poi_categories", "hospital,school,townhall,bank"},
               {"contrastive", "1"},
               {"patch_px", std::to_string(t.encoder.patch_px)},
               {"embed_dim", std::to_string(t.encoder.embed_dim)},
               {"layers", std::to_string(t.encoder.layers)},
               {"heads", std::to_string(t.encoder.heads)},
               {"mlp_ratio", std::to_string(t.encoder.mlp_ratio)},
               {"repetitions", std::to_string(kDefaultRepetitions)},
               {"trees", "50"},
               {"variants", "full,noaccess,nomorph,noecon,nobackdoor,proxy"}};
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw ConfigError(fmt::format("unknown config key '{}' (known: {})", key, fmt::join(keys, ", ")));
  }
  values_[key] = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected key=value", path, lineno));
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key " + key);
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return csv::parse_double(get(key), key);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

long long RunConfig::get_int(const std::string& key) const {
  try {
    return csv::parse_int(get(key), key);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

namespace {

TrainConfig train_config(const RunConfig& rc) {
  TrainConfig t;
  t.seed = static_cast<std::uint64_t>(rc.get_int("seed"));
  t.epochs = static_cast<int>(rc.get_int("epochs"));
  t.learning_rate = rc.get_double("learning_rate");
  t.batch_size = static_cast<int>(rc.get_int("batch_size"));
  t.lambda1 = rc.get_double("lambda1");
  t.quantile = rc.get_double("q");
  t.radius_m = rc.get_double("gamma");
  t.beta1 = rc.get_double("beta1");
  t.beta2 = rc.get_double("beta2");
  t.weight_decay = rc.get_double("weight_decay");
  t.adam_eps = rc.get_double("adam_eps");
  t.poi_embed_dim = static_cast<int>(rc.get_int("poi_embed_dim"));
  t.poi_hidden_dim = static_cast<int>(rc.get_int("poi_hidden_dim"));
  t.active_categories.fill(false);
  std::stringstream ss(rc.get("poi_categories"));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      t.active_categories[static_cast<std::size_t>(parse_poi_category(item))] = true;
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
  }
  const std::string& c = rc.get("contrastive");
  if (c != "0" && c != "1") throw ConfigError("contrastive must be 0 or 1");
  t.use_contrastive = c == "1";
  t.encoder.patch_px = static_cast<int>(rc.get_int("patch_px"));
  t.encoder.embed_dim = static_cast<int>(rc.get_int("embed_dim"));
  t.encoder.layers = static_cast<int>(rc.get_int("layers"));
  t.encoder.heads = static_cast<int>(rc.get_int("heads"));
  t.encoder.mlp_ratio = static_cast<int>(rc.get_int("mlp_ratio"));
  t.validate();
  return t;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void say(const std::string& s) { std::cerr << s << '\n'; }

// Options shared by the commands that read a RunConfig.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* cmd, const std::vector<std::pair<std::string, std::string>>& flags) {
    cmd->add_option("--config", file, "key=value config file ('#' comments)");
    for (const auto& [flag, key] : flags) {
      cmd->add_option_function<std::string>(
          "--" + flag, [this, key = key](const std::string& v) { overrides[key] = v; },
          fmt::format("override config key '{}'", key));
    }
  }
  RunConfig resolve() const {
    RunConfig rc = RunConfig::defaults();
    if (!file.empty()) rc.load_file(file);
    for (const auto& [k, v] : overrides) rc.set(k, v);
    return rc;
  }
};

const std::vector<std::pair<std::string, std::string>> kTrainFlags = {
    {"seed", "seed"},   {"epochs", "epochs"},       {"lr", "learning_rate"}, {"batch-size", "batch_size"},
    {"lambda1", "lambda1"}, {"q", "q"},             {"gamma", "gamma"},      {"poi-categories", "poi_categories"},
    {"contrastive", "contrastive"}};

const char* kCheckpointNames[] = {"morph", "access", "econ", "proxy"};

ModelSet load_models(const fs::path& dir) {
  ModelSet m;
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
  for (const char* name : kCheckpointNames) {
    const fs::path p = dir / (std::string(name) + ".ckpt");
    if (!fs::exists(p)) continue;
    Checkpoint ck = load_checkpoint(p);
    const std::string want = std::string(name) == "proxy" ? "econ" : name;
    if (to_string(ck.tag) != want) throw ConfigError(p.string() + " holds a " + std::string(to_string(ck.tag)) + " checkpoint");
    if (std::string(name) == "morph") m.morph = std::move(ck);
    if (std::string(name) == "access") m.access = std::move(ck);
    if (std::string(name) == "econ") m.econ = std::move(ck);
    if (std::string(name) == "proxy") m.proxy = std::move(ck);
  }
  return m;
}

void save_models(const ModelSet& m, const fs::path& dir) {
  fs::create_directories(dir);
  if (m.morph) save_checkpoint(*m.morph, dir / "morph.ckpt");
  if (m.access) save_checkpoint(*m.access, dir / "access.ckpt");
  if (m.econ) save_checkpoint(*m.econ, dir / "econ.ckpt");
  if (m.proxy) save_checkpoint(*m.proxy, dir / "proxy.ckpt");
}

void write_features_csv(const CityFeatures& f, const fs::path& path) {
  std::vector<csv::Row> rows;
  csv::Row header{"district_id", "n_tiles", "headcount"};
  const std::pair<const char*, const FeatureMatrix*> blocks[] = {
      {"morph", &f.morph}, {"access", &f.access}, {"econ", &f.econ}, {"proxy", &f.proxy}};
  for (const auto& [name, m] : blocks) {
    for (Eigen::Index c = 0; c < m->cols(); ++c) header.push_back(fmt::format("{}_{}", name, c));
  }
  rows.push_back(header);
  for (std::size_t i = 0; i < f.district_ids.size(); ++i) {
    csv::Row r{std::to_string(f.district_ids[i]), std::to_string(f.n_tiles[i]), csv::format_double(f.targets[i])};
    for (const auto& [name, m] : blocks) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) r.push_back(csv::format_double((*m)(static_cast<Eigen::Index>(i), c)));
    }
    rows.push_back(std::move(r));
  }
  csv::write_file(path, rows);
}

EvalSettings eval_settings(const RunConfig& rc) {
  EvalSettings s;
  s.forest_seed = derive_seed(static_cast<std::uint64_t>(rc.get_int("seed")), "forest");
  s.forest.n_trees = static_cast<int>(rc.get_int("trees"));
  if (s.forest.n_trees < 1) throw ConfigError("trees must be positive");
  return s;
}

SplitPlan plan_for(const CityFeatures& f, const RunConfig& rc) {
  const auto reps = rc.get_int("repetitions");
  if (reps < 1) throw ConfigError("repetitions must be positive");
  return make_splits(f.district_ids, derive_seed(static_cast<std::uint64_t>(rc.get_int("seed")), "splits"),
                     static_cast<int>(reps));
}

int cmd_synth(const SynthParams& p, const fs::path& out, bool ledger) {
  const SynthCity city = synth_city(p);
  write_bundle(city.bundle, out);
  if (ledger) write_ledger(city, out);
  say(fmt::format("wrote {} tiles, {} districts, {} POIs, {} buildings to {}", city.bundle.tiles.size(),
                  city.bundle.districts.size(), city.bundle.pois.size(), city.bundle.buildings.size(), out.string()));
  return kExitOk;
}

int cmd_build(const fs::path& bundle, double gamma, const fs::path& out) {
  const CityBundle b = load_bundle(bundle);
  const TraitSets sets = build_all(b, gamma);
  fs::create_directories(out);
  write_trait_csvs(sets, out);
  say(fmt::format("wrote {} samples per dataset to {}", sets.access.size(), out.string()));
  return kExitOk;
}

int cmd_train(const std::string& module, const fs::path& bundle, const RunConfig& rc, const fs::path& out,
              const std::string& morph_ck, const std::string& resume, std::string name) {
  const ModuleTag tag = parse_module_tag(module);
  const TrainConfig cfg = train_config(rc);
  const CityBundle b = load_bundle(bundle);
  const TraitSets sets = build_all(b, cfg.radius_m);
  std::optional<Checkpoint> resume_ck;
  if (!resume.empty()) resume_ck = load_checkpoint(resume);
  TrainOptions opts;
  opts.resume = resume_ck ? &*resume_ck : nullptr;
  const bool proxy_mode = tag == ModuleTag::kEcon && cfg.quantile == 0.0;
  if (name.empty()) name = proxy_mode ? "proxy" : module;

  TrainResult res = [&] {
    switch (tag) {
      case ModuleTag::kAccess: return train_access(b.tiles, sets.access, cfg, opts);
      case ModuleTag::kMorph: return train_morph(b.tiles, sets.morph, cfg, opts);
      case ModuleTag::kEcon: {
        if (morph_ck.empty()) throw ConfigError("econ training requires --morph-checkpoint");
        const Checkpoint morph = load_checkpoint(morph_ck);
        return train_econ(b.tiles, sets.econ, &morph, cfg, opts);
      }
    }
    throw DomainError("unknown module");
  }();
  for (const auto& w : res.warnings) say("warning: " + w);
  fs::create_directories(out);
  save_checkpoint(res.checkpoint, out / (name + ".ckpt"));
  std::string note = fmt::format("module={} config_hash={:016x}", module, res.checkpoint.config_hash);
  if (proxy_mode) note = "nightlight-proxy mode (q=0, no backdoor adjustment); " + note;
  write_train_log(res, out / (name + "_log.csv"), note);
  say(fmt::format("{}: {} steps, checkpoint {}", module, res.checkpoint.step, (out / (name + ".ckpt")).string()));
  return kExitOk;
}

int cmd_evaluate(const fs::path& bundle, const fs::path& ck_dir, const RunConfig& rc, const fs::path& out,
                 const std::string& access_variants) {
  const auto variants = split_list(rc.get("variants"));
  if (variants.empty()) throw ConfigError("no variants requested");
  for (const auto& v : variants) {
    if (!is_variant(v)) throw ConfigError(fmt::format("unknown variant '{}' (valid: {})", v, fmt::join(kVariantNames, ", ")));
  }
  const CityBundle b = load_bundle(bundle);
  const ModelSet models = load_models(ck_dir);
  const CityEmbeddings emb = embed_city(b, models);
  const CityFeatures f = pool_city(b, emb);
  for (const auto& w : f.warnings) say("warning: " + w);
  const SplitPlan plan = plan_for(f, rc);
  const EvalSettings settings = eval_settings(rc);

  std::string echo = rc.echo();
  echo += "bundle=" + bundle.string() + "\ncheckpoints=" + ck_dir.string() + "\n";
  EvalReport report = build_report(f, variants, plan, settings, echo);

  for (const auto& spec : split_list(access_variants)) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--access-variants expects name=checkpoint entries");
    ModelSet alt;
    alt.access = load_checkpoint(spec.substr(eq + 1));
    if (alt.access->tag != ModuleTag::kAccess) throw ConfigError(spec.substr(eq + 1) + " is not an access checkpoint");
    CityFeatures g = f;
    g.access = pool_city(b, embed_city(b, alt)).access;
    report.components.push_back({spec.substr(0, eq), evaluate_variant(spec.substr(0, eq), variant_features(g, "full"),
                                                                       g.targets, g.district_ids, plan, settings)});
  }

  write_report(report, out);
  write_features_csv(f, out / "features.csv");
  if (std::find(variants.begin(), variants.end(), "full") != variants.end()) {
    RandomForest forest;
    forest.fit(variant_features(f, "full"), f.targets, settings.forest_seed, settings.forest);
    write_forest_csv(forest, out / "forest_full.csv");
  }
  for (const auto& v : report.variants) {
    say(fmt::format("{:<11} pearson {:.4f} ± {:.4f}  spearman {:.4f}  r2 {:.4f}", v.name, v.summary.pearson.mean,
                    v.summary.pearson.sd, v.summary.spearman.mean, v.summary.r2.mean));
  }
  return kExitOk;
}

// Shortest trailing path suffixes that tell the bundles apart ("city7/bundle").
std::vector<std::string> city_labels(const std::vector<std::string>& bundles) {
  std::vector<std::vector<std::string>> parts;
  for (const auto& b : bundles) {
    std::vector<std::string> comps;
    for (const auto& c : fs::path(b).lexically_normal()) {
      if (!c.empty() && c != "/") comps.push_back(c.string());
    }
    if (comps.empty()) comps.push_back(b);
    parts.push_back(comps);
  }
  std::size_t depth = 1;
  while (true) {
    std::vector<std::string> labels;
    bool longer = false;
    for (const auto& comps : parts) {
      const std::size_t k = std::min(depth, comps.size());
      longer = longer || comps.size() > depth;
      std::string label;
      for (std::size_t i = comps.size() - k; i < comps.size(); ++i) label += (label.empty() ? "" : "/") + comps[i];
      labels.push_back(label);
    }
    const std::set<std::string> distinct(labels.begin(), labels.end());
    if (distinct.size() == labels.size()) return labels;
    if (!longer) throw ConfigError("transfer: bundle paths are not distinct");
    ++depth;
  }
}

int cmd_transfer(const std::vector<std::string>& bundles, const std::vector<std::string>& ck_dirs, const RunConfig& rc,
                 const fs::path& out) {
  if (bundles.size() < 2) throw ConfigError("transfer needs at least 2 bundles");
  if (!ck_dirs.empty() && ck_dirs.size() != bundles.size()) {
    throw ConfigError("--checkpoints must list one directory per bundle");
  }
  const TrainConfig cfg = train_config(rc);
  std::vector<ModelSet> models;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (!ck_dirs.empty()) {
      models.push_back(load_models(ck_dirs[i]));
      continue;
    }
    say("training encoders on " + bundles[i]);
    const CityBundle b = load_bundle(bundles[i]);
    const TraitSets sets = build_all(b, cfg.radius_m);
    models.push_back(train_city(b, sets, {cfg, true, say}));
    save_models(models.back(), out / "checkpoints" / fs::path(bundles[i]).filename());
  }
  const std::size_t n = bundles.size();
  std::vector<std::vector<CityFeatures>> pooled(n, std::vector<CityFeatures>(n));
  std::vector<SplitPlan> plans;
  for (std::size_t t = 0; t < n; ++t) {
    const CityBundle b = load_bundle(bundles[t]);
    for (std::size_t s = 0; s < n; ++s) pooled[s][t] = pool_city(b, embed_city(b, models[s]));
    plans.push_back(plan_for(pooled[t][t], rc));
  }
  const std::vector<std::string> names = city_labels(bundles);
  const TransferResult tr = transfer_matrix(names, pooled, plans, eval_settings(rc));
  write_transfer(tr, out, rc.echo() + "bundles=" + fmt::format("{}", fmt::join(bundles, ",")) + "\n");
  say(fmt::format("mean off-diagonal pearson: full {:.4f}, proxy {:.4f}", tr.off_diagonal_full, tr.off_diagonal_proxy));
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Multidimensional poverty mapping from tile imagery, POIs, footprints and nightlights"};
  app.require_subcommand(1);

  SynthParams sp;
  std::string synth_out;
  bool ledger = false;
  auto* synth = app.add_subcommand("synth", "generate a synthetic city bundle");
  synth->add_option("--seed", sp.seed, "random seed")->capture_default_str();
  synth->add_option("--districts", sp.n_districts, "number of districts")->capture_default_str();
  synth->add_option("--tiles-per-district", sp.tiles_per_district, "tiles per district")->capture_default_str();
  synth->add_option("--confound", sp.confound_fraction, "fraction of bright industrial tiles, in [0,1)")->capture_default_str();
  synth->add_option("--out", synth_out, "output bundle directory")->required();
  synth->add_flag("--ledger", ledger, "also write the generator's ground-truth ledger");

  std::string build_bundle, build_out;
  double build_gamma = kDefaultRadiusM;
  auto* build = app.add_subcommand("build", "write the trait sample tables of a bundle");
  build->add_option("--bundle", build_bundle, "bundle directory")->required();
  build->add_option("--gamma", build_gamma, "POI radius in metres")->capture_default_str();
  build->add_option("--out", build_out, "output directory")->required();

  std::string tr_module, tr_bundle, tr_out, tr_morph, tr_resume, tr_name;
  ConfigFlags tr_cfg;
  auto* train = app.add_subcommand("train", "train one trait encoder");
  train->add_option("--module", tr_module, "access, morph or econ")->required();
  train->add_option("--bundle", tr_bundle, "bundle directory")->required();
  train->add_option("--out", tr_out, "output directory")->required();
  train->add_option("--morph-checkpoint", tr_morph, "morph checkpoint (required for econ)");
  train->add_option("--resume", tr_resume, "continue from a checkpoint trained with the same config");
  train->add_option("--name", tr_name, "checkpoint base name (default: module, or proxy for econ with q=0)");
  tr_cfg.attach(train, kTrainFlags);

  std::string ev_bundle, ev_ck, ev_out, ev_access;
  ConfigFlags ev_cfg;
  auto* evaluate = app.add_subcommand("evaluate", "pool district features and run the split protocol");
  evaluate->add_option("--bundle", ev_bundle, "bundle directory")->required();
  evaluate->add_option("--checkpoints", ev_ck, "directory with morph/access/econ/proxy .ckpt files")->required();
  evaluate->add_option("--out", ev_out, "report directory")->required();
  evaluate->add_option("--access-variants", ev_access, "extra rows: name=access.ckpt,... (component analysis)");
  ev_cfg.attach(evaluate, {{"seed", "seed"}, {"variants", "variants"}, {"repetitions", "repetitions"}, {"trees", "trees"}});

  std::string tf_bundles, tf_ck, tf_out;
  ConfigFlags tf_cfg;
  auto* transfer = app.add_subcommand("transfer", "cross-city transferability matrix");
  transfer->add_option("--bundles", tf_bundles, "comma-separated bundle directories")->required();
  transfer->add_option("--checkpoints", tf_ck, "comma-separated checkpoint directories, one per bundle (trains if absent)");
  transfer->add_option("--out", tf_out, "output directory")->required();
  {
    auto flags = kTrainFlags;
    flags.push_back({"repetitions", "repetitions"});
    flags.push_back({"trees", "trees"});
    tf_cfg.attach(transfer, flags);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) {
      if (!(sp.confound_fraction >= 0.0 && sp.confound_fraction < 1.0)) {
        throw ConfigError(fmt::format("--confound must lie in [0, 1), got {}", sp.confound_fraction));
      }
      return cmd_synth(sp, synth_out, ledger);
    }
    if (*build) return cmd_build(build_bundle, build_gamma, build_out);
    if (*train) return cmd_train(tr_module, tr_bundle, tr_cfg.resolve(), tr_out, tr_morph, tr_resume, tr_name);
    if (*evaluate) return cmd_evaluate(ev_bundle, ev_ck, ev_cfg.resolve(), ev_out, ev_access);
    if (*transfer) return cmd_transfer(split_list(tf_bundles), split_list(tf_ck), tf_cfg.resolve(), tf_out);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const UndefinedMetricError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitIo;
  } catch (const DatasetError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace povmap
