#include "povmap/pipeline.hpp"

#include <map>

#include <fmt/format.h>

#include "povmap/error.hpp"

namespace povmap {

CityEmbeddings embed_city(const CityBundle& bundle, const ModelSet& models) {
  CityEmbeddings out;
  for (const auto& t : bundle.tiles) out.tile_ids.push_back(t.tile_id);
  if (models.morph) out.morph = encode_tiles(models.morph->model.image, bundle.tiles);
  if (models.access) out.access = encode_tiles(models.access->model.image, bundle.tiles);
  const auto econ_block = [&](const Checkpoint& ck) {
    if (ck.quantile <= 0.0) return encode_tiles(ck.model.image, bundle.tiles);
    if (!models.morph) throw ConfigError("an adjusted economic encoder needs the morphological checkpoint");
    const AdjustedDataset adj = adjust_dataset(bundle.tiles, models.morph->model.image, ck.quantile);
    return encode_tiles(ck.model.image, bundle.tiles, &adj);
  };
  if (models.econ) out.econ = econ_block(*models.econ);
  if (models.proxy) out.proxy = econ_block(*models.proxy);
  return out;
}

CityFeatures pool_city(const CityBundle& bundle, const CityEmbeddings& emb) {
  std::map<std::int64_t, std::vector<Eigen::Index>> rows;
  for (const auto& d : bundle.districts) rows[d.district_id];
  for (std::size_t i = 0; i < bundle.tiles.size(); ++i) {
    const auto& did = bundle.tiles[i].district_id;
    if (did) rows[*did].push_back(static_cast<Eigen::Index>(i));
  }
  CityFeatures out;
  const auto gather = [](const FeatureMatrix& m, const std::vector<Eigen::Index>& idx) {
    FeatureMatrix g(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) g.row(static_cast<Eigen::Index>(k)) = m.row(idx[k]);
    return g;
  };
  std::vector<Eigen::VectorXd> fm, fa, fe, fp;
  for (const auto& [id, idx] : rows) {
    const DistrictRecord* rec = bundle.find_district(id);
    if (rec == nullptr) continue;
    if (idx.empty()) {
      out.warnings.push_back(fmt::format("district {} has no tiles and is excluded", id));
      continue;
    }
    out.district_ids.push_back(id);
    out.targets.push_back(static_cast<double>(poverty_headcount(*rec)));
    out.n_tiles.push_back(idx.size());
    const auto block = [&](const FeatureMatrix& m, std::vector<Eigen::VectorXd>& dst) {
      if (m.rows() == 0) return;
      const FeatureMatrix g = gather(m, idx);
      dst.push_back(pool_district(id, g, FeatureMatrix(g.rows(), 0), FeatureMatrix(g.rows(), 0)).r);
    };
    block(emb.morph, fm);
    block(emb.access, fa);
    block(emb.econ, fe);
    block(emb.proxy, fp);
  }
  const auto stack = [](const std::vector<Eigen::VectorXd>& v) {
    if (v.empty()) return FeatureMatrix();
    FeatureMatrix m(static_cast<Eigen::Index>(v.size()), v.front().size());
    for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return m;
  };
  out.morph = stack(fm);
  out.access = stack(fa);
  out.econ = stack(fe);
  out.proxy = stack(fp);
  return out;
}

ModelSet train_city(const CityBundle& bundle, const TraitSets& sets, const TrainPlan& plan) {
  const auto say = [&](const std::string& s) {
    if (plan.log) plan.log(s);
  };
  ModelSet m;
  const auto finish = [&](TrainResult r, const char* name) {
    for (const auto& w : r.warnings) say(w);
    const double first = r.log.empty() ? 0.0 : r.log.front().loss;
    const double last = r.log.empty() ? 0.0 : r.log.back().loss;
    say(fmt::format("{}: {} steps, loss {:.4f} -> {:.4f}, {:.1f}s", name, r.checkpoint.step, first, last,
                    r.log.empty() ? 0.0 : r.log.back().seconds));
    return std::move(r.checkpoint);
  };
  m.morph = finish(train_morph(bundle.tiles, sets.morph, plan.config), "morph");
  m.access = finish(train_access(bundle.tiles, sets.access, plan.config), "access");
  m.econ = finish(train_econ(bundle.tiles, sets.econ, &*m.morph, plan.config), "econ");
  if (plan.with_proxy) {
    TrainConfig q0 = plan.config;
    q0.quantile = 0.0;
    m.proxy = finish(train_econ(bundle.tiles, sets.econ, &*m.morph, q0), "econ (nightlight-proxy mode)");
  }
  return m;
}

}  // namespace povmap
