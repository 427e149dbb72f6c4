#include "fingerloc/cascade.hpp"

#include "fingerloc/eval.hpp"
#include "fingerloc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fingerloc::cascade {

namespace {

void check_compatible(const CascadeModel& model, const dataset::Measurement& m) {
  const auto& f = model.frequency;
  const bool same_grid = static_cast<int>(m.ctf.values.size()) == f.n_points &&
                         std::abs(m.ctf.grid.center_hz - f.center_hz) <= 1e-6 * f.center_hz &&
                         std::abs(m.ctf.grid.span_hz - f.span_hz) <= 1e-6 * f.span_hz;
  if (!same_grid)
    throw DataError("measurement frequency grid (" + std::to_string(m.ctf.values.size()) +
                    " points) does not match the model's (" + std::to_string(f.n_points) + " points)");
}

} // namespace

features::FeatureKind Policy::kind_for(Environment env) const {
  auto it = stage2.find(env);
  if (it == stage2.end())
    throw std::out_of_range("policy has no entry for " + std::string(to_string(env)));
  return it->second;
}

void Policy::apply_overrides(std::string_view text) {
  for (auto item : split_fields(text, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("policy override '" + std::string(item) + "' is not Env=KIND");
    auto env = parse_environment(trim(item.substr(0, eq)));
    if (!env)
      throw std::invalid_argument("policy override names unknown environment '" +
                                  std::string(trim(item.substr(0, eq))) + "'");
    stage2[*env] = features::feature_kind_from_string(trim(item.substr(eq + 1)));
  }
}

KeyValueFile Policy::to_kv() const {
  KeyValueFile kv;
  kv.set("stage1_kind", std::string(features::to_string(stage1_kind)));
  for (const auto& [env, kind] : stage2)
    kv.set("stage2." + std::string(to_string(env)), std::string(features::to_string(kind)));
  return kv;
}

Policy Policy::from_kv(const KeyValueFile& kv) {
  Policy p;
  try {
    if (auto s = kv.get("stage1_kind")) p.stage1_kind = features::feature_kind_from_string(*s);
    for (const auto& name : kv.keys_under("stage2"))
      p.stage2[environment_from_string(name)] =
          features::feature_kind_from_string(kv.require("stage2." + name));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("policy: ") + e.what());
  }
  return p;
}

dataset::MeasurementSet pool(const EnvironmentSets& sets) {
  if (sets.empty()) throw std::invalid_argument("no environments to pool");
  auto out = sets.begin()->second.shell();
  out.environment.reset();
  out.geometry.reset();
  out.provenance = "pooled";
  for (const auto& [env, set] : sets)
    out.measurements.insert(out.measurements.end(), set.measurements.begin(), set.measurements.end());
  return out;
}

knn::FingerprintModel build_stage2_model(const dataset::MeasurementSet& train,
                                         features::FeatureKind kind, const CascadeConfig& config) {
  return knn::FingerprintModel::fit(train, kind, config.repr, config.scaling);
}

CascadeModel fit(const EnvironmentSets& train, const Policy& policy, const CascadeConfig& config) {
  if (train.empty()) throw std::invalid_argument("cascade needs at least one environment");
  for (const auto& [env, set] : train) {
    if (set.empty())
      throw std::invalid_argument("training set for " + std::string(to_string(env)) + " is empty");
    if (!policy.stage2.contains(env))
      throw std::invalid_argument("policy has no entry for " + std::string(to_string(env)));
  }

  const auto pooled = pool(train);
  auto stage1 = knn::FingerprintModel::fit(pooled, policy.stage1_kind, config.repr, config.scaling);

  std::vector<Environment> envs;
  for (const auto& [env, set] : train) envs.push_back(env);
  std::vector<std::optional<knn::FingerprintModel>> built(envs.size());
  parallel_for(envs.size(), config.threads, [&](std::size_t i) {
    built[i] = build_stage2_model(train.at(envs[i]), policy.kind_for(envs[i]), config);
  });

  std::map<Environment, knn::FingerprintModel> stage2;
  for (std::size_t i = 0; i < envs.size(); ++i) stage2.emplace(envs[i], std::move(*built[i]));

  Policy kept = policy;
  std::erase_if(kept.stage2, [&](const auto& e) { return !train.contains(e.first); });
  return CascadeModel{std::move(stage1), std::move(stage2), std::move(kept), config,
                      pooled.frequency};
}

PolicyFit fit_policy(const EnvironmentSets& train, const EnvironmentSets& validation,
                     std::span<const features::FeatureKind> candidates, const CascadeConfig& config,
                     features::FeatureKind stage1_kind) {
  if (candidates.empty()) throw std::invalid_argument("fit_policy needs at least one candidate kind");
  if (train.empty()) throw std::invalid_argument("fit_policy needs at least one environment");

  PolicyFit out;
  out.policy.stage1_kind = stage1_kind;
  for (const auto& [env, train_set] : train) {
    auto vit = validation.find(env);
    if (vit == validation.end() || vit->second.empty())
      throw std::invalid_argument("no validation data for " + std::string(to_string(env)));
    const auto& val = vit->second;

    std::vector<double> scores(candidates.size());
    parallel_for(candidates.size(), config.threads, [&](std::size_t c) {
      const auto model = build_stage2_model(train_set, candidates[c], config);
      std::vector<Point2> est;
      std::vector<Point2> truth;
      for (const auto& m : val.measurements) {
        est.push_back(knn::locate(model, model.query_for(m), config.stage2));
        truth.push_back(m.position);
      }
      scores[c] = eval::rmse(est, truth);
    });

    std::size_t best = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      out.validation_rmse[env][candidates[c]] = scores[c];
      if (c == best) continue;
      const auto key = [&](std::size_t i) {
        return std::tuple(scores[i], features::block_count(candidates[i]),
                          static_cast<int>(candidates[i]));
      };
      if (key(c) < key(best)) best = c;
    }
    out.policy.stage2[env] = candidates[best];
  }
  return out;
}

LocalizationResult localize(const CascadeModel& model, const dataset::Measurement& m,
                            std::optional<Environment> forced_env) {
  check_compatible(model, m);
  LocalizationResult out;
  if (forced_env) {
    out.predicted_env = *forced_env;
  } else {
    const auto q1 = model.stage1.query_for(m);
    out.stage1_neighbors = knn::nearest(model.stage1, q1, model.config.stage1.k);
    out.predicted_env = knn::vote(model.stage1, out.stage1_neighbors);
  }
  auto it = model.stage2.find(out.predicted_env);
  if (it == model.stage2.end())
    throw std::logic_error("no stage-2 model for predicted environment " +
                           std::string(to_string(out.predicted_env)));
  const auto& stage2 = it->second;
  const auto q2 = stage2.query_for(m);
  out.stage2_neighbors = knn::nearest(stage2, q2, model.config.stage2.k);
  out.position_cm =
      knn::aggregate_position(stage2, out.stage2_neighbors, model.config.stage2.distance_weighted);
  return out;
}

void CascadeModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  KeyValueFile meta;
  meta.set("frequency.center_hz", frequency.center_hz);
  meta.set("frequency.span_hz", frequency.span_hz);
  meta.set("frequency.points", frequency.n_points);
  meta.set("repr", std::string(features::to_string(config.repr.mode)));
  meta.set("scalar_bin", config.repr.scalar_bin ? std::to_string(*config.repr.scalar_bin)
                                                : std::string("center"));
  meta.set("max_lag", config.repr.max_lag);
  meta.set("scaling", std::string(features::to_string(config.scaling)));
  meta.set("k1", config.stage1.k);
  meta.set("k2", config.stage2.k);
  meta.set("weighted", std::string(config.stage2.distance_weighted ? "true" : "false"));
  meta.save(dir / "model.ini");
  policy.to_kv().save(dir / "policy.ini");
  stage1.save(dir / "stage1.csv");
  for (const auto& [env, m] : stage2)
    m.save(dir / ("stage2_" + std::string(to_string(env)) + ".csv"));
}

CascadeModel CascadeModel::load(const std::filesystem::path& dir) {
  const auto meta = KeyValueFile::load(dir / "model.ini");
  auto policy = Policy::from_kv(KeyValueFile::load(dir / "policy.ini"));

  CascadeConfig config;
  try {
    config.repr.mode = features::repr_mode_from_string(meta.require("repr"));
    config.scaling = features::scaling_from_string(meta.require("scaling"));
  } catch (const std::invalid_argument& e) {
    throw DataError((dir / "model.ini").string() + ": " + e.what());
  }
  if (auto bin = meta.require("scalar_bin"); bin != "center") {
    auto b = parse_int(bin);
    if (!b) throw DataError((dir / "model.ini").string() + ": bad scalar_bin");
    config.repr.scalar_bin = static_cast<int>(*b);
  }
  config.repr.max_lag = static_cast<int>(meta.require_int("max_lag"));
  config.stage1.k = static_cast<int>(meta.require_int("k1"));
  config.stage2.k = static_cast<int>(meta.require_int("k2"));
  config.stage2.distance_weighted = meta.get_string("weighted", "false") == "true";

  channel::FrequencyGrid frequency;
  frequency.center_hz = meta.require_double("frequency.center_hz");
  frequency.span_hz = meta.require_double("frequency.span_hz");
  frequency.n_points = static_cast<int>(meta.require_int("frequency.points"));

  auto stage1 = knn::FingerprintModel::load(dir / "stage1.csv");
  std::map<Environment, knn::FingerprintModel> stage2;
  for (const auto& [env, kind] : policy.stage2) {
    auto m = knn::FingerprintModel::load(dir / ("stage2_" + std::string(to_string(env)) + ".csv"));
    if (m.kind() != kind)
      throw DataError("stage-2 model for " + std::string(to_string(env)) +
                      " does not use the policy's feature kind");
    stage2.emplace(env, std::move(m));
  }
  if (stage1.kind() != policy.stage1_kind)
    throw DataError("stage-1 model does not use the policy's stage-1 kind");
  return CascadeModel{std::move(stage1), std::move(stage2), std::move(policy), config, frequency};
}

} // namespace fingerloc::cascade
