#include "fingerloc/pipeline.hpp"

#include "fingerloc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fingerloc::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigEcho = "config.ini";
constexpr const char* kTrainingRecord = "training.ini";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
}

bool same_frequency(const channel::FrequencyGrid& a, const channel::FrequencyGrid& b) {
  return a.n_points == b.n_points && std::abs(a.center_hz - b.center_hz) <= 1e-6 * b.center_hz &&
         std::abs(a.span_hz - b.span_hz) <= 1e-6 * b.span_hz;
}

std::vector<channel::EnvironmentProfile> load_profiles(const RunConfig& config) {
  if (!config.profiles) {
    std::vector<channel::EnvironmentProfile> out;
    for (auto env : kAllEnvironments) out.push_back(channel::default_profile(env));
    return out;
  }
  return channel::profiles_from_config(KeyValueFile::load(*config.profiles));
}

std::vector<int> k_values_for(const Splits& splits, int k_max) {
  std::size_t smallest = SIZE_MAX;
  for (const auto& [env, set] : splits.train) smallest = std::min(smallest, set.size());
  std::vector<int> ks;
  for (int k = 1; k <= k_max && static_cast<std::size_t>(k) <= smallest; ++k) ks.push_back(k);
  return ks;
}

} // namespace

cascade::CascadeConfig RunConfig::cascade_config() const {
  cascade::CascadeConfig c;
  c.repr = repr;
  c.scaling = scaling;
  c.stage1 = {k1, false};
  c.stage2 = {k2, weighted};
  c.threads = threads;
  return c;
}

KeyValueFile RunConfig::to_kv() const {
  KeyValueFile kv;
  kv.set("seed", std::to_string(seed));
  kv.set("grid", grid_text(grid));
  kv.set("spacing-cm", grid.spacing_cm);
  kv.set("iters", iters);
  kv.set("split", split);
  kv.set("k1", k1);
  kv.set("k2", k2);
  kv.set("weighted", std::string(weighted ? "true" : "false"));
  kv.set("repr", std::string(features::to_string(repr.mode)));
  kv.set("max-lag", repr.max_lag);
  kv.set("scaling", std::string(features::to_string(scaling)));
  kv.set("stage1-kind", std::string(features::to_string(stage1_kind)));
  kv.set("policy-override", policy_override);
  kv.set("threads", static_cast<long long>(threads));
  kv.set("k-max", k_max);
  if (profiles) kv.set("profiles", profiles->string());
  return kv;
}

std::string grid_text(const dataset::GridGeometry& g) {
  return std::to_string(g.rows) + "x" + std::to_string(g.cols);
}

void parse_grid(std::string_view text, dataset::GridGeometry& g) {
  const auto x = text.find_first_of("xX");
  if (x == std::string_view::npos)
    throw std::invalid_argument("grid must look like RxC, got '" + std::string(text) + "'");
  const auto r = parse_int(trim(text.substr(0, x)));
  const auto c = parse_int(trim(text.substr(x + 1)));
  if (!r || !c || *r < 1 || *c < 1 || *r > 100000 || *c > 100000)
    throw std::invalid_argument("grid must look like RxC with positive sizes, got '" +
                                std::string(text) + "'");
  g.rows = static_cast<int>(*r);
  g.cols = static_cast<int>(*c);
}

cascade::EnvironmentSets load_dataset_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory '" + dir.string() + "' not found");
  std::vector<fs::path> manifests;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".manifest")
      manifests.push_back(entry.path());
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) throw DataError("no *.manifest files in '" + dir.string() + "'");

  cascade::EnvironmentSets out;
  for (const auto& mpath : manifests) {
    auto csv = mpath;
    csv.replace_extension(".csv");
    const auto set = dataset::load_measurements(csv, dataset::Manifest::load(mpath));
    if (set.empty()) continue;
    for (auto& [env, part] : dataset::partition_by_environment(set)) {
      if (out.contains(env))
        throw DataError("environment " + std::string(to_string(env)) + " appears in more than one file of '" +
                        dir.string() + "'");
      out.emplace(env, std::move(part));
    }
  }
  if (out.empty()) throw DataError("dataset directory '" + dir.string() + "' holds no measurements");
  const auto& first = out.begin()->second.frequency;
  for (const auto& [env, set] : out)
    if (!same_frequency(set.frequency, first))
      throw DataError("environments in '" + dir.string() + "' use different frequency grids");
  return out;
}

void write_dataset_dir(const cascade::EnvironmentSets& sets, const fs::path& dir) {
  make_dir(dir);
  for (const auto& [env, set] : sets) {
    const std::string name(to_string(env));
    dataset::write_measurements(set, dir / (name + ".csv"), dir / (name + ".manifest"));
  }
}

Splits split_all(const cascade::EnvironmentSets& sets, std::uint64_t seed, double fraction) {
  Splits out;
  for (const auto& [env, set] : sets) {
    auto [train, test] = dataset::split(set, {fraction, seed, true});
    if (train.empty() || test.empty())
      throw DataError("split leaves " + std::string(to_string(env)) + " without train or test data");
    out.train.emplace(env, std::move(train));
    out.test.emplace(env, std::move(test));
  }
  return out;
}

std::string run_generate(const RunConfig& config, const fs::path& out) {
  make_dir(out);
  dataset::GenerateOptions opt;
  opt.geometry = config.grid;
  opt.frequency = config.frequency;
  opt.iterations = config.iters;
  opt.max_lag = config.repr.max_lag;
  opt.seed = config.seed;
  opt.threads = config.threads;

  cascade::EnvironmentSets sets;
  for (const auto& profile : load_profiles(config))
    sets.emplace(profile.label, dataset::generate_synthetic(profile, opt));
  write_dataset_dir(sets, out);
  config.to_kv().save(out / kConfigEcho);

  std::ostringstream msg;
  for (const auto& [env, set] : sets)
    msg << to_string(env) << ": " << set.size() << " measurements\n";
  return msg.str();
}

std::string run_ingest(const RunConfig& config, const fs::path& input, const fs::path& manifest,
                       const fs::path& out) {
  const auto set = dataset::load_measurements(input, dataset::Manifest::load(manifest));
  if (set.empty()) throw DataError("'" + input.string() + "' holds no measurements");
  const auto parts = dataset::partition_by_environment(set);
  write_dataset_dir(parts, out);
  config.to_kv().save(out / kConfigEcho);

  std::ostringstream msg;
  for (const auto& [env, part] : parts)
    msg << to_string(env) << ": " << part.size() << " measurements\n";
  return msg.str();
}

std::string run_train(const RunConfig& config, const fs::path& data_dir, const fs::path& model_dir) {
  const auto sets = load_dataset_dir(data_dir);
  const auto splits = split_all(sets, config.seed, config.split);

  cascade::EnvironmentSets fit_part;
  cascade::EnvironmentSets validation;
  for (const auto& [env, train] : splits.train) {
    auto [rest, val] = dataset::carve_validation(train, config.validation_fraction);
    if (rest.empty() || val.empty())
      throw DataError("too few training iterations in " + std::string(to_string(env)) +
                      " to carve a validation set");
    fit_part.emplace(env, std::move(rest));
    validation.emplace(env, std::move(val));
  }

  const auto cc = config.cascade_config();
  auto policy_fit = cascade::fit_policy(fit_part, validation, features::kAllFeatureKinds, cc,
                                        config.stage1_kind);
  auto policy = policy_fit.policy;
  policy.apply_overrides(config.policy_override);

  const auto model = cascade::fit(splits.train, policy, cc);
  make_dir(model_dir);
  model.save(model_dir);

  KeyValueFile record;
  record.set("seed", std::to_string(config.seed));
  record.set("split", config.split);
  record.save(model_dir / kTrainingRecord);
  config.to_kv().save(model_dir / kConfigEcho);

  KeyValueFile summary;
  summary.set("stage1_kind", std::string(features::to_string(model.policy.stage1_kind)));
  for (const auto& [env, kind] : model.policy.stage2)
    summary.set("policy." + std::string(to_string(env)), std::string(features::to_string(kind)));
  for (const auto& [env, train] : splits.train) {
    const std::string name(to_string(env));
    summary.set("count." + name + ".train", static_cast<long long>(train.size()));
    summary.set("count." + name + ".test", static_cast<long long>(splits.test.at(env).size()));
    summary.set("count." + name + ".validation", static_cast<long long>(validation.at(env).size()));
  }
  for (const auto& [env, scores] : policy_fit.validation_rmse)
    for (const auto& [kind, rmse] : scores)
      summary.set("validation_rmse_cm." + std::string(to_string(env)) + "." +
                      std::string(features::to_string(kind)),
                  rmse);
  summary.set("seed", std::to_string(config.seed));
  summary.set("split", config.split);
  summary.save(model_dir / "training_summary.txt");

  std::ostringstream msg;
  msg << "stage 1: " << features::to_string(model.policy.stage1_kind) << " over "
      << model.stage1.size() << " vectors\n";
  for (const auto& [env, kind] : model.policy.stage2)
    msg << to_string(env) << ": " << features::to_string(kind) << '\n';
  return msg.str();
}

std::string run_evaluate(const RunConfig& config, const fs::path& model_dir, const fs::path& data_dir,
                         const fs::path& out) {
  const auto model = cascade::CascadeModel::load(model_dir);
  const auto sets = load_dataset_dir(data_dir);
  for (const auto& [env, set] : sets)
    if (!same_frequency(set.frequency, model.frequency))
      throw DataError(std::string(to_string(env)) + " data uses " + std::to_string(set.frequency.n_points) +
                      " CTF points at a different grid than the model (" +
                      std::to_string(model.frequency.n_points) + " points)");

  std::uint64_t seed = config.seed;
  double fraction = config.split;
  if (fs::exists(model_dir / kTrainingRecord)) {
    const auto record = KeyValueFile::load(model_dir / kTrainingRecord);
    const auto s = record.require("seed");
    try {
      seed = std::stoull(s);
    } catch (const std::exception&) {
      throw DataError("training record has a bad seed '" + s + "'");
    }
    fraction = record.require_double("split");
  }
  const auto splits = split_all(sets, seed, fraction);
  for (const auto& [env, set] : splits.test)
    if (!model.stage2.contains(env))
      throw DataError("model has no stage-2 database for " + std::string(to_string(env)));

  auto cc = model.config;
  cc.threads = config.threads;

  make_dir(out);
  const auto cm = eval::confusion(model.stage1, splits.test, cc.stage1.k, cc.threads);
  eval::write_confusion_csv(cm, out / "confusion.csv");

  const auto table = eval::feature_table(splits.train, splits.test, features::kAllFeatureKinds, cc);
  eval::write_feature_table_csv(table, out / "feature_table.csv");

  const auto ks = k_values_for(splits, config.k_max);
  const auto sweep = eval::sweep_k(splits.train, splits.test, features::kAllFeatureKinds, ks, cc);
  eval::write_k_sweep_csv(sweep, out / "k_sweep.csv");

  const auto scores = eval::score_cascade(model, splits.test, cc.threads);
  eval::write_cascade_csv(scores, out / "cascade.csv");

  std::vector<std::vector<double>> queries;
  for (const auto& [env, set] : splits.test)
    for (const auto& m : set.measurements) {
      if (static_cast<int>(queries.size()) >= config.latency_queries) break;
      queries.push_back(model.stage1.query_for(m));
    }
  const auto latency = eval::time_queries(model.stage1, queries, cc.stage1.k, config.latency_repetitions);
  eval::write_latency(latency, model.stage1.size(), out / "latency.txt");

  const auto summary = eval::summary_text(cm, table, scores);
  write_text(out / "summary.txt", summary);
  config.to_kv().save(out / kConfigEcho);

  std::ostringstream msg;
  msg << summary << "\nStage-1 latency: median " << latency.median_ns / 1e3 << " us, p95 "
      << latency.p95_ns / 1e3 << " us (" << model.stage1.size() << " vectors)\n";
  return msg.str();
}

std::size_t run_localize(const fs::path& model_dir, const fs::path& input,
                         const std::optional<fs::path>& manifest, std::ostream& out, unsigned threads) {
  const auto model = cascade::CascadeModel::load(model_dir);
  dataset::Manifest man = manifest ? dataset::Manifest::load(*manifest) : dataset::Manifest{};
  if (!manifest) {
    man.center_hz = model.frequency.center_hz;
    man.span_hz = model.frequency.span_hz;
  }
  man.max_lag = std::max(man.max_lag, model.config.repr.max_lag);
  man.labels_optional = true;
  man.geometry.reset();
  man.iterations_per_point.reset();

  const auto set = dataset::load_measurements(input, man);
  if (set.empty()) return 0;

  std::vector<cascade::LocalizationResult> results(set.size());
  parallel_for(set.size(), threads, [&](std::size_t i) {
    try {
      results[i] = cascade::localize(model, set.measurements[i]);
    } catch (const std::invalid_argument& e) {
      throw DataError("row " + std::to_string(i + 1) + ": " + e.what());
    }
  });

  std::ostringstream text;
  text << "row,environment,x_cm,y_cm\n";
  for (std::size_t i = 0; i < results.size(); ++i)
    text << i << ',' << to_string(results[i].predicted_env) << ','
         << format_double(results[i].position_cm.x) << ',' << format_double(results[i].position_cm.y)
         << '\n';
  out << text.str();
  return results.size();
}

std::string run_reproduce(const RunConfig& config, const fs::path& out) {
  make_dir(out);
  std::string msg = run_generate(config, out / "data");
  msg += '\n' + run_train(config, out / "data", out / "model");
  msg += '\n' + run_evaluate(config, out / "model", out / "data", out / "reports");
  config.to_kv().save(out / kConfigEcho);
  return msg;
}

} // namespace fingerloc::pipeline
