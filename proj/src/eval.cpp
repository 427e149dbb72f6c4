#include "fingerloc/eval.hpp"

#include "fingerloc/kv.hpp"
#include "fingerloc/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace fingerloc::eval {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string fixed(double v, int decimals) {
  if (!std::isfinite(v)) return format_double(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::vector<Environment> shared_environments(const cascade::EnvironmentSets& train,
                                             const cascade::EnvironmentSets& test) {
  std::vector<Environment> envs;
  for (const auto& [env, set] : test)
    if (train.contains(env) && !set.empty()) envs.push_back(env);
  return envs;
}

std::size_t best_index(std::span<const double> scores, std::span<const features::FeatureKind> kinds) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const auto key = [&](std::size_t j) {
      return std::tuple(scores[j], features::block_count(kinds[j]), static_cast<int>(kinds[j]));
    };
    if (key(i) < key(best)) best = i;
  }
  return best;
}

} // namespace

double rmse(std::span<const Point2> estimates, std::span<const Point2> truths) {
  if (estimates.size() != truths.size())
    throw std::invalid_argument("rmse: " + std::to_string(estimates.size()) + " estimates vs " +
                                std::to_string(truths.size()) + " truths");
  if (estimates.empty()) throw std::invalid_argument("rmse of an empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double dx = estimates[i].x - truths[i].x;
    const double dy = estimates[i].y - truths[i].y;
    sum += dx * dx + dy * dy;
  }
  return std::sqrt(sum / static_cast<double>(estimates.size()));
}

double alpha(double rmse_rss, double rmse_beta) {
  if (!(rmse_rss > 0.0)) throw std::invalid_argument("alpha needs a positive RSS baseline");
  return (rmse_rss - rmse_beta) / rmse_rss * 100.0;
}

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
  return t;
}

long long ConfusionMatrix::correct() const {
  long long c = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) c += counts[i][i];
  return c;
}

double ConfusionMatrix::accuracy() const {
  const auto t = total();
  return t == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(t);
}

long long ConfusionMatrix::row_total(std::size_t row) const {
  return std::accumulate(counts[row].begin(), counts[row].end(), 0LL);
}

std::vector<std::vector<double>> ConfusionMatrix::row_percent() const {
  std::vector<std::vector<double>> out(counts.size());
  for (std::size_t r = 0; r < counts.size(); ++r) {
    const auto t = row_total(r);
    for (auto c : counts[r])
      out[r].push_back(t == 0 ? 0.0 : 100.0 * static_cast<double>(c) / static_cast<double>(t));
  }
  return out;
}

ConfusionMatrix confusion(const knn::FingerprintModel& stage1, const cascade::EnvironmentSets& test,
                          int k, unsigned threads) {
  std::set<Environment> labels;
  for (const auto& [env, set] : test) labels.insert(env);
  for (std::size_t i = 0; i < stage1.size(); ++i) labels.insert(stage1.label(i));

  ConfusionMatrix cm;
  cm.labels.assign(labels.begin(), labels.end());
  cm.counts.assign(cm.labels.size(), std::vector<long long>(cm.labels.size(), 0));
  const auto slot = [&](Environment e) {
    return static_cast<std::size_t>(std::find(cm.labels.begin(), cm.labels.end(), e) - cm.labels.begin());
  };

  for (const auto& [env, set] : test) {
    std::vector<Environment> predicted(set.size());
    parallel_for(set.size(), threads, [&](std::size_t i) {
      const auto& m = set.measurements[i];
      predicted[i] = knn::classify(stage1, stage1.query_for(m), k);
    });
    for (std::size_t i = 0; i < set.size(); ++i)
      ++cm.counts[slot(set.measurements[i].env)][slot(predicted[i])];
  }
  return cm;
}

double FeatureTable::at(Environment env, features::FeatureKind kind) const {
  const auto e = std::find(environments.begin(), environments.end(), env);
  const auto k = std::find(kinds.begin(), kinds.end(), kind);
  if (e == environments.end() || k == kinds.end())
    throw std::out_of_range("feature table has no such cell");
  return rmse_cm[static_cast<std::size_t>(e - environments.begin())]
                [static_cast<std::size_t>(k - kinds.begin())];
}

FeatureTable feature_table(const cascade::EnvironmentSets& train, const cascade::EnvironmentSets& test,
                           std::span<const features::FeatureKind> kinds,
                           const cascade::CascadeConfig& config) {
  if (kinds.empty()) throw std::invalid_argument("feature table needs at least one kind");
  FeatureTable table;
  table.environments = shared_environments(train, test);
  table.kinds.assign(kinds.begin(), kinds.end());

  // The RSS column doubles as the alpha baseline; add it when not requested.
  std::vector<features::FeatureKind> evaluated = table.kinds;
  const bool has_rss =
      std::find(evaluated.begin(), evaluated.end(), features::FeatureKind::Rss) != evaluated.end();
  if (!has_rss) evaluated.push_back(features::FeatureKind::Rss);

  const auto n_env = table.environments.size();
  const auto n_kind = evaluated.size();
  std::vector<double> cells(n_env * n_kind, 0.0);
  parallel_for(cells.size(), config.threads, [&](std::size_t cell) {
    const auto env = table.environments[cell / n_kind];
    const auto kind = evaluated[cell % n_kind];
    const auto model = cascade::build_stage2_model(train.at(env), kind, config);
    const auto& test_set = test.at(env);
    std::vector<Point2> est;
    std::vector<Point2> truth;
    est.reserve(test_set.size());
    truth.reserve(test_set.size());
    for (const auto& m : test_set.measurements) {
      est.push_back(knn::locate(model, model.query_for(m), config.stage2));
      truth.push_back(m.position);
    }
    cells[cell] = rmse(est, truth);
  });

  for (std::size_t e = 0; e < n_env; ++e) {
    std::vector<double> row(cells.begin() + static_cast<std::ptrdiff_t>(e * n_kind),
                            cells.begin() + static_cast<std::ptrdiff_t>(e * n_kind + table.kinds.size()));
    const double baseline = has_rss ? row[static_cast<std::size_t>(
                                          std::find(table.kinds.begin(), table.kinds.end(),
                                                    features::FeatureKind::Rss) -
                                          table.kinds.begin())]
                                    : cells[e * n_kind + n_kind - 1];
    const auto best = best_index(row, table.kinds);
    table.best_kind.push_back(table.kinds[best]);
    table.baseline_rss_cm.push_back(baseline);
    table.alpha_percent.push_back(baseline > 0.0 ? alpha(baseline, row[best])
                                                 : std::numeric_limits<double>::quiet_NaN());
    table.rmse_cm.push_back(std::move(row));
  }
  return table;
}

std::vector<int> default_k_values() {
  std::vector<int> ks(60);
  std::iota(ks.begin(), ks.end(), 1);
  return ks;
}

std::vector<SweepPoint> sweep_k(const cascade::EnvironmentSets& train,
                                const cascade::EnvironmentSets& test,
                                std::span<const features::FeatureKind> kinds,
                                std::span<const int> k_values, const cascade::CascadeConfig& config) {
  if (k_values.empty()) throw std::invalid_argument("k sweep needs at least one k");
  const int k_max = *std::max_element(k_values.begin(), k_values.end());
  if (*std::min_element(k_values.begin(), k_values.end()) < 1)
    throw std::invalid_argument("k values must be >= 1");
  const auto envs = shared_environments(train, test);
  for (auto env : envs)
    if (static_cast<std::size_t>(k_max) > train.at(env).size())
      throw std::invalid_argument("k = " + std::to_string(k_max) + " exceeds the " +
                                  std::to_string(train.at(env).size()) + " training samples of " +
                                  std::string(to_string(env)));

  const auto n_kind = kinds.size();
  std::vector<std::vector<double>> curves(envs.size() * n_kind);
  parallel_for(curves.size(), config.threads, [&](std::size_t cell) {
    const auto env = envs[cell / n_kind];
    const auto kind = kinds[cell % n_kind];
    const auto model = cascade::build_stage2_model(train.at(env), kind, config);
    const auto& test_set = test.at(env);

    std::vector<std::vector<Point2>> est(k_values.size());
    std::vector<Point2> truth;
    for (const auto& m : test_set.measurements) {
      const auto neighbors = knn::nearest(model, model.query_for(m), k_max);
      for (std::size_t j = 0; j < k_values.size(); ++j)
        est[j].push_back(knn::aggregate_position(
            model, std::span(neighbors).first(static_cast<std::size_t>(k_values[j])),
            config.stage2.distance_weighted));
      truth.push_back(m.position);
    }
    auto& curve = curves[cell];
    for (const auto& e : est) curve.push_back(rmse(e, truth));
  });

  std::vector<SweepPoint> out;
  for (std::size_t cell = 0; cell < curves.size(); ++cell)
    for (std::size_t j = 0; j < k_values.size(); ++j)
      out.push_back({envs[cell / n_kind], kinds[cell % n_kind], k_values[j], curves[cell][j]});
  return out;
}

std::vector<CascadeScore> score_cascade(const cascade::CascadeModel& model,
                                        const cascade::EnvironmentSets& test, unsigned threads) {
  std::vector<CascadeScore> out;
  for (const auto& [env, set] : test) {
    if (set.empty()) continue;
    std::vector<Point2> cascaded(set.size());
    std::vector<Point2> oracle(set.size());
    std::vector<char> hit(set.size(), 0);
    parallel_for(set.size(), threads, [&](std::size_t i) {
      const auto& m = set.measurements[i];
      const auto full = cascade::localize(model, m);
      cascaded[i] = full.position_cm;
      hit[i] = full.predicted_env == m.env;
      oracle[i] = cascade::localize(model, m, m.env).position_cm;
    });
    std::vector<Point2> truth;
    truth.reserve(set.size());
    for (const auto& m : set.measurements) truth.push_back(m.position);
    CascadeScore s;
    s.env = env;
    s.count = set.size();
    s.cascade_rmse_cm = rmse(cascaded, truth);
    s.oracle_rmse_cm = rmse(oracle, truth);
    s.stage1_accuracy = static_cast<double>(std::count(hit.begin(), hit.end(), 1)) /
                        static_cast<double>(set.size());
    out.push_back(s);
  }
  return out;
}

LatencyStats time_queries(const knn::FingerprintModel& model,
                          std::span<const std::vector<double>> queries, int k, int repetitions) {
  if (repetitions < 100) throw std::invalid_argument("latency timing needs at least 100 repetitions");
  if (queries.empty()) throw std::invalid_argument("latency timing needs at least one query");

  volatile int sink = 0;
  for (const auto& q : queries) sink = sink + static_cast<int>(knn::classify(model, q, k));

  std::vector<double> samples;
  samples.reserve(queries.size() * static_cast<std::size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r) {
    for (const auto& q : queries) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto label = knn::classify(model, q, k);
      const auto t1 = std::chrono::steady_clock::now();
      sink = sink + static_cast<int>(label);
      samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
  }
  std::sort(samples.begin(), samples.end());
  LatencyStats s;
  s.samples = samples.size();
  const auto n = samples.size();
  s.median_ns = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_ns = samples[std::max<std::size_t>(rank, 1) - 1];
  s.mean_ns = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  return s;
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "true\\predicted";
  for (auto l : cm.labels) out << ',' << to_string(l);
  out << '\n';
  for (std::size_t r = 0; r < cm.labels.size(); ++r) {
    out << to_string(cm.labels[r]);
    for (auto c : cm.counts[r]) out << ',' << c;
    out << '\n';
  }
  write_text(path, out.str());
}

void write_feature_table_csv(const FeatureTable& table, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "environment";
  for (auto k : table.kinds) out << ',' << features::to_string(k);
  out << ",best_kind,alpha_percent\n";
  for (std::size_t e = 0; e < table.environments.size(); ++e) {
    out << to_string(table.environments[e]);
    for (double v : table.rmse_cm[e]) out << ',' << format_double(v);
    out << ',' << features::to_string(table.best_kind[e]) << ','
        << format_double(table.alpha_percent[e]) << '\n';
  }
  write_text(path, out.str());
}

void write_k_sweep_csv(std::span<const SweepPoint> points, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "environment,kind,k,rmse_cm\n";
  for (const auto& p : points)
    out << to_string(p.env) << ',' << features::to_string(p.kind) << ',' << p.k << ','
        << format_double(p.rmse_cm) << '\n';
  write_text(path, out.str());
}

void write_cascade_csv(std::span<const CascadeScore> scores, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "environment,test_count,stage1_accuracy,cascade_rmse_cm,oracle_stage1_rmse_cm\n";
  for (const auto& s : scores)
    out << to_string(s.env) << ',' << s.count << ',' << format_double(s.stage1_accuracy) << ','
        << format_double(s.cascade_rmse_cm) << ',' << format_double(s.oracle_rmse_cm) << '\n';
  write_text(path, out.str());
}

void write_latency(const LatencyStats& stats, std::size_t model_size, const std::filesystem::path& path) {
  KeyValueFile kv;
  kv.set("model_size", static_cast<long long>(model_size));
  kv.set("samples", static_cast<long long>(stats.samples));
  kv.set("median_us", stats.median_ns / 1e3);
  kv.set("p95_us", stats.p95_ns / 1e3);
  kv.set("mean_us", stats.mean_ns / 1e3);
  kv.save(path);
}

std::string summary_text(const ConfusionMatrix& cm, const FeatureTable& table,
                         std::span<const CascadeScore> scores) {
  std::ostringstream out;
  out << "Stage-1 environment classification\n";
  out << "  accuracy: " << fixed(100.0 * cm.accuracy(), 2) << "% (" << cm.correct() << "/"
      << cm.total() << ")\n";
  const auto pct = cm.row_percent();
  out << "  row-normalized confusion (%), rows = true:\n";
  out << "    " << std::string(16, ' ');
  for (auto l : cm.labels) {
    std::string name(to_string(l));
    name.resize(16, ' ');
    out << name;
  }
  out << '\n';
  for (std::size_t r = 0; r < cm.labels.size(); ++r) {
    std::string name(to_string(cm.labels[r]));
    name.resize(16, ' ');
    out << "    " << name;
    for (double v : pct[r]) {
      auto cell = fixed(v, 2);
      cell.resize(16, ' ');
      out << cell;
    }
    out << '\n';
  }

  out << "\nLocalization RMSE (cm), standalone stage 2\n";
  out << "  environment     ";
  for (auto k : table.kinds) {
    std::string name(features::to_string(k));
    name.resize(13, ' ');
    out << name;
  }
  out << "best         alpha\n";
  for (std::size_t e = 0; e < table.environments.size(); ++e) {
    std::string name(to_string(table.environments[e]));
    name.resize(16, ' ');
    out << "  " << name;
    for (double v : table.rmse_cm[e]) {
      auto cell = fixed(v, 2);
      cell.resize(13, ' ');
      out << cell;
    }
    std::string best(features::to_string(table.best_kind[e]));
    best.resize(13, ' ');
    out << best << fixed(table.alpha_percent[e], 1) << "%\n";
  }

  if (!scores.empty()) {
    out << "\nCascade RMSE (cm)\n";
    out << "  environment     stage1-acc   cascade      oracle-stage1\n";
    for (const auto& s : scores) {
      std::string name(to_string(s.env));
      name.resize(16, ' ');
      auto acc = fixed(100.0 * s.stage1_accuracy, 2) + "%";
      acc.resize(13, ' ');
      auto cas = fixed(s.cascade_rmse_cm, 2);
      cas.resize(13, ' ');
      out << "  " << name << acc << cas << fixed(s.oracle_rmse_cm, 2) << '\n';
    }
  }
  return out.str();
}

} // namespace fingerloc::eval
