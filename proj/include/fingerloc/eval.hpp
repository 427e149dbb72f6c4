#pragma once

#include "fingerloc/cascade.hpp"
#include "fingerloc/dataset.hpp"
#include "fingerloc/features.hpp"
#include "fingerloc/knn.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fingerloc::eval {

/// Root-mean-square planar error in cm. Throws on empty or unequal inputs.
double rmse(std::span<const Point2> estimates, std::span<const Point2> truths);

/// Percentage reduction of `rmse_beta` relative to the RSS baseline.
/// Throws std::invalid_argument unless rmse_rss > 0.
double alpha(double rmse_rss, double rmse_beta);

/// Rows are true labels, columns predictions.
struct ConfusionMatrix {
  std::vector<Environment> labels;
  std::vector<std::vector<long long>> counts;

  long long total() const;
  long long correct() const;
  double accuracy() const;
  long long row_total(std::size_t row) const;
  /// Rows normalized to 100 (all-zero rows stay zero).
  std::vector<std::vector<double>> row_percent() const;
};

/// Stage-1 classification of every test measurement. Labels are the union of
/// the test environments and the model's labels, in enum order.
ConfusionMatrix confusion(const knn::FingerprintModel& stage1, const cascade::EnvironmentSets& test,
                          int k, unsigned threads = 1);

/// Localization RMSE per (environment, kind) with standalone stage-2 models.
struct FeatureTable {
  std::vector<Environment> environments;
  std::vector<features::FeatureKind> kinds;
  /// rmse_cm[e][k] for environments[e], kinds[k].
  std::vector<std::vector<double>> rmse_cm;
  /// RSS-only RMSE per environment (the alpha baseline).
  std::vector<double> baseline_rss_cm;
  std::vector<features::FeatureKind> best_kind;
  std::vector<double> alpha_percent;

  double at(Environment env, features::FeatureKind kind) const;
};

FeatureTable feature_table(const cascade::EnvironmentSets& train, const cascade::EnvironmentSets& test,
                           std::span<const features::FeatureKind> kinds,
                           const cascade::CascadeConfig& config);

struct SweepPoint {
  Environment env;
  features::FeatureKind kind;
  int k;
  double rmse_cm;
};

/// RMSE for each k in k_values, for every (environment, kind). Uses the
/// stage-2 aggregation settings of `config` (k is taken from k_values).
std::vector<SweepPoint> sweep_k(const cascade::EnvironmentSets& train,
                                const cascade::EnvironmentSets& test,
                                std::span<const features::FeatureKind> kinds,
                                std::span<const int> k_values, const cascade::CascadeConfig& config);

std::vector<int> default_k_values();

/// Per-environment RMSE of the full cascade and of the cascade with stage 1
/// replaced by the true label.
struct CascadeScore {
  Environment env;
  std::size_t count = 0;
  double cascade_rmse_cm = 0.0;
  double oracle_rmse_cm = 0.0;
  double stage1_accuracy = 0.0;
};

std::vector<CascadeScore> score_cascade(const cascade::CascadeModel& model,
                                        const cascade::EnvironmentSets& test, unsigned threads = 1);

struct LatencyStats {
  double median_ns = 0.0;
  double p95_ns = 0.0;
  double mean_ns = 0.0;
  std::size_t samples = 0;
};

/// Wall-clock latency of single stage-1 classifications. Each query is run
/// once for warm-up, then `repetitions` passes over all queries are timed.
/// Throws std::invalid_argument if repetitions < 100 or queries is empty.
LatencyStats time_queries(const knn::FingerprintModel& model,
                          std::span<const std::vector<double>> queries, int k, int repetitions);

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path);
void write_feature_table_csv(const FeatureTable& table, const std::filesystem::path& path);
void write_k_sweep_csv(std::span<const SweepPoint> points, const std::filesystem::path& path);
void write_cascade_csv(std::span<const CascadeScore> scores, const std::filesystem::path& path);
void write_latency(const LatencyStats& stats, std::size_t model_size, const std::filesystem::path& path);

/// Human-readable report (confusion percentages, RMSE table, cascade scores).
std::string summary_text(const ConfusionMatrix& cm, const FeatureTable& table,
                         std::span<const CascadeScore> scores);

} // namespace fingerloc::eval
