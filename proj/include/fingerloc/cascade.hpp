#pragma once

#include "fingerloc/dataset.hpp"
#include "fingerloc/features.hpp"
#include "fingerloc/knn.hpp"
#include "fingerloc/kv.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace fingerloc::cascade {

using EnvironmentSets = std::map<Environment, dataset::MeasurementSet>;

/// Environment -> stage-2 feature kind, plus the stage-1 kind.
struct Policy {
  features::FeatureKind stage1_kind = features::FeatureKind::CtfFcf;
  std::map<Environment, features::FeatureKind> stage2;

  /// Throws std::out_of_range when `env` has no entry.
  features::FeatureKind kind_for(Environment env) const;

  /// Applies "Env=KIND[,Env=KIND...]" overrides. Throws std::invalid_argument
  /// on malformed text, unknown labels or unknown kinds.
  void apply_overrides(std::string_view text);

  KeyValueFile to_kv() const;
  static Policy from_kv(const KeyValueFile& kv);

  friend bool operator==(const Policy&, const Policy&) = default;
};

struct CascadeConfig {
  features::FeatureRepr repr;
  features::Scaling scaling = features::Scaling::Raw;
  knn::KnnConfig stage1{1, false};
  knn::KnnConfig stage2{1, false};
  unsigned threads = 1;
};

/// Two-stage fingerprint model: a pooled, labelled stage-1 database and one
/// positioned stage-2 database per environment built with the policy's kind.
struct CascadeModel {
  knn::FingerprintModel stage1;
  std::map<Environment, knn::FingerprintModel> stage2;
  Policy policy;
  CascadeConfig config;
  channel::FrequencyGrid frequency;

  void save(const std::filesystem::path& dir) const;
  static CascadeModel load(const std::filesystem::path& dir);
};

struct LocalizationResult {
  Environment predicted_env = Environment::Lab;
  Point2 position_cm;
  std::vector<knn::Neighbor> stage1_neighbors;
  std::vector<knn::Neighbor> stage2_neighbors;
};

/// Pools `train` under one labelled set. Measurements keep their order
/// (environments ascending, then each set's own order).
dataset::MeasurementSet pool(const EnvironmentSets& sets);

/// The stage-2 database for one environment; shared by fit and the
/// evaluation drivers so both produce identical models.
knn::FingerprintModel build_stage2_model(const dataset::MeasurementSet& train,
                                         features::FeatureKind kind, const CascadeConfig& config);

CascadeModel fit(const EnvironmentSets& train, const Policy& policy, const CascadeConfig& config);

struct PolicyFit {
  Policy policy;
  /// Validation RMSE (cm) per environment and candidate kind.
  std::map<Environment, std::map<features::FeatureKind, double>> validation_rmse;
};

/// For every environment, the candidate with the lowest validation RMSE at
/// k = config.stage2.k. Ties prefer fewer feature blocks, then table order.
PolicyFit fit_policy(const EnvironmentSets& train, const EnvironmentSets& validation,
                     std::span<const features::FeatureKind> candidates, const CascadeConfig& config,
                     features::FeatureKind stage1_kind = features::FeatureKind::CtfFcf);

/// Stage 1 classifies the environment (unless `forced_env` bypasses it),
/// stage 2 locates with that environment's model.
LocalizationResult localize(const CascadeModel& model, const dataset::Measurement& m,
                            std::optional<Environment> forced_env = std::nullopt);

} // namespace fingerloc::cascade
