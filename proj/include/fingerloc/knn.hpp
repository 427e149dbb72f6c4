#pragma once

#include "fingerloc/dataset.hpp"
#include "fingerloc/features.hpp"
#include "fingerloc/types.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace fingerloc::knn {

/// Immutable fingerprint database: equal-length feature rows with the
/// position and environment label of each training measurement.
class FingerprintModel {
public:
  FingerprintModel(features::FeatureKind kind, features::FeatureRepr repr,
                   features::Scaling scaling, std::optional<features::ScalingParams> params,
                   std::span<const features::FeatureVector> vectors);

  /// Builds the feature matrix of `train` and stores it.
  static FingerprintModel fit(const dataset::MeasurementSet& train, features::FeatureKind kind,
                              const features::FeatureRepr& repr, features::Scaling scaling);

  std::size_t size() const { return positions_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  Point2 position(std::size_t i) const { return positions_[i]; }
  Environment label(std::size_t i) const { return labels_[i]; }

  features::FeatureKind kind() const { return kind_; }
  const features::FeatureRepr& repr() const { return repr_; }
  features::Scaling scaling() const { return scaling_; }
  const std::optional<features::ScalingParams>& scaling_params() const { return params_; }

  /// Feature vector of `m` in this model's space (kind, repr and scaling).
  std::vector<double> query_for(const dataset::Measurement& m) const;

  void save(const std::filesystem::path& path) const;
  static FingerprintModel load(const std::filesystem::path& path);

  friend bool operator==(const FingerprintModel&, const FingerprintModel&) = default;

private:
  FingerprintModel() = default;

  features::FeatureKind kind_ = features::FeatureKind::Rss;
  features::FeatureRepr repr_;
  features::Scaling scaling_ = features::Scaling::Raw;
  std::optional<features::ScalingParams> params_;
  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::vector<Point2> positions_;
  std::vector<Environment> labels_;
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct KnnConfig {
  int k = 1;
  /// Inverse-distance weighting in locate; off means the plain centroid.
  bool distance_weighted = false;
};

/// Euclidean distance. Throws std::invalid_argument on length mismatch.
double distance(std::span<const double> a, std::span<const double> b);
double distance(const features::FeatureVector& a, const features::FeatureVector& b);

/// The k closest rows, ascending by distance; equal distances are ordered by
/// ascending training index.
std::vector<Neighbor> nearest(const FingerprintModel& model, std::span<const double> query, int k);

/// Majority label among `neighbors` (which must be sorted as nearest()
/// returns them). A vote tie goes to the tied label whose first member comes
/// earliest in the list.
Environment vote(const FingerprintModel& model, std::span<const Neighbor> neighbors);

/// Centroid of the neighbor positions, or the inverse-distance weighted mean
/// when `weighted` (exact matches then take all the weight).
Point2 aggregate_position(const FingerprintModel& model, std::span<const Neighbor> neighbors,
                          bool weighted = false);

Environment classify(const FingerprintModel& model, std::span<const double> query, int k);
Point2 locate(const FingerprintModel& model, std::span<const double> query, const KnnConfig& config);
inline Point2 locate(const FingerprintModel& model, std::span<const double> query, int k) {
  return locate(model, query, KnnConfig{k, false});
}

} // namespace fingerloc::knn
