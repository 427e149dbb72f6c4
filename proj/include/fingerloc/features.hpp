#pragma once

#include "fingerloc/dataset.hpp"
#include "fingerloc/types.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fingerloc::features {

/// The seven primary and hybrid feature combinations, in table-column order.
enum class FeatureKind { Rss = 0, Ctf, Fcf, RssCtf, RssFcf, CtfFcf, RssCtfFcf };

inline constexpr std::array<FeatureKind, 7> kAllFeatureKinds{
    FeatureKind::Rss,    FeatureKind::Ctf,    FeatureKind::Fcf,      FeatureKind::RssCtf,
    FeatureKind::RssFcf, FeatureKind::CtfFcf, FeatureKind::RssCtfFcf};

/// "RSS", "CTF+FCF", ...
std::string_view to_string(FeatureKind kind);
/// Accepts the canonical names with or without spaces around '+', any case.
std::optional<FeatureKind> parse_feature_kind(std::string_view text);
/// Throws std::invalid_argument on unknown names.
FeatureKind feature_kind_from_string(std::string_view text);

bool uses_rss(FeatureKind kind);
bool uses_ctf(FeatureKind kind);
bool uses_fcf(FeatureKind kind);
int block_count(FeatureKind kind);

enum class ReprMode { Scalar, Sweep };

/// Scalar mode keeps one complex CTF bin and one complex FCF lag (the 5-D
/// construction); Sweep mode keeps the whole CTF and FCF lags 0..max_lag.
struct FeatureRepr {
  ReprMode mode = ReprMode::Sweep;
  /// CTF bin for Scalar mode; nullopt selects the center bin (N / 2).
  std::optional<int> scalar_bin;
  int max_lag = 16;

  friend bool operator==(const FeatureRepr&, const FeatureRepr&) = default;
};

std::string_view to_string(ReprMode mode);
ReprMode repr_mode_from_string(std::string_view text);

/// Vector length for `kind` under `repr` with `ctf_points` CTF samples.
std::size_t feature_dim(FeatureKind kind, const FeatureRepr& repr, int ctf_points);

struct FeatureVector {
  FeatureKind kind = FeatureKind::Rss;
  std::vector<double> values;
  Point2 position;
  Environment env = Environment::Lab;
};

/// Blocks are always laid out RSS, CTF (re/im interleaved), FCF (re/im
/// interleaved). Throws std::invalid_argument when the bin or lag is out of
/// range for the measurement.
FeatureVector build_feature(const dataset::Measurement& m, FeatureKind kind, const FeatureRepr& repr);

enum class Scaling { Raw, ZScore };

std::string_view to_string(Scaling scaling);
Scaling scaling_from_string(std::string_view text);

/// Per-dimension affine map x -> (x - mean) / scale.
struct ScalingParams {
  std::vector<double> mean;
  std::vector<double> scale;

  void apply(std::span<double> values) const;

  friend bool operator==(const ScalingParams&, const ScalingParams&) = default;
};

/// Population mean and standard deviation per dimension. Dimensions with
/// zero variance get unit scale and a message in `warnings`.
ScalingParams fit_zscore(std::span<const FeatureVector> vectors, std::vector<std::string>* warnings);

struct FeatureMatrix {
  FeatureKind kind = FeatureKind::Rss;
  FeatureRepr repr;
  Scaling scaling = Scaling::Raw;
  std::optional<ScalingParams> params;
  std::vector<FeatureVector> vectors;
  std::vector<std::string> warnings;
};

/// One vector per measurement in input order; ZScore is fitted on this set
/// and already applied to the returned vectors.
FeatureMatrix build_matrix(const dataset::MeasurementSet& set, FeatureKind kind,
                           const FeatureRepr& repr, Scaling scaling);

} // namespace fingerloc::features
