#pragma once

#include "fingerloc/channel.hpp"
#include "fingerloc/kv.hpp"
#include "fingerloc/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fingerloc::dataset {

/// Rectangular survey grid. Point (row, col) sits at
/// origin + (col * spacing, row * spacing); its index is row * cols + col.
struct GridGeometry {
  int rows = 14;
  int cols = 14;
  double spacing_cm = 50.0;
  Point2 origin{0.0, 0.0};

  void validate() const;
  int size() const { return rows * cols; }
  Point2 position(int grid_index) const;
  /// Index of the grid point at `p`, if p is on the grid (1e-6 cm tolerance).
  std::optional<int> index_of(Point2 p) const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

struct Measurement {
  Environment env = Environment::Lab;
  int grid_index = 0;
  Point2 position;
  int iteration = 0;
  double rss_db = 0.0;
  channel::CtfSweep ctf;
  channel::FcfSweep fcf;
};

/// Identity of a measurement inside a dataset.
struct MeasurementKey {
  Environment env;
  int grid_index;
  int iteration;
  auto operator<=>(const MeasurementKey&) const = default;
};

inline MeasurementKey key_of(const Measurement& m) { return {m.env, m.grid_index, m.iteration}; }

struct MeasurementSet {
  /// Set when every measurement carries the same label.
  std::optional<Environment> environment;
  std::optional<GridGeometry> geometry;
  channel::FrequencyGrid frequency;
  int iterations_per_point = 0;
  std::string provenance;
  std::vector<Measurement> measurements;

  std::size_t size() const { return measurements.size(); }
  bool empty() const { return measurements.empty(); }

  /// Copy of the metadata with no measurements.
  MeasurementSet shell() const;
};

struct GenerateOptions {
  GridGeometry geometry;
  channel::FrequencyGrid frequency;
  int iterations = 10;
  int max_lag = 16;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// One measurement per (grid point, iteration), sorted by (grid_index,
/// iteration). The grid point's realization is drawn once; each iteration
/// perturbs it with its own sub-seed.
MeasurementSet generate_synthetic(const channel::EnvironmentProfile& profile,
                                  const GenerateOptions& options);

struct SplitSpec {
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
  bool stratify_by_grid_point = true;

  void validate() const;
};

/// Disjoint, exhaustive partition. Stratified mode gives each grid point its
/// share of the train fraction, rounding cumulatively over points so the
/// overall count is round(N * fraction) when points are equally sized.
std::pair<MeasurementSet, MeasurementSet> split(const MeasurementSet& set, const SplitSpec& spec);

/// Moves the last `fraction` of each grid point's iterations (in iteration
/// order) into a validation set. Returns (remaining, validation).
std::pair<MeasurementSet, MeasurementSet> carve_validation(const MeasurementSet& train,
                                                           double fraction = 0.2);

std::map<Environment, MeasurementSet> partition_by_environment(const MeasurementSet& set);

/// Column-role manifest for delimited measurement files.
///
/// Sweep columns are named by patterns in which `{i}` is replaced by the
/// point (CTF) or lag (FCF) index. The RSS and FCF roles are optional; when
/// their columns are absent the values are derived from the CTF.
struct Manifest {
  char delimiter = ',';
  std::optional<Environment> environment;
  std::string env_column = "env";
  std::string grid_index_column = "grid_index";
  std::string x_column = "x_cm";
  std::string y_column = "y_cm";
  std::string iteration_column = "iteration";
  std::string rss_column = "rss_db";
  std::string ctf_re_pattern = "ctf_re_{i}";
  std::string ctf_im_pattern = "ctf_im_{i}";
  std::string fcf_re_pattern = "fcf_re_{i}";
  std::string fcf_im_pattern = "fcf_im_{i}";

  double center_hz = 2.4e9;
  double span_hz = 100e6;
  /// Expected CTF length; nullopt means "infer from the header".
  std::optional<int> ctf_points;
  /// Lag count used when FCF has to be computed.
  int max_lag = 16;
  std::optional<GridGeometry> geometry;
  std::optional<int> iterations_per_point;
  std::string provenance;
  /// Query files: the label and position columns may be absent (rows then
  /// get grid index 0 at the origin and the first environment label).
  bool labels_optional = false;

  static Manifest from_kv(const KeyValueFile& kv);
  static Manifest load(const std::filesystem::path& path) { return from_kv(KeyValueFile::load(path)); }
  KeyValueFile to_kv() const;
};

/// Manifest describing the files written by write_measurements.
Manifest manifest_for(const MeasurementSet& set);

/// Writes `csv_path` (header + one row per measurement, complex values as
/// interleaved re/im pairs) and, if given, the matching manifest.
void write_measurements(const MeasurementSet& set, const std::filesystem::path& csv_path,
                        const std::optional<std::filesystem::path>& manifest_path = std::nullopt);

/// Parses a delimited measurement file. Every invalid row is reported in the
/// thrown DataError with its line number.
MeasurementSet load_measurements(const std::filesystem::path& path, const Manifest& manifest);

} // namespace fingerloc::dataset
