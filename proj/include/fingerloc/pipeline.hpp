#pragma once

#include "fingerloc/cascade.hpp"
#include "fingerloc/channel.hpp"
#include "fingerloc/dataset.hpp"
#include "fingerloc/eval.hpp"
#include "fingerloc/features.hpp"
#include "fingerloc/kv.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fingerloc::pipeline {

/// Parameters shared by the command drivers. Keys in to_kv() match the
/// command-line flag names so the echoed file can be fed back as a config.
struct RunConfig {
  std::uint64_t seed = 20190527;
  dataset::GridGeometry grid;
  channel::FrequencyGrid frequency;
  int iters = 10;
  double split = 0.75;
  double validation_fraction = 0.2;
  int k1 = 1;
  int k2 = 1;
  bool weighted = false;
  features::FeatureRepr repr;
  features::Scaling scaling = features::Scaling::Raw;
  features::FeatureKind stage1_kind = features::FeatureKind::CtfFcf;
  std::string policy_override;
  unsigned threads = 0;
  int k_max = 60;
  int latency_queries = 20;
  int latency_repetitions = 100;
  /// Profile overrides (see channel::profiles_from_config); defaults otherwise.
  std::optional<std::filesystem::path> profiles;

  cascade::CascadeConfig cascade_config() const;
  KeyValueFile to_kv() const;
};

/// "14x14" style grid text.
std::string grid_text(const dataset::GridGeometry& g);
/// Parses "RxC" into rows and cols of `g`. Throws std::invalid_argument.
void parse_grid(std::string_view text, dataset::GridGeometry& g);

/// Loads every `<name>.manifest` + `<name>.csv` pair in `dir`. Files without
/// a fixed environment are partitioned by their label column.
cascade::EnvironmentSets load_dataset_dir(const std::filesystem::path& dir);

/// Writes `<Env>.csv` and `<Env>.manifest` for each set.
void write_dataset_dir(const cascade::EnvironmentSets& sets, const std::filesystem::path& dir);

struct Splits {
  cascade::EnvironmentSets train;
  cascade::EnvironmentSets test;
};

Splits split_all(const cascade::EnvironmentSets& sets, std::uint64_t seed, double fraction);

/// Synthesizes the four environments into `out`. Returns a printable summary.
std::string run_generate(const RunConfig& config, const std::filesystem::path& out);

/// Validates an external file against `manifest` and stores it in canonical form.
std::string run_ingest(const RunConfig& config, const std::filesystem::path& input,
                       const std::filesystem::path& manifest, const std::filesystem::path& out);

/// Split, policy selection on a validation carve-out, final fit on the full
/// training partition. Writes the model directory and training_summary.txt.
std::string run_train(const RunConfig& config, const std::filesystem::path& data_dir,
                      const std::filesystem::path& model_dir);

/// Re-creates the training split recorded with the model and writes the
/// report files into `out`.
std::string run_evaluate(const RunConfig& config, const std::filesystem::path& model_dir,
                         const std::filesystem::path& data_dir, const std::filesystem::path& out);

/// One output line per input row: index, predicted environment, x, y.
/// Returns the number of rows processed; an empty input produces no output.
std::size_t run_localize(const std::filesystem::path& model_dir, const std::filesystem::path& input,
                         const std::optional<std::filesystem::path>& manifest, std::ostream& out,
                         unsigned threads);

/// generate -> train -> evaluate under out/{data,model,reports}.
std::string run_reproduce(const RunConfig& config, const std::filesystem::path& out);

} // namespace fingerloc::pipeline
