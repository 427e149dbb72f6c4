// fingerloc: generate, ingest, train, evaluate, localize, reproduce.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include "fingerloc/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace fingerloc;

namespace {

struct Flags {
  std::uint64_t seed = pipeline::RunConfig{}.seed;
  std::string grid = "14x14";
  double spacing_cm = 50.0;
  int iters = 10;
  double split = 0.75;
  int k1 = 1;
  int k2 = 1;
  bool weighted = false;
  std::string repr = "sweep";
  int max_lag = 16;
  std::string scaling = "raw";
  std::string stage1_kind = "CTF+FCF";
  std::string policy_override;
  unsigned threads = 0;
  int k_max = 60;
  std::string profiles;

  std::string out;
  std::string data;
  std::string model;
  std::string input;
  std::string manifest;
};

pipeline::RunConfig to_config(const Flags& f) {
  pipeline::RunConfig c;
  c.seed = f.seed;
  pipeline::parse_grid(f.grid, c.grid);
  c.grid.spacing_cm = f.spacing_cm;
  c.grid.validate();
  c.iters = f.iters;
  c.split = f.split;
  c.k1 = f.k1;
  c.k2 = f.k2;
  c.weighted = f.weighted;
  c.repr.mode = features::repr_mode_from_string(f.repr);
  c.repr.max_lag = f.max_lag;
  c.scaling = features::scaling_from_string(f.scaling);
  c.stage1_kind = features::feature_kind_from_string(f.stage1_kind);
  c.policy_override = f.policy_override;
  if (!f.policy_override.empty()) {
    cascade::Policy probe;
    probe.apply_overrides(f.policy_override);
  }
  c.threads = f.threads;
  c.k_max = f.k_max;
  if (!f.profiles.empty()) c.profiles = fs::path(f.profiles);
  return c;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage k-NN fingerprint localization toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value config file; keys match flag names");

  Flags f;
  app.add_option("--seed", f.seed, "Seed for synthesis and splitting")->capture_default_str();
  app.add_option("--grid", f.grid, "Survey grid as RxC")->capture_default_str();
  app.add_option("--spacing-cm", f.spacing_cm, "Grid spacing in cm")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--iters", f.iters, "Measurements per grid point")->capture_default_str()->check(CLI::Range(1, 100000));
  app.add_option("--split", f.split, "Train fraction")->capture_default_str();
  app.add_option("--k1", f.k1, "Stage-1 neighbors")->capture_default_str()->check(CLI::Range(1, 1000000));
  app.add_option("--k2", f.k2, "Stage-2 neighbors")->capture_default_str()->check(CLI::Range(1, 1000000));
  app.add_flag("--weighted", f.weighted, "Inverse-distance weighted stage-2 positions");
  app.add_option("--repr", f.repr, "Feature representation: scalar|sweep")->capture_default_str();
  app.add_option("--max-lag", f.max_lag, "Highest FCF lag")->capture_default_str()->check(CLI::NonNegativeNumber);
  app.add_option("--scaling", f.scaling, "Feature scaling: raw|zscore")->capture_default_str();
  app.add_option("--stage1-kind", f.stage1_kind, "Stage-1 feature kind")->capture_default_str();
  app.add_option("--policy-override", f.policy_override, "Env=KIND[,Env=KIND...]");
  app.add_option("--threads", f.threads, "Worker cap (0 = all cores)")->capture_default_str();
  app.add_option("--k-max", f.k_max, "Largest k in the sweep")->capture_default_str()->check(CLI::Range(1, 1000000));
  app.add_option("--profiles", f.profiles, "Environment profile overrides");

  auto* gen = app.add_subcommand("generate", "Synthesize the four environment datasets");
  gen->add_option("--out", f.out, "Output directory")->required();

  auto* ingest = app.add_subcommand("ingest", "Validate a measurement file and store it in canonical form");
  ingest->add_option("--input", f.input, "Delimited measurement file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--manifest", f.manifest, "Column manifest")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", f.out, "Output dataset directory")->required();

  auto* train = app.add_subcommand("train", "Fit the policy and the cascade");
  train->add_option("--data", f.data, "Dataset directory")->required();
  train->add_option("--out", f.out, "Model directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Write the evaluation reports");
  evaluate->add_option("--model", f.model, "Model directory")->required();
  evaluate->add_option("--data", f.data, "Dataset directory")->required();
  evaluate->add_option("--out", f.out, "Report directory")->required();

  auto* localize = app.add_subcommand("localize", "Predict environment and position per input row");
  localize->add_option("--model", f.model, "Model directory")->required();
  localize->add_option("--input", f.input, "Measurement file")->required()->check(CLI::ExistingFile);
  localize->add_option("--manifest", f.manifest, "Column manifest")->check(CLI::ExistingFile);
  localize->add_option("--out", f.out, "Output file (default stdout)");

  auto* reproduce = app.add_subcommand("reproduce", "generate, train and evaluate in one go");
  reproduce->add_option("--out", f.out, "Output directory")->required();

  for (auto* sub : {gen, ingest, train, evaluate, localize, reproduce}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto config = to_config(f);
    if (*gen) {
      std::cout << pipeline::run_generate(config, f.out);
    } else if (*ingest) {
      std::cout << pipeline::run_ingest(config, f.input, f.manifest, f.out);
    } else if (*train) {
      std::cout << pipeline::run_train(config, f.data, f.out);
    } else if (*evaluate) {
      std::cout << pipeline::run_evaluate(config, f.model, f.data, f.out);
    } else if (*localize) {
      std::optional<fs::path> manifest;
      if (!f.manifest.empty()) manifest = f.manifest;
      if (f.out.empty()) {
        pipeline::run_localize(f.model, f.input, manifest, std::cout, config.threads);
      } else {
        std::ofstream file(f.out, std::ios::binary);
        if (!file) throw DataError("cannot write '" + f.out + "'");
        pipeline::run_localize(f.model, f.input, manifest, file, config.threads);
      }
    } else if (*reproduce) {
      std::cout << pipeline::run_reproduce(config, f.out);
    }
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
