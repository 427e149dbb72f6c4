#include "fingerloc/dataset.hpp"

#include "fingerloc/parallel.hpp"
#include "fingerloc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace fingerloc::dataset {

namespace {

constexpr std::uint64_t kIterationSalt = 0x1157;
constexpr std::uint64_t kNoiseSalt = 0x2a11;
constexpr std::uint64_t kSplitSalt = 0x5b17;
constexpr std::size_t kMaxReportedErrors = 20;

std::uint64_t env_tag(Environment env) { return static_cast<std::uint64_t>(env) + 1; }

/// Rounded share of `fraction` for the group spanning [before, before + size)
/// in a running total; the shares over all groups sum to round(total * fraction).
std::size_t cumulative_share(std::size_t before, std::size_t size, double fraction) {
  const auto lo = static_cast<std::size_t>(std::floor(static_cast<double>(before) * fraction + 0.5));
  const auto hi =
      static_cast<std::size_t>(std::floor(static_cast<double>(before + size) * fraction + 0.5));
  return hi - lo;
}

using GroupKey = std::pair<Environment, int>;

/// Measurement indices grouped by (env, grid point), each group sorted by
/// iteration. Groups come out in ascending key order.
std::map<GroupKey, std::vector<std::size_t>> group_by_point(const MeasurementSet& set) {
  std::map<GroupKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < set.measurements.size(); ++i) {
    const auto& m = set.measurements[i];
    groups[{m.env, m.grid_index}].push_back(i);
  }
  for (auto& [key, idx] : groups)
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return set.measurements[a].iteration < set.measurements[b].iteration;
    });
  return groups;
}

/// Fisher-Yates with the project RNG (std::shuffle's algorithm is unspecified).
void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

MeasurementSet take(const MeasurementSet& set, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return key_of(set.measurements[a]) < key_of(set.measurements[b]);
  });
  auto out = set.shell();
  out.measurements.reserve(idx.size());
  for (auto i : idx) out.measurements.push_back(set.measurements[i]);
  return out;
}

std::string expand(const std::string& pattern, int i) {
  auto out = pattern;
  const auto pos = out.find("{i}");
  if (pos != std::string::npos) out.replace(pos, 3, std::to_string(i));
  return out;
}

} // namespace

void GridGeometry::validate() const {
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid geometry must have at least one point");
  if (!(spacing_cm > 0.0)) throw std::invalid_argument("grid spacing must be positive");
}

Point2 GridGeometry::position(int grid_index) const {
  if (grid_index < 0 || grid_index >= size())
    throw std::out_of_range("grid index " + std::to_string(grid_index) + " outside grid");
  const int row = grid_index / cols;
  const int col = grid_index % cols;
  return {origin.x + col * spacing_cm, origin.y + row * spacing_cm};
}

std::optional<int> GridGeometry::index_of(Point2 p) const {
  constexpr double tol = 1e-6;
  const double fc = (p.x - origin.x) / spacing_cm;
  const double fr = (p.y - origin.y) / spacing_cm;
  const double col = std::round(fc);
  const double row = std::round(fr);
  if (std::abs(fc - col) * spacing_cm > tol || std::abs(fr - row) * spacing_cm > tol) return std::nullopt;
  if (col < 0 || row < 0 || col >= cols || row >= rows) return std::nullopt;
  return static_cast<int>(row) * cols + static_cast<int>(col);
}

MeasurementSet MeasurementSet::shell() const {
  MeasurementSet out;
  out.environment = environment;
  out.geometry = geometry;
  out.frequency = frequency;
  out.iterations_per_point = iterations_per_point;
  out.provenance = provenance;
  return out;
}

MeasurementSet generate_synthetic(const channel::EnvironmentProfile& profile,
                                  const GenerateOptions& options) {
  options.geometry.validate();
  options.frequency.validate();
  profile.validate();
  if (options.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (options.max_lag < 0 || options.max_lag >= options.frequency.n_points)
    throw std::invalid_argument("FCF max lag must be in [0, frequency points)");

  MeasurementSet set;
  set.environment = profile.label;
  set.geometry = options.geometry;
  set.frequency = options.frequency;
  set.iterations_per_point = options.iterations;
  set.provenance = "synthetic seed=" + std::to_string(options.seed);

  const auto points = static_cast<std::size_t>(options.geometry.size());
  const auto iters = static_cast<std::size_t>(options.iterations);
  set.measurements.resize(points * iters);

  parallel_for(points, options.threads, [&](std::size_t point) {
    const int grid_index = static_cast<int>(point);
    const Point2 pos = options.geometry.position(grid_index);
    const auto base = channel::draw_realization(profile, pos, options.seed);
    for (std::size_t it = 0; it < iters; ++it) {
      const auto sub_seed = hash_seed({options.seed, env_tag(profile.label),
                                       static_cast<std::uint64_t>(grid_index), it, kIterationSalt});
      const auto realization = channel::perturb_realization(base, profile, sub_seed);
      auto ctf = channel::synth_ctf(realization, options.frequency);
      if (profile.snr_db) {
        Rng noise(hash_seed({sub_seed, kNoiseSalt}));
        channel::add_noise(ctf, *profile.snr_db, noise);
      }
      auto& m = set.measurements[point * iters + it];
      m.env = profile.label;
      m.grid_index = grid_index;
      m.position = pos;
      m.iteration = static_cast<int>(it);
      m.rss_db = channel::compute_rss(ctf);
      m.fcf = channel::compute_fcf(ctf, options.max_lag);
      m.ctf = std::move(ctf);
    }
  });
  return set;
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train fraction must lie strictly between 0 and 1");
}

std::pair<MeasurementSet, MeasurementSet> split(const MeasurementSet& set, const SplitSpec& spec) {
  spec.validate();
  if (set.empty()) throw DataError("cannot split an empty measurement set");

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  if (spec.stratify_by_grid_point) {
    std::size_t before = 0;
    for (auto& [key, idx] : group_by_point(set)) {
      Rng rng(hash_seed({spec.seed, kSplitSalt, env_tag(key.first),
                         static_cast<std::uint64_t>(key.second)}));
      shuffle_indices(idx, rng);
      const auto n_train = cumulative_share(before, idx.size(), spec.train_fraction);
      before += idx.size();
      train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
      test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
  } else {
    std::vector<std::size_t> idx(set.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(hash_seed({spec.seed, kSplitSalt}));
    shuffle_indices(idx, rng);
    const auto n_train = cumulative_share(0, idx.size(), spec.train_fraction);
    train_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  if (train_idx.empty() || test_idx.empty())
    throw DataError("measurement set of " + std::to_string(set.size()) +
                    " is too small for train fraction " + format_double(spec.train_fraction));
  return {take(set, std::move(train_idx)), take(set, std::move(test_idx))};
}

std::pair<MeasurementSet, MeasurementSet> carve_validation(const MeasurementSet& train,
                                                           double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("validation fraction must lie strictly between 0 and 1");
  std::vector<std::size_t> keep;
  std::vector<std::size_t> held;
  std::size_t before = 0;
  for (const auto& [key, idx] : group_by_point(train)) {
    const auto n_val = cumulative_share(before, idx.size(), fraction);
    before += idx.size();
    const auto cut = static_cast<std::ptrdiff_t>(idx.size() - n_val);
    keep.insert(keep.end(), idx.begin(), idx.begin() + cut);
    held.insert(held.end(), idx.begin() + cut, idx.end());
  }
  if (keep.empty() || held.empty())
    throw DataError("training set of " + std::to_string(train.size()) +
                    " is too small to carve a validation set");
  return {take(train, std::move(keep)), take(train, std::move(held))};
}

std::map<Environment, MeasurementSet> partition_by_environment(const MeasurementSet& set) {
  std::map<Environment, MeasurementSet> out;
  for (const auto& m : set.measurements) {
    auto it = out.find(m.env);
    if (it == out.end()) {
      it = out.emplace(m.env, set.shell()).first;
      it->second.environment = m.env;
    }
    it->second.measurements.push_back(m);
  }
  return out;
}

Manifest Manifest::from_kv(const KeyValueFile& kv) {
  Manifest m;
  if (auto d = kv.get("delimiter")) {
    if (*d == "tab" || *d == "\\t") m.delimiter = '\t';
    else if (*d == "comma") m.delimiter = ',';
    else if (*d == "semicolon") m.delimiter = ';';
    else if (d->size() == 1) m.delimiter = d->front();
    else throw DataError("manifest: unsupported delimiter '" + *d + "'");
  }
  if (auto e = kv.get("environment"); e && !e->empty()) m.environment = environment_from_string(*e);
  m.env_column = kv.get_string("column.env", m.env_column);
  m.grid_index_column = kv.get_string("column.grid_index", m.grid_index_column);
  m.x_column = kv.get_string("column.x", m.x_column);
  m.y_column = kv.get_string("column.y", m.y_column);
  m.iteration_column = kv.get_string("column.iteration", m.iteration_column);
  m.rss_column = kv.get_string("column.rss", m.rss_column);
  m.ctf_re_pattern = kv.get_string("column.ctf_re", m.ctf_re_pattern);
  m.ctf_im_pattern = kv.get_string("column.ctf_im", m.ctf_im_pattern);
  m.fcf_re_pattern = kv.get_string("column.fcf_re", m.fcf_re_pattern);
  m.fcf_im_pattern = kv.get_string("column.fcf_im", m.fcf_im_pattern);
  m.center_hz = kv.get_double("frequency.center_hz", m.center_hz);
  m.span_hz = kv.get_double("frequency.span_hz", m.span_hz);
  if (kv.contains("frequency.points"))
    m.ctf_points = static_cast<int>(kv.require_int("frequency.points"));
  m.max_lag = static_cast<int>(kv.get_int("fcf.max_lag", m.max_lag));
  if (kv.contains("grid.rows") || kv.contains("grid.cols")) {
    GridGeometry g;
    g.rows = static_cast<int>(kv.require_int("grid.rows"));
    g.cols = static_cast<int>(kv.require_int("grid.cols"));
    g.spacing_cm = kv.require_double("grid.spacing_cm");
    g.origin.x = kv.get_double("grid.origin_x_cm", 0.0);
    g.origin.y = kv.get_double("grid.origin_y_cm", 0.0);
    try {
      g.validate();
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("manifest: ") + e.what());
    }
    m.geometry = g;
  }
  if (kv.contains("iterations_per_point"))
    m.iterations_per_point = static_cast<int>(kv.require_int("iterations_per_point"));
  m.provenance = kv.get_string("provenance", "");
  return m;
}

KeyValueFile Manifest::to_kv() const {
  KeyValueFile kv;
  kv.set("delimiter", delimiter == '\t' ? std::string("tab") : std::string(1, delimiter));
  if (environment) kv.set("environment", std::string(to_string(*environment)));
  kv.set("column.env", env_column);
  kv.set("column.grid_index", grid_index_column);
  kv.set("column.x", x_column);
  kv.set("column.y", y_column);
  kv.set("column.iteration", iteration_column);
  kv.set("column.rss", rss_column);
  kv.set("column.ctf_re", ctf_re_pattern);
  kv.set("column.ctf_im", ctf_im_pattern);
  kv.set("column.fcf_re", fcf_re_pattern);
  kv.set("column.fcf_im", fcf_im_pattern);
  kv.set("frequency.center_hz", center_hz);
  kv.set("frequency.span_hz", span_hz);
  if (ctf_points) kv.set("frequency.points", *ctf_points);
  kv.set("fcf.max_lag", max_lag);
  if (geometry) {
    kv.set("grid.rows", geometry->rows);
    kv.set("grid.cols", geometry->cols);
    kv.set("grid.spacing_cm", geometry->spacing_cm);
    kv.set("grid.origin_x_cm", geometry->origin.x);
    kv.set("grid.origin_y_cm", geometry->origin.y);
  }
  if (iterations_per_point) kv.set("iterations_per_point", *iterations_per_point);
  if (!provenance.empty()) kv.set("provenance", provenance);
  return kv;
}

Manifest manifest_for(const MeasurementSet& set) {
  Manifest m;
  m.environment = set.environment;
  m.center_hz = set.frequency.center_hz;
  m.span_hz = set.frequency.span_hz;
  m.ctf_points = set.frequency.n_points;
  if (!set.empty()) m.max_lag = set.measurements.front().fcf.max_lag();
  m.geometry = set.geometry;
  if (set.iterations_per_point > 0) m.iterations_per_point = set.iterations_per_point;
  m.provenance = set.provenance;
  return m;
}

void write_measurements(const MeasurementSet& set, const std::filesystem::path& csv_path,
                        const std::optional<std::filesystem::path>& manifest_path) {
  const auto manifest = manifest_for(set);
  const int n_ctf = set.empty() ? set.frequency.n_points
                                : static_cast<int>(set.measurements.front().ctf.values.size());
  const int n_fcf = set.empty() ? manifest.max_lag + 1
                                : static_cast<int>(set.measurements.front().fcf.values.size());

  std::ostringstream out;
  out << "env,grid_index,x_cm,y_cm,iteration,rss_db";
  for (int i = 0; i < n_ctf; ++i) out << ",ctf_re_" << i << ",ctf_im_" << i;
  for (int i = 0; i < n_fcf; ++i) out << ",fcf_re_" << i << ",fcf_im_" << i;
  out << '\n';
  for (const auto& m : set.measurements) {
    if (static_cast<int>(m.ctf.values.size()) != n_ctf ||
        static_cast<int>(m.fcf.values.size()) != n_fcf)
      throw DataError("cannot write measurement set with inconsistent sweep lengths");
    out << to_string(m.env) << ',' << m.grid_index << ',' << format_double(m.position.x) << ','
        << format_double(m.position.y) << ',' << m.iteration << ',' << format_double(m.rss_db);
    for (const auto& h : m.ctf.values)
      out << ',' << format_double(h.real()) << ',' << format_double(h.imag());
    for (const auto& r : m.fcf.values)
      out << ',' << format_double(r.real()) << ',' << format_double(r.imag());
    out << '\n';
  }

  std::ofstream file(csv_path, std::ios::binary);
  if (!file) throw DataError("cannot write '" + csv_path.string() + "'");
  file << out.str();
  if (!file) throw DataError("write failed for '" + csv_path.string() + "'");
  if (manifest_path) manifest.to_kv().save(*manifest_path);
}

MeasurementSet load_measurements(const std::filesystem::path& path, const Manifest& manifest) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open '" + path.string() + "'");

  MeasurementSet set;
  set.frequency.center_hz = manifest.center_hz;
  set.frequency.span_hz = manifest.span_hz;
  set.frequency.n_points = manifest.ctf_points.value_or(2);
  set.geometry = manifest.geometry;
  set.provenance = manifest.provenance.empty() ? "file " + path.string() : manifest.provenance;
  set.environment = manifest.environment;

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(file, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    for (auto f : split_fields(line, manifest.delimiter)) header.emplace_back(f);
    break;
  }
  if (header.empty()) return set;

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(header[i], i);
  const auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = column.find(name);
    if (it == column.end()) return std::nullopt;
    return it->second;
  };
  const auto require = [&](const std::string& name, const char* role) {
    auto c = find(name);
    if (!c)
      throw DataError(path.string() + ": header lacks " + role + " column '" + name + "'");
    return *c;
  };

  const auto env_col = find(manifest.env_column);
  if (!env_col && !manifest.environment && !manifest.labels_optional)
    throw DataError(path.string() + ": no environment column '" + manifest.env_column +
                    "' and no fixed environment in the manifest");
  const bool has_position = find(manifest.grid_index_column) || find(manifest.x_column) ||
                            find(manifest.y_column) || !manifest.labels_optional;
  std::size_t grid_col = 0, x_col = 0, y_col = 0;
  if (has_position) {
    grid_col = require(manifest.grid_index_column, "grid index");
    x_col = require(manifest.x_column, "x position");
    y_col = require(manifest.y_column, "y position");
  }
  const auto iter_col = find(manifest.iteration_column);
  const auto rss_col = manifest.rss_column.empty() ? std::nullopt : find(manifest.rss_column);

  std::vector<std::pair<std::size_t, std::size_t>> ctf_cols;
  for (int i = 0;; ++i) {
    auto re = find(expand(manifest.ctf_re_pattern, i));
    auto im = find(expand(manifest.ctf_im_pattern, i));
    if (!re && !im) break;
    if (!re || !im)
      throw DataError(path.string() + ": CTF point " + std::to_string(i) + " lacks a real or imaginary column");
    ctf_cols.emplace_back(*re, *im);
  }
  if (ctf_cols.empty()) throw DataError(path.string() + ": no CTF columns found");
  if (manifest.ctf_points && *manifest.ctf_points != static_cast<int>(ctf_cols.size()))
    throw DataError(path.string() + ": manifest declares " + std::to_string(*manifest.ctf_points) +
                    " CTF points but the header has " + std::to_string(ctf_cols.size()));
  set.frequency.n_points = static_cast<int>(ctf_cols.size());
  if (set.frequency.n_points < 2) throw DataError(path.string() + ": CTF sweep needs at least 2 points");

  std::vector<std::pair<std::size_t, std::size_t>> fcf_cols;
  for (int i = 0;; ++i) {
    auto re = find(expand(manifest.fcf_re_pattern, i));
    auto im = find(expand(manifest.fcf_im_pattern, i));
    if (!re && !im) break;
    if (!re || !im)
      throw DataError(path.string() + ": FCF lag " + std::to_string(i) + " lacks a real or imaginary column");
    fcf_cols.emplace_back(*re, *im);
  }
  if (static_cast<int>(fcf_cols.size()) > set.frequency.n_points)
    throw DataError(path.string() + ": more FCF lags than CTF points");
  const int compute_lag = std::min(manifest.max_lag, set.frequency.n_points - 1);

  std::vector<std::string> errors;
  std::size_t error_count = 0;
  std::map<int, int> auto_iteration;
  int max_iteration = -1;

  while (std::getline(file, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, manifest.delimiter);
    try {
      if (fields.size() != header.size())
        throw DataError("expected " + std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
      const auto num = [&](std::size_t col) {
        auto v = parse_double(fields[col]);
        if (!v) throw DataError("column '" + header[col] + "' is not a number");
        if (!std::isfinite(*v)) throw DataError("non-finite value in column '" + header[col] + "'");
        return *v;
      };
      const auto integer = [&](std::size_t col) {
        auto v = parse_int(fields[col]);
        if (!v) throw DataError("column '" + header[col] + "' is not an integer");
        return static_cast<int>(*v);
      };

      Measurement m;
      if (env_col) {
        auto env = parse_environment(fields[*env_col]);
        if (!env) throw DataError("unknown environment label '" + std::string(fields[*env_col]) + "'");
        m.env = *env;
      } else if (manifest.environment) {
        m.env = *manifest.environment;
      }
      if (has_position) {
        m.grid_index = integer(grid_col);
        if (m.grid_index < 0) throw DataError("negative grid index");
        m.position = {num(x_col), num(y_col)};
      }
      if (iter_col) m.iteration = integer(*iter_col);
      else m.iteration = auto_iteration[m.grid_index]++;
      if (m.iteration < 0) throw DataError("negative iteration");
      if (manifest.iterations_per_point && m.iteration >= *manifest.iterations_per_point)
        throw DataError("iteration " + std::to_string(m.iteration) + " outside [0, " +
                        std::to_string(*manifest.iterations_per_point) + ")");
      if (manifest.geometry && has_position) {
        auto idx = manifest.geometry->index_of(m.position);
        if (!idx) throw DataError("position is not on the declared grid");
        if (*idx != m.grid_index)
          throw DataError("grid index " + std::to_string(m.grid_index) +
                          " does not match position (expected " + std::to_string(*idx) + ")");
      }

      m.ctf.grid = set.frequency;
      m.ctf.values.reserve(ctf_cols.size());
      for (auto [re, im] : ctf_cols) m.ctf.values.emplace_back(num(re), num(im));

      if (fcf_cols.empty()) {
        m.fcf = channel::compute_fcf(m.ctf, compute_lag);
      } else {
        m.fcf.lag_step_hz = set.frequency.spacing_hz();
        for (auto [re, im] : fcf_cols) m.fcf.values.emplace_back(num(re), num(im));
      }
      m.rss_db = rss_col ? num(*rss_col) : channel::compute_rss(m.ctf);

      if (set.measurements.empty()) set.environment = m.env;
      else if (set.environment && *set.environment != m.env) set.environment.reset();
      max_iteration = std::max(max_iteration, m.iteration);
      set.measurements.push_back(std::move(m));
    } catch (const DataError& e) {
      ++error_count;
      if (errors.size() < kMaxReportedErrors)
        errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  if (error_count > 0) {
    std::string msg = path.string() + ": " + std::to_string(error_count) + " invalid row(s)";
    for (const auto& e : errors) msg += "\n  " + e;
    if (error_count > errors.size()) msg += "\n  ...";
    throw DataError(msg);
  }
  set.iterations_per_point = manifest.iterations_per_point.value_or(max_iteration + 1);
  return set;
}

} // namespace fingerloc::dataset
