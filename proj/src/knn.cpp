#include "fingerloc/knn.hpp"

#include "fingerloc/kv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fingerloc::knn {

namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.index < b.index;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

std::vector<double> split_doubles(std::string_view text, const std::string& origin) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (auto f : split_fields(text, ';')) {
    auto v = parse_double(f);
    if (!v) throw DataError(origin + ": bad number '" + std::string(f) + "' in scaling parameters");
    out.push_back(*v);
  }
  return out;
}

} // namespace

FingerprintModel::FingerprintModel(features::FeatureKind kind, features::FeatureRepr repr,
                                   features::Scaling scaling,
                                   std::optional<features::ScalingParams> params,
                                   std::span<const features::FeatureVector> vectors)
    : kind_(kind), repr_(std::move(repr)), scaling_(scaling), params_(std::move(params)) {
  if (vectors.empty()) throw std::invalid_argument("fingerprint model needs at least one vector");
  dim_ = vectors.front().values.size();
  if (params_ && (params_->mean.size() != dim_ || params_->scale.size() != dim_))
    throw std::invalid_argument("scaling parameters do not match feature dimension");
  data_.reserve(vectors.size() * dim_);
  positions_.reserve(vectors.size());
  labels_.reserve(vectors.size());
  for (const auto& v : vectors) {
    if (v.values.size() != dim_)
      throw std::invalid_argument("fingerprint vectors must share one dimensionality");
    data_.insert(data_.end(), v.values.begin(), v.values.end());
    positions_.push_back(v.position);
    labels_.push_back(v.env);
  }
}

FingerprintModel FingerprintModel::fit(const dataset::MeasurementSet& train,
                                       features::FeatureKind kind,
                                       const features::FeatureRepr& repr,
                                       features::Scaling scaling) {
  auto matrix = features::build_matrix(train, kind, repr, scaling);
  return FingerprintModel(kind, repr, scaling, std::move(matrix.params), matrix.vectors);
}

std::vector<double> FingerprintModel::query_for(const dataset::Measurement& m) const {
  auto v = features::build_feature(m, kind_, repr_).values;
  if (v.size() != dim_)
    throw DataError("measurement yields a " + std::to_string(v.size()) +
                    "-dimensional feature, model expects " + std::to_string(dim_));
  if (params_) params_->apply(v);
  return v;
}

void FingerprintModel::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "#! kind = " << features::to_string(kind_) << '\n'
      << "#! repr = " << features::to_string(repr_.mode) << '\n'
      << "#! scalar_bin = " << (repr_.scalar_bin ? std::to_string(*repr_.scalar_bin) : "center") << '\n'
      << "#! max_lag = " << repr_.max_lag << '\n'
      << "#! scaling = " << features::to_string(scaling_) << '\n'
      << "#! dim = " << dim_ << '\n'
      << "#! size = " << size() << '\n';
  if (params_) {
    out << "#! scale_mean = " << join(params_->mean) << '\n'
        << "#! scale_std = " << join(params_->scale) << '\n';
  }
  out << "env,x_cm,y_cm";
  for (std::size_t i = 0; i < dim_; ++i) out << ",f" << i;
  out << '\n';
  for (std::size_t r = 0; r < size(); ++r) {
    out << to_string(labels_[r]) << ',' << format_double(positions_[r].x) << ','
        << format_double(positions_[r].y);
    for (double v : row(r)) out << ',' << format_double(v);
    out << '\n';
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write '" + path.string() + "'");
  file << out.str();
  if (!file) throw DataError("write failed for '" + path.string() + "'");
}

FingerprintModel FingerprintModel::load(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open '" + path.string() + "'");
  const auto origin = path.string();

  std::string meta_text;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  FingerprintModel model;
  std::size_t declared_size = 0;

  while (std::getline(file, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("#!", 0) == 0) {
      meta_text += line.substr(2) + '\n';
      continue;
    }
    if (trim(line).empty()) continue;
    if (!header_seen) {
      header_seen = true;
      const auto meta = KeyValueFile::parse(meta_text, origin);
      try {
        model.kind_ = features::feature_kind_from_string(meta.require("kind"));
        model.repr_.mode = features::repr_mode_from_string(meta.require("repr"));
        model.scaling_ = features::scaling_from_string(meta.require("scaling"));
      } catch (const std::invalid_argument& e) {
        throw DataError(origin + ": " + e.what());
      }
      const auto bin = meta.require("scalar_bin");
      if (bin != "center") {
        auto b = parse_int(bin);
        if (!b) throw DataError(origin + ": bad scalar_bin");
        model.repr_.scalar_bin = static_cast<int>(*b);
      }
      model.repr_.max_lag = static_cast<int>(meta.require_int("max_lag"));
      model.dim_ = static_cast<std::size_t>(meta.require_int("dim"));
      declared_size = static_cast<std::size_t>(meta.require_int("size"));
      if (meta.contains("scale_mean")) {
        features::ScalingParams p{split_doubles(meta.require("scale_mean"), origin),
                                  split_doubles(meta.require("scale_std"), origin)};
        if (p.mean.size() != model.dim_ || p.scale.size() != model.dim_)
          throw DataError(origin + ": scaling parameters do not match dim");
        model.params_ = std::move(p);
      }
      if (split_fields(line, ',').size() != model.dim_ + 3)
        throw DataError(origin + ":" + std::to_string(line_no) + ": header width does not match dim");
      continue;
    }
    const auto fields = split_fields(line, ',');
    const auto where = origin + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != model.dim_ + 3) throw DataError(where + "wrong number of fields");
    auto env = parse_environment(fields[0]);
    if (!env) throw DataError(where + "unknown environment label '" + std::string(fields[0]) + "'");
    auto x = parse_double(fields[1]);
    auto y = parse_double(fields[2]);
    if (!x || !y) throw DataError(where + "bad position");
    model.labels_.push_back(*env);
    model.positions_.push_back({*x, *y});
    for (std::size_t i = 0; i < model.dim_; ++i) {
      auto v = parse_double(fields[i + 3]);
      if (!v || !std::isfinite(*v)) throw DataError(where + "bad feature value");
      model.data_.push_back(*v);
    }
  }
  if (!header_seen) throw DataError(origin + ": missing model header");
  if (model.size() == 0) throw DataError(origin + ": model has no rows");
  if (model.size() != declared_size)
    throw DataError(origin + ": declared " + std::to_string(declared_size) + " rows, found " +
                    std::to_string(model.size()));
  return model;
}

double distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("distance between vectors of length " + std::to_string(a.size()) +
                                " and " + std::to_string(b.size()));
  // Four independent partial sums so the loop pipelines/vectorizes.
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double d = a[i + j] - b[i + j];
      s[j] += d * d;
    }
  }
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s[0] += d * d;
  }
  return std::sqrt((s[0] + s[1]) + (s[2] + s[3]));
}

double distance(const features::FeatureVector& a, const features::FeatureVector& b) {
  return distance(a.values, b.values);
}

std::vector<Neighbor> nearest(const FingerprintModel& model, std::span<const double> query, int k) {
  if (query.size() != model.dim())
    throw std::invalid_argument("query has " + std::to_string(query.size()) +
                                " dimensions, model has " + std::to_string(model.dim()));
  if (k < 1 || static_cast<std::size_t>(k) > model.size())
    throw std::invalid_argument("k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(model.size()) + "]");

  std::vector<Neighbor> all(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) all[i] = {i, distance(model.row(i), query)};

  const auto kk = static_cast<std::size_t>(k);
  if (kk < all.size()) {
    std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk - 1), all.end(), closer);
    all.resize(kk);
  }
  std::sort(all.begin(), all.end(), closer);
  return all;
}

Environment vote(const FingerprintModel& model, std::span<const Neighbor> neighbors) {
  if (neighbors.empty()) throw std::invalid_argument("vote over an empty neighbor list");
  std::map<Environment, std::pair<int, std::size_t>> tally; // count, first rank
  for (std::size_t r = 0; r < neighbors.size(); ++r) {
    auto [it, inserted] = tally.try_emplace(model.label(neighbors[r].index), 0, r);
    ++it->second.first;
  }
  auto best = tally.begin();
  for (auto it = tally.begin(); it != tally.end(); ++it) {
    const auto& [count, rank] = it->second;
    if (count > best->second.first || (count == best->second.first && rank < best->second.second))
      best = it;
  }
  return best->first;
}

Point2 aggregate_position(const FingerprintModel& model, std::span<const Neighbor> neighbors,
                          bool weighted) {
  if (neighbors.empty()) throw std::invalid_argument("position of an empty neighbor list");
  if (weighted) {
    const bool exact = std::any_of(neighbors.begin(), neighbors.end(),
                                   [](const Neighbor& n) { return n.distance == 0.0; });
    double wsum = 0.0;
    Point2 acc;
    for (const auto& n : neighbors) {
      const double w = exact ? (n.distance == 0.0 ? 1.0 : 0.0) : 1.0 / n.distance;
      const auto p = model.position(n.index);
      acc.x += w * p.x;
      acc.y += w * p.y;
      wsum += w;
    }
    return {acc.x / wsum, acc.y / wsum};
  }
  Point2 acc;
  for (const auto& n : neighbors) {
    const auto p = model.position(n.index);
    acc.x += p.x;
    acc.y += p.y;
  }
  const auto count = static_cast<double>(neighbors.size());
  return {acc.x / count, acc.y / count};
}

Environment classify(const FingerprintModel& model, std::span<const double> query, int k) {
  const auto neighbors = nearest(model, query, k);
  return vote(model, neighbors);
}

Point2 locate(const FingerprintModel& model, std::span<const double> query, const KnnConfig& config) {
  const auto neighbors = nearest(model, query, config.k);
  return aggregate_position(model, neighbors, config.distance_weighted);
}

} // namespace fingerloc::knn
