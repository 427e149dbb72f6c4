#include "fingerloc/features.hpp"

#include "fingerloc/kv.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace fingerloc::features {

namespace {

std::string normalized(std::string_view text) {
  std::string out;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c)))
      out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

int resolved_bin(const FeatureRepr& repr, int ctf_points) {
  return repr.scalar_bin.value_or(ctf_points / 2);
}

} // namespace

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
  case FeatureKind::Rss: return "RSS";
  case FeatureKind::Ctf: return "CTF";
  case FeatureKind::Fcf: return "FCF";
  case FeatureKind::RssCtf: return "RSS+CTF";
  case FeatureKind::RssFcf: return "RSS+FCF";
  case FeatureKind::CtfFcf: return "CTF+FCF";
  case FeatureKind::RssCtfFcf: return "RSS+CTF+FCF";
  }
  return "?";
}

std::optional<FeatureKind> parse_feature_kind(std::string_view text) {
  const auto key = normalized(text);
  for (auto kind : kAllFeatureKinds)
    if (key == to_string(kind)) return kind;
  return std::nullopt;
}

FeatureKind feature_kind_from_string(std::string_view text) {
  auto kind = parse_feature_kind(text);
  if (!kind) throw std::invalid_argument("unknown feature kind '" + std::string(text) + "'");
  return *kind;
}

bool uses_rss(FeatureKind kind) {
  return kind == FeatureKind::Rss || kind == FeatureKind::RssCtf || kind == FeatureKind::RssFcf ||
         kind == FeatureKind::RssCtfFcf;
}

bool uses_ctf(FeatureKind kind) {
  return kind == FeatureKind::Ctf || kind == FeatureKind::RssCtf || kind == FeatureKind::CtfFcf ||
         kind == FeatureKind::RssCtfFcf;
}

bool uses_fcf(FeatureKind kind) {
  return kind == FeatureKind::Fcf || kind == FeatureKind::RssFcf || kind == FeatureKind::CtfFcf ||
         kind == FeatureKind::RssCtfFcf;
}

int block_count(FeatureKind kind) {
  return int{uses_rss(kind)} + int{uses_ctf(kind)} + int{uses_fcf(kind)};
}

std::string_view to_string(ReprMode mode) { return mode == ReprMode::Scalar ? "scalar" : "sweep"; }

ReprMode repr_mode_from_string(std::string_view text) {
  const auto key = normalized(text);
  if (key == "SCALAR") return ReprMode::Scalar;
  if (key == "SWEEP") return ReprMode::Sweep;
  throw std::invalid_argument("unknown feature representation '" + std::string(text) + "'");
}

std::string_view to_string(Scaling scaling) { return scaling == Scaling::Raw ? "raw" : "zscore"; }

Scaling scaling_from_string(std::string_view text) {
  const auto key = normalized(text);
  if (key == "RAW") return Scaling::Raw;
  if (key == "ZSCORE") return Scaling::ZScore;
  throw std::invalid_argument("unknown scaling '" + std::string(text) + "'");
}

std::size_t feature_dim(FeatureKind kind, const FeatureRepr& repr, int ctf_points) {
  std::size_t dim = 0;
  if (uses_rss(kind)) dim += 1;
  if (repr.mode == ReprMode::Scalar) {
    if (uses_ctf(kind)) dim += 2;
    if (uses_fcf(kind)) dim += 2;
  } else {
    if (uses_ctf(kind)) dim += 2 * static_cast<std::size_t>(ctf_points);
    if (uses_fcf(kind)) dim += 2 * static_cast<std::size_t>(repr.max_lag + 1);
  }
  return dim;
}

FeatureVector build_feature(const dataset::Measurement& m, FeatureKind kind, const FeatureRepr& repr) {
  const auto n_ctf = static_cast<int>(m.ctf.values.size());
  const auto n_fcf = static_cast<int>(m.fcf.values.size());
  if (repr.max_lag < 0) throw std::invalid_argument("max lag must be >= 0");

  FeatureVector out;
  out.kind = kind;
  out.position = m.position;
  out.env = m.env;
  out.values.reserve(feature_dim(kind, repr, n_ctf));

  if (uses_rss(kind)) out.values.push_back(m.rss_db);

  if (repr.mode == ReprMode::Scalar) {
    const int bin = resolved_bin(repr, n_ctf);
    const int lag = std::min(bin, repr.max_lag);
    if (uses_ctf(kind)) {
      if (bin < 0 || bin >= n_ctf)
        throw std::invalid_argument("CTF bin " + std::to_string(bin) + " out of range");
      const auto h = m.ctf.values[static_cast<std::size_t>(bin)];
      out.values.push_back(h.real());
      out.values.push_back(h.imag());
    }
    if (uses_fcf(kind)) {
      if (lag < 0 || lag >= n_fcf)
        throw std::invalid_argument("FCF lag " + std::to_string(lag) + " out of range");
      const auto r = m.fcf.values[static_cast<std::size_t>(lag)];
      out.values.push_back(r.real());
      out.values.push_back(r.imag());
    }
  } else {
    if (uses_ctf(kind)) {
      for (const auto& h : m.ctf.values) {
        out.values.push_back(h.real());
        out.values.push_back(h.imag());
      }
    }
    if (uses_fcf(kind)) {
      if (repr.max_lag >= n_fcf)
        throw std::invalid_argument("FCF max lag " + std::to_string(repr.max_lag) +
                                    " exceeds the " + std::to_string(n_fcf) + " stored lags");
      for (int i = 0; i <= repr.max_lag; ++i) {
        const auto r = m.fcf.values[static_cast<std::size_t>(i)];
        out.values.push_back(r.real());
        out.values.push_back(r.imag());
      }
    }
  }
  return out;
}

void ScalingParams::apply(std::span<double> values) const {
  if (values.size() != mean.size())
    throw std::invalid_argument("scaling dimension mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = (values[i] - mean[i]) / scale[i];
}

ScalingParams fit_zscore(std::span<const FeatureVector> vectors, std::vector<std::string>* warnings) {
  if (vectors.empty()) throw std::invalid_argument("cannot fit scaling on an empty set");
  const auto dim = vectors.front().values.size();
  ScalingParams p{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  const auto n = static_cast<double>(vectors.size());
  for (const auto& v : vectors)
    for (std::size_t i = 0; i < dim; ++i) p.mean[i] += v.values[i];
  for (auto& m : p.mean) m /= n;
  for (const auto& v : vectors)
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = v.values[i] - p.mean[i];
      p.scale[i] += d * d;
    }
  for (std::size_t i = 0; i < dim; ++i) {
    p.scale[i] = std::sqrt(p.scale[i] / n);
    if (!(p.scale[i] > 0.0)) {
      p.scale[i] = 1.0;
      if (warnings)
        warnings->push_back("feature dimension " + std::to_string(i) +
                            " has zero variance; using unit scale");
    }
  }
  return p;
}

FeatureMatrix build_matrix(const dataset::MeasurementSet& set, FeatureKind kind,
                           const FeatureRepr& repr, Scaling scaling) {
  if (set.empty()) throw std::invalid_argument("cannot build a feature matrix from an empty set");
  FeatureMatrix out;
  out.kind = kind;
  out.repr = repr;
  out.scaling = scaling;
  out.vectors.reserve(set.size());
  for (const auto& m : set.measurements) out.vectors.push_back(build_feature(m, kind, repr));

  const auto dim = out.vectors.front().values.size();
  for (const auto& v : out.vectors)
    if (v.values.size() != dim)
      throw DataError("measurements produce feature vectors of different lengths");

  if (scaling == Scaling::ZScore) {
    out.params = fit_zscore(out.vectors, &out.warnings);
    for (auto& v : out.vectors) out.params->apply(v.values);
  }
  return out;
}

} // namespace fingerloc::features
