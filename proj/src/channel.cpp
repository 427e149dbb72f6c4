#include "fingerloc/channel.hpp"

#include "fingerloc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fingerloc::channel {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t cell_index(double coord_cm, double cell_cm) {
  return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(coord_cm / cell_cm)));
}

} // namespace

ChannelRealization::ChannelRealization(std::vector<MultipathComponent> components)
    : components_(std::move(components)) {
  if (components_.empty())
    throw std::invalid_argument("channel realization needs at least one component");
  for (const auto& c : components_) {
    if (!(c.amplitude >= 0.0) || !std::isfinite(c.amplitude))
      throw std::invalid_argument("multipath amplitude must be finite and >= 0");
    if (!(c.delay_s >= 0.0) || !std::isfinite(c.delay_s))
      throw std::invalid_argument("multipath delay must be finite and >= 0");
    if (!std::isfinite(c.phase_rad))
      throw std::invalid_argument("multipath phase must be finite");
  }
}

double ChannelRealization::total_amplitude() const {
  return std::accumulate(components_.begin(), components_.end(), 0.0,
                         [](double acc, const MultipathComponent& c) { return acc + c.amplitude; });
}

bool operator==(const ChannelRealization& a, const ChannelRealization& b) {
  return std::equal(a.components_.begin(), a.components_.end(), b.components_.begin(),
                    b.components_.end(), [](const auto& x, const auto& y) {
                      return x.amplitude == y.amplitude && x.delay_s == y.delay_s &&
                             x.phase_rad == y.phase_rad;
                    });
}

void FrequencyGrid::validate() const {
  if (n_points < 2) throw std::invalid_argument("frequency grid needs at least 2 points");
  if (!(span_hz > 0.0)) throw std::invalid_argument("frequency span must be positive");
  if (!(center_hz > 0.0)) throw std::invalid_argument("center frequency must be positive");
  if (center_hz - span_hz / 2 < 0.0)
    throw std::invalid_argument("frequency grid extends below 0 Hz");
}

void EnvironmentProfile::validate() const {
  if (multipath_min < 1 || multipath_max < multipath_min)
    throw std::invalid_argument("profile " + std::string(to_string(label)) +
                                ": empty or invalid multipath count range");
  if (!(delay_spread_s > 0.0))
    throw std::invalid_argument("profile: delay spread must be positive");
  if (!(los_power_ratio >= 0.0))
    throw std::invalid_argument("profile: dominant-path power ratio must be >= 0");
  if (!(amplitude_decay_s > 0.0))
    throw std::invalid_argument("profile: amplitude decay must be positive");
  if (!(path_loss_exponent >= 0.0))
    throw std::invalid_argument("profile: path loss exponent must be >= 0");
  if (!(carrier_hz > 0.0))
    throw std::invalid_argument("profile: carrier frequency must be positive");
  if (!(coherence_cell_cm > 0.0))
    throw std::invalid_argument("profile: coherence cell must be positive");
  if (!(phase_jitter_rad >= 0.0) || !(amplitude_jitter >= 0.0) ||
      !(common_phase_jitter_rad >= 0.0))
    throw std::invalid_argument("profile: jitter terms must be >= 0");
}

EnvironmentProfile default_profile(Environment env) {
  EnvironmentProfile p;
  p.label = env;
  switch (env) {
  case Environment::Lab:
    p.multipath_min = 15;
    p.multipath_max = 25;
    p.delay_spread_s = 40e-9;
    p.los_power_ratio = 0.5;
    p.amplitude_decay_s = 30e-9;
    break;
  case Environment::NarrowCorridor:
    p.multipath_min = 10;
    p.multipath_max = 15;
    p.delay_spread_s = 25e-9;
    p.los_power_ratio = 1.0;
    p.amplitude_decay_s = 25e-9;
    break;
  case Environment::Lobby:
    p.multipath_min = 5;
    p.multipath_max = 10;
    p.delay_spread_s = 20e-9;
    p.los_power_ratio = 2.0;
    p.amplitude_decay_s = 20e-9;
    break;
  case Environment::SportsHall:
    p.multipath_min = 2;
    p.multipath_max = 5;
    p.delay_spread_s = 10e-9;
    p.los_power_ratio = 4.0;
    p.amplitude_decay_s = 15e-9;
    break;
  }
  return p;
}

std::vector<EnvironmentProfile> profiles_from_config(const KeyValueFile& kv) {
  std::vector<EnvironmentProfile> out;
  for (auto env : kAllEnvironments) out.push_back(default_profile(env));

  for (const auto& key : kv.keys()) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) continue;
    const auto env = environment_from_string(key.substr(0, dot));
    auto& p = out[static_cast<std::size_t>(env)];
    const auto field = key.substr(dot + 1);
    if (field == "multipath_min") p.multipath_min = static_cast<int>(kv.require_int(key));
    else if (field == "multipath_max") p.multipath_max = static_cast<int>(kv.require_int(key));
    else if (field == "delay_spread_ns") p.delay_spread_s = kv.require_double(key) * 1e-9;
    else if (field == "los_power_ratio") p.los_power_ratio = kv.require_double(key);
    else if (field == "amplitude_decay_ns") p.amplitude_decay_s = kv.require_double(key) * 1e-9;
    else if (field == "path_loss_exponent") p.path_loss_exponent = kv.require_double(key);
    else if (field == "transmitter_x_cm") p.transmitter_cm.x = kv.require_double(key);
    else if (field == "transmitter_y_cm") p.transmitter_cm.y = kv.require_double(key);
    else if (field == "carrier_hz") p.carrier_hz = kv.require_double(key);
    else if (field == "coherence_cell_cm") p.coherence_cell_cm = kv.require_double(key);
    else if (field == "phase_jitter_rad") p.phase_jitter_rad = kv.require_double(key);
    else if (field == "amplitude_jitter") p.amplitude_jitter = kv.require_double(key);
    else if (field == "common_phase_jitter_rad") p.common_phase_jitter_rad = kv.require_double(key);
    else if (field == "snr_db") {
      const auto v = kv.require(key);
      if (v == "off" || v == "none") p.snr_db.reset();
      else p.snr_db = kv.require_double(key);
    } else {
      throw DataError("unknown profile field '" + key + "'");
    }
  }
  for (const auto& p : out) {
    try {
      p.validate();
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    }
  }
  return out;
}

void profiles_to_config(const std::vector<EnvironmentProfile>& profiles, KeyValueFile& kv) {
  for (const auto& p : profiles) {
    const std::string s(to_string(p.label));
    kv.set(s + ".multipath_min", p.multipath_min);
    kv.set(s + ".multipath_max", p.multipath_max);
    kv.set(s + ".delay_spread_ns", p.delay_spread_s * 1e9);
    kv.set(s + ".los_power_ratio", p.los_power_ratio);
    kv.set(s + ".amplitude_decay_ns", p.amplitude_decay_s * 1e9);
    kv.set(s + ".path_loss_exponent", p.path_loss_exponent);
    kv.set(s + ".transmitter_x_cm", p.transmitter_cm.x);
    kv.set(s + ".transmitter_y_cm", p.transmitter_cm.y);
    kv.set(s + ".carrier_hz", p.carrier_hz);
    kv.set(s + ".coherence_cell_cm", p.coherence_cell_cm);
    kv.set(s + ".phase_jitter_rad", p.phase_jitter_rad);
    kv.set(s + ".amplitude_jitter", p.amplitude_jitter);
    kv.set(s + ".common_phase_jitter_rad", p.common_phase_jitter_rad);
    kv.set(s + ".snr_db", p.snr_db ? format_double(*p.snr_db) : std::string("off"));
  }
}

CtfSweep synth_ctf(const ChannelRealization& realization, const FrequencyGrid& grid) {
  grid.validate();
  CtfSweep out{grid, std::vector<Complex>(static_cast<std::size_t>(grid.n_points))};
  for (int i = 0; i < grid.n_points; ++i) {
    const double f = grid.frequency(i);
    Complex h{0.0, 0.0};
    for (const auto& c : realization.components())
      h += std::polar(c.amplitude, -(kTwoPi * f * c.delay_s - c.phase_rad));
    out.values[static_cast<std::size_t>(i)] = h;
  }
  return out;
}

FcfSweep compute_fcf(const CtfSweep& ctf, int max_lag) {
  const auto n = static_cast<int>(ctf.values.size());
  if (max_lag < 0 || max_lag >= n)
    throw std::invalid_argument("FCF max lag " + std::to_string(max_lag) +
                                " out of range for sweep of " + std::to_string(n) + " points");
  FcfSweep out;
  out.lag_step_hz = ctf.grid.n_points >= 2 ? ctf.grid.spacing_hz() : 0.0;
  out.values.resize(static_cast<std::size_t>(max_lag) + 1);
  const auto& h = ctf.values;
  for (int m = 0; m <= max_lag; ++m) {
    Complex acc{0.0, 0.0};
    for (int k = 0; k + m < n; ++k)
      acc += h[static_cast<std::size_t>(k)] * std::conj(h[static_cast<std::size_t>(k + m)]);
    out.values[static_cast<std::size_t>(m)] = acc / static_cast<double>(n - m);
  }
  return out;
}

double compute_rss(const CtfSweep& ctf, double floor_db) {
  if (ctf.values.empty()) throw std::invalid_argument("RSS of an empty sweep");
  double power = 0.0;
  for (const auto& h : ctf.values) power += std::norm(h);
  power /= static_cast<double>(ctf.values.size());
  if (!(power > 0.0)) return floor_db;
  return std::max(10.0 * std::log10(power), floor_db);
}

ChannelRealization draw_realization(const EnvironmentProfile& profile, Point2 position,
                                    std::uint64_t seed) {
  profile.validate();

  const auto cx = cell_index(position.x, profile.coherence_cell_cm);
  const auto cy = cell_index(position.y, profile.coherence_cell_cm);
  Rng rng(hash_seed({seed, static_cast<std::uint64_t>(profile.label) + 1, cx, cy}));

  const auto count = static_cast<std::size_t>(
      rng.uniform_int(profile.multipath_min, profile.multipath_max));

  std::vector<double> excess(count, 0.0);
  std::vector<double> gain(count, 0.0);
  std::vector<double> arrival(count, 0.0);
  std::vector<double> base_phase(count, 0.0);
  for (std::size_t l = 0; l < count; ++l) {
    excess[l] = l == 0 ? 0.0 : rng.exponential(profile.delay_spread_s);
    const double re = rng.normal();
    const double im = rng.normal();
    gain[l] = std::hypot(re, im) / std::numbers::sqrt2;
    arrival[l] = rng.uniform(0.0, kTwoPi);
    base_phase[l] = rng.uniform(0.0, kTwoPi);
  }

  std::vector<double> amplitude(count);
  double scattered_power = 0.0;
  for (std::size_t l = 1; l < count; ++l) {
    amplitude[l] = std::exp(-excess[l] / profile.amplitude_decay_s) * gain[l];
    scattered_power += amplitude[l] * amplitude[l];
  }
  amplitude[0] = count > 1 ? std::sqrt(profile.los_power_ratio * scattered_power) : 1.0;

  const double distance_m =
      std::max(planar_distance(position, profile.transmitter_cm) / 100.0, 0.1);
  const double path_gain = std::pow(distance_m, -profile.path_loss_exponent / 2.0);
  const double los_delay = distance_m / kSpeedOfLight;
  const double px_m = position.x / 100.0;
  const double py_m = position.y / 100.0;

  std::vector<MultipathComponent> components(count);
  for (std::size_t l = 0; l < count; ++l) {
    auto& c = components[l];
    c.amplitude = amplitude[l] * path_gain;
    c.delay_s = los_delay + excess[l];
    if (l == 0) {
      c.phase_rad = 0.0;
    } else {
      const double along = std::cos(arrival[l]) * px_m + std::sin(arrival[l]) * py_m;
      c.phase_rad = std::remainder(base_phase[l] - kTwoPi * profile.carrier_hz * along / kSpeedOfLight,
                                   kTwoPi);
    }
  }
  return ChannelRealization(std::move(components));
}

ChannelRealization perturb_realization(const ChannelRealization& base,
                                       const EnvironmentProfile& profile,
                                       std::uint64_t sub_seed) {
  Rng rng(sub_seed);
  const double common = rng.normal(0.0, profile.common_phase_jitter_rad);
  auto components = base.components();
  for (auto& c : components) {
    c.phase_rad += common + rng.normal(0.0, profile.phase_jitter_rad);
    c.amplitude = std::max(0.0, c.amplitude * (1.0 + rng.normal(0.0, profile.amplitude_jitter)));
  }
  return ChannelRealization(std::move(components));
}

void add_noise(CtfSweep& ctf, double snr_db, Rng& rng) {
  double power = 0.0;
  for (const auto& h : ctf.values) power += std::norm(h);
  if (ctf.values.empty() || power <= 0.0) return;
  power /= static_cast<double>(ctf.values.size());
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0) / 2.0);
  for (auto& h : ctf.values) {
    const double re = rng.normal(0.0, sigma);
    const double im = rng.normal(0.0, sigma);
    h += Complex(re, im);
  }
}

} // namespace fingerloc::channel
