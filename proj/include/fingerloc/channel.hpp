#pragma once

#include "fingerloc/kv.hpp"
#include "fingerloc/types.hpp"

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

namespace fingerloc {
class Rng;
}

namespace fingerloc::channel {

using Complex = std::complex<double>;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kDefaultRssFloorDb = -150.0;

/// One propagation path: linear gain, delay in seconds, phase in radians.
struct MultipathComponent {
  double amplitude = 0.0;
  double delay_s = 0.0;
  double phase_rad = 0.0;
};

/// Non-empty set of multipath components at one spatial point.
class ChannelRealization {
public:
  explicit ChannelRealization(std::vector<MultipathComponent> components);

  const std::vector<MultipathComponent>& components() const { return components_; }
  std::size_t size() const { return components_.size(); }

  /// Sum of path amplitudes; upper bound on |H(f)|.
  double total_amplitude() const;

  friend bool operator==(const ChannelRealization& a, const ChannelRealization& b);

private:
  std::vector<MultipathComponent> components_;
};

/// Uniform frequency sweep: point i = center - span/2 + i * span / (n - 1).
struct FrequencyGrid {
  double center_hz = 2.4e9;
  double span_hz = 100e6;
  int n_points = 64;

  void validate() const;
  double spacing_hz() const { return span_hz / (n_points - 1); }
  double frequency(int i) const { return center_hz - span_hz / 2 + i * spacing_hz(); }

  friend bool operator==(const FrequencyGrid&, const FrequencyGrid&) = default;
};

/// Channel transfer function sampled on a FrequencyGrid.
struct CtfSweep {
  FrequencyGrid grid;
  std::vector<Complex> values;
};

/// Frequency coherence function: autocorrelation of a CtfSweep at lags
/// 0, 1, ..., values.size() - 1 in units of lag_step_hz.
struct FcfSweep {
  double lag_step_hz = 0.0;
  std::vector<Complex> values;

  int max_lag() const { return static_cast<int>(values.size()) - 1; }
  double lag_hz(int m) const { return m * lag_step_hz; }
};

/// Parametric description of one indoor environment class.
///
/// The first block (multipath counts, delay spread, dominant-path ratio and
/// amplitude decay) shapes the scattering; the second block places a
/// transmitter so that every position has a distinct path loss and
/// line-of-sight delay; the last block controls the variation between
/// repeated measurements at the same point.
struct EnvironmentProfile {
  Environment label = Environment::Lab;
  int multipath_min = 15;
  int multipath_max = 25;
  double delay_spread_s = 40e-9;
  double los_power_ratio = 0.5;
  double amplitude_decay_s = 30e-9;

  double path_loss_exponent = 2.0;
  Point2 transmitter_cm{-200.0, 325.0};
  /// Carrier used for the arrival-angle phase progression across positions.
  double carrier_hz = 2.4e9;
  /// Positions within the same square cell share L, delays and gains.
  double coherence_cell_cm = 350.0;

  double phase_jitter_rad = 0.005;
  double amplitude_jitter = 0.001;
  double common_phase_jitter_rad = 0.3;
  /// Additive complex Gaussian noise; nullopt disables it.
  std::optional<double> snr_db;

  void validate() const;
};

EnvironmentProfile default_profile(Environment env);

/// Reads `<Label>.<field>` keys over the defaults for each environment.
/// Unknown labels and unparsable values throw DataError.
std::vector<EnvironmentProfile> profiles_from_config(const KeyValueFile& kv);
void profiles_to_config(const std::vector<EnvironmentProfile>& profiles, KeyValueFile& kv);

CtfSweep synth_ctf(const ChannelRealization& realization, const FrequencyGrid& grid);

/// R[m] = 1/(N-m) * sum_{n=0}^{N-1-m} H[n] conj(H[n+m]), m = 0..max_lag.
/// Throws std::invalid_argument unless 0 <= max_lag < N.
FcfSweep compute_fcf(const CtfSweep& ctf, int max_lag);

/// Wideband mean power in dB; all-zero sweeps map to floor_db.
double compute_rss(const CtfSweep& ctf, double floor_db = kDefaultRssFloorDb);

/// Large-scale draw for the cell containing `position`, then geometric
/// adjustments (path loss, line-of-sight delay, arrival-angle phase) for the
/// exact position. Pure function of its arguments.
ChannelRealization draw_realization(const EnvironmentProfile& profile, Point2 position,
                                    std::uint64_t seed);

/// Per-measurement variation: small phase and gain jitter on every path plus
/// a common phase offset. Delays and path count are held.
ChannelRealization perturb_realization(const ChannelRealization& base,
                                       const EnvironmentProfile& profile,
                                       std::uint64_t sub_seed);

/// Adds circular complex Gaussian noise at the given SNR relative to the
/// sweep's mean power.
void add_noise(CtfSweep& ctf, double snr_db, Rng& rng);

} // namespace fingerloc::channel
