#include "fingerloc/channel.hpp"
#include "fingerloc/rng.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace fingerloc;
using namespace fingerloc::channel;

namespace {

constexpr double kPi = std::numbers::pi;

// Direct evaluation of H(f) = sum_l a_l exp(-j(2 pi f tau_l - theta_l)).
Complex direct_ctf(const std::vector<MultipathComponent>& paths, double f) {
  double re = 0.0, im = 0.0;
  for (const auto& p : paths) {
    const double arg = 2.0 * kPi * f * p.delay_s - p.phase_rad;
    re += p.amplitude * std::cos(arg);
    im -= p.amplitude * std::sin(arg);
  }
  return {re, im};
}

double rel_err(Complex a, Complex b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

double magnitude_variance(const CtfSweep& s) {
  double mean = 0.0;
  for (auto h : s.values) mean += std::abs(h);
  mean /= static_cast<double>(s.values.size());
  double var = 0.0;
  for (auto h : s.values) var += (std::abs(h) - mean) * (std::abs(h) - mean);
  return var / static_cast<double>(s.values.size() - 1);
}

} // namespace

TEST(FrequencyGrid, PointsFollowLinearLayout) {
  FrequencyGrid g{2.4e9, 100e6, 5};
  EXPECT_DOUBLE_EQ(g.frequency(0), 2.35e9);
  EXPECT_DOUBLE_EQ(g.frequency(4), 2.45e9);
  EXPECT_DOUBLE_EQ(g.frequency(2), 2.4e9);
  EXPECT_THROW((FrequencyGrid{2.4e9, 100e6, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((FrequencyGrid{2.4e9, 0.0, 8}.validate()), std::invalid_argument);
}

TEST(Realization, RejectsInvalidComponents) {
  EXPECT_THROW(ChannelRealization({}), std::invalid_argument);
  EXPECT_THROW(ChannelRealization({{-1.0, 0.0, 0.0}}), std::invalid_argument);
  EXPECT_THROW(ChannelRealization({{1.0, -1e-9, 0.0}}), std::invalid_argument);
  EXPECT_THROW(ChannelRealization({{1.0, 0.0, NAN}}), std::invalid_argument);
}

TEST(SynthCtf, UnitZeroDelayPathIsFlatOne) {
  ChannelRealization r({{1.0, 0.0, 0.0}});
  for (int n : {2, 7, 64}) {
    const auto s = synth_ctf(r, {2.4e9, 100e6, n});
    ASSERT_EQ(static_cast<int>(s.values.size()), n);
    for (auto h : s.values) {
      EXPECT_NEAR(h.real(), 1.0, 1e-15);
      EXPECT_NEAR(h.imag(), 0.0, 1e-15);
    }
  }
}

TEST(SynthCtf, OpposedPathsCancel) {
  ChannelRealization r({{1.0, 0.0, 0.0}, {1.0, 0.0, kPi}});
  for (auto h : synth_ctf(r, {}).values) EXPECT_NEAR(std::abs(h), 0.0, 1e-12);
}

TEST(SynthCtf, MatchesDirectSumOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<MultipathComponent> paths;
    for (int l = 0; l < 3; ++l)
      paths.push_back({rng.uniform(0.1, 2.0), rng.uniform(0.0, 200e-9), rng.uniform(-kPi, kPi)});
    const FrequencyGrid g{2.4e9, 100e6, 64};
    const auto s = synth_ctf(ChannelRealization(paths), g);
    for (int i = 0; i < g.n_points; ++i)
      EXPECT_LT(rel_err(s.values[i], direct_ctf(paths, g.frequency(i))), 1e-12);
  }
}

TEST(SynthCtf, MagnitudeBoundedByTotalAmplitude) {
  for (auto env : kAllEnvironments) {
    const auto p = default_profile(env);
    for (int i = 0; i < 20; ++i) {
      const auto r = draw_realization(p, {50.0 * i, 25.0 * i}, 3);
      for (auto h : synth_ctf(r, {}).values) {
        EXPECT_TRUE(std::isfinite(h.real()) && std::isfinite(h.imag()));
        EXPECT_LE(std::abs(h), r.total_amplitude() * (1 + 1e-12));
      }
    }
  }
}

TEST(Fcf, ConstantSweepGivesSquaredMagnitude) {
  CtfSweep s;
  s.grid.n_points = 32;
  const Complex c{3.0, -4.0};
  s.values.assign(32, c);
  const auto r = compute_fcf(s, 31);
  ASSERT_EQ(r.values.size(), 32u);
  for (auto v : r.values) {
    EXPECT_NEAR(v.real(), 25.0, 1e-12);
    EXPECT_NEAR(v.imag(), 0.0, 1e-12);
  }
}

TEST(Fcf, ZeroSweepGivesZero) {
  CtfSweep s;
  s.grid.n_points = 16;
  s.values.assign(16, Complex{});
  for (auto v : compute_fcf(s, 8).values) EXPECT_EQ(v, Complex{});
}

TEST(Fcf, LagZeroIsRealAndBoundsOtherLags) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = testing_support::random_sweep(rng, 64);
    const auto r = compute_fcf(s, 16);
    EXPECT_LE(std::abs(r.values[0].imag()), 1e-9 * std::abs(r.values[0].real()));
    EXPECT_GE(r.values[0].real(), 0.0);
    EXPECT_DOUBLE_EQ(r.lag_step_hz, s.grid.spacing_hz());
    // The lag-m average covers N-m samples, so the Cauchy-Schwarz bound uses
    // the sub-sweep powers rather than R[0] itself; check both forms hold here.
    for (int m = 1; m <= 16; ++m) {
      double p_head = 0.0, p_tail = 0.0;
      for (int n = 0; n < 64 - m; ++n) {
        p_head += std::norm(s.values[n]);
        p_tail += std::norm(s.values[n + m]);
      }
      EXPECT_LE(std::abs(r.values[m]), std::sqrt(p_head * p_tail) / (64 - m) * (1 + 1e-12));
    }
  }
}

TEST(Fcf, MatchesDoubleLoopOracle) {
  Rng rng(11);
  const auto s = testing_support::random_sweep(rng, 64);
  const auto r = compute_fcf(s, 16);
  for (int m = 0; m <= 16; ++m) {
    Complex acc{};
    for (int n = 0; n + m < 64; ++n) acc += s.values[n] * std::conj(s.values[n + m]);
    acc /= static_cast<double>(64 - m);
    EXPECT_LT(rel_err(r.values[m], acc), 1e-9);
  }
}

TEST(Fcf, RejectsBadLag) {
  Rng rng(1);
  const auto s = testing_support::random_sweep(rng, 8);
  EXPECT_THROW(compute_fcf(s, 8), std::invalid_argument);
  EXPECT_THROW(compute_fcf(s, -1), std::invalid_argument);
  EXPECT_NO_THROW(compute_fcf(s, 0));
}

TEST(Rss, KnownLevels) {
  CtfSweep s;
  s.grid.n_points = 10;
  s.values.assign(10, Complex{1.0, 0.0});
  EXPECT_NEAR(compute_rss(s), 0.0, 1e-12);
  s.values.assign(10, Complex{10.0, 0.0});
  EXPECT_NEAR(compute_rss(s), 20.0, 1e-12);
  s.values.assign(10, Complex{});
  EXPECT_EQ(compute_rss(s), kDefaultRssFloorDb);
}

TEST(Rss, MatchesPowerAverageOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = testing_support::random_sweep(rng, 64);
    double p = 0.0;
    for (auto h : s.values) p += h.real() * h.real() + h.imag() * h.imag();
    EXPECT_NEAR(compute_rss(s), 10.0 * std::log10(p / 64.0), 1e-9);
  }
}

TEST(DrawRealization, DeterministicAndCountInRange) {
  for (auto env : kAllEnvironments) {
    const auto p = default_profile(env);
    for (int i = 0; i < 30; ++i) {
      const Point2 pos{37.0 * i, 11.0 * i};
      const auto a = draw_realization(p, pos, 1000 + i);
      EXPECT_TRUE(a == draw_realization(p, pos, 1000 + i));
      EXPECT_GE(static_cast<int>(a.size()), p.multipath_min);
      EXPECT_LE(static_cast<int>(a.size()), p.multipath_max);
    }
  }
}

TEST(DrawRealization, SinglePathLimitIsFlat) {
  auto p = default_profile(Environment::SportsHall);
  p.multipath_min = p.multipath_max = 1;
  p.los_power_ratio = 1e6;
  const auto s = synth_ctf(draw_realization(p, {100.0, 200.0}, 4), {});
  double lo = 1e300, hi = 0.0;
  for (auto h : s.values) {
    lo = std::min(lo, std::abs(h));
    hi = std::max(hi, std::abs(h));
  }
  EXPECT_LT((hi - lo) / hi, 1e-9);
}

TEST(DrawRealization, ClutteredProfileVariesMoreAcrossFrequency) {
  const auto lab = default_profile(Environment::Lab);
  const auto hall = default_profile(Environment::SportsHall);
  double v_lab = 0.0, v_hall = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Point2 pos{250.0, 300.0};
    v_lab += magnitude_variance(synth_ctf(draw_realization(lab, pos, 500 + i), {}));
    v_hall += magnitude_variance(synth_ctf(draw_realization(hall, pos, 500 + i), {}));
  }
  EXPECT_GT(v_lab / 100.0, v_hall / 100.0);
}

TEST(Perturb, KeepsDelaysAndIsSeeded) {
  const auto p = default_profile(Environment::Lab);
  const auto base = draw_realization(p, {0.0, 0.0}, 9);
  const auto a = perturb_realization(base, p, 123);
  const auto b = perturb_realization(base, p, 123);
  const auto c = perturb_realization(base, p, 124);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  ASSERT_EQ(a.size(), base.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(a.components()[i].delay_s, base.components()[i].delay_s);
}

TEST(Noise, HitsRequestedSnr) {
  Rng rng(21);
  CtfSweep s;
  s.grid.n_points = 4096;
  s.values.assign(4096, Complex{1.0, 0.0});
  auto noisy = s;
  add_noise(noisy, 10.0, rng);
  double noise_power = 0.0;
  for (std::size_t i = 0; i < s.values.size(); ++i) noise_power += std::norm(noisy.values[i] - s.values[i]);
  noise_power /= 4096.0;
  EXPECT_NEAR(10.0 * std::log10(1.0 / noise_power), 10.0, 0.3);
}

TEST(Profiles, ConfigRoundTripAndErrors) {
  auto profiles = profiles_from_config(KeyValueFile{});
  ASSERT_EQ(profiles.size(), 4u);
  profiles[2].delay_spread_s = 33e-9;
  profiles[3].snr_db = 25.0;
  KeyValueFile kv;
  profiles_to_config(profiles, kv);
  const auto back = profiles_from_config(KeyValueFile::parse(kv.to_string()));
  EXPECT_NEAR(back[2].delay_spread_s, 33e-9, 1e-21);
  ASSERT_TRUE(back[3].snr_db);
  EXPECT_EQ(*back[3].snr_db, 25.0);
  EXPECT_FALSE(back[0].snr_db);

  EXPECT_THROW(profiles_from_config(KeyValueFile::parse("Lab.bogus = 1\n")), DataError);
  EXPECT_THROW(profiles_from_config(KeyValueFile::parse("Kitchen.multipath_min = 1\n")), DataError);
  EXPECT_THROW(profiles_from_config(KeyValueFile::parse("Lab.multipath_min = 0\n")), DataError);
}
