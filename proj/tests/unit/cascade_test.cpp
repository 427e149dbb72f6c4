#include "fingerloc/cascade.hpp"
#include "fingerloc/eval.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace fingerloc;
using namespace fingerloc::cascade;
using features::FeatureKind;

namespace {

EnvironmentSets make_sets(int rows, int cols, int iters, std::uint64_t seed) {
  EnvironmentSets out;
  for (auto env : kAllEnvironments) out.emplace(env, testing_support::small_set(env, rows, cols, iters, seed));
  return out;
}

Policy uniform_policy(FeatureKind kind) {
  Policy p;
  for (auto env : kAllEnvironments) p.stage2[env] = kind;
  return p;
}

struct Split {
  EnvironmentSets train, test;
};

const Split& shared_split() {
  static const Split s = [] {
    Split out;
    for (auto& [env, set] : make_sets(6, 6, 8, 31)) {
      auto [tr, te] = dataset::split(set, {0.75, 5, true});
      out.train.emplace(env, std::move(tr));
      out.test.emplace(env, std::move(te));
    }
    return out;
  }();
  return s;
}

} // namespace

TEST(Policy, OverridesAndErrors) {
  auto p = uniform_policy(FeatureKind::CtfFcf);
  p.apply_overrides("SportsHall=FCF, lab = RSS+CTF");
  EXPECT_EQ(p.kind_for(Environment::SportsHall), FeatureKind::Fcf);
  EXPECT_EQ(p.kind_for(Environment::Lab), FeatureKind::RssCtf);
  EXPECT_EQ(p.kind_for(Environment::Lobby), FeatureKind::CtfFcf);
  EXPECT_THROW(p.apply_overrides("SportsHall"), std::invalid_argument);
  EXPECT_THROW(p.apply_overrides("Kitchen=FCF"), std::invalid_argument);
  EXPECT_THROW(p.apply_overrides("Lab=CIR"), std::invalid_argument);
  EXPECT_THROW(Policy{}.kind_for(Environment::Lab), std::out_of_range);
}

TEST(Policy, KvRoundTrip) {
  auto p = uniform_policy(FeatureKind::Fcf);
  p.stage1_kind = FeatureKind::RssCtfFcf;
  EXPECT_EQ(Policy::from_kv(KeyValueFile::parse(p.to_kv().to_string())), p);
  EXPECT_THROW(Policy::from_kv(KeyValueFile::parse("stage2.Kitchen = FCF\n")), DataError);
}

TEST(Fit, SingleEnvironmentFourMeasurements) {
  EnvironmentSets train;
  train.emplace(Environment::Lobby, testing_support::small_set(Environment::Lobby, 2, 2, 1, 1));
  const auto m = fit(train, uniform_policy(FeatureKind::Ctf), {});
  EXPECT_EQ(m.stage1.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(m.stage1.label(i), Environment::Lobby);
  ASSERT_EQ(m.stage2.size(), 1u);
  EXPECT_EQ(m.policy.stage2.size(), 1u);
  EXPECT_EQ(m.stage2.at(Environment::Lobby).kind(), FeatureKind::Ctf);
}

TEST(Fit, ProtocolSizedModel) {
  EnvironmentSets train;
  for (auto& [env, set] : make_sets(14, 14, 10, 2)) train.emplace(env, dataset::split(set, {0.75, 1, true}).first);
  CascadeConfig cfg;
  cfg.repr.mode = features::ReprMode::Scalar;
  const auto m = fit(train, uniform_policy(FeatureKind::CtfFcf), cfg);
  EXPECT_EQ(m.stage1.size(), 5880u);
  EXPECT_EQ(m.stage1.kind(), FeatureKind::CtfFcf);
  ASSERT_EQ(m.stage2.size(), 4u);
  for (const auto& [env, s2] : m.stage2) EXPECT_EQ(s2.size(), 1470u);
}

TEST(Fit, RejectsMissingPolicyEntryAndEmptyInput) {
  const auto& s = shared_split();
  Policy p = uniform_policy(FeatureKind::Fcf);
  p.stage2.erase(Environment::Lobby);
  EXPECT_THROW(fit(s.train, p, {}), std::invalid_argument);
  EXPECT_THROW(fit(EnvironmentSets{}, p, {}), std::invalid_argument);
}

TEST(Fit, DeterministicSerialization) {
  testing_support::TempDir dir("cascade_det");
  const auto& s = shared_split();
  CascadeConfig cfg;
  cfg.threads = 3;
  fit(s.train, uniform_policy(FeatureKind::RssFcf), cfg).save(dir / "a");
  fit(s.train, uniform_policy(FeatureKind::RssFcf), cfg).save(dir / "b");
  for (const auto& entry : std::filesystem::directory_iterator(dir / "a"))
    EXPECT_EQ(testing_support::read_file(entry.path()),
              testing_support::read_file(dir / "b" / entry.path().filename()))
        << entry.path();
}

TEST(Fit, SaveLoadRoundTrip) {
  testing_support::TempDir dir("cascade_io");
  const auto& s = shared_split();
  auto policy = uniform_policy(FeatureKind::Ctf);
  policy.stage2[Environment::SportsHall] = FeatureKind::Fcf;
  CascadeConfig cfg;
  cfg.stage2 = {3, true};
  cfg.scaling = features::Scaling::ZScore;
  const auto m = fit(s.train, policy, cfg);
  m.save(dir.path());
  const auto back = CascadeModel::load(dir.path());
  EXPECT_EQ(back.policy, m.policy);
  EXPECT_TRUE(back.stage1 == m.stage1);
  EXPECT_EQ(back.frequency, m.frequency);
  EXPECT_EQ(back.config.stage2.k, 3);
  EXPECT_TRUE(back.config.stage2.distance_weighted);
  for (const auto& [env, s2] : m.stage2) EXPECT_TRUE(back.stage2.at(env) == s2);
  for (const auto& m2 : s.test.at(Environment::Lab).measurements)
    EXPECT_EQ(localize(back, m2).position_cm, localize(m, m2).position_cm);
}

TEST(Localize, SelfQueryIsExact) {
  const auto& s = shared_split();
  const auto m = fit(s.train, uniform_policy(FeatureKind::CtfFcf), {});
  for (const auto& [env, set] : s.train)
    for (std::size_t i = 0; i < set.size(); i += 7) {
      const auto r = localize(m, set.measurements[i]);
      EXPECT_EQ(r.predicted_env, env);
      EXPECT_EQ(r.position_cm, set.measurements[i].position);
    }
}

TEST(Localize, OracleBypassEqualsStandaloneStage2) {
  const auto& s = shared_split();
  auto policy = uniform_policy(FeatureKind::Fcf);
  policy.stage2[Environment::Lab] = FeatureKind::RssCtf;
  CascadeConfig cfg;
  cfg.stage2.k = 3;
  const auto m = fit(s.train, policy, cfg);
  for (const auto& [env, set] : s.test) {
    const auto alone = build_stage2_model(s.train.at(env), policy.kind_for(env), cfg);
    for (const auto& q : set.measurements) {
      const auto r = localize(m, q, env);
      EXPECT_EQ(r.predicted_env, env);
      EXPECT_EQ(r.position_cm, knn::locate(alone, alone.query_for(q), cfg.stage2));
      EXPECT_TRUE(r.stage1_neighbors.empty());
    }
  }
}

TEST(Localize, PositionWithinGridBox) {
  const auto& s = shared_split();
  CascadeConfig cfg;
  cfg.stage2.k = 5;
  const auto m = fit(s.train, uniform_policy(FeatureKind::Rss), cfg);
  const dataset::GridGeometry g{6, 6, 50.0, {}};
  for (const auto& [env, set] : s.test)
    for (const auto& q : set.measurements) {
      const auto p = localize(m, q).position_cm;
      EXPECT_GE(p.x, -g.spacing_cm);
      EXPECT_LE(p.x, (g.cols - 1) * g.spacing_cm + g.spacing_cm);
      EXPECT_GE(p.y, -g.spacing_cm);
      EXPECT_LE(p.y, (g.rows - 1) * g.spacing_cm + g.spacing_cm);
    }
}

TEST(Localize, FrequencyGridMismatchIsDataError) {
  const auto& s = shared_split();
  const auto m = fit(s.train, uniform_policy(FeatureKind::Ctf), {});
  auto q = s.test.at(Environment::Lab).measurements.front();
  q.ctf.values.resize(32);
  q.ctf.grid.n_points = 32;
  EXPECT_THROW(localize(m, q), DataError);
}

TEST(FitPolicy, SingleCandidateMapsEverything) {
  const auto& s = shared_split();
  EnvironmentSets rest, val;
  for (const auto& [env, set] : s.train) {
    auto [a, b] = dataset::carve_validation(set, 0.2);
    rest.emplace(env, std::move(a));
    val.emplace(env, std::move(b));
  }
  const std::vector<FeatureKind> only{FeatureKind::RssFcf};
  const auto fitted = fit_policy(rest, val, only, {});
  for (auto env : kAllEnvironments) EXPECT_EQ(fitted.policy.kind_for(env), FeatureKind::RssFcf);
  EXPECT_EQ(fitted.policy.stage1_kind, FeatureKind::CtfFcf);
}

TEST(FitPolicy, PicksLowestValidationRmseWithTieRule) {
  const auto& s = shared_split();
  EnvironmentSets rest, val;
  for (const auto& [env, set] : s.train) {
    auto [a, b] = dataset::carve_validation(set, 0.2);
    rest.emplace(env, std::move(a));
    val.emplace(env, std::move(b));
  }
  const auto fitted = fit_policy(rest, val, features::kAllFeatureKinds, {});
  for (auto env : kAllEnvironments) {
    const auto& scores = fitted.validation_rmse.at(env);
    ASSERT_EQ(scores.size(), 7u);
    const auto chosen = fitted.policy.kind_for(env);
    for (const auto& [kind, rmse] : scores) {
      EXPECT_GE(rmse, scores.at(chosen));
      if (rmse == scores.at(chosen)) EXPECT_LE(features::block_count(chosen), features::block_count(kind));
    }
  }
  EXPECT_THROW(fit_policy(rest, EnvironmentSets{}, features::kAllFeatureKinds, {}), std::invalid_argument);
}

TEST(Pool, KeepsEnvironmentOrder) {
  const auto& s = shared_split();
  const auto pooled = pool(s.train);
  std::size_t offset = 0;
  for (const auto& [env, set] : s.train) {
    for (std::size_t i = 0; i < set.size(); ++i)
      EXPECT_EQ(dataset::key_of(pooled.measurements[offset + i]), dataset::key_of(set.measurements[i]));
    offset += set.size();
  }
  EXPECT_EQ(offset, pooled.size());
}
