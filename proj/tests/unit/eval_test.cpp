#include "fingerloc/eval.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fingerloc;
using namespace fingerloc::eval;
using features::FeatureKind;

namespace {

struct Data {
  cascade::EnvironmentSets train, test;
};

const Data& shared_data() {
  static const Data d = [] {
    Data out;
    for (auto env : kAllEnvironments) {
      auto [tr, te] = dataset::split(testing_support::small_set(env, 5, 5, 8, 17), {0.75, 3, true});
      out.train.emplace(env, std::move(tr));
      out.test.emplace(env, std::move(te));
    }
    return out;
  }();
  return d;
}

knn::FingerprintModel stage1_model(const cascade::EnvironmentSets& train, features::ReprMode mode) {
  features::FeatureRepr repr;
  repr.mode = mode;
  return knn::FingerprintModel::fit(cascade::pool(train), FeatureKind::CtfFcf, repr, features::Scaling::Raw);
}

} // namespace

TEST(Rmse, BasicCases) {
  const std::vector<Point2> a{{1, 2}, {3, 4}};
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_EQ(rmse(std::vector<Point2>{{3, 4}}, std::vector<Point2>{{0, 0}}), 5.0);
  EXPECT_THROW(rmse(a, std::vector<Point2>{{0, 0}}), std::invalid_argument);
  EXPECT_THROW(rmse(std::vector<Point2>{}, std::vector<Point2>{}), std::invalid_argument);
}

TEST(Rmse, MatchesDirectFormula) {
  Rng rng(5);
  std::vector<Point2> e, t;
  double s = 0.0;
  for (int i = 0; i < 1000; ++i) {
    e.push_back({rng.uniform(0, 650), rng.uniform(0, 650)});
    t.push_back({rng.uniform(0, 650), rng.uniform(0, 650)});
    s += std::pow(planar_distance(e.back(), t.back()), 2);
  }
  EXPECT_NEAR(rmse(e, t), std::sqrt(s / 1000.0), 1e-9);
}

TEST(Alpha, PublishedPairs) {
  EXPECT_NEAR(alpha(109.19, 39.68), 63.7, 0.05);
  EXPECT_NEAR(alpha(105.3, 30.49), 71.0, 0.05);
  EXPECT_NEAR(alpha(106.25, 27.18), 74.4, 0.05);
  EXPECT_NEAR(alpha(111.3, 55.2), 50.4, 0.05);
}

TEST(Alpha, IdentityAndErrors) {
  for (double x : {0.1, 1.0, 123.4}) EXPECT_EQ(alpha(x, x), 0.0);
  EXPECT_THROW(alpha(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(alpha(-5.0, 1.0), std::invalid_argument);
}

TEST(Confusion, PerfectClassifierIsDiagonal) {
  const auto& d = shared_data();
  // Querying the training data itself with k = 1 always finds the sample.
  const auto m = stage1_model(d.train, features::ReprMode::Sweep);
  const auto cm = confusion(m, d.train, 1, 2);
  ASSERT_EQ(cm.labels.size(), 4u);
  EXPECT_EQ(cm.accuracy(), 1.0);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(cm.counts[r][c] != 0, r == c);
  const auto pct = cm.row_percent();
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(pct[r][r], 100.0);
}

TEST(Confusion, RowSumsAndAccuracyOracle) {
  const auto& d = shared_data();
  const auto m = stage1_model(d.train, features::ReprMode::Scalar);
  const auto cm = confusion(m, d.test, 3);
  long long trace = 0, total = 0;
  const auto pct_rows = cm.row_percent();
  for (std::size_t r = 0; r < cm.labels.size(); ++r) {
    EXPECT_EQ(cm.row_total(r), static_cast<long long>(d.test.at(cm.labels[r]).size()));
    trace += cm.counts[r][r];
    for (auto c : cm.counts[r]) total += c;
    double pct = 0.0;
    for (double p : pct_rows[r]) pct += p;
    EXPECT_NEAR(pct, 100.0, 1e-9);
  }
  EXPECT_EQ(cm.total(), total);
  EXPECT_DOUBLE_EQ(cm.accuracy(), static_cast<double>(trace) / static_cast<double>(total));
  EXPECT_GE(cm.accuracy(), 0.0);
  EXPECT_LE(cm.accuracy(), 1.0);
}

TEST(FeatureTable, SingleEnvironmentRssOnly) {
  const auto& d = shared_data();
  cascade::EnvironmentSets tr{{Environment::Lobby, d.train.at(Environment::Lobby)}};
  cascade::EnvironmentSets te{{Environment::Lobby, d.test.at(Environment::Lobby)}};
  const std::vector<FeatureKind> kinds{FeatureKind::Rss};
  const auto t = feature_table(tr, te, kinds, {});
  ASSERT_EQ(t.environments.size(), 1u);
  ASSERT_EQ(t.rmse_cm.size(), 1u);
  ASSERT_EQ(t.rmse_cm[0].size(), 1u);
  EXPECT_EQ(t.best_kind[0], FeatureKind::Rss);
  EXPECT_EQ(t.alpha_percent[0], 0.0);
}

TEST(FeatureTable, AlphaUsesBestKind) {
  const auto& d = shared_data();
  const auto t = feature_table(d.train, d.test, features::kAllFeatureKinds, {});
  ASSERT_EQ(t.environments.size(), 4u);
  for (std::size_t e = 0; e < 4; ++e) {
    double best = t.rmse_cm[e][0];
    for (double v : t.rmse_cm[e]) best = std::min(best, v);
    EXPECT_EQ(t.at(t.environments[e], t.best_kind[e]), best);
    EXPECT_EQ(t.baseline_rss_cm[e], t.at(t.environments[e], FeatureKind::Rss));
    if (t.baseline_rss_cm[e] == 0.0) {
      // Nothing to improve on: undefined.
      EXPECT_TRUE(std::isnan(t.alpha_percent[e]));
      continue;
    }
    EXPECT_NEAR(t.alpha_percent[e], (t.baseline_rss_cm[e] - best) / t.baseline_rss_cm[e] * 100.0, 1e-12);
    EXPECT_LE(t.alpha_percent[e], 100.0);
  }
}

TEST(FeatureTable, BaselineAddedWhenRssNotRequested) {
  const auto& d = shared_data();
  const std::vector<FeatureKind> kinds{FeatureKind::Fcf};
  const auto t = feature_table(d.train, d.test, kinds, {});
  const auto full = feature_table(d.train, d.test, features::kAllFeatureKinds, {});
  for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(t.baseline_rss_cm[e], full.baseline_rss_cm[e]);
}

TEST(SweepK, KOneReproducesTableExactly) {
  const auto& d = shared_data();
  const auto t = feature_table(d.train, d.test, features::kAllFeatureKinds, {});
  const std::vector<int> ks{1};
  const auto sweep = sweep_k(d.train, d.test, features::kAllFeatureKinds, ks, {});
  ASSERT_EQ(sweep.size(), 28u);
  for (const auto& p : sweep) EXPECT_EQ(p.rmse_cm, t.at(p.env, p.kind));
}

TEST(SweepK, EveryKMatchesStandaloneLocate) {
  const auto& d = shared_data();
  cascade::CascadeConfig cfg;
  cfg.threads = 4;
  const std::vector<int> ks{2, 7, 30};
  const std::vector<FeatureKind> kinds{FeatureKind::RssCtf};
  const auto sweep = sweep_k(d.train, d.test, kinds, ks, cfg);
  for (const auto& p : sweep) {
    cascade::CascadeConfig one;
    one.stage2.k = p.k;
    const std::vector<FeatureKind> k1{p.kind};
    EXPECT_EQ(p.rmse_cm, feature_table(d.train, d.test, k1, one).at(p.env, p.kind));
  }
}

TEST(SweepK, RejectsKBeyondTrainingSize) {
  const auto& d = shared_data();
  const std::vector<int> ks{1, 1000};
  EXPECT_THROW(sweep_k(d.train, d.test, features::kAllFeatureKinds, ks, {}), std::invalid_argument);
  const std::vector<int> zero{0};
  EXPECT_THROW(sweep_k(d.train, d.test, features::kAllFeatureKinds, zero, {}), std::invalid_argument);
  EXPECT_EQ(default_k_values().size(), 60u);
  EXPECT_EQ(default_k_values().back(), 60);
}

TEST(ScoreCascade, OracleColumnMatchesFeatureTable) {
  const auto& d = shared_data();
  cascade::Policy policy;
  policy.stage2 = {{Environment::Lab, FeatureKind::Ctf},
                   {Environment::NarrowCorridor, FeatureKind::RssFcf},
                   {Environment::Lobby, FeatureKind::CtfFcf},
                   {Environment::SportsHall, FeatureKind::Fcf}};
  cascade::CascadeConfig cfg;
  cfg.threads = 3;
  const auto model = cascade::fit(d.train, policy, cfg);
  const auto table = feature_table(d.train, d.test, features::kAllFeatureKinds, cfg);
  const auto scores = score_cascade(model, d.test, 2);
  ASSERT_EQ(scores.size(), 4u);
  for (const auto& s : scores) {
    EXPECT_EQ(s.oracle_rmse_cm, table.at(s.env, policy.kind_for(s.env)));
    EXPECT_EQ(s.count, d.test.at(s.env).size());
    EXPECT_GE(s.stage1_accuracy, 0.0);
    EXPECT_LE(s.stage1_accuracy, 1.0);
  }
}

TEST(Latency, SingleVectorModelIsPositive) {
  features::FeatureVector v;
  v.values = {1.0, 2.0};
  const knn::FingerprintModel m(FeatureKind::Rss, {}, features::Scaling::Raw, std::nullopt,
                                std::span<const features::FeatureVector>(&v, 1));
  const std::vector<std::vector<double>> q{{0.0, 0.0}};
  const auto s = time_queries(m, q, 1, 100);
  EXPECT_GT(s.median_ns, 0.0);
  EXPECT_GE(s.p95_ns, s.median_ns);
  EXPECT_EQ(s.samples, 100u);
  EXPECT_THROW(time_queries(m, q, 1, 99), std::invalid_argument);
}

TEST(Latency, ScalesWithModelSizeAndMeetsDeskBudget) {
  cascade::EnvironmentSets big_train, small_train;
  for (auto env : kAllEnvironments) {
    auto set = testing_support::small_set(env, 14, 14, 10, 4);
    auto train = dataset::split(set, {0.75, 1, true}).first;
    auto small = train.shell();
    for (std::size_t i = 0; i < train.size(); i += 10) small.measurements.push_back(train.measurements[i]);
    big_train.emplace(env, std::move(train));
    small_train.emplace(env, std::move(small));
  }
  const auto big = stage1_model(big_train, features::ReprMode::Scalar);
  const auto small = stage1_model(small_train, features::ReprMode::Scalar);
  ASSERT_EQ(big.size(), 5880u);
  ASSERT_EQ(small.size(), 588u);

  std::vector<std::vector<double>> queries;
  for (const auto& m : big_train.at(Environment::Lobby).measurements) {
    queries.push_back(big.query_for(m));
    if (queries.size() == 50) break;
  }
  const auto t_big = time_queries(big, queries, 1, 100);
  const auto t_small = time_queries(small, queries, 1, 100);
  const double ratio = t_big.median_ns / t_small.median_ns;
  EXPECT_GE(ratio, 3.0) << t_big.median_ns << " vs " << t_small.median_ns;
  EXPECT_LE(ratio, 20.0) << t_big.median_ns << " vs " << t_small.median_ns;
  EXPECT_LT(t_big.p95_ns, 1e6);
}

TEST(Writers, SchemasAndSummary) {
  testing_support::TempDir dir("writers");
  const auto& d = shared_data();
  const auto m = stage1_model(d.train, features::ReprMode::Scalar);
  const auto cm = confusion(m, d.test, 1);
  const auto t = feature_table(d.train, d.test, features::kAllFeatureKinds, {});
  const std::vector<int> ks{1, 2};
  const auto sw = sweep_k(d.train, d.test, features::kAllFeatureKinds, ks, {});
  write_confusion_csv(cm, dir / "c.csv");
  write_feature_table_csv(t, dir / "t.csv");
  write_k_sweep_csv(sw, dir / "k.csv");

  const auto table = testing_support::read_file(dir / "t.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')),
            "environment,RSS,CTF,FCF,RSS+CTF,RSS+FCF,CTF+FCF,RSS+CTF+FCF,best_kind,alpha_percent");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);
  const auto sweep = testing_support::read_file(dir / "k.csv");
  EXPECT_EQ(std::count(sweep.begin(), sweep.end(), '\n'), 1 + 4 * 7 * 2);
  const auto conf = testing_support::read_file(dir / "c.csv");
  EXPECT_EQ(conf.substr(0, conf.find('\n')), "true\\predicted,Lab,NarrowCorridor,Lobby,SportsHall");

  const auto text = summary_text(cm, t, {});
  EXPECT_NE(text.find("accuracy"), std::string::npos);
  EXPECT_NE(text.find("RSS+CTF+FCF"), std::string::npos);
}
