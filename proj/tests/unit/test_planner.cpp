#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "mfgp/planner.hpp"
#include "oracles.hpp"

using namespace mfgp;

namespace {
const FidelityModel two_level = fixture::model({0.5, 0.3}, {4.0, 2.0}, {0.1, 0.05});
}

TEST(FidelitySwitch, ThresholdFromLengthScalesAndAmplitude) {
  EXPECT_NEAR(switch_threshold(two_level, 1), 0.0225, 1e-15);
  EXPECT_TRUE(std::isinf(switch_threshold(two_level, 2)));
}

TEST(FidelitySwitch, SwitchesOnlyAtOrBelowThreshold) {
  const double xi = two_level.inaccessible_variance(1);  // 0.09
  EXPECT_EQ(update_fidelity({1}, xi + 0.0225, two_level).level, 2);
  EXPECT_EQ(update_fidelity({1}, xi + 0.0226, two_level).level, 1);
}

TEST(FidelitySwitch, TopLevelIsAbsorbing) {
  EXPECT_EQ(update_fidelity({2}, 0.0, two_level).level, 2);
  EXPECT_EQ(update_fidelity({2}, 1.0, two_level).level, 2);
}

TEST(FidelitySwitch, FreshMissionStaysAtLowestLevel) {
  EXPECT_EQ(update_fidelity({1}, two_level.prior_variance(), two_level).level, 1);
  const auto p = posterior(SampleLog{}, fixture::grid(10, 10), two_level);
  EXPECT_EQ(update_fidelity({1}, p).level, 1);
}

TEST(FidelitySwitch, AdvancesSeveralLevelsAtOnce) {
  const auto m = fixture::model({0.6, 0.4, 0.2}, {5.0, 3.0, 1.0}, {0.1, 0.05, 0.02});
  EXPECT_EQ(update_fidelity({1}, 0.0, m).level, 3);
  EXPECT_EQ(update_fidelity({1}, m.inaccessible_variance(1) + 0.999 * switch_threshold(m, 1), m).level, 2);
  EXPECT_EQ(update_fidelity({1}, m.inaccessible_variance(1) + 1.001 * switch_threshold(m, 1), m).level, 1);
}

TEST(SelectNextPoint, TieBreaksToLowestIndex) {
  const auto p = posterior(SampleLog{}, fixture::grid(10, 10), two_level);
  EXPECT_EQ(select_next_point(p), CellIndex{0});
}

TEST(SelectNextPoint, AvoidsTheNeighbourhoodOfASample) {
  const auto g = fixture::grid(20, 20);
  const auto m = fixture::model({1.0}, {4.0}, {0.1});
  const CellIndex sampled = g.cell_of({10.5, 10.5});
  SampleLog log;
  log.append({sampled, 1, 0.0});
  const auto next = select_next_point(posterior(log, g, m));
  ASSERT_TRUE(next);
  // Brute-force argmax of the dense-oracle variance grid.
  EXPECT_EQ(*next, CellIndex{0});
  EXPECT_NE(*next, sampled);
  EXPECT_GE((g.cell(*next) - g.cell(sampled)).norm(), 4.0);
}

TEST(SelectNextPoint, RespectsCandidates) {
  const auto p = posterior(SampleLog{}, fixture::grid(10, 10), two_level);
  std::vector<bool> only(100, false);
  only[57] = true;
  EXPECT_EQ(select_next_point(p, only), CellIndex{57});
  EXPECT_FALSE(select_next_point(p, std::vector<bool>(100, false)));
}

TEST(PlanEpoch, MatchesReferenceLoop) {
  const auto g = fixture::grid(20, 20);
  const auto m = fixture::model({1.0}, {4.0}, {0.1});  // l = 0.2 side, s = 0.1 v
  const auto out = plan_epoch(posterior(SampleLog{}, g, m), {1}, {}, {});
  EXPECT_EQ(out.plan.samples.size(), 14u);  // from the reference loop
  EXPECT_EQ(out.plan.samples.size(), oracle::reference_plan_size(g, m, 0.75, 200));
  EXPECT_FALSE(out.plan.capped);
  EXPECT_LE(out.plan.ratio(), 0.75);
}

TEST(PlanEpoch, SingleCandidateFollowsScalarRecursion) {
  const auto g = fixture::grid(20, 20);
  std::vector<bool> one(400, false);
  one[123] = true;
  for (double s : {0.01, 1.5}) {
    const auto m = fixture::model({1.0}, {4.0}, {s});
    const auto out = plan_epoch(posterior(SampleLog{}, g, m), {1}, one, {});
    const auto expected = static_cast<std::size_t>(oracle::scalar_samples_to_ratio(1.0, s * s, 0.75));
    EXPECT_EQ(out.plan.samples.size(), expected) << "s = " << s;
    for (const auto& p : out.plan.samples) EXPECT_EQ(p.cell, 123u);
  }
  // frozen: 1 sample at s = 0.01, 2 samples at s = 1.5
  EXPECT_EQ(oracle::scalar_samples_to_ratio(1.0, 1e-4, 0.75), 1);
  EXPECT_EQ(oracle::scalar_samples_to_ratio(1.0, 2.25, 0.75), 2);
}

TEST(PlanEpoch, UnitRatioGivesSinglePoint) {
  const auto out = plan_epoch(posterior(SampleLog{}, fixture::grid(10, 10), two_level), {1}, {}, {1.0, 200});
  EXPECT_EQ(out.plan.samples.size(), 1u);
}

TEST(PlanEpoch, FlagsTheSampleCap) {
  const auto out = plan_epoch(posterior(SampleLog{}, fixture::grid(10, 10), two_level), {1}, {}, {0.01, 3});
  EXPECT_EQ(out.plan.samples.size(), 3u);
  EXPECT_TRUE(out.plan.capped);
}

TEST(PlanEpoch, RejectsEmptyCandidateSet) {
  const auto p = posterior(SampleLog{}, fixture::grid(10, 10), two_level);
  EXPECT_THROW(plan_epoch(p, {1}, std::vector<bool>(100, false), {}), std::invalid_argument);
}

TEST(PlanEpoch, StructuralInvariants) {
  const auto g = fixture::grid(20, 20);
  const auto m = fixture::model({0.6, 0.4, 0.2}, {5.0, 3.0, 1.5}, {0.1, 0.05, 0.02});
  std::vector<bool> candidates(400, true);
  for (std::size_t c = 0; c < 400; c += 3) candidates[c] = false;
  auto field = posterior(SampleLog{}, g, m);
  FidelityState state{1};
  for (int epoch = 1; epoch <= 6; ++epoch) {
    auto out = plan_epoch(field, state, candidates, {}, epoch);
    const auto& plan = out.plan;
    for (std::size_t i = 1; i < plan.samples.size(); ++i)
      EXPECT_LE(plan.samples[i - 1].fidelity, plan.samples[i].fidelity);
    for (const auto& s : plan.samples) EXPECT_TRUE(candidates[s.cell]);
    if (!plan.capped) {
      EXPECT_LE(plan.ratio(), 0.75);
    }
    EXPECT_GE(plan.final_state.level, state.level);
    state = plan.final_state;
    field = std::move(out.predicted);
  }
  EXPECT_GT(state.level, 1);
}

TEST(PlanEpoch, DeterministicAndIndependentOfValues) {
  const auto g = fixture::grid(10, 10);
  std::mt19937_64 rng(2);
  const auto d = oracle::random_design(g, 1, 6, rng);
  auto e = d;
  for (auto& y : e.values) y = -y + 5.0;
  const auto a = plan_epoch(posterior(oracle::to_log(d, g), g, two_level), {1}, {}, {}).plan;
  const auto b = plan_epoch(posterior(oracle::to_log(d, g), g, two_level), {1}, {}, {}).plan;
  const auto c = plan_epoch(posterior(oracle::to_log(e, g), g, two_level), {1}, {}, {}).plan;
  ASSERT_EQ(a.samples.size(), b.samples.size());
  ASSERT_EQ(a.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].cell, b.samples[i].cell);
    EXPECT_EQ(a.samples[i].cell, c.samples[i].cell);
    EXPECT_EQ(a.samples[i].fidelity, c.samples[i].fidelity);
  }
}
