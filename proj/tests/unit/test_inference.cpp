#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "mfgp/inference.hpp"
#include "oracles.hpp"

using namespace mfgp;

namespace {

const FidelityModel two_level = fixture::model({0.5, 0.3}, {4.0, 2.0}, {0.1, 0.05}, {0.1, 0.05});

SampleLog five_sample_log(const GridDomain& g) {
  SampleLog log;
  log.append({3, 1, 0.4});
  log.append({47, 1, -0.2});
  log.append({47, 2, 0.1});
  log.append({82, 2, 0.9});
  log.append({55, 2, 0.3});
  (void)g;
  return log;
}

}  // namespace

TEST(SampleLogTest, RejectsDecreasingFidelity) {
  SampleLog log;
  log.append({0, 1, 0.0});
  log.append({1, 2, 0.0});
  EXPECT_THROW(log.append({2, 1, 0.0}), std::invalid_argument);
  EXPECT_EQ(log.size(), 2u);
  EXPECT_EQ(log.indices_at(2), std::vector<std::size_t>{1});
}

TEST(CrossCovariance, EmptyLog) {
  EXPECT_EQ(cross_covariance({0, 0}, SampleLog{}, fixture::grid(10, 10), two_level).size(), 0);
}

TEST(CrossCovariance, TruncatesAtRecordFidelity) {
  const auto g = fixture::grid(10, 10);
  SampleLog log;
  log.append({5, 1, 0.0});
  log.append({5, 2, 0.0});
  const auto k = cross_covariance(g.cell(5), log, g, two_level);
  EXPECT_NEAR(k[0], 0.25, 1e-15);
  EXPECT_NEAR(k[1], 0.34, 1e-15);
}

TEST(JointCovarianceTest, BlocksAndPriorMeans) {
  const auto g = fixture::grid(10, 10);
  const auto jc = joint_covariance(five_sample_log(g), g, two_level);
  EXPECT_TRUE(jc.kernel.isApprox(jc.kernel.transpose(), 0.0));
  EXPECT_NEAR(jc.kernel(1, 2), 0.25, 1e-15);  // same cell, levels 1 and 2: only the shared layer
  EXPECT_NEAR(jc.kernel(2, 2), 0.34, 1e-15);
  EXPECT_NEAR(jc.prior_mean[0], 0.1, 1e-15);
  EXPECT_NEAR(jc.prior_mean[4], 0.15, 1e-15);
  EXPECT_NEAR(jc.noise[0], 0.01, 1e-15);
  EXPECT_NEAR(jc.noise[4], 0.0025, 1e-15);
}

TEST(Posterior, EmptyLogIsThePrior) {
  const auto g = fixture::grid(10, 10);
  const auto p = posterior(SampleLog{}, g, two_level);
  for (Eigen::Index c = 0; c < 100; ++c) {
    EXPECT_NEAR(p.mean()[c], 0.15, 1e-15);
    EXPECT_NEAR(p.variance()[c], 0.34, 1e-15);
  }
}

TEST(Posterior, SingleSampleScalarUpdate) {
  const auto g = fixture::grid(10, 10);
  const auto m = fixture::model({0.8}, {2.0}, {0.3}, {0.2});
  SampleLog log;
  log.append({33, 1, 1.1});
  const auto p = posterior(log, g, m);
  const double prior = 0.64, noise = 0.09;
  EXPECT_NEAR(p.mean()[33], 0.2 + prior / (prior + noise) * (1.1 - 0.2), 1e-14);
  EXPECT_NEAR(p.variance()[33], prior - prior * prior / (prior + noise), 1e-14);
}

TEST(Posterior, MixedFidelityMatchesJointConditioning) {
  const auto g = fixture::grid(10, 10);
  const auto log = five_sample_log(g);
  const auto p = posterior(log, g, two_level);
  // Reference values from direct conditioning of the joint Gaussian.
  struct Frozen {
    Eigen::Index cell;
    double mean, variance;
  };
  const Frozen frozen[] = {{0, 0.46174774341458996, 0.19721302082227923},
                           {47, 0.094421363526613039, 0.0024216682915348953},
                           {64, 0.49576223134380787, 0.028532140180558885},
                           {99, 0.062476006419338051, 0.29432030272793785}};
  for (const auto& f : frozen) {
    EXPECT_NEAR(p.mean()[f.cell], f.mean, 1e-10);
    EXPECT_NEAR(p.variance()[f.cell], f.variance, 1e-10);
  }
  oracle::Design d;
  for (const auto& r : log) {
    d.points.push_back(g.cell(r.cell));
    d.levels.push_back(r.fidelity);
    d.values.push_back(r.value);
  }
  for (CellIndex c = 0; c < g.size(); ++c) {
    const auto o = oracle::joint_conditioning(d, two_level, g.cell(c));
    EXPECT_NEAR(p.mean()[static_cast<Eigen::Index>(c)], o.mean, 1e-9);
    EXPECT_NEAR(p.variance()[static_cast<Eigen::Index>(c)], o.variance, 1e-9);
  }
}

TEST(Posterior, VarianceIgnoresObservedValues) {
  const auto g = fixture::grid(10, 10);
  std::mt19937_64 rng(8);
  const auto d = oracle::random_design(g, 2, 12, rng);
  auto e = d;
  for (auto& y : e.values) y = 3.0 * y + 1.0;
  const auto a = posterior(oracle::to_log(d, g), g, two_level);
  const auto b = posterior(oracle::to_log(e, g), g, two_level);
  EXPECT_LE((a.variance() - b.variance()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((a.mean() - b.mean()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Posterior, VarianceBoundedByPriorAndNonIncreasing) {
  const auto g = fixture::grid(10, 10);
  const auto m = fixture::model({0.6, 0.4, 0.2}, {5.0, 3.0, 1.0}, {0.1, 0.05, 0.02});
  std::mt19937_64 rng(21);
  const auto d = oracle::random_design(g, 3, 15, rng);
  Eigen::VectorXd prev = Eigen::VectorXd::Constant(100, m.prior_variance());
  SampleLog log;
  for (std::size_t i = 0; i < d.points.size(); ++i) {
    log.append({g.cell_of(d.points[i]), d.levels[i], d.values[i]});
    const auto p = posterior(log, g, m);
    EXPECT_LE(p.variance().maxCoeff(), m.prior_variance());
    EXPECT_GE(p.variance().minCoeff(), 0.0);
    EXPECT_TRUE(((p.variance() - prev).array() <= 1e-12).all());
    prev = p.variance();
  }
}

TEST(IncrementalUpdate, TenAppendsMatchBatch) {
  const auto g = fixture::grid(10, 10);
  std::mt19937_64 rng(4);
  const auto d = oracle::random_design(g, 2, 14, rng);
  SampleLog base;
  for (std::size_t i = 0; i < 4; ++i) base.append({g.cell_of(d.points[i]), d.levels[i], d.values[i]});
  auto field = posterior(base, g, two_level);
  SampleLog extended = base;
  double max_prev = field.max_variance();
  for (std::size_t i = 4; i < 14; ++i) {
    field = append_sample_variance_only(std::move(field), g.cell_of(d.points[i]), d.levels[i]);
    extended.append({g.cell_of(d.points[i]), d.levels[i], 123.0});
    EXPECT_LE(field.max_variance(), max_prev);
    max_prev = field.max_variance();
  }
  const auto batch = posterior(extended, g, two_level);
  EXPECT_LE((field.variance() - batch.variance()).cwiseAbs().maxCoeff(), 1e-8);
  // mean reflects only the observed prefix
  EXPECT_LE((field.mean() - posterior(base, g, two_level).mean()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(IncrementalUpdate, DuplicateOfNearlyNoiselessSampleChangesLittle) {
  const auto g = fixture::grid(10, 10);
  const auto m = fixture::model({1.0}, {2.0}, {1e-4});
  SampleLog log;
  log.append({44, 1, 0.5});
  auto field = posterior(log, g, m);
  const double before = field.variance()[44];
  EXPECT_LT(before, 1e-7);
  field.append_hypothetical(44, 1);
  EXPECT_LE(field.variance()[44], before);
  EXPECT_NEAR(field.variance()[44], before, 1e-7);
}

TEST(IncrementalUpdate, ObservationsMatchFullPosterior) {
  const auto g = fixture::grid(10, 10);
  std::mt19937_64 rng(15);
  const auto d = oracle::random_design(g, 2, 15, rng);
  const auto log = oracle::to_log(d, g);
  auto field = posterior(SampleLog{}, g, two_level);
  for (const auto& r : log) field.append_observation(r);
  const auto batch = posterior(log, g, two_level);
  EXPECT_LE((field.mean() - batch.mean()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE((field.variance() - batch.variance()).cwiseAbs().maxCoeff(), 1e-9);
  field.append_hypothetical(0, 2);
  EXPECT_THROW(field.append_observation({1, 2, 0.0}), std::logic_error);
}

TEST(InfoGain, EmptyAndSingleSample) {
  const auto g = fixture::grid(10, 10);
  const auto m = fixture::model({0.8}, {2.0}, {0.3});
  EXPECT_EQ(greedy_info_gain(SampleLog{}, g, m), 0.0);
  SampleLog log;
  log.append({10, 1, 0.0});
  EXPECT_NEAR(greedy_info_gain(log, g, m), 0.5 * std::log(1.0 + 0.64 / 0.09), 1e-14);
}

TEST(InfoGain, SingleFidelityEqualsLogDet) {
  const auto g = fixture::grid(10, 10);
  const auto m = fixture::model({0.7}, {2.5}, {0.2});
  std::mt19937_64 rng(99);
  for (std::size_t n = 1; n <= 20; ++n) {
    const auto d = oracle::random_design(g, 1, n, rng);
    const double expected = oracle::logdet_information(d.points, 0.7, 2.5, 0.2);
    EXPECT_NEAR(greedy_info_gain(oracle::to_log(d, g), g, m), expected, 1e-8) << "n = " << n;
  }
}

TEST(InfoGain, SubadditiveOverBiasLayers) {
  const auto g = fixture::grid(10, 10);
  const auto m = fixture::model({0.5, 0.3}, {4.0, 2.0}, {0.1, 0.1});
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> cell(0, g.size() - 1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 10);
    SampleLog log;
    std::vector<Location> pts;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = cell(rng);
      log.append({c, 2, 0.0});
      pts.push_back(g.cell(c));
    }
    const auto size = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd k1(size, size), k2(size, size);
    for (Eigen::Index i = 0; i < size; ++i)
      for (Eigen::Index j = 0; j < size; ++j) {
        k1(i, j) = oracle::bias_kernel(m, 1, pts[i], pts[j]);
        k2(i, j) = oracle::bias_kernel(m, 2, pts[i], pts[j]);
      }
    const Eigen::VectorXd noise = Eigen::VectorXd::Constant(size, 0.01);
    const double joint = greedy_info_gain(log, g, m);
    EXPECT_NEAR(joint, oracle::gaussian_information(k1 + k2, noise), 1e-8);
    EXPECT_LE(joint, oracle::gaussian_information(k1, noise) + oracle::gaussian_information(k2, noise) + 1e-8);
  }
}

TEST(InfoGain, DiagnosticsSumToTotal) {
  const auto g = fixture::grid(10, 10);
  std::mt19937_64 rng(31);
  const auto log = oracle::to_log(oracle::random_design(g, 2, 12, rng), g);
  const auto diags = sample_diagnostics(log, g, two_level);
  double total = 0.0;
  SampleLog prefix;
  for (const auto& d : diags) {
    total += d.info_gain;
    const auto p = posterior(prefix, g, two_level);
    EXPECT_NEAR(d.variance_before, p.variance()[static_cast<Eigen::Index>(d.cell)], 1e-10);
    prefix.append(log[d.index - 1]);
  }
  EXPECT_NEAR(total, greedy_info_gain(log, g, two_level), 1e-12);
  EXPECT_EQ(diags.front().index, 1u);
}

TEST(LogMarginalLikelihood, SingleRecordIsGaussianDensity) {
  const auto g = fixture::grid(10, 10);
  const auto m = fixture::model({0.8}, {2.0}, {0.3}, {0.2});
  SampleLog log;
  log.append({5, 1, 0.9});
  const double var = 0.64 + 0.09;
  const double expected = -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (0.9 - 0.2) * (0.9 - 0.2) / var;
  EXPECT_NEAR(log_marginal_likelihood(log, g, m), expected, 1e-14);
}

TEST(LogMarginalLikelihood, DuplicateNoiselessRecordFails) {
  const auto g = fixture::grid(10, 10);
  auto m = fixture::model({0.8}, {2.0}, {0.3});
  m.levels[0].noise_sd = 0.0;
  SampleLog log;
  log.append({5, 1, 0.9});
  log.append({5, 1, 0.9});
  EXPECT_THROW(log_marginal_likelihood(log, g, m), NumericalFailure);
  EXPECT_THROW(posterior(log, g, m), NumericalFailure);
}

TEST(LogMarginalLikelihood, PrefersGeneratingHyperparameters) {
  const auto g = fixture::grid(20, 20);
  const auto m = fixture::model({0.5, 0.3}, {4.0, 2.0}, {0.1, 0.05});
  auto wrong_scale = m;
  for (auto& lv : wrong_scale.levels) lv.length_scale *= 2.5;
  auto wrong_amp = m;
  for (auto& lv : wrong_amp.levels) lv.amplitude *= 3.0;
  const GroundTruthSampler sampler(g, m);
  int wins = 0;
  const int seeds = 50;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(static_cast<std::uint64_t>(1000 + s));
    const auto truth = sampler.draw(rng);
    std::uniform_int_distribution<std::size_t> cell(0, g.size() - 1);
    SampleLog log;
    for (int i = 0; i < 60; ++i) {
      const auto c = cell(rng);
      log.append({c, 1, measure(truth, m, c, 1, rng)});
    }
    for (int i = 0; i < 60; ++i) {
      const auto c = cell(rng);
      log.append({c, 2, measure(truth, m, c, 2, rng)});
    }
    const double at_truth = log_marginal_likelihood(log, g, m);
    wins += at_truth >= log_marginal_likelihood(log, g, wrong_scale) &&
            at_truth >= log_marginal_likelihood(log, g, wrong_amp);
  }
  EXPECT_GE(wins, 45);
}
