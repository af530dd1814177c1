#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "blo/distillation.hpp"
#include "blo/meta_opt.hpp"
#include "blo/quadratic.hpp"
#include "blo/rng.hpp"

using namespace blo;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

OptimizerSettings gd(double step) {
  OptimizerSettings s;
  s.kind = OptimizerKind::GD;
  s.step_size = step;
  return s;
}

QuadraticBilevel quadratic20(std::uint64_t seed = 3) {
  QuadraticSpec s;
  s.inner_dim = 20;
  s.meta_dim = 20;
  s.eig_min = 1;
  s.eig_max = 2;
  s.init = QuadraticInit::Zero;
  s.seed = seed;
  return QuadraticBilevel::from_spec(s);
}

TEST(MetaOptimizer, GradientDescentArithmetic) {
  MetaOptimizer opt(gd(0.1), 2);
  EXPECT_EQ(opt.step(MetaVector{1, 1}, MetaVector{1, -1}), (MetaVector{0.9, 1.1}));
  EXPECT_EQ(opt.timestep(), 1u);
}

TEST(MetaOptimizer, ZeroGradientLeavesPhiUnchanged) {
  for (auto kind : {OptimizerKind::GD, OptimizerKind::Adam}) {
    OptimizerSettings s;
    s.kind = kind;
    MetaOptimizer opt(s, 3);
    const MetaVector phi{0.5, -2, 3};
    EXPECT_EQ(opt.step(phi, MetaVector(3)), phi) << to_string(kind);
  }
}

TEST(MetaOptimizer, AdamMatchesHandComputedSteps) {
  OptimizerSettings s;
  s.step_size = 0.1;
  MetaOptimizer opt(s, 2);
  const MetaVector g1{1, -2}, g2{0.5, 4};
  MetaVector phi{0, 0};
  phi = opt.step(phi, g1);
  phi = opt.step(phi, g2);
  std::vector<double> expected(2);
  for (std::size_t i = 0; i < 2; ++i) {
    double m = 0, v = 0, x = 0;
    for (int t = 1; t <= 2; ++t) {
      const double g = t == 1 ? g1[i] : g2[i];
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1 - std::pow(0.9, t));
      const double vh = v / (1 - std::pow(0.999, t));
      x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    expected[i] = x;
  }
  EXPECT_NEAR(phi[0], expected[0], 1e-15);
  EXPECT_NEAR(phi[1], expected[1], 1e-15);
  EXPECT_EQ(opt.timestep(), 2u);
}

TEST(MetaOptimizer, NonFiniteUpdateThrowsAndKeepsState) {
  OptimizerSettings s;
  MetaOptimizer opt(s, 2);
  EXPECT_THROW(opt.step(MetaVector{0, 0}, MetaVector{std::nan(""), 1}), DivergenceError);
  EXPECT_EQ(opt.timestep(), 0u);
  EXPECT_EQ(opt.first_moment(), MetaVector(2));
  EXPECT_THROW(opt.step(MetaVector{0, 0}, MetaVector{1, 2, 3}), InvalidArgument);
  EXPECT_THROW(MetaOptimizer(gd(0.0), 2), InvalidArgument);
  EXPECT_THROW(MetaOptimizer(gd(std::numeric_limits<double>::infinity()), 2), InvalidArgument);
}

TEST(RunCsv, RoundTripIsExact) {
  RunRecord rec;
  rec.rows.push_back({0, 1, 0.1, 3.0000000000000004, 1e-9, 18446744073709551615ull});
  rec.rows.push_back({1, 2, 1e300, 0.0, 0.0, 0});
  rec.rows.push_back({2, 2, std::nan(""), std::nan(""), 0.0, 7});
  std::stringstream ss;
  write_run_csv(ss, rec);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')),
            "step,phase,meta_loss,grad_norm,wall_seconds,seed");
  const RunRecord back = read_run_csv(ss);
  ASSERT_EQ(back.rows.size(), 3u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.rows[i].step, rec.rows[i].step);
    EXPECT_EQ(back.rows[i].phase, rec.rows[i].phase);
    EXPECT_EQ(back.rows[i].meta_loss, rec.rows[i].meta_loss);
    EXPECT_EQ(back.rows[i].grad_norm, rec.rows[i].grad_norm);
    EXPECT_EQ(back.rows[i].wall_seconds, rec.rows[i].wall_seconds);
    EXPECT_EQ(back.rows[i].seed, rec.rows[i].seed);
  }
  EXPECT_TRUE(std::isnan(back.rows[2].meta_loss));
}

TEST(RunCsv, RejectsMalformedInput) {
  std::stringstream bad_header("step,phase,loss\n");
  EXPECT_THROW(read_run_csv(bad_header), InvalidArgument);
  std::stringstream not_increasing(
      "step,phase,meta_loss,grad_norm,wall_seconds,seed\n1,1,0,0,0,0\n1,1,0,0,0,0\n");
  EXPECT_THROW(read_run_csv(not_increasing), InvalidArgument);
  std::stringstream short_row("step,phase,meta_loss,grad_norm,wall_seconds,seed\n0,1,0\n");
  EXPECT_THROW(read_run_csv(short_row), InvalidArgument);
}

TEST(RunTraining, DeterministicAndWellFormed) {
  const auto p = quadratic20();
  TrainingSettings s;
  s.schedule.phase1 = {EstimatorKind::HessianFree, 5};
  s.schedule.phase2 = {EstimatorKind::Fg2u, 7};
  s.phase1.T = s.phase2.T = 10;
  s.phase2.b = 3;
  s.optimizer = gd(0.05);
  s.master_seed = 99;
  const TrainingResult a = run_training(p, s, MetaVector(20, 0.1));
  const TrainingResult b = run_training(p, s, MetaVector(20, 0.1));
  ASSERT_EQ(a.record.rows.size(), 12u);
  EXPECT_EQ(a.phi, b.phi);
  for (std::size_t k = 0; k < 12; ++k) {
    EXPECT_EQ(a.record.rows[k].step, k);
    EXPECT_EQ(a.record.rows[k].phase, k < 5 ? 1 : 2);
    EXPECT_EQ(a.record.rows[k].meta_loss, b.record.rows[k].meta_loss);
    EXPECT_TRUE(std::isfinite(a.record.rows[k].meta_loss));
    EXPECT_EQ(a.record.rows[k].wall_seconds, 0.0);
    EXPECT_EQ(a.record.rows[k].seed, training_run_seed(99, k, 0));
  }
  EXPECT_FALSE(a.record.diverged);
  // The first row's loss is h at the initial point.
  EXPECT_EQ(a.record.rows[0].meta_loss, p.black_box_h(MetaVector(20, 0.1), 10, 0));
}

TEST(RunTraining, DegenerateScheduleIsPureForwardGradient) {
  const auto p = quadratic20();
  TrainingSettings s;
  s.schedule.phase2 = {EstimatorKind::Fg2u, 4};
  s.phase2.T = 5;
  s.optimizer = gd(0.1);
  s.master_seed = 5;
  const TrainingResult r = run_training(p, s, MetaVector(20));
  MetaVector phi(20);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto dirs = sample_directions(Distribution::Rademacher, 20, 1,
                                        training_directions_seed(5, k, 0));
    phi -= 0.1 * fg2u_estimate(p, phi, 5, training_run_seed(5, k, 0), dirs).grad;
  }
  EXPECT_EQ(r.phi, phi);
}

TEST(RunTraining, DivergenceRecordsTerminatorRow) {
  const auto p = quadratic20();
  TrainingSettings s;
  s.schedule.phase2 = {EstimatorKind::Rgu, 2000};
  s.phase2.T = 5;
  s.optimizer = gd(1e3);
  const TrainingResult r = run_training(p, s, MetaVector(20, 1.0));
  ASSERT_TRUE(r.record.diverged);
  ASSERT_GE(r.record.rows.size(), 2u);
  const RunRow& last = r.record.rows.back();
  EXPECT_TRUE(std::isnan(last.meta_loss));
  EXPECT_EQ(last.phase, 2);
  EXPECT_EQ(last.step, r.record.rows.size() - 1);
  EXPECT_TRUE(r.phi.all_finite());
  for (std::size_t k = 0; k + 1 < r.record.rows.size(); ++k)
    EXPECT_TRUE(std::isfinite(r.record.rows[k].meta_loss));
}

TEST(RunTraining, RejectsBadArguments) {
  const auto p = quadratic20();
  TrainingSettings s;
  s.accumulation = 0;
  EXPECT_THROW(run_training(p, s, MetaVector(20)), InvalidArgument);
  s.accumulation = 1;
  EXPECT_THROW(run_training(p, s, MetaVector(3)), InvalidArgument);
}

TEST(RunTraining, AccumulationMatchesLargerBatchInExpectation) {
  // One GD step with unit step size moves phi by minus the averaged estimate, so the
  // update means of (a = 4, b = 2) and (a = 1, b = 8) must agree.
  QuadraticSpec spec;
  spec.inner_dim = 6;
  spec.meta_dim = 8;
  spec.init = QuadraticInit::Random;
  const auto p = QuadraticBilevel::from_spec(spec);
  const MetaVector phi0(8, 0.2);
  const std::size_t runs = 4000;
  auto sample_updates = [&](std::size_t a, std::size_t b) {
    std::vector<MetaVector> out;
    for (std::size_t r = 0; r < runs; ++r) {
      TrainingSettings s;
      s.schedule.phase2 = {EstimatorKind::Fg2u, 1};
      s.phase2.T = 6;
      s.phase2.b = b;
      s.accumulation = a;
      s.optimizer = gd(1.0);
      s.master_seed = derive_seed(a * 1000 + b, r);
      out.push_back(phi0 - run_training(p, s, phi0).phi);
    }
    return out;
  };
  const auto acc = sample_updates(4, 2);
  const auto big = sample_updates(1, 8);
  for (std::size_t i = 0; i < 8; ++i) {
    double m1 = 0, m2 = 0, v1 = 0, v2 = 0;
    for (std::size_t r = 0; r < runs; ++r) {
      m1 += acc[r][i];
      m2 += big[r][i];
    }
    m1 /= runs;
    m2 /= runs;
    for (std::size_t r = 0; r < runs; ++r) {
      v1 += (acc[r][i] - m1) * (acc[r][i] - m1);
      v2 += (big[r][i] - m2) * (big[r][i] - m2);
    }
    const double se = std::sqrt(v1 / (runs - 1) / runs + v2 / (runs - 1) / runs);
    EXPECT_LE(std::abs(m1 - m2), 3.0 * se + 1e-12) << "coordinate " << i;
  }
}

TEST(RunTraining, TwoPhaseBeatsShortPureForwardGradient) {
  std::vector<double> two_phase, pure;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = quadratic20(100 + seed);
    const MetaVector phi0(20, 1.0);
    TrainingSettings s;
    s.phase1.T = s.phase2.T = 20;
    s.optimizer = gd(0.05);
    s.master_seed = seed;

    s.schedule.phase1 = {EstimatorKind::HessianFree, 200};
    s.schedule.phase2 = {EstimatorKind::Fg2u, 200};
    const TrainingResult a = run_training(p, s, phi0);
    two_phase.push_back(p.black_box_h(a.phi, 20, 0));

    s.schedule.phase1 = {std::nullopt, 0};
    s.schedule.phase2 = {EstimatorKind::Fg2u, 200};
    const TrainingResult b = run_training(p, s, phi0);
    pure.push_back(p.black_box_h(b.phi, 20, 0));
  }
  EXPECT_LE(median(two_phase), median(pure));
}

TEST(RunTraining, DistillationLossDecreasesEarly) {
  DistillationSpec spec;
  spec.classes = 3;
  spec.feature_dim = 4;
  spec.samples_per_class = 30;
  const DistillationProblem p(spec);
  std::vector<std::vector<double>> curves;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainingSettings s;
    s.schedule.phase2 = {EstimatorKind::Fg2u, 50};
    s.phase2.T = 20;
    s.phase2.b = 4;
    s.optimizer.step_size = 1e-2;
    s.master_seed = seed;
    const TrainingResult r = run_training(p, s, p.initial_meta(seed));
    ASSERT_FALSE(r.record.diverged);
    std::vector<double> curve;
    for (const auto& row : r.record.rows) curve.push_back(row.meta_loss);
    curve.push_back(p.black_box_h(r.phi, 20, 0));
    curves.push_back(curve);
  }
  const std::size_t len = curves.front().size();
  std::vector<double> med(len);
  for (std::size_t k = 0; k < len; ++k) {
    std::vector<double> col;
    for (const auto& c : curves) col.push_back(c[k]);
    med[k] = median(col);
  }
  for (std::size_t k = 1; k < len; ++k) EXPECT_LT(med[k], med[k - 1]) << "step " << k;
}

}  // namespace
