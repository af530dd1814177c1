#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "blo/distillation.hpp"
#include "blo/fd.hpp"
#include "blo/memory.hpp"
#include "blo/quadratic.hpp"
#include "blo/unroll.hpp"

using namespace blo;

namespace {

QuadraticBilevel small_quadratic(QuadraticInit init = QuadraticInit::Zero) {
  QuadraticSpec s;
  s.inner_dim = 5;
  s.meta_dim = 3;
  s.init = init;
  s.seed = 8;
  return QuadraticBilevel::from_spec(s);
}

TEST(Unroll, TrajectoryHasStatesAndSeeds) {
  const auto p = small_quadratic();
  const MetaVector phi{1, 2, 3};
  const UnrollResult r = unroll(p, phi, 7, 42, true);
  ASSERT_TRUE(r.trajectory.has_value());
  EXPECT_EQ(r.trajectory->states.size(), 8u);
  EXPECT_EQ(r.trajectory->steps(), 7u);
  EXPECT_EQ(r.trajectory->states.back(), r.theta);
  for (std::size_t t = 1; t <= 7; ++t) {
    EXPECT_EQ(r.trajectory->step_seeds[t - 1], step_seed(42, t));
    EXPECT_EQ(r.trajectory->states[t],
              p.transition(r.trajectory->states[t - 1], phi, t, step_seed(42, t)));
  }
  EXPECT_FALSE(unroll(p, phi, 7, 42, false).trajectory.has_value());
}

TEST(Unroll, FguRguAndClosedFormAgree) {
  for (auto init : {QuadraticInit::Zero, QuadraticInit::FixedPoint, QuadraticInit::Random}) {
    const auto p = small_quadratic(init);
    const MetaVector phi{0.5, -1.0, 0.25};
    const MetaVector truth = quadratic_true_hypergradient(p, phi, 9);
    const FguResult fgu = fgu_full(p, phi, 9, 0);
    const MetaVector rgu = rgu_backward(p, *unroll(p, phi, 9, 0, true).trajectory);
    EXPECT_LE(max_relative_error(fgu.grad, truth), 1e-12);
    EXPECT_LE(max_relative_error(rgu, truth), 1e-12);
    const Matrix z = quadratic_unrolled_jacobian(p, 9);
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j)
        EXPECT_NEAR(fgu.jacobian(i, j), z(i, j), 1e-12);
  }
}

TEST(Unroll, RguMatchesFiniteDifferencesOnDistillation) {
  DistillationSpec s;
  s.classes = 3;
  s.feature_dim = 4;
  s.hidden = 3;
  s.samples_per_class = 10;
  const DistillationProblem p(s);
  const MetaVector phi = p.initial_meta(2);
  const MetaVector rgu = rgu_backward(p, *unroll(p, phi, 15, 3, true).trajectory);
  const MetaVector fd =
      fd_gradient([&](const MetaVector& x) { return p.black_box_h(x, 15, 3); }, phi);
  EXPECT_LE(max_relative_error(rgu, fd), 1e-5);
}

TEST(Unroll, TrguWithAllStepsEqualsRguWhenInitIsConstant) {
  const auto p = small_quadratic(QuadraticInit::Zero);
  const MetaVector phi{0.1, 0.2, -0.3};
  const Trajectory traj = *unroll(p, phi, 6, 0, true).trajectory;
  EXPECT_EQ(trgu(p, traj, 6), rgu_backward(p, traj));
  EXPECT_EQ(trgu(p, traj, 0), p.partial_f_phi(traj.states.back(), phi));
  EXPECT_THROW(trgu(p, traj, 7), InvalidArgument);
}

TEST(Unroll, TrguDropsInitialTermWhenInitDependsOnPhi) {
  const auto p = small_quadratic(QuadraticInit::Random);
  const MetaVector phi{0.1, 0.2, -0.3};
  const Trajectory traj = *unroll(p, phi, 6, 0, true).trajectory;
  const MetaVector full = rgu_backward(p, traj);
  const MetaVector truncated = trgu(p, traj, 6);
  // The gap is exactly d_0 Z_0, the initial-map term.
  const InnerVector d0 = [&] {
    InnerVector d = p.partial_f_theta(traj.states.back(), phi);
    for (std::size_t t = 6; t >= 1; --t)
      d = p.transition_vjp(traj.states[t - 1], phi, t, traj.step_seeds[t - 1], d).d_theta;
    return d;
  }();
  EXPECT_LE(max_relative_error(full - truncated, p.init_vjp(phi, d0)), 1e-12);
}

TEST(Unroll, ReplayMismatchDetected) {
  const auto p = small_quadratic();
  const MetaVector phi{1, 1, 1};
  Trajectory traj = *unroll(p, phi, 4, 0, true).trajectory;
  traj.states[2][0] += 1e-12;
  EXPECT_THROW(rgu_backward(p, traj), ReplayMismatch);
  Trajectory short_traj = *unroll(p, phi, 4, 0, true).trajectory;
  short_traj.states.pop_back();
  EXPECT_THROW(rgu_backward(p, short_traj), ReplayMismatch);
}

/// Quadratic whose transition explodes after a fixed step.
class ExplodingProblem : public QuadraticBilevel {
 public:
  explicit ExplodingProblem(std::size_t bad_step)
      : QuadraticBilevel(QuadraticBilevel::from_spec({})), bad_step_(bad_step) {}
  InnerVector transition(const InnerVector& theta, const MetaVector& phi, std::size_t t,
                         std::uint64_t seed) const override {
    InnerVector out = QuadraticBilevel::transition(theta, phi, t, seed);
    if (t == bad_step_) out[0] = std::numeric_limits<double>::infinity();
    return out;
  }

 private:
  std::size_t bad_step_;
};

TEST(Unroll, DivergenceReportsStep) {
  const ExplodingProblem p(4);
  try {
    unroll(p, MetaVector{1, 1}, 10, 0, false);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 4);
  }
  EXPECT_THROW(unroll_with_tangents(p, MetaVector{1, 1}, 10, 0, coordinate_basis(2)),
               DivergenceError);
}

TEST(Unroll, FguRefusesOversizedJacobian) {
  const auto p = small_quadratic();
  EXPECT_THROW(fgu_full(p, MetaVector{0, 0, 0}, 3, 0, 14), OracleTooLarge);
  EXPECT_NO_THROW(fgu_full(p, MetaVector{0, 0, 0}, 3, 0, 15));
}

TEST(Unroll, TangentsEqualJacobianTimesDirection) {
  const auto p = small_quadratic(QuadraticInit::Random);
  const MetaVector phi{0.3, 0.1, -0.2};
  const DirectionBatch dirs = sample_directions(Distribution::Gaussian, 3, 4, 5);
  const TangentBundle bundle = unroll_with_tangents(p, phi, 8, 0, dirs);
  const Matrix z = quadratic_unrolled_jacobian(p, 8);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    InnerVector expected(5);
    matvec(z, dirs[i].span(), expected.span());
    EXPECT_LE(max_relative_error(bundle.tangents[i], expected), 1e-12);
  }
  EXPECT_EQ(bundle.theta, unroll(p, phi, 8, 0, false).theta);
}

TEST(Unroll, TangentsIndependentOfThreadCount) {
  DistillationSpec s;
  s.classes = 3;
  s.feature_dim = 4;
  const DistillationProblem p(s);
  const MetaVector phi = p.initial_meta(1);
  const DirectionBatch dirs = sample_directions(Distribution::Rademacher, p.meta_dim(), 6, 9);
  const TangentBundle one = unroll_with_tangents(p, phi, 10, 0, dirs, {0, 1});
  const TangentBundle three = unroll_with_tangents(p, phi, 10, 0, dirs, {0, 3});
  for (std::size_t i = 0; i < dirs.size(); ++i) EXPECT_EQ(one.tangents[i], three.tangents[i]);
}

TEST(Unroll, TruncatedTangentsSkipEarlySteps) {
  const auto p = small_quadratic(QuadraticInit::Random);
  const MetaVector phi{0.3, 0.1, -0.2};
  const DirectionBatch dirs = sample_directions(Distribution::Gaussian, 3, 1, 5);
  // Starting after the last step leaves no contribution at all.
  const TangentBundle none = unroll_with_tangents(p, phi, 4, 0, dirs, {5, 1});
  EXPECT_EQ(max_abs(none.tangents[0]), 0.0);
  // Starting at step T keeps only B_T v.
  const TangentBundle last = unroll_with_tangents(p, phi, 4, 0, dirs, {4, 1});
  const InnerVector theta3 = unroll(p, phi, 3, 0, false).theta;
  const InnerVector expected =
      p.transition_jvp(theta3, phi, 4, step_seed(0, 4), InnerVector(5), dirs[0]);
  EXPECT_EQ(last.tangents[0], expected);
}

TEST(Unroll, TangentMemoryIndependentOfDepth) {
  QuadraticSpec s;
  s.inner_dim = 40;
  s.meta_dim = 30;
  const auto p = QuadraticBilevel::from_spec(s);
  const MetaVector phi(30, 0.5);
  const DirectionBatch dirs = sample_directions(Distribution::Rademacher, 30, 4, 1);
  auto peak = [&](std::size_t T) {
    PeakProbe probe;
    { const TangentBundle b = unroll_with_tangents(p, phi, T, 0, dirs); }
    return probe.peak_above_base();
  };
  EXPECT_EQ(peak(50), peak(100));
  auto rgu_peak = [&](std::size_t T) {
    PeakProbe probe;
    {
      const UnrollResult r = unroll(p, phi, T, 0, true);
      const MetaVector g = rgu_backward(p, *r.trajectory);
    }
    return probe.peak_above_base();
  };
  const double ratio = static_cast<double>(rgu_peak(200)) / static_cast<double>(rgu_peak(100));
  EXPECT_NEAR(ratio, 2.0, 0.1);
}

}  // namespace
