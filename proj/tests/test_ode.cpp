#include <gtest/gtest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <random>

#include "sgzp/ode.hpp"

using namespace sgzp;

namespace {

ModelSpec baseline_model(Variant v = Variant::no_halting) {
  ModelSpec m;
  m.variant = v;
  m.beta = BetaSpec::constant_rate(2.0);
  m.gamma = 0.5;
  m.pi = 0.5;
  m.T = 5.0;
  m.init = {0.99, 0.01, 0.0, 0.0};
  m.damage = DamageSpec::power(0.5).with_linear_visibility(0.7);
  return m;
}

}  // namespace

TEST(Policy, ThresholdSegments) {
  const auto m = baseline_model(Variant::halting);
  const auto segs = ControlPolicy::threshold(2.0).segments(m);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].u, zombie_control);
  EXPECT_EQ(segs[1].u, (ControlVector{0.0, 1.0, 1.0}));
  EXPECT_EQ(segs[1].t0, 2.0);
  EXPECT_EQ(ControlPolicy::threshold(0.0).segments(m).size(), 1u);
  EXPECT_EQ(ControlPolicy::threshold(5.0).segments(m).size(), 1u);
  EXPECT_THROW(ControlPolicy::threshold(5.5).segments(m), InvalidArgument);
  // u_h is forced to zero outside halting
  EXPECT_EQ(ControlPolicy::threshold(2.0).segments(baseline_model())[1].u.u_h, 0.0);
  // right-continuous at the switch
  EXPECT_EQ(ControlPolicy::threshold(2.0).at(2.0, m).u_P, 1.0);
  EXPECT_EQ(ControlPolicy::threshold(2.0).at(1.999, m).u_Z, 1.0);
}

TEST(Policy, PiecewiseValidation) {
  const auto m = baseline_model();
  EXPECT_THROW(ControlPolicy::piecewise({0.0, 3.0, 2.0, 5.0}, {{}, {}, {}}).segments(m), InvalidArgument);
  EXPECT_THROW(ControlPolicy::piecewise({0.0, 5.0}, {{0.7, 0.7, 0.0}}).segments(m), InvalidArgument);
  EXPECT_THROW(ControlPolicy::piecewise({0.0, 4.0}, {{}}).segments(m), InvalidArgument);
  EXPECT_NO_THROW(ControlPolicy::piecewise({0.0, 2.5, 5.0}, {{1, 0, 0}, {0, 1, 0}}).segments(m));
}

TEST(Forward, AlwaysPassiveMatchesClosedForm) {
  const auto m = baseline_model();
  const auto tr = integrate_forward(m, ControlPolicy::always_passive());
  for (std::size_t i = 0; i < tr.size(); ++i) {
    EXPECT_EQ(tr.states[i].Z, 0.0);
    const double S = 0.99 * std::exp(-0.02 * tr.t[i]);
    EXPECT_NEAR(tr.states[i].S, S, 1e-12);
    EXPECT_NEAR(tr.states[i].P, 0.99 - S, 1e-12);
  }
  EXPECT_EQ(tr.t.back(), 5.0);
  EXPECT_NEAR(tr.states.back().S, 0.89578, 1e-5);
  EXPECT_NEAR(tr.states.back().P, 0.09422, 1e-5);
}

TEST(Forward, NullControlsKeepStateConstant) {
  auto m = baseline_model(Variant::halting);
  const auto tr = integrate_forward(m, ControlPolicy::piecewise({0.0, 5.0}, {{0.0, 0.0, 1.0}}));
  for (const auto& s : tr.states) EXPECT_EQ(s, m.init);
}

TEST(Forward, GridHitsBreakpointsAndT) {
  const auto m = baseline_model();
  const auto tr = integrate_forward(m, ControlPolicy::threshold(1.23456789), 0.01);
  ASSERT_EQ(tr.breaks.size(), 3u);
  EXPECT_EQ(tr.t[tr.breaks[1]], 1.23456789);
  EXPECT_EQ(tr.t.back(), 5.0);
  for (std::size_t i = 1; i < tr.size(); ++i) {
    EXPECT_GT(tr.t[i], tr.t[i - 1]);
    EXPECT_LE(tr.t[i] - tr.t[i - 1], 0.01 + 1e-15);
  }
  // control of the step leaving the breakpoint is the late one
  EXPECT_EQ(tr.controls[tr.breaks[1]], passive_control);
  EXPECT_EQ(tr.controls[tr.breaks[1] - 1], zombie_control);
}

TEST(Forward, Fig1ConservesSimplex) {
  const auto m = baseline_model();
  for (double ts : {0.0, 1.0, 2.5, 4.9, 5.0}) {
    const auto tr = integrate_forward(m, ControlPolicy::threshold(ts));
    for (const auto& s : tr.states) {
      EXPECT_NEAR(s.total(), 1.0, 1e-9);
      EXPECT_EQ(s.G, 0.01);
    }
  }
}

TEST(Forward, AbsurdStepIsRejected) {
  auto m = baseline_model();
  m.beta = BetaSpec::constant_rate(2000.0);
  m.gamma = 50.0;
  EXPECT_THROW(integrate_forward(m, ControlPolicy::always_zombie(), 1.0), NumericalError);
  EXPECT_THROW(integrate_forward(m, ControlPolicy::always_zombie(), 0.0), InvalidArgument);
}

TEST(Objective, ZeroInfectionGivesZero) {
  const auto m = baseline_model();
  const auto tr = integrate_forward(m, ControlPolicy::piecewise({0.0, 5.0}, {{0.0, 0.0, 0.0}}));
  EXPECT_EQ(tr.J, 0.0);
}

TEST(Objective, ConstantTrajectory) {
  Trajectory tr;
  for (int i = 0; i <= 7; ++i) {
    tr.t.push_back(i * 0.5);
    tr.states.push_back({0.5, 0.1, 0.15, 0.25});
  }
  tr.t.back() = 3.3;  // a shortened final step
  tr.breaks = {0, 3, 7};
  const auto d = DamageSpec::power(0.5).with_linear_visibility(0.7);
  EXPECT_NEAR(objective(tr, d), 3.3 * (std::sqrt(0.4) - 0.7 * 0.15), 1e-14);
}

TEST(Objective, AlwaysPassiveMatchesAdaptiveQuadrature) {
  const auto m = baseline_model();
  const double J = integrate_forward(m, ControlPolicy::always_passive()).J;
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double oracle =
      integrator.integrate([](double t) { return std::sqrt(0.99 * (1.0 - std::exp(-0.02 * t))); }, 0.0, 5.0);
  EXPECT_NEAR(J, oracle, 1e-6);
  EXPECT_NEAR(J, oracle, 1e-8);
}

TEST(Objective, StableUnderStepHalving) {
  const auto m = baseline_model();
  for (double ts : {0.0, 1.7, 3.0, 5.0}) {
    const auto pol = ControlPolicy::threshold(ts);
    const double a = evaluate(m, pol, default_step(m));
    const double b = evaluate(m, pol, default_step(m) / 2);
    EXPECT_NEAR(a, b, 1e-8) << "t* = " << ts;
  }
}

TEST(Convergence, FourthOrderNoHalting) {
  const auto rep = convergence_order(baseline_model(), ControlPolicy::threshold(2.2));
  ASSERT_TRUE(rep.order.has_value());
  EXPECT_GE(*rep.order, 3.5);
  EXPECT_LE(*rep.order, 4.5);
}

TEST(Convergence, FourthOrderHalting) {
  const auto rep = convergence_order(baseline_model(Variant::halting), ControlPolicy::threshold(2.2));
  ASSERT_TRUE(rep.order.has_value());
  EXPECT_GE(*rep.order, 3.5);
  EXPECT_LE(*rep.order, 4.5);
}

TEST(Convergence, ConstantStateIsExact) {
  const auto rep = convergence_order(baseline_model(), ControlPolicy::piecewise({0.0, 5.0}, {{}}));
  EXPECT_TRUE(rep.exact());
  EXPECT_EQ(rep.diff_coarse, 0.0);
}

// Random specs and threshold policies: simplex, positivity, monotone P (and Z
// outside halting), constant G.
TEST(ForwardProperty, StateInvariants) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    ModelSpec m = baseline_model(static_cast<Variant>(trial % 3));
    m.beta = BetaSpec::constant_rate(0.5 + 3.0 * U(rng));
    m.gamma = 0.2 + 2.5 * U(rng);
    m.pi = 0.05 + 0.95 * U(rng);
    m.T = 1.0 + 9.0 * U(rng);
    const double G = 0.001 + 0.05 * U(rng);
    const double Z0 = 0.05 * U(rng);
    m.init = {1.0 - G - Z0, G, Z0, 0.0};
    if (m.variant == Variant::adaptive) {
      m.damage.g_kind = VisibilityKind::zero;
      m.beta = BetaSpec::sigmoid(0.5 + 2.0 * U(rng), 5.0 + 100.0 * U(rng), 0.01 + 0.3 * U(rng));
    }
    const auto tr = integrate_forward(m, ControlPolicy::threshold(m.T * U(rng)));
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const auto& s = tr.states[i];
      ASSERT_NEAR(s.total(), 1.0, 1e-9);
      ASSERT_GT(s.S, 0.0);
      ASSERT_GE(s.Z, 0.0);
      ASSERT_GE(s.P, 0.0);
      ASSERT_EQ(s.G, G);
      if (i > 0) {
        ASSERT_GE(s.P, tr.states[i - 1].P);
        if (m.variant != Variant::halting) ASSERT_GE(s.Z, tr.states[i - 1].Z);
      }
    }
  }
}
