#include <gtest/gtest.h>

#include <cmath>

#include "sgzp/optimizer.hpp"
#include "sgzp/pmp.hpp"

using namespace sgzp;

namespace {

ModelSpec baseline_model(Variant v = Variant::no_halting, double gamma = 0.5) {
  ModelSpec m;
  m.variant = v;
  m.beta = BetaSpec::constant_rate(2.0);
  m.gamma = gamma;
  m.pi = 0.5;
  m.T = 5.0;
  m.init = {0.99, 0.01, 0.0, 0.0};
  m.damage = DamageSpec::power(0.5).with_linear_visibility(0.7);
  return m;
}

ModelSpec sigmoid_defense_model() {
  ModelSpec m;
  m.variant = Variant::adaptive;
  m.beta = BetaSpec::sigmoid(1.0, 100.0, 0.01);
  m.gamma = 1.4;
  m.T = 15.0;
  m.init = {0.999, 0.001, 0.0, 0.0};
  m.damage = DamageSpec::power(0.9);
  return m;
}

}  // namespace

TEST(Costates, ZeroDamageGivesZeroCostates) {
  const auto tr = integrate_forward(baseline_model(Variant::halting), ControlPolicy::threshold(2.0));
  auto m = baseline_model(Variant::halting);
  m.damage.f_kind = EfficacyKind::zero;
  m.damage.g_kind = VisibilityKind::zero;
  const auto c = integrate_costates_backward(m, tr);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(c.lambda_S[i], 0.0);
    EXPECT_EQ(c.lambda_Z[i], 0.0);
    EXPECT_EQ(c.lambda_P[i], 0.0);
    EXPECT_EQ(c.phi_P[i], 0.0);
    EXPECT_EQ(c.phi_Z[i], 0.0);
    EXPECT_EQ(c.phi_h[i], 0.0);
  }
  const auto r = switching_residuals(m, tr, c);
  EXPECT_EQ(r.max(), 0.0);
  EXPECT_EQ(r.phi_h_identity, 0.0);
}

TEST(Costates, LinearEfficacyGivesLinearLambdaP) {
  auto m = baseline_model();
  m.damage = DamageSpec::power(1.0);
  m.damage.g_kind = VisibilityKind::zero;
  const auto tr = integrate_forward(m, ControlPolicy::piecewise({0.0, 5.0}, {{}}));
  const auto c = integrate_costates_backward(m, tr);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c.lambda_P[i], 5.0 - c.t[i], 1e-12);
  EXPECT_EQ(c.lambda_P.back(), 0.0);
  EXPECT_EQ(c.lambda_0, 1.0);
}

TEST(Costates, TerminalValuesAndEndSlope) {
  const auto m = baseline_model();
  const auto sol = optimal_threshold(m);
  const auto tr = integrate_forward(m, ControlPolicy::threshold(sol.t_star));
  const auto c = integrate_costates_backward(m, tr);
  EXPECT_EQ(c.lambda_S.back(), 0.0);
  EXPECT_EQ(c.lambda_Z.back(), 0.0);
  EXPECT_EQ(c.lambda_P.back(), 0.0);
  EXPECT_EQ(c.phi_P.back(), 0.0);
  EXPECT_EQ(c.phi_Z.back(), 0.0);
  const auto d = switching_derivatives(m, tr, c, tr.size() - 1);
  EXPECT_LT(d.phi_P, 0.0);
  const std::size_t n = tr.size();
  EXPECT_LT((c.phi_P[n - 1] - c.phi_P[n - 2]) / (tr.t[n - 1] - tr.t[n - 2]), 0.0);
}

TEST(Costates, RejectsForeignTrajectory) {
  const auto m = baseline_model();
  auto other = m;
  other.T = 4.0;
  const auto tr = integrate_forward(other, ControlPolicy::threshold(2.0));
  EXPECT_THROW(integrate_costates_backward(m, tr), InvalidArgument);
  const auto tr2 = integrate_forward(m, ControlPolicy::threshold(2.0));
  auto c = integrate_costates_backward(m, tr2);
  c.t.pop_back();
  EXPECT_THROW(switching_residuals(m, tr2, c), InvalidArgument);
}

TEST(Costates, ContinuousAcrossBreakpoints) {
  const auto m = baseline_model(Variant::halting);
  const auto tr = integrate_forward(m, ControlPolicy::threshold(2.2));
  const auto c = integrate_costates_backward(m, tr);
  const std::size_t b = tr.breaks[1];
  const double jump = std::abs(c.lambda_Z[b + 1] - c.lambda_Z[b]) + std::abs(c.lambda_Z[b] - c.lambda_Z[b - 1]);
  EXPECT_LT(jump, 20 * tr.step);
}

// Finite differences of phi against the closed-form derivatives, at h and h/2.
void expect_residual_convergence(const ModelSpec& m, const ControlPolicy& pol) {
  auto residual = [&](double h) {
    const auto tr = integrate_forward(m, pol, h);
    return switching_residuals(m, tr, integrate_costates_backward(m, tr));
  };
  const auto a = residual(default_step(m));
  const auto b = residual(default_step(m) / 2);
  EXPECT_LE(a.max(), 1e-4);
  EXPECT_GT(a.points, 100u);
  const double ratio = a.max() / b.max();
  EXPECT_GE(ratio, 3.0) << "residuals " << a.max() << " -> " << b.max();
  EXPECT_LE(ratio, 5.0) << "residuals " << a.max() << " -> " << b.max();
}

TEST(Residuals, NoHaltingShrinkQuadratically) {
  expect_residual_convergence(baseline_model(), ControlPolicy::threshold(2.2));
}

TEST(Residuals, HaltingShrinkQuadratically) {
  expect_residual_convergence(baseline_model(Variant::halting), ControlPolicy::threshold(2.2));
}

TEST(Residuals, AdaptiveShrinkQuadratically) {
  auto m = baseline_model(Variant::adaptive);
  m.damage.g_kind = VisibilityKind::zero;
  m.beta = BetaSpec::sigmoid(2.0, 20.0, 0.2);
  expect_residual_convergence(m, ControlPolicy::threshold(3.0));
  m.beta = BetaSpec::affine(1.0, 2.0);
  expect_residual_convergence(m, ControlPolicy::threshold(3.0));
}

TEST(Residuals, HaltingIdentity) {
  auto m = baseline_model(Variant::halting);
  m.pi = 1.0;
  for (double ts : {1.0, 3.0}) {
    const auto tr = integrate_forward(m, ControlPolicy::threshold(ts));
    const auto r = switching_residuals(m, tr, integrate_costates_backward(m, tr));
    EXPECT_LE(r.phi_h_identity, 1e-8);
  }
}

TEST(Verify, OptimalThresholdPasses) {
  for (auto v : {Variant::no_halting, Variant::halting}) {
    const auto m = baseline_model(v);
    const auto sol = optimal_threshold(m);
    const auto verdict = verify_pmp(m, ControlPolicy::threshold(sol.t_star), 1e-4);
    EXPECT_TRUE(verdict.pass) << to_string(verdict.failed_case) << " at t = " << verdict.worst_time;
    EXPECT_LE(verdict.hamiltonian_drift, 1e-5);
    EXPECT_GT(verdict.points_checked, 1000u);
    EXPECT_TRUE(verdict.slope_clamped);  // Z + P starts at 0 with f = sqrt
  }
}

TEST(Verify, SignPatternAroundOptimalSwitch) {
  const auto m = baseline_model();
  const auto sol = optimal_threshold(m);
  const auto tr = integrate_forward(m, ControlPolicy::threshold(sol.t_star));
  const auto c = integrate_costates_backward(m, tr);
  const double band = 2 * tr.step + 1e-12;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.t[i];
    if (t <= band || std::abs(t - sol.t_star) <= band || t >= m.T - band) continue;
    if (t < sol.t_star)
      EXPECT_GT(c.phi_Z[i], std::max(c.phi_P[i], 0.0)) << t;
    else
      EXPECT_GT(c.phi_P[i], std::max(c.phi_Z[i], 0.0)) << t;
  }
}

TEST(Verify, AlwaysZombieFailsWhenVisibilityIsCostly) {
  const auto m = baseline_model(Variant::no_halting, 2.0);
  const auto verdict = verify_pmp(m, ControlPolicy::always_zombie(), 1e-4);
  EXPECT_FALSE(verdict.pass);
  EXPECT_EQ(verdict.failed_case, PmpCase::passive_only);
  const double t_star = optimal_threshold(m).t_star;
  EXPECT_GT(verdict.worst_time, t_star);
  // the passive phase is demanded all the way up to the end band
  const auto tr = integrate_forward(m, ControlPolicy::always_zombie());
  const auto c = integrate_costates_backward(m, tr);
  const std::size_t i = tr.size() - 4;
  EXPECT_GT(c.phi_P[i], std::max(c.phi_Z[i], 0.0));
}

TEST(Verify, TinyHorizonPassesTrivially) {
  // Z + P must start away from 0: with f = sqrt the exact phi is of order
  // sqrt(T) there, not of order T.
  auto m = baseline_model(Variant::halting);
  m.init = {0.94, 0.01, 0.05, 0.0};
  m.T = 1e-6;
  for (const auto& pol : {ControlPolicy::always_zombie(), ControlPolicy::always_passive(), ControlPolicy::threshold(5e-7)}) {
    const auto verdict = verify_pmp(m, pol, 1e-4);
    EXPECT_TRUE(verdict.pass);
    const auto tr = integrate_forward(m, pol);
    const auto c = integrate_costates_backward(m, tr);
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_LE(std::abs(c.phi_P[i]), 1e-4);
      EXPECT_LE(std::abs(c.phi_Z[i]), 1e-4);
    }
  }
}

TEST(Verify, AdaptiveConstantBetaPassesAlwaysZombie) {
  auto m = baseline_model(Variant::adaptive);
  m.damage.g_kind = VisibilityKind::zero;
  const auto verdict = verify_pmp(m, ControlPolicy::always_zombie(), 1e-4);
  EXPECT_TRUE(verdict.pass) << to_string(verdict.failed_case) << " at t = " << verdict.worst_time;
}

TEST(Verify, SigmoidDefenseOptimumPasses) {
  const auto m = sigmoid_defense_model();
  const auto sol = optimal_threshold(m);
  const auto verdict = verify_pmp(m, ControlPolicy::threshold(sol.t_star), 1e-4);
  EXPECT_TRUE(verdict.pass) << to_string(verdict.failed_case) << " at t = " << verdict.worst_time;
  EXPECT_LE(verdict.hamiltonian_drift, 1e-5);
}

TEST(Verify, SuboptimalSwitchIsFlagged) {
  const auto m = baseline_model();
  const auto sol = optimal_threshold(m);
  const auto early = verify_pmp(m, ControlPolicy::threshold(0.5 * sol.t_star), 1e-4);
  EXPECT_FALSE(early.pass);
  EXPECT_GT(early.hamiltonian_drift, 1e-5);
}

TEST(Verify, RejectsNonPositiveTolerance) {
  EXPECT_THROW(verify_pmp(baseline_model(), ControlPolicy::always_zombie(), 0.0), InvalidArgument);
}
