#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sgzp/model.hpp"

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

TEST(Rhs, GerminatorContactCreatesZombies) {
  const auto m = baseline_model();
  const auto r = rhs({0.99, 0.01, 0.0, 0.0}, {1.0, 0.0, 0.0}, m);
  EXPECT_NEAR(r.dS, -0.0198, 1e-15);
  EXPECT_NEAR(r.dZ, 0.0198, 1e-15);
  EXPECT_EQ(r.dP, 0.0);
  EXPECT_EQ(r.dG, 0.0);
}

TEST(Rhs, NoActiveChannelMeansNoFlow) {
  for (auto v : {Variant::no_halting, Variant::halting, Variant::adaptive}) {
    auto m = baseline_model(v);
    if (v == Variant::adaptive) m.damage.g_kind = VisibilityKind::zero;
    const auto r = rhs({0.5, 0.01, 0.0, 0.49}, {}, m);
    EXPECT_EQ(r.dS, 0.0);
    EXPECT_EQ(r.dZ, 0.0);
    EXPECT_EQ(r.dP, 0.0);
  }
}

TEST(Rhs, HaltingMovesZombiesToPassives) {
  auto m = baseline_model(Variant::halting);
  m.beta = BetaSpec::constant_rate(1.0);
  m.gamma = 1.0;
  m.pi = 0.5;
  const auto r = rhs({0.5, 0.1, 0.2, 0.2}, {0.0, 0.0, 1.0}, m);
  EXPECT_NEAR(r.dZ, 0.1 - 0.01, 1e-15);
  EXPECT_NEAR(r.dP, 0.01, 1e-15);
}

TEST(Rhs, RejectsHaltingControlOutsideHaltingVariant) {
  const auto m = baseline_model();
  EXPECT_THROW(rhs({0.5, 0.1, 0.2, 0.2}, {0.0, 0.0, 1.0}, m), InvalidArgument);
}

TEST(Rhs, RejectsOffSimplexState) {
  const auto m = baseline_model();
  EXPECT_THROW(rhs({0.6, 0.1, 0.2, 0.2}, {1.0, 0.0, 0.0}, m), InvalidArgument);
}

TEST(Controls, TinyViolationsAreClamped) {
  const auto u = admissible_control({1.0 + 5e-13, -5e-13, 0.0}, Variant::no_halting);
  EXPECT_EQ(u.u_Z, 1.0);
  EXPECT_EQ(u.u_P, 0.0);
  const auto w = admissible_control({0.6, 0.4 + 5e-13, 0.0}, Variant::no_halting);
  EXPECT_LE(w.u_Z + w.u_P, 1.0);
  EXPECT_THROW(admissible_control({0.6, 0.41, 0.0}, Variant::no_halting), InvalidArgument);
  EXPECT_THROW(admissible_control({1.0 + 1e-9, 0.0, 0.0}, Variant::no_halting), InvalidArgument);
}

TEST(Beta, Kinds) {
  EXPECT_EQ(beta_of(BetaSpec::constant_rate(2.0), 0.7), 2.0);
  EXPECT_DOUBLE_EQ(beta_of(BetaSpec::affine(1.0, 2.0), 0.5), 1.5);
  EXPECT_DOUBLE_EQ(beta_of(BetaSpec::sigmoid(1.0, 100.0, 0.01), 0.01), 0.5);
}

TEST(Beta, Errors) {
  EXPECT_THROW(beta_of(BetaSpec::constant_rate(1.0), 1.5), InvalidArgument);
  EXPECT_THROW(beta_of(BetaSpec::constant_rate(1.0), -0.1), InvalidArgument);
  EXPECT_THROW(beta_of(BetaSpec::affine(3.0, 2.0), 0.5), InvalidArgument);
  EXPECT_THROW(BetaSpec::affine(3.0, 2.0).validate(), InvalidArgument);
  EXPECT_THROW(BetaSpec::sigmoid(1.0, 10.0, 1.5).validate(), InvalidArgument);
}

TEST(Beta, MonotoneAndPositiveProperty) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double bmax = 0.5 + 2.0 * U(rng);
    const BetaSpec specs[] = {BetaSpec::constant_rate(bmax), BetaSpec::affine(bmax * U(rng), bmax),
                              BetaSpec::sigmoid(bmax, 1.0 + 200.0 * U(rng), 0.01 + 0.9 * U(rng))};
    for (const auto& spec : specs) {
      double prev = beta_of(spec, 0.0);
      for (int i = 1; i <= 100; ++i) {
        const double z = i / 100.0;
        const double b = beta_of(spec, z);
        EXPECT_LE(b, prev);
        if (spec.kind == BetaKind::affine && spec.a > 0) EXPECT_LT(b, prev);
        if (spec.kind != BetaKind::affine || spec.a < spec.beta_max) EXPECT_GT(b, 0.0);
        prev = b;
      }
    }
  }
}

TEST(Beta, SlopeMatchesFiniteDifference) {
  const BetaSpec specs[] = {BetaSpec::affine(0.7, 2.0), BetaSpec::sigmoid(1.0, 30.0, 0.2)};
  for (const auto& spec : specs) {
    for (double z : {0.05, 0.2, 0.3, 0.6}) {
      const double h = 1e-6;
      const double fd = (beta_of(spec, z + h) - beta_of(spec, z - h)) / (2 * h);
      EXPECT_NEAR(beta_slope(spec, z), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Damage, Rates) {
  const auto d1 = DamageSpec::power(0.5).with_linear_visibility(0.7);
  EXPECT_EQ(damage_rate({0.99, 0.01, 0.0, 0.0}, d1), 0.0);
  EXPECT_NEAR(damage_rate({0.74, 0.01, 0.04, 0.21}, d1), 0.472, 1e-15);
  const auto d2 = DamageSpec::power(0.9);
  EXPECT_DOUBLE_EQ(damage_rate({0.79, 0.01, 0.1, 0.1}, d2), std::pow(0.2, 0.9));
}

TEST(Damage, SlopeClampIsReported) {
  const auto d = DamageSpec::power(0.5);
  bool clamped = false;
  EXPECT_DOUBLE_EQ(d.efficacy_slope(0.0, &clamped), 0.5 * std::pow(1e-12, -0.5));
  EXPECT_TRUE(clamped);
  clamped = false;
  EXPECT_DOUBLE_EQ(d.efficacy_slope(0.25, &clamped), 1.0);
  EXPECT_FALSE(clamped);
  EXPECT_EQ(DamageSpec::power(1.0).efficacy_slope(0.0), 1.0);
}

TEST(ModelSpec, VariantCompatibility) {
  auto m = baseline_model(Variant::halting);
  EXPECT_NO_THROW(m.validate());
  m.damage = DamageSpec::power(0.5).with_power_visibility(0.7, 2.0);
  EXPECT_THROW(m.validate(), InvalidArgument);

  auto a = baseline_model(Variant::adaptive);
  EXPECT_THROW(a.validate(), InvalidArgument);  // g must vanish
  a.damage.g_kind = VisibilityKind::zero;
  a.beta = BetaSpec::sigmoid(1.0, 100.0, 0.01);
  EXPECT_NO_THROW(a.validate());

  auto n = baseline_model();
  n.beta = BetaSpec::affine(1.0, 2.0);
  EXPECT_THROW(n.validate(), InvalidArgument);
  n = baseline_model();
  n.T = 0.0;
  EXPECT_THROW(n.validate(), InvalidArgument);
  n = baseline_model();
  n.init = {0.99, 0.0, 0.01, 0.0};
  EXPECT_THROW(n.validate(), InvalidArgument);
  n = baseline_model(Variant::halting);
  n.pi = 0.0;
  EXPECT_THROW(n.validate(), InvalidArgument);
}

// Random valid inputs: the flow conserves the simplex exactly, Z never falls
// outside halting, and only the fractions matter.
TEST(RhsProperty, ConservationAndSigns) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const Variant v = static_cast<Variant>(trial % 3);
    ModelSpec m = baseline_model(v);
    m.gamma = 0.1 + 3.0 * U(rng);
    m.pi = 0.05 + 0.95 * U(rng);
    if (v == Variant::adaptive) {
      m.damage.g_kind = VisibilityKind::zero;
      m.beta = trial % 2 ? BetaSpec::affine(U(rng), 1.5) : BetaSpec::sigmoid(1.0, 50.0, 0.1);
    }
    double w[4] = {U(rng) + 1e-3, U(rng) + 1e-3, U(rng), U(rng)};
    const double s = w[0] + w[1] + w[2] + w[3];
    const EpidemicState x{w[0] / s, w[1] / s, w[2] / s, 1.0 - (w[0] + w[1] + w[2]) / s};
    const double uz = U(rng);
    const ControlVector u{uz, (1.0 - uz) * U(rng), v == Variant::halting ? U(rng) : 0.0};
    const auto r = rhs(x, u, m);
    EXPECT_EQ(r.dG, 0.0);
    EXPECT_EQ(r.dS, -(r.dZ + r.dP));
    EXPECT_NEAR(r.dS + r.dZ + r.dP, 0.0, 1e-16);
    EXPECT_GE(r.dP, 0.0);
    if (v != Variant::halting) {
      EXPECT_GE(r.dZ, 0.0);
    }
    // same fractions, same rates: the right-hand side sees only compartment sizes
    const auto again = rhs(EpidemicState{x.S, x.G, x.Z, x.P}, u, m);
    EXPECT_EQ(again.dZ, r.dZ);
    EXPECT_EQ(again.dP, r.dP);
  }
}
