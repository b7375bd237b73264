#pragma once

// Costates, switching functions and a pointwise check of the maximum-principle
// conditions for a candidate policy.
//
// With H = f(Z+P) - g(Z) + phi_P u_P + phi_Z u_Z + phi_h u_h + (l_Z - l_S) gamma beta Z S
// the switching functions are
//   phi_P = (l_P - l_S) beta G S
//   phi_Z = (l_Z - l_S) beta G S
//   phi_h = (l_P - l_Z) pi beta G Z          (halting only)
// and the costates solve l' = -dH/dx backward from l(T) = 0 with l_0 = 1.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "sgzp/model.hpp"
#include "sgzp/ode.hpp"

namespace sgzp {

struct CostateTrajectory {
  std::vector<double> t;
  std::vector<double> lambda_S;
  std::vector<double> lambda_Z;
  std::vector<double> lambda_P;
  double lambda_0 = 1.0;
  std::vector<double> phi_P;
  std::vector<double> phi_Z;
  std::vector<double> phi_h;  // zero outside the halting variant
  bool slope_clamped = false;  // f' needed the 1e-12 floor somewhere

  std::size_t size() const { return t.size(); }
};

namespace detail {

struct Costate {
  double S = 0.0;
  double Z = 0.0;
  double P = 0.0;
};

/// Point quantities shared by the costate equations and the switching-
/// function identities.
struct LocalTerms {
  double b = 0.0;   // beta(Z)
  double db = 0.0;  // beta'(Z), adaptive only
  double fp = 0.0;  // f'(Z+P)
  double gp = 0.0;  // g'(Z)
  double halt = 0.0;  // pi, halting only
};

inline LocalTerms local_terms(const ModelSpec& m, const EpidemicState& x, bool* clamped) {
  LocalTerms k;
  const double z = std::clamp(x.Z, 0.0, 1.0);
  if (m.variant == Variant::adaptive) {
    k.b = beta_of(m.beta, z);
    k.db = beta_slope(m.beta, z);
  } else {
    k.b = m.beta.beta;
  }
  k.fp = m.damage.efficacy_slope(x.Z + x.P, clamped);
  k.gp = m.damage.visibility_slope(x.Z);
  k.halt = m.variant == Variant::halting ? m.pi : 0.0;
  return k;
}

inline Costate costate_rate(const ModelSpec& m, const EpidemicState& x, const ControlVector& u, const Costate& l,
                            bool* clamped) {
  const LocalTerms k = local_terms(m, x, clamped);
  // bracket = (l_S - l_P) G u_P + (l_S - l_Z)(G u_Z + gamma Z); shared by dl_S and the beta' term of dl_Z
  const double bracket = (l.S - l.P) * x.G * u.u_P + (l.S - l.Z) * (x.G * u.u_Z + m.gamma * x.Z);
  Costate r;
  r.S = k.b * bracket;
  r.Z = -k.fp + k.gp + (l.S - l.Z) * m.gamma * k.b * x.S + k.db * x.S * bracket +
        (l.Z - l.P) * k.halt * k.b * x.G * u.u_h;
  r.P = -k.fp;
  return r;
}

inline EpidemicState lerp(const EpidemicState& a, const EpidemicState& b, double w) {
  return {a.S + w * (b.S - a.S), a.G, a.Z + w * (b.Z - a.Z), a.P + w * (b.P - a.P)};
}

inline void check_trajectory(const ModelSpec& model, const Trajectory& tr) {
  const std::size_t n = tr.size();
  if (n < 2 || tr.states.size() != n || tr.controls.size() != n || tr.breaks.size() < 2 ||
      tr.breaks.front() != 0 || tr.breaks.back() != n - 1)
    throw InvalidArgument("malformed trajectory");
  if (tr.t.front() != 0.0 || std::abs(tr.t.back() - model.T) > 1e-12 * std::max(1.0, model.T))
    throw InvalidArgument("trajectory grid does not span [0, T] of the model");
  if (!(tr.states.front() == model.init)) throw InvalidArgument("trajectory does not start at the model's initial state");
  for (std::size_t i = 1; i < n; ++i)
    if (!(tr.t[i] > tr.t[i - 1])) throw InvalidArgument("trajectory grid is not strictly increasing");
}

}  // namespace detail

/// Backward RK4 on the forward grid. Forward states at step midpoints are
/// linearly interpolated; the control of step [t_i, t_{i+1}) is controls[i].
inline CostateTrajectory integrate_costates_backward(const ModelSpec& model, const Trajectory& tr) {
  model.validate(/*allow_degenerate_damage=*/true);
  detail::check_trajectory(model, tr);
  const std::size_t n = tr.size();
  CostateTrajectory c;
  c.t = tr.t;
  c.lambda_S.assign(n, 0.0);
  c.lambda_Z.assign(n, 0.0);
  c.lambda_P.assign(n, 0.0);
  bool clamped = false;
  detail::Costate l;  // l(T) = 0
  for (std::size_t i = n - 1; i-- > 0;) {
    const double h = tr.t[i + 1] - tr.t[i];
    const auto& u = tr.controls[i];
    const EpidemicState& xb = tr.states[i + 1];
    const EpidemicState xm = detail::lerp(tr.states[i], tr.states[i + 1], 0.5);
    const EpidemicState& xa = tr.states[i];
    auto shift = [](const detail::Costate& a, const detail::Costate& r, double s) {
      return detail::Costate{a.S + s * r.S, a.Z + s * r.Z, a.P + s * r.P};
    };
    const auto k1 = detail::costate_rate(model, xb, u, l, &clamped);
    const auto k2 = detail::costate_rate(model, xm, u, shift(l, k1, -h / 2), &clamped);
    const auto k3 = detail::costate_rate(model, xm, u, shift(l, k2, -h / 2), &clamped);
    const auto k4 = detail::costate_rate(model, xa, u, shift(l, k3, -h), &clamped);
    l.S -= h / 6.0 * (k1.S + 2 * k2.S + 2 * k3.S + k4.S);
    l.Z -= h / 6.0 * (k1.Z + 2 * k2.Z + 2 * k3.Z + k4.Z);
    l.P -= h / 6.0 * (k1.P + 2 * k2.P + 2 * k3.P + k4.P);
    if (!std::isfinite(l.S) || !std::isfinite(l.Z) || !std::isfinite(l.P))
      throw NumericalError("non-finite costate at t = " + std::to_string(tr.t[i]));
    c.lambda_S[i] = l.S;
    c.lambda_Z[i] = l.Z;
    c.lambda_P[i] = l.P;
  }
  c.slope_clamped = clamped;
  c.phi_P.resize(n);
  c.phi_Z.resize(n);
  c.phi_h.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& x = tr.states[i];
    const double b = effective_beta(model, x);
    c.phi_P[i] = (c.lambda_P[i] - c.lambda_S[i]) * b * x.G * x.S;
    c.phi_Z[i] = (c.lambda_Z[i] - c.lambda_S[i]) * b * x.G * x.S;
    c.phi_h[i] = model.variant == Variant::halting ? (c.lambda_P[i] - c.lambda_Z[i]) * model.pi * b * x.G * x.Z : 0.0;
  }
  return c;
}

struct SwitchingDerivatives {
  double phi_P = 0.0;
  double phi_Z = 0.0;
  double phi_h = 0.0;
};

/// Closed-form time derivatives of the switching functions at grid point i.
/// One expression covers all variants: the beta' terms vanish unless the
/// defense is adaptive, the pi terms unless halting is available.
inline SwitchingDerivatives switching_derivatives(const ModelSpec& model, const Trajectory& tr,
                                                  const CostateTrajectory& c, std::size_t i) {
  const auto& x = tr.states[i];
  const auto& u = tr.controls[i];
  const auto k = detail::local_terms(model, x, nullptr);
  const double pP = c.phi_P[i];
  const double pZ = c.phi_Z[i];
  const double spread = x.G * u.u_Z + model.gamma * x.Z;
  SwitchingDerivatives d;
  d.phi_P = -k.b * x.G * x.S * k.fp + k.b * spread * (pZ - pP) + k.db * x.S * pP * spread;
  d.phi_Z = k.b * x.G * x.S * (k.gp - k.fp) - model.gamma * k.b * x.S * pZ +
            k.b * x.G * (u.u_P - k.halt * u.u_h) * (pP - pZ) - k.db * x.S * x.G * u.u_P * pP;
  if (model.variant == Variant::halting)
    d.phi_h = -k.halt * k.b * x.G * x.Z * k.gp + k.halt * k.b * x.G * u.u_Z * (pP - pZ) +
              k.halt * model.gamma * k.b * x.Z * pP;
  return d;
}

struct ResidualReport {
  double phi_P = 0.0;  // max |numeric - closed form| for phi_P'
  double phi_Z = 0.0;
  double phi_h = 0.0;  // halting only
  double phi_h_identity = 0.0;  // max |phi_h - pi (Z/S)(phi_P - phi_Z)|
  std::size_t points = 0;
  double initial_layer = 0.0;  // [0, initial_layer) excluded from derivative checks

  double max() const { return std::max({phi_P, phi_Z, phi_h}); }
};

/// Width of the start-up interval excluded from derivative-based checks:
/// when Z+P starts at zero and f has an infinite slope there, f'(Z+P(t))
/// behaves like t^(p-1) and finite differences do not converge near t = 0.
inline double singular_layer(const ModelSpec& model) {
  const bool singular = model.damage.f_kind == EfficacyKind::power && model.damage.p < 1.0 &&
                        model.init.Z + model.init.P < tolerance::derivative_floor;
  return singular ? model.T / 50.0 : 0.0;
}

/// Central differences of the stored switching functions (segment interiors
/// only) against their closed-form derivatives.
inline ResidualReport switching_residuals(const ModelSpec& model, const Trajectory& tr, const CostateTrajectory& c) {
  if (c.size() != tr.size() || c.t != tr.t) throw InvalidArgument("costate and state grids differ");
  ResidualReport rep;
  rep.initial_layer = singular_layer(model);
  for (std::size_t s = 0; s + 1 < tr.breaks.size(); ++s) {
    for (std::size_t i = tr.breaks[s] + 1; i < tr.breaks[s + 1]; ++i) {
      if (tr.t[i - 1] < rep.initial_layer) continue;
      const double h0 = tr.t[i] - tr.t[i - 1];
      const double h1 = tr.t[i + 1] - tr.t[i];
      auto fd = [&](const std::vector<double>& y) {
        return -h1 / (h0 * (h0 + h1)) * y[i - 1] + (h1 - h0) / (h0 * h1) * y[i] + h0 / (h1 * (h0 + h1)) * y[i + 1];
      };
      const auto d = switching_derivatives(model, tr, c, i);
      rep.phi_P = std::max(rep.phi_P, std::abs(fd(c.phi_P) - d.phi_P));
      rep.phi_Z = std::max(rep.phi_Z, std::abs(fd(c.phi_Z) - d.phi_Z));
      if (model.variant == Variant::halting) rep.phi_h = std::max(rep.phi_h, std::abs(fd(c.phi_h) - d.phi_h));
      ++rep.points;
    }
  }
  if (model.variant == Variant::halting) {
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const auto& x = tr.states[i];
      if (x.S <= 1e-9) continue;
      const double expected = model.pi * (x.Z / x.S) * (c.phi_P[i] - c.phi_Z[i]);
      rep.phi_h_identity = std::max(rep.phi_h_identity, std::abs(c.phi_h[i] - expected));
    }
  }
  return rep;
}

/// H along the trajectory (lambda_0 = 1).
inline std::vector<double> hamiltonian(const ModelSpec& model, const Trajectory& tr, const CostateTrajectory& c) {
  std::vector<double> H(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto& x = tr.states[i];
    const auto& u = tr.controls[i];
    const double b = effective_beta(model, x);
    H[i] = c.lambda_0 * (model.damage.efficacy(x.Z + x.P) - model.damage.visibility(x.Z)) + c.phi_P[i] * u.u_P +
           c.phi_Z[i] * u.u_Z + c.phi_h[i] * u.u_h + (c.lambda_Z[i] - c.lambda_S[i]) * model.gamma * b * x.Z * x.S;
  }
  return H;
}

enum class PmpCase { none, idle, passive_only, zombie_only, full_activity, halt_on, halt_off };

inline std::string_view to_string(PmpCase c) {
  switch (c) {
    case PmpCase::none: return "none";
    case PmpCase::idle: return "phi_P,phi_Z < 0 requires u = (0,0)";
    case PmpCase::passive_only: return "phi_P > max(phi_Z,0) requires (u_Z,u_P) = (0,1)";
    case PmpCase::zombie_only: return "phi_Z > max(phi_P,0) requires (u_Z,u_P) = (1,0)";
    case PmpCase::full_activity: return "max(phi_P,phi_Z) > 0 requires u_Z + u_P = 1";
    case PmpCase::halt_on: return "phi_h > 0 requires u_h = 1";
    case PmpCase::halt_off: return "phi_h < 0 requires u_h = 0";
  }
  return "?";
}

struct PmpVerdict {
  bool pass = true;
  double worst_violation = 0.0;  // switching-function margin at the worst violating point
  double worst_time = 0.0;
  PmpCase failed_case = PmpCase::none;
  std::size_t points_checked = 0;
  std::size_t singular_points = 0;  // neither strict condition applied
  double hamiltonian_drift = 0.0;   // max H - min H over checked points
  double phi_h_identity = 0.0;
  bool slope_clamped = false;
  double tol = 0.0;
};

/// Runs the forward and backward passes and checks the Hamiltonian-maximizing
/// control cases pointwise, skipping points within two grid steps of any
/// segment boundary (including 0 and T).
inline PmpVerdict verify_pmp(const ModelSpec& model, const ControlPolicy& policy, double tol, double step) {
  if (!(tol > 0.0)) throw InvalidArgument("verification tolerance must be > 0");
  const Trajectory tr = integrate_forward(model, policy, step);
  const CostateTrajectory c = integrate_costates_backward(model, tr);
  const auto H = hamiltonian(model, tr, c);

  PmpVerdict v;
  v.tol = tol;
  v.slope_clamped = c.slope_clamped;
  const double band = 2.0 * step * (1.0 + 1e-9);
  constexpr double u_eps = 1e-9;
  double h_min = std::numeric_limits<double>::infinity();
  double h_max = -h_min;
  std::size_t b = 0;
  auto record = [&](PmpCase which, double margin, double t) {
    if (v.pass || margin > v.worst_violation) {
      v.worst_violation = margin;
      v.worst_time = t;
      v.failed_case = which;
    }
    v.pass = false;
  };
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.t[i];
    while (b + 1 < tr.breaks.size() && tr.t[tr.breaks[b + 1]] <= t) ++b;
    const double near_prev = t - tr.t[tr.breaks[b]];
    const double near_next = b + 1 < tr.breaks.size() ? tr.t[tr.breaks[b + 1]] - t : near_prev;
    if (std::min(near_prev, near_next) <= band) continue;
    ++v.points_checked;
    h_min = std::min(h_min, H[i]);
    h_max = std::max(h_max, H[i]);

    const auto& u = tr.controls[i];
    const double pP = c.phi_P[i];
    const double pZ = c.phi_Z[i];
    bool strict = false;
    if (pP > std::max(pZ, 0.0) + tol) {
      strict = true;
      if (std::abs(u.u_P - 1.0) > u_eps || u.u_Z > u_eps) record(PmpCase::passive_only, pP - std::max(pZ, 0.0), t);
    } else if (pZ > std::max(pP, 0.0) + tol) {
      strict = true;
      if (std::abs(u.u_Z - 1.0) > u_eps || u.u_P > u_eps) record(PmpCase::zombie_only, pZ - std::max(pP, 0.0), t);
    } else if (pP < -tol && pZ < -tol) {
      strict = true;
      if (u.u_P > u_eps || u.u_Z > u_eps) record(PmpCase::idle, -std::max(pP, pZ), t);
    }
    if (std::max(pP, pZ) > tol) {
      strict = true;
      if (std::abs(u.u_P + u.u_Z - 1.0) > u_eps) record(PmpCase::full_activity, std::max(pP, pZ), t);
    }
    if (model.variant == Variant::halting) {
      if (c.phi_h[i] > tol && std::abs(u.u_h - 1.0) > u_eps) record(PmpCase::halt_on, c.phi_h[i], t);
      if (c.phi_h[i] < -tol && u.u_h > u_eps) record(PmpCase::halt_off, -c.phi_h[i], t);
    }
    if (!strict) ++v.singular_points;
  }
  v.hamiltonian_drift = v.points_checked ? h_max - h_min : 0.0;
  if (model.variant == Variant::halting) v.phi_h_identity = switching_residuals(model, tr, c).phi_h_identity;
  return v;
}

inline PmpVerdict verify_pmp(const ModelSpec& model, const ControlPolicy& policy, double tol) {
  return verify_pmp(model, policy, tol, default_step(model));
}

}  // namespace sgzp
