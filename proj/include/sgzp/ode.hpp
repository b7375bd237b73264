#pragma once

// Forward integration of the mean-field dynamics under a control policy and
// quadrature of the attacker's objective. Steps are classical RK4 with the
// control held fixed on each policy segment; segment boundaries are always
// grid points, so the right-hand side is smooth inside every step.

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgzp/model.hpp"

namespace sgzp {

struct Segment {
  double t0 = 0.0;
  double t1 = 0.0;
  ControlVector u;
};

enum class Heuristic { always_zombie, always_passive, static_mix };

inline std::string_view to_string(Heuristic h) {
  switch (h) {
    case Heuristic::always_zombie: return "always_zombie";
    case Heuristic::always_passive: return "always_passive";
    case Heuristic::static_mix: return "static_mix";
  }
  return "?";
}

inline Heuristic heuristic_from_string(std::string_view s) {
  if (s == "always_zombie") return Heuristic::always_zombie;
  if (s == "always_passive") return Heuristic::always_passive;
  if (s == "static_mix") return Heuristic::static_mix;
  throw InvalidArgument("unknown heuristic '" + std::string(s) + "'");
}

/// Attacker policy: a one-switch threshold at t*, an explicit piecewise-
/// constant schedule, or one of the fixed heuristics.
class ControlPolicy {
 public:
  enum class Kind { threshold, piecewise, heuristic };

  static ControlPolicy threshold(double t_star) {
    ControlPolicy p;
    p.kind_ = Kind::threshold;
    p.t_star_ = t_star;
    return p;
  }

  /// breakpoints: 0 = tau_0 < ... < tau_K = T; controls[k] applies on [tau_k, tau_{k+1}).
  static ControlPolicy piecewise(std::vector<double> breakpoints, std::vector<ControlVector> controls) {
    ControlPolicy p;
    p.kind_ = Kind::piecewise;
    p.breakpoints_ = std::move(breakpoints);
    p.controls_ = std::move(controls);
    return p;
  }

  static ControlPolicy always_zombie() { return heuristic_policy(Heuristic::always_zombie); }
  static ControlPolicy always_passive() { return heuristic_policy(Heuristic::always_passive); }

  /// u_Z = rho, u_P = 1 - rho; or u_P = rho_p when an independent mix is given.
  static ControlPolicy static_mix(double rho, std::optional<double> rho_p = std::nullopt) {
    ControlPolicy p = heuristic_policy(Heuristic::static_mix);
    p.rho_ = rho;
    p.rho_p_ = rho_p;
    return p;
  }

  Kind kind() const { return kind_; }
  double t_star() const { return t_star_; }
  Heuristic heuristic() const { return heuristic_; }
  double rho() const { return rho_; }
  std::optional<double> rho_p() const { return rho_p_; }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<ControlVector>& controls() const { return controls_; }

  /// Constant-control segments covering [0, T]; every control is admissible
  /// for the model's variant.
  std::vector<Segment> segments(const ModelSpec& model) const {
    const double T = model.T;
    const bool halting = model.variant == Variant::halting;
    std::vector<Segment> out;
    switch (kind_) {
      case Kind::threshold: {
        if (!(t_star_ >= 0.0 && t_star_ <= T)) throw InvalidArgument("threshold t* must lie in [0, T]");
        const ControlVector late{0.0, 1.0, halting ? 1.0 : 0.0};
        if (t_star_ > 0.0) out.push_back({0.0, t_star_, zombie_control});
        if (t_star_ < T) out.push_back({t_star_, T, late});
        break;
      }
      case Kind::heuristic: out.push_back({0.0, T, heuristic_control()}); break;
      case Kind::piecewise: {
        if (breakpoints_.size() < 2 || controls_.size() + 1 != breakpoints_.size())
          throw InvalidArgument("piecewise policy needs K+1 breakpoints for K controls");
        if (breakpoints_.front() != 0.0) throw InvalidArgument("piecewise policy must start at 0");
        if (std::abs(breakpoints_.back() - T) > 1e-12 * std::max(1.0, T))
          throw InvalidArgument("piecewise policy must end at T");
        for (std::size_t k = 0; k < controls_.size(); ++k) {
          const double a = breakpoints_[k];
          const double b = k + 1 == controls_.size() ? T : breakpoints_[k + 1];
          if (!(b > a)) throw InvalidArgument("piecewise breakpoints must be strictly increasing");
          out.push_back({a, b, controls_[k]});
        }
        break;
      }
    }
    for (auto& s : out) s.u = admissible_control(s.u, model.variant);
    return out;
  }

  /// Control in force at time t (right-continuous; the value at T is the last segment's).
  ControlVector at(double t, const ModelSpec& model) const {
    const auto segs = segments(model);
    for (const auto& s : segs)
      if (t < s.t1) return s.u;
    return segs.back().u;
  }

  bool operator==(const ControlPolicy&) const = default;

 private:
  static ControlPolicy heuristic_policy(Heuristic h) {
    ControlPolicy p;
    p.kind_ = Kind::heuristic;
    p.heuristic_ = h;
    return p;
  }

  ControlVector heuristic_control() const {
    switch (heuristic_) {
      case Heuristic::always_zombie: return zombie_control;
      case Heuristic::always_passive: return passive_control;
      case Heuristic::static_mix: return {rho_, rho_p_ ? *rho_p_ : 1.0 - rho_, 0.0};
    }
    return {};
  }

  Kind kind_ = Kind::threshold;
  double t_star_ = 0.0;
  Heuristic heuristic_ = Heuristic::always_zombie;
  double rho_ = 1.0;
  std::optional<double> rho_p_;
  std::vector<double> breakpoints_;
  std::vector<ControlVector> controls_;
};

/// Sampled forward solution. controls[i] is the control applied on the step
/// that starts at t[i] (the last point repeats the final segment's control).
struct Trajectory {
  std::vector<double> t;
  std::vector<EpidemicState> states;
  std::vector<ControlVector> controls;
  std::vector<double> beta_eff;
  std::vector<double> damage;
  /// Grid indices of segment boundaries: front() == 0, back() == size() - 1.
  std::vector<std::size_t> breaks;
  double step = 0.0;
  double J = 0.0;

  std::size_t size() const { return t.size(); }
};

namespace detail {

/// Contact rate from the model's own defense function.
struct ModelBeta {
  const ModelSpec* model;
  void begin_step() {}
  double operator()(double z) const {
    return model->variant == Variant::adaptive ? beta_of(model->beta, std::clamp(z, 0.0, 1.0)) : model->beta.beta;
  }
};

template <class Beta>
StateRate stage_rate(const EpidemicState& x, const ControlVector& u, const ModelSpec& m, Beta& beta) {
  return rhs_with_beta(x, u, m, beta(x.Z));
}

inline EpidemicState advance(const EpidemicState& x, const StateRate& r, double h) {
  EpidemicState y = x;
  y.Z = x.Z + h * r.dZ;
  y.P = x.P + h * r.dP;
  y.S = x.S - h * (r.dZ + r.dP);
  return y;
}

/// One classical RK4 step. S is updated as S - (dZ + dP) so the simplex sum
/// moves only by rounding.
template <class Beta>
EpidemicState rk4_step(const EpidemicState& x, const ControlVector& u, const ModelSpec& m, double h, Beta& beta) {
  beta.begin_step();
  const StateRate k1 = stage_rate(x, u, m, beta);
  const StateRate k2 = stage_rate(advance(x, k1, h / 2), u, m, beta);
  const StateRate k3 = stage_rate(advance(x, k2, h / 2), u, m, beta);
  const StateRate k4 = stage_rate(advance(x, k3, h), u, m, beta);
  const double dZ = h / 6.0 * (k1.dZ + 2.0 * k2.dZ + 2.0 * k3.dZ + k4.dZ);
  const double dP = h / 6.0 * (k1.dP + 2.0 * k2.dP + 2.0 * k3.dP + k4.dP);
  EpidemicState y = x;
  y.Z = x.Z + dZ;
  y.P = x.P + dP;
  y.S = x.S - (dZ + dP);
  return y;
}

/// Clamps round-off negatives and rejects states that left the simplex.
inline EpidemicState accept_state(EpidemicState y, double t) {
  if (!std::isfinite(y.S) || !std::isfinite(y.Z) || !std::isfinite(y.P))
    throw NumericalError("non-finite state at t = " + std::to_string(t));
  constexpr double eps = tolerance::control_clamp;
  if (y.Z < 0.0 && y.Z >= -eps) y.Z = 0.0;
  if (y.P < 0.0 && y.P >= -eps) y.P = 0.0;
  if (!(y.S > 0.0) || y.Z < 0.0 || y.P < 0.0 || std::abs(y.total() - 1.0) > tolerance::simplex_loose)
    throw NumericalError("state left the simplex at t = " + std::to_string(t) + " (step too large?)");
  return y;
}

/// Number of steps for a segment of length L: full steps of h with the
/// last one shortened to land on the boundary.
inline std::size_t step_count(double L, double h) {
  const double n = std::ceil(L / h - 1e-9);
  return static_cast<std::size_t>(std::max(1.0, n));
}

/// Integrates one segment, calling sink(t, state) for every new grid point.
template <class Beta, class Sink>
EpidemicState run_segment(const ModelSpec& m, EpidemicState x, const Segment& seg, double h, Beta& beta, Sink&& sink) {
  const std::size_t n = step_count(seg.t1 - seg.t0, h);
  for (std::size_t k = 0; k < n; ++k) {
    const double ta = seg.t0 + static_cast<double>(k) * h;
    const double tb = k + 1 == n ? seg.t1 : seg.t0 + static_cast<double>(k + 1) * h;
    x = accept_state(rk4_step(x, seg.u, m, tb - ta, beta), tb);
    sink(tb, x);
  }
  return x;
}

/// Exact integral over [u, v] of the quadratic interpolating (t_i, y_i), i = 0..2.
inline double quadratic_integral(const double (&t)[3], const double (&y)[3], double u, double v) {
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3;
    const int k = (i + 2) % 3;
    const double a = t[j] - t[i];
    const double b = t[k] - t[i];
    // integrate (s - a)(s - b) over s = t - t_i
    auto prim = [&](double s) { return s * s * s / 3.0 - (a + b) * s * s / 2.0 + a * b * s; };
    const double w = (prim(v - t[i]) - prim(u - t[i])) / (a * b);
    total += w * y[i];
  }
  return total;
}

/// Integral of the damage rate over the first one or two intervals when the
/// efficacy argument starts at zero and f has an infinite slope there. Z and
/// Z + P are replaced by their interpolating polynomials and the substitution
/// t = t0 + L s^2 removes the square-root-type endpoint singularity.
inline double singular_start_integral(std::span<const double> t, std::span<const EpidemicState> x,
                                      const DamageSpec& d) {
  const std::size_t n = t.size();  // 2 or 3 points
  const double t0 = t[0];
  const double L = t[n - 1] - t0;
  auto interp = [&](auto field, double tau) {
    if (n == 2) return field(x[0]) + (field(x[1]) - field(x[0])) * tau / (t[1] - t0);
    double acc = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      double w = 1.0;
      for (std::size_t j = 0; j < 3; ++j)
        if (j != i) w *= (tau - (t[j] - t0)) / (t[i] - t[j]);
      acc += w * field(x[i]);
    }
    return acc;
  };
  auto infected = [](const EpidemicState& s) { return s.Z + s.P; };
  auto zombies = [](const EpidemicState& s) { return s.Z; };
  auto integrand = [&](double s) {
    const double tau = L * s * s;
    const double r = d.efficacy(std::max(0.0, interp(infected, tau))) - d.visibility(std::max(0.0, interp(zombies, tau)));
    return r * 2.0 * L * s;
  };
  return boost::math::quadrature::gauss<double, 20>::integrate(integrand, 0.0, 1.0);
}

/// Quadrature of the damage-rate samples on one constant-control segment:
/// Simpson on consecutive interval pairs (non-uniform weights), a three-point
/// quadratic for a trailing odd interval, and the trapezoid only when the
/// segment is a single interval.
inline double segment_integral(std::span<const double> t, std::span<const EpidemicState> x,
                               std::span<const double> rate, const DamageSpec& d) {
  const std::size_t m = t.size();
  if (m < 2) return 0.0;
  std::size_t i = 0;
  double total = 0.0;
  const bool singular = d.f_kind == EfficacyKind::power && d.p < 1.0 &&
                        x[0].Z + x[0].P < tolerance::derivative_floor;
  if (singular) {
    const std::size_t len = std::min<std::size_t>(3, m);
    total += singular_start_integral(t.subspan(0, len), x.subspan(0, len), d);
    i = len - 1;
  }
  for (; i + 2 < m; i += 2) {
    const double tt[3] = {t[i], t[i + 1], t[i + 2]};
    const double yy[3] = {rate[i], rate[i + 1], rate[i + 2]};
    total += quadratic_integral(tt, yy, tt[0], tt[2]);
  }
  if (i + 1 < m) {
    if (i >= 1) {
      const double tt[3] = {t[i - 1], t[i], t[i + 1]};
      const double yy[3] = {rate[i - 1], rate[i], rate[i + 1]};
      total += quadratic_integral(tt, yy, tt[1], tt[2]);
    } else {
      total += 0.5 * (t[i + 1] - t[i]) * (rate[i] + rate[i + 1]);
    }
  }
  return total;
}

template <class Beta>
Trajectory integrate_with(const ModelSpec& model, const ControlPolicy& policy, double step, Beta& beta) {
  model.validate();
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidArgument("integration step must be > 0");
  const auto segs = policy.segments(model);
  Trajectory tr;
  tr.step = step;
  EpidemicState x = model.init;
  tr.t.push_back(0.0);
  tr.states.push_back(x);
  tr.breaks.push_back(0);
  for (const auto& seg : segs) {
    tr.controls.resize(tr.t.size(), seg.u);
    x = run_segment(model, x, seg, step, beta, [&](double t, const EpidemicState& s) {
      tr.t.push_back(t);
      tr.states.push_back(s);
      tr.controls.push_back(seg.u);
    });
    tr.breaks.push_back(tr.t.size() - 1);
  }
  // controls[i] describes the step leaving t[i]; fix the boundary points.
  for (std::size_t s = 0; s + 1 < tr.breaks.size(); ++s) tr.controls[tr.breaks[s]] = segs[s].u;
  tr.controls.back() = segs.back().u;
  tr.beta_eff.reserve(tr.size());
  tr.damage.reserve(tr.size());
  for (const auto& s : tr.states) {
    tr.beta_eff.push_back(effective_beta(model, s));
    tr.damage.push_back(model.damage.efficacy(s.Z + s.P) - model.damage.visibility(s.Z));
  }
  return tr;
}

}  // namespace detail

/// Quadrature of J = int_0^T f(Z+P) - g(Z) dt over the trajectory's grid,
/// one segment at a time so control switches are never straddled.
inline double objective(const Trajectory& tr, const DamageSpec& damage) {
  std::vector<double> rate(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i)
    rate[i] = damage.efficacy(tr.states[i].Z + tr.states[i].P) - damage.visibility(tr.states[i].Z);
  double J = 0.0;
  const std::span<const double> t(tr.t);
  const std::span<const EpidemicState> x(tr.states);
  const std::span<const double> r(rate);
  for (std::size_t s = 0; s + 1 < tr.breaks.size(); ++s) {
    const std::size_t a = tr.breaks[s];
    const std::size_t len = tr.breaks[s + 1] - a + 1;
    J += detail::segment_integral(t.subspan(a, len), x.subspan(a, len), r.subspan(a, len), damage);
  }
  return J;
}

inline double default_step(const ModelSpec& model) { return model.T / 2000.0; }

/// RK4 solution of the state equations under `policy`, with J filled in.
inline Trajectory integrate_forward(const ModelSpec& model, const ControlPolicy& policy, double step) {
  detail::ModelBeta beta{&model};
  Trajectory tr = detail::integrate_with(model, policy, step, beta);
  tr.J = objective(tr, model.damage);
  return tr;
}

inline Trajectory integrate_forward(const ModelSpec& model, const ControlPolicy& policy) {
  return integrate_forward(model, policy, default_step(model));
}

/// Convenience: J under `policy`.
inline double evaluate(const ModelSpec& model, const ControlPolicy& policy, double step) {
  return integrate_forward(model, policy, step).J;
}

struct ConvergenceReport {
  std::optional<double> order;  // empty when both differences vanish ("exact")
  double diff_coarse = 0.0;     // |x_h - x_{h/2}|_inf at T
  double diff_fine = 0.0;       // |x_{h/2} - x_{h/4}|_inf at T
  bool exact() const { return !order.has_value(); }
};

/// Observed order from terminal states at steps h, h/2, h/4.
inline ConvergenceReport convergence_order(const ModelSpec& model, const ControlPolicy& policy, double base_step) {
  auto terminal = [&](double h) { return integrate_forward(model, policy, h).states.back(); };
  const EpidemicState a = terminal(base_step);
  const EpidemicState b = terminal(base_step / 2);
  const EpidemicState c = terminal(base_step / 4);
  auto dist = [](const EpidemicState& u, const EpidemicState& v) {
    return std::max({std::abs(u.S - v.S), std::abs(u.Z - v.Z), std::abs(u.P - v.P)});
  };
  ConvergenceReport rep;
  rep.diff_coarse = dist(a, b);
  rep.diff_fine = dist(b, c);
  if (rep.diff_coarse > 0.0 && rep.diff_fine > 0.0) rep.order = std::log2(rep.diff_coarse / rep.diff_fine);
  return rep;
}

inline ConvergenceReport convergence_order(const ModelSpec& model, const ControlPolicy& policy) {
  return convergence_order(model, policy, model.T / 64.0);
}

}  // namespace sgzp
