#pragma once

// Threshold search, heuristic baselines and an exhaustive piecewise-constant
// policy oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sgzp/model.hpp"
#include "sgzp/ode.hpp"

namespace sgzp {

struct SearchOptions {
  std::size_t coarse_points = 101;
  std::size_t refine_iters = 60;
  double tol = 1e-9;   // stop refining once the bracket is this narrow
  double step = 0.0;   // integration step; 0 selects default_step(model)
};

struct ScalarMaximum {
  double x = 0.0;
  double value = 0.0;
  double bracket = 0.0;
  std::size_t evaluations = 0;
};

namespace detail {

// Exact comparison: only genuinely equal values count as ties, so ties can't
// chain leftwards through quadrature noise.
inline bool better(double candidate, double incumbent) { return candidate > incumbent; }

}  // namespace detail

/// Uniform scan of [lo, hi] followed by golden-section refinement inside the
/// best bracketing triple. Ties go to the smaller argument; the result is the
/// best point actually evaluated.
template <class F>
ScalarMaximum maximize_scalar(F&& f, double lo, double hi, std::size_t coarse_points, std::size_t refine_iters,
                              double tol = 0.0) {
  if (coarse_points < 2) throw InvalidArgument("coarse grid needs at least two points");
  if (!(hi >= lo)) throw InvalidArgument("empty search interval");
  ScalarMaximum best;
  std::vector<double> xs(coarse_points);
  std::size_t k = 0;
  for (std::size_t i = 0; i < coarse_points; ++i) {
    xs[i] = i + 1 == coarse_points ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(coarse_points - 1);
    const double v = f(xs[i]);
    ++best.evaluations;
    if (i == 0 || detail::better(v, best.value)) {
      best.x = xs[i];
      best.value = v;
      k = i;
    }
  }
  double a = xs[k == 0 ? 0 : k - 1];
  double b = xs[std::min(k + 1, coarse_points - 1)];
  auto consider = [&](double x, double v) {
    if (detail::better(v, best.value) || (v == best.value && x < best.x)) {
      best.x = x;
      best.value = v;
    }
  };
  constexpr double r = 0.6180339887498949;
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = f(c);
  double fd = f(d);
  best.evaluations += 2;
  consider(c, fc);
  consider(d, fd);
  for (std::size_t it = 0; it < refine_iters && b - a > tol; ++it) {
    if (fc >= fd) {  // ties move left
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
      consider(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
      consider(d, fd);
    }
    ++best.evaluations;
  }
  best.bracket = b - a;
  return best;
}

struct ThresholdSolution {
  double t_star = 0.0;
  double J_star = 0.0;
  double bracket = 0.0;
  std::size_t evaluations = 0;
};

inline double resolve_step(const ModelSpec& model, double step) { return step > 0.0 ? step : default_step(model); }

/// Best switch time of the threshold family on [0, T].
inline ThresholdSolution optimal_threshold(const ModelSpec& model, const SearchOptions& opt = {}) {
  model.validate();
  if (opt.coarse_points < 8) throw InvalidArgument("coarse_points must be >= 8");
  const double h = resolve_step(model, opt.step);
  const auto m = maximize_scalar([&](double ts) { return evaluate(model, ControlPolicy::threshold(ts), h); }, 0.0,
                                 model.T, opt.coarse_points, opt.refine_iters, opt.tol);
  return {m.x, m.value, m.bracket, m.evaluations};
}

struct HeuristicResult {
  Heuristic kind = Heuristic::always_zombie;
  double J = 0.0;
  std::optional<double> rho;    // static_mix: u_Z
  std::optional<double> rho_p;  // static_mix with an independent u_P
};

/// J under a heuristic. static_mix searches rho on [0, 1] (u_P = 1 - rho)
/// with the same scan-then-golden scheme as the threshold search; with
/// `independent_mix` it scans the triangle u_Z + u_P <= 1 and polishes each
/// coordinate once.
inline HeuristicResult evaluate_heuristic(const ModelSpec& model, Heuristic heuristic, std::size_t mix_points = 21,
                                          const SearchOptions& opt = {}, bool independent_mix = false) {
  model.validate();
  const double h = resolve_step(model, opt.step);
  HeuristicResult res;
  res.kind = heuristic;
  switch (heuristic) {
    case Heuristic::always_zombie: res.J = evaluate(model, ControlPolicy::always_zombie(), h); return res;
    case Heuristic::always_passive: res.J = evaluate(model, ControlPolicy::always_passive(), h); return res;
    case Heuristic::static_mix: break;
  }
  if (mix_points < 11) throw InvalidArgument("mix_points must be >= 11");
  const auto line = maximize_scalar([&](double rho) { return evaluate(model, ControlPolicy::static_mix(rho), h); },
                                    0.0, 1.0, mix_points, opt.refine_iters, opt.tol);
  res.J = line.value;
  res.rho = line.x;
  if (!independent_mix) return res;

  // The full-activity line is part of the triangle, so start from its optimum.
  auto J2 = [&](double rz, double rp) {
    rp = std::min(rp, 1.0 - rz);
    return evaluate(model, ControlPolicy::static_mix(rz, rp), h);
  };
  double bz = line.x, bp = 1.0 - line.x, bJ = line.value;
  const double n = static_cast<double>(mix_points - 1);
  for (std::size_t i = 0; i < mix_points; ++i)
    for (std::size_t j = 0; i + j < mix_points; ++j) {
      const double rz = static_cast<double>(i) / n;
      const double rp = std::min(static_cast<double>(j) / n, 1.0 - rz);
      const double v = J2(rz, rp);
      if (detail::better(v, bJ)) {
        bz = rz;
        bp = rp;
        bJ = v;
      }
    }
  const auto pz = maximize_scalar([&](double rz) { return J2(rz, bp); }, std::max(0.0, bz - 1.0 / n),
                                  std::min(1.0, bz + 1.0 / n), 3, opt.refine_iters, opt.tol);
  if (detail::better(pz.value, bJ)) {
    bz = pz.x;
    bJ = pz.value;
  }
  const auto pp = maximize_scalar([&](double rp) { return J2(bz, rp); }, 0.0, 1.0 - bz, mix_points, opt.refine_iters,
                                  opt.tol);
  if (detail::better(pp.value, bJ)) {
    bp = pp.x;
    bJ = pp.value;
  }
  res.J = bJ;
  res.rho = bz;
  res.rho_p = std::min(bp, 1.0 - bz);
  return res;
}

struct OracleOptions {
  double step = 0.0;  // 0 selects T / 250
  std::uint64_t max_combinations = 10'000'000;
};

struct OracleSolution {
  std::size_t segments = 0;
  std::vector<double> levels;
  ControlPolicy best_policy;
  double J_best = 0.0;
  bool one_switch_bang_bang = false;
  std::uint64_t combinations = 0;  // feasible policies in the search space
  std::uint64_t evaluated = 0;     // distinct policies actually integrated
};

namespace detail {

/// Zombie prefix followed by a passive suffix (u_h = 1 there in the halting
/// variant). A segment with no zombies anywhere accepts any u_h, since u_h
/// has no effect there.
inline bool is_one_switch(const std::vector<ControlVector>& u, const std::vector<bool>& zombie_free, Variant v) {
  std::size_t k = 0;
  while (k < u.size() && u[k].u_Z == 1.0 && u[k].u_P == 0.0 && (u[k].u_h == 0.0 || zombie_free[k])) ++k;
  for (; k < u.size(); ++k) {
    if (u[k].u_Z != 0.0 || u[k].u_P != 1.0) return false;
    if (v == Variant::halting && u[k].u_h != 1.0 && !zombie_free[k]) return false;
  }
  return true;
}

}  // namespace detail

/// Exhaustive search over policies that are constant on K uniform segments
/// with each control drawn from `levels`. Prefix states are shared across the
/// depth-first enumeration, so each distinct prefix is integrated once.
inline OracleSolution brute_force_policy_search(const ModelSpec& model, std::size_t K, std::vector<double> levels,
                                                const OracleOptions& opt = {}) {
  model.validate();
  if (K == 0) throw InvalidArgument("oracle needs at least one segment");
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (levels.empty() || levels.front() != 0.0 || levels.back() != 1.0)
    throw InvalidArgument("oracle levels must include 0 and 1 and lie in [0, 1]");
  if (levels.front() < 0.0 || levels.back() > 1.0) throw InvalidArgument("oracle levels must lie in [0, 1]");

  const bool halting = model.variant == Variant::halting;
  std::vector<ControlVector> choices;
  for (double uz : levels)
    for (double up : levels) {
      if (uz + up > 1.0 + tolerance::control_clamp) continue;
      if (!halting) {
        choices.push_back({uz, up, 0.0});
        continue;
      }
      for (double uh : levels) choices.push_back({uz, up, uh});
    }
  double total = 1.0;
  for (std::size_t k = 0; k < K; ++k) total *= static_cast<double>(choices.size());
  if (total > static_cast<double>(opt.max_combinations))
    throw InvalidArgument("oracle search space has " + std::to_string(static_cast<long double>(total)) +
                          " policies, above the guard of " +
                          std::to_string(opt.max_combinations));

  OracleSolution sol;
  sol.segments = K;
  sol.levels = levels;
  sol.combinations = static_cast<std::uint64_t>(total);
  const double h = opt.step > 0.0 ? opt.step : model.T / 250.0;
  std::vector<double> bps(K + 1);
  for (std::size_t k = 0; k <= K; ++k) bps[k] = k == K ? model.T : model.T * static_cast<double>(k) / static_cast<double>(K);

  detail::ModelBeta beta{&model};
  std::vector<ControlVector> path(K);
  std::vector<bool> zfree(K);
  std::vector<ControlVector> best_path;
  std::vector<bool> best_zfree;
  bool have_best = false;
  std::vector<double> t, rate;
  std::vector<EpidemicState> xs;

  auto segment_run = [&](const EpidemicState& x0, std::size_t k, const ControlVector& u, EpidemicState& x1) {
    t.assign(1, bps[k]);
    xs.assign(1, x0);
    x1 = detail::run_segment(model, x0, Segment{bps[k], bps[k + 1], u}, h, beta, [&](double tb, const EpidemicState& s) {
      t.push_back(tb);
      xs.push_back(s);
    });
    rate.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      rate[i] = model.damage.efficacy(xs[i].Z + xs[i].P) - model.damage.visibility(xs[i].Z);
    return detail::segment_integral(t, xs, rate, model.damage);
  };

  auto dfs = [&](auto&& self, std::size_t k, const EpidemicState& x, double J) -> void {
    if (k == K) {
      ++sol.evaluated;
      if (!have_best || detail::better(J, sol.J_best)) {
        have_best = true;
        sol.J_best = J;
        best_path = path;
        best_zfree = zfree;
      }
      return;
    }
    for (const auto& u : choices) {
      // u_h acts only through G-Z contacts; with no zombies before or during
      // the segment every u_h gives the same flow, so only u_h = 0 is kept.
      const bool no_zombies = x.Z == 0.0 && u.u_Z == 0.0;
      if (halting && no_zombies && u.u_h != 0.0) continue;
      EpidemicState x1;
      const double dJ = segment_run(x, k, u, x1);
      path[k] = u;
      zfree[k] = no_zombies;
      self(self, k + 1, x1, J + dJ);
    }
  };
  dfs(dfs, 0, model.init, 0.0);

  sol.best_policy = ControlPolicy::piecewise(bps, best_path);
  sol.one_switch_bang_bang = detail::is_one_switch(best_path, best_zfree, model.variant);
  return sol;
}

}  // namespace sgzp
