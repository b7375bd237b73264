#pragma once

// Finite-population SGZP process (exact event simulation) and the
// perturbation studies built on it.
//
// Each ordered pair of nodes meets at rate beta/N (G-S and G-Z pairs) or
// gamma*beta/N (Z-S pairs), so fractions follow the mean-field equations as
// N grows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sgzp/model.hpp"
#include "sgzp/ode.hpp"

namespace sgzp {

enum class PerturbationKind { none, sync_error, estimation_error };
enum class EstimationNoise { multiplicative, additive };

inline std::string_view to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::none: return "none";
    case PerturbationKind::sync_error: return "sync_error";
    case PerturbationKind::estimation_error: return "estimation_error";
  }
  return "?";
}

inline PerturbationKind perturbation_from_string(std::string_view s) {
  if (s == "none") return PerturbationKind::none;
  if (s == "sync_error") return PerturbationKind::sync_error;
  if (s == "estimation_error") return PerturbationKind::estimation_error;
  throw InvalidArgument("unknown perturbation kind '" + std::string(s) + "'");
}

inline std::string_view to_string(EstimationNoise n) {
  return n == EstimationNoise::multiplicative ? "multiplicative" : "additive";
}

inline EstimationNoise estimation_noise_from_string(std::string_view s) {
  if (s == "multiplicative") return EstimationNoise::multiplicative;
  if (s == "additive") return EstimationNoise::additive;
  throw InvalidArgument("unknown estimation noise '" + std::string(s) + "'");
}

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::none;
  double sync_range = 0.0;        // delta, as a fraction of t*
  double estimation_range = 0.0;  // e: eta ~ U[-e, e]
  EstimationNoise noise = EstimationNoise::multiplicative;

  void validate() const {
    if (!(sync_range >= 0.0) || !(estimation_range >= 0.0)) throw InvalidArgument("perturbation ranges must be >= 0");
  }
};

/// Deterministic random stream: mt19937_64 with explicit bit-level
/// conversions, so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
  std::uint64_t index(std::uint64_t n) { return std::min<std::uint64_t>(static_cast<std::uint64_t>(uniform() * n), n - 1); }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent sub-stream seed for item (a, b) of a study seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(a)) + b);
}

/// Zero-mean estimation error drawn uniformly from [-e, e].
inline double draw_estimation_error(Rng& rng, double e) { return e == 0.0 ? 0.0 : rng.uniform(-e, e); }

/// Defender's estimate of the zombie fraction, clamped to [0, 1].
inline double perceived_zombies(double z, double eta, EstimationNoise noise) {
  const double zh = noise == EstimationNoise::multiplicative ? z * (1.0 + eta) : z + eta;
  return std::clamp(zh, 0.0, 1.0);
}

struct Counts {
  std::int64_t S = 0;
  std::int64_t G = 0;
  std::int64_t Z = 0;
  std::int64_t P = 0;

  std::int64_t total() const { return S + G + Z + P; }
  bool operator==(const Counts&) const = default;
};

struct Population {
  std::int64_t N = 0;
  Counts counts;
  double clock = 0.0;
  std::uint64_t rng_seed = 0;
};

/// Rounded initial counts with the remainder assigned to S.
inline Counts initial_counts(const EpidemicState& x, std::int64_t N) {
  if (N < 2) throw InvalidArgument("population needs N >= 2");
  Counts c;
  const double n = static_cast<double>(N);
  c.G = std::llround(x.G * n);
  c.Z = std::llround(x.Z * n);
  c.P = std::llround(x.P * n);
  c.S = N - c.G - c.Z - c.P;
  if (c.G < 1) throw InvalidArgument("initial germinator fraction rounds to zero nodes at N = " + std::to_string(N));
  if (c.S < 0) throw InvalidArgument("rounded initial counts exceed N");
  return c;
}

struct SimulationResult {
  std::int64_t N = 0;
  std::uint64_t seed = 0;
  std::vector<double> t;       // state-change times, starting with 0
  std::vector<Counts> counts;  // counts after each change
  double J = 0.0;
  std::size_t contacts = 0;  // all simulated contacts, including ones with no effect

  Population final_population() const { return {N, counts.back(), t.back(), seed}; }

  /// Fractions in force at time `time` (the path is right-continuous).
  EpidemicState fractions_at(double time) const {
    const auto it = std::upper_bound(t.begin(), t.end(), time);
    const auto& c = counts[static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - t.begin() - 1))];
    const double n = static_cast<double>(N);
    return {static_cast<double>(c.S) / n, static_cast<double>(c.G) / n, static_cast<double>(c.Z) / n,
            static_cast<double>(c.P) / n};
  }
};

/// Exact event simulation on [0, T]. Contact rates depend only on the
/// counts (and, for the adaptive defense, on the perceived zombie fraction),
/// so waiting times are exponential between events; the attacker's control
/// decides the outcome of each contact at the moment it happens.
inline SimulationResult simulate_population(const ModelSpec& model, const ControlPolicy& policy, std::int64_t N,
                                            const PerturbationSpec& perturb, std::uint64_t seed) {
  model.validate();
  perturb.validate();
  if (perturb.kind == PerturbationKind::estimation_error && model.variant != Variant::adaptive)
    throw InvalidArgument("estimation error applies only to the adaptive defense");
  if (perturb.kind == PerturbationKind::sync_error && policy.kind() != ControlPolicy::Kind::threshold)
    throw InvalidArgument("synchronization error needs a threshold policy");

  const auto segs = policy.segments(model);
  const bool halting = model.variant == Variant::halting;
  Rng rng(seed);
  SimulationResult out;
  out.N = N;
  out.seed = seed;
  Counts c = initial_counts(model.init, N);
  out.t.push_back(0.0);
  out.counts.push_back(c);

  // Per-germinator switch times under synchronization error.
  std::vector<double> switch_at;
  if (perturb.kind == PerturbationKind::sync_error) {
    const double ts = policy.t_star();
    const double d = perturb.sync_range * ts;
    switch_at.resize(static_cast<std::size_t>(c.G));
    for (auto& s : switch_at) s = std::clamp(d > 0.0 ? rng.uniform(ts - d, ts + d) : ts, 0.0, model.T);
  }
  const ControlVector late{0.0, 1.0, halting ? 1.0 : 0.0};
  std::size_t seg = 0;
  // Control of the germinator taking part in a contact at time t.
  auto attacker = [&](double t) {
    if (!switch_at.empty()) return t < switch_at[rng.index(switch_at.size())] ? zombie_control : late;
    while (seg + 1 < segs.size() && t >= segs[seg].t1) ++seg;
    return segs[seg].u;
  };

  const double n = static_cast<double>(N);
  auto damage_rate_of = [&](const Counts& k) {
    return model.damage.efficacy(static_cast<double>(k.Z + k.P) / n) - model.damage.visibility(static_cast<double>(k.Z) / n);
  };
  auto contact_beta = [&](const Counts& k) {
    if (model.variant != Variant::adaptive) return model.beta.beta;
    const double z = static_cast<double>(k.Z) / n;
    if (perturb.kind != PerturbationKind::estimation_error) return beta_of(model.beta, z);
    const double eta = draw_estimation_error(rng, perturb.estimation_range);
    return beta_of(model.beta, perceived_zombies(z, eta, perturb.noise));
  };

  double t = 0.0;
  double b = contact_beta(c);
  while (true) {
    const double gs = b * static_cast<double>(c.G) * static_cast<double>(c.S) / n;
    const double zs = model.gamma * b * static_cast<double>(c.Z) * static_cast<double>(c.S) / n;
    const double gz = halting ? b * static_cast<double>(c.G) * static_cast<double>(c.Z) / n : 0.0;
    const double total = gs + zs + gz;
    const double wait = total > 0.0 ? rng.exponential(total) : std::numeric_limits<double>::infinity();
    if (!(t + wait < model.T)) {
      out.J += damage_rate_of(c) * (model.T - t);
      break;
    }
    out.J += damage_rate_of(c) * wait;
    t += wait;
    ++out.contacts;

    const double pick = rng.uniform() * total;
    Counts next = c;
    if (pick < gs) {
      const ControlVector u = attacker(t);
      const double r = rng.uniform();
      if (r < u.u_Z) {
        --next.S;
        ++next.Z;
      } else if (r < u.u_Z + u.u_P) {
        --next.S;
        ++next.P;
      }
    } else if (pick < gs + zs) {
      --next.S;
      ++next.Z;
    } else {
      if (rng.uniform() < model.pi * attacker(t).u_h) {
        --next.Z;
        ++next.P;
      }
    }
    if (!(next == c)) {
      c = next;
      out.t.push_back(t);
      out.counts.push_back(c);
    }
    b = contact_beta(c);
  }
  return out;
}

/// Welford running mean and variance.
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
  double standard_error() const { return n_ > 0 ? stddev() / std::sqrt(static_cast<double>(n_)) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

namespace detail {

/// Contact-rate provider for the mean-field integrator with the defender's
/// estimate redrawn once per step.
struct NoisyBeta {
  const ModelSpec* model;
  Rng* rng;
  double range;
  EstimationNoise noise;
  double eta = 0.0;

  void begin_step() { eta = draw_estimation_error(*rng, range); }
  double operator()(double z) const {
    return beta_of(model->beta, perceived_zombies(std::clamp(z, 0.0, 1.0), eta, noise));
  }
};

}  // namespace detail

/// Mean-field run with a noisy defender estimate; the state itself follows
/// the true fractions.
inline Trajectory integrate_with_estimation_error(const ModelSpec& model, const ControlPolicy& policy, double step,
                                                  double range, EstimationNoise noise, std::uint64_t seed) {
  if (model.variant != Variant::adaptive) throw InvalidArgument("estimation error applies only to the adaptive defense");
  if (!(range >= 0.0)) throw InvalidArgument("estimation range must be >= 0");
  Rng rng(seed);
  detail::NoisyBeta beta{&model, &rng, range, noise};
  Trajectory tr = detail::integrate_with(model, policy, step, beta);
  tr.J = objective(tr, model.damage);
  return tr;
}

struct RunRecord {
  std::uint64_t seed = 0;
  double range = 0.0;
  double J = 0.0;
};

struct RobustnessRow {
  double range = 0.0;
  std::size_t runs = 0;
  double mean_J = 0.0;
  double sd_J = 0.0;
  double relative_loss = 0.0;       // (J_ref - mean_J) / J_ref
  double mean_abs_deviation = 0.0;  // mean of |J - J_ref| / J_ref
};

struct RobustnessReport {
  double J_reference = 0.0;  // mean-field J of the unperturbed policy
  std::vector<RobustnessRow> rows;
  std::vector<RunRecord> records;
};

struct RobustnessOptions {
  std::optional<std::int64_t> N;  // empty: mean-field (estimation error only)
  double step = 0.0;              // mean-field step; 0 selects default_step(model)
  EstimationNoise noise = EstimationNoise::multiplicative;
};

/// Mean, spread and relative loss of J per perturbation range. Estimation
/// error runs in the mean-field integrator (the defender is adaptive);
/// synchronization error runs in the finite-population simulator.
inline RobustnessReport robustness_sweep(const ModelSpec& model, const ControlPolicy& policy, PerturbationKind kind,
                                         const std::vector<double>& ranges, std::size_t runs,
                                         const RobustnessOptions& opt, std::uint64_t seed) {
  model.validate();
  if (runs == 0) throw InvalidArgument("robustness sweep needs at least one run");
  for (double r : ranges)
    if (!(r >= 0.0)) throw InvalidArgument("perturbation ranges must be >= 0");
  const double h = opt.step > 0.0 ? opt.step : default_step(model);
  switch (kind) {
    case PerturbationKind::estimation_error:
      if (model.variant != Variant::adaptive)
        throw InvalidArgument("estimation error applies only to the adaptive defense");
      if (opt.N) throw InvalidArgument("estimation-error sweeps run in the mean-field model");
      break;
    case PerturbationKind::sync_error:
      if (!opt.N) throw InvalidArgument("synchronization-error sweeps need a finite N");
      if (policy.kind() != ControlPolicy::Kind::threshold)
        throw InvalidArgument("synchronization error needs a threshold policy");
      break;
    case PerturbationKind::none: throw InvalidArgument("robustness sweep needs a perturbation kind");
  }

  RobustnessReport rep;
  rep.J_reference = evaluate(model, policy, h);
  for (std::size_t ri = 0; ri < ranges.size(); ++ri) {
    RunningStats stats, dev;
    for (std::size_t k = 0; k < runs; ++k) {
      const std::uint64_t s = derive_seed(seed, ri, k);
      double J = 0.0;
      if (kind == PerturbationKind::estimation_error) {
        J = integrate_with_estimation_error(model, policy, h, ranges[ri], opt.noise, s).J;
      } else {
        PerturbationSpec p;
        p.kind = kind;
        p.sync_range = ranges[ri];
        J = simulate_population(model, policy, *opt.N, p, s).J;
      }
      stats.add(J);
      dev.add(std::abs(J - rep.J_reference) / rep.J_reference);
      rep.records.push_back({s, ranges[ri], J});
    }
    RobustnessRow row;
    row.range = ranges[ri];
    row.runs = runs;
    row.mean_J = stats.mean();
    row.sd_J = stats.stddev();
    row.relative_loss = (rep.J_reference - row.mean_J) / rep.J_reference;
    row.mean_abs_deviation = dev.mean();
    rep.rows.push_back(row);
  }
  return rep;
}

/// Largest deviation, over the sample times, between a simulated path's
/// fractions and a mean-field trajectory.
inline double sup_distance(const SimulationResult& sim, const Trajectory& ode) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ode.size(); ++i) {
    const auto e = sim.fractions_at(ode.t[i]);
    const auto& x = ode.states[i];
    worst = std::max({worst, std::abs(e.S - x.S), std::abs(e.Z - x.Z), std::abs(e.P - x.P)});
  }
  return worst;
}

}  // namespace sgzp
