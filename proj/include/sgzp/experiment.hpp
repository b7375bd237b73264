#pragma once

// Scenario configuration (JSON), scenario execution and CSV/JSON output.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgzp/model.hpp"
#include "sgzp/ode.hpp"
#include "sgzp/optimizer.hpp"
#include "sgzp/pmp.hpp"
#include "sgzp/stochastic.hpp"

namespace sgzp {

/// Invalid or inconsistent configuration (exit status 1).
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Output could not be written (exit status 1).
class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { solve, sweep_gamma, heuristics, robust_estimation, robust_sync, verify, simulate, oracle };

namespace detail {

template <class E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E e) {
  for (const auto& [v, s] : table)
    if (v == e) return s;
  return "?";
}

template <class E, std::size_t N>
E value_of(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s, std::string_view what) {
  for (const auto& [v, name] : table)
    if (name == s) return v;
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

inline constexpr std::array<std::pair<ExperimentKind, std::string_view>, 8> experiment_names{{
    {ExperimentKind::solve, "solve"},
    {ExperimentKind::sweep_gamma, "sweep_gamma"},
    {ExperimentKind::heuristics, "heuristics"},
    {ExperimentKind::robust_estimation, "robust_estimation"},
    {ExperimentKind::robust_sync, "robust_sync"},
    {ExperimentKind::verify, "verify"},
    {ExperimentKind::simulate, "simulate"},
    {ExperimentKind::oracle, "oracle"},
}};
inline constexpr std::array<std::pair<Variant, std::string_view>, 3> variant_names{{
    {Variant::no_halting, "no_halting"}, {Variant::halting, "halting"}, {Variant::adaptive, "adaptive"}}};
inline constexpr std::array<std::pair<BetaKind, std::string_view>, 3> beta_names{{
    {BetaKind::constant, "constant"}, {BetaKind::affine, "affine"}, {BetaKind::sigmoid, "sigmoid"}}};
inline constexpr std::array<std::pair<EfficacyKind, std::string_view>, 2> efficacy_names{{
    {EfficacyKind::power, "power"}, {EfficacyKind::zero, "zero"}}};
inline constexpr std::array<std::pair<VisibilityKind, std::string_view>, 3> visibility_names{{
    {VisibilityKind::zero, "zero"}, {VisibilityKind::linear, "linear"}, {VisibilityKind::power, "power"}}};
inline constexpr std::array<std::pair<EstimationNoise, std::string_view>, 2> noise_names{{
    {EstimationNoise::multiplicative, "multiplicative"}, {EstimationNoise::additive, "additive"}}};

}  // namespace detail

inline std::string_view to_string(ExperimentKind k) { return detail::name_of(detail::experiment_names, k); }

inline ExperimentKind experiment_from_string(std::string_view s) {
  return detail::value_of(detail::experiment_names, s, "experiment kind");
}

struct Numerics {
  std::optional<double> step;  // default: T / 2000
  std::size_t coarse_points = 101;
  std::size_t refine_iters = 60;
  double tol = 1e-9;

  double step_for(const ModelSpec& m) const { return step ? *step : default_step(m); }
  SearchOptions search(const ModelSpec& m) const { return {coarse_points, refine_iters, tol, step_for(m)}; }
  bool operator==(const Numerics&) const = default;
};

struct VariantChoice {
  Variant variant = Variant::no_halting;
  double pi = 0.0;

  bool operator==(const VariantChoice& o) const {
    return variant == o.variant && (variant != Variant::halting || pi == o.pi);
  }
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::solve;
  std::vector<double> gammas;           // sweep_gamma
  std::vector<VariantChoice> variants;  // sweep_gamma; empty means the model's own
  std::vector<double> ranges;           // robust_*
  std::size_t runs = 1;                 // robust_*, simulate
  std::optional<std::int64_t> n;        // robust_sync, simulate
  std::size_t k = 5;                    // oracle segments
  std::vector<double> levels{0.0, 1.0};  // oracle control levels
  std::optional<std::uint64_t> seed;    // required by stochastic kinds
  std::optional<double> t_star;         // verify, simulate, robust_*: default is the solved optimum
  std::size_t mix_points = 21;          // heuristics
  bool independent_mix = false;         // heuristics: u_P free instead of 1 - u_Z
  EstimationNoise estimation_noise = EstimationNoise::multiplicative;

  bool operator==(const ExperimentSpec&) const = default;
};

struct ScenarioConfig {
  ModelSpec model;
  Numerics numerics;
  ExperimentSpec experiment;

  bool operator==(const ScenarioConfig&) const = default;

  /// Model and cross-field checks; throws ConfigError.
  void validate() const;
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

using json = nlohmann::json;

/// Reads an object while tracking which keys were consumed, so unknown keys
/// are reported instead of silently ignored.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& at(const char* key) {
    if (!j_.contains(key)) throw ConfigError("missing field " + path_ + "." + key);
    used_.emplace_back(key);
    return j_.at(key);
  }

  double number(const char* key) {
    const auto& v = at(key);
    if (!v.is_number()) throw ConfigError(path_ + "." + key + " must be a number");
    return v.get<double>();
  }
  double number_or(const char* key, double fallback) { return has(key) ? number(key) : fallback; }

  std::uint64_t unsigned_integer(const char* key) {
    const auto& v = at(key);
    if (!v.is_number_unsigned()) throw ConfigError(path_ + "." + key + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string text(const char* key) {
    const auto& v = at(key);
    if (!v.is_string()) throw ConfigError(path_ + "." + key + " must be a string");
    return v.get<std::string>();
  }

  bool boolean(const char* key) {
    const auto& v = at(key);
    if (!v.is_boolean()) throw ConfigError(path_ + "." + key + " must be true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const char* key) {
    const auto& v = at(key);
    if (!v.is_array()) throw ConfigError(path_ + "." + key + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(path_ + "." + key + " must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  Reader child(const char* key) { return Reader(at(key), path_ + "." + key); }
  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(used_.begin(), used_.end(), it.key()) == used_.end())
        throw ConfigError("unknown field " + path_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> used_;
};

inline BetaSpec read_beta(Reader r) {
  BetaSpec b;
  b.kind = value_of(beta_names, r.text("kind"), "beta kind");
  switch (b.kind) {
    case BetaKind::constant: b.beta = r.number("beta"); break;
    case BetaKind::affine:
      b.a = r.number("a");
      b.beta_max = r.number("beta_max");
      break;
    case BetaKind::sigmoid:
      b.beta0 = r.number("beta_0");
      b.alpha = r.number("alpha");
      b.z_th = r.number("z_th");
      break;
  }
  r.finish();
  return b;
}

inline json write_beta(const BetaSpec& b) {
  json j{{"kind", name_of(beta_names, b.kind)}};
  switch (b.kind) {
    case BetaKind::constant: j["beta"] = b.beta; break;
    case BetaKind::affine:
      j["a"] = b.a;
      j["beta_max"] = b.beta_max;
      break;
    case BetaKind::sigmoid:
      j["beta_0"] = b.beta0;
      j["alpha"] = b.alpha;
      j["z_th"] = b.z_th;
      break;
  }
  return j;
}

inline DamageSpec read_damage(Reader r) {
  DamageSpec d;
  {
    Reader f = r.child("f");
    d.f_kind = value_of(efficacy_names, f.text("kind"), "efficacy kind");
    if (d.f_kind == EfficacyKind::power) d.p = f.number("p");
    f.finish();
  }
  if (r.has("g")) {
    Reader g = r.child("g");
    d.g_kind = value_of(visibility_names, g.text("kind"), "visibility kind");
    if (d.g_kind != VisibilityKind::zero) d.k = g.number("k");
    if (d.g_kind == VisibilityKind::power) d.q = g.number("q");
    g.finish();
  }
  r.finish();
  return d;
}

inline json write_damage(const DamageSpec& d) {
  json f{{"kind", name_of(efficacy_names, d.f_kind)}};
  if (d.f_kind == EfficacyKind::power) f["p"] = d.p;
  json g{{"kind", name_of(visibility_names, d.g_kind)}};
  if (d.g_kind != VisibilityKind::zero) g["k"] = d.k;
  if (d.g_kind == VisibilityKind::power) g["q"] = d.q;
  return json{{"f", f}, {"g", g}};
}

inline EpidemicState read_state(Reader r) {
  EpidemicState x{r.number("S"), r.number("G"), r.number_or("Z", 0.0), r.number_or("P", 0.0)};
  r.finish();
  return x;
}

inline ModelSpec read_model(Reader r) {
  ModelSpec m;
  m.variant = value_of(variant_names, r.text("variant"), "variant");
  m.beta = read_beta(r.child("beta"));
  m.gamma = r.number("gamma");
  if (m.variant == Variant::halting) m.pi = r.number("pi");
  else if (r.has("pi")) m.pi = r.number("pi");
  m.T = r.number("T");
  m.init = read_state(r.child("init"));
  m.damage = read_damage(r.child("damage"));
  r.finish();
  return m;
}

inline json write_model(const ModelSpec& m) {
  json j{{"variant", name_of(variant_names, m.variant)},
         {"beta", write_beta(m.beta)},
         {"gamma", m.gamma},
         {"T", m.T},
         {"init", {{"S", m.init.S}, {"G", m.init.G}, {"Z", m.init.Z}, {"P", m.init.P}}},
         {"damage", write_damage(m.damage)}};
  if (m.variant == Variant::halting) j["pi"] = m.pi;
  return j;
}

inline Numerics read_numerics(Reader r) {
  Numerics n;
  if (r.has("step")) n.step = r.number("step");
  if (r.has("coarse_points")) n.coarse_points = r.unsigned_integer("coarse_points");
  if (r.has("refine_iters")) n.refine_iters = r.unsigned_integer("refine_iters");
  if (r.has("tol")) n.tol = r.number("tol");
  r.finish();
  return n;
}

inline json write_numerics(const Numerics& n) {
  json j{{"coarse_points", n.coarse_points}, {"refine_iters", n.refine_iters}, {"tol", n.tol}};
  if (n.step) j["step"] = *n.step;
  return j;
}

inline ExperimentSpec read_experiment(Reader r) {
  ExperimentSpec e;
  e.kind = experiment_from_string(r.text("kind"));
  if (r.has("gammas")) e.gammas = r.numbers("gammas");
  if (r.has("variants")) {
    const auto& arr = r.at("variants");
    if (!arr.is_array()) throw ConfigError(r.path("variants") + " must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Reader v(arr[i], r.path("variants") + "[" + std::to_string(i) + "]");
      VariantChoice c;
      c.variant = value_of(variant_names, v.text("variant"), "variant");
      if (c.variant == Variant::halting) c.pi = v.number("pi");
      v.finish();
      e.variants.push_back(c);
    }
  }
  if (r.has("ranges")) e.ranges = r.numbers("ranges");
  if (r.has("runs")) e.runs = r.unsigned_integer("runs");
  if (r.has("n")) e.n = static_cast<std::int64_t>(r.unsigned_integer("n"));
  if (r.has("k")) e.k = r.unsigned_integer("k");
  if (r.has("levels")) e.levels = r.numbers("levels");
  if (r.has("seed")) e.seed = r.unsigned_integer("seed");
  if (r.has("t_star")) e.t_star = r.number("t_star");
  if (r.has("mix_points")) e.mix_points = r.unsigned_integer("mix_points");
  if (r.has("independent_mix")) e.independent_mix = r.boolean("independent_mix");
  if (r.has("estimation_noise"))
    e.estimation_noise = value_of(noise_names, r.text("estimation_noise"), "estimation noise");
  r.finish();
  return e;
}

inline json write_experiment(const ExperimentSpec& e) {
  json j{{"kind", to_string(e.kind)}, {"runs", e.runs}, {"k", e.k}, {"levels", e.levels},
         {"mix_points", e.mix_points}, {"independent_mix", e.independent_mix},
         {"estimation_noise", name_of(noise_names, e.estimation_noise)}};
  if (!e.gammas.empty()) j["gammas"] = e.gammas;
  if (!e.variants.empty()) {
    json arr = json::array();
    for (const auto& v : e.variants) {
      json o{{"variant", name_of(variant_names, v.variant)}};
      if (v.variant == Variant::halting) o["pi"] = v.pi;
      arr.push_back(o);
    }
    j["variants"] = arr;
  }
  if (!e.ranges.empty()) j["ranges"] = e.ranges;
  if (e.n) j["n"] = *e.n;
  if (e.seed) j["seed"] = *e.seed;
  if (e.t_star) j["t_star"] = *e.t_star;
  return j;
}

}  // namespace detail

/// Parses and validates a scenario; throws ConfigError.
inline ScenarioConfig parse_config(std::string_view text) {
  detail::json j;
  try {
    j = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ScenarioConfig c;
  detail::Reader root(j, "config");
  c.model = detail::read_model(root.child("model"));
  if (root.has("numerics")) c.numerics = detail::read_numerics(root.child("numerics"));
  c.experiment = detail::read_experiment(root.child("experiment"));
  root.finish();
  c.validate();
  return c;
}

inline std::string emit_config(const ScenarioConfig& c) {
  const detail::json j{{"model", detail::write_model(c.model)},
                       {"numerics", detail::write_numerics(c.numerics)},
                       {"experiment", detail::write_experiment(c.experiment)}};
  return j.dump(2) + "\n";
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline void ScenarioConfig::validate() const {
  try {
    model.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  const auto& e = experiment;
  if (numerics.step && !(*numerics.step > 0.0)) throw ConfigError("numerics.step must be > 0");
  if (numerics.coarse_points < 8) throw ConfigError("numerics.coarse_points must be >= 8");
  if (!(numerics.tol >= 0.0)) throw ConfigError("numerics.tol must be >= 0");
  auto need_seed = [&] {
    if (!e.seed) throw ConfigError("experiment." + std::string(to_string(e.kind)) + " needs a seed");
  };
  auto need_n = [&] {
    if (!e.n || *e.n < 2) throw ConfigError("experiment." + std::string(to_string(e.kind)) + " needs n >= 2");
  };
  auto need_ranges = [&] {
    if (e.ranges.empty()) throw ConfigError("experiment.ranges must not be empty");
    for (double r : e.ranges)
      if (!(r >= 0.0)) throw ConfigError("experiment.ranges must be >= 0");
    if (e.runs == 0) throw ConfigError("experiment.runs must be >= 1");
  };
  if (e.t_star && !(*e.t_star >= 0.0 && *e.t_star <= model.T)) throw ConfigError("experiment.t_star must lie in [0, T]");
  switch (e.kind) {
    case ExperimentKind::solve:
    case ExperimentKind::verify: break;
    case ExperimentKind::sweep_gamma:
      if (e.gammas.empty()) throw ConfigError("experiment.gammas must not be empty");
      for (double g : e.gammas)
        if (!(g > 0.0)) throw ConfigError("experiment.gammas must be > 0");
      for (const auto& v : e.variants) {
        ModelSpec m = model;
        m.variant = v.variant;
        m.pi = v.pi;
        try {
          m.validate();
        } catch (const InvalidArgument& ex) {
          throw ConfigError(std::string("experiment.variants: ") + ex.what());
        }
      }
      break;
    case ExperimentKind::heuristics:
      if (e.mix_points < 11) throw ConfigError("experiment.mix_points must be >= 11");
      break;
    case ExperimentKind::robust_estimation:
      if (model.variant != Variant::adaptive) throw ConfigError("robust_estimation needs the adaptive variant");
      if (e.n) throw ConfigError("robust_estimation runs in the mean-field model; drop experiment.n");
      need_ranges();
      need_seed();
      break;
    case ExperimentKind::robust_sync:
      need_ranges();
      need_n();
      need_seed();
      break;
    case ExperimentKind::simulate:
      need_n();
      need_seed();
      if (e.runs == 0) throw ConfigError("experiment.runs must be >= 1");
      break;
    case ExperimentKind::oracle:
      if (e.k == 0) throw ConfigError("experiment.k must be >= 1");
      break;
  }
}

// ---------------------------------------------------------------------------
// Output

/// Shortest decimal form that reads back to the same double.
inline std::string format_number(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw OutputError("cannot write " + path.string());
  }

  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
    if (!out_) throw OutputError("write failed for " + path_.string());
  }

 private:
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(std::string_view s) { return std::string(s); }
  static std::string cell(const char* s) { return s; }
  static std::string cell(const std::string& s) { return s; }
  template <class I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

/// One row per grid point; costate columns are appended when given.
inline void emit_trajectory(const Trajectory& tr, const CostateTrajectory* costates, const std::filesystem::path& path) {
  if (costates && costates->size() != tr.size()) throw InvalidArgument("costate grid does not match the trajectory");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw OutputError("cannot write " + path.string());
  out << "t,S,G,Z,P,u_Z,u_P,u_h,beta_eff,damage_rate";
  if (costates) out << ",lambda_S,lambda_Z,lambda_P,phi_P,phi_Z,phi_h";
  out << '\n';
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto& x = tr.states[i];
    const auto& u = tr.controls[i];
    const double cols[] = {tr.t[i], x.S, x.G, x.Z, x.P, u.u_Z, u.u_P, u.u_h, tr.beta_eff[i], tr.damage[i]};
    bool first = true;
    for (double v : cols) {
      out << (first ? "" : ",") << format_number(v);
      first = false;
    }
    if (costates) {
      const auto& c = *costates;
      for (double v : {c.lambda_S[i], c.lambda_Z[i], c.lambda_P[i], c.phi_P[i], c.phi_Z[i], c.phi_h[i]})
        out << ',' << format_number(v);
    }
    out << '\n';
  }
  if (!out) throw OutputError("write failed for " + path.string());
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw OutputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw OutputError("write failed for " + path.string());
}

inline nlohmann::json to_json(const PmpVerdict& v) {
  return {{"pass", v.pass},
          {"tol", v.tol},
          {"worst_violation", v.worst_violation},
          {"worst_time", v.worst_time},
          {"failed_case", std::string(to_string(v.failed_case))},
          {"points_checked", v.points_checked},
          {"singular_points", v.singular_points},
          {"hamiltonian_drift", v.hamiltonian_drift},
          {"phi_h_identity", v.phi_h_identity},
          {"slope_clamped", v.slope_clamped}};
}

// ---------------------------------------------------------------------------
// Execution

enum ExitStatus : int { exit_ok = 0, exit_config = 1, exit_numerical = 2 };

namespace detail {

inline void print_row(std::ostream& log, std::string_view kind, const std::string& body) {
  log << kind << ": " << body << '\n';
}

inline double policy_t_star(const ScenarioConfig& c) {
  if (c.experiment.t_star) return *c.experiment.t_star;
  return optimal_threshold(c.model, c.numerics.search(c.model)).t_star;
}

inline void run_solve(const ScenarioConfig& c, const std::filesystem::path& dir, std::ostream& log) {
  const auto& m = c.model;
  const auto sol = optimal_threshold(m, c.numerics.search(m));
  const auto tr = integrate_forward(m, ControlPolicy::threshold(sol.t_star), c.numerics.step_for(m));
  const auto co = integrate_costates_backward(m, tr);
  emit_trajectory(tr, &co, dir / "trajectory.csv");
  write_json({{"t_star", sol.t_star},
              {"J", sol.J_star},
              {"bracket", sol.bracket},
              {"evaluations", sol.evaluations},
              {"step", tr.step}},
             dir / "solution.json");
  print_row(log, "solve", "t_star=" + format_number(sol.t_star) + " J=" + format_number(sol.J_star));
}

inline void run_sweep(const ScenarioConfig& c, const std::filesystem::path& dir, std::ostream& log) {
  auto variants = c.experiment.variants;
  if (variants.empty()) variants.push_back({c.model.variant, c.model.pi});
  CsvWriter csv(dir / "sweep.csv");
  csv.row("gamma", "variant", "pi", "t_star", "J");
  for (const auto& v : variants) {
    for (double g : c.experiment.gammas) {
      ModelSpec m = c.model;
      m.variant = v.variant;
      m.pi = v.variant == Variant::halting ? v.pi : 0.0;
      m.gamma = g;
      const auto sol = optimal_threshold(m, c.numerics.search(m));
      csv.row(g, to_string(v.variant), m.pi, sol.t_star, sol.J_star);
      print_row(log, "sweep_gamma",
                "gamma=" + format_number(g) + " variant=" + std::string(to_string(v.variant)) +
                    " pi=" + format_number(m.pi) + " t_star=" + format_number(sol.t_star) +
                    " J=" + format_number(sol.J_star));
    }
  }
}

inline void run_heuristics(const ScenarioConfig& c, const std::filesystem::path& dir, std::ostream& log) {
  const auto& m = c.model;
  const auto opt = c.numerics.search(m);
  CsvWriter csv(dir / "heuristics.csv");
  csv.row("policy", "rho", "rho_p", "t_star", "J");
  const auto sol = optimal_threshold(m, opt);
  csv.row("optimal_threshold", "", "", sol.t_star, sol.J_star);
  print_row(log, "heuristics", "optimal_threshold t_star=" + format_number(sol.t_star) + " J=" + format_number(sol.J_star));
  for (auto h : {Heuristic::always_zombie, Heuristic::always_passive, Heuristic::static_mix}) {
    const auto r = evaluate_heuristic(m, h, c.experiment.mix_points, opt, c.experiment.independent_mix);
    const std::string rho = r.rho ? format_number(*r.rho) : "";
    const std::string rho_p = r.rho_p ? format_number(*r.rho_p) : (r.rho ? format_number(1.0 - *r.rho) : "");
    csv.row(to_string(h), rho, rho_p, "", r.J);
    print_row(log, "heuristics", std::string(to_string(h)) + (rho.empty() ? "" : " rho=" + rho) + " J=" + format_number(r.J));
  }
}

inline void run_robust(const ScenarioConfig& c, const std::filesystem::path& dir, std::ostream& log) {
  const auto& m = c.model;
  const auto& e = c.experiment;
  const double ts = policy_t_star(c);
  RobustnessOptions ro;
  ro.step = c.numerics.step_for(m);
  ro.noise = e.estimation_noise;
  const bool sync = e.kind == ExperimentKind::robust_sync;
  if (sync) ro.N = e.n;
  const auto rep = robustness_sweep(m, ControlPolicy::threshold(ts),
                                    sync ? PerturbationKind::sync_error : PerturbationKind::estimation_error, e.ranges,
                                    e.runs, ro, *e.seed);
  CsvWriter csv(dir / "robust.csv");
  csv.row("range", "runs", "mean_J", "sd_J", "relative_loss", "mean_abs_deviation", "J_reference", "t_star");
  for (const auto& r : rep.rows) {
    csv.row(r.range, r.runs, r.mean_J, r.sd_J, r.relative_loss, r.mean_abs_deviation, rep.J_reference, ts);
    print_row(log, to_string(e.kind),
              "range=" + format_number(r.range) + " mean_J=" + format_number(r.mean_J) +
                  " relative_loss=" + format_number(r.relative_loss));
  }
  CsvWriter runs(dir / "runs.csv");
  runs.row("seed", "range", "J");
  for (const auto& r : rep.records) runs.row(r.seed, r.range, r.J);
}

inline bool run_verify(const ScenarioConfig& c, const std::filesystem::path& dir, std::ostream& log) {
  const auto& m = c.model;
  const double ts = policy_t_star(c);
  const double h = c.numerics.step_for(m);
  constexpr double tol = 1e-4;
  const auto verdict = verify_pmp(m, ControlPolicy::threshold(ts), tol, h);
  auto j = to_json(verdict);
  j["t_star"] = ts;
  write_json(j, dir / "verdict.json");
  const auto tr = integrate_forward(m, ControlPolicy::threshold(ts), h);
  const auto co = integrate_costates_backward(m, tr);
  emit_trajectory(tr, &co, dir / "trajectory.csv");
  print_row(log, "verify",
            std::string(verdict.pass ? "pass" : "fail") + " t_star=" + format_number(ts) +
                " worst_violation=" + format_number(verdict.worst_violation) +
                " hamiltonian_drift=" + format_number(verdict.hamiltonian_drift));
  return verdict.pass;
}

inline void run_simulate(const ScenarioConfig& c, const std::filesystem::path& dir, std::ostream& log) {
  const auto& m = c.model;
  const auto& e = c.experiment;
  const double ts = policy_t_star(c);
  const auto pol = ControlPolicy::threshold(ts);
  CsvWriter csv(dir / "runs.csv");
  csv.row("seed", "J", "contacts", "n_S", "n_G", "n_Z", "n_P");
  for (std::size_t k = 0; k < e.runs; ++k) {
    const std::uint64_t s = derive_seed(*e.seed, 0, k);
    const auto r = simulate_population(m, pol, *e.n, {}, s);
    const auto& f = r.counts.back();
    csv.row(s, r.J, r.contacts, f.S, f.G, f.Z, f.P);
    print_row(log, "simulate", "seed=" + std::to_string(s) + " J=" + format_number(r.J));
    if (k == 0) {
      CsvWriter path(dir / "path.csv");
      path.row("t", "n_S", "n_G", "n_Z", "n_P");
      for (std::size_t i = 0; i < r.t.size(); ++i)
        path.row(r.t[i], r.counts[i].S, r.counts[i].G, r.counts[i].Z, r.counts[i].P);
    }
  }
}

inline void run_oracle(const ScenarioConfig& c, const std::filesystem::path& dir, std::ostream& log) {
  const auto& m = c.model;
  OracleOptions o;
  if (c.numerics.step) o.step = *c.numerics.step;
  const auto sol = brute_force_policy_search(m, c.experiment.k, c.experiment.levels, o);
  const auto th = optimal_threshold(m, c.numerics.search(m));
  nlohmann::json controls = nlohmann::json::array();
  for (const auto& u : sol.best_policy.controls()) controls.push_back({u.u_Z, u.u_P, u.u_h});
  write_json({{"segments", sol.segments},
              {"levels", sol.levels},
              {"breakpoints", sol.best_policy.breakpoints()},
              {"controls", controls},
              {"J_best", sol.J_best},
              {"one_switch_bang_bang", sol.one_switch_bang_bang},
              {"combinations", sol.combinations},
              {"evaluated", sol.evaluated},
              {"threshold_t_star", th.t_star},
              {"threshold_J", th.J_star}},
             dir / "oracle.json");
  print_row(log, "oracle",
            "J_best=" + format_number(sol.J_best) + " threshold_J=" + format_number(th.J_star) +
                " one_switch_bang_bang=" + (sol.one_switch_bang_bang ? "true" : "false"));
}

}  // namespace detail

/// Runs the configured experiment and writes its files into `out_dir`.
/// Returns 0 on success, 1 on configuration or output errors, 2 on numerical
/// failure. A verification that completes with a failing verdict still
/// returns 0; the verdict file records the outcome.
inline int run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                        std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  try {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
      throw OutputError("cannot create output directory " + out_dir.string());
    switch (config.experiment.kind) {
      case ExperimentKind::solve: detail::run_solve(config, out_dir, log); break;
      case ExperimentKind::sweep_gamma: detail::run_sweep(config, out_dir, log); break;
      case ExperimentKind::heuristics: detail::run_heuristics(config, out_dir, log); break;
      case ExperimentKind::robust_estimation:
      case ExperimentKind::robust_sync: detail::run_robust(config, out_dir, log); break;
      case ExperimentKind::verify: detail::run_verify(config, out_dir, log); break;
      case ExperimentKind::simulate: detail::run_simulate(config, out_dir, log); break;
      case ExperimentKind::oracle: detail::run_oracle(config, out_dir, log); break;
    }
    return exit_ok;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const InvalidArgument& e) {
    err << "configuration error: " << e.what() << '\n';
    return exit_config;
  } catch (const OutputError& e) {
    err << "output error: " << e.what() << '\n';
    return exit_config;
  }
}

}  // namespace sgzp
