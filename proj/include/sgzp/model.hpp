#pragma once

// Mean-field SGZP dynamics: susceptibles (S), germinators (G), zombies (Z)
// and passives (P). Germinators are attacker-controlled and choose, at each
// contact with a susceptible, whether it becomes a zombie (spreading, visible)
// or a passive (silent). The halting variant lets germinators turn zombies
// into passives; the adaptive variant lets the defender throttle the contact
// rate as a function of the zombie fraction.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sgzp {

/// Raised for invalid inputs (parameter ranges, malformed policies, configs).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an integration produces non-finite or off-simplex states.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace tolerance {
inline constexpr double simplex = 1e-9;       // S+G+Z+P = 1
inline constexpr double simplex_loose = 1e-7;  // rejection threshold for inputs
inline constexpr double control_clamp = 1e-12;
inline constexpr double derivative_floor = 1e-12;  // f'(x) evaluated at max(x, floor)
}  // namespace tolerance

enum class Variant { no_halting, halting, adaptive };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::no_halting: return "no_halting";
    case Variant::halting: return "halting";
    case Variant::adaptive: return "adaptive";
  }
  return "?";
}

inline Variant variant_from_string(std::string_view s) {
  if (s == "no_halting") return Variant::no_halting;
  if (s == "halting") return Variant::halting;
  if (s == "adaptive") return Variant::adaptive;
  throw InvalidArgument("unknown variant '" + std::string(s) + "'");
}

struct EpidemicState {
  double S = 1.0;
  double G = 0.0;
  double Z = 0.0;
  double P = 0.0;

  double total() const { return S + G + Z + P; }
  bool operator==(const EpidemicState&) const = default;
};

/// Time derivative of an EpidemicState; dG is always zero.
struct StateRate {
  double dS = 0.0;
  double dG = 0.0;
  double dZ = 0.0;
  double dP = 0.0;
};

struct ControlVector {
  double u_Z = 0.0;
  double u_P = 0.0;
  double u_h = 0.0;

  bool operator==(const ControlVector&) const = default;
};

inline constexpr ControlVector zombie_control{1.0, 0.0, 0.0};
inline constexpr ControlVector passive_control{0.0, 1.0, 0.0};

enum class BetaKind { constant, affine, sigmoid };

/// Contact-rate specification. Only the fields of the selected kind are read.
struct BetaSpec {
  BetaKind kind = BetaKind::constant;
  double beta = 1.0;       // constant
  double a = 0.0;          // affine slope
  double beta_max = 1.0;   // affine intercept
  double beta0 = 1.0;      // sigmoid plateau
  double alpha = 1.0;      // sigmoid sharpness
  double z_th = 0.5;       // sigmoid midpoint

  static BetaSpec constant_rate(double b) {
    BetaSpec s;
    s.kind = BetaKind::constant;
    s.beta = b;
    return s;
  }
  static BetaSpec affine(double a, double beta_max) {
    BetaSpec s;
    s.kind = BetaKind::affine;
    s.a = a;
    s.beta_max = beta_max;
    return s;
  }
  static BetaSpec sigmoid(double beta0, double alpha, double z_th) {
    BetaSpec s;
    s.kind = BetaKind::sigmoid;
    s.beta0 = beta0;
    s.alpha = alpha;
    s.z_th = z_th;
    return s;
  }

  void validate() const {
    switch (kind) {
      case BetaKind::constant:
        if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("constant beta must be finite and >= 0");
        break;
      case BetaKind::affine:
        if (!(a >= 0.0) || !(beta_max > 0.0) || !std::isfinite(beta_max))
          throw InvalidArgument("affine beta requires a >= 0 and beta_max > 0");
        // beta(1) = 0 is unreachable because G > 0 keeps Z < 1.
        if (!(a <= beta_max)) throw InvalidArgument("affine beta requires a <= beta_max");
        break;
      case BetaKind::sigmoid:
        if (!(beta0 > 0.0) || !std::isfinite(beta0)) throw InvalidArgument("sigmoid beta0 must be > 0");
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("sigmoid alpha must be > 0");
        if (!(z_th > 0.0 && z_th < 1.0)) throw InvalidArgument("sigmoid z_th must lie in (0,1)");
        break;
    }
  }

  bool operator==(const BetaSpec& o) const {
    if (kind != o.kind) return false;
    switch (kind) {
      case BetaKind::constant: return beta == o.beta;
      case BetaKind::affine: return a == o.a && beta_max == o.beta_max;
      case BetaKind::sigmoid: return beta0 == o.beta0 && alpha == o.alpha && z_th == o.z_th;
    }
    return false;
  }
};

namespace detail {
inline double logistic_tail(double alpha, double z, double z_th) {
  // 1 / (1 + exp(alpha (z - z_th))) without overflow
  const double x = alpha * (z - z_th);
  if (x > 0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

inline double checked_fraction(double z, const char* what) {
  if (!(z >= -tolerance::control_clamp && z <= 1.0 + tolerance::control_clamp))
    throw InvalidArgument(std::string(what) + " must lie in [0,1]");
  return std::clamp(z, 0.0, 1.0);
}
}  // namespace detail

/// Effective contact rate at zombie fraction z.
inline double beta_of(const BetaSpec& spec, double z) {
  z = detail::checked_fraction(z, "zombie fraction");
  switch (spec.kind) {
    case BetaKind::constant: return spec.beta;
    case BetaKind::affine:
      if (spec.a > spec.beta_max) throw InvalidArgument("affine beta requires a <= beta_max");
      return spec.beta_max - spec.a * z;
    case BetaKind::sigmoid: return spec.beta0 * detail::logistic_tail(spec.alpha, z, spec.z_th);
  }
  return 0.0;
}

/// d beta / dZ.
inline double beta_slope(const BetaSpec& spec, double z) {
  z = std::clamp(z, 0.0, 1.0);
  switch (spec.kind) {
    case BetaKind::constant: return 0.0;
    case BetaKind::affine: return -spec.a;
    case BetaKind::sigmoid: {
      const double s = detail::logistic_tail(spec.alpha, z, spec.z_th);
      return -spec.alpha * spec.beta0 * s * (1.0 - s);
    }
  }
  return 0.0;
}

enum class EfficacyKind { power, zero };
enum class VisibilityKind { zero, linear, power };

/// Efficacy f(x) = x^p and visibility g(x) = k x (linear) or k x^q (power).
/// EfficacyKind::zero exists only for degenerate costate checks and is
/// rejected by ModelSpec::validate().
struct DamageSpec {
  EfficacyKind f_kind = EfficacyKind::power;
  double p = 1.0;
  VisibilityKind g_kind = VisibilityKind::zero;
  double k = 0.0;
  double q = 1.0;

  static DamageSpec power(double p) {
    DamageSpec d;
    d.p = p;
    return d;
  }
  DamageSpec with_linear_visibility(double k_g) const {
    DamageSpec d = *this;
    d.g_kind = VisibilityKind::linear;
    d.k = k_g;
    return d;
  }
  DamageSpec with_power_visibility(double k_g, double q_g) const {
    DamageSpec d = *this;
    d.g_kind = VisibilityKind::power;
    d.k = k_g;
    d.q = q_g;
    return d;
  }

  void validate(bool allow_degenerate = false) const {
    if (f_kind == EfficacyKind::zero) {
      if (!allow_degenerate) throw InvalidArgument("efficacy f must be a power law");
    } else if (!(p > 0.0 && p <= 1.0)) {
      throw InvalidArgument("efficacy exponent p must lie in (0,1]");
    }
    switch (g_kind) {
      case VisibilityKind::zero: break;
      case VisibilityKind::linear:
        if (!(k > 0.0) || !std::isfinite(k)) throw InvalidArgument("linear visibility requires k > 0");
        break;
      case VisibilityKind::power:
        if (!(k > 0.0) || !std::isfinite(k)) throw InvalidArgument("power visibility requires k > 0");
        if (!(q >= 1.0) || !std::isfinite(q)) throw InvalidArgument("power visibility requires q >= 1");
        break;
    }
  }

  double efficacy(double x) const {
    if (f_kind == EfficacyKind::zero) return 0.0;
    x = std::max(x, 0.0);
    return p == 1.0 ? x : std::pow(x, p);
  }

  /// f'(x), evaluated at max(x, 1e-12) so that p < 1 stays finite at 0.
  /// `clamped` is set when the floor was applied to a p < 1 law.
  double efficacy_slope(double x, bool* clamped = nullptr) const {
    if (f_kind == EfficacyKind::zero) return 0.0;
    if (p == 1.0) return 1.0;
    if (x < tolerance::derivative_floor) {
      if (clamped) *clamped = true;
      x = tolerance::derivative_floor;
    }
    return p * std::pow(x, p - 1.0);
  }

  double visibility(double z) const {
    z = std::max(z, 0.0);
    switch (g_kind) {
      case VisibilityKind::zero: return 0.0;
      case VisibilityKind::linear: return k * z;
      case VisibilityKind::power: return k * std::pow(z, q);
    }
    return 0.0;
  }

  double visibility_slope(double z) const {
    z = std::max(z, 0.0);
    switch (g_kind) {
      case VisibilityKind::zero: return 0.0;
      case VisibilityKind::linear: return k;
      case VisibilityKind::power: return q == 1.0 ? k : k * q * std::pow(z, q - 1.0);
    }
    return 0.0;
  }

  bool operator==(const DamageSpec& o) const {
    if (f_kind != o.f_kind || g_kind != o.g_kind) return false;
    if (f_kind == EfficacyKind::power && p != o.p) return false;
    if (g_kind != VisibilityKind::zero && k != o.k) return false;
    if (g_kind == VisibilityKind::power && q != o.q) return false;
    return true;
  }
};

struct ModelSpec {
  Variant variant = Variant::no_halting;
  BetaSpec beta;
  double gamma = 1.0;
  double pi = 0.0;  // halting efficacy, read only by the halting variant
  double T = 1.0;
  EpidemicState init;
  DamageSpec damage;

  void validate(bool allow_degenerate_damage = false) const {
    beta.validate();
    damage.validate(allow_degenerate_damage);
    if (variant != Variant::adaptive && beta.kind != BetaKind::constant)
      throw InvalidArgument("only the adaptive variant accepts a Z-dependent beta");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be > 0");
    if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("horizon T must be > 0");
    if (variant == Variant::halting) {
      if (!(pi > 0.0 && pi <= 1.0)) throw InvalidArgument("halting efficacy pi must lie in (0,1]");
      const bool degenerate_ok = allow_degenerate_damage && damage.g_kind == VisibilityKind::zero;
      if (damage.g_kind != VisibilityKind::linear && !degenerate_ok)
        throw InvalidArgument("the halting variant requires a linear visibility g");
    }
    if (variant == Variant::adaptive && damage.g_kind != VisibilityKind::zero)
      throw InvalidArgument("the adaptive variant requires g == 0");
    const auto& x = init;
    if (!(x.S > 0.0) || !(x.G > 0.0) || !(x.Z >= 0.0) || !(x.P >= 0.0))
      throw InvalidArgument("initial state requires S > 0, G > 0, Z >= 0, P >= 0");
    if (std::abs(x.total() - 1.0) > tolerance::simplex) throw InvalidArgument("initial state must sum to 1");
  }

  bool operator==(const ModelSpec& o) const {
    return variant == o.variant && beta == o.beta && gamma == o.gamma &&
           (variant != Variant::halting || pi == o.pi) && T == o.T && init == o.init && damage == o.damage;
  }
};

/// Throws unless the state lies on the simplex (within `tol`) with
/// non-negative components.
inline void check_state(const EpidemicState& x, double tol = tolerance::simplex_loose) {
  if (!std::isfinite(x.S) || !std::isfinite(x.G) || !std::isfinite(x.Z) || !std::isfinite(x.P))
    throw NumericalError("non-finite state");
  if (x.S < -tol || x.G < -tol || x.Z < -tol || x.P < -tol || std::abs(x.total() - 1.0) > tol)
    throw InvalidArgument("state lies outside the simplex");
}

/// Validates a control against the box and sum constraints. Violations up to
/// 1e-12 are clamped away; anything larger throws.
inline ControlVector admissible_control(ControlVector u, Variant variant) {
  constexpr double eps = tolerance::control_clamp;
  auto box = [&](double v, const char* name) {
    if (!(v >= -eps && v <= 1.0 + eps)) throw InvalidArgument(std::string(name) + " outside [0,1]");
    return std::clamp(v, 0.0, 1.0);
  };
  u.u_Z = box(u.u_Z, "u_Z");
  u.u_P = box(u.u_P, "u_P");
  u.u_h = box(u.u_h, "u_h");
  const double sum = u.u_Z + u.u_P;
  if (sum > 1.0 + eps) throw InvalidArgument("u_Z + u_P exceeds 1");
  if (sum > 1.0) u.u_P = 1.0 - u.u_Z;
  if (variant != Variant::halting && u.u_h > eps) throw InvalidArgument("u_h is only meaningful in the halting variant");
  if (variant != Variant::halting) u.u_h = 0.0;
  return u;
}

/// Contact rate actually in force at state x.
inline double effective_beta(const ModelSpec& model, const EpidemicState& x) {
  return model.variant == Variant::adaptive ? beta_of(model.beta, x.Z) : model.beta.beta;
}

/// Right-hand side for a contact rate supplied by the caller. dS is formed as
/// -(dZ + dP) so the flow conserves S + Z + P to rounding.
inline StateRate rhs_with_beta(const EpidemicState& x, const ControlVector& u, const ModelSpec& model, double b) {
  const double contact = b * x.G * x.S;
  const double halting = model.variant == Variant::halting ? model.pi * b * x.G * x.Z * u.u_h : 0.0;
  StateRate r;
  r.dZ = contact * u.u_Z + model.gamma * b * x.Z * x.S - halting;
  r.dP = contact * u.u_P + halting;
  r.dS = -(r.dZ + r.dP);
  r.dG = 0.0;
  return r;
}

/// Mean-field right-hand side for one of the three variants.
inline StateRate rhs(const EpidemicState& x, const ControlVector& u, const ModelSpec& model) {
  check_state(x);
  const ControlVector c = admissible_control(u, model.variant);
  return rhs_with_beta(x, c, model, effective_beta(model, x));
}

/// Instantaneous damage f(Z+P) - g(Z).
inline double damage_rate(const EpidemicState& x, const DamageSpec& damage) {
  check_state(x);
  return damage.efficacy(x.Z + x.P) - damage.visibility(x.Z);
}

}  // namespace sgzp
