#pragma once

#include "faultforge/errors.hpp"

namespace ff {

/// Normalizes a physical quantity by a positive base.
inline double to_per_unit(double value, double base) {
  if (!(base > 0.0)) throw ValidationError("per-unit base must be positive");
  return value / base;
}

/// Inverse of to_per_unit.
inline double from_per_unit(double value, double base) {
  if (!(base > 0.0)) throw ValidationError("per-unit base must be positive");
  return value * base;
}

/// Per-bus base set. v_base is the line-to-neutral voltage base in volts,
/// s_base the system power base in volt-amps. Derived bases follow the
/// usual single-phase relations.
struct BaseSet {
  double v_base_v = 0.0;
  double s_base_va = 0.0;

  double z_base_ohm() const { return v_base_v * v_base_v / s_base_va; }
  double i_base_a() const { return s_base_va / v_base_v; }
};

}  // namespace ff
