#pragma once

#include <array>
#include <complex>
#include <optional>

#include "faultforge/errors.hpp"
#include "faultforge/network.hpp"

namespace ff {

/// Zero/positive/negative symmetrical components of a three-phase set.
struct SequenceSet {
  Complex zero;
  Complex positive;
  Complex negative;
};

namespace detail {
inline Complex fortescue_a() { return std::polar(1.0, 2.0 * 3.14159265358979323846 / 3.0); }
}

/// Fortescue transform with operator a = exp(j 2pi/3).
inline SequenceSet to_sequence(Complex a_ph, Complex b_ph, Complex c_ph) {
  const Complex a = detail::fortescue_a();
  const Complex a2 = a * a;
  return SequenceSet{
      (a_ph + b_ph + c_ph) / 3.0,
      (a_ph + a * b_ph + a2 * c_ph) / 3.0,
      (a_ph + a2 * b_ph + a * c_ph) / 3.0,
  };
}

/// Transform of a possibly incomplete phase set. Missing phases are treated
/// as zero only when zero_pad is set; otherwise they are an error.
SequenceSet to_sequence(const PhaseMap<Complex>& phasors, bool zero_pad = false);

/// Inverse Fortescue transform: phase A, B, C from sequence components.
inline std::array<Complex, 3> from_sequence(const SequenceSet& s) {
  const Complex a = detail::fortescue_a();
  const Complex a2 = a * a;
  return {
      s.zero + s.positive + s.negative,
      s.zero + a2 * s.positive + a * s.negative,
      s.zero + a * s.positive + a2 * s.negative,
  };
}

/// P = Vr Ir + Vi Ii, Q = Vi Ir - Vr Ii; the rectangular form of S = V conj(I).
struct PhasePower {
  double p = 0.0;
  double q = 0.0;
};

inline PhasePower element_power(Complex v, Complex i) {
  return {v.real() * i.real() + v.imag() * i.imag(),
          v.imag() * i.real() - v.real() * i.imag()};
}

PhaseMap<PhasePower> element_power(const PhaseMap<Complex>& v, const PhaseMap<Complex>& i);

}  // namespace ff
