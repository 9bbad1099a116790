#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "faultforge/network.hpp"

namespace ff {

enum class FaultKind { LG, LL, LLG, ThreePhase, ThreePhaseGround };

std::string fault_kind_name(FaultKind k);
FaultKind fault_kind_from_name(const std::string& name);
bool fault_kind_grounded(FaultKind k);
int fault_kind_phase_count(FaultKind k);

/// A fault scenario attached to a bus. Resistances are in ohms; conversion
/// to per-unit happens when the admittance matrix is built.
struct FaultSpec {
  std::string bus;
  FaultKind kind = FaultKind::LG;
  std::vector<Phase> phases;       // involved phases, sorted, no repeats
  std::vector<double> r_phase_ohm; // one per involved phase, > 0
  double r_ground_ohm = 0.0;       // grounded kinds only

  void validate() const;  // throws ValidationError
};

FaultSpec parse_fault_spec(const std::string& json_text);
std::string serialize_fault_spec(const FaultSpec& spec);

/// Phase-domain conductance matrix of a fault, per-unit, indexed by the
/// involved phases in `phases` order.
struct FaultAdmittance {
  std::string bus;
  std::vector<Phase> phases;
  Eigen::MatrixXd conductance;  // symmetric, diagonally dominant

  bool covers(Phase p) const;
  int index_of(Phase p) const;  // -1 if absent
};

/// Builds the per-unit fault conductance matrix. Inter-phase and ground
/// resistances form a star through an internal node; the internal node is
/// eliminated by Kron reduction, which is the star-mesh transformation in
/// matrix form. Throws ValidationError on zero phase resistance or a
/// degenerate (all-zero-conductance) star.
FaultAdmittance build_fault_admittance(const FaultSpec& spec, const BaseSet& bases);

/// I = G V applied separately to the real and imaginary voltage parts.
/// Input and output vectors are ordered like admittance.phases.
struct RectangularPhasors {
  Eigen::VectorXd re;
  Eigen::VectorXd im;
};

RectangularPhasors fault_current_injection(const FaultAdmittance& admittance,
                                           const RectangularPhasors& bus_voltage);

}  // namespace ff
