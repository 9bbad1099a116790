#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "faultforge/fault.hpp"
#include "faultforge/network.hpp"

namespace ff {

/// Independent verifier for networks whose in-service elements are all
/// linear: reference sources, lines, transformers, shunts, and a fault
/// admittance. Deliberately shares no assembly code with the formulation
/// module; agreement between the two is evidence, not tautology.
///
/// Layout: one complex unknown per (bus, phase) node, then one per
/// transformer phase (the to-side current, which rigid ratio constraints
/// require as an explicit unknown). Source EMFs enter as Norton injections.
struct NodalSystem {
  Eigen::MatrixXcd admittance;   // square, nodes + transformer rows
  Eigen::VectorXcd injection;
  std::map<std::pair<std::string, Phase>, int> node_index;
  int n_nodes = 0;  // leading block; remaining rows are transformer ratios

  // Bookkeeping for current recovery after the solve.
  const NetworkModel* model = nullptr;
  std::optional<FaultAdmittance> fault;
};

/// Stamps the nodal system. Throws ValidationError if any generator or
/// inverter is in service, or a source has zero internal impedance.
NodalSystem build_nodal(const NetworkModel& model,
                        const std::optional<FaultAdmittance>& fault = std::nullopt);

struct NodalSolution {
  std::map<std::pair<std::string, Phase>, Complex> voltage;      // per node, pu
  std::map<std::pair<std::string, Phase>, Complex> line_current;     // keyed by line id, from->to
  std::map<std::pair<std::string, Phase>, Complex> source_current;   // into the bus
  std::map<std::pair<std::string, Phase>, Complex> transformer_current;  // from-side
  std::map<Phase, Complex> fault_current;
  double residual_inf = 0.0;  // |Y v - i|_inf after the solve
};

/// Direct dense complex solve. Throws NumericalError on a singular matrix
/// (a floating subnetwork without any source).
NodalSolution solve_nodal(const NodalSystem& system);

}  // namespace ff
