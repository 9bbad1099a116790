#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "faultforge/formulation.hpp"

namespace ff {

enum class InitStrategy { FlatStart, WarmStart };

struct TraceRecord {
  int attempt = 0;
  int iteration = 0;
  double merit = 0.0;
  double eq_norm_inf = 0.0;
  double max_violation = 0.0;
  double damping = 0.0;
};

struct SolverConfig {
  double eps_eq = 1e-8;
  double eps_ineq = 1e-8;
  double eps_comp = 1e-6;  // forwarded into AssembleOptions by callers
  bool strict_apparent_cap = false;  // ditto: GFM-complex quadratic power cap
  int max_iterations = 200;
  InitStrategy init = InitStrategy::FlatStart;
  std::optional<Eigen::VectorXd> warm_start_point;

  // Damping / stagnation schedule of the least-squares iteration.
  // Equality rows are weighted harder than limit rows so that terminal
  // violations of hopeless problems land on the limits that block them.
  double equality_emphasis = 3.0;
  double damping_init = 1e-4;
  double damping_decrease = 0.25;
  double damping_increase = 8.0;
  double damping_max = 1e12;
  int stagnation_window = 20;
  double stagnation_rtol = 1e-10;

  int restarts = 3;  // jittered attempts after the first, seeds 1..restarts

  // Probe the unsaturated branch first: one attempt with every activation
  // variable pinned at zero. Inverters act as plain sources until the pinned
  // problem turns infeasible, which matches their intended semantics and
  // keeps sweep solutions on the natural branch.
  bool pin_activations_first = true;

  std::function<void(const TraceRecord&)> trace;  // optional per-iteration sink
};

SolverConfig load_solver_config(const std::string& json_text);

enum class SolveStatus { Feasible, Infeasible, IterationLimit };

std::string solve_status_name(SolveStatus s);

struct ConstraintViolation {
  std::string name;
  double value = 0.0;  // |residual| for equalities, max(0, g) for inequalities
};

/// Attached to non-feasible results: where the violation minimization ended.
struct InfeasibilityCertificate {
  double merit = 0.0;  // minimized violation measure at termination
  double eq_norm_inf = 0.0;
  double max_violation = 0.0;
  std::vector<ConstraintViolation> worst;  // descending
};

struct SolveResult {
  SolveStatus status = SolveStatus::Infeasible;
  Eigen::VectorXd x;
  double eq_norm_inf = 0.0;
  double max_violation = 0.0;
  int iterations = 0;  // total across attempts
  int attempts = 0;
  std::vector<std::string> active_set;  // tight caps and bounds
  std::optional<InfeasibilityCertificate> certificate;
  double elapsed_ms = 0.0;

  double value(const ConstraintSystem& system, const VariableKey& key) const;
  Complex phasor(const ConstraintSystem& system, VarKind re_kind, VarKind im_kind,
                 const std::string& owner, Phase phase, Port port = Port::None) const;
  Complex bus_voltage(const ConstraintSystem& system, const std::string& bus,
                      Phase phase) const;
};

/// Starting point for a solve. Flat start: nominal balanced voltage phasors,
/// zero currents and activations, generator powers at setpoints. Warm start
/// copies a prior solution and requires an identical variable layout.
Eigen::VectorXd initial_point(const ConstraintSystem& system, const SolverConfig& config);

/// Copies values of variables common to both layouts; everything else is
/// taken from the destination's flat start.
Eigen::VectorXd transfer_solution(const ConstraintSystem& from, const Eigen::VectorXd& x,
                                  const ConstraintSystem& to);

/// Feasibility solve: damped least-squares (Levenberg-Marquardt) on the
/// merit 1/2|c_eq|^2 + 1/2|max(0, c_ineq)|^2 with variable bounds handled by
/// projection, restarted from jittered starts before declaring infeasible.
/// Deterministic for a given system and config. Infeasible means every
/// attempt stagnated; attempts that ran out of iterations while still
/// improving yield IterationLimit instead.
SolveResult solve(const ConstraintSystem& system, const SolverConfig& config = {});

/// Independent feasibility re-check of a result through the formulation's
/// residual path (not the solver's internal bookkeeping).
bool check_feasible(const ConstraintSystem& system, const Eigen::VectorXd& x,
                    double eps_eq, double eps_ineq);

struct FamilyViolation {
  Family family;
  double mass = 0.0;  // sum of violation magnitudes in the family
  std::vector<ConstraintViolation> worst;
};

struct InfeasibilityReport {
  std::vector<FamilyViolation> families;  // ranked by descending mass
};

/// Groups terminal violations of a non-feasible result by constraint family.
/// Throws ValidationError when called on a feasible result.
InfeasibilityReport classify_infeasibility(const SolveResult& result,
                                           const ConstraintSystem& system);

}  // namespace ff
