#pragma once

#include <optional>
#include <string>
#include <vector>

#include "faultforge/fault.hpp"
#include "faultforge/network.hpp"
#include "faultforge/sequence.hpp"
#include "faultforge/solver.hpp"

namespace ff {

/// A fault-impedance sweep: the fault template (resistance left open), a
/// strictly increasing resistance grid in ohms, the inverter model under
/// test, and optional islanding by opening one line.
struct SweepPlan {
  std::string fault_bus;
  FaultKind kind = FaultKind::ThreePhaseGround;
  std::vector<Phase> phases;          // empty: defaults for the kind
  std::vector<double> resistances_ohm;  // strictly increasing, > 0
  double r_ground_ohm = 0.0;
  std::optional<InverterModel> inverter_under_test;
  std::optional<std::string> island_line_id;
  bool warm_start = true;   // sequential sweep, seeded from the previous point
  int jobs = 1;             // parallel points allowed only without warm start
  int fault_ramp_steps = 6; // conductance continuation fallback per point

  void validate(const NetworkModel& model) const;
};

/// Log-spaced grid helper (n >= 2, endpoints included).
std::vector<double> log_grid(double r_min, double r_max, int n_points);
std::vector<double> linear_grid(double r_min, double r_max, int n_points);

struct SweepRow {
  double r_fault_ohm = 0.0;
  SolveStatus status = SolveStatus::Infeasible;
  int iterations = 0;
  PhaseMap<double> fault_current_a;
  PhaseMap<double> fault_current_pu;
  PhaseMap<double> faulted_bus_v_pu;
  PhaseMap<double> inverter_p_pu;   // inverter under test
  PhaseMap<double> inverter_q_pu;
  double i0_pu = 0.0;  // sequence currents at the inverter terminal
  double i1_pu = 0.0;
  double i2_pu = 0.0;

  // Extra record fields beyond the CSV columns, used by checks and tests.
  PhaseMap<double> inverter_i_pu;         // terminal current magnitude
  PhaseMap<double> inverter_bus_v_pu;     // terminal voltage magnitude
  PhaseMap<double> activation;            // z or r of the inverter under test
  std::optional<InfeasibilityReport> infeasibility;
};

struct SweepResult {
  SweepPlan plan;
  std::vector<Phase> fault_phases;  // resolved involved phases
  std::vector<SweepRow> rows;       // one per grid point, ascending resistance
};

/// Solves the unfaulted system from a flat start. A non-feasible outcome is
/// a configuration error (thrown), distinct from fault infeasibility.
struct PrefaultResult {
  ConstraintSystem system;
  SolveResult solution;
};
PrefaultResult prefault_solve(const NetworkModel& model, const SolverConfig& config = {});

/// Writes the solved bus voltage phasors into every in-service GFM-complex
/// inverter's pre-fault voltage fields. Returns a new model.
NetworkModel apply_prefault_voltages(const NetworkModel& model, const PrefaultResult& prefault);

/// One fault scenario: assemble and solve, with warm start and, when the
/// direct attempt fails, a conductance-continuation fallback.
struct FaultCaseResult {
  ConstraintSystem system;
  SolveResult solution;
  FaultAdmittance admittance;
};
FaultCaseResult solve_fault_case(const NetworkModel& model, const FaultSpec& spec,
                                 const SolverConfig& config,
                                 const std::optional<Eigen::VectorXd>& warm = std::nullopt,
                                 int ramp_steps = 6,
                                 const std::optional<FaultAdmittance>& warm_admittance = std::nullopt);

/// Runs the sweep protocol: pre-fault solve, GFM-complex voltage seeding,
/// then one solve per resistance. Infeasible points are recorded, never
/// fatal. Rows are ordered by ascending resistance.
SweepResult run_sweep(const NetworkModel& model, const SweepPlan& plan,
                      const SolverConfig& config = {});

/// CSV emission: one header row, then one row per sweep point. Columns:
/// r_fault_ohm, status, iters, {phase}_If_A, {phase}_If_pu, {phase}_V_pu,
/// {phase}_P_pu, {phase}_Q_pu, I0_pu, I1_pu, I2_pu.
std::string sweep_to_csv(const SweepResult& result);

/// Default involved phases for a fault kind (A / A,B / A,B,C).
std::vector<Phase> default_fault_phases(FaultKind kind);

/// Builds a FaultSpec from sweep plan fields and one resistance value.
/// For LL the resistance is the total phase-to-phase value, split evenly
/// across the two legs; for all other kinds it is the per-phase value.
FaultSpec make_fault_spec(const std::string& bus, FaultKind kind,
                          const std::vector<Phase>& phases, double r_ohm,
                          double r_ground_ohm, double r_floor_ohm = 1e-4);

}  // namespace ff
