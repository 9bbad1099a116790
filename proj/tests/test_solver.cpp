#include <doctest.h>

#include <cstring>

#include <faultforge/analysis.hpp>
#include <faultforge/nodal.hpp>
#include <faultforge/solver.hpp>

#include "support/model_builders.hpp"
#include "support/paths.hpp"
#include "support/random_networks.hpp"

using namespace ff;

TEST_CASE("single-bus source solves to the setpoint") {
  const NetworkModel m = fftest::single_bus_source(0.98);
  const ConstraintSystem sys = assemble(m);
  const SolveResult res = solve(sys);
  REQUIRE(res.status == SolveStatus::Feasible);
  for (Phase p : kAllPhases) {
    const Complex v = res.bus_voltage(sys, "b1", p);
    const Complex e = m.sources[0].emf(p);
    CHECK(std::abs(v - e) < 1e-8);
    const Complex i = res.phasor(sys, VarKind::ElementCurrentRe, VarKind::ElementCurrentIm,
                                 "src", p);
    CHECK(std::abs(i) < 1e-8);
  }
  CHECK(check_feasible(sys, res.x, 1e-8, 1e-8));
}

TEST_CASE("line-to-ground divider matches the hand computation") {
  const NetworkModel m = fftest::two_bus_divider(0.05, 0.1);
  FaultSpec spec{"fault_bus", FaultKind::LG, {Phase::A}, {0.02}, 0.01};
  const FaultAdmittance adm = build_fault_admittance(spec, m.bus_bases("fault_bus"));
  const ConstraintSystem sys = assemble(m, adm);
  const SolveResult res = solve(sys);
  REQUIRE(res.status == SolveStatus::Feasible);

  // Two-impedance divider on phase A: V = E zf / (zsrc + zline + zf).
  const Complex e = m.sources[0].emf(Phase::A);
  const Complex z_src(0.01, 0.05), z_line(0.05, 0.1);
  const double z_base = m.bus_bases("fault_bus").z_base_ohm();
  const Complex z_f((0.02 + 0.01) / z_base, 0.0);
  const Complex v_expected = e * z_f / (z_src + z_line + z_f);
  const Complex i_expected = e / (z_src + z_line + z_f);

  CHECK(std::abs(res.bus_voltage(sys, "fault_bus", Phase::A) - v_expected) < 1e-6);
  const Complex i_line = res.phasor(sys, VarKind::ElementCurrentRe, VarKind::ElementCurrentIm,
                                    "feeder", Phase::A);
  CHECK(std::abs(i_line - i_expected) < 1e-6);

  // Unfaulted phases carry no current.
  CHECK(std::abs(res.phasor(sys, VarKind::ElementCurrentRe, VarKind::ElementCurrentIm, "feeder",
                            Phase::B)) < 1e-8);
  CHECK(std::abs(res.bus_voltage(sys, "fault_bus", Phase::C) -
                 m.sources[0].emf(Phase::C)) < 1e-8);
}

TEST_CASE("randomized linear networks agree with the nodal oracle") {
  for (unsigned seed = 100; seed < 106; ++seed) {
    const fftest::RandomCase rc = fftest::random_linear_case(seed);
    const FaultAdmittance adm =
        build_fault_admittance(rc.fault, rc.model.bus_bases(rc.fault.bus));
    const NodalSolution oracle = solve_nodal(build_nodal(rc.model, adm));

    const ConstraintSystem sys = assemble(rc.model, adm);
    const SolveResult res = solve(sys);
    REQUIRE(res.status == SolveStatus::Feasible);
    for (const auto& [key, v] : oracle.voltage)
      CHECK(std::abs(res.bus_voltage(sys, key.first, key.second) - v) < 1e-6);
    for (const auto& [key, i] : oracle.line_current)
      CHECK(std::abs(res.phasor(sys, VarKind::ElementCurrentRe, VarKind::ElementCurrentIm,
                                key.first, key.second) -
                     i) < 1e-6);
  }
}

TEST_CASE("identical runs are bit-identical") {
  const NetworkModel m = load_network(fixture_path("case4_pv.json"));
  FaultSpec spec{"Load", FaultKind::LG, {Phase::A}, {0.1}, 0.0};
  const FaultAdmittance adm = build_fault_admittance(spec, m.bus_bases("Load"));
  const ConstraintSystem sys = assemble(m, adm);
  const SolveResult r1 = solve(sys);
  const SolveResult r2 = solve(sys);
  REQUIRE(r1.status == r2.status);
  REQUIRE(r1.x.size() == r2.x.size());
  CHECK(std::memcmp(r1.x.data(), r2.x.data(), sizeof(double) * r1.x.size()) == 0);
  CHECK(r1.iterations == r2.iterations);
}

TEST_CASE("warm start from a neighboring solution converges at least as fast") {
  const NetworkModel model = load_network(fixture_path("case4_pv.json"));
  auto system_at = [&](double r) {
    FaultSpec spec = make_fault_spec("Load", FaultKind::ThreePhaseGround, {}, r, 0.0);
    return assemble(model, build_fault_admittance(spec, model.bus_bases("Load")));
  };

  const SolveResult at_1 = solve(system_at(1.0));
  REQUIRE(at_1.status == SolveStatus::Feasible);

  const ConstraintSystem near = system_at(0.9);
  const SolveResult cold = solve(near);
  SolverConfig warm_cfg;
  warm_cfg.init = InitStrategy::WarmStart;
  warm_cfg.warm_start_point = at_1.x;  // same variable table along the sweep
  const SolveResult warm = solve(near, warm_cfg);
  REQUIRE(cold.status == SolveStatus::Feasible);
  REQUIRE(warm.status == SolveStatus::Feasible);
  CHECK(warm.iterations <= cold.iterations);
}

TEST_CASE("warm start with a mismatched table is an error") {
  const NetworkModel m1 = fftest::single_bus_source();
  const NetworkModel m2 = fftest::two_bus_divider();
  const ConstraintSystem s1 = assemble(m1);
  const ConstraintSystem s2 = assemble(m2);
  const SolveResult r1 = solve(s1);
  SolverConfig cfg;
  cfg.init = InitStrategy::WarmStart;
  cfg.warm_start_point = r1.x;
  CHECK_THROWS_AS(initial_point(s2, cfg), ValidationError);
  SolverConfig no_point;
  no_point.init = InitStrategy::WarmStart;
  CHECK_THROWS_AS(initial_point(s1, no_point), ValidationError);
}

TEST_CASE("transfer_solution maps shared variables and flat-starts the rest") {
  const NetworkModel m = load_network(fixture_path("case4_pv.json"));
  const ConstraintSystem base = assemble(m);
  const SolveResult pre = solve(base);
  REQUIRE(pre.status == SolveStatus::Feasible);

  FaultSpec spec{"Load", FaultKind::LG, {Phase::A}, {0.5}, 0.0};
  const FaultAdmittance adm = build_fault_admittance(spec, m.bus_bases("Load"));
  const ConstraintSystem faulted = assemble(m, adm);
  const Eigen::VectorXd warm = transfer_solution(base, pre.x, faulted);
  CHECK(warm.size() == faulted.n_vars());
  CHECK(warm[faulted.vars.require({VarKind::BusVoltageRe, "PV", Port::None, Phase::A})] ==
        pre.x[base.vars.require({VarKind::BusVoltageRe, "PV", Port::None, Phase::A})]);
  CHECK(warm[faulted.vars.require({VarKind::FaultCurrentRe, "Load", Port::None, Phase::A})] ==
        0.0);
}

TEST_CASE("contradictory voltage bounds are classified as voltage-magnitude") {
  NetworkModel m = fftest::single_bus_source(1.0);
  m.buses[0].v_min_sq = 4.0;  // requires |V| >= 2 while the source pins |V| = 1
  m.buses[0].v_max_sq = 9.0;
  const ConstraintSystem sys = assemble(m);
  const SolveResult res = solve(sys);
  REQUIRE(res.status == SolveStatus::Infeasible);
  REQUIRE(res.certificate.has_value());
  CHECK(res.certificate->max_violation > 1e-3);

  const InfeasibilityReport report = classify_infeasibility(res, sys);
  REQUIRE(!report.families.empty());
  CHECK(report.families.front().family == Family::VoltageMagnitude);
}

TEST_CASE("classify_infeasibility rejects feasible results") {
  const NetworkModel m = fftest::single_bus_source();
  const ConstraintSystem sys = assemble(m);
  const SolveResult res = solve(sys);
  REQUIRE(res.status == SolveStatus::Feasible);
  CHECK_THROWS_AS(classify_infeasibility(res, sys), ValidationError);
}

TEST_CASE("iteration cap yields IterationLimit, never silent infeasibility") {
  const NetworkModel m = load_network(fixture_path("case4_pv.json"));
  FaultSpec spec{"Load", FaultKind::ThreePhaseGround, {Phase::A, Phase::B, Phase::C},
                 {0.001, 0.001, 0.001}, 0.0};
  const FaultAdmittance adm = build_fault_admittance(spec, m.bus_bases("Load"));
  const ConstraintSystem sys = assemble(m, adm);
  SolverConfig cfg;
  cfg.max_iterations = 1;
  cfg.restarts = 0;
  const SolveResult res = solve(sys, cfg);
  CHECK(res.status == SolveStatus::IterationLimit);
  REQUIRE(res.certificate.has_value());
  CHECK(res.certificate->worst.size() > 0);
}

TEST_CASE("a zero-conductance fault reproduces the unfaulted solution") {
  const NetworkModel m = load_network(fixture_path("case4_pv.json"));
  const ConstraintSystem base = assemble(m);
  const SolveResult plain = solve(base);
  REQUIRE(plain.status == SolveStatus::Feasible);

  FaultAdmittance zero;
  zero.bus = "Load";
  zero.phases = {Phase::A, Phase::B, Phase::C};
  zero.conductance = Eigen::MatrixXd::Zero(3, 3);
  const ConstraintSystem faulted = assemble(m, zero);
  const SolveResult with_zero = solve(faulted);
  REQUIRE(with_zero.status == SolveStatus::Feasible);

  for (const VariableKey& key : base.vars.keys) {
    const double a = plain.x[base.vars.require(key)];
    const double b = with_zero.x[faulted.vars.require(key)];
    CHECK(std::abs(a - b) < 1e-6);
  }
  for (Phase p : kAllPhases)
    CHECK(std::abs(with_zero.phasor(faulted, VarKind::FaultCurrentRe, VarKind::FaultCurrentIm,
                                    "Load", p)) < 1e-8);
}

TEST_CASE("feasible results pass the independent recheck and report actives") {
  const NetworkModel m = load_network(fixture_path("case4_pv.json"));
  FaultSpec spec = make_fault_spec("Load", FaultKind::ThreePhaseGround, {}, 1e-3, 0.0);
  const FaultAdmittance adm = build_fault_admittance(spec, m.bus_bases("Load"));
  const ConstraintSystem sys = assemble(m, adm);
  SolverConfig cfg;
  const SolveResult res = solve(sys, cfg);
  REQUIRE(res.status == SolveStatus::Feasible);
  CHECK(check_feasible(sys, res.x, cfg.eps_eq, cfg.eps_ineq));

  // The grid-following inverter saturates on a bolted three-phase fault:
  // the current caps are tight.
  int caps_active = 0;
  for (const std::string& name : res.active_set)
    if (name.rfind("gfl_cap", 0) == 0) ++caps_active;
  CHECK(caps_active == 3);
}

TEST_CASE("solver trace streams per-iteration records") {
  const NetworkModel m = fftest::two_bus_divider();
  FaultSpec spec{"fault_bus", FaultKind::LG, {Phase::A}, {0.05}, 0.0};
  const FaultAdmittance adm = build_fault_admittance(spec, m.bus_bases("fault_bus"));
  const ConstraintSystem sys = assemble(m, adm);
  SolverConfig cfg;
  std::vector<TraceRecord> records;
  cfg.trace = [&](const TraceRecord& t) { records.push_back(t); };
  const SolveResult res = solve(sys, cfg);
  REQUIRE(res.status == SolveStatus::Feasible);
  CHECK(!records.empty());
  for (size_t i = 1; i < records.size(); ++i)
    CHECK(records[i].iteration == records[i - 1].iteration + 1);
}

TEST_CASE("solver config parses from JSON and validates") {
  const SolverConfig cfg = load_solver_config(
      R"({"eps_eq": 1e-9, "max_iterations": 50, "restarts": 1})");
  CHECK(cfg.eps_eq == 1e-9);
  CHECK(cfg.max_iterations == 50);
  CHECK(cfg.restarts == 1);
  CHECK(cfg.eps_ineq == 1e-8);  // untouched default
  CHECK_THROWS_AS(load_solver_config(R"({"eps_eq": -1})"), ValidationError);
  CHECK_THROWS_AS(load_solver_config("amok"), ParseError);
}
