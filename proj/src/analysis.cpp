#include "faultforge/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

namespace ff {

SequenceSet to_sequence(const PhaseMap<Complex>& phasors, bool zero_pad) {
  Complex abc[3] = {};
  for (Phase p : kAllPhases) {
    auto it = phasors.find(p);
    if (it == phasors.end()) {
      if (!zero_pad)
        throw ValidationError(std::string("to_sequence: missing phase ") + phase_label(p) +
                              " (zero padding not enabled)");
      continue;
    }
    abc[static_cast<int>(p)] = it->second;
  }
  return to_sequence(abc[0], abc[1], abc[2]);
}

PhaseMap<PhasePower> element_power(const PhaseMap<Complex>& v, const PhaseMap<Complex>& i) {
  PhaseMap<PhasePower> out;
  for (const auto& [p, vp] : v) {
    auto it = i.find(p);
    if (it == i.end()) throw ValidationError("element_power: phase sets differ");
    out[p] = element_power(vp, it->second);
  }
  if (i.size() != v.size()) throw ValidationError("element_power: phase sets differ");
  return out;
}

std::vector<double> log_grid(double r_min, double r_max, int n_points) {
  if (!(r_min > 0.0) || !(r_max > r_min) || n_points < 2)
    throw ValidationError("log grid requires 0 < r_min < r_max and n_points >= 2");
  std::vector<double> out(static_cast<size_t>(n_points));
  const double l0 = std::log10(r_min), l1 = std::log10(r_max);
  for (int k = 0; k < n_points; ++k)
    out[static_cast<size_t>(k)] = std::pow(10.0, l0 + (l1 - l0) * k / (n_points - 1));
  out.front() = r_min;
  out.back() = r_max;
  return out;
}

std::vector<double> linear_grid(double r_min, double r_max, int n_points) {
  if (!(r_min > 0.0) || !(r_max > r_min) || n_points < 2)
    throw ValidationError("linear grid requires 0 < r_min < r_max and n_points >= 2");
  std::vector<double> out(static_cast<size_t>(n_points));
  for (int k = 0; k < n_points; ++k)
    out[static_cast<size_t>(k)] = r_min + (r_max - r_min) * k / (n_points - 1);
  return out;
}

std::vector<Phase> default_fault_phases(FaultKind kind) {
  switch (fault_kind_phase_count(kind)) {
    case 1: return {Phase::A};
    case 2: return {Phase::A, Phase::B};
    default: return {Phase::A, Phase::B, Phase::C};
  }
}

FaultSpec make_fault_spec(const std::string& bus, FaultKind kind,
                          const std::vector<Phase>& phases, double r_ohm, double r_ground_ohm,
                          double r_floor_ohm) {
  FaultSpec spec;
  spec.bus = bus;
  spec.kind = kind;
  spec.phases = phases.empty() ? default_fault_phases(kind) : phases;
  std::sort(spec.phases.begin(), spec.phases.end());
  const double r = std::max(r_ohm, r_floor_ohm);
  if (kind == FaultKind::LL) {
    // The swept resistance is the total phase-to-phase value.
    spec.r_phase_ohm.assign(spec.phases.size(), r / 2.0);
  } else {
    spec.r_phase_ohm.assign(spec.phases.size(), r);
  }
  spec.r_ground_ohm = fault_kind_grounded(kind) ? r_ground_ohm : 0.0;
  spec.validate();
  return spec;
}

void SweepPlan::validate(const NetworkModel& model) const {
  if (!model.has_bus(fault_bus))
    throw ValidationError("sweep: unknown fault bus '" + fault_bus + "'");
  if (resistances_ohm.size() < 2)
    throw ValidationError("sweep: grid needs at least 2 points");
  for (double r : resistances_ohm)
    if (!(r > 0.0)) throw ValidationError("sweep: resistances must be positive");
  for (size_t i = 1; i < resistances_ohm.size(); ++i)
    if (!(resistances_ohm[i] > resistances_ohm[i - 1]))
      throw ValidationError("sweep: resistance grid must be strictly increasing");
  if (island_line_id) {
    bool found = std::any_of(model.lines.begin(), model.lines.end(),
                             [&](const Line& ln) { return ln.id == *island_line_id; });
    if (!found) throw ValidationError("sweep: unknown island line '" + *island_line_id + "'");
  }
  const Bus& fb = model.bus(fault_bus);
  for (Phase p : phases.empty() ? default_fault_phases(kind) : phases)
    if (!fb.has_phase(p))
      throw ValidationError(std::string("sweep: fault phase ") + phase_label(p) +
                            " not present at bus '" + fault_bus + "'");
  if (jobs < 1) throw ValidationError("sweep: jobs must be >= 1");
  if (jobs > 1 && warm_start)
    throw ValidationError("sweep: parallel points require warm starting disabled");
}

PrefaultResult prefault_solve(const NetworkModel& model, const SolverConfig& config) {
  AssembleOptions opts;
  opts.eps_comp = config.eps_comp;
  opts.strict_apparent_cap = config.strict_apparent_cap;
  PrefaultResult out{assemble(model, std::nullopt, opts), {}};
  SolverConfig cfg = config;
  cfg.init = InitStrategy::FlatStart;
  cfg.warm_start_point.reset();
  out.solution = solve(out.system, cfg);
  if (out.solution.status != SolveStatus::Feasible)
    throw ValidationError("pre-fault network is not solvable (" +
                          solve_status_name(out.solution.status) +
                          "); check the network configuration");
  return out;
}

NetworkModel apply_prefault_voltages(const NetworkModel& model, const PrefaultResult& prefault) {
  NetworkModel out = model;
  for (GridFormingInverterComplex& inv : out.gfm_complex_inverters) {
    if (inv.status != Status::On) continue;
    for (auto& [p, v0r] : inv.v0_r) {
      const Complex v = prefault.solution.bus_voltage(prefault.system, inv.bus, p);
      v0r = v.real();
      inv.v0_i[p] = v.imag();
    }
  }
  return out;
}

FaultCaseResult solve_fault_case(const NetworkModel& model, const FaultSpec& spec,
                                 const SolverConfig& config,
                                 const std::optional<Eigen::VectorXd>& warm, int ramp_steps,
                                 const std::optional<FaultAdmittance>& warm_admittance) {
  AssembleOptions opts;
  opts.eps_comp = config.eps_comp;
  opts.strict_apparent_cap = config.strict_apparent_cap;
  const BaseSet bases = model.bus_bases(spec.bus);
  FaultAdmittance adm = build_fault_admittance(spec, bases);
  ConstraintSystem system = assemble(model, adm, opts);

  SolverConfig cfg = config;
  if (warm) {
    cfg.init = InitStrategy::WarmStart;
    cfg.warm_start_point = warm;
  } else {
    cfg.init = InitStrategy::FlatStart;
    cfg.warm_start_point.reset();
  }

  SolveResult direct = solve(system, cfg);
  if (direct.status == SolveStatus::Feasible || ramp_steps <= 0)
    return {std::move(system), std::move(direct), std::move(adm)};

  // Continuation fallback. With a warm start whose admittance is known,
  // interpolate from that matrix to the target one; otherwise ramp the
  // conductance up from a light fault. Each stage warm-starts the next.
  const bool homotopy = warm && warm_admittance &&
                        warm_admittance->phases == adm.phases &&
                        warm_admittance->bus == adm.bus;
  SolverConfig stage_cfg = config;
  std::optional<Eigen::VectorXd> carry = warm;
  SolveResult last;
  bool ramp_ok = true;
  int ramp_iterations = 0;
  for (int s = 1; s <= ramp_steps; ++s) {
    const double t = static_cast<double>(s) / ramp_steps;
    FaultAdmittance scaled = adm;
    if (homotopy)
      scaled.conductance =
          warm_admittance->conductance + t * (adm.conductance - warm_admittance->conductance);
    else
      scaled.conductance *= t;
    ConstraintSystem stage = assemble(model, scaled, opts);
    if (carry) {
      stage_cfg.init = InitStrategy::WarmStart;
      stage_cfg.warm_start_point = carry;
    } else {
      stage_cfg.init = InitStrategy::FlatStart;
      stage_cfg.warm_start_point.reset();
    }
    last = solve(stage, stage_cfg);
    ramp_iterations += last.iterations;
    if (last.status != SolveStatus::Feasible) {
      ramp_ok = false;
      break;
    }
    carry = last.x;
  }
  if (ramp_ok) {
    last.iterations = direct.iterations + ramp_iterations;
    return {std::move(system), std::move(last), std::move(adm)};
  }
  return {std::move(system), std::move(direct), std::move(adm)};
}

namespace {

struct InverterView {
  std::string id;
  std::string bus;
  PhaseMap<double> i_max;
  VarKind activation_kind = VarKind::GflActivation;
  bool has_activation = true;
};

std::optional<InverterView> inverter_view(const NetworkModel& model) {
  // The recorded inverter: the first in-service one. Sweeps with a selected
  // model have already opened every other inverter.
  std::vector<InverterView> views;
  for (const auto& inv : model.gfl_inverters)
    if (inv.status == Status::On)
      views.push_back({inv.id, inv.bus, inv.i_max, VarKind::GflActivation, true});
  for (const auto& inv : model.gfm_simple_inverters)
    if (inv.status == Status::On)
      views.push_back({inv.id, inv.bus, inv.i_max, VarKind::GfmSimpleResistance, true});
  for (const auto& inv : model.gfm_complex_inverters)
    if (inv.status == Status::On)
      views.push_back({inv.id, inv.bus, inv.i_max, VarKind::GfmComplexActivation, true});
  if (views.empty()) return std::nullopt;
  return views.front();
}

SweepRow record_row(const NetworkModel& model, const FaultCaseResult& cs, double r_ohm,
                    const std::optional<InverterView>& inv, const SolverConfig& config) {
  SweepRow row;
  row.r_fault_ohm = r_ohm;
  row.status = cs.solution.status;
  row.iterations = cs.solution.iterations;

  const Bus& fb = model.bus(cs.admittance.bus);
  const double i_base = model.bus_bases(cs.admittance.bus).i_base_a();
  const bool usable = cs.solution.x.size() == cs.system.n_vars();
  if (!usable) return row;

  for (Phase p : fb.phases) {
    const Complex v = cs.solution.bus_voltage(cs.system, fb.id, p);
    row.faulted_bus_v_pu[p] = std::abs(v);
    if (cs.admittance.covers(p)) {
      const Complex fi = cs.solution.phasor(cs.system, VarKind::FaultCurrentRe,
                                            VarKind::FaultCurrentIm, fb.id, p);
      row.fault_current_pu[p] = std::abs(fi);
      row.fault_current_a[p] = std::abs(fi) * i_base;
    } else {
      row.fault_current_pu[p] = 0.0;
      row.fault_current_a[p] = 0.0;
    }
  }

  if (inv) {
    PhaseMap<Complex> term_i;
    for (const auto& [p, imax] : inv->i_max) {
      (void)imax;
      const Complex v = cs.solution.bus_voltage(cs.system, inv->bus, p);
      const Complex i = cs.solution.phasor(cs.system, VarKind::ElementCurrentRe,
                                           VarKind::ElementCurrentIm, inv->id, p);
      term_i[p] = i;
      const PhasePower s = element_power(v, i);
      row.inverter_p_pu[p] = s.p;
      row.inverter_q_pu[p] = s.q;
      row.inverter_i_pu[p] = std::abs(i);
      row.inverter_bus_v_pu[p] = std::abs(v);
      if (inv->has_activation)
        row.activation[p] =
            cs.solution.value(cs.system, {inv->activation_kind, inv->id, Port::None, p});
    }
    const SequenceSet seq = to_sequence(term_i, /*zero_pad=*/true);
    row.i0_pu = std::abs(seq.zero);
    row.i1_pu = std::abs(seq.positive);
    row.i2_pu = std::abs(seq.negative);
  }

  if (cs.solution.status != SolveStatus::Feasible) {
    row.infeasibility = classify_infeasibility(cs.solution, cs.system);
  } else if (!check_feasible(cs.system, cs.solution.x, config.eps_eq, config.eps_ineq)) {
    // Defensive: a feasible flag that fails the independent recheck is a bug.
    throw NumericalError("sweep: feasible result failed the residual recheck");
  }
  return row;
}

}  // namespace

SweepResult run_sweep(const NetworkModel& input_model, const SweepPlan& plan,
                      const SolverConfig& config) {
  plan.validate(input_model);

  NetworkModel model = input_model;
  if (plan.inverter_under_test) model = select_inverter_model(model, *plan.inverter_under_test);
  if (plan.island_line_id) model = set_element_status(model, *plan.island_line_id, Status::Open);

  const PrefaultResult prefault = prefault_solve(model, config);
  model = apply_prefault_voltages(model, prefault);

  const std::vector<Phase> phases =
      plan.phases.empty() ? default_fault_phases(plan.kind) : plan.phases;
  const std::optional<InverterView> inv = inverter_view(model);

  SweepResult result;
  result.plan = plan;
  result.fault_phases = phases;
  result.rows.resize(plan.resistances_ohm.size());

  auto spec_for = [&](double r) {
    return make_fault_spec(plan.fault_bus, plan.kind, phases, r, plan.r_ground_ohm,
                           /*r_floor_ohm=*/0.0);
  };

  if (plan.warm_start) {
    // Sequential, mildest fault first: descend the grid, seeding each solve
    // from its neighbor. Curves are continuous in the fault resistance, so
    // this is a natural continuation. The first point seeds from the
    // pre-fault solution.
    AssembleOptions opts;
    opts.eps_comp = config.eps_comp;
    opts.strict_apparent_cap = config.strict_apparent_cap;
    std::optional<Eigen::VectorXd> carry = prefault.solution.x;
    std::optional<ConstraintSystem> carry_system = prefault.system;
    std::optional<FaultAdmittance> carry_admittance;
    for (size_t k = plan.resistances_ohm.size(); k-- > 0;) {
      const double r = plan.resistances_ohm[k];
      const FaultSpec spec = spec_for(r);
      FaultAdmittance adm = build_fault_admittance(spec, model.bus_bases(plan.fault_bus));
      ConstraintSystem next = assemble(model, adm, opts);
      const Eigen::VectorXd warm = transfer_solution(*carry_system, *carry, next);
      FaultCaseResult cs =
          solve_fault_case(model, spec, config, warm, plan.fault_ramp_steps, carry_admittance);
      result.rows[k] = record_row(model, cs, r, inv, config);
      if (cs.solution.status == SolveStatus::Feasible) {
        carry = cs.solution.x;
        carry_system = std::move(cs.system);
        carry_admittance = std::move(cs.admittance);
      }
    }
  } else {
    const int jobs = std::max(1, plan.jobs);
    std::vector<std::thread> pool;
    std::atomic<size_t> cursor{0};
    auto work = [&] {
      for (;;) {
        const size_t k = cursor.fetch_add(1);
        if (k >= plan.resistances_ohm.size()) return;
        const double r = plan.resistances_ohm[k];
        FaultCaseResult cs =
            solve_fault_case(model, spec_for(r), config, std::nullopt, plan.fault_ramp_steps);
        result.rows[k] = record_row(model, cs, r, inv, config);
      }
    };
    if (jobs == 1) {
      work();
    } else {
      for (int t = 0; t < jobs; ++t) pool.emplace_back(work);
      for (auto& th : pool) th.join();
    }
  }

  return result;
}

namespace {

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

double get_or_zero(const PhaseMap<double>& m, Phase p) {
  auto it = m.find(p);
  return it == m.end() ? 0.0 : it->second;
}

}  // namespace

std::string sweep_to_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "r_fault_ohm,status,iters";
  const char* cols[] = {"If_A", "If_pu", "V_pu", "P_pu", "Q_pu"};
  for (const char* col : cols)
    for (Phase p : kAllPhases) out << "," << phase_label(p) << "_" << col;
  out << ",I0_pu,I1_pu,I2_pu\n";

  for (const SweepRow& row : result.rows) {
    out << fmt_num(row.r_fault_ohm) << "," << solve_status_name(row.status) << ","
        << row.iterations;
    const PhaseMap<double>* maps[] = {&row.fault_current_a, &row.fault_current_pu,
                                      &row.faulted_bus_v_pu, &row.inverter_p_pu,
                                      &row.inverter_q_pu};
    for (const auto* m : maps)
      for (Phase p : kAllPhases) out << "," << fmt_num(get_or_zero(*m, p));
    out << "," << fmt_num(row.i0_pu) << "," << fmt_num(row.i1_pu) << ","
        << fmt_num(row.i2_pu) << "\n";
  }
  return out.str();
}

}  // namespace ff
