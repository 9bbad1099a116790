#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "faultforge/analysis.hpp"
#include "faultforge/nodal.hpp"
#include "faultforge/svg.hpp"

using nlohmann::ordered_json;
using namespace ff;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitInternal = 3;

struct CommonOptions {
  std::string network_path;
  bool lenient = false;
  bool verbose = false;
  std::optional<std::string> island_line;
  std::optional<std::string> inverter;
  std::optional<std::string> config_path;
  double r_floor_ohm = 1e-4;
  bool strict_smax = false;
  int ramp_steps = 6;
  std::optional<double> eps_eq, eps_ineq, eps_comp;
  std::optional<int> max_iter, restarts;
};

struct FaultOptions {
  std::string kind = "3phg";
  std::string bus;
  std::vector<std::string> phases;
  double r_ohm = 0.0;  // 0 means bolted: the floor resistance applies
  double rg_ohm = 0.0;
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool network_required = true) {
  auto* net = cmd->add_option("--network", opt.network_path, "network JSON file");
  if (network_required) net->required();
  cmd->add_flag("--lenient", opt.lenient, "tolerate unknown keys in the network file");
  cmd->add_flag("-v,--verbose", opt.verbose, "chatty progress and active-set reporting");
  cmd->add_option("--island", opt.island_line, "open this line id before any computation");
  cmd->add_option("--inverter", opt.inverter,
                  "inverter model under test: gfl | gfm_simple | gfm_complex "
                  "(opens every other inverter)");
  cmd->add_option("--config", opt.config_path,
                  "solver config JSON (defaults to $FAULTFORGE_CONFIG when set)");
  cmd->add_option("--r-floor", opt.r_floor_ohm,
                  "floor resistance in ohms substituted for bolted faults");
  cmd->add_flag("--strict-smax", opt.strict_smax,
                "use the quadratic apparent-power cap P^2+Q^2 <= S^2 for GFM-complex");
  cmd->add_option("--ramp-steps", opt.ramp_steps,
                  "conductance continuation stages when a direct solve fails");
  cmd->add_option("--eps-eq", opt.eps_eq, "equality tolerance (default 1e-8)");
  cmd->add_option("--eps-ineq", opt.eps_ineq, "inequality tolerance (default 1e-8)");
  cmd->add_option("--eps-comp", opt.eps_comp, "complementarity relaxation (default 1e-6)");
  cmd->add_option("--max-iter", opt.max_iter, "iteration cap per attempt (default 200)");
  cmd->add_option("--restarts", opt.restarts, "jittered restarts before giving up (default 3)");
}

void add_fault_flags(CLI::App* cmd, FaultOptions& opt, bool required = true) {
  auto* kind = cmd->add_option("--fault", opt.kind, "fault kind: lg | ll | llg | 3ph | 3phg");
  auto* bus = cmd->add_option("--bus", opt.bus, "faulted bus id");
  if (required) {
    kind->required();
    bus->required();
  }
  cmd->add_option("--phase", opt.phases,
                  "involved phase letter, repeatable (defaults: A / A,B / A,B,C)");
  cmd->add_option("--r", opt.r_ohm,
                  "fault resistance in ohms; per phase leg, except ll where it is the total "
                  "phase-to-phase value; 0 = bolted (floor applies)");
  cmd->add_option("--rg", opt.rg_ohm, "ground resistance in ohms (grounded kinds)");
}

SolverConfig make_config(const CommonOptions& opt) {
  SolverConfig cfg;
  std::optional<std::string> path = opt.config_path;
  if (!path) {
    if (const char* env = std::getenv("FAULTFORGE_CONFIG")) path = std::string(env);
  }
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ParseError("cannot open solver config '" + *path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    cfg = load_solver_config(buf.str());
  }
  if (opt.eps_eq) cfg.eps_eq = *opt.eps_eq;
  if (opt.eps_ineq) cfg.eps_ineq = *opt.eps_ineq;
  if (opt.eps_comp) cfg.eps_comp = *opt.eps_comp;
  if (opt.max_iter) cfg.max_iterations = *opt.max_iter;
  if (opt.restarts) cfg.restarts = *opt.restarts;
  if (opt.strict_smax) cfg.strict_apparent_cap = true;
  return cfg;
}

NetworkModel load_model(const CommonOptions& opt) {
  NetworkModel model = load_network(opt.network_path, !opt.lenient);
  if (opt.inverter) model = select_inverter_model(model, inverter_model_from_name(*opt.inverter));
  if (opt.island_line) model = set_element_status(model, *opt.island_line, Status::Open);
  return model;
}

std::vector<Phase> parse_phases(const std::vector<std::string>& raw) {
  std::vector<Phase> out;
  for (const std::string& s : raw) {
    if (s.size() != 1) throw ValidationError("bad phase '" + s + "'");
    out.push_back(phase_from_label(s[0]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

FaultSpec make_spec(const FaultOptions& fopt, double r_floor) {
  return make_fault_spec(fopt.bus, fault_kind_from_name(fopt.kind), parse_phases(fopt.phases),
                         fopt.r_ohm, fopt.rg_ohm, r_floor);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << content;
}

ordered_json result_json(const ConstraintSystem& sys, const SolveResult& res) {
  ordered_json j;
  j["status"] = solve_status_name(res.status);
  j["iterations"] = res.iterations;
  j["attempts"] = res.attempts;
  j["eq_norm_inf"] = res.eq_norm_inf;
  j["max_violation"] = res.max_violation;
  j["elapsed_ms"] = res.elapsed_ms;
  if (res.certificate) {
    ordered_json cert;
    cert["violation_measure"] = res.certificate->merit;
    cert["worst"] = ordered_json::array();
    for (const auto& w : res.certificate->worst)
      cert["worst"].push_back({{"constraint", w.name}, {"violation", w.value}});
    j["certificate"] = std::move(cert);
  } else {
    j["active_set"] = res.active_set;
  }
  (void)sys;
  return j;
}

ordered_json bus_voltages_json(const NetworkModel& model, const ConstraintSystem& sys,
                               const SolveResult& res) {
  ordered_json buses = ordered_json::array();
  for (const Bus& bus : model.buses) {
    ordered_json jb;
    jb["id"] = bus.id;
    for (Phase p : bus.phases) {
      const Complex v = res.bus_voltage(sys, bus.id, p);
      ordered_json jp;
      jp["mag_pu"] = std::abs(v);
      jp["angle_deg"] = std::arg(v) * 180.0 / 3.14159265358979323846;
      jb[std::string(1, phase_label(p))] = std::move(jp);
    }
    buses.push_back(std::move(jb));
  }
  return buses;
}

ordered_json element_powers_json(const NetworkModel& model, const ConstraintSystem& sys,
                                 const SolveResult& res) {
  ordered_json elems = ordered_json::array();
  auto emit = [&](const std::string& id, const std::string& kind, const std::string& bus,
                  const auto& phase_map) {
    ordered_json je;
    je["id"] = id;
    je["kind"] = kind;
    for (const auto& [p, _] : phase_map) {
      const Complex v = res.bus_voltage(sys, bus, p);
      const Complex i = res.phasor(sys, VarKind::ElementCurrentRe, VarKind::ElementCurrentIm,
                                   id, p);
      const PhasePower s = element_power(v, i);
      ordered_json jp;
      jp["p_pu"] = s.p;
      jp["q_pu"] = s.q;
      jp["i_pu"] = std::abs(i);
      je[std::string(1, phase_label(p))] = std::move(jp);
    }
    elems.push_back(std::move(je));
  };
  for (const auto& e : model.sources)
    if (e.status == Status::On) emit(e.id, "source", e.bus, e.v_setp);
  for (const auto& e : model.generators)
    if (e.status == Status::On) emit(e.id, "generator", e.bus, e.p_setp);
  for (const auto& e : model.gfl_inverters)
    if (e.status == Status::On) emit(e.id, "inverter_gfl", e.bus, e.p_setp);
  for (const auto& e : model.gfm_simple_inverters)
    if (e.status == Status::On) emit(e.id, "inverter_gfm_simple", e.bus, e.v0_r);
  for (const auto& e : model.gfm_complex_inverters)
    if (e.status == Status::On) emit(e.id, "inverter_gfm_complex", e.bus, e.v0_r);
  return elems;
}

void print_result_summary(const SolveResult& res) {
  std::cout << "status: " << solve_status_name(res.status) << "  iterations: " << res.iterations
            << "  eq|.|inf: " << res.eq_norm_inf << "  max violation: " << res.max_violation
            << "\n";
  if (res.certificate) {
    std::cout << "violation measure: " << res.certificate->merit << "\n";
    for (const auto& w : res.certificate->worst)
      std::cout << "  worst: " << w.name << " = " << w.value << "\n";
  }
}

int cmd_prefault(const CommonOptions& copt, const std::optional<std::string>& json_out) {
  const NetworkModel model = load_model(copt);
  const SolverConfig cfg = make_config(copt);
  const PrefaultResult pre = prefault_solve(model, cfg);

  print_result_summary(pre.solution);
  for (const Bus& bus : model.buses) {
    std::cout << bus.id << ":";
    for (Phase p : bus.phases) {
      const Complex v = pre.solution.bus_voltage(pre.system, bus.id, p);
      std::cout << "  " << phase_label(p) << " " << std::abs(v) << "/"
                << std::arg(v) * 180.0 / 3.14159265358979323846 << "deg";
    }
    std::cout << "\n";
  }
  ordered_json elems = element_powers_json(model, pre.system, pre.solution);
  for (const auto& je : elems) {
    std::cout << je.at("id").get<std::string>() << " (" << je.at("kind").get<std::string>()
              << "):";
    for (Phase p : kAllPhases) {
      const std::string key(1, phase_label(p));
      if (!je.contains(key)) continue;
      std::cout << "  " << key << " P=" << je.at(key).at("p_pu").get<double>()
                << " Q=" << je.at(key).at("q_pu").get<double>();
    }
    std::cout << "\n";
  }

  if (json_out) {
    ordered_json j;
    j["result"] = result_json(pre.system, pre.solution);
    j["buses"] = bus_voltages_json(model, pre.system, pre.solution);
    j["elements"] = std::move(elems);
    write_file(*json_out, j.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_fault(const CommonOptions& copt, const FaultOptions& fopt,
              const std::optional<std::string>& json_out,
              const std::optional<std::string>& trace_out,
              const std::optional<std::string>& dump_out) {
  NetworkModel model = load_model(copt);
  SolverConfig cfg = make_config(copt);

  std::ofstream trace_stream;
  if (trace_out) {
    trace_stream.open(*trace_out);
    if (!trace_stream) throw ParseError("cannot write '" + *trace_out + "'");
    trace_stream << "attempt,iteration,merit,eq_norm_inf,max_violation,damping\n";
    cfg.trace = [&trace_stream](const TraceRecord& t) {
      char line[160];
      std::snprintf(line, sizeof(line), "%d,%d,%.10g,%.10g,%.10g,%.10g\n", t.attempt,
                    t.iteration, t.merit, t.eq_norm_inf, t.max_violation, t.damping);
      trace_stream << line;
    };
  }

  const FaultSpec spec = make_spec(fopt, copt.r_floor_ohm);

  // The pre-fault solve seeds GFM-complex pre-fault voltages, as in sweeps.
  const PrefaultResult pre = prefault_solve(model, cfg);
  model = apply_prefault_voltages(model, pre);

  const FaultCaseResult cs = solve_fault_case(model, spec, cfg, std::nullopt, copt.ramp_steps);
  if (dump_out) write_file(*dump_out, dump_system(cs.system));

  print_result_summary(cs.solution);
  if (copt.verbose && cs.solution.status == SolveStatus::Feasible) {
    std::cout << "active constraints:";
    for (const std::string& name : cs.solution.active_set) std::cout << " " << name;
    std::cout << "\n";
  }
  ordered_json j;
  j["fault"] = ordered_json::parse(serialize_fault_spec(spec));
  j["result"] = result_json(cs.system, cs.solution);
  if (cs.solution.x.size() == cs.system.n_vars()) {
    const double i_base = model.bus_bases(spec.bus).i_base_a();
    ordered_json jf;
    for (Phase p : cs.admittance.phases) {
      const Complex fi = cs.solution.phasor(cs.system, VarKind::FaultCurrentRe,
                                            VarKind::FaultCurrentIm, spec.bus, p);
      const Complex v = cs.solution.bus_voltage(cs.system, spec.bus, p);
      ordered_json jp;
      jp["If_pu"] = std::abs(fi);
      jp["If_A"] = std::abs(fi) * i_base;
      jp["V_pu"] = std::abs(v);
      jf[std::string(1, phase_label(p))] = std::move(jp);
      std::cout << "phase " << phase_label(p) << ": |If| = " << std::abs(fi) << " pu ("
                << std::abs(fi) * i_base << " A), |V| = " << std::abs(v) << " pu\n";
    }
    j["faulted_bus"] = std::move(jf);
    j["buses"] = bus_voltages_json(model, cs.system, cs.solution);
    j["elements"] = element_powers_json(model, cs.system, cs.solution);
  }
  if (json_out) write_file(*json_out, j.dump(2) + "\n");

  return cs.solution.status == SolveStatus::Feasible ? kExitOk : kExitInfeasible;
}

int cmd_sweep(const CommonOptions& copt, const FaultOptions& fopt, double rmin, double rmax,
              int points, bool linear, bool no_warm, int jobs,
              const std::optional<std::string>& csv_out,
              const std::optional<std::string>& svg_out,
              const std::optional<std::string>& json_out) {
  const NetworkModel model = load_network(copt.network_path, !copt.lenient);
  const SolverConfig cfg = make_config(copt);

  SweepPlan plan;
  plan.fault_bus = fopt.bus;
  plan.kind = fault_kind_from_name(fopt.kind);
  plan.phases = parse_phases(fopt.phases);
  plan.resistances_ohm =
      linear ? linear_grid(rmin, rmax, points) : log_grid(rmin, rmax, points);
  plan.r_ground_ohm = fopt.rg_ohm;
  if (copt.inverter) plan.inverter_under_test = inverter_model_from_name(*copt.inverter);
  plan.island_line_id = copt.island_line;
  plan.warm_start = !no_warm;
  plan.jobs = jobs;
  plan.fault_ramp_steps = copt.ramp_steps;

  const SweepResult result = run_sweep(model, plan, cfg);
  if (copt.verbose)
    for (const SweepRow& row : result.rows)
      std::cerr << "  r=" << row.r_fault_ohm << " ohm: " << solve_status_name(row.status)
                << " (" << row.iterations << " iterations)\n";
  const std::string csv = sweep_to_csv(result);
  if (csv_out)
    write_file(*csv_out, csv);
  else
    std::cout << csv;
  if (svg_out) {
    const std::string title = fopt.kind + " fault at " + fopt.bus;
    write_file(*svg_out, sweep_to_svg(result, title));
  }

  int feasible = 0;
  for (const SweepRow& row : result.rows)
    if (row.status == SolveStatus::Feasible) ++feasible;
  std::cerr << "sweep: " << feasible << "/" << result.rows.size() << " points feasible\n";

  if (json_out) {
    ordered_json j;
    j["points"] = result.rows.size();
    j["feasible"] = feasible;
    j["rows"] = ordered_json::array();
    for (const SweepRow& row : result.rows) {
      ordered_json jr;
      jr["r_fault_ohm"] = row.r_fault_ohm;
      jr["status"] = solve_status_name(row.status);
      jr["iterations"] = row.iterations;
      jr["I1_pu"] = row.i1_pu;
      j["rows"].push_back(std::move(jr));
    }
    write_file(*json_out, j.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_validate(const CommonOptions& copt, const FaultOptions& fopt, bool have_fault,
                 double tolerance, const std::optional<std::string>& json_out) {
  const NetworkModel model = load_model(copt);
  const SolverConfig cfg = make_config(copt);

  std::optional<FaultAdmittance> adm;
  std::optional<FaultSpec> spec;
  if (have_fault) {
    spec = make_spec(fopt, copt.r_floor_ohm);
    adm = build_fault_admittance(*spec, model.bus_bases(spec->bus));
  }

  const NodalSystem nodal = build_nodal(model, adm);
  const NodalSolution oracle = solve_nodal(nodal);

  AssembleOptions opts;
  opts.eps_comp = cfg.eps_comp;
  opts.strict_apparent_cap = cfg.strict_apparent_cap;
  const ConstraintSystem sys = assemble(model, adm, opts);
  const SolveResult res = solve(sys, cfg);

  double max_dev = 0.0;
  std::string where = "-";
  if (res.status == SolveStatus::Feasible) {
    for (const auto& [key, v] : oracle.voltage) {
      const double dev = std::abs(res.bus_voltage(sys, key.first, key.second) - v);
      if (dev > max_dev) {
        max_dev = dev;
        where = "V[" + key.first + "." + phase_label(key.second) + "]";
      }
    }
    for (const auto& [key, i] : oracle.line_current) {
      const double dev = std::abs(res.phasor(sys, VarKind::ElementCurrentRe,
                                             VarKind::ElementCurrentIm, key.first, key.second) -
                                  i);
      if (dev > max_dev) {
        max_dev = dev;
        where = "I[" + key.first + "." + phase_label(key.second) + "]";
      }
    }
    for (const auto& [key, i] : oracle.source_current) {
      const double dev = std::abs(res.phasor(sys, VarKind::ElementCurrentRe,
                                             VarKind::ElementCurrentIm, key.first, key.second) -
                                  i);
      if (dev > max_dev) {
        max_dev = dev;
        where = "I[" + key.first + "." + phase_label(key.second) + "]";
      }
    }
  }

  const bool pass = res.status == SolveStatus::Feasible && max_dev <= tolerance;
  std::cout << "oracle residual: " << oracle.residual_inf << "\n";
  std::cout << "solver status: " << solve_status_name(res.status) << "\n";
  std::cout << "max deviation vs oracle: " << max_dev << " pu at " << where << "\n";
  std::cout << (pass ? "VALIDATION PASS" : "VALIDATION FAIL") << " (tolerance " << tolerance
            << ")\n";

  if (json_out) {
    ordered_json j;
    j["pass"] = pass;
    j["max_deviation_pu"] = max_dev;
    j["worst"] = where;
    j["tolerance"] = tolerance;
    j["solver_status"] = solve_status_name(res.status);
    write_file(*json_out, j.dump(2) + "\n");
  }
  return pass ? kExitOk : kExitInfeasible;
}

int cmd_dump(const CommonOptions& copt, const FaultOptions& fopt, bool have_fault,
             const std::optional<std::string>& out) {
  const NetworkModel model = load_model(copt);
  std::optional<FaultAdmittance> adm;
  if (have_fault) {
    const FaultSpec spec = make_spec(fopt, copt.r_floor_ohm);
    adm = build_fault_admittance(spec, model.bus_bases(spec.bus));
  }
  AssembleOptions opts;
  opts.strict_apparent_cap = copt.strict_smax;
  const std::string dump = dump_system(assemble(model, adm, opts));
  if (out)
    write_file(*out, dump);
  else
    std::cout << dump;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"short-circuit studies for unbalanced distribution networks with "
               "grid-following and grid-forming inverter models"};
  app.require_subcommand(1);

  CommonOptions copt;
  FaultOptions fopt;
  std::optional<std::string> json_out, trace_out, dump_out, csv_out, svg_out;
  double rmin = 1e-3, rmax = 10.0, tolerance = 1e-6;
  int points = 25, jobs = 1;
  bool linear = false, no_warm = false, against_oracle = true;

  auto* prefault = app.add_subcommand("prefault", "solve the unfaulted network");
  add_common(prefault, copt);
  prefault->add_option("--json", json_out, "write a JSON summary here");

  auto* fault = app.add_subcommand("fault", "solve one fault scenario");
  add_common(fault, copt);
  add_fault_flags(fault, fopt);
  fault->add_option("--json", json_out, "write a JSON summary here");
  fault->add_option("--trace", trace_out, "stream per-iteration residual norms as CSV");
  fault->add_option("--dump-system", dump_out, "write the assembled constraint listing here");

  auto* sweep = app.add_subcommand("sweep", "fault-impedance sweep");
  add_common(sweep, copt);
  add_fault_flags(sweep, fopt);
  sweep->add_option("--rmin", rmin, "smallest fault resistance (ohm)");
  sweep->add_option("--rmax", rmax, "largest fault resistance (ohm)");
  sweep->add_option("--points", points, "grid size (default 25)");
  sweep->add_flag("--linear", linear, "linear grid instead of log-spaced");
  sweep->add_flag("--no-warm-start", no_warm, "solve each point independently from flat start");
  sweep->add_option("--jobs", jobs, "parallel points (requires --no-warm-start)");
  sweep->add_option("--out", csv_out, "CSV output path (stdout when omitted)");
  sweep->add_option("--plot", svg_out, "SVG plot output path");
  sweep->add_option("--json", json_out, "write a JSON summary here");

  auto* validate = app.add_subcommand(
      "validate", "compare the feasibility solve against the direct nodal oracle "
                  "(linear networks only)");
  add_common(validate, copt);
  add_fault_flags(validate, fopt, /*required=*/false);
  validate->add_flag("--against-oracle", against_oracle,
                     "compare against the complex nodal solve (default)");
  validate->add_option("--tolerance", tolerance, "pass threshold in pu (default 1e-6)");
  validate->add_option("--json", json_out, "write a JSON summary here");

  auto* dump = app.add_subcommand("dump-system", "emit the assembled constraint listing");
  add_common(dump, copt);
  add_fault_flags(dump, fopt, /*required=*/false);
  dump->add_option("--out", dump_out, "output path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (prefault->parsed()) return cmd_prefault(copt, json_out);
    if (fault->parsed()) return cmd_fault(copt, fopt, json_out, trace_out, dump_out);
    if (sweep->parsed())
      return cmd_sweep(copt, fopt, rmin, rmax, points, linear, no_warm, jobs, csv_out, svg_out,
                       json_out);
    if (validate->parsed()) {
      const bool have_fault = !fopt.bus.empty();
      return cmd_validate(copt, fopt, have_fault, tolerance, json_out);
    }
    if (dump->parsed()) {
      const bool have_fault = !fopt.bus.empty();
      return cmd_dump(copt, fopt, have_fault, dump_out);
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
