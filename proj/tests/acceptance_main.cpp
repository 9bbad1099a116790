// Acceptance suite: one check per release criterion, one PASS/FAIL line
// each, hard failures flip the exit code. Soft checks (qualitative findings
// whose exact reproduction depends on solver settings) print PASS/WARN and
// never gate.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <faultforge/analysis.hpp>
#include <faultforge/nodal.hpp>
#include <faultforge/solver.hpp>

#include "support/paths.hpp"
#include "support/random_networks.hpp"

using namespace ff;

namespace {

int g_failures = 0;

class Criterion {
public:
  Criterion(int number, std::string label) : number_(number), label_(std::move(label)) {
    start_ = std::chrono::steady_clock::now();
  }
  void pass(const std::string& detail = "") { report(true, false, detail); }
  void fail(const std::string& detail = "") { report(false, false, detail); }
  void check(bool ok, const std::string& detail = "") { report(ok, false, detail); }
  void soft(bool ok, const std::string& detail = "") { report(ok, true, detail); }

private:
  void report(bool ok, bool soft, const std::string& detail) {
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start_)
                          .count();
    const char* verdict = ok ? "PASS" : (soft ? "WARN" : "FAIL");
    if (!ok && !soft) ++g_failures;
    std::printf("[%s] criterion %2d: %s (%.0f ms)%s%s\n", verdict, number_, label_.c_str(), ms,
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
  }
  int number_;
  std::string label_;
  std::chrono::steady_clock::time_point start_;
};

NetworkModel fixture() { return load_network(fixture_path("case4_pv.json")); }

SweepResult gfl_sweep(FaultKind kind, int points = 25) {
  SweepPlan plan;
  plan.fault_bus = "Load";
  plan.kind = kind;
  plan.resistances_ohm = log_grid(1e-3, 10.0, points);
  plan.inverter_under_test = InverterModel::Gfl;
  return run_sweep(fixture(), plan);
}

SweepResult islanded_sweep(InverterModel model, FaultKind kind, int points = 25) {
  SweepPlan plan;
  plan.fault_bus = "Load";
  plan.kind = kind;
  plan.resistances_ohm = log_grid(1e-3, 10.0, points);
  plan.inverter_under_test = model;
  plan.island_line_id = "source_primary";
  return run_sweep(fixture(), plan);
}

int count_feasible(const SweepResult& sweep) {
  int n = 0;
  for (const SweepRow& row : sweep.rows)
    if (row.status == SolveStatus::Feasible) ++n;
  return n;
}

// --- criterion 1: oracle equivalence on randomized linear networks --------

void criterion_oracle_equivalence() {
  Criterion c(1, "feasibility solve matches the nodal oracle on 50 random linear networks");
  double worst = 0.0;
  int solved = 0;
  for (unsigned seed = 1; seed <= 50; ++seed) {
    const fftest::RandomCase rc = fftest::random_linear_case(seed);
    const FaultAdmittance adm =
        build_fault_admittance(rc.fault, rc.model.bus_bases(rc.fault.bus));
    const NodalSolution oracle = solve_nodal(build_nodal(rc.model, adm));

    const ConstraintSystem sys = assemble(rc.model, adm);
    const SolveResult res = solve(sys);
    if (res.status != SolveStatus::Feasible) {
      c.fail("seed " + std::to_string(seed) + " not feasible");
      return;
    }
    ++solved;
    for (const auto& [key, v] : oracle.voltage)
      worst = std::max(worst, std::abs(res.bus_voltage(sys, key.first, key.second) - v));
    for (const auto& [key, i] : oracle.line_current)
      worst = std::max(worst,
                       std::abs(res.phasor(sys, VarKind::ElementCurrentRe,
                                           VarKind::ElementCurrentIm, key.first, key.second) -
                                i));
    for (const auto& [key, i] : oracle.source_current)
      worst = std::max(worst,
                       std::abs(res.phasor(sys, VarKind::ElementCurrentRe,
                                           VarKind::ElementCurrentIm, key.first, key.second) -
                                i));
    for (const auto& [key, i] : oracle.transformer_current)
      worst = std::max(worst, std::abs(res.phasor(sys, VarKind::ElementCurrentRe,
                                                  VarKind::ElementCurrentIm, key.first,
                                                  key.second, Port::From) -
                                       i));
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail), "%d networks, max deviation %.2e pu", solved, worst);
  c.check(worst < 1e-6, detail);
}

// --- criterion 2: star-mesh construction against Kron elimination ---------

Eigen::MatrixXd kron_reference(const FaultSpec& spec, const BaseSet& bases) {
  using Mat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const int n = static_cast<int>(spec.phases.size());
  const long double z_base = bases.z_base_ohm();
  if (fault_kind_grounded(spec.kind) && spec.r_ground_ohm == 0.0) {
    Eigen::MatrixXd direct = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
      direct(i, i) = bases.z_base_ohm() / spec.r_phase_ohm[static_cast<size_t>(i)];
    return direct;
  }
  Mat y = Mat::Zero(n + 1, n + 1);
  for (int i = 0; i < n; ++i) {
    const long double g =
        z_base / static_cast<long double>(spec.r_phase_ohm[static_cast<size_t>(i)]);
    y(i, i) += g;
    y(n, n) += g;
    y(i, n) -= g;
    y(n, i) -= g;
  }
  if (fault_kind_grounded(spec.kind))
    y(n, n) += z_base / static_cast<long double>(spec.r_ground_ohm);
  const Mat reduced =
      y.topLeftCorner(n, n) - y.topRightCorner(n, 1) / y(n, n) * y.bottomLeftCorner(1, n);
  return reduced.cast<double>();
}

void criterion_star_mesh() {
  Criterion c(2, "fault matrices equal Kron elimination for 200 random specs");
  std::mt19937 rng(4242);
  auto uni = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  const BaseSet bases{240.0, 25000.0};

  double worst = 0.0, worst_rowsum = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    FaultSpec spec;
    spec.bus = "b";
    switch (pick(5)) {
      case 0: spec.kind = FaultKind::LG; break;
      case 1: spec.kind = FaultKind::LL; break;
      case 2: spec.kind = FaultKind::LLG; break;
      case 3: spec.kind = FaultKind::ThreePhase; break;
      default: spec.kind = FaultKind::ThreePhaseGround; break;
    }
    std::vector<Phase> pool = {Phase::A, Phase::B, Phase::C};
    std::shuffle(pool.begin(), pool.end(), rng);
    spec.phases.assign(pool.begin(), pool.begin() + fault_kind_phase_count(spec.kind));
    std::sort(spec.phases.begin(), spec.phases.end());
    for (size_t i = 0; i < spec.phases.size(); ++i)
      spec.r_phase_ohm.push_back(std::pow(10.0, uni(-4.0, 1.0)));
    if (fault_kind_grounded(spec.kind))
      spec.r_ground_ohm = pick(3) == 0 ? 0.0 : std::pow(10.0, uni(-4.0, 1.0));

    const Eigen::MatrixXd mine = build_fault_admittance(spec, bases).conductance;
    const Eigen::MatrixXd ref = kron_reference(spec, bases);
    const double scale = std::max(1.0, ref.cwiseAbs().maxCoeff());
    worst = std::max(worst, (mine - ref).cwiseAbs().maxCoeff() / scale);
    if (!fault_kind_grounded(spec.kind))
      worst_rowsum =
          std::max(worst_rowsum, mine.rowwise().sum().cwiseAbs().maxCoeff() / scale);
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail), "max relative deviation %.2e, ungrounded row sums %.2e",
                worst, worst_rowsum);
  c.check(worst < 1e-12 && worst_rowsum < 1e-12, detail);
}

// --- criterion 3: grid-following feasibility map ---------------------------

void criterion_gfl_feasibility(const SweepResult& lg, const SweepResult& ll,
                               const SweepResult& g3) {
  Criterion c(3, "GFL sweeps (lg, ll, 3phg) are feasible at all 25 points each");
  const int total = count_feasible(lg) + count_feasible(ll) + count_feasible(g3);
  char detail[64];
  std::snprintf(detail, sizeof(detail), "%d/75 points feasible", total);
  c.check(total == 75, detail);
}

// --- criterion 4: saturation transition from the sweep CSV ----------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
  double num(size_t row, int col) const { return std::atof(rows[row][static_cast<size_t>(col)].c_str()); }
};

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else if (!fields.empty()) {
      t.rows.push_back(std::move(fields));
    }
  }
  return t;
}

void criterion_gfl_saturation(const SweepResult& g3) {
  Criterion c(4, "GFL 3phg sweep shows a clean saturation transition (from the CSV)");
  const CsvTable csv = parse_csv(sweep_to_csv(g3));
  const NetworkModel m = fixture();
  const double i_max = m.gfl_inverters[0].i_max.at(Phase::A);
  const double p_setp = m.gfl_inverters[0].p_setp.at(Phase::A);

  // Saturation is judged on the per-phase inverter current magnitudes of
  // the sweep records; the CSV carries power, status, and ordering.
  const int status = csv.col("status");
  std::vector<bool> saturated;
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    if (csv.rows[r][static_cast<size_t>(status)] != "feasible") {
      c.fail("row " + std::to_string(r) + " not feasible");
      return;
    }
    bool all_at_cap = true;
    for (Phase p : kAllPhases)
      all_at_cap = all_at_cap && std::abs(g3.rows[r].inverter_i_pu.at(p) - i_max) <= 1e-4;
    saturated.push_back(all_at_cap);
  }

  // Expect a monotone pattern: saturated at the bolted end, a single
  // transition, setpoint tracking above it.
  size_t transition = 0;
  while (transition < saturated.size() && saturated[transition]) ++transition;
  if (transition == 0 || transition == saturated.size()) {
    c.fail("no saturation transition inside the sweep");
    return;
  }
  for (size_t r = transition; r < saturated.size(); ++r) {
    if (saturated[r]) {
      c.fail("saturation recurs above the transition at row " + std::to_string(r));
      return;
    }
  }
  for (Phase p : kAllPhases) {
    const int pcol = csv.col(std::string(1, phase_label(p)) + "_P_pu");
    for (size_t r = 0; r < transition; ++r) {
      if (!(csv.num(r, pcol) < p_setp)) {
        c.fail("saturated row delivers full setpoint power");
        return;
      }
    }
    for (size_t r = transition; r < csv.rows.size(); ++r) {
      if (std::abs(csv.num(r, pcol) - p_setp) > 0.05 * p_setp) {
        c.fail("unsaturated row misses the setpoint beyond the 5% band");
        return;
      }
    }
  }
  char detail[96];
  std::snprintf(detail, sizeof(detail), "saturated below r = %.4g ohm (%zu of %zu rows)",
                g3.rows[transition].r_fault_ohm, transition, saturated.size());
  c.pass(detail);
}

// --- criterion 5: sequence dominance at the bolted end ---------------------

void criterion_gfl_sequence(const SweepResult& g3) {
  Criterion c(5, "GFL 3phg bolted-end rows are positive-sequence dominated");
  bool ok = true;
  double worst_ratio = 0.0;
  for (size_t r = 0; r < 5 && r < g3.rows.size(); ++r) {
    const SweepRow& row = g3.rows[r];
    if (row.status != SolveStatus::Feasible) {
      ok = false;
      break;
    }
    const double ratio = (row.i0_pu + row.i2_pu) / std::max(row.i1_pu, 1e-12);
    worst_ratio = std::max(worst_ratio, ratio);
    ok = ok && (row.i0_pu + row.i2_pu) <= 0.05 * row.i1_pu;
  }
  char detail[64];
  std::snprintf(detail, sizeof(detail), "worst (|I0|+|I2|)/|I1| = %.2e", worst_ratio);
  c.check(ok, detail);
}

// --- criterion 6: unfaulted phases keep their power under lg faults --------

void criterion_gfl_unfaulted_retention(const SweepResult& lg) {
  Criterion c(6, "GFL lg sweep keeps unfaulted-phase power within 5% of setpoint");
  const NetworkModel m = fixture();
  const double p_setp = m.gfl_inverters[0].p_setp.at(Phase::B);
  double worst = 0.0;
  bool ok = true;
  for (const SweepRow& row : lg.rows) {
    if (row.status != SolveStatus::Feasible) {
      ok = false;
      break;
    }
    for (Phase p : {Phase::B, Phase::C}) {  // phase A carries the fault
      const double dev = std::abs(row.inverter_p_pu.at(p) - p_setp) / p_setp;
      worst = std::max(worst, dev);
      ok = ok && dev <= 0.05;
    }
  }
  char detail[64];
  std::snprintf(detail, sizeof(detail), "worst deviation %.2e", worst);
  c.check(ok, detail);
}

// --- criterion 7: GFM-simple complementarity and Thevenin consistency ------

void criterion_gfm_simple(const SweepResult& lg, const SweepResult& g3) {
  Criterion c(7, "GFM-simple rows obey activation complementarity and the Thevenin law");
  const NetworkModel m = fixture();
  const auto& inv = m.gfm_simple_inverters[0];
  double worst_comp = 0.0, worst_thevenin = 0.0;
  int feasible_rows = 0;
  for (const SweepResult* sweep : {&lg, &g3}) {
    for (const SweepRow& row : sweep->rows) {
      if (row.status != SolveStatus::Feasible) continue;
      ++feasible_rows;
      for (Phase p : kAllPhases) {
        const double imax = inv.i_max.at(p);
        const double r = row.activation.at(p);
        const double i = row.inverter_i_pu.at(p);
        worst_comp = std::max(worst_comp, r * (imax * imax - i * i));
        if (r <= 1e-8) {
          const double v0 = std::hypot(inv.v0_r.at(p), inv.v0_i.at(p));
          worst_thevenin =
              std::max(worst_thevenin, std::abs(row.inverter_bus_v_pu.at(p) - v0));
        }
      }
    }
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "%d feasible rows, max r(imax^2-|I|^2) = %.2e, max |V - V0| at r~0 = %.2e",
                feasible_rows, worst_comp, worst_thevenin);
  c.check(feasible_rows > 0 && worst_comp <= 1e-6 && worst_thevenin <= 1e-6, detail);
}

// --- criterion 8: qualitative grid-forming infeasibility findings ----------

void criterion_gfm_qualitative() {
  Criterion c(8, "islanded grid-forming models reproduce the reported infeasibility pattern");
  const SweepResult simple_ll = islanded_sweep(InverterModel::GfmSimple, FaultKind::LL);
  const SweepResult complex_3ph = islanded_sweep(InverterModel::GfmComplex, FaultKind::ThreePhase);

  int simple_ll_infeasible = 0;
  for (const SweepRow& row : simple_ll.rows)
    if (row.status == SolveStatus::Infeasible) ++simple_ll_infeasible;
  int complex_infeasible = 0;
  bool power_ranked_first = false;
  for (const SweepRow& row : complex_3ph.rows) {
    if (row.status != SolveStatus::Infeasible) continue;
    ++complex_infeasible;
    if (row.infeasibility && !row.infeasibility->families.empty() &&
        row.infeasibility->families.front().family == Family::Power)
      power_ranked_first = true;
  }

  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "GFM-simple ll: %d infeasible rows; GFM-complex 3ph: %d infeasible rows "
                "(power family ranked first: %s)",
                simple_ll_infeasible, complex_infeasible, power_ranked_first ? "yes" : "no");
  c.soft(simple_ll_infeasible >= 1 && complex_infeasible >= 1 && power_ranked_first, detail);
}

// --- criterion 9: numerical hygiene ----------------------------------------

void criterion_numerics() {
  Criterion c(9, "jacobians match finite differences; Fortescue round-trips; rechecks pass");
  const NetworkModel m = fixture();
  FaultSpec spec = make_fault_spec("Load", FaultKind::LLG, {Phase::B, Phase::C}, 0.05, 0.02);
  const FaultAdmittance adm = build_fault_admittance(spec, m.bus_bases("Load"));
  const ConstraintSystem sys = assemble(m, adm);

  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_jac = 0.0;
  const double h = 1e-7;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(sys.n_vars());
    for (int i = 0; i < sys.n_vars(); ++i)
      x[i] = std::min(std::max(u(rng), sys.lower[i]), sys.upper[i]);
    const SystemJacobian jac = jacobian(sys, x);
    const Eigen::MatrixXd an_eq = jac.equalities.toDense();
    const Eigen::MatrixXd an_le = jac.inequalities.toDense();
    const Residuals at_x = residual(sys, x);
    for (int j = 0; j < sys.n_vars(); ++j) {
      Eigen::VectorXd hi = x, lo = x;
      hi[j] += h;
      lo[j] -= h;
      const Residuals rh = residual(sys, hi);
      const Residuals rl = residual(sys, lo);
      const Eigen::VectorXd fd_eq = (rh.equalities - rl.equalities) / (2 * h);
      const Eigen::VectorXd fd_le = (rh.inequalities - rl.inequalities) / (2 * h);
      for (Eigen::Index r = 0; r < fd_eq.size(); ++r)
        worst_jac = std::max(worst_jac,
                             std::abs(fd_eq[r] - an_eq(r, j)) /
                                 std::max({1.0, std::abs(an_eq(r, j)),
                                           std::abs(at_x.equalities[r])}));
      for (Eigen::Index r = 0; r < fd_le.size(); ++r)
        worst_jac = std::max(worst_jac,
                             std::abs(fd_le[r] - an_le(r, j)) /
                                 std::max({1.0, std::abs(an_le(r, j)),
                                           std::abs(at_x.inequalities[r])}));
    }
  }

  double worst_fortescue = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Complex a(u(rng), u(rng)), b(u(rng), u(rng)), cc(u(rng), u(rng));
    const auto back = from_sequence(to_sequence(a, b, cc));
    worst_fortescue = std::max({worst_fortescue, std::abs(back[0] - a), std::abs(back[1] - b),
                                std::abs(back[2] - cc)});
  }

  const SolveResult res = solve(sys);
  const bool recheck = res.status == SolveStatus::Feasible &&
                       check_feasible(sys, res.x, 1e-8, 1e-8);

  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "max jacobian error %.2e, fortescue round-trip %.2e, recheck %s", worst_jac,
                worst_fortescue, recheck ? "ok" : "FAILED");
  c.check(worst_jac < 1e-6 && worst_fortescue < 1e-12 && recheck, detail);
}

// --- criterion 10: CLI determinism -----------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void criterion_cli_determinism() {
  Criterion c(10, "repeated CLI sweeps emit byte-identical CSV");
#ifndef FAULTFORGE_CLI_PATH
  c.fail("CLI path not configured at build time");
#else
  const std::string cli = FAULTFORGE_CLI_PATH;
  const std::string network = fixture_path("case4_pv.json");
  const std::string cmd_base = "\"" + cli + "\" sweep --network \"" + network +
                               "\" --fault 3phg --bus Load --rmin 1e-3 --rmax 10 --points 25";
  const int rc1 = std::system((cmd_base + " --out /tmp/ff_accept_1.csv >/dev/null 2>&1").c_str());
  const int rc2 = std::system((cmd_base + " --out /tmp/ff_accept_2.csv >/dev/null 2>&1").c_str());
  if (rc1 != 0 || rc2 != 0) {
    c.fail("CLI invocation failed");
    return;
  }
  const std::string a = slurp("/tmp/ff_accept_1.csv");
  const std::string b = slurp("/tmp/ff_accept_2.csv");
  char detail[64];
  std::snprintf(detail, sizeof(detail), "%zu bytes each", a.size());
  c.check(!a.empty() && a == b, detail);
#endif
}

}  // namespace

int main() {
  std::printf("acceptance suite: %s\n", fixture_path("case4_pv.json").c_str());

  criterion_oracle_equivalence();
  criterion_star_mesh();

  const SweepResult lg = gfl_sweep(FaultKind::LG);
  const SweepResult ll = gfl_sweep(FaultKind::LL);
  const SweepResult g3 = gfl_sweep(FaultKind::ThreePhaseGround);
  criterion_gfl_feasibility(lg, ll, g3);
  criterion_gfl_saturation(g3);
  criterion_gfl_sequence(g3);
  criterion_gfl_unfaulted_retention(lg);

  const SweepResult gfm_lg = islanded_sweep(InverterModel::GfmSimple, FaultKind::LG);
  const SweepResult gfm_3phg = islanded_sweep(InverterModel::GfmSimple,
                                              FaultKind::ThreePhaseGround);
  criterion_gfm_simple(gfm_lg, gfm_3phg);

  criterion_gfm_qualitative();
  criterion_numerics();
  criterion_cli_determinism();

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all hard criteria passed\n");
  return 0;
}
