#include "faultforge/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <json.hpp>

namespace ff {

using nlohmann::ordered_json;

SolverConfig load_solver_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw ParseError(std::string("invalid solver config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("solver config: expected an object");
  SolverConfig cfg;
  cfg.eps_eq = j.value("eps_eq", cfg.eps_eq);
  cfg.eps_ineq = j.value("eps_ineq", cfg.eps_ineq);
  cfg.eps_comp = j.value("eps_comp", cfg.eps_comp);
  cfg.strict_apparent_cap = j.value("strict_apparent_cap", cfg.strict_apparent_cap);
  cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
  cfg.damping_init = j.value("damping_init", cfg.damping_init);
  cfg.damping_decrease = j.value("damping_decrease", cfg.damping_decrease);
  cfg.damping_increase = j.value("damping_increase", cfg.damping_increase);
  cfg.damping_max = j.value("damping_max", cfg.damping_max);
  cfg.stagnation_window = j.value("stagnation_window", cfg.stagnation_window);
  cfg.stagnation_rtol = j.value("stagnation_rtol", cfg.stagnation_rtol);
  cfg.equality_emphasis = j.value("equality_emphasis", cfg.equality_emphasis);
  cfg.restarts = j.value("restarts", cfg.restarts);
  cfg.pin_activations_first = j.value("pin_activations_first", cfg.pin_activations_first);
  if (!(cfg.eps_eq > 0.0) || !(cfg.eps_ineq > 0.0) || !(cfg.eps_comp > 0.0))
    throw ValidationError("solver config: tolerances must be positive");
  if (cfg.max_iterations < 1)
    throw ValidationError("solver config: max_iterations must be >= 1");
  return cfg;
}

std::string solve_status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::IterationLimit: return "iteration_limit";
  }
  return {};
}

double SolveResult::value(const ConstraintSystem& system, const VariableKey& key) const {
  return x[system.vars.require(key)];
}

Complex SolveResult::phasor(const ConstraintSystem& system, VarKind re_kind, VarKind im_kind,
                            const std::string& owner, Phase phase, Port port) const {
  return Complex(x[system.vars.require({re_kind, owner, port, phase})],
                 x[system.vars.require({im_kind, owner, port, phase})]);
}

Complex SolveResult::bus_voltage(const ConstraintSystem& system, const std::string& bus,
                                 Phase phase) const {
  return phasor(system, VarKind::BusVoltageRe, VarKind::BusVoltageIm, bus, phase);
}

namespace {

void clamp_to_bounds(const ConstraintSystem& system, Eigen::VectorXd& x) {
  x = x.cwiseMax(system.lower).cwiseMin(system.upper);
}

}  // namespace

Eigen::VectorXd initial_point(const ConstraintSystem& system, const SolverConfig& config) {
  if (config.init == InitStrategy::WarmStart) {
    if (!config.warm_start_point)
      throw ValidationError("warm start requested without a prior solution");
    if (config.warm_start_point->size() != system.n_vars())
      throw ValidationError("warm start does not match the system's variable table");
    Eigen::VectorXd x = *config.warm_start_point;
    clamp_to_bounds(system, x);
    return x;
  }
  Eigen::VectorXd x = system.start;
  clamp_to_bounds(system, x);
  return x;
}

Eigen::VectorXd transfer_solution(const ConstraintSystem& from, const Eigen::VectorXd& x,
                                  const ConstraintSystem& to) {
  if (x.size() != from.n_vars())
    throw ValidationError("transfer_solution: vector does not match source system");
  SolverConfig flat;
  Eigen::VectorXd out = initial_point(to, flat);
  for (int i = 0; i < to.n_vars(); ++i) {
    const auto src = from.vars.find(to.vars.keys[static_cast<size_t>(i)]);
    if (src) out[i] = x[*src];
  }
  clamp_to_bounds(to, out);
  return out;
}

namespace {

struct AttemptOutcome {
  enum class Kind { Feasible, Stagnated, OutOfIterations, NumericalFailure };
  Kind kind = Kind::Stagnated;
  Eigen::VectorXd x;
  double merit = 0.0;
  double eq_inf = 0.0;
  double max_viol = 0.0;
  int iterations = 0;
};

struct MeritParts {
  double merit = 0.0;
  double eq_inf = 0.0;
  double max_viol = 0.0;
};

/// Per-row preconditioning weights from the Jacobian at the start point.
/// Stiff rows (fault conductances reach 1e3 and beyond in per-unit) would
/// otherwise dominate the least-squares geometry.
struct RowWeights {
  Eigen::VectorXd equalities;
  Eigen::VectorXd inequalities;
};

RowWeights row_weights(const ConstraintSystem& system, const Eigen::VectorXd& x0,
                       double equality_emphasis) {
  const SystemJacobian jac = jacobian(system, x0);
  RowWeights w;
  auto from = [](const Eigen::SparseMatrix<double>& m, double emphasis) {
    Eigen::VectorXd out = Eigen::VectorXd::Ones(m.rows());
    Eigen::VectorXd row_inf = Eigen::VectorXd::Zero(m.rows());
    for (int c = 0; c < m.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(m, c); it; ++it)
        row_inf[it.row()] = std::max(row_inf[it.row()], std::abs(it.value()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      out[i] = emphasis / std::max(1.0, row_inf[i]);
    return out;
  };
  w.equalities = from(jac.equalities, equality_emphasis);
  w.inequalities = from(jac.inequalities, 1.0);
  return w;
}

MeritParts weighted_merit(const ConstraintSystem& system, const RowWeights& w,
                          const Eigen::VectorXd& x) {
  const Residuals res = residual(system, x);
  MeritParts out;
  out.eq_inf = res.equalities.size() ? res.equalities.cwiseAbs().maxCoeff() : 0.0;
  out.max_viol = res.inequalities.size() ? std::max(0.0, res.inequalities.maxCoeff()) : 0.0;
  double m = 0.0;
  for (Eigen::Index i = 0; i < res.equalities.size(); ++i) {
    const double v = w.equalities[i] * res.equalities[i];
    m += 0.5 * v * v;
  }
  for (Eigen::Index i = 0; i < res.inequalities.size(); ++i) {
    const double v = w.inequalities[i] * std::max(0.0, res.inequalities[i]);
    m += 0.5 * v * v;
  }
  out.merit = m;
  return out;
}

/// One damped least-squares descent on the hinge merit from a given start.
AttemptOutcome run_attempt(const ConstraintSystem& system, const SolverConfig& config,
                           Eigen::VectorXd x, int attempt_index) {
  const int n = system.n_vars();
  AttemptOutcome out;
  double lambda = config.damping_init;

  // Stagnation is judged on the constraint-violation measure, not the
  // merit: a zigzagging local minimum can shave the merit forever while the
  // violation norms sit still.
  std::vector<double> best_history;
  auto stagnated = [&](double best) {
    best_history.push_back(best);
    const int w = config.stagnation_window;
    if (static_cast<int>(best_history.size()) <= w) return false;
    const double then = best_history[best_history.size() - 1 - static_cast<size_t>(w)];
    return (then - best) < config.stagnation_rtol * std::max(then, 1e-300);
  };

  try {
    const RowWeights weights = row_weights(system, x, config.equality_emphasis);
    MeritParts cur = weighted_merit(system, weights, x);
    double best_violation = std::max(cur.eq_inf, cur.max_viol);

    for (int iter = 0; iter < config.max_iterations; ++iter) {
      if (cur.eq_inf <= config.eps_eq && cur.max_viol <= config.eps_ineq) {
        out.kind = AttemptOutcome::Kind::Feasible;
        out.x = x;
        out.merit = cur.merit;
        out.eq_inf = cur.eq_inf;
        out.max_viol = cur.max_viol;
        out.iterations = iter;
        return out;
      }

      const Residuals res = residual(system, x);
      const SystemJacobian jac = jacobian(system, x);

      // Stack equalities with the active (violated) inequality rows.
      std::vector<int> active;
      for (Eigen::Index i = 0; i < res.inequalities.size(); ++i)
        if (res.inequalities[i] > 0.0) active.push_back(static_cast<int>(i));

      const Eigen::Index m_eq = res.equalities.size();
      const Eigen::Index m = m_eq + static_cast<Eigen::Index>(active.size());
      Eigen::VectorXd f(m);
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, n);
      for (Eigen::Index i = 0; i < m_eq; ++i)
        f[i] = weights.equalities[i] * res.equalities[i];
      J.topRows(m_eq) = weights.equalities.asDiagonal() * jac.equalities.toDense();
      for (size_t k = 0; k < active.size(); ++k) {
        const double wi = weights.inequalities[active[k]];
        f[m_eq + static_cast<Eigen::Index>(k)] = wi * res.inequalities[active[k]];
        J.row(m_eq + static_cast<Eigen::Index>(k)) =
            wi * jac.inequalities.row(active[k]).toDense();
      }

      const Eigen::MatrixXd JtJ = J.transpose() * J;
      const Eigen::VectorXd g = J.transpose() * f;
      Eigen::VectorXd scale = JtJ.diagonal().cwiseMax(1e-10);

      bool accepted = false;
      for (int tries = 0; tries < 40 && !accepted; ++tries) {
        // Levenberg-Marquardt step with active-bound freezing: variables
        // pinned at a bound that the step would push outward are removed
        // from the subproblem, otherwise the projected step loses its
        // predicted reduction and the iteration stalls.
        std::vector<bool> frozen(static_cast<size_t>(n), false);
        Eigen::VectorXd step;
        bool solved = true;
        for (int pass = 0; pass < 3; ++pass) {
          Eigen::MatrixXd H = JtJ;
          H.diagonal() += lambda * scale;
          Eigen::VectorXd rhs = -g;
          for (int i = 0; i < n; ++i) {
            if (!frozen[static_cast<size_t>(i)]) continue;
            H.row(i).setZero();
            H.col(i).setZero();
            H(i, i) = 1.0;
            rhs[i] = 0.0;
          }
          Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
          step = ldlt.solve(rhs);
          if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            solved = false;
            break;
          }
          bool grew = false;
          for (int i = 0; i < n; ++i) {
            if (frozen[static_cast<size_t>(i)]) continue;
            const bool at_lower = x[i] - system.lower[i] <= 1e-12 && step[i] < 0.0;
            const bool at_upper = system.upper[i] - x[i] <= 1e-12 && step[i] > 0.0;
            if (at_lower || at_upper) {
              frozen[static_cast<size_t>(i)] = true;
              grew = true;
            }
          }
          if (!grew) break;
        }
        if (!solved) {
          lambda = std::min(lambda * config.damping_increase, config.damping_max);
          continue;
        }
        Eigen::VectorXd x_new = x + step;
        clamp_to_bounds(system, x_new);
        const MeritParts trial = weighted_merit(system, weights, x_new);
        if (trial.merit < cur.merit) {
          x = std::move(x_new);
          cur = trial;
          lambda = std::max(lambda * config.damping_decrease, 1e-14);
          accepted = true;
        } else {
          lambda = std::min(lambda * config.damping_increase, config.damping_max);
          if (lambda >= config.damping_max) break;
        }
      }

      best_violation = std::min(best_violation, std::max(cur.eq_inf, cur.max_viol));
      if (config.trace)
        config.trace({attempt_index, iter, cur.merit, cur.eq_inf, cur.max_viol, lambda});

      out.iterations = iter + 1;
      if (!accepted || stagnated(best_violation)) {
        out.kind = AttemptOutcome::Kind::Stagnated;
        out.x = x;
        out.merit = cur.merit;
        out.eq_inf = cur.eq_inf;
        out.max_viol = cur.max_viol;
        return out;
      }
    }

    // Ran out of iterations; check the final point before giving up.
    cur = weighted_merit(system, weights, x);
    out.x = x;
    out.merit = cur.merit;
    out.eq_inf = cur.eq_inf;
    out.max_viol = cur.max_viol;
    out.iterations = config.max_iterations;
    out.kind = (cur.eq_inf <= config.eps_eq && cur.max_viol <= config.eps_ineq)
                   ? AttemptOutcome::Kind::Feasible
                   : AttemptOutcome::Kind::OutOfIterations;
    return out;
  } catch (const NumericalError&) {
    out.kind = AttemptOutcome::Kind::NumericalFailure;
    out.x = Eigen::VectorXd::Zero(n);
    out.merit = std::numeric_limits<double>::infinity();
    out.eq_inf = std::numeric_limits<double>::infinity();
    out.max_viol = std::numeric_limits<double>::infinity();
    return out;
  }
}

/// Active-set polish: an attempt that stalled close to feasibility often
/// sits between flickering hinge constraints (current cap against
/// complementarity pins |I| into a band a few 1e-6 wide). Freezing the
/// near-active inequalities as equalities turns the needle into a smooth
/// manifold the damped least-squares iteration can follow.
std::optional<AttemptOutcome> polish_active_set(const ConstraintSystem& system,
                                                const SolverConfig& config,
                                                const Eigen::VectorXd& x_terminal,
                                                int attempt_index) {
  const Residuals res = residual(system, x_terminal);
  const double delta = std::max(1e-6, 10.0 * std::max(0.0, res.inequalities.size()
                                                               ? res.inequalities.maxCoeff()
                                                               : 0.0));
  ConstraintSystem polished = system;
  polished.inequalities.clear();
  bool any_active = false;
  for (size_t i = 0; i < system.inequalities.size(); ++i) {
    // Complementarity rows stay inequalities: pinning one as an equality
    // contradicts its own cap row (a saturated current leaves the band
    // satisfied with margin eps, never tight at zero).
    const bool promotable = system.inequalities[i].family != Family::Complementarity;
    if (promotable && res.inequalities[static_cast<Eigen::Index>(i)] >= -delta) {
      polished.equalities.push_back(system.inequalities[i]);
      any_active = true;
    } else {
      polished.inequalities.push_back(system.inequalities[i]);
    }
  }
  if (!any_active) return std::nullopt;

  SolverConfig cfg = config;
  cfg.trace = nullptr;
  AttemptOutcome out = run_attempt(polished, cfg, x_terminal, attempt_index);
  if (out.kind != AttemptOutcome::Kind::Feasible) return std::nullopt;
  if (!check_feasible(system, out.x, config.eps_eq, config.eps_ineq)) return std::nullopt;

  const Residuals fin = residual(system, out.x);
  out.eq_inf = fin.equalities.size() ? fin.equalities.cwiseAbs().maxCoeff() : 0.0;
  out.max_viol = fin.inequalities.size() ? std::max(0.0, fin.inequalities.maxCoeff()) : 0.0;
  return out;
}

Eigen::VectorXd jittered_start(const ConstraintSystem& system, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  Eigen::VectorXd x = system.start;
  for (int i = 0; i < system.n_vars(); ++i) x[i] += u(rng);
  clamp_to_bounds(system, x);
  return x;
}

std::vector<ConstraintViolation> worst_violations(const ConstraintSystem& system,
                                                  const Eigen::VectorXd& x, size_t count) {
  const Residuals res = residual(system, x);
  std::vector<ConstraintViolation> all;
  for (size_t i = 0; i < system.equalities.size(); ++i)
    all.push_back({system.equalities[i].name,
                   std::abs(res.equalities[static_cast<Eigen::Index>(i)])});
  for (size_t i = 0; i < system.inequalities.size(); ++i)
    all.push_back({system.inequalities[i].name,
                   std::max(0.0, res.inequalities[static_cast<Eigen::Index>(i)])});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.name < b.name;
  });
  if (all.size() > count) all.resize(count);
  return all;
}

}  // namespace

SolveResult solve(const ConstraintSystem& system, const SolverConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();

  SolveResult result;
  int total_iterations = 0;
  bool any_out_of_iterations = false;
  std::optional<AttemptOutcome> best;

  // Branch priority: probe the unsaturated branch by pinning every
  // activation variable at zero. When that problem is feasible the
  // inverters behave as plain sources and the solution carries exact-zero
  // activations; otherwise the full system decides.
  if (config.pin_activations_first) {
    std::vector<int> activation_vars;
    for (int i = 0; i < system.n_vars(); ++i) {
      const VarKind kind = system.vars.keys[static_cast<size_t>(i)].kind;
      if (kind == VarKind::GflActivation || kind == VarKind::GfmSimpleResistance ||
          kind == VarKind::GfmComplexActivation)
        activation_vars.push_back(i);
    }
    if (!activation_vars.empty()) {
      ConstraintSystem pinned = system;
      for (int i : activation_vars) {
        pinned.lower[i] = 0.0;
        pinned.upper[i] = 0.0;
        pinned.start[i] = 0.0;
      }
      SolverConfig probe = config;
      probe.pin_activations_first = false;
      AttemptOutcome outcome = run_attempt(pinned, probe, initial_point(pinned, probe), -1);
      total_iterations += outcome.iterations;
      if (outcome.kind == AttemptOutcome::Kind::Feasible &&
          check_feasible(system, outcome.x, config.eps_eq, config.eps_ineq)) {
        best = std::move(outcome);
      }
    }
  }

  const int attempts = 1 + std::max(0, config.restarts);
  const bool probe_succeeded = best.has_value();
  for (int a = 0; a < attempts && !probe_succeeded; ++a) {
    Eigen::VectorXd x0;
    if (a == 0) {
      x0 = initial_point(system, config);
    } else {
      x0 = jittered_start(system, static_cast<unsigned>(a));
    }
    AttemptOutcome outcome = run_attempt(system, config, std::move(x0), a);
    total_iterations += outcome.iterations;
    if (outcome.kind != AttemptOutcome::Kind::Feasible &&
        outcome.kind != AttemptOutcome::Kind::NumericalFailure &&
        std::max(outcome.eq_inf, outcome.max_viol) < 1e-2) {
      if (auto polished = polish_active_set(system, config, outcome.x, a)) {
        total_iterations += polished->iterations;
        outcome = std::move(*polished);
      }
    }
    if (outcome.kind == AttemptOutcome::Kind::OutOfIterations) any_out_of_iterations = true;
    const auto measure = [](const AttemptOutcome& o) { return std::max(o.eq_inf, o.max_viol); };
    if (!best || measure(outcome) < measure(*best)) best = outcome;
    result.attempts = a + 1;
    if (outcome.kind == AttemptOutcome::Kind::Feasible) break;
  }

  result.iterations = total_iterations;
  result.x = best->x;
  result.eq_norm_inf = best->eq_inf;
  result.max_violation = best->max_viol;

  if (best->kind == AttemptOutcome::Kind::Feasible) {
    result.status = SolveStatus::Feasible;
  } else if (any_out_of_iterations) {
    result.status = SolveStatus::IterationLimit;
  } else {
    result.status = SolveStatus::Infeasible;
  }

  if (result.status != SolveStatus::Feasible) {
    InfeasibilityCertificate cert;
    cert.merit = std::max(best->eq_inf, best->max_viol);
    cert.eq_norm_inf = best->eq_inf;
    cert.max_violation = best->max_viol;
    cert.worst = worst_violations(system, best->x, 5);
    result.certificate = std::move(cert);
  } else {
    // Tight caps and bounds at the solution.
    const Residuals res = residual(system, result.x);
    for (size_t i = 0; i < system.inequalities.size(); ++i)
      if (res.inequalities[static_cast<Eigen::Index>(i)] >= -config.eps_ineq)
        result.active_set.push_back(system.inequalities[i].name);
    for (int i = 0; i < system.n_vars(); ++i) {
      const double v = result.x[i];
      if (std::isfinite(system.lower[i]) && v - system.lower[i] <= config.eps_ineq)
        result.active_set.push_back("lb:" + system.vars.keys[static_cast<size_t>(i)].name());
      else if (std::isfinite(system.upper[i]) && system.upper[i] - v <= config.eps_ineq)
        result.active_set.push_back("ub:" + system.vars.keys[static_cast<size_t>(i)].name());
    }
  }

  const auto t1 = std::chrono::steady_clock::now();
  result.elapsed_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return result;
}

bool check_feasible(const ConstraintSystem& system, const Eigen::VectorXd& x, double eps_eq,
                    double eps_ineq) {
  const Residuals res = residual(system, x);
  const double eq = res.equalities.size() ? res.equalities.cwiseAbs().maxCoeff() : 0.0;
  const double viol =
      res.inequalities.size() ? std::max(0.0, res.inequalities.maxCoeff()) : 0.0;
  if (eq > eps_eq || viol > eps_ineq) return false;
  for (int i = 0; i < system.n_vars(); ++i)
    if (x[i] < system.lower[i] - eps_ineq || x[i] > system.upper[i] + eps_ineq) return false;
  return true;
}

InfeasibilityReport classify_infeasibility(const SolveResult& result,
                                           const ConstraintSystem& system) {
  if (result.status == SolveStatus::Feasible)
    throw ValidationError("classify_infeasibility: result is feasible");

  // Diagnostic descent: drive the network-law equalities as hard as
  // possible from the terminal point so the remaining violation sits on
  // the constraints that genuinely block feasibility.
  SolverConfig diag;
  diag.equality_emphasis = 100.0;
  diag.max_iterations = 80;
  diag.restarts = 0;
  Eigen::VectorXd at = result.x;
  const AttemptOutcome refined = run_attempt(system, diag, at, -1);
  if (refined.x.size() == at.size() && refined.eq_inf <= result.eq_norm_inf) at = refined.x;

  const Residuals res = residual(system, at);
  std::map<Family, FamilyViolation> acc;
  auto record = [&](const Constraint& c, double v) {
    if (v <= 0.0) return;
    FamilyViolation& fv = acc.try_emplace(c.family, FamilyViolation{c.family, 0.0, {}}).first->second;
    fv.mass += v;
    fv.worst.push_back({c.name, v});
  };
  for (size_t i = 0; i < system.equalities.size(); ++i)
    record(system.equalities[i], std::abs(res.equalities[static_cast<Eigen::Index>(i)]));
  for (size_t i = 0; i < system.inequalities.size(); ++i)
    record(system.inequalities[i],
           std::max(0.0, res.inequalities[static_cast<Eigen::Index>(i)]));

  InfeasibilityReport report;
  for (auto& [family, fv] : acc) {
    std::sort(fv.worst.begin(), fv.worst.end(), [](const auto& a, const auto& b) {
      if (a.value != b.value) return a.value > b.value;
      return a.name < b.name;
    });
    if (fv.worst.size() > 5) fv.worst.resize(5);
    report.families.push_back(std::move(fv));
  }
  std::sort(report.families.begin(), report.families.end(), [](const auto& a, const auto& b) {
    if (a.mass != b.mass) return a.mass > b.mass;
    return static_cast<int>(a.family) < static_cast<int>(b.family);
  });
  return report;
}

}  // namespace ff
