#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include <faultforge/formulation.hpp>

// Straight-line re-implementation of every constraint, computed from the
// model data and a variable vector, independent of the polynomial tables the
// formulation assembles. Used as the residual oracle.

namespace fftest {

class NaiveEvaluator {
public:
  NaiveEvaluator(const ff::NetworkModel& model, const std::optional<ff::FaultAdmittance>& fault,
                 const ff::ConstraintSystem& sys, const Eigen::VectorXd& x)
      : model_(model), fault_(fault), sys_(sys), x_(x) {}

  ff::Residuals evaluate() const {
    ff::Residuals out;
    out.equalities.resize(static_cast<Eigen::Index>(sys_.equalities.size()));
    out.inequalities.resize(static_cast<Eigen::Index>(sys_.inequalities.size()));
    for (size_t i = 0; i < sys_.equalities.size(); ++i)
      out.equalities[static_cast<Eigen::Index>(i)] = one(sys_.equalities[i]);
    for (size_t i = 0; i < sys_.inequalities.size(); ++i)
      out.inequalities[static_cast<Eigen::Index>(i)] = one(sys_.inequalities[i]);
    return out;
  }

private:
  double var(ff::VarKind kind, const std::string& owner, std::optional<ff::Phase> phase,
             ff::Port port = ff::Port::None) const {
    return x_[sys_.vars.require({kind, owner, port, phase})];
  }
  ff::Complex voltage(const std::string& bus, ff::Phase p) const {
    return {var(ff::VarKind::BusVoltageRe, bus, p), var(ff::VarKind::BusVoltageIm, bus, p)};
  }
  ff::Complex current(const std::string& owner, ff::Phase p,
                      ff::Port port = ff::Port::None) const {
    return {var(ff::VarKind::ElementCurrentRe, owner, p, port),
            var(ff::VarKind::ElementCurrentIm, owner, p, port)};
  }

  static std::string prefix(const std::string& name) { return name.substr(0, name.find('[')); }

  double one(const ff::Constraint& c) const {
    const std::string what = prefix(c.name);
    const std::string& id = c.source_id;
    const bool re = c.component == ff::Component::Re;

    if (what == "source_emf_re" || what == "source_emf_im") {
      const auto& src = find(model_.sources, id);
      const ff::Phase p = *c.phase;
      const ff::Complex e = src.emf(p);
      const ff::Complex i = current(id, p);
      const ff::Complex v = voltage(src.bus, p);
      // V_terminal = E - z I, componentwise with z = r + jx.
      const double drop_r = src.r.at(p) * i.real() - src.x.at(p) * i.imag();
      const double drop_i = src.r.at(p) * i.imag() + src.x.at(p) * i.real();
      return re ? e.real() - drop_r - v.real() : e.imag() - drop_i - v.imag();
    }

    if (what == "gen_p" || what == "gen_q") {
      const auto& g = find(model_.generators, id);
      const ff::Phase p = *c.phase;
      const ff::Complex v = voltage(g.bus, p);
      const ff::Complex i = current(id, p);
      if (what == "gen_p")
        return v.real() * i.real() + v.imag() * i.imag() - var(ff::VarKind::GenPowerP, id, p);
      return v.imag() * i.real() - v.real() * i.imag() - var(ff::VarKind::GenPowerQ, id, p);
    }
    if (what == "gen_p_band_hi" || what == "gen_p_band_lo" || what == "gen_q_band_hi" ||
        what == "gen_q_band_lo") {
      const auto& g = find(model_.generators, id);
      const ff::Phase p = *c.phase;
      const bool is_p = what[4] == 'p';
      const double setp = is_p ? g.p_setp.at(p) : g.q_setp.at(p);
      const double band = g.slack_fraction * std::abs(setp);
      const double val = var(is_p ? ff::VarKind::GenPowerP : ff::VarKind::GenPowerQ, id, p);
      return what.ends_with("hi") ? val - (setp + band) : (setp - band) - val;
    }
    if (what == "gen_pf_hi" || what == "gen_pf_lo") {
      const auto& g = find(model_.generators, id);
      const ff::Phase p = *c.phase;
      const double k = std::tan(std::acos(g.pf));
      const double pp = var(ff::VarKind::GenPowerP, id, p);
      const double qq = var(ff::VarKind::GenPowerQ, id, p);
      return what.ends_with("hi") ? qq - k * pp : -qq - k * pp;
    }

    if (what.starts_with("gfl_")) {
      const auto& inv = find(model_.gfl_inverters, id);
      const ff::Phase p = *c.phase;
      const ff::Complex v = voltage(inv.bus, p);
      const ff::Complex i = current(id, p);
      const double imax_sq = inv.i_max.at(p) * inv.i_max.at(p);
      const double i_sq = std::norm(i);
      const double pw = v.real() * i.real() + v.imag() * i.imag();
      const double q = v.imag() * i.real() - v.real() * i.imag();
      const double z = var(ff::VarKind::GflActivation, id, p);
      if (what == "gfl_cap") return i_sq - imax_sq;
      if (what == "gfl_power") return pw - inv.p_setp.at(p) + z;
      if (what == "gfl_comp") return (imax_sq - i_sq) * z - sys_.options.comp_bound();
      if (what == "gfl_p_nonneg") return -pw;
      if (what == "gfl_q_hi") return q - inv.q_max.at(p);
      if (what == "gfl_q_lo") return inv.q_min.at(p) - q;
    }

    if (what.starts_with("gfms_")) {
      const auto& inv = find(model_.gfm_simple_inverters, id);
      const ff::Phase p = *c.phase;
      const ff::Complex v = voltage(inv.bus, p);
      const ff::Complex i = current(id, p);
      const double imax_sq = inv.i_max.at(p) * inv.i_max.at(p);
      const double rth = var(ff::VarKind::GfmSimpleResistance, id, p);
      if (what == "gfms_cap") return std::norm(i) - imax_sq;
      if (what == "gfms_comp") return (imax_sq - std::norm(i)) * rth - sys_.options.comp_bound();
      if (what == "gfms_thevenin_re") return inv.v0_r.at(p) - rth * i.real() - v.real();
      if (what == "gfms_thevenin_im") return inv.v0_i.at(p) - rth * i.imag() - v.imag();
    }

    if (what.starts_with("gfmc_")) {
      const auto& inv = find(model_.gfm_complex_inverters, id);
      if (what == "gfmc_total_p" || what == "gfmc_total_q") {
        double acc = 0.0;
        for (const auto& [p, _] : inv.v0_r) {
          const ff::Complex v = voltage(inv.bus, p);
          const ff::Complex i = current(id, p);
          acc += what == "gfmc_total_p" ? v.real() * i.real() + v.imag() * i.imag()
                                        : v.imag() * i.real() - v.real() * i.imag();
        }
        return acc - var(what == "gfmc_total_p" ? ff::VarKind::GenPowerP : ff::VarKind::GenPowerQ,
                         id, std::nullopt);
      }
      if (what == "gfmc_power_cap") {
        const double pp = var(ff::VarKind::GenPowerP, id, std::nullopt);
        const double qq = var(ff::VarKind::GenPowerQ, id, std::nullopt);
        return sys_.options.strict_apparent_cap
                   ? pp * pp + qq * qq - inv.s_max * inv.s_max
                   : pp + qq - inv.s_max;
      }
      const ff::Phase p = *c.phase;
      const ff::Complex v = voltage(inv.bus, p);
      const ff::Complex i = current(id, p);
      const double imax_sq = inv.i_max.at(p) * inv.i_max.at(p);
      const double z = var(ff::VarKind::GfmComplexActivation, id, p);
      const double v0r = inv.v0_r.at(p), v0i = inv.v0_i.at(p);
      const double v0_sq = v0r * v0r + v0i * v0i;
      if (what == "gfmc_cap") return std::norm(i) - imax_sq;
      if (what == "gfmc_comp") return (imax_sq - std::norm(i)) * z - sys_.options.comp_bound();
      if (what == "gfmc_vmag_hi") return std::norm(v) - v0_sq * (1.0 + z);
      if (what == "gfmc_vmag_lo") return v0_sq * (1.0 - z) - std::norm(v);
      if (what == "gfmc_angle") return v.real() * v0i - v.imag() * v0r;
      if (what == "gfmc_sign_re") return -v.real() * v0r;
      if (what == "gfmc_sign_im") return -v.imag() * v0i;
    }

    if (what == "vmag_hi" || what == "vmag_lo") {
      const ff::Bus& bus = model_.bus(id);
      const double mag_sq = std::norm(voltage(id, *c.phase));
      return what == "vmag_hi" ? mag_sq - bus.v_max_sq : bus.v_min_sq - mag_sq;
    }

    if (what == "line_ohm_re" || what == "line_ohm_im" || what == "line_thermal") {
      const auto& ln = find(model_.lines, id);
      const ff::Phase p = *c.phase;
      const ff::Complex i = current(id, p);
      if (what == "line_thermal") return std::norm(i) - ln.i_thermal_sq.at(p);
      const ff::Complex vf = voltage(ln.from_bus, p);
      const ff::Complex vt = voltage(ln.to_bus, p);
      const double drop_r = ln.r.at(p) * i.real() - ln.x.at(p) * i.imag();
      const double drop_i = ln.r.at(p) * i.imag() + ln.x.at(p) * i.real();
      return what == "line_ohm_re" ? vf.real() - drop_r - vt.real()
                                   : vf.imag() - drop_i - vt.imag();
    }

    if (what.starts_with("xfmr_")) {
      const auto& tr = find(model_.transformers, id);
      const ff::Phase p = *c.phase;
      if (what == "xfmr_v_re")
        return tr.winding_factor * voltage(tr.from_bus, p).real() -
               tr.eta * voltage(tr.to_bus, p).real();
      if (what == "xfmr_v_im")
        return tr.winding_factor * voltage(tr.from_bus, p).imag() -
               tr.eta * voltage(tr.to_bus, p).imag();
      const ff::Complex i_from = current(id, p, ff::Port::From);
      const ff::Complex i_to = current(id, p, ff::Port::To);
      if (what == "xfmr_i_re") return i_from.real() - tr.eta * i_to.real();
      if (what == "xfmr_i_im") return i_from.imag() - tr.eta * i_to.imag();
      if (what == "xfmr_thermal") return std::norm(i_from) - tr.i_thermal_sq.at(p);
    }

    if (what == "fault_def_re" || what == "fault_def_im") {
      const ff::Phase p = *c.phase;
      const int row = fault_->index_of(p);
      double acc = re ? var(ff::VarKind::FaultCurrentRe, fault_->bus, p)
                      : var(ff::VarKind::FaultCurrentIm, fault_->bus, p);
      for (size_t cidx = 0; cidx < fault_->phases.size(); ++cidx) {
        const ff::Complex v = voltage(fault_->bus, fault_->phases[cidx]);
        acc -= fault_->conductance(row, static_cast<int>(cidx)) * (re ? v.real() : v.imag());
      }
      return acc;
    }

    if (what == "kcl_re" || what == "kcl_im") {
      const ff::Phase p = *c.phase;
      ff::Complex acc = 0.0;
      for (const auto& ln : model_.lines) {
        if (ln.status != ff::Status::On || !ln.r.count(p)) continue;
        if (ln.from_bus == id) acc += current(ln.id, p);
        if (ln.to_bus == id) acc -= current(ln.id, p);
      }
      for (const auto& tr : model_.transformers) {
        if (tr.status != ff::Status::On || !tr.i_thermal_sq.count(p)) continue;
        if (tr.from_bus == id) acc += current(tr.id, p, ff::Port::From);
        if (tr.to_bus == id) acc -= current(tr.id, p, ff::Port::To);
      }
      for (const auto& e : model_.sources)
        if (e.status == ff::Status::On && e.bus == id && e.v_setp.count(p))
          acc -= current(e.id, p);
      for (const auto& e : model_.generators)
        if (e.status == ff::Status::On && e.bus == id && e.p_setp.count(p))
          acc -= current(e.id, p);
      for (const auto& e : model_.gfl_inverters)
        if (e.status == ff::Status::On && e.bus == id && e.p_setp.count(p))
          acc -= current(e.id, p);
      for (const auto& e : model_.gfm_simple_inverters)
        if (e.status == ff::Status::On && e.bus == id && e.v0_r.count(p))
          acc -= current(e.id, p);
      for (const auto& e : model_.gfm_complex_inverters)
        if (e.status == ff::Status::On && e.bus == id && e.v0_r.count(p))
          acc -= current(e.id, p);
      for (const auto& sh : model_.shunts) {
        if (sh.status != ff::Status::On || sh.bus != id || !sh.g.count(p)) continue;
        const ff::Complex v = voltage(id, p);
        const ff::Complex y(sh.g.at(p), sh.b.at(p));
        acc += y * v;  // shunt draw
      }
      if (fault_ && fault_->bus == id && fault_->covers(p)) {
        acc += ff::Complex(var(ff::VarKind::FaultCurrentRe, id, p),
                           var(ff::VarKind::FaultCurrentIm, id, p));
      }
      return what == "kcl_re" ? acc.real() : acc.imag();
    }

    throw std::logic_error("naive evaluator: unhandled constraint " + c.name);
  }

  template <typename T>
  static const T& find(const std::vector<T>& v, const std::string& id) {
    for (const T& e : v)
      if (e.id == id) return e;
    throw std::logic_error("naive evaluator: unknown element " + id);
  }

  const ff::NetworkModel& model_;
  const std::optional<ff::FaultAdmittance>& fault_;
  const ff::ConstraintSystem& sys_;
  const Eigen::VectorXd& x_;
};

inline ff::Residuals naive_residuals(const ff::NetworkModel& model,
                                     const std::optional<ff::FaultAdmittance>& fault,
                                     const ff::ConstraintSystem& sys, const Eigen::VectorXd& x) {
  return NaiveEvaluator(model, fault, sys, x).evaluate();
}

}  // namespace fftest
