#include "faultforge/formulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace ff {

using nlohmann::ordered_json;

std::string var_kind_name(VarKind k) {
  switch (k) {
    case VarKind::BusVoltageRe: return "v_r";
    case VarKind::BusVoltageIm: return "v_i";
    case VarKind::ElementCurrentRe: return "i_r";
    case VarKind::ElementCurrentIm: return "i_i";
    case VarKind::FaultCurrentRe: return "if_r";
    case VarKind::FaultCurrentIm: return "if_i";
    case VarKind::GflActivation: return "z_gfl";
    case VarKind::GfmSimpleResistance: return "r_gfm";
    case VarKind::GfmComplexActivation: return "z_gfmc";
    case VarKind::GenPowerP: return "p";
    case VarKind::GenPowerQ: return "q";
  }
  return {};
}

std::string family_name(Family f) {
  switch (f) {
    case Family::SourceEmf: return "source_emf";
    case Family::Power: return "power";
    case Family::VoltageMagnitude: return "voltage_magnitude";
    case Family::CurrentCap: return "current_cap";
    case Family::Kcl: return "kcl";
    case Family::Ohm: return "ohm";
    case Family::TransformerRatio: return "transformer_ratio";
    case Family::FaultDefinition: return "fault_definition";
    case Family::Complementarity: return "complementarity";
    case Family::AngleLock: return "angle_lock";
  }
  return {};
}

std::string VariableKey::name() const {
  std::string out = var_kind_name(kind) + "[" + owner;
  if (port == Port::From) out += ".from";
  if (port == Port::To) out += ".to";
  if (phase) out += std::string(".") + phase_label(*phase);
  return out + "]";
}

void Polynomial::add(double coeff) { terms.push_back({coeff, {-1, -1, -1}, 0}); }
void Polynomial::add(double coeff, int32_t a) { terms.push_back({coeff, {a, -1, -1}, 1}); }
void Polynomial::add(double coeff, int32_t a, int32_t b) {
  terms.push_back({coeff, {a, b, -1}, 2});
}
void Polynomial::add(double coeff, int32_t a, int32_t b, int32_t c) {
  terms.push_back({coeff, {a, b, c}, 3});
}

double Polynomial::eval(const Eigen::VectorXd& x) const {
  double acc = 0.0;
  for (const Monomial& t : terms) {
    double v = t.coeff;
    for (int k = 0; k < t.degree; ++k) v *= x[t.vars[k]];
    acc += v;
  }
  return acc;
}

void Polynomial::gradient(const Eigen::VectorXd& x, int row,
                          std::vector<Eigen::Triplet<double>>& out) const {
  for (const Monomial& t : terms) {
    for (int p = 0; p < t.degree; ++p) {
      double v = t.coeff;
      for (int k = 0; k < t.degree; ++k)
        if (k != p) v *= x[t.vars[k]];
      out.emplace_back(row, t.vars[p], v);
    }
  }
}

std::vector<int32_t> Polynomial::support() const {
  std::vector<int32_t> vars;
  for (const Monomial& t : terms)
    for (int k = 0; k < t.degree; ++k) vars.push_back(t.vars[k]);
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  return vars;
}

int32_t VariableTable::add(const VariableKey& key) {
  auto [it, inserted] = index_of.emplace(key, static_cast<int32_t>(keys.size()));
  if (!inserted) throw ValidationError("duplicate variable " + key.name());
  keys.push_back(key);
  return it->second;
}

int32_t VariableTable::require(const VariableKey& key) const {
  auto it = index_of.find(key);
  if (it == index_of.end()) throw ValidationError("unregistered variable " + key.name());
  return it->second;
}

std::optional<int32_t> VariableTable::find(const VariableKey& key) const {
  auto it = index_of.find(key);
  if (it == index_of.end()) return std::nullopt;
  return it->second;
}

bool ConstraintSystem::same_layout(const ConstraintSystem& other) const {
  return vars.keys == other.vars.keys;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string tag(const std::string& owner, Phase p) {
  return "[" + owner + "." + phase_label(p) + "]";
}

std::vector<Phase> keys_of(const PhaseMap<double>& m) {
  std::vector<Phase> out;
  for (const auto& [p, _] : m) out.push_back(p);
  return out;
}

/// Assembly context: variable lookups plus constraint emission.
struct Builder {
  const NetworkModel& model;
  ConstraintSystem sys;

  explicit Builder(const NetworkModel& m) : model(m) {}

  int32_t add_var(VarKind kind, const std::string& owner, std::optional<Phase> phase,
                  Port port = Port::None) {
    return sys.vars.add({kind, owner, port, phase});
  }
  int32_t var(VarKind kind, const std::string& owner, std::optional<Phase> phase,
              Port port = Port::None) const {
    return sys.vars.require({kind, owner, port, phase});
  }
  int32_t v_re(const std::string& bus, Phase p) const {
    return var(VarKind::BusVoltageRe, bus, p);
  }
  int32_t v_im(const std::string& bus, Phase p) const {
    return var(VarKind::BusVoltageIm, bus, p);
  }

  void eq(std::string name, Family family, std::string source, std::optional<Phase> phase,
          Component comp, Polynomial poly) {
    sys.equalities.push_back(
        {std::move(name), family, std::move(source), phase, comp, std::move(poly)});
  }
  void le(std::string name, Family family, std::string source, std::optional<Phase> phase,
          Polynomial poly) {
    sys.inequalities.push_back(
        {std::move(name), family, std::move(source), phase, Component::None, std::move(poly)});
  }
};

}  // namespace

ConstraintSystem assemble(const NetworkModel& model, const std::optional<FaultAdmittance>& fault,
                          const AssembleOptions& options) {
  model.validate();
  Builder b(model);
  b.sys.options = options;

  if (fault) {
    if (!model.has_bus(fault->bus))
      throw ValidationError("fault: bus '" + fault->bus + "' not in model");
    const Bus& fb = model.bus(fault->bus);
    for (Phase p : fault->phases)
      if (!fb.has_phase(p))
        throw ValidationError("fault: phase " + std::string(1, phase_label(p)) +
                              " not present at bus '" + fault->bus + "'");
    b.sys.faulted_bus = fault->bus;
  }

  // --- variable registration, deterministic order ---
  for (const Bus& bus : model.buses)
    for (Phase p : bus.phases) {
      b.add_var(VarKind::BusVoltageRe, bus.id, p);
      b.add_var(VarKind::BusVoltageIm, bus.id, p);
    }
  for (const ReferenceSource& src : model.sources) {
    if (src.status != Status::On) continue;
    for (Phase p : keys_of(src.v_setp)) {
      b.add_var(VarKind::ElementCurrentRe, src.id, p);
      b.add_var(VarKind::ElementCurrentIm, src.id, p);
    }
  }
  for (const SyncGenerator& g : model.generators) {
    if (g.status != Status::On) continue;
    for (Phase p : keys_of(g.p_setp)) {
      b.add_var(VarKind::ElementCurrentRe, g.id, p);
      b.add_var(VarKind::ElementCurrentIm, g.id, p);
      b.add_var(VarKind::GenPowerP, g.id, p);
      b.add_var(VarKind::GenPowerQ, g.id, p);
    }
  }
  for (const GridFollowingInverter& inv : model.gfl_inverters) {
    if (inv.status != Status::On) continue;
    for (Phase p : keys_of(inv.p_setp)) {
      b.add_var(VarKind::ElementCurrentRe, inv.id, p);
      b.add_var(VarKind::ElementCurrentIm, inv.id, p);
      b.add_var(VarKind::GflActivation, inv.id, p);
    }
  }
  for (const GridFormingInverterSimple& inv : model.gfm_simple_inverters) {
    if (inv.status != Status::On) continue;
    for (Phase p : keys_of(inv.v0_r)) {
      b.add_var(VarKind::ElementCurrentRe, inv.id, p);
      b.add_var(VarKind::ElementCurrentIm, inv.id, p);
      b.add_var(VarKind::GfmSimpleResistance, inv.id, p);
    }
  }
  for (const GridFormingInverterComplex& inv : model.gfm_complex_inverters) {
    if (inv.status != Status::On) continue;
    for (Phase p : keys_of(inv.v0_r)) {
      b.add_var(VarKind::ElementCurrentRe, inv.id, p);
      b.add_var(VarKind::ElementCurrentIm, inv.id, p);
      b.add_var(VarKind::GfmComplexActivation, inv.id, p);
    }
    b.add_var(VarKind::GenPowerP, inv.id, std::nullopt);
    b.add_var(VarKind::GenPowerQ, inv.id, std::nullopt);
  }
  for (const Line& ln : model.lines) {
    if (ln.status != Status::On) continue;
    for (Phase p : keys_of(ln.r)) {
      b.add_var(VarKind::ElementCurrentRe, ln.id, p);
      b.add_var(VarKind::ElementCurrentIm, ln.id, p);
    }
  }
  for (const Transformer& tr : model.transformers) {
    if (tr.status != Status::On) continue;
    for (Phase p : keys_of(tr.i_thermal_sq)) {
      b.add_var(VarKind::ElementCurrentRe, tr.id, p, Port::From);
      b.add_var(VarKind::ElementCurrentIm, tr.id, p, Port::From);
      b.add_var(VarKind::ElementCurrentRe, tr.id, p, Port::To);
      b.add_var(VarKind::ElementCurrentIm, tr.id, p, Port::To);
    }
  }
  if (fault) {
    for (Phase p : fault->phases) {
      b.add_var(VarKind::FaultCurrentRe, fault->bus, p);
      b.add_var(VarKind::FaultCurrentIm, fault->bus, p);
    }
  }

  const int n = b.sys.n_vars();
  b.sys.lower = Eigen::VectorXd::Constant(n, -kInf);
  b.sys.upper = Eigen::VectorXd::Constant(n, kInf);

  // Flat start: nominal balanced voltage phasors, zero currents and
  // activations, generator powers at their setpoints.
  b.sys.start = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const VariableKey& key = b.sys.vars.keys[static_cast<size_t>(i)];
    if (key.kind == VarKind::BusVoltageRe)
      b.sys.start[i] = std::cos(-2.0943951023931953 * static_cast<int>(*key.phase));
    else if (key.kind == VarKind::BusVoltageIm)
      b.sys.start[i] = std::sin(-2.0943951023931953 * static_cast<int>(*key.phase));
  }
  for (const SyncGenerator& g : model.generators) {
    if (g.status != Status::On) continue;
    for (const auto& [p, setp] : g.p_setp)
      b.sys.start[b.var(VarKind::GenPowerP, g.id, p)] = setp;
    for (const auto& [p, setp] : g.q_setp)
      b.sys.start[b.var(VarKind::GenPowerQ, g.id, p)] = setp;
  }
  for (const GridFormingInverterComplex& inv : model.gfm_complex_inverters) {
    if (inv.status != Status::On) continue;
    b.sys.start[b.var(VarKind::GenPowerP, inv.id, std::nullopt)] = inv.p_target;
    b.sys.start[b.var(VarKind::GenPowerQ, inv.id, std::nullopt)] = inv.q_target;
  }

  // --- reference sources: EMF behind internal impedance ---
  for (const ReferenceSource& src : model.sources) {
    if (src.status != Status::On) continue;
    for (Phase p : keys_of(src.v_setp)) {
      const Complex e = src.emf(p);
      const double r = src.r.at(p), x = src.x.at(p);
      const int32_t ir = b.var(VarKind::ElementCurrentRe, src.id, p);
      const int32_t ii = b.var(VarKind::ElementCurrentIm, src.id, p);
      Polynomial re;
      re.add(e.real());
      re.add(-r, ir);
      re.add(+x, ii);
      re.add(-1.0, b.v_re(src.bus, p));
      b.eq("source_emf_re" + tag(src.id, p), Family::SourceEmf, src.id, p, Component::Re,
           std::move(re));
      Polynomial im;
      im.add(e.imag());
      im.add(-r, ii);
      im.add(-x, ir);
      im.add(-1.0, b.v_im(src.bus, p));
      b.eq("source_emf_im" + tag(src.id, p), Family::SourceEmf, src.id, p, Component::Im,
           std::move(im));
    }
  }

  // --- synchronous generators: power products, slack bands, pf envelope ---
  for (const SyncGenerator& g : model.generators) {
    if (g.status != Status::On) continue;
    const double k = std::tan(std::acos(g.pf));
    for (Phase p : keys_of(g.p_setp)) {
      const int32_t vr = b.v_re(g.bus, p), vi = b.v_im(g.bus, p);
      const int32_t ir = b.var(VarKind::ElementCurrentRe, g.id, p);
      const int32_t ii = b.var(VarKind::ElementCurrentIm, g.id, p);
      const int32_t vp = b.var(VarKind::GenPowerP, g.id, p);
      const int32_t vq = b.var(VarKind::GenPowerQ, g.id, p);

      Polynomial cp;
      cp.add(1.0, vr, ir);
      cp.add(1.0, vi, ii);
      cp.add(-1.0, vp);
      b.eq("gen_p" + tag(g.id, p), Family::Power, g.id, p, Component::Re, std::move(cp));
      Polynomial cq;
      cq.add(1.0, vi, ir);
      cq.add(-1.0, vr, ii);
      cq.add(-1.0, vq);
      b.eq("gen_q" + tag(g.id, p), Family::Power, g.id, p, Component::Im, std::move(cq));

      const double pband = g.slack_fraction * std::abs(g.p_setp.at(p));
      const double qband = g.slack_fraction * std::abs(g.q_setp.at(p));
      Polynomial phi;
      phi.add(1.0, vp);
      phi.add(-(g.p_setp.at(p) + pband));
      b.le("gen_p_band_hi" + tag(g.id, p), Family::Power, g.id, p, std::move(phi));
      Polynomial plo;
      plo.add(-1.0, vp);
      plo.add(g.p_setp.at(p) - pband);
      b.le("gen_p_band_lo" + tag(g.id, p), Family::Power, g.id, p, std::move(plo));
      Polynomial qhi;
      qhi.add(1.0, vq);
      qhi.add(-(g.q_setp.at(p) + qband));
      b.le("gen_q_band_hi" + tag(g.id, p), Family::Power, g.id, p, std::move(qhi));
      Polynomial qlo;
      qlo.add(-1.0, vq);
      qlo.add(g.q_setp.at(p) - qband);
      b.le("gen_q_band_lo" + tag(g.id, p), Family::Power, g.id, p, std::move(qlo));

      // pf envelope, generation convention: P >= 0.
      Polynomial pf_hi;
      pf_hi.add(1.0, vq);
      pf_hi.add(-k, vp);
      b.le("gen_pf_hi" + tag(g.id, p), Family::Power, g.id, p, std::move(pf_hi));
      Polynomial pf_lo;
      pf_lo.add(-1.0, vq);
      pf_lo.add(-k, vp);
      b.le("gen_pf_lo" + tag(g.id, p), Family::Power, g.id, p, std::move(pf_lo));
      b.sys.lower[vp] = 0.0;
    }
  }

  // --- grid-following inverters ---
  for (const GridFollowingInverter& inv : model.gfl_inverters) {
    if (inv.status != Status::On) continue;
    for (Phase p : keys_of(inv.p_setp)) {
      const int32_t vr = b.v_re(inv.bus, p), vi = b.v_im(inv.bus, p);
      const int32_t ir = b.var(VarKind::ElementCurrentRe, inv.id, p);
      const int32_t ii = b.var(VarKind::ElementCurrentIm, inv.id, p);
      const int32_t z = b.var(VarKind::GflActivation, inv.id, p);
      const double imax_sq = inv.i_max.at(p) * inv.i_max.at(p);

      Polynomial cap;
      cap.add(1.0, ir, ir);
      cap.add(1.0, ii, ii);
      cap.add(-imax_sq);
      b.le("gfl_cap" + tag(inv.id, p), Family::CurrentCap, inv.id, p, std::move(cap));

      // Delivered power tracks the setpoint, less the saturation activation.
      Polynomial pw;
      pw.add(1.0, vr, ir);
      pw.add(1.0, vi, ii);
      pw.add(-inv.p_setp.at(p));
      pw.add(1.0, z);
      b.eq("gfl_power" + tag(inv.id, p), Family::Power, inv.id, p, Component::None,
           std::move(pw));

      // (imax^2 - |I|^2) z <= eps: z can only grow at saturation.
      Polynomial comp;
      comp.add(imax_sq, z);
      comp.add(-1.0, ir, ir, z);
      comp.add(-1.0, ii, ii, z);
      comp.add(-options.comp_bound());
      b.le("gfl_comp" + tag(inv.id, p), Family::Complementarity, inv.id, p, std::move(comp));

      Polynomial pn;
      pn.add(-1.0, vr, ir);
      pn.add(-1.0, vi, ii);
      b.le("gfl_p_nonneg" + tag(inv.id, p), Family::Power, inv.id, p, std::move(pn));

      Polynomial qhi;
      qhi.add(1.0, vi, ir);
      qhi.add(-1.0, vr, ii);
      qhi.add(-inv.q_max.at(p));
      b.le("gfl_q_hi" + tag(inv.id, p), Family::Power, inv.id, p, std::move(qhi));
      Polynomial qlo;
      qlo.add(-1.0, vi, ir);
      qlo.add(1.0, vr, ii);
      qlo.add(inv.q_min.at(p));
      b.le("gfl_q_lo" + tag(inv.id, p), Family::Power, inv.id, p, std::move(qlo));

      b.sys.lower[z] = 0.0;
      b.sys.upper[z] = 1.0;
    }
  }

  // --- simple grid-forming inverters: EMF behind an activation resistance ---
  for (const GridFormingInverterSimple& inv : model.gfm_simple_inverters) {
    if (inv.status != Status::On) continue;
    for (Phase p : keys_of(inv.v0_r)) {
      const int32_t vr = b.v_re(inv.bus, p), vi = b.v_im(inv.bus, p);
      const int32_t ir = b.var(VarKind::ElementCurrentRe, inv.id, p);
      const int32_t ii = b.var(VarKind::ElementCurrentIm, inv.id, p);
      const int32_t rv = b.var(VarKind::GfmSimpleResistance, inv.id, p);
      const double imax = inv.i_max.at(p);
      const double imax_sq = imax * imax;

      Polynomial cap;
      cap.add(1.0, ir, ir);
      cap.add(1.0, ii, ii);
      cap.add(-imax_sq);
      b.le("gfms_cap" + tag(inv.id, p), Family::CurrentCap, inv.id, p, std::move(cap));

      // (imax^2 - |I|^2) act <= eps: the activation lifts off zero only at
      // current saturation.
      Polynomial comp;
      comp.add(imax_sq, rv);
      comp.add(-1.0, ir, ir, rv);
      comp.add(-1.0, ii, ii, rv);
      comp.add(-options.comp_bound());
      b.le("gfms_comp" + tag(inv.id, p), Family::Complementarity, inv.id, p, std::move(comp));

      Polynomial re;
      re.add(inv.v0_r.at(p));
      re.add(-1.0, rv, ir);
      re.add(-1.0, vr);
      b.eq("gfms_thevenin_re" + tag(inv.id, p), Family::Ohm, inv.id, p, Component::Re,
           std::move(re));
      Polynomial im;
      im.add(inv.v0_i.at(p));
      im.add(-1.0, rv, ii);
      im.add(-1.0, vi);
      b.eq("gfms_thevenin_im" + tag(inv.id, p), Family::Ohm, inv.id, p, Component::Im,
           std::move(im));

      b.sys.lower[rv] = 0.0;
      b.sys.upper[rv] = 1.0 / imax;
    }
  }

  // --- complex grid-forming inverters: magnitude window + angle lock ---
  for (const GridFormingInverterComplex& inv : model.gfm_complex_inverters) {
    if (inv.status != Status::On) continue;
    const int32_t vp = b.var(VarKind::GenPowerP, inv.id, std::nullopt);
    const int32_t vq = b.var(VarKind::GenPowerQ, inv.id, std::nullopt);
    Polynomial tp;
    tp.add(-1.0, vp);
    Polynomial tq;
    tq.add(-1.0, vq);

    for (Phase p : keys_of(inv.v0_r)) {
      const int32_t vr = b.v_re(inv.bus, p), vi = b.v_im(inv.bus, p);
      const int32_t ir = b.var(VarKind::ElementCurrentRe, inv.id, p);
      const int32_t ii = b.var(VarKind::ElementCurrentIm, inv.id, p);
      const int32_t z = b.var(VarKind::GfmComplexActivation, inv.id, p);
      const double v0r = inv.v0_r.at(p), v0i = inv.v0_i.at(p);
      const double v0_sq = v0r * v0r + v0i * v0i;
      const double imax_sq = inv.i_max.at(p) * inv.i_max.at(p);

      tp.add(1.0, vr, ir);
      tp.add(1.0, vi, ii);
      tq.add(1.0, vi, ir);
      tq.add(-1.0, vr, ii);

      Polynomial cap;
      cap.add(1.0, ir, ir);
      cap.add(1.0, ii, ii);
      cap.add(-imax_sq);
      b.le("gfmc_cap" + tag(inv.id, p), Family::CurrentCap, inv.id, p, std::move(cap));

      // (imax^2 - |I|^2) act <= eps: the activation lifts off zero only at
      // current saturation.
      Polynomial comp;
      comp.add(imax_sq, z);
      comp.add(-1.0, ir, ir, z);
      comp.add(-1.0, ii, ii, z);
      comp.add(-options.comp_bound());
      b.le("gfmc_comp" + tag(inv.id, p), Family::Complementarity, inv.id, p, std::move(comp));

      Polynomial hi;
      hi.add(1.0, vr, vr);
      hi.add(1.0, vi, vi);
      hi.add(-v0_sq);
      hi.add(-v0_sq, z);
      b.le("gfmc_vmag_hi" + tag(inv.id, p), Family::VoltageMagnitude, inv.id, p, std::move(hi));
      Polynomial lo;
      lo.add(-1.0, vr, vr);
      lo.add(-1.0, vi, vi);
      lo.add(v0_sq);
      lo.add(-v0_sq, z);
      b.le("gfmc_vmag_lo" + tag(inv.id, p), Family::VoltageMagnitude, inv.id, p, std::move(lo));

      // Terminal voltage stays collinear with the pre-fault phasor, same
      // half-plane on both axes.
      Polynomial lock;
      lock.add(v0i, vr);
      lock.add(-v0r, vi);
      b.eq("gfmc_angle" + tag(inv.id, p), Family::AngleLock, inv.id, p, Component::None,
           std::move(lock));
      Polynomial sr;
      sr.add(-v0r, vr);
      b.le("gfmc_sign_re" + tag(inv.id, p), Family::AngleLock, inv.id, p, std::move(sr));
      Polynomial si;
      si.add(-v0i, vi);
      b.le("gfmc_sign_im" + tag(inv.id, p), Family::AngleLock, inv.id, p, std::move(si));

      b.sys.lower[z] = 0.0;
      b.sys.upper[z] = 1.0;
    }

    b.eq("gfmc_total_p[" + inv.id + "]", Family::Power, inv.id, std::nullopt, Component::None,
         std::move(tp));
    b.eq("gfmc_total_q[" + inv.id + "]", Family::Power, inv.id, std::nullopt, Component::None,
         std::move(tq));

    Polynomial cap;
    if (options.strict_apparent_cap) {
      cap.add(1.0, vp, vp);
      cap.add(1.0, vq, vq);
      cap.add(-inv.s_max * inv.s_max);
    } else {
      cap.add(1.0, vp);
      cap.add(1.0, vq);
      cap.add(-inv.s_max);
    }
    b.le("gfmc_power_cap[" + inv.id + "]", Family::Power, inv.id, std::nullopt, std::move(cap));
  }

  // --- bus voltage magnitude windows ---
  for (const Bus& bus : model.buses) {
    for (Phase p : bus.phases) {
      const int32_t vr = b.v_re(bus.id, p), vi = b.v_im(bus.id, p);
      Polynomial hi;
      hi.add(1.0, vr, vr);
      hi.add(1.0, vi, vi);
      hi.add(-bus.v_max_sq);
      b.le("vmag_hi" + tag(bus.id, p), Family::VoltageMagnitude, bus.id, p, std::move(hi));
      if (bus.v_min_sq > 0.0) {
        Polynomial lo;
        lo.add(-1.0, vr, vr);
        lo.add(-1.0, vi, vi);
        lo.add(bus.v_min_sq);
        b.le("vmag_lo" + tag(bus.id, p), Family::VoltageMagnitude, bus.id, p, std::move(lo));
      }
    }
  }

  // --- lines: series voltage drop + thermal cap ---
  for (const Line& ln : model.lines) {
    if (ln.status != Status::On) continue;
    for (Phase p : keys_of(ln.r)) {
      const double r = ln.r.at(p), x = ln.x.at(p);
      const int32_t ir = b.var(VarKind::ElementCurrentRe, ln.id, p);
      const int32_t ii = b.var(VarKind::ElementCurrentIm, ln.id, p);
      Polynomial re;
      re.add(1.0, b.v_re(ln.from_bus, p));
      re.add(-r, ir);
      re.add(+x, ii);
      re.add(-1.0, b.v_re(ln.to_bus, p));
      b.eq("line_ohm_re" + tag(ln.id, p), Family::Ohm, ln.id, p, Component::Re, std::move(re));
      Polynomial im;
      im.add(1.0, b.v_im(ln.from_bus, p));
      im.add(-r, ii);
      im.add(-x, ir);
      im.add(-1.0, b.v_im(ln.to_bus, p));
      b.eq("line_ohm_im" + tag(ln.id, p), Family::Ohm, ln.id, p, Component::Im, std::move(im));

      Polynomial th;
      th.add(1.0, ir, ir);
      th.add(1.0, ii, ii);
      th.add(-ln.i_thermal_sq.at(p));
      b.le("line_thermal" + tag(ln.id, p), Family::CurrentCap, ln.id, p, std::move(th));
    }
  }

  // --- transformers: rigid ratio on voltages and currents ---
  for (const Transformer& tr : model.transformers) {
    if (tr.status != Status::On) continue;
    for (Phase p : keys_of(tr.i_thermal_sq)) {
      const int32_t ifr = b.var(VarKind::ElementCurrentRe, tr.id, p, Port::From);
      const int32_t ifi = b.var(VarKind::ElementCurrentIm, tr.id, p, Port::From);
      const int32_t itr = b.var(VarKind::ElementCurrentRe, tr.id, p, Port::To);
      const int32_t iti = b.var(VarKind::ElementCurrentIm, tr.id, p, Port::To);

      Polynomial vre;
      vre.add(tr.winding_factor, b.v_re(tr.from_bus, p));
      vre.add(-tr.eta, b.v_re(tr.to_bus, p));
      b.eq("xfmr_v_re" + tag(tr.id, p), Family::TransformerRatio, tr.id, p, Component::Re,
           std::move(vre));
      Polynomial vim;
      vim.add(tr.winding_factor, b.v_im(tr.from_bus, p));
      vim.add(-tr.eta, b.v_im(tr.to_bus, p));
      b.eq("xfmr_v_im" + tag(tr.id, p), Family::TransformerRatio, tr.id, p, Component::Im,
           std::move(vim));

      Polynomial ire;
      ire.add(1.0, ifr);
      ire.add(-tr.eta, itr);
      b.eq("xfmr_i_re" + tag(tr.id, p), Family::TransformerRatio, tr.id, p, Component::Re,
           std::move(ire));
      Polynomial iim;
      iim.add(1.0, ifi);
      iim.add(-tr.eta, iti);
      b.eq("xfmr_i_im" + tag(tr.id, p), Family::TransformerRatio, tr.id, p, Component::Im,
           std::move(iim));

      Polynomial th;
      th.add(1.0, ifr, ifr);
      th.add(1.0, ifi, ifi);
      th.add(-tr.i_thermal_sq.at(p));
      b.le("xfmr_thermal" + tag(tr.id, p), Family::CurrentCap, tr.id, p, std::move(th));
    }
  }

  // --- fault current definition: I_f = G V at the faulted bus ---
  if (fault) {
    for (size_t i = 0; i < fault->phases.size(); ++i) {
      const Phase p = fault->phases[i];
      Polynomial re;
      re.add(1.0, b.var(VarKind::FaultCurrentRe, fault->bus, p));
      Polynomial im;
      im.add(1.0, b.var(VarKind::FaultCurrentIm, fault->bus, p));
      for (size_t c = 0; c < fault->phases.size(); ++c) {
        const double gij = fault->conductance(static_cast<int>(i), static_cast<int>(c));
        re.add(-gij, b.v_re(fault->bus, fault->phases[c]));
        im.add(-gij, b.v_im(fault->bus, fault->phases[c]));
      }
      b.eq("fault_def_re" + tag(fault->bus, p), Family::FaultDefinition, fault->bus, p,
           Component::Re, std::move(re));
      b.eq("fault_def_im" + tag(fault->bus, p), Family::FaultDefinition, fault->bus, p,
           Component::Im, std::move(im));
    }
  }

  // --- Kirchhoff current balance per bus and phase ---
  // Branch flows leaving the bus balance element injections; shunt and fault
  // currents are draws proportional to the bus voltage.
  for (const Bus& bus : model.buses) {
    for (Phase p : bus.phases) {
      Polynomial re, im;

      for (const Line& ln : model.lines) {
        if (ln.status != Status::On || !ln.r.count(p)) continue;
        double sign = 0.0;
        if (ln.from_bus == bus.id) sign = 1.0;
        if (ln.to_bus == bus.id) sign = -1.0;
        if (sign == 0.0) continue;
        re.add(sign, b.var(VarKind::ElementCurrentRe, ln.id, p));
        im.add(sign, b.var(VarKind::ElementCurrentIm, ln.id, p));
      }
      for (const Transformer& tr : model.transformers) {
        if (tr.status != Status::On || !tr.i_thermal_sq.count(p)) continue;
        if (tr.from_bus == bus.id) {
          re.add(1.0, b.var(VarKind::ElementCurrentRe, tr.id, p, Port::From));
          im.add(1.0, b.var(VarKind::ElementCurrentIm, tr.id, p, Port::From));
        }
        if (tr.to_bus == bus.id) {
          re.add(-1.0, b.var(VarKind::ElementCurrentRe, tr.id, p, Port::To));
          im.add(-1.0, b.var(VarKind::ElementCurrentIm, tr.id, p, Port::To));
        }
      }

      auto inject = [&](const std::string& owner, const auto& phase_map) {
        if (!phase_map.count(p)) return;
        re.add(-1.0, b.var(VarKind::ElementCurrentRe, owner, p));
        im.add(-1.0, b.var(VarKind::ElementCurrentIm, owner, p));
      };
      for (const ReferenceSource& src : model.sources)
        if (src.status == Status::On && src.bus == bus.id) inject(src.id, src.v_setp);
      for (const SyncGenerator& g : model.generators)
        if (g.status == Status::On && g.bus == bus.id) inject(g.id, g.p_setp);
      for (const GridFollowingInverter& inv : model.gfl_inverters)
        if (inv.status == Status::On && inv.bus == bus.id) inject(inv.id, inv.p_setp);
      for (const GridFormingInverterSimple& inv : model.gfm_simple_inverters)
        if (inv.status == Status::On && inv.bus == bus.id) inject(inv.id, inv.v0_r);
      for (const GridFormingInverterComplex& inv : model.gfm_complex_inverters)
        if (inv.status == Status::On && inv.bus == bus.id) inject(inv.id, inv.v0_r);

      for (const Shunt& sh : model.shunts) {
        if (sh.status != Status::On || sh.bus != bus.id || !sh.g.count(p)) continue;
        const double g = sh.g.at(p), susc = sh.b.at(p);
        re.add(+g, b.v_re(bus.id, p));
        re.add(-susc, b.v_im(bus.id, p));
        im.add(+g, b.v_im(bus.id, p));
        im.add(+susc, b.v_re(bus.id, p));
      }

      if (fault && fault->bus == bus.id && fault->covers(p)) {
        re.add(1.0, b.var(VarKind::FaultCurrentRe, bus.id, p));
        im.add(1.0, b.var(VarKind::FaultCurrentIm, bus.id, p));
      }

      b.eq("kcl_re" + tag(bus.id, p), Family::Kcl, bus.id, p, Component::Re, std::move(re));
      b.eq("kcl_im" + tag(bus.id, p), Family::Kcl, bus.id, p, Component::Im, std::move(im));
    }
  }

  return std::move(b.sys);
}

Residuals residual(const ConstraintSystem& system, const Eigen::VectorXd& x) {
  if (x.size() != system.n_vars())
    throw ValidationError("residual: expected " + std::to_string(system.n_vars()) +
                          " variables, got " + std::to_string(x.size()));
  if (!x.allFinite()) throw NumericalError("residual: non-finite input");

  Residuals out;
  out.equalities.resize(static_cast<Eigen::Index>(system.equalities.size()));
  out.inequalities.resize(static_cast<Eigen::Index>(system.inequalities.size()));
  for (size_t i = 0; i < system.equalities.size(); ++i)
    out.equalities[static_cast<Eigen::Index>(i)] = system.equalities[i].poly.eval(x);
  for (size_t i = 0; i < system.inequalities.size(); ++i)
    out.inequalities[static_cast<Eigen::Index>(i)] = system.inequalities[i].poly.eval(x);
  return out;
}

SystemJacobian jacobian(const ConstraintSystem& system, const Eigen::VectorXd& x) {
  if (x.size() != system.n_vars())
    throw ValidationError("jacobian: expected " + std::to_string(system.n_vars()) +
                          " variables, got " + std::to_string(x.size()));
  if (!x.allFinite()) throw NumericalError("jacobian: non-finite input");

  SystemJacobian out;
  std::vector<Eigen::Triplet<double>> trip;
  for (size_t i = 0; i < system.equalities.size(); ++i)
    system.equalities[i].poly.gradient(x, static_cast<int>(i), trip);
  out.equalities.resize(static_cast<Eigen::Index>(system.equalities.size()), system.n_vars());
  out.equalities.setFromTriplets(trip.begin(), trip.end());

  trip.clear();
  for (size_t i = 0; i < system.inequalities.size(); ++i)
    system.inequalities[i].poly.gradient(x, static_cast<int>(i), trip);
  out.inequalities.resize(static_cast<Eigen::Index>(system.inequalities.size()),
                          system.n_vars());
  out.inequalities.setFromTriplets(trip.begin(), trip.end());
  return out;
}

std::string dump_system(const ConstraintSystem& system) {
  ordered_json root;
  root["n_vars"] = system.n_vars();
  root["variables"] = ordered_json::array();
  for (int i = 0; i < system.n_vars(); ++i) {
    ordered_json v;
    v["index"] = i;
    v["name"] = system.vars.keys[static_cast<size_t>(i)].name();
    if (std::isfinite(system.lower[i])) v["lower"] = system.lower[i];
    if (std::isfinite(system.upper[i])) v["upper"] = system.upper[i];
    root["variables"].push_back(std::move(v));
  }
  auto list = [&](const std::vector<Constraint>& cs) {
    ordered_json arr = ordered_json::array();
    for (const Constraint& c : cs) {
      ordered_json j;
      j["name"] = c.name;
      j["family"] = family_name(c.family);
      j["source"] = c.source_id;
      j["variables"] = ordered_json::array();
      for (int32_t v : c.poly.support())
        j["variables"].push_back(system.vars.keys[static_cast<size_t>(v)].name());
      arr.push_back(std::move(j));
    }
    return arr;
  };
  root["equalities"] = list(system.equalities);
  root["inequalities"] = list(system.inequalities);
  return root.dump(2) + "\n";
}

}  // namespace ff
