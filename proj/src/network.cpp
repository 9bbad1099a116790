#include "faultforge/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ff {

using nlohmann::ordered_json;

namespace {

constexpr double kThird = 2.0943951023931953;  // 2*pi/3

double default_angle(Phase p) {
  switch (p) {
    case Phase::A: return 0.0;
    case Phase::B: return -kThird;
    case Phase::C: return +kThird;
  }
  return 0.0;
}

}  // namespace

Phase phase_from_label(char c) {
  switch (c) {
    case 'A': case 'a': return Phase::A;
    case 'B': case 'b': return Phase::B;
    case 'C': case 'c': return Phase::C;
  }
  throw ValidationError(std::string("unknown phase label '") + c + "'");
}

bool Bus::has_phase(Phase p) const {
  return std::find(phases.begin(), phases.end(), p) != phases.end();
}

Complex ReferenceSource::emf(Phase p) const {
  return std::polar(v_setp.at(p), theta_setp.at(p));
}

std::string inverter_model_name(InverterModel m) {
  switch (m) {
    case InverterModel::Gfl: return "gfl";
    case InverterModel::GfmSimple: return "gfm_simple";
    case InverterModel::GfmComplex: return "gfm_complex";
  }
  return {};
}

InverterModel inverter_model_from_name(const std::string& name) {
  if (name == "gfl") return InverterModel::Gfl;
  if (name == "gfm_simple") return InverterModel::GfmSimple;
  if (name == "gfm_complex") return InverterModel::GfmComplex;
  throw ValidationError("unknown inverter model '" + name + "'");
}

const Bus& NetworkModel::bus(const std::string& id) const {
  for (const Bus& b : buses)
    if (b.id == id) return b;
  throw ValidationError("unknown bus '" + id + "'");
}

bool NetworkModel::has_bus(const std::string& id) const {
  return std::any_of(buses.begin(), buses.end(), [&](const Bus& b) { return b.id == id; });
}

BaseSet NetworkModel::bus_bases(const std::string& id) const {
  return BaseSet{bus(id).v_base_v, s_base_va};
}

bool operator==(const NetworkModel& a, const NetworkModel& b) {
  return a.s_base_va == b.s_base_va && a.buses == b.buses && a.lines == b.lines &&
         a.transformers == b.transformers && a.sources == b.sources &&
         a.generators == b.generators && a.gfl_inverters == b.gfl_inverters &&
         a.gfm_simple_inverters == b.gfm_simple_inverters &&
         a.gfm_complex_inverters == b.gfm_complex_inverters && a.shunts == b.shunts;
}

namespace {

void check_phase_map(const PhaseMap<double>& m, const std::vector<Phase>& phases,
                     const std::string& ctx) {
  if (m.size() != phases.size())
    throw ValidationError(ctx + ": per-phase table does not match element phases");
  for (Phase p : phases) {
    auto it = m.find(p);
    if (it == m.end())
      throw ValidationError(ctx + ": missing phase " + phase_label(p));
    if (!std::isfinite(it->second))
      throw ValidationError(ctx + ": non-finite value on phase " + phase_label(p));
  }
}

void check_bus_ref(const NetworkModel& model, const std::string& bus_id,
                   const std::vector<Phase>& phases, const std::string& ctx) {
  if (!model.has_bus(bus_id))
    throw ValidationError(ctx + ": references missing bus '" + bus_id + "'");
  const Bus& b = model.bus(bus_id);
  for (Phase p : phases)
    if (!b.has_phase(p))
      throw ValidationError(ctx + ": phase " + phase_label(p) + " not present at bus '" +
                            bus_id + "'");
}

}  // namespace

void NetworkModel::validate() const {
  if (!(s_base_va > 0.0)) throw ValidationError("s_base_va must be positive");
  if (buses.empty()) throw ValidationError("network has no buses");

  std::set<std::string> bus_ids;
  for (const Bus& b : buses) {
    const std::string ctx = "bus '" + b.id + "'";
    if (b.id.empty()) throw ValidationError("bus with empty id");
    if (!bus_ids.insert(b.id).second) throw ValidationError("duplicate " + ctx);
    if (b.phases.empty()) throw ValidationError(ctx + ": no phases");
    if (!std::is_sorted(b.phases.begin(), b.phases.end()) ||
        std::adjacent_find(b.phases.begin(), b.phases.end()) != b.phases.end())
      throw ValidationError(ctx + ": phases must be sorted and unique");
    if (!(b.v_base_v > 0.0)) throw ValidationError(ctx + ": v_base_v must be positive");
    if (b.v_min_sq < 0.0) throw ValidationError(ctx + ": v_min_sq must be >= 0");
    if (!(b.v_max_sq > b.v_min_sq)) throw ValidationError(ctx + ": v_max_sq must exceed v_min_sq");
  }

  std::set<std::string> element_ids;
  auto claim_id = [&](const std::string& id, const char* what) {
    if (id.empty()) throw ValidationError(std::string(what) + " with empty id");
    if (!element_ids.insert(id).second)
      throw ValidationError(std::string("duplicate element id '") + id + "'");
  };

  for (const Line& ln : lines) {
    const std::string ctx = "line '" + ln.id + "'";
    claim_id(ln.id, "line");
    std::vector<Phase> phases;
    for (const auto& [p, _] : ln.r) phases.push_back(p);
    check_bus_ref(*this, ln.from_bus, phases, ctx);
    check_bus_ref(*this, ln.to_bus, phases, ctx);
    if (ln.from_bus == ln.to_bus) throw ValidationError(ctx + ": endpoints coincide");
    if (bus(ln.from_bus).v_base_v != bus(ln.to_bus).v_base_v)
      throw ValidationError(ctx + ": endpoints have different voltage bases; use a transformer");
    check_phase_map(ln.r, phases, ctx);
    check_phase_map(ln.x, phases, ctx);
    check_phase_map(ln.i_thermal_sq, phases, ctx);
    for (Phase p : phases) {
      if (ln.r.at(p) < 0.0) throw ValidationError(ctx + ": negative resistance");
      if (ln.r.at(p) == 0.0 && ln.x.at(p) == 0.0)
        throw ValidationError(ctx + ": zero impedance on phase " + phase_label(p));
      if (!(ln.i_thermal_sq.at(p) > 0.0))
        throw ValidationError(ctx + ": thermal limit must be positive");
    }
  }

  for (const Transformer& tr : transformers) {
    const std::string ctx = "transformer '" + tr.id + "'";
    claim_id(tr.id, "transformer");
    std::vector<Phase> phases;
    for (const auto& [p, _] : tr.i_thermal_sq) phases.push_back(p);
    check_bus_ref(*this, tr.from_bus, phases, ctx);
    check_bus_ref(*this, tr.to_bus, phases, ctx);
    if (tr.from_bus == tr.to_bus) throw ValidationError(ctx + ": endpoints coincide");
    if (!(tr.eta > 0.0)) throw ValidationError(ctx + ": turns ratio must be positive");
    if (tr.winding_factor != 1.0)
      throw ValidationError(ctx + ": only winding factor 1 (wye-wye) is supported");
    check_phase_map(tr.i_thermal_sq, phases, ctx);
    for (Phase p : phases)
      if (!(tr.i_thermal_sq.at(p) > 0.0))
        throw ValidationError(ctx + ": thermal limit must be positive");
  }

  for (const ReferenceSource& src : sources) {
    const std::string ctx = "source '" + src.id + "'";
    claim_id(src.id, "source");
    std::vector<Phase> phases;
    for (const auto& [p, _] : src.v_setp) phases.push_back(p);
    check_bus_ref(*this, src.bus, phases, ctx);
    check_phase_map(src.v_setp, phases, ctx);
    check_phase_map(src.theta_setp, phases, ctx);
    check_phase_map(src.r, phases, ctx);
    check_phase_map(src.x, phases, ctx);
    for (Phase p : phases)
      if (!(src.v_setp.at(p) > 0.0))
        throw ValidationError(ctx + ": setpoint magnitude must be positive");
  }

  for (const SyncGenerator& g : generators) {
    const std::string ctx = "generator '" + g.id + "'";
    claim_id(g.id, "generator");
    std::vector<Phase> phases;
    for (const auto& [p, _] : g.p_setp) phases.push_back(p);
    check_bus_ref(*this, g.bus, phases, ctx);
    check_phase_map(g.p_setp, phases, ctx);
    check_phase_map(g.q_setp, phases, ctx);
    if (!(g.pf > 0.0 && g.pf <= 1.0)) throw ValidationError(ctx + ": pf must be in (0, 1]");
    if (g.slack_fraction < 0.0 || g.slack_fraction > 1.0)
      throw ValidationError(ctx + ": slack fraction must be in [0, 1]");
  }

  for (const GridFollowingInverter& inv : gfl_inverters) {
    const std::string ctx = "inverter '" + inv.id + "'";
    claim_id(inv.id, "inverter");
    std::vector<Phase> phases;
    for (const auto& [p, _] : inv.p_setp) phases.push_back(p);
    check_bus_ref(*this, inv.bus, phases, ctx);
    check_phase_map(inv.p_setp, phases, ctx);
    check_phase_map(inv.i_max, phases, ctx);
    check_phase_map(inv.q_min, phases, ctx);
    check_phase_map(inv.q_max, phases, ctx);
    for (Phase p : phases) {
      if (!(inv.i_max.at(p) > 0.0)) throw ValidationError(ctx + ": i_max must be positive");
      if (inv.p_setp.at(p) < 0.0) throw ValidationError(ctx + ": active setpoint must be >= 0");
      if (inv.q_min.at(p) > inv.q_max.at(p))
        throw ValidationError(ctx + ": q_min exceeds q_max");
    }
  }

  for (const GridFormingInverterSimple& inv : gfm_simple_inverters) {
    const std::string ctx = "inverter '" + inv.id + "'";
    claim_id(inv.id, "inverter");
    std::vector<Phase> phases;
    for (const auto& [p, _] : inv.v0_r) phases.push_back(p);
    check_bus_ref(*this, inv.bus, phases, ctx);
    check_phase_map(inv.v0_r, phases, ctx);
    check_phase_map(inv.v0_i, phases, ctx);
    check_phase_map(inv.i_max, phases, ctx);
    for (Phase p : phases) {
      if (!(inv.i_max.at(p) > 0.0)) throw ValidationError(ctx + ": i_max must be positive");
      if (std::hypot(inv.v0_r.at(p), inv.v0_i.at(p)) == 0.0)
        throw ValidationError(ctx + ": zero internal voltage on phase " + phase_label(p));
    }
  }

  for (const GridFormingInverterComplex& inv : gfm_complex_inverters) {
    const std::string ctx = "inverter '" + inv.id + "'";
    claim_id(inv.id, "inverter");
    std::vector<Phase> phases;
    for (const auto& [p, _] : inv.v0_r) phases.push_back(p);
    check_bus_ref(*this, inv.bus, phases, ctx);
    check_phase_map(inv.v0_r, phases, ctx);
    check_phase_map(inv.v0_i, phases, ctx);
    check_phase_map(inv.i_max, phases, ctx);
    for (Phase p : phases)
      if (!(inv.i_max.at(p) > 0.0)) throw ValidationError(ctx + ": i_max must be positive");
    if (!(inv.s_max > 0.0)) throw ValidationError(ctx + ": s_max must be positive");
  }

  for (const Shunt& sh : shunts) {
    const std::string ctx = "shunt '" + sh.id + "'";
    claim_id(sh.id, "shunt");
    std::vector<Phase> phases;
    for (const auto& [p, _] : sh.g) phases.push_back(p);
    check_bus_ref(*this, sh.bus, phases, ctx);
    check_phase_map(sh.g, phases, ctx);
    check_phase_map(sh.b, phases, ctx);
  }
}

// ---------------------------------------------------------------------------
// JSON ingestion
// ---------------------------------------------------------------------------

namespace {

/// Wraps one JSON object with its path for error messages and unknown-key
/// policing in strict mode.
class ObjectReader {
public:
  ObjectReader(const ordered_json& j, std::string path, bool strict)
      : j_(j), path_(std::move(path)), strict_(strict) {
    if (!j_.is_object()) throw ParseError(path_ + ": expected an object");
  }

  ~ObjectReader() = default;

  void finish() const {
    if (!strict_) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ParseError(path_ + ": unknown key '" + it.key() + "'");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const ordered_json& require(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ParseError(path_ + ": missing key '" + key + "'");
    return j_.at(key);
  }

  std::string str(const std::string& key) {
    const auto& v = require(key);
    if (!v.is_string()) throw ParseError(path_ + "." + key + ": expected a string");
    return v.get<std::string>();
  }

  std::string str_or(const std::string& key, const std::string& fallback) {
    if (!j_.contains(key)) return fallback;
    return str(key);
  }

  double num(const std::string& key) {
    const auto& v = require(key);
    if (!v.is_number()) throw ParseError(path_ + "." + key + ": expected a number");
    return v.get<double>();
  }

  double num_or(const std::string& key, double fallback) {
    if (!j_.contains(key)) return fallback;
    return num(key);
  }

  Status status() {
    const std::string s = str_or("status", "on");
    if (s == "on") return Status::On;
    if (s == "open") return Status::Open;
    throw ParseError(path_ + ".status: expected \"on\" or \"open\"");
  }

  /// A per-phase value: either a single number applied to every phase or an
  /// object keyed by phase label.
  PhaseMap<double> per_phase(const std::string& key, const std::vector<Phase>& phases) {
    const auto& v = require(key);
    return spread(v, key, phases);
  }

  PhaseMap<double> per_phase_or(const std::string& key, const std::vector<Phase>& phases,
                                double fallback) {
    if (!j_.contains(key)) {
      PhaseMap<double> out;
      for (Phase p : phases) out[p] = fallback;
      return out;
    }
    return per_phase(key, phases);
  }

  /// Phase list: explicit "phases" key or the fallback.
  std::vector<Phase> phases_or(const std::vector<Phase>& fallback) {
    if (!j_.contains("phases")) return fallback;
    const auto& v = require("phases");
    if (!v.is_array()) throw ParseError(path_ + ".phases: expected an array");
    std::vector<Phase> out;
    for (const auto& e : v) {
      if (!e.is_string() || e.get<std::string>().size() != 1)
        throw ParseError(path_ + ".phases: expected one-letter phase labels");
      out.push_back(phase_from_label(e.get<std::string>()[0]));
    }
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end())
      throw ParseError(path_ + ".phases: repeated phase");
    return out;
  }

  const std::string& path() const { return path_; }

private:
  PhaseMap<double> spread(const ordered_json& v, const std::string& key,
                          const std::vector<Phase>& phases) {
    PhaseMap<double> out;
    if (v.is_number()) {
      for (Phase p : phases) out[p] = v.get<double>();
      return out;
    }
    if (v.is_object()) {
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (it.key().size() != 1)
          throw ParseError(path_ + "." + key + ": bad phase key '" + it.key() + "'");
        Phase p = phase_from_label(it.key()[0]);
        if (std::find(phases.begin(), phases.end(), p) == phases.end())
          throw ParseError(path_ + "." + key + ": phase " + it.key() +
                           " not in element phases");
        if (!it.value().is_number())
          throw ParseError(path_ + "." + key + "." + it.key() + ": expected a number");
        out[p] = it.value().get<double>();
      }
      for (Phase p : phases)
        if (!out.count(p))
          throw ParseError(path_ + "." + key + ": missing phase " +
                           std::string(1, phase_label(p)));
      return out;
    }
    throw ParseError(path_ + "." + key + ": expected a number or per-phase object");
  }

  const ordered_json& j_;
  std::string path_;
  bool strict_;
  std::set<std::string> seen_;
};

PhaseMap<double> map_pu(const PhaseMap<double>& si, double base) {
  PhaseMap<double> out;
  for (const auto& [p, v] : si) out[p] = to_per_unit(v, base);
  return out;
}

PhaseMap<double> map_si(const PhaseMap<double>& pu, double base) {
  PhaseMap<double> out;
  for (const auto& [p, v] : pu) out[p] = from_per_unit(v, base);
  return out;
}

PhaseMap<double> squared(const PhaseMap<double>& m) {
  PhaseMap<double> out;
  for (const auto& [p, v] : m) out[p] = v * v;
  return out;
}

const ordered_json& array_or_empty(const ordered_json& root, const std::string& key,
                                   std::set<std::string>& seen) {
  static const ordered_json empty = ordered_json::array();
  seen.insert(key);
  if (!root.contains(key)) return empty;
  if (!root.at(key).is_array()) throw ParseError(key + ": expected an array");
  return root.at(key);
}

}  // namespace

NetworkModel parse_network(const std::string& json_text, bool strict) {
  ordered_json root;
  try {
    root = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ParseError("top level: expected an object");

  NetworkModel model;
  std::set<std::string> seen{"s_base_va"};
  if (!root.contains("s_base_va") || !root.at("s_base_va").is_number())
    throw ParseError("top level: missing numeric 's_base_va'");
  model.s_base_va = root.at("s_base_va").get<double>();
  if (!(model.s_base_va > 0.0)) throw ValidationError("s_base_va must be positive");

  int i = 0;
  for (const auto& jb : array_or_empty(root, "buses", seen)) {
    ObjectReader r(jb, "buses[" + std::to_string(i++) + "]", strict);
    Bus b;
    b.id = r.str("id");
    b.phases = r.phases_or({Phase::A, Phase::B, Phase::C});
    b.v_base_v = r.num("v_base_v");
    if (!(b.v_base_v > 0.0)) throw ValidationError("bus '" + b.id + "': v_base_v must be positive");
    const double v_min_v = r.num_or("v_min_v", 0.0);
    const double v_max_v = r.num_or("v_max_v", 2.0 * b.v_base_v);
    const double vm = to_per_unit(v_min_v, b.v_base_v);
    const double vx = to_per_unit(v_max_v, b.v_base_v);
    b.v_min_sq = vm * vm;
    b.v_max_sq = vx * vx;
    r.finish();
    model.buses.push_back(std::move(b));
  }

  auto bases_for = [&](const std::string& bus_id, const std::string& ctx) -> BaseSet {
    if (!model.has_bus(bus_id))
      throw ValidationError(ctx + ": references missing bus '" + bus_id + "'");
    return model.bus_bases(bus_id);
  };
  auto bus_phases = [&](const std::string& bus_id, const std::string& ctx) {
    if (!model.has_bus(bus_id))
      throw ValidationError(ctx + ": references missing bus '" + bus_id + "'");
    return model.bus(bus_id).phases;
  };

  i = 0;
  for (const auto& jl : array_or_empty(root, "lines", seen)) {
    ObjectReader r(jl, "lines[" + std::to_string(i++) + "]", strict);
    Line ln;
    ln.id = r.str("id");
    ln.from_bus = r.str("from");
    ln.to_bus = r.str("to");
    ln.status = r.status();
    const BaseSet bases = bases_for(ln.from_bus, r.path());
    const std::vector<Phase> phases = r.phases_or(bus_phases(ln.from_bus, r.path()));
    ln.r = map_pu(r.per_phase("r_ohm", phases), bases.z_base_ohm());
    ln.x = map_pu(r.per_phase("x_ohm", phases), bases.z_base_ohm());
    ln.i_thermal_sq = squared(map_pu(r.per_phase("i_thermal_a", phases), bases.i_base_a()));
    r.finish();
    model.lines.push_back(std::move(ln));
  }

  i = 0;
  for (const auto& jt : array_or_empty(root, "transformers", seen)) {
    ObjectReader r(jt, "transformers[" + std::to_string(i++) + "]", strict);
    Transformer tr;
    tr.id = r.str("id");
    tr.from_bus = r.str("from");
    tr.to_bus = r.str("to");
    tr.eta = r.num_or("eta", 1.0);
    tr.status = r.status();
    const BaseSet bases = bases_for(tr.from_bus, r.path());
    const std::vector<Phase> phases = r.phases_or(bus_phases(tr.from_bus, r.path()));
    tr.i_thermal_sq = squared(map_pu(r.per_phase("i_thermal_a", phases), bases.i_base_a()));
    r.finish();
    model.transformers.push_back(std::move(tr));
  }

  i = 0;
  for (const auto& js : array_or_empty(root, "sources", seen)) {
    ObjectReader r(js, "sources[" + std::to_string(i++) + "]", strict);
    ReferenceSource src;
    src.id = r.str("id");
    src.bus = r.str("bus");
    src.status = r.status();
    const BaseSet bases = bases_for(src.bus, r.path());
    const std::vector<Phase> phases = r.phases_or(bus_phases(src.bus, r.path()));
    src.v_setp = map_pu(r.per_phase("v_setp_v", phases), bases.v_base_v);
    if (r.has("angle_rad")) {
      src.theta_setp = r.per_phase("angle_rad", phases);
    } else {
      for (Phase p : phases) src.theta_setp[p] = default_angle(p);
    }
    src.r = map_pu(r.per_phase("r_ohm", phases), bases.z_base_ohm());
    src.x = map_pu(r.per_phase("x_ohm", phases), bases.z_base_ohm());
    r.finish();
    model.sources.push_back(std::move(src));
  }

  i = 0;
  for (const auto& jg : array_or_empty(root, "generators", seen)) {
    ObjectReader r(jg, "generators[" + std::to_string(i++) + "]", strict);
    SyncGenerator g;
    g.id = r.str("id");
    g.bus = r.str("bus");
    g.pf = r.num_or("pf", 1.0);
    g.slack_fraction = r.num_or("slack_fraction", 0.05);
    g.status = r.status();
    const std::vector<Phase> phases = r.phases_or(bus_phases(g.bus, r.path()));
    g.p_setp = map_pu(r.per_phase("p_w", phases), model.s_base_va);
    g.q_setp = map_pu(r.per_phase("q_var", phases), model.s_base_va);
    r.finish();
    model.generators.push_back(std::move(g));
  }

  i = 0;
  for (const auto& ji : array_or_empty(root, "inverters", seen)) {
    ObjectReader r(ji, "inverters[" + std::to_string(i++) + "]", strict);
    const std::string id = r.str("id");
    const std::string bus = r.str("bus");
    const InverterModel kind = inverter_model_from_name(r.str("model"));
    const Status status = r.status();
    const BaseSet bases = bases_for(bus, r.path());
    const std::vector<Phase> phases = r.phases_or(bus_phases(bus, r.path()));

    auto v0_rect = [&](PhaseMap<double>& re, PhaseMap<double>& im) {
      PhaseMap<double> mag = map_pu(r.per_phase("v0_v", phases), bases.v_base_v);
      PhaseMap<double> ang;
      if (r.has("v0_angle_rad")) {
        ang = r.per_phase("v0_angle_rad", phases);
      } else {
        for (Phase p : phases) ang[p] = default_angle(p);
      }
      for (Phase p : phases) {
        re[p] = mag[p] * std::cos(ang[p]);
        im[p] = mag[p] * std::sin(ang[p]);
      }
    };

    switch (kind) {
      case InverterModel::Gfl: {
        GridFollowingInverter inv;
        inv.id = id;
        inv.bus = bus;
        inv.status = status;
        inv.p_setp = map_pu(r.per_phase("p_w", phases), model.s_base_va);
        inv.i_max = map_pu(r.per_phase("i_max_a", phases), bases.i_base_a());
        inv.q_min = map_pu(r.per_phase("q_min_var", phases), model.s_base_va);
        inv.q_max = map_pu(r.per_phase("q_max_var", phases), model.s_base_va);
        model.gfl_inverters.push_back(std::move(inv));
        break;
      }
      case InverterModel::GfmSimple: {
        GridFormingInverterSimple inv;
        inv.id = id;
        inv.bus = bus;
        inv.status = status;
        v0_rect(inv.v0_r, inv.v0_i);
        inv.i_max = map_pu(r.per_phase("i_max_a", phases), bases.i_base_a());
        model.gfm_simple_inverters.push_back(std::move(inv));
        break;
      }
      case InverterModel::GfmComplex: {
        GridFormingInverterComplex inv;
        inv.id = id;
        inv.bus = bus;
        inv.status = status;
        v0_rect(inv.v0_r, inv.v0_i);
        inv.i_max = map_pu(r.per_phase("i_max_a", phases), bases.i_base_a());
        inv.p_target = to_per_unit(r.num_or("p_target_w", 0.0), model.s_base_va);
        inv.q_target = to_per_unit(r.num_or("q_target_var", 0.0), model.s_base_va);
        inv.s_max = to_per_unit(r.num("s_max_va"), model.s_base_va);
        model.gfm_complex_inverters.push_back(std::move(inv));
        break;
      }
    }
    r.finish();
  }

  i = 0;
  for (const auto& jsh : array_or_empty(root, "shunts", seen)) {
    ObjectReader r(jsh, "shunts[" + std::to_string(i++) + "]", strict);
    Shunt sh;
    sh.id = r.str("id");
    sh.bus = r.str("bus");
    sh.status = r.status();
    const BaseSet bases = bases_for(sh.bus, r.path());
    const std::vector<Phase> phases = r.phases_or(bus_phases(sh.bus, r.path()));
    // Siemens to per-unit: multiply by the impedance base.
    sh.g = map_si(r.per_phase("g_s", phases), bases.z_base_ohm());
    sh.b = map_si(r.per_phase("b_s", phases), bases.z_base_ohm());
    r.finish();
    model.shunts.push_back(std::move(sh));
  }

  if (strict) {
    for (auto it = root.begin(); it != root.end(); ++it)
      if (!seen.count(it.key()))
        throw ParseError("top level: unknown key '" + it.key() + "'");
  }

  model.validate();
  return model;
}

NetworkModel load_network(const std::string& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str(), strict);
}

// ---------------------------------------------------------------------------
// Serialization (inverse unit conversions back to SI)
// ---------------------------------------------------------------------------

namespace {

ordered_json phase_json(const PhaseMap<double>& m) {
  ordered_json out = ordered_json::object();
  for (const auto& [p, v] : m) out[std::string(1, phase_label(p))] = v;
  return out;
}

ordered_json phases_json(const std::vector<Phase>& phases) {
  ordered_json out = ordered_json::array();
  for (Phase p : phases) out.push_back(std::string(1, phase_label(p)));
  return out;
}

std::string status_str(Status s) { return s == Status::On ? "on" : "open"; }

PhaseMap<double> sqrt_map(const PhaseMap<double>& m) {
  PhaseMap<double> out;
  for (const auto& [p, v] : m) out[p] = std::sqrt(v);
  return out;
}

std::vector<Phase> keys_of(const PhaseMap<double>& m) {
  std::vector<Phase> out;
  for (const auto& [p, _] : m) out.push_back(p);
  return out;
}

}  // namespace

std::string serialize_network(const NetworkModel& model) {
  ordered_json root;
  root["s_base_va"] = model.s_base_va;

  root["buses"] = ordered_json::array();
  for (const Bus& b : model.buses) {
    ordered_json j;
    j["id"] = b.id;
    j["phases"] = phases_json(b.phases);
    j["v_base_v"] = b.v_base_v;
    j["v_min_v"] = std::sqrt(b.v_min_sq) * b.v_base_v;
    j["v_max_v"] = std::sqrt(b.v_max_sq) * b.v_base_v;
    root["buses"].push_back(std::move(j));
  }

  root["lines"] = ordered_json::array();
  for (const Line& ln : model.lines) {
    const BaseSet bases = model.bus_bases(ln.from_bus);
    ordered_json j;
    j["id"] = ln.id;
    j["from"] = ln.from_bus;
    j["to"] = ln.to_bus;
    j["phases"] = phases_json(keys_of(ln.r));
    j["r_ohm"] = phase_json(map_si(ln.r, bases.z_base_ohm()));
    j["x_ohm"] = phase_json(map_si(ln.x, bases.z_base_ohm()));
    j["i_thermal_a"] = phase_json(map_si(sqrt_map(ln.i_thermal_sq), bases.i_base_a()));
    j["status"] = status_str(ln.status);
    root["lines"].push_back(std::move(j));
  }

  root["transformers"] = ordered_json::array();
  for (const Transformer& tr : model.transformers) {
    const BaseSet bases = model.bus_bases(tr.from_bus);
    ordered_json j;
    j["id"] = tr.id;
    j["from"] = tr.from_bus;
    j["to"] = tr.to_bus;
    j["phases"] = phases_json(keys_of(tr.i_thermal_sq));
    j["eta"] = tr.eta;
    j["i_thermal_a"] = phase_json(map_si(sqrt_map(tr.i_thermal_sq), bases.i_base_a()));
    j["status"] = status_str(tr.status);
    root["transformers"].push_back(std::move(j));
  }

  root["sources"] = ordered_json::array();
  for (const ReferenceSource& src : model.sources) {
    const BaseSet bases = model.bus_bases(src.bus);
    ordered_json j;
    j["id"] = src.id;
    j["bus"] = src.bus;
    j["phases"] = phases_json(keys_of(src.v_setp));
    j["v_setp_v"] = phase_json(map_si(src.v_setp, bases.v_base_v));
    j["angle_rad"] = phase_json(src.theta_setp);
    j["r_ohm"] = phase_json(map_si(src.r, bases.z_base_ohm()));
    j["x_ohm"] = phase_json(map_si(src.x, bases.z_base_ohm()));
    j["status"] = status_str(src.status);
    root["sources"].push_back(std::move(j));
  }

  root["generators"] = ordered_json::array();
  for (const SyncGenerator& g : model.generators) {
    ordered_json j;
    j["id"] = g.id;
    j["bus"] = g.bus;
    j["phases"] = phases_json(keys_of(g.p_setp));
    j["p_w"] = phase_json(map_si(g.p_setp, model.s_base_va));
    j["q_var"] = phase_json(map_si(g.q_setp, model.s_base_va));
    j["pf"] = g.pf;
    j["slack_fraction"] = g.slack_fraction;
    j["status"] = status_str(g.status);
    root["generators"].push_back(std::move(j));
  }

  root["inverters"] = ordered_json::array();
  auto v0_fields = [&](ordered_json& j, const PhaseMap<double>& re, const PhaseMap<double>& im,
                       const BaseSet& bases) {
    PhaseMap<double> mag, ang;
    for (const auto& [p, vr] : re) {
      mag[p] = std::hypot(vr, im.at(p)) * bases.v_base_v;
      ang[p] = std::atan2(im.at(p), vr);
    }
    j["v0_v"] = phase_json(mag);
    j["v0_angle_rad"] = phase_json(ang);
  };
  for (const GridFollowingInverter& inv : model.gfl_inverters) {
    const BaseSet bases = model.bus_bases(inv.bus);
    ordered_json j;
    j["id"] = inv.id;
    j["model"] = "gfl";
    j["bus"] = inv.bus;
    j["phases"] = phases_json(keys_of(inv.p_setp));
    j["p_w"] = phase_json(map_si(inv.p_setp, model.s_base_va));
    j["i_max_a"] = phase_json(map_si(inv.i_max, bases.i_base_a()));
    j["q_min_var"] = phase_json(map_si(inv.q_min, model.s_base_va));
    j["q_max_var"] = phase_json(map_si(inv.q_max, model.s_base_va));
    j["status"] = status_str(inv.status);
    root["inverters"].push_back(std::move(j));
  }
  for (const GridFormingInverterSimple& inv : model.gfm_simple_inverters) {
    const BaseSet bases = model.bus_bases(inv.bus);
    ordered_json j;
    j["id"] = inv.id;
    j["model"] = "gfm_simple";
    j["bus"] = inv.bus;
    j["phases"] = phases_json(keys_of(inv.v0_r));
    v0_fields(j, inv.v0_r, inv.v0_i, bases);
    j["i_max_a"] = phase_json(map_si(inv.i_max, bases.i_base_a()));
    j["status"] = status_str(inv.status);
    root["inverters"].push_back(std::move(j));
  }
  for (const GridFormingInverterComplex& inv : model.gfm_complex_inverters) {
    const BaseSet bases = model.bus_bases(inv.bus);
    ordered_json j;
    j["id"] = inv.id;
    j["model"] = "gfm_complex";
    j["bus"] = inv.bus;
    j["phases"] = phases_json(keys_of(inv.v0_r));
    v0_fields(j, inv.v0_r, inv.v0_i, bases);
    j["i_max_a"] = phase_json(map_si(inv.i_max, bases.i_base_a()));
    j["p_target_w"] = from_per_unit(inv.p_target, model.s_base_va);
    j["q_target_var"] = from_per_unit(inv.q_target, model.s_base_va);
    j["s_max_va"] = from_per_unit(inv.s_max, model.s_base_va);
    j["status"] = status_str(inv.status);
    root["inverters"].push_back(std::move(j));
  }

  root["shunts"] = ordered_json::array();
  for (const Shunt& sh : model.shunts) {
    const BaseSet bases = model.bus_bases(sh.bus);
    ordered_json j;
    j["id"] = sh.id;
    j["bus"] = sh.bus;
    j["phases"] = phases_json(keys_of(sh.g));
    j["g_s"] = phase_json(map_pu(sh.g, bases.z_base_ohm()));
    j["b_s"] = phase_json(map_pu(sh.b, bases.z_base_ohm()));
    j["status"] = status_str(sh.status);
    root["shunts"].push_back(std::move(j));
  }

  return root.dump(2) + "\n";
}

NetworkModel set_element_status(const NetworkModel& model, const std::string& element_id,
                                Status status) {
  NetworkModel out = model;
  auto apply = [&](auto& elements) {
    for (auto& e : elements)
      if (e.id == element_id) {
        e.status = status;
        return true;
      }
    return false;
  };
  if (apply(out.lines) || apply(out.transformers) || apply(out.sources) ||
      apply(out.generators) || apply(out.gfl_inverters) || apply(out.gfm_simple_inverters) ||
      apply(out.gfm_complex_inverters) || apply(out.shunts))
    return out;
  throw ValidationError("unknown element id '" + element_id + "'");
}

NetworkModel select_inverter_model(const NetworkModel& model, InverterModel under_test) {
  NetworkModel out = model;
  for (auto& inv : out.gfl_inverters)
    inv.status = under_test == InverterModel::Gfl ? Status::On : Status::Open;
  for (auto& inv : out.gfm_simple_inverters)
    inv.status = under_test == InverterModel::GfmSimple ? Status::On : Status::Open;
  for (auto& inv : out.gfm_complex_inverters)
    inv.status = under_test == InverterModel::GfmComplex ? Status::On : Status::Open;
  return out;
}

}  // namespace ff
