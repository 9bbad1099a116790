#include "faultforge/fault.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace ff {

using nlohmann::ordered_json;

std::string fault_kind_name(FaultKind k) {
  switch (k) {
    case FaultKind::LG: return "lg";
    case FaultKind::LL: return "ll";
    case FaultKind::LLG: return "llg";
    case FaultKind::ThreePhase: return "3ph";
    case FaultKind::ThreePhaseGround: return "3phg";
  }
  return {};
}

FaultKind fault_kind_from_name(const std::string& name) {
  if (name == "lg") return FaultKind::LG;
  if (name == "ll") return FaultKind::LL;
  if (name == "llg") return FaultKind::LLG;
  if (name == "3ph") return FaultKind::ThreePhase;
  if (name == "3phg") return FaultKind::ThreePhaseGround;
  throw ValidationError("unknown fault kind '" + name + "'");
}

bool fault_kind_grounded(FaultKind k) {
  return k == FaultKind::LG || k == FaultKind::LLG || k == FaultKind::ThreePhaseGround;
}

int fault_kind_phase_count(FaultKind k) {
  switch (k) {
    case FaultKind::LG: return 1;
    case FaultKind::LL:
    case FaultKind::LLG: return 2;
    case FaultKind::ThreePhase:
    case FaultKind::ThreePhaseGround: return 3;
  }
  return 0;
}

void FaultSpec::validate() const {
  if (bus.empty()) throw ValidationError("fault: empty bus id");
  const int want = fault_kind_phase_count(kind);
  if (static_cast<int>(phases.size()) != want)
    throw ValidationError("fault: kind " + fault_kind_name(kind) + " requires " +
                          std::to_string(want) + " phases, got " +
                          std::to_string(phases.size()));
  if (!std::is_sorted(phases.begin(), phases.end()) ||
      std::adjacent_find(phases.begin(), phases.end()) != phases.end())
    throw ValidationError("fault: phases must be sorted and unique");
  if (r_phase_ohm.size() != phases.size())
    throw ValidationError("fault: one phase resistance per involved phase required");
  for (double r : r_phase_ohm)
    if (!(r > 0.0))
      throw ValidationError(
          "fault: phase resistance must be positive (bolted faults use the floor resistance)");
  if (fault_kind_grounded(kind)) {
    if (r_ground_ohm < 0.0) throw ValidationError("fault: ground resistance must be >= 0");
  }
}

FaultSpec parse_fault_spec(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw ParseError(std::string("invalid fault JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("fault: expected an object");

  FaultSpec spec;
  if (!j.contains("bus") || !j.at("bus").is_string())
    throw ParseError("fault: missing string 'bus'");
  spec.bus = j.at("bus").get<std::string>();
  if (!j.contains("kind") || !j.at("kind").is_string())
    throw ParseError("fault: missing string 'kind'");
  spec.kind = fault_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("phases")) {
    for (const auto& e : j.at("phases")) {
      if (!e.is_string() || e.get<std::string>().size() != 1)
        throw ParseError("fault.phases: expected one-letter labels");
      spec.phases.push_back(phase_from_label(e.get<std::string>()[0]));
    }
    std::sort(spec.phases.begin(), spec.phases.end());
  }
  if (!j.contains("r_phase_ohm")) throw ParseError("fault: missing 'r_phase_ohm'");
  const auto& rp = j.at("r_phase_ohm");
  if (rp.is_number()) {
    spec.r_phase_ohm.assign(spec.phases.size(), rp.get<double>());
  } else if (rp.is_array()) {
    for (const auto& e : rp) spec.r_phase_ohm.push_back(e.get<double>());
  } else {
    throw ParseError("fault.r_phase_ohm: expected a number or array");
  }
  spec.r_ground_ohm = j.value("r_ground_ohm", 0.0);
  spec.validate();
  return spec;
}

std::string serialize_fault_spec(const FaultSpec& spec) {
  ordered_json j;
  j["bus"] = spec.bus;
  j["kind"] = fault_kind_name(spec.kind);
  j["phases"] = ordered_json::array();
  for (Phase p : spec.phases) j["phases"].push_back(std::string(1, phase_label(p)));
  j["r_phase_ohm"] = spec.r_phase_ohm;
  if (fault_kind_grounded(spec.kind)) j["r_ground_ohm"] = spec.r_ground_ohm;
  return j.dump(2) + "\n";
}

bool FaultAdmittance::covers(Phase p) const {
  return std::find(phases.begin(), phases.end(), p) != phases.end();
}

int FaultAdmittance::index_of(Phase p) const {
  auto it = std::find(phases.begin(), phases.end(), p);
  return it == phases.end() ? -1 : static_cast<int>(it - phases.begin());
}

FaultAdmittance build_fault_admittance(const FaultSpec& spec, const BaseSet& bases) {
  spec.validate();
  const int n = static_cast<int>(spec.phases.size());
  const double z_base = bases.z_base_ohm();

  // Per-phase branch conductances of the star, in per-unit.
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i) g(i) = z_base / spec.r_phase_ohm[i];

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  const bool grounded = fault_kind_grounded(spec.kind);

  if (grounded && spec.r_ground_ohm == 0.0) {
    // Internal node bolted to ground: phases decouple into shunt legs.
    G = g.asDiagonal();
  } else {
    // Kron-eliminate the internal star node. g_sum includes the ground leg
    // for grounded kinds; entry (i,j) of the mesh is g_i g_j / g_sum and
    // ground-leg conductance folds into the diagonal.
    double g_sum = g.sum();
    double g_ground = 0.0;
    if (grounded) {
      g_ground = z_base / spec.r_ground_ohm;
      g_sum += g_ground;
    }
    if (!(g_sum > 0.0)) throw ValidationError("fault: degenerate star, all conductances zero");
    for (int i = 0; i < n; ++i) {
      // Diagonal in factored form: g_i (g_sum - g_i) / g_sum with the
      // complement summed directly, avoiding cancellation between large
      // nearly-equal conductances.
      double others = g_ground;
      for (int k = 0; k < n; ++k)
        if (k != i) others += g(k);
      G(i, i) = g(i) * others / g_sum;
      for (int j = 0; j < n; ++j)
        if (i != j) G(i, j) = -g(i) * g(j) / g_sum;
    }
    if (n == 1 && !grounded)
      throw ValidationError("fault: single ungrounded phase has no current path");
  }

  FaultAdmittance out;
  out.bus = spec.bus;
  out.phases = spec.phases;
  out.conductance = std::move(G);
  return out;
}

RectangularPhasors fault_current_injection(const FaultAdmittance& admittance,
                                           const RectangularPhasors& bus_voltage) {
  const auto n = admittance.conductance.rows();
  if (bus_voltage.re.size() != n || bus_voltage.im.size() != n)
    throw ValidationError("fault current: voltage vector does not cover the fault phases");
  return RectangularPhasors{admittance.conductance * bus_voltage.re,
                            admittance.conductance * bus_voltage.im};
}

}  // namespace ff
