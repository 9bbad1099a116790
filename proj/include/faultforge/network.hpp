#pragma once

#include <complex>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "faultforge/errors.hpp"
#include "faultforge/per_unit.hpp"

namespace ff {

enum class Phase : int { A = 0, B = 1, C = 2 };

constexpr Phase kAllPhases[3] = {Phase::A, Phase::B, Phase::C};

inline char phase_label(Phase p) { return "ABC"[static_cast<int>(p)]; }
Phase phase_from_label(char c);

/// Per-phase scalar table. Ordered by phase so iteration is deterministic.
template <typename T>
using PhaseMap = std::map<Phase, T>;

using Complex = std::complex<double>;

enum class Status { On, Open };

/// All quantities below are stored in per-unit on the system s_base and
/// the owning bus's v_base. File I/O converts from/to SI.

struct Bus {
  std::string id;
  std::vector<Phase> phases;  // sorted, nonempty
  double v_base_v = 0.0;      // line-to-neutral volts
  double v_min_sq = 0.0;      // pu^2 squared-magnitude bounds
  double v_max_sq = 4.0;

  bool has_phase(Phase p) const;
  bool operator==(const Bus&) const = default;
};

struct Line {
  std::string id;
  std::string from_bus;
  std::string to_bus;
  PhaseMap<double> r;             // pu, per phase
  PhaseMap<double> x;             // pu
  PhaseMap<double> i_thermal_sq;  // pu^2 current-magnitude-squared bound
  Status status = Status::On;
  bool operator==(const Line&) const = default;
};

struct Transformer {
  std::string id;
  std::string from_bus;
  std::string to_bus;
  double eta = 1.0;               // per-unit turns ratio, 1 = nominal
  double winding_factor = 1.0;    // fixed wye-wye
  PhaseMap<double> i_thermal_sq;  // pu^2, from-side current
  Status status = Status::On;
  bool operator==(const Transformer&) const = default;
};

struct ReferenceSource {
  std::string id;
  std::string bus;
  PhaseMap<double> v_setp;      // pu magnitude
  PhaseMap<double> theta_setp;  // radians
  PhaseMap<double> r;           // pu internal impedance
  PhaseMap<double> x;
  Status status = Status::On;

  Complex emf(Phase p) const;  // v_setp * exp(j theta_setp)
  bool operator==(const ReferenceSource&) const = default;
};

struct SyncGenerator {
  std::string id;
  std::string bus;
  PhaseMap<double> p_setp;  // pu per phase
  PhaseMap<double> q_setp;
  double pf = 1.0;                // power factor envelope, (0, 1]
  double slack_fraction = 0.05;   // band around setpoints
  Status status = Status::On;
  bool operator==(const SyncGenerator&) const = default;
};

struct GridFollowingInverter {
  std::string id;
  std::string bus;
  PhaseMap<double> p_setp;  // pu per phase, >= 0
  PhaseMap<double> i_max;   // pu per phase
  PhaseMap<double> q_min;
  PhaseMap<double> q_max;
  Status status = Status::On;
  bool operator==(const GridFollowingInverter&) const = default;
};

struct GridFormingInverterSimple {
  std::string id;
  std::string bus;
  PhaseMap<double> v0_r;   // pu, internal voltage, rectangular
  PhaseMap<double> v0_i;
  PhaseMap<double> i_max;  // pu
  Status status = Status::On;
  bool operator==(const GridFormingInverterSimple&) const = default;
};

struct GridFormingInverterComplex {
  std::string id;
  std::string bus;
  PhaseMap<double> v0_r;   // pu, pre-fault voltage phasor
  PhaseMap<double> v0_i;
  PhaseMap<double> i_max;  // pu
  double p_target = 0.0;   // pu totals, used to seed the power variables
  double q_target = 0.0;
  double s_max = 1.0;      // pu apparent power cap
  Status status = Status::On;
  bool operator==(const GridFormingInverterComplex&) const = default;
};

struct Shunt {
  std::string id;
  std::string bus;
  PhaseMap<double> g;  // pu conductance
  PhaseMap<double> b;  // pu susceptance
  Status status = Status::On;
  bool operator==(const Shunt&) const = default;
};

enum class InverterModel { Gfl, GfmSimple, GfmComplex };

std::string inverter_model_name(InverterModel m);
InverterModel inverter_model_from_name(const std::string& name);

/// Immutable per-unit description of the network. Value type: copy freely,
/// never mutate a shared instance. Safe to share across concurrent solves.
struct NetworkModel {
  double s_base_va = 0.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Transformer> transformers;
  std::vector<ReferenceSource> sources;
  std::vector<SyncGenerator> generators;
  std::vector<GridFollowingInverter> gfl_inverters;
  std::vector<GridFormingInverterSimple> gfm_simple_inverters;
  std::vector<GridFormingInverterComplex> gfm_complex_inverters;
  std::vector<Shunt> shunts;

  const Bus& bus(const std::string& id) const;
  bool has_bus(const std::string& id) const;
  BaseSet bus_bases(const std::string& id) const;

  /// Throws ValidationError on dangling references, bad bases, phase
  /// mismatches, or violated element invariants.
  void validate() const;
};

bool operator==(const NetworkModel& a, const NetworkModel& b);

/// Loads and validates a network from the native JSON format, converting
/// SI file units to per-unit. strict=false tolerates unknown keys.
NetworkModel load_network(const std::string& path, bool strict = true);
NetworkModel parse_network(const std::string& json_text, bool strict = true);

/// Inverse of load_network: emits the native JSON format in SI units.
std::string serialize_network(const NetworkModel& model);

/// Returns a copy with one element's in-service flag changed.
/// Throws ValidationError for unknown ids.
NetworkModel set_element_status(const NetworkModel& model, const std::string& element_id,
                                Status status);

/// Opens every inverter except those of the selected model, which are closed.
NetworkModel select_inverter_model(const NetworkModel& model, InverterModel under_test);

}  // namespace ff
