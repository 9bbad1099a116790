#pragma once

#include <faultforge/network.hpp>

// Small programmatic networks, built directly in per-unit.

namespace fftest {

inline ff::Bus make_bus(const std::string& id, double v_min_sq = 0.0, double v_max_sq = 25.0) {
  ff::Bus b;
  b.id = id;
  b.phases = {ff::Phase::A, ff::Phase::B, ff::Phase::C};
  b.v_base_v = 230.94010767585033;
  b.v_min_sq = v_min_sq;
  b.v_max_sq = v_max_sq;
  return b;
}

inline ff::PhaseMap<double> all_phases(double v) {
  return {{ff::Phase::A, v}, {ff::Phase::B, v}, {ff::Phase::C, v}};
}

inline ff::ReferenceSource make_source(const std::string& id, const std::string& bus,
                                       double mag = 1.0, double r = 0.01, double x = 0.05) {
  ff::ReferenceSource src;
  src.id = id;
  src.bus = bus;
  src.v_setp = all_phases(mag);
  src.theta_setp = {{ff::Phase::A, 0.0},
                    {ff::Phase::B, -2.0943951023931953},
                    {ff::Phase::C, +2.0943951023931953}};
  src.r = all_phases(r);
  src.x = all_phases(x);
  return src;
}

inline ff::Line make_line(const std::string& id, const std::string& from, const std::string& to,
                          double r, double x, double i_thermal_sq = 1e8) {
  ff::Line ln;
  ln.id = id;
  ln.from_bus = from;
  ln.to_bus = to;
  ln.r = all_phases(r);
  ln.x = all_phases(x);
  ln.i_thermal_sq = all_phases(i_thermal_sq);
  return ln;
}

/// One bus held by a reference source. The unique solution is the setpoint.
inline ff::NetworkModel single_bus_source(double mag = 1.0) {
  ff::NetworkModel m;
  m.s_base_va = 25000.0;
  m.buses = {make_bus("b1")};
  m.sources = {make_source("src", "b1", mag)};
  m.validate();
  return m;
}

/// Source bus feeding a load bus over one line; classic divider for faults.
inline ff::NetworkModel two_bus_divider(double r_line = 0.05, double x_line = 0.1) {
  ff::NetworkModel m;
  m.s_base_va = 25000.0;
  m.buses = {make_bus("src_bus"), make_bus("fault_bus")};
  m.sources = {make_source("grid", "src_bus")};
  m.lines = {make_line("feeder", "src_bus", "fault_bus", r_line, x_line)};
  m.validate();
  return m;
}

}  // namespace fftest
