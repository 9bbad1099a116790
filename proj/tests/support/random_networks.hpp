#pragma once

#include <random>
#include <string>

#include <faultforge/fault.hpp>
#include <faultforge/network.hpp>

#include "model_builders.hpp"

// Randomized linear networks (sources, lines, transformers, shunts) with a
// random fault, used for oracle-equivalence checks. Bounds are generated
// wide so that no inequality binds and the unique linear solution is the
// only feasible point.

namespace fftest {

struct RandomCase {
  ff::NetworkModel model;
  ff::FaultSpec fault;
};

inline RandomCase random_linear_case(unsigned seed) {
  std::mt19937 rng(seed);
  auto uni = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };

  ff::NetworkModel m;
  m.s_base_va = 25000.0;
  const int n_buses = 2 + pick(5);  // 2..6
  for (int i = 0; i < n_buses; ++i) m.buses.push_back(make_bus("bus" + std::to_string(i)));

  // Spanning tree; mostly lines, occasionally a transformer.
  int xfmr_count = 0;
  for (int i = 1; i < n_buses; ++i) {
    const int j = pick(i);
    const std::string from = "bus" + std::to_string(j);
    const std::string to = "bus" + std::to_string(i);
    if (pick(5) == 0) {
      ff::Transformer tr;
      tr.id = "xf" + std::to_string(xfmr_count++);
      tr.from_bus = from;
      tr.to_bus = to;
      tr.eta = uni(0.9, 1.1);
      tr.i_thermal_sq = all_phases(1e8);
      m.transformers.push_back(std::move(tr));
    } else {
      m.lines.push_back(make_line("ln" + std::to_string(i), from, to, uni(0.01, 0.2),
                                  uni(0.02, 0.4)));
    }
  }
  // Up to two extra line edges.
  int extra = pick(3);
  for (int e = 0; e < extra && n_buses >= 3; ++e) {
    const int a = pick(n_buses);
    int b = pick(n_buses);
    if (a == b) continue;
    m.lines.push_back(make_line("extra" + std::to_string(e), "bus" + std::to_string(a),
                                "bus" + std::to_string(b), uni(0.05, 0.3), uni(0.05, 0.3)));
  }

  m.sources.push_back(make_source("grid", "bus0", uni(0.95, 1.05), uni(0.005, 0.05),
                                  uni(0.01, 0.08)));
  if (n_buses > 3 && pick(2) == 0)
    m.sources.push_back(
        make_source("grid2", "bus" + std::to_string(n_buses - 1), uni(0.95, 1.05),
                    uni(0.01, 0.05), uni(0.01, 0.08)));

  if (pick(2) == 0) {
    ff::Shunt sh;
    sh.id = "sh0";
    sh.bus = "bus" + std::to_string(pick(n_buses));
    sh.g = all_phases(uni(0.0, 0.2));
    sh.b = all_phases(uni(-0.1, 0.2));
    m.shunts.push_back(std::move(sh));
  }

  m.validate();

  ff::FaultSpec fault;
  fault.bus = "bus" + std::to_string(pick(n_buses));
  const int kind_idx = pick(3);
  const double r = std::pow(10.0, uni(-3.0, 1.0));
  switch (kind_idx) {
    case 0:
      fault.kind = ff::FaultKind::LG;
      fault.phases = {ff::Phase::A};
      fault.r_phase_ohm = {r};
      fault.r_ground_ohm = pick(2) == 0 ? 0.0 : uni(0.0, 1.0);
      break;
    case 1:
      fault.kind = ff::FaultKind::LL;
      fault.phases = {ff::Phase::A, ff::Phase::B};
      fault.r_phase_ohm = {r / 2.0, r / 2.0};
      break;
    default:
      fault.kind = ff::FaultKind::ThreePhaseGround;
      fault.phases = {ff::Phase::A, ff::Phase::B, ff::Phase::C};
      fault.r_phase_ohm = {r, r, r};
      fault.r_ground_ohm = pick(2) == 0 ? 0.0 : uni(0.0, 1.0);
      break;
  }
  fault.validate();
  return {std::move(m), std::move(fault)};
}

}  // namespace fftest
