#include "faultforge/nodal.hpp"

#include <cmath>

namespace ff {

NodalSystem build_nodal(const NetworkModel& model, const std::optional<FaultAdmittance>& fault) {
  model.validate();
  auto in_service = [](auto status) { return status == Status::On; };
  for (const SyncGenerator& g : model.generators)
    if (in_service(g.status))
      throw ValidationError("nodal oracle: nonlinear element '" + g.id + "' present");
  for (const GridFollowingInverter& inv : model.gfl_inverters)
    if (in_service(inv.status))
      throw ValidationError("nodal oracle: nonlinear element '" + inv.id + "' present");
  for (const GridFormingInverterSimple& inv : model.gfm_simple_inverters)
    if (in_service(inv.status))
      throw ValidationError("nodal oracle: nonlinear element '" + inv.id + "' present");
  for (const GridFormingInverterComplex& inv : model.gfm_complex_inverters)
    if (in_service(inv.status))
      throw ValidationError("nodal oracle: nonlinear element '" + inv.id + "' present");

  NodalSystem sys;
  sys.model = &model;
  sys.fault = fault;

  for (const Bus& bus : model.buses)
    for (Phase p : bus.phases) {
      const int idx = static_cast<int>(sys.node_index.size());
      sys.node_index[{bus.id, p}] = idx;
    }
  sys.n_nodes = static_cast<int>(sys.node_index.size());

  // One extra unknown (to-side current) and ratio row per transformer phase.
  int extra = 0;
  for (const Transformer& tr : model.transformers)
    if (tr.status == Status::On) extra += static_cast<int>(tr.i_thermal_sq.size());

  const int dim = sys.n_nodes + extra;
  sys.admittance = Eigen::MatrixXcd::Zero(dim, dim);
  sys.injection = Eigen::VectorXcd::Zero(dim);

  auto node = [&](const std::string& bus, Phase p) {
    return sys.node_index.at({bus, p});
  };

  for (const Line& ln : model.lines) {
    if (ln.status != Status::On) continue;
    for (const auto& [p, r] : ln.r) {
      const Complex z(r, ln.x.at(p));
      const Complex y = 1.0 / z;
      const int a = node(ln.from_bus, p);
      const int c = node(ln.to_bus, p);
      sys.admittance(a, a) += y;
      sys.admittance(c, c) += y;
      sys.admittance(a, c) -= y;
      sys.admittance(c, a) -= y;
    }
  }

  for (const Shunt& sh : model.shunts) {
    if (sh.status != Status::On) continue;
    for (const auto& [p, g] : sh.g)
      sys.admittance(node(sh.bus, p), node(sh.bus, p)) += Complex(g, sh.b.at(p));
  }

  for (const ReferenceSource& src : model.sources) {
    if (src.status != Status::On) continue;
    for (const auto& [p, _] : src.v_setp) {
      const Complex z(src.r.at(p), src.x.at(p));
      if (z == Complex(0.0, 0.0))
        throw ValidationError("nodal oracle: source '" + src.id +
                              "' has zero internal impedance; Norton stamp impossible");
      const Complex y = 1.0 / z;
      const int a = node(src.bus, p);
      sys.admittance(a, a) += y;
      sys.injection(a) += src.emf(p) * y;
    }
  }

  if (fault) {
    const Eigen::MatrixXd& G = fault->conductance;
    for (size_t i = 0; i < fault->phases.size(); ++i)
      for (size_t j = 0; j < fault->phases.size(); ++j)
        sys.admittance(node(fault->bus, fault->phases[i]),
                       node(fault->bus, fault->phases[j])) +=
            G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  int row = sys.n_nodes;
  for (const Transformer& tr : model.transformers) {
    if (tr.status != Status::On) continue;
    for (const auto& [p, _] : tr.i_thermal_sq) {
      const int a = node(tr.from_bus, p);
      const int c = node(tr.to_bus, p);
      // Current leaving the from bus is eta * I_to; I_to arrives at the to
      // bus. The ratio row pins V_from = eta V_to.
      sys.admittance(a, row) += tr.eta;
      sys.admittance(c, row) -= 1.0;
      sys.admittance(row, a) += tr.winding_factor;
      sys.admittance(row, c) -= tr.eta;
      ++row;
    }
  }

  return sys;
}

NodalSolution solve_nodal(const NodalSystem& system) {
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(system.admittance);
  if (!lu.isInvertible())
    throw NumericalError("nodal oracle: singular admittance matrix (floating subnetwork?)");
  const Eigen::VectorXcd v = lu.solve(system.injection);

  NodalSolution sol;
  sol.residual_inf = (system.admittance * v - system.injection).cwiseAbs().maxCoeff();

  for (const auto& [key, idx] : system.node_index) sol.voltage[key] = v(idx);

  const NetworkModel& model = *system.model;
  for (const Line& ln : model.lines) {
    if (ln.status != Status::On) continue;
    for (const auto& [p, r] : ln.r) {
      const Complex z(r, ln.x.at(p));
      const Complex va = sol.voltage.at({ln.from_bus, p});
      const Complex vb = sol.voltage.at({ln.to_bus, p});
      sol.line_current[{ln.id, p}] = (va - vb) / z;
    }
  }
  for (const ReferenceSource& src : model.sources) {
    if (src.status != Status::On) continue;
    for (const auto& [p, _] : src.v_setp) {
      const Complex z(src.r.at(p), src.x.at(p));
      sol.source_current[{src.id, p}] = (src.emf(p) - sol.voltage.at({src.bus, p})) / z;
    }
  }
  int row = system.n_nodes;
  for (const Transformer& tr : model.transformers) {
    if (tr.status != Status::On) continue;
    for (const auto& [p, _] : tr.i_thermal_sq) {
      sol.transformer_current[{tr.id, p}] = tr.eta * v(row);  // from-side
      ++row;
    }
  }
  if (system.fault) {
    const FaultAdmittance& f = *system.fault;
    const int n = static_cast<int>(f.phases.size());
    Eigen::VectorXcd vf(n);
    for (int i = 0; i < n; ++i) vf(i) = sol.voltage.at({f.bus, f.phases[static_cast<size_t>(i)]});
    const Eigen::VectorXcd fi = f.conductance * vf;
    for (int i = 0; i < n; ++i) sol.fault_current[f.phases[static_cast<size_t>(i)]] = fi(i);
  }
  return sol;
}

}  // namespace ff
