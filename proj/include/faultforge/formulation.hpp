#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "faultforge/fault.hpp"
#include "faultforge/network.hpp"

namespace ff {

enum class VarKind : int {
  BusVoltageRe,
  BusVoltageIm,
  ElementCurrentRe,
  ElementCurrentIm,
  FaultCurrentRe,
  FaultCurrentIm,
  GflActivation,        // z, per phase
  GfmSimpleResistance,  // r, per phase
  GfmComplexActivation, // z, per phase
  GenPowerP,
  GenPowerQ,
};

std::string var_kind_name(VarKind k);

/// Transformers carry distinct currents on their two sides; everything else
/// uses a single port.
enum class Port : int { None = 0, From = 1, To = 2 };

struct VariableKey {
  VarKind kind;
  std::string owner;
  Port port = Port::None;
  std::optional<Phase> phase;  // absent for totals (GFM-complex P, Q)

  auto operator<=>(const VariableKey&) const = default;
  std::string name() const;
};

/// Constraint families, used for infeasibility attribution and the debug dump.
enum class Family : int {
  SourceEmf,
  Power,
  VoltageMagnitude,
  CurrentCap,
  Kcl,
  Ohm,
  TransformerRatio,
  FaultDefinition,
  Complementarity,
  AngleLock,
};

std::string family_name(Family f);

enum class Component : int { None, Re, Im };

/// Sum of monomials c * x_a [* x_b [* x_c]], degree <= 3. All constraints of
/// the formulation are polynomials of this shape, so residuals and analytic
/// derivatives come from one generic evaluator.
struct Monomial {
  double coeff = 0.0;
  std::array<int32_t, 3> vars = {-1, -1, -1};
  int degree = 0;
};

struct Polynomial {
  std::vector<Monomial> terms;

  void add(double coeff);  // constant
  void add(double coeff, int32_t a);
  void add(double coeff, int32_t a, int32_t b);
  void add(double coeff, int32_t a, int32_t b, int32_t c);

  double eval(const Eigen::VectorXd& x) const;
  /// Appends d(poly)/dx entries for one row into the triplet list.
  void gradient(const Eigen::VectorXd& x, int row,
                std::vector<Eigen::Triplet<double>>& out) const;
  /// Variable indices appearing in any term (duplicates removed).
  std::vector<int32_t> support() const;
};

struct Constraint {
  std::string name;    // e.g. "line_ohm_re[ln2.B]"
  Family family = Family::Kcl;
  std::string source_id;  // element this residual came from
  std::optional<Phase> phase;
  Component component = Component::None;
  Polynomial poly;     // equality: poly == 0; inequality: poly <= 0
};

struct VariableTable {
  std::vector<VariableKey> keys;            // flat index -> key
  std::map<VariableKey, int32_t> index_of;  // key -> flat index

  int32_t add(const VariableKey& key);
  int32_t require(const VariableKey& key) const;  // throws if absent
  std::optional<int32_t> find(const VariableKey& key) const;
  int size() const { return static_cast<int>(keys.size()); }
};

struct AssembleOptions {
  double eps_comp = 1e-6;   // relaxed complementarity tolerance
  double big_m = 1e3;       // retained for experimentation; not in residuals
  bool strict_apparent_cap = false;  // GFM-complex: P^2+Q^2<=S^2 instead of P+Q<=S

  // Bound written into the residuals: slightly inside eps_comp so that a
  // solution within the solver's inequality tolerance still satisfies the
  // nominal eps_comp product bound.
  double comp_bound() const { return 0.98 * eps_comp; }
};

/// Indexed variables plus residual and bound definitions. Immutable after
/// assembly; residual/jacobian evaluation allocates its own scratch and may
/// run concurrently from several threads.
struct ConstraintSystem {
  VariableTable vars;
  std::vector<Constraint> equalities;    // poly == 0
  std::vector<Constraint> inequalities;  // poly <= 0
  Eigen::VectorXd lower;  // variable bounds, -inf/+inf when free
  Eigen::VectorXd upper;
  Eigen::VectorXd start;  // flat start: nominal voltages, setpoint powers
  AssembleOptions options;
  std::optional<std::string> faulted_bus;

  int n_vars() const { return vars.size(); }
  /// True when both tables name the same variables in the same order.
  bool same_layout(const ConstraintSystem& other) const;
};

/// Builds the full constraint system for a network, optionally with a fault
/// attached. Open elements are skipped. The fault bus must exist and carry
/// every phase the admittance covers.
ConstraintSystem assemble(const NetworkModel& model,
                          const std::optional<FaultAdmittance>& fault = std::nullopt,
                          const AssembleOptions& options = {});

struct Residuals {
  Eigen::VectorXd equalities;    // == 0 at a feasible point
  Eigen::VectorXd inequalities;  // <= 0 at a feasible point
};

/// Evaluates every residual at x. Throws on dimension mismatch or
/// non-finite input.
Residuals residual(const ConstraintSystem& system, const Eigen::VectorXd& x);

struct SystemJacobian {
  Eigen::SparseMatrix<double> equalities;    // n_eq x n_vars
  Eigen::SparseMatrix<double> inequalities;  // n_ineq x n_vars
};

/// Analytic partial derivatives of every residual. The sparsity pattern is
/// structural (it does not depend on x).
SystemJacobian jacobian(const ConstraintSystem& system, const Eigen::VectorXd& x);

/// Constraint listing (name, family, variables) plus the variable table and
/// bounds, as JSON text, for inspection and regression diffing.
std::string dump_system(const ConstraintSystem& system);

}  // namespace ff
