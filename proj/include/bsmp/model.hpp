#pragma once

#include "bsmp/control_set.hpp"
#include "bsmp/linalg.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bsmp {

/// Partial derivatives of the driver b at one point.
///   b_y : n x n
///   b_z : d matrices of shape n x n, b_z[j](a, c) = d b_a / d z_{c j}
///   b_v : n x m
struct DriverJacobian {
    Matrix b_y;
    std::vector<Matrix> b_z;
    Matrix b_v;
};

/// Gradient of the running cost h: h_y in R^n, h_z is n x d, h_v in R^m.
struct CostGradient {
    Vector h_y;
    Matrix h_z;
    Vector h_v;
};

using DriverFn = std::function<Vector(double t, const VecRef& y, const MatRef& z, const VecRef& v)>;
using DriverJacobianFn = std::function<DriverJacobian(double t, const VecRef& y, const MatRef& z, const VecRef& v)>;
using RunningCostFn = std::function<double(double t, const VecRef& y, const MatRef& z, const VecRef& v)>;
using RunningCostGradFn = std::function<CostGradient(double t, const VecRef& y, const MatRef& z, const VecRef& v)>;
using InitialCostFn = std::function<double(const VecRef& y0)>;
using InitialCostGradFn = std::function<Vector(const VecRef& y0)>;
// Terminal data as a function of W_T. Path functionals are not supported.
using TerminalFn = std::function<Vector(const VecRef& w_terminal)>;

/// Declared constants for the standing regularity assumptions. They are
/// probed, never enforced.
struct AssumptionProfile {
    double lipschitz_bound = 5.0;   // C
    double growth_alpha = 0.5;      // alpha in (0, 1)
    std::function<double(double)> phi;  // phi_t, zero when empty
    std::function<double(double)> psi;  // psi_t, stored only
    bool terminal_in_L1_only = false;
    double probe_radius = 20.0;     // probes draw y, z entries from [-R, R]

    void validate() const;
};

struct ProblemSpec {
    std::string name;
    Dimensions dims;
    DriverFn driver;
    DriverJacobianFn driver_grad;
    RunningCostFn running_cost;
    RunningCostGradFn running_cost_grad;
    InitialCostFn initial_cost;
    InitialCostGradFn initial_cost_grad;
    TerminalFn terminal;
    ControlSet control_set;
    double horizon = 1.0;
    AssumptionProfile assumptions;

    /// Throws std::invalid_argument when a callable is missing or shapes disagree.
    void validate() const;
};

/// A point (t, y, z, v) at which derivatives are compared.
struct ProbePoint {
    double t = 0.0;
    Vector y;
    Matrix z;
    Vector v;
};

struct AssumptionCheck {
    std::string name;           // "4.1", "4.2", ...
    std::string description;
    bool passed = true;
    bool hard_failure = false;  // non-finite value encountered
    double max_violation_ratio = 0.0;  // observed / allowed, pass iff <= 1
    std::string worst_probe;
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;

    bool all_passed() const;
    const AssumptionCheck& at(const std::string& name) const;
};

/// Randomized probing of the regularity assumptions with the constants in
/// spec.assumptions. Deterministic for a given seed.
AssumptionReport validate_assumptions(const ProblemSpec& spec, int probe_budget, std::uint64_t seed = 20240917);

/// Max over all entries of |analytic - central FD| / (1 + |analytic|) for
/// b_y, b_z, b_v, h_y, h_z, h_v and g_y at the given point.
double grad_check(const ProblemSpec& spec, const ProbePoint& point, double step);

}  // namespace bsmp
