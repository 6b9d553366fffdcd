#pragma once

#include "bsmp/adjoint.hpp"
#include "bsmp/bsde.hpp"
#include "bsmp/stats.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bsmp {

enum class CostMethod { direct, augmented };

struct CostBreakdown {
    double J = 0.0;
    double initial_term = 0.0;   // E[g(y_0)]
    double running_term = 0.0;   // E int h dt (direct) or -E[x_0] + eta (augmented)
    double standard_error = 0.0;
    CostMethod method = CostMethod::direct;
    // Per-path cost samples; their mean is J up to roundoff.
    Eigen::ArrayXd samples;
};

/// J = E[g(y_0) + int_0^T h dt], trapezoid in time with z and v held over
/// each interval.
CostBreakdown evaluate_cost_direct(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                   const TrajectoryBundle& bundle);

/// Appends a cost state x with driver h and terminal value eta, solves the
/// stacked (n + 1)-dimensional BSDE and returns E[g(y_0) - x_0] + eta.
CostBreakdown evaluate_cost_augmented(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                      const TrajectoryBundle& bundle, double eta = 0.0);

/// sqrt(se_a^2 + se_b^2).
double combined_stderr(const CostBreakdown& a, const CostBreakdown& b);

/// u + theta (v - u); membership in U is asserted.
ControlProcess perturb(const ControlProcess& u, const ControlProcess& v, double theta, const ControlSet& set);

/// H_v(t_i, y_i, z_i, u_i, p_i) per step, N arrays of P x m.
std::vector<RowArray> hamiltonian_gradient(const ProblemSpec& spec, const TrajectoryBundle& bundle,
                                           const AdjointPath& adjoint);

/// E int H_v . (u - v) dt, trapezoid with the right end at (t_{i+1}, y_{i+1}, z_i, u_i, p_{i+1}).
/// This is the derivative of J in the direction v - u.
Estimate directional_derivative(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                 const TrajectoryBundle& bundle, const AdjointPath& adjoint, const ControlProcess& v);

/// Per-path samples of the functional above.
Eigen::ArrayXd directional_derivative_samples(const ProblemSpec& spec, const TrajectoryBundle& bundle,
                                              const AdjointPath& adjoint, const ControlProcess& v);

struct StationarityReport {
    double residual = 0.0;       // E sum_i |u_i - Pi(u_i + H_v,i)|^2 dt
    std::vector<Estimate> vi_values;
    bool pass = false;
};

StationarityReport check_stationarity(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                      const TrajectoryBundle& bundle, const AdjointPath& adjoint,
                                      const std::vector<ControlProcess>& probes, double tolerance);

/// Projection residual from precomputed H_v.
double stationarity_residual(const ProblemSpec& spec, const ControlProcess& u, const std::vector<RowArray>& h_v,
                             double dt);

struct IterationRecord {
    int iter = 0;
    double J = 0.0;
    double J_stderr = 0.0;
    double residual = 0.0;
    double step_size = 0.0;
};

enum class OptimizerStatus { converged, max_iters, step_size_too_large };

std::string to_string(OptimizerStatus status);

struct OptimizerOptions {
    double step_size = 0.5;
    int max_iters = 50;
    double tolerance = 1e-8;
    BsdeOptions bsde;
    // Evaluate the final control on a fresh ensemble drawn with this seed.
    std::optional<std::uint64_t> validation_seed;
};

struct OptimizeResult {
    std::vector<IterationRecord> history;
    ControlProcess control;
    OptimizerStatus status = OptimizerStatus::max_iters;
    std::string message;
    CostBreakdown final_cost;
    double final_residual = 0.0;
    std::optional<CostBreakdown> validation_cost;
};

/// Projected gradient ascent on the Hamiltonian: u <- Pi_U(u + gamma H_v).
OptimizeResult optimize(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& u0,
                        const OptimizerOptions& options);

/// Carries a per-path control to another ensemble by regressing each step on
/// W_{t_i} and projecting the fitted values onto U.
ControlProcess transfer_control(const ProblemSpec& spec, const PathEnsemble& from, const ControlProcess& control,
                                const PathEnsemble& to, const RegressionBasis& basis);

}  // namespace bsmp
