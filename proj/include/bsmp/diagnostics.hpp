#pragma once

#include "bsmp/adjoint.hpp"
#include "bsmp/bsde.hpp"
#include "bsmp/smp.hpp"
#include "bsmp/stats.hpp"

#include <string>
#include <vector>

namespace bsmp {

/// One metric tabulated over a decreasing theta grid.
struct ConvergenceSeries {
    std::string name;
    std::vector<double> values;
    std::vector<double> stderrs;
    double slope = 0.0;       // least-squares slope of log(value) on log(theta); NaN if a value is 0
    bool monotone = false;    // nonincreasing as theta decreases, within 1 standard error
    bool all_zero = false;
};

struct ConvergenceTable {
    std::vector<double> theta_grid;
    std::vector<ConvergenceSeries> series;

    const ConvergenceSeries& at(const std::string& name) const;
};

/// Throws unless the grid is strictly decreasing inside (0, 1].
void validate_theta_grid(const std::vector<double>& theta_grid);

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// values[j + 1] <= values[j] + tolerance_se * max(se_j, se_{j+1}) for all j.
bool nonincreasing(const std::vector<double>& values, const std::vector<double>& stderrs, double tolerance_se = 1.0);

/// Series "sup_y" = max_i E|y^theta_i - y^u_i|^2 and "int_z" = E sum_i |z^theta_i - z^u_i|^2 dt.
ConvergenceTable lemma4_table(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& u,
                              const ControlProcess& v, const std::vector<double>& theta_grid,
                              const BsdeOptions& options);

/// Series "phi_0" = E|Y_0 - dy_0 / theta|^2, "sup_phi" = max_i E|Y_i - dy_i / theta|^2 and
/// "int_psi" = E sum_i |Z_i - dz_i / theta|^2 dt.
ConvergenceTable lemma5_table(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& u,
                              const ControlProcess& v, const std::vector<double>& theta_grid,
                              const BsdeOptions& options);

/// E[g_y(y_0) Y_0] + E int (h_y Y + h_z : Z + h_v (v - u)) dt, trapezoid in time.
Estimate lemma6_check(const ProblemSpec& spec, const PathEnsemble& ensemble, const TrajectoryBundle& bundle_u,
                      const VariationalSolution& variational);

Eigen::ArrayXd lemma6_samples(const ProblemSpec& spec, const TrajectoryBundle& bundle_u,
                              const VariationalSolution& variational);

struct DualityReport {
    Estimate s_terminal;     // E[S_T], S_T = sum_i (H_z^T Y_i - Z_i^T p_i) . dW_i
    double lemma6 = 0.0;     // variational functional
    double hamiltonian = 0.0;  // E int H_v . (u - v) dt
    double gap = 0.0;        // |lemma6 - hamiltonian|
    double gap_stderr = 0.0;   // standard error of the paired difference
    double residual = 0.0;   // E[lemma6 - hamiltonian - S_T]: discrete Ito-product residual
    bool martingale_pass = false;
    bool gap_pass = false;
};

DualityReport duality_check(const ProblemSpec& spec, const PathEnsemble& ensemble, const TrajectoryBundle& bundle_u,
                            const AdjointPath& adjoint, const VariationalSolution& variational);

struct NormEstimates {
    std::vector<double> p_list;
    std::vector<double> sp_norm;  // E[max_i |X_i|^p]^(1 ^ 1/p)
    std::vector<double> mp_norm;  // E[(sum_i |X_i|^2 dt)^(p/2)]^(1 ^ 1/p), left Riemann sum
    double classD_proxy = 0.0;    // max of E|X_tau| over grid times and first hitting times of |X| >= 1, 2, 4, 8
    bool finite = true;
};

/// process holds N + 1 (or N, for z-type processes) arrays of P x k.
NormEstimates empirical_norms(const PathProcess& process, const TimeGrid& grid, const std::vector<double>& p_list);

/// The first `paths` rows of every step.
PathProcess path_prefix(const PathProcess& process, Eigen::Index paths);

struct GradientIdentityRow {
    double theta = 0.0;
    double quotient = 0.0;    // (J(u^theta) - J(u)) / theta
    double derivative = 0.0;  // E int H_v . (u - v) dt
    double gap = 0.0;
};

struct GradientIdentity {
    std::vector<GradientIdentityRow> rows;
    bool decreasing = false;
};

GradientIdentity gradient_identity(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& u,
                                   const ControlProcess& v, const std::vector<double>& theta_grid,
                                   const BsdeOptions& options);

}  // namespace bsmp
