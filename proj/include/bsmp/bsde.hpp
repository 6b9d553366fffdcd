#pragma once

#include "bsmp/model.hpp"
#include "bsmp/regression.hpp"
#include "bsmp/sampling.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace bsmp {

/// A control on the grid: values[i] is P x m and holds the value on
/// [t_i, t_{i+1}) for every path.
struct ControlProcess {
    std::vector<RowArray> values;
    bool admissible = false;

    int steps() const { return static_cast<int>(values.size()); }
    Eigen::Index paths() const { return values.empty() ? 0 : values.front().rows(); }
    int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().cols()); }

    /// The same vector on every path and step; admissibility is checked against U.
    static ControlProcess constant(int steps, Eigen::Index paths, const Vector& value, const ControlSet& set);
};

/// Recomputes the admissible flag (every value in U).
bool check_admissible(ControlProcess& control, const ControlSet& set);

struct BsdeOptions {
    RegressionBasis basis;
    int picard_iters = 2;
    std::optional<double> winsor_cap;  // clamp |xi| componentwise when set
};

/// Discrete solution (y, z) of the controlled BSDE on one ensemble.
struct TrajectoryBundle {
    Dimensions dims;
    TimeGrid grid{1.0, 1};
    PathProcess y;               // N + 1 arrays, P x n
    PathProcess z;               // N arrays, P x (n d), each row an n x d matrix in column-major order
    ControlProcess control;
    BsdeOptions options;
    RowArray pathwise_y0;        // P x n, xi - sum_i b_i dt: one unbiased sample of y_0 per path
    Eigen::Index winsorized = 0; // terminal entries clamped by the cap
    std::uint64_t ensemble_fingerprint = 0;

    Vector y0() const { return y.front().row(0).transpose(); }
};

/// Linearized solution (Y, Z) in the direction v - u.
struct VariationalSolution {
    PathProcess Y;               // N + 1 arrays, P x n; Y_N = 0
    PathProcess Z;               // N arrays, P x (n d)
    RowArray pathwise_Y0;        // P x n, one unbiased sample of Y_0 per path
    ControlProcess u;
    ControlProcess v;
    std::vector<RowArray> direction;  // v - u, N arrays of P x m
    std::uint64_t ensemble_fingerprint = 0;
};

struct DifferenceResult {
    PathProcess dy;              // y^v - y^w
    PathProcess dz;              // z^v - z^w
    std::vector<double> y_second_moment;  // E|dy_i|^2 per grid node
    double sup_y = 0.0;          // max_i E|dy_i|^2
    double sup_y_stderr = 0.0;
    double int_z = 0.0;          // E sum_i |dz_i|^2 dt
    double int_z_stderr = 0.0;
};

/// Pathwise driver for the generic solver: writes f(step, p, y, z) into out.
/// y has k entries and z is k x d column-major.
using PathDriver = std::function<void(int step, Eigen::Index path, const double* y, const double* z, double* out)>;

struct BackwardSolution {
    PathProcess y;
    PathProcess z;
    RowArray pathwise_y0;
};

/// Least-squares Monte Carlo scheme for dy = f dt + z dW, y_N = terminal:
///   E_i   = regress(y_{i+1})
///   z_i   = regress((y_{i+1} - E_i) dW_i^T) / dt
///   y_i   = E_i - f(t_i, yhat, z_i) dt, yhat = E_i then picard_iters refinements.
BackwardSolution solve_backward(const PathEnsemble& ensemble, RowArray terminal, const PathDriver& driver,
                                const RegressionBasis& basis, int picard_iters);

BackwardSolution solve_backward(const PathEnsemble& ensemble, RowArray terminal, const PathDriver& driver,
                                const RegressionBasis& basis, int picard_iters,
                                const std::function<void(int step)>& begin_step);

/// Terminal values xi(W_T), P x n, optionally winsorized. Returns the number
/// of clamped entries through `clamped`.
RowArray terminal_values(const ProblemSpec& spec, const PathEnsemble& ensemble, std::optional<double> winsor_cap,
                         Eigen::Index* clamped = nullptr);

TrajectoryBundle solve_bsde(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control,
                            const RegressionBasis& basis, int picard_iters,
                            std::optional<double> winsor_cap = std::nullopt);

TrajectoryBundle solve_bsde(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control,
                            const BsdeOptions& options);

/// Linear BSDE with coefficients b_y, b_z, b_v frozen along (y^u, z^u, u)
/// and forcing b_v (v - u); Y_N = 0.
VariationalSolution solve_variational(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                      const TrajectoryBundle& base, const ControlProcess& v,
                                      const RegressionBasis& basis, int picard_iters);

DifferenceResult solve_difference(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                  const TrajectoryBundle& bundle_v, const TrajectoryBundle& bundle_w);

/// Throws std::invalid_argument unless the control matches the ensemble and dims.
void check_control_shape(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control);

/// Throws std::invalid_argument when the bundle was solved on another ensemble.
void check_same_ensemble(const PathEnsemble& ensemble, std::uint64_t fingerprint);

}  // namespace bsmp
