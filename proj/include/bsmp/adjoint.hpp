#pragma once

#include "bsmp/bsde.hpp"
#include "bsmp/model.hpp"

namespace bsmp {

/// H(t, y, z, v, p) = p . b(t, y, z, v) - h(t, y, z, v) and its partials.
struct HamiltonianEval {
    double value = 0.0;
    Vector H_y;   // b_y^T p - h_y
    Matrix H_z;   // column j: b_z[j]^T p - h_z column j
    Vector H_v;   // b_v^T p - h_v
};

HamiltonianEval hamiltonian(const ProblemSpec& spec, double t, const VecRef& y, const MatRef& z, const VecRef& v,
                            const VecRef& p);

/// Adjoint process p on the grid, simulated forward on the state's ensemble.
struct AdjointPath {
    PathProcess p;               // N + 1 arrays, P x n
    double sup_moment = 0.0;     // E[max_i |p_i|^2]
    double sup_moment_stderr = 0.0;
    std::uint64_t ensemble_fingerprint = 0;
};

/// Forward Euler for -dp = H_y dt + H_z dW with p_0 = g_y(y_0).
AdjointPath solve_adjoint(const ProblemSpec& spec, const PathEnsemble& ensemble, const TrajectoryBundle& bundle);

/// Max over entries of |analytic - central FD| / (1 + |analytic|) for the
/// partials H_y, H_z, H_v at one point.
double hamiltonian_fd_check(const ProblemSpec& spec, const ProbePoint& point, const VecRef& p, double step);

}  // namespace bsmp
