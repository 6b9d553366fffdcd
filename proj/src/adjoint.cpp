#include "bsmp/adjoint.hpp"

#include "bsmp/parallel.hpp"
#include "bsmp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bsmp {

HamiltonianEval hamiltonian(const ProblemSpec& spec, double t, const VecRef& y, const MatRef& z, const VecRef& v,
                            const VecRef& p)
{
    const auto jac = spec.driver_grad(t, y, z, v);
    const auto grad = spec.running_cost_grad(t, y, z, v);
    HamiltonianEval out;
    out.value = p.dot(spec.driver(t, y, z, v)) - spec.running_cost(t, y, z, v);
    out.H_y = jac.b_y.transpose() * p - grad.h_y;
    out.H_z.resize(spec.dims.n, spec.dims.d);
    for (int j = 0; j < spec.dims.d; ++j)
        out.H_z.col(j) = jac.b_z[static_cast<std::size_t>(j)].transpose() * p - grad.h_z.col(j);
    out.H_v = jac.b_v.transpose() * p - grad.h_v;
    return out;
}

AdjointPath solve_adjoint(const ProblemSpec& spec, const PathEnsemble& ensemble, const TrajectoryBundle& bundle)
{
    check_same_ensemble(ensemble, bundle.ensemble_fingerprint);
    const int n = spec.dims.n;
    const int d = spec.dims.d;
    const int N = ensemble.grid().steps();
    const Eigen::Index P = ensemble.paths();
    const auto& grid = ensemble.grid();
    const double dt = grid.dt();

    AdjointPath out;
    out.ensemble_fingerprint = ensemble.fingerprint();
    out.p.assign(static_cast<std::size_t>(N) + 1, RowArray(P, n));
    Eigen::ArrayXd sup_sq(P);
    std::vector<int> bad_step(static_cast<std::size_t>(block_count(P)), -1);

    for_each_block(P, [&](std::ptrdiff_t block, std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t q = begin; q < end; ++q) {
            Vector p = spec.initial_cost_grad(path_vector(bundle.y[0], q));
            out.p[0].row(q) = p.transpose();
            double sup = p.squaredNorm();
            for (int i = 0; i < N; ++i) {
                const auto si = static_cast<std::size_t>(i);
                const auto H = hamiltonian(spec, grid[i], path_vector(bundle.y[si], q),
                                           path_matrix(bundle.z[si], q, n, d),
                                           path_vector(bundle.control.values[si], q), p);
                p -= H.H_y * dt + H.H_z * path_vector(ensemble.increment(i), q);
                if (!p.allFinite()) {
                    auto& slot = bad_step[static_cast<std::size_t>(block)];
                    if (slot < 0 || i + 1 < slot)
                        slot = i + 1;
                    break;
                }
                out.p[si + 1].row(q) = p.transpose();
                sup = std::max(sup, p.squaredNorm());
            }
            sup_sq(q) = sup;
        }
    });
    for (int step : bad_step)
        if (step >= 0)
            throw NumericalError("non-finite adjoint at step " + std::to_string(step));

    const auto est = estimate(sup_sq);
    out.sup_moment = est.value;
    out.sup_moment_stderr = est.se;
    return out;
}

double hamiltonian_fd_check(const ProblemSpec& spec, const ProbePoint& point, const VecRef& p, double step)
{
    if (!(step > 0.0))
        throw std::invalid_argument("finite-difference step must be > 0");
    const auto analytic = hamiltonian(spec, point.t, point.y, point.z, point.v, p);
    double worst = 0.0;
    const auto compare = [&](double exact, double fd, const char* name) {
        if (!std::isfinite(fd))
            throw NumericalError(std::string("non-finite finite difference of H in ") + name);
        worst = std::max(worst, std::abs(exact - fd) / (1.0 + std::abs(exact)));
    };
    const auto value = [&](const Vector& y, const Matrix& z, const Vector& v) {
        return hamiltonian(spec, point.t, y, z, v, p).value;
    };
    for (Eigen::Index a = 0; a < point.y.size(); ++a) {
        Vector up = point.y, down = point.y;
        up(a) += step;
        down(a) -= step;
        compare(analytic.H_y(a), (value(up, point.z, point.v) - value(down, point.z, point.v)) / (2 * step), "H_y");
    }
    for (Eigen::Index a = 0; a < point.z.size(); ++a) {
        Matrix up = point.z, down = point.z;
        up(a) += step;
        down(a) -= step;
        compare(analytic.H_z(a), (value(point.y, up, point.v) - value(point.y, down, point.v)) / (2 * step), "H_z");
    }
    for (Eigen::Index a = 0; a < point.v.size(); ++a) {
        Vector up = point.v, down = point.v;
        up(a) += step;
        down(a) -= step;
        compare(analytic.H_v(a), (value(point.y, point.z, up) - value(point.y, point.z, down)) / (2 * step), "H_v");
    }
    return worst;
}

}  // namespace bsmp
