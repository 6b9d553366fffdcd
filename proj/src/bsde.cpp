#include "bsmp/bsde.hpp"

#include "bsmp/parallel.hpp"
#include "bsmp/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace bsmp {

ControlProcess ControlProcess::constant(int steps, Eigen::Index paths, const Vector& value, const ControlSet& set)
{
    ControlProcess c;
    const RowArray row = value.transpose();
    c.values.assign(static_cast<std::size_t>(steps), row.replicate(paths, 1));
    check_admissible(c, set);
    return c;
}

bool check_admissible(ControlProcess& control, const ControlSet& set)
{
    control.admissible = true;
    for (const auto& step : control.values) {
        for (Eigen::Index p = 0; p < step.rows() && control.admissible; ++p)
            if (!set.contains(path_vector(step, p)))
                control.admissible = false;
    }
    return control.admissible;
}

void check_control_shape(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control)
{
    if (control.steps() != ensemble.grid().steps() || control.paths() != ensemble.paths() ||
        control.dim() != spec.dims.m)
        throw std::invalid_argument("control shape does not match the ensemble (steps x paths x m)");
}

void check_same_ensemble(const PathEnsemble& ensemble, std::uint64_t fingerprint)
{
    if (ensemble.fingerprint() != fingerprint)
        throw std::invalid_argument("trajectories were solved on a different path ensemble");
}

BackwardSolution solve_backward(const PathEnsemble& ensemble, RowArray terminal, const PathDriver& driver,
                                const RegressionBasis& basis, int picard_iters)
{
    return solve_backward(ensemble, std::move(terminal), driver, basis, picard_iters, {});
}

BackwardSolution solve_backward(const PathEnsemble& ensemble, RowArray terminal, const PathDriver& driver,
                                const RegressionBasis& basis, int picard_iters,
                                const std::function<void(int step)>& begin_step)
{
    if (picard_iters < 0)
        throw std::invalid_argument("picard_iters must be >= 0");
    const int N = ensemble.grid().steps();
    const Eigen::Index P = ensemble.paths();
    const auto k = static_cast<int>(terminal.cols());
    const int d = ensemble.brownian_dim();
    const double dt = ensemble.grid().dt();
    if (terminal.rows() != P)
        throw std::invalid_argument("terminal values must have one row per path");
    if (!terminal.allFinite())
        throw NumericalError("non-finite terminal value at step " + std::to_string(N));

    BackwardSolution out;
    out.y.resize(static_cast<std::size_t>(N) + 1);
    out.z.resize(static_cast<std::size_t>(N));
    out.pathwise_y0 = terminal;
    out.y.back() = std::move(terminal);

    RowArray outer(P, k * d);
    RowArray drift(P, k);
    for (int i = N - 1; i >= 0; --i) {
        if (begin_step)
            begin_step(i);
        const RowArray& next = out.y[static_cast<std::size_t>(i) + 1];
        const RowArray& dw = ensemble.increment(i);
        const RegressionFit mean_fit = regress(ensemble, i, next, basis);
        const RowArray& expected = mean_fit.fitted;

        for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
            for (std::ptrdiff_t p = begin; p < end; ++p)
                for (int j = 0; j < d; ++j)
                    for (int a = 0; a < k; ++a)
                        outer(p, a + j * k) = (next(p, a) - expected(p, a)) * dw(p, j);
        });
        RowArray z = regress(ensemble, i, outer, basis).fitted / dt;

        RowArray y = expected;
        for (int pass = 0; pass <= picard_iters; ++pass) {
            for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
                for (std::ptrdiff_t p = begin; p < end; ++p)
                    driver(i, p, y.row(p).data(), z.row(p).data(), drift.row(p).data());
            });
            y = expected - drift * dt;
        }
        out.pathwise_y0 -= drift * dt;

        if (!y.allFinite() || !z.allFinite()) {
            std::ostringstream os;
            os << "non-finite " << (y.allFinite() ? "z" : "y") << " at step " << i;
            throw NumericalError(os.str());
        }
        out.y[static_cast<std::size_t>(i)] = std::move(y);
        out.z[static_cast<std::size_t>(i)] = std::move(z);
    }
    return out;
}

RowArray terminal_values(const ProblemSpec& spec, const PathEnsemble& ensemble, std::optional<double> winsor_cap,
                         Eigen::Index* clamped)
{
    const int N = ensemble.grid().steps();
    const Eigen::Index P = ensemble.paths();
    const int n = spec.dims.n;
    const RowArray& w = ensemble.brownian(N);
    RowArray xi(P, n);
    for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t p = begin; p < end; ++p) {
            const Vector value = spec.terminal(path_vector(w, p));
            if (value.size() != n)
                throw std::invalid_argument("terminal function returned the wrong dimension");
            xi.row(p) = value.transpose();
        }
    });
    Eigen::Index count = 0;
    if (winsor_cap) {
        const double cap = *winsor_cap;
        if (!(cap > 0.0))
            throw std::invalid_argument("winsor_cap must be > 0");
        count = (xi.array().abs() > cap).count();
        xi = xi.array().max(-cap).min(cap).matrix();
    }
    if (clamped)
        *clamped = count;
    return xi;
}

TrajectoryBundle solve_bsde(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control,
                            const RegressionBasis& basis, int picard_iters, std::optional<double> winsor_cap)
{
    return solve_bsde(spec, ensemble, control, BsdeOptions{basis, picard_iters, winsor_cap});
}

TrajectoryBundle solve_bsde(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control,
                            const BsdeOptions& options)
{
    const auto& dims = spec.dims;
    if (ensemble.brownian_dim() != dims.d)
        throw std::invalid_argument("ensemble Brownian dimension does not match the model");
    check_control_shape(spec, ensemble, control);
    if (!control.admissible)
        throw std::invalid_argument("control is not admissible (values outside U)");

    TrajectoryBundle bundle;
    bundle.dims = dims;
    bundle.grid = ensemble.grid();
    bundle.control = control;
    bundle.options = options;
    bundle.ensemble_fingerprint = ensemble.fingerprint();

    RowArray xi = terminal_values(spec, ensemble, options.winsor_cap, &bundle.winsorized);
    const auto& grid = ensemble.grid();
    const PathDriver driver = [&](int i, Eigen::Index p, const double* y, const double* z, double* out) {
        const Eigen::Map<const Vector> yv(y, dims.n);
        const Eigen::Map<const Matrix> zm(z, dims.n, dims.d);
        const Vector b = spec.driver(grid[i], yv, zm, path_vector(control.values[static_cast<std::size_t>(i)], p));
        Eigen::Map<Vector>(out, dims.n) = b;
    };
    auto solution = solve_backward(ensemble, std::move(xi), driver, options.basis, options.picard_iters);
    bundle.y = std::move(solution.y);
    bundle.z = std::move(solution.z);
    bundle.pathwise_y0 = std::move(solution.pathwise_y0);
    return bundle;
}

VariationalSolution solve_variational(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                      const TrajectoryBundle& base, const ControlProcess& v,
                                      const RegressionBasis& basis, int picard_iters)
{
    check_same_ensemble(ensemble, base.ensemble_fingerprint);
    check_control_shape(spec, ensemble, v);
    if (!v.admissible)
        throw std::invalid_argument("direction control is not admissible (values outside U)");

    const auto& dims = spec.dims;
    const int n = dims.n;
    const int d = dims.d;
    const auto& grid = ensemble.grid();
    const Eigen::Index P = ensemble.paths();

    VariationalSolution out;
    out.u = base.control;
    out.v = v;
    out.ensemble_fingerprint = ensemble.fingerprint();
    out.direction.resize(v.values.size());
    for (std::size_t i = 0; i < v.values.size(); ++i)
        out.direction[i] = v.values[i] - base.control.values[i];

    // Per-step coefficient cache: b_y (n x n), b_z (d blocks of n x n) and the
    // forcing b_v (v - u), laid out per path.
    RowArray b_y(P, n * n);
    RowArray b_z(P, n * n * d);
    RowArray forcing(P, n);
    const auto begin_step = [&](int i) {
        const auto si = static_cast<std::size_t>(i);
        for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
            for (std::ptrdiff_t p = begin; p < end; ++p) {
                const auto jac = spec.driver_grad(grid[i], path_vector(base.y[si], p),
                                                  path_matrix(base.z[si], p, n, d),
                                                  path_vector(base.control.values[si], p));
                Eigen::Map<Matrix>(b_y.row(p).data(), n, n) = jac.b_y;
                for (int j = 0; j < d; ++j)
                    Eigen::Map<Matrix>(b_z.row(p).data() + j * n * n, n, n) = jac.b_z[static_cast<std::size_t>(j)];
                forcing.row(p) = (jac.b_v * path_vector(out.direction[si], p)).transpose();
            }
        });
    };
    const PathDriver driver = [&](int, Eigen::Index p, const double* y, const double* z, double* result) {
        Eigen::Map<Vector> r(result, n);
        r = Eigen::Map<const Matrix>(b_y.row(p).data(), n, n) * Eigen::Map<const Vector>(y, n);
        for (int j = 0; j < d; ++j)
            r += Eigen::Map<const Matrix>(b_z.row(p).data() + j * n * n, n, n) * Eigen::Map<const Vector>(z + j * n, n);
        r += forcing.row(p).transpose();
    };
    auto solution =
        solve_backward(ensemble, RowArray::Zero(P, n), driver, basis, picard_iters, begin_step);
    out.Y = std::move(solution.y);
    out.Z = std::move(solution.z);
    out.pathwise_Y0 = std::move(solution.pathwise_y0);
    return out;
}

DifferenceResult solve_difference(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                  const TrajectoryBundle& bundle_v, const TrajectoryBundle& bundle_w)
{
    check_same_ensemble(ensemble, bundle_v.ensemble_fingerprint);
    check_same_ensemble(ensemble, bundle_w.ensemble_fingerprint);
    if (!(bundle_v.dims == spec.dims) || !(bundle_w.dims == spec.dims))
        throw std::invalid_argument("bundle dimensions do not match the model");

    const int N = ensemble.grid().steps();
    const Eigen::Index P = ensemble.paths();
    const double dt = ensemble.grid().dt();
    const double scale = static_cast<double>(P);

    DifferenceResult out;
    out.dy.resize(static_cast<std::size_t>(N) + 1);
    out.dz.resize(static_cast<std::size_t>(N));
    out.y_second_moment.resize(static_cast<std::size_t>(N) + 1);
    Eigen::ArrayXd z_path = Eigen::ArrayXd::Zero(P);
    int argmax = 0;
    for (int i = 0; i <= N; ++i) {
        const auto si = static_cast<std::size_t>(i);
        out.dy[si] = bundle_v.y[si] - bundle_w.y[si];
        out.y_second_moment[si] = out.dy[si].rowwise().squaredNorm().sum() / scale;
        if (out.y_second_moment[si] > out.y_second_moment[static_cast<std::size_t>(argmax)])
            argmax = i;
        if (i < N) {
            out.dz[si] = bundle_v.z[si] - bundle_w.z[si];
            z_path += out.dz[si].rowwise().squaredNorm().array() * dt;
        }
    }
    out.sup_y = out.y_second_moment[static_cast<std::size_t>(argmax)];
    out.sup_y_stderr = estimate(out.dy[static_cast<std::size_t>(argmax)].rowwise().squaredNorm().array()).se;
    out.int_z = z_path.mean();
    out.int_z_stderr = estimate(z_path).se;
    return out;
}

}  // namespace bsmp
