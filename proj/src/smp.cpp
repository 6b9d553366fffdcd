#include "bsmp/smp.hpp"

#include "bsmp/parallel.hpp"

#include <cmath>
#include <sstream>

namespace bsmp {
namespace {

// Per-path contribution to J from the initial cost. y_0 is deterministic,
// so g(y_0) is linearized around it using the pathwise sample of y_0; the
// correction has zero mean and carries the Monte Carlo spread.
Eigen::ArrayXd initial_cost_samples(const ProblemSpec& spec, const Vector& y0, const RowArray& pathwise)
{
    const double g0 = spec.initial_cost(y0);
    const Vector gy = spec.initial_cost_grad(y0);
    const Eigen::RowVectorXd centre = pathwise.colwise().mean();
    Eigen::ArrayXd out(pathwise.rows());
    for (Eigen::Index p = 0; p < pathwise.rows(); ++p)
        out(p) = g0 + gy.dot((pathwise.row(p) - centre).transpose());
    return out;
}

}  // namespace

CostBreakdown evaluate_cost_direct(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                   const TrajectoryBundle& bundle)
{
    check_same_ensemble(ensemble, bundle.ensemble_fingerprint);
    const int n = spec.dims.n;
    const int d = spec.dims.d;
    const int N = ensemble.grid().steps();
    const Eigen::Index P = ensemble.paths();
    const auto& grid = ensemble.grid();
    const double dt = grid.dt();

    Eigen::ArrayXd running(P);
    for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t p = begin; p < end; ++p) {
            double total = 0.0;
            for (int i = 0; i < N; ++i) {
                const auto si = static_cast<std::size_t>(i);
                const auto z = path_matrix(bundle.z[si], p, n, d);
                const auto v = path_vector(bundle.control.values[si], p);
                const double left = spec.running_cost(grid[i], path_vector(bundle.y[si], p), z, v);
                const double right = spec.running_cost(grid[i + 1], path_vector(bundle.y[si + 1], p), z, v);
                if (!std::isfinite(left) || !std::isfinite(right)) {
                    std::ostringstream os;
                    os << "non-finite running cost on path " << p << " at step " << i;
                    throw NumericalError(os.str());
                }
                total += 0.5 * (left + right) * dt;
            }
            running(p) = total;
        }
    });

    const Vector y0 = bundle.y0();
    CostBreakdown out;
    out.method = CostMethod::direct;
    out.initial_term = spec.initial_cost(y0);
    out.running_term = running.sum() / static_cast<double>(P);
    out.J = out.initial_term + out.running_term;
    out.samples = initial_cost_samples(spec, y0, bundle.pathwise_y0) + running;
    out.standard_error = estimate(out.samples).se;
    if (!std::isfinite(out.J))
        throw NumericalError("non-finite cost estimate");
    return out;
}

CostBreakdown evaluate_cost_augmented(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                      const TrajectoryBundle& bundle, double eta)
{
    check_same_ensemble(ensemble, bundle.ensemble_fingerprint);
    if (!std::isfinite(eta))
        throw std::invalid_argument("eta must be finite");
    const int n = spec.dims.n;
    const int d = spec.dims.d;
    const int k = n + 1;
    const Eigen::Index P = ensemble.paths();
    const auto& grid = ensemble.grid();
    const auto& control = bundle.control;

    RowArray terminal(P, k);
    terminal.leftCols(n) = terminal_values(spec, ensemble, bundle.options.winsor_cap);
    terminal.col(n).setConstant(eta);

    // Stacked driver (b, h); the z block of the state is rows 0..n-1 of the (n+1) x d array.
    const PathDriver driver = [&](int i, Eigen::Index p, const double* y, const double* z, double* out) {
        const Eigen::Map<const Vector> yv(y, n);
        const Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> zy(z, n, d, Eigen::OuterStride<>(k));
        const Matrix zm = zy;
        const auto v = path_vector(control.values[static_cast<std::size_t>(i)], p);
        Eigen::Map<Vector>(out, n) = spec.driver(grid[i], yv, zm, v);
        out[n] = spec.running_cost(grid[i], yv, zm, v);
    };
    const auto solution = solve_backward(ensemble, std::move(terminal), driver, bundle.options.basis,
                                         bundle.options.picard_iters);

    const Vector y0 = solution.y.front().row(0).leftCols(n).transpose();
    const double x0 = solution.y.front()(0, n);
    CostBreakdown out;
    out.method = CostMethod::augmented;
    out.initial_term = spec.initial_cost(y0);
    out.running_term = eta - x0;
    out.J = out.initial_term + out.running_term;
    const RowArray state_samples = solution.pathwise_y0.leftCols(n);
    out.samples = initial_cost_samples(spec, y0, state_samples) - solution.pathwise_y0.col(n).array() + eta;
    out.standard_error = estimate(out.samples).se;
    return out;
}

double combined_stderr(const CostBreakdown& a, const CostBreakdown& b)
{
    return std::hypot(a.standard_error, b.standard_error);
}

ControlProcess perturb(const ControlProcess& u, const ControlProcess& v, double theta, const ControlSet& set)
{
    if (u.steps() != v.steps() || u.paths() != v.paths() || u.dim() != v.dim())
        throw std::invalid_argument("perturb: controls have different shapes");
    if (!(theta >= 0.0 && theta <= 1.0))
        throw std::invalid_argument("perturb: theta must lie in [0, 1]");
    if (!u.admissible || !v.admissible)
        throw std::invalid_argument("perturb: both controls must be admissible");
    ControlProcess out;
    out.values.resize(u.values.size());
    // u + theta (v - u) is exact at theta = 0 and for v = u; theta = 1 is returned as v.
    for (std::size_t i = 0; i < u.values.size(); ++i)
        out.values[i] = theta == 1.0 ? v.values[i] : RowArray(u.values[i] + theta * (v.values[i] - u.values[i]));
    if (!check_admissible(out, set))
        throw std::logic_error("perturbed control left U; the control set is not convex");
    return out;
}

std::vector<RowArray> hamiltonian_gradient(const ProblemSpec& spec, const TrajectoryBundle& bundle,
                                           const AdjointPath& adjoint)
{
    const int n = spec.dims.n;
    const int d = spec.dims.d;
    const int m = spec.dims.m;
    const int N = bundle.grid.steps();
    const Eigen::Index P = bundle.y.front().rows();
    std::vector<RowArray> out(static_cast<std::size_t>(N), RowArray(P, m));
    for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t p = begin; p < end; ++p)
            for (int i = 0; i < N; ++i) {
                const auto si = static_cast<std::size_t>(i);
                out[si].row(p) = hamiltonian(spec, bundle.grid[i], path_vector(bundle.y[si], p),
                                             path_matrix(bundle.z[si], p, n, d),
                                             path_vector(bundle.control.values[si], p),
                                             path_vector(adjoint.p[si], p))
                                     .H_v.transpose();
            }
    });
    return out;
}

Eigen::ArrayXd directional_derivative_samples(const ProblemSpec& spec, const TrajectoryBundle& bundle,
                                              const AdjointPath& adjoint, const ControlProcess& v)
{
    const int n = spec.dims.n;
    const int d = spec.dims.d;
    const int N = bundle.grid.steps();
    const auto& grid = bundle.grid;
    const double dt = grid.dt();
    const auto& u = bundle.control;
    if (v.steps() != u.steps() || v.paths() != u.paths() || v.dim() != u.dim())
        throw std::invalid_argument("probe control has a different shape from the base control");
    const Eigen::Index P = u.paths();

    Eigen::ArrayXd out(P);
    for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t p = begin; p < end; ++p) {
            double total = 0.0;
            for (int i = 0; i < N; ++i) {
                const auto si = static_cast<std::size_t>(i);
                const Vector delta = path_vector(u.values[si], p) - path_vector(v.values[si], p);
                if (delta.isZero(0.0))
                    continue;
                const auto z = path_matrix(bundle.z[si], p, n, d);
                const auto ui = path_vector(u.values[si], p);
                const auto left = hamiltonian(spec, grid[i], path_vector(bundle.y[si], p), z, ui,
                                              path_vector(adjoint.p[si], p));
                const auto right = hamiltonian(spec, grid[i + 1], path_vector(bundle.y[si + 1], p), z, ui,
                                               path_vector(adjoint.p[si + 1], p));
                total += 0.5 * (left.H_v + right.H_v).dot(delta) * dt;
            }
            out(p) = total;
        }
    });
    return out;
}

Estimate directional_derivative(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                const TrajectoryBundle& bundle, const AdjointPath& adjoint, const ControlProcess& v)
{
    check_same_ensemble(ensemble, bundle.ensemble_fingerprint);
    check_same_ensemble(ensemble, adjoint.ensemble_fingerprint);
    return estimate(directional_derivative_samples(spec, bundle, adjoint, v));
}

double stationarity_residual(const ProblemSpec& spec, const ControlProcess& u, const std::vector<RowArray>& h_v,
                             double dt)
{
    const Eigen::Index P = u.paths();
    std::vector<double> partial(static_cast<std::size_t>(block_count(P)), 0.0);
    for_each_block(P, [&](std::ptrdiff_t b, std::ptrdiff_t begin, std::ptrdiff_t end) {
        double sum = 0.0;
        for (std::ptrdiff_t p = begin; p < end; ++p)
            for (std::size_t i = 0; i < u.values.size(); ++i) {
                const Vector ui = path_vector(u.values[i], p);
                const Vector target = spec.control_set.project(ui + path_vector(h_v[i], p));
                sum += (ui - target).squaredNorm() * dt;
            }
        partial[static_cast<std::size_t>(b)] = sum;
    });
    double total = 0.0;
    for (double s : partial)
        total += s;
    return total / static_cast<double>(P);
}

StationarityReport check_stationarity(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                      const TrajectoryBundle& bundle, const AdjointPath& adjoint,
                                      const std::vector<ControlProcess>& probes, double tolerance)
{
    check_same_ensemble(ensemble, bundle.ensemble_fingerprint);
    check_same_ensemble(ensemble, adjoint.ensemble_fingerprint);
    StationarityReport report;
    report.residual =
        stationarity_residual(spec, bundle.control, hamiltonian_gradient(spec, bundle, adjoint), ensemble.grid().dt());
    report.pass = report.residual <= tolerance;
    for (const auto& probe : probes) {
        if (!probe.admissible)
            throw std::invalid_argument("stationarity probe is not admissible");
        const auto value = directional_derivative(spec, ensemble, bundle, adjoint, probe);
        report.vi_values.push_back(value);
        // A roundoff allowance keeps deterministic (zero-variance) cases meaningful.
        if (value.value < -(3.0 * value.se + 1e-12))
            report.pass = false;
    }
    return report;
}

std::string to_string(OptimizerStatus status)
{
    switch (status) {
    case OptimizerStatus::converged:
        return "converged";
    case OptimizerStatus::max_iters:
        return "max_iters";
    case OptimizerStatus::step_size_too_large:
        return "step_size_too_large";
    }
    return "unknown";
}

ControlProcess transfer_control(const ProblemSpec& spec, const PathEnsemble& from, const ControlProcess& control,
                                const PathEnsemble& to, const RegressionBasis& basis)
{
    if (!(from.grid() == to.grid()))
        throw std::invalid_argument("transfer_control needs matching time grids");
    check_control_shape(spec, from, control);
    ControlProcess out;
    out.values.resize(control.values.size());
    for (int i = 0; i < control.steps(); ++i) {
        const auto si = static_cast<std::size_t>(i);
        const auto fit = regress(from, i, control.values[si], basis);
        RowArray values = fit(to.brownian(i));
        for (Eigen::Index p = 0; p < values.rows(); ++p)
            values.row(p) = spec.control_set.project(path_vector(values, p)).transpose();
        out.values[si] = std::move(values);
    }
    check_admissible(out, spec.control_set);
    return out;
}

OptimizeResult optimize(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& u0,
                        const OptimizerOptions& options)
{
    if (!(options.step_size >= 0.0))
        throw std::invalid_argument("step_size must be >= 0");
    if (options.max_iters < 0)
        throw std::invalid_argument("max_iters must be >= 0");
    const double dt = ensemble.grid().dt();

    OptimizeResult result;
    ControlProcess u = u0;
    int increases = 0;
    for (int iter = 0;; ++iter) {
        const auto bundle = solve_bsde(spec, ensemble, u, options.bsde);
        const auto adjoint = solve_adjoint(spec, ensemble, bundle);
        const auto cost = evaluate_cost_direct(spec, ensemble, bundle);
        const auto h_v = hamiltonian_gradient(spec, bundle, adjoint);
        const double residual = stationarity_residual(spec, u, h_v, dt);
        result.history.push_back({iter, cost.J, cost.standard_error, residual, options.step_size});
        result.final_cost = cost;
        result.final_residual = residual;

        if (iter > 0 && cost.J > result.history[static_cast<std::size_t>(iter) - 1].J)
            ++increases;
        else
            increases = 0;

        if (residual <= options.tolerance) {
            result.status = OptimizerStatus::converged;
            result.message = "stationarity residual below tolerance";
            break;
        }
        if (increases >= 5) {
            result.status = OptimizerStatus::step_size_too_large;
            result.message = "step size too large: J increased over 5 consecutive iterations";
            break;
        }
        if (iter >= options.max_iters) {
            result.status = OptimizerStatus::max_iters;
            result.message = "iteration limit reached";
            break;
        }
        for (std::size_t i = 0; i < u.values.size(); ++i)
            for (Eigen::Index p = 0; p < u.paths(); ++p) {
                const Vector step = path_vector(u.values[i], p) + options.step_size * path_vector(h_v[i], p);
                u.values[i].row(p) = spec.control_set.project(step).transpose();
            }
        check_admissible(u, spec.control_set);
    }
    result.control = u;

    if (options.validation_seed) {
        const auto fresh = sample_ensemble(ensemble.grid(), ensemble.paths(), ensemble.brownian_dim(),
                                           *options.validation_seed, ensemble.antithetic());
        const auto moved = transfer_control(spec, ensemble, u, fresh, options.bsde.basis);
        result.validation_cost = evaluate_cost_direct(spec, fresh, solve_bsde(spec, fresh, moved, options.bsde));
    }
    return result;
}

}  // namespace bsmp
