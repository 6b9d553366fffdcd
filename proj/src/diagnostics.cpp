#include "bsmp/diagnostics.hpp"

#include "bsmp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bsmp {

const ConvergenceSeries& ConvergenceTable::at(const std::string& name) const
{
    for (const auto& s : series)
        if (s.name == name)
            return s;
    throw std::out_of_range("no convergence series named '" + name + "'");
}

void validate_theta_grid(const std::vector<double>& theta_grid)
{
    if (theta_grid.empty())
        throw std::invalid_argument("theta grid is empty");
    for (std::size_t j = 0; j < theta_grid.size(); ++j) {
        if (!(theta_grid[j] > 0.0 && theta_grid[j] <= 1.0))
            throw std::invalid_argument("theta values must lie in (0, 1]");
        if (j > 0 && !(theta_grid[j] < theta_grid[j - 1]))
            throw std::invalid_argument("theta grid must be strictly decreasing");
    }
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2)
        return std::numeric_limits<double>::quiet_NaN();
    double mx = 0.0, my = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (!(x[j] > 0.0 && y[j] > 0.0))
            return std::numeric_limits<double>::quiet_NaN();
        mx += std::log(x[j]);
        my += std::log(y[j]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        sxy += (std::log(x[j]) - mx) * (std::log(y[j]) - my);
        sxx += (std::log(x[j]) - mx) * (std::log(x[j]) - mx);
    }
    return sxy / sxx;
}

bool nonincreasing(const std::vector<double>& values, const std::vector<double>& stderrs, double tolerance_se)
{
    for (std::size_t j = 1; j < values.size(); ++j) {
        const double slack = tolerance_se * std::max(stderrs[j - 1], stderrs[j]);
        if (values[j] > values[j - 1] + slack)
            return false;
    }
    return true;
}

namespace {

ConvergenceSeries finish_series(std::string name, const std::vector<double>& theta, std::vector<double> values,
                                std::vector<double> stderrs)
{
    ConvergenceSeries s;
    s.name = std::move(name);
    s.values = std::move(values);
    s.stderrs = std::move(stderrs);
    s.all_zero = std::all_of(s.values.begin(), s.values.end(), [](double x) { return x == 0.0; });
    s.slope = loglog_slope(theta, s.values);
    s.monotone = nonincreasing(s.values, s.stderrs);
    return s;
}

Eigen::ArrayXd squared_rows(const RowArray& a)
{
    return a.rowwise().squaredNorm().array();
}

}  // namespace

ConvergenceTable lemma4_table(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& u,
                              const ControlProcess& v, const std::vector<double>& theta_grid,
                              const BsdeOptions& options)
{
    validate_theta_grid(theta_grid);
    const auto base = solve_bsde(spec, ensemble, u, options);
    std::vector<double> sup_y, sup_y_se, int_z, int_z_se;
    for (double theta : theta_grid) {
        const auto bundle = solve_bsde(spec, ensemble, perturb(u, v, theta, spec.control_set), options);
        const auto diff = solve_difference(spec, ensemble, bundle, base);
        sup_y.push_back(diff.sup_y);
        sup_y_se.push_back(diff.sup_y_stderr);
        int_z.push_back(diff.int_z);
        int_z_se.push_back(diff.int_z_stderr);
    }
    ConvergenceTable table;
    table.theta_grid = theta_grid;
    table.series.push_back(finish_series("sup_y", theta_grid, sup_y, sup_y_se));
    table.series.push_back(finish_series("int_z", theta_grid, int_z, int_z_se));
    return table;
}

ConvergenceTable lemma5_table(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& u,
                              const ControlProcess& v, const std::vector<double>& theta_grid,
                              const BsdeOptions& options)
{
    validate_theta_grid(theta_grid);
    const auto base = solve_bsde(spec, ensemble, u, options);
    const auto var = solve_variational(spec, ensemble, base, v, options.basis, options.picard_iters);
    const int N = ensemble.grid().steps();
    const double dt = ensemble.grid().dt();
    const Eigen::Index P = ensemble.paths();

    std::vector<double> phi0, phi0_se, sup_phi, sup_phi_se, int_psi, int_psi_se;
    for (double theta : theta_grid) {
        const auto bundle = solve_bsde(spec, ensemble, perturb(u, v, theta, spec.control_set), options);
        double best = -1.0, best_se = 0.0;
        Eigen::ArrayXd psi = Eigen::ArrayXd::Zero(P);
        for (int i = 0; i <= N; ++i) {
            const auto si = static_cast<std::size_t>(i);
            const RowArray phi = var.Y[si] - (bundle.y[si] - base.y[si]) / theta;
            const auto est = estimate(squared_rows(phi));
            if (i == 0) {
                phi0.push_back(est.value);
                phi0_se.push_back(est.se);
            }
            if (est.value > best) {
                best = est.value;
                best_se = est.se;
            }
            if (i < N)
                psi += squared_rows(var.Z[si] - (bundle.z[si] - base.z[si]) / theta) * dt;
        }
        sup_phi.push_back(best);
        sup_phi_se.push_back(best_se);
        const auto est = estimate(psi);
        int_psi.push_back(est.value);
        int_psi_se.push_back(est.se);
    }
    ConvergenceTable table;
    table.theta_grid = theta_grid;
    table.series.push_back(finish_series("phi_0", theta_grid, phi0, phi0_se));
    table.series.push_back(finish_series("sup_phi", theta_grid, sup_phi, sup_phi_se));
    table.series.push_back(finish_series("int_psi", theta_grid, int_psi, int_psi_se));
    return table;
}

Eigen::ArrayXd lemma6_samples(const ProblemSpec& spec, const TrajectoryBundle& bundle_u,
                              const VariationalSolution& variational)
{
    const int n = spec.dims.n;
    const int d = spec.dims.d;
    const auto& grid = bundle_u.grid;
    const int N = grid.steps();
    const double dt = grid.dt();
    const auto& u = bundle_u.control;
    const Eigen::Index P = u.paths();

    const Vector y0 = bundle_u.y0();
    const Vector gy = spec.initial_cost_grad(y0);
    const Vector Y0 = variational.Y.front().row(0).transpose();
    const Eigen::RowVectorXd centre = variational.pathwise_Y0.colwise().mean();

    Eigen::ArrayXd out(P);
    for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t p = begin; p < end; ++p) {
            double total = gy.dot(Y0 + (variational.pathwise_Y0.row(p) - centre).transpose());
            for (int i = 0; i < N; ++i) {
                const auto si = static_cast<std::size_t>(i);
                const auto z = path_matrix(bundle_u.z[si], p, n, d);
                const auto Z = path_matrix(variational.Z[si], p, n, d);
                const auto ui = path_vector(u.values[si], p);
                const auto delta = path_vector(variational.direction[si], p);
                const auto term = [&](int node) {
                    const auto sn = static_cast<std::size_t>(node);
                    const auto g = spec.running_cost_grad(grid[node], path_vector(bundle_u.y[sn], p), z, ui);
                    return g.h_y.dot(path_vector(variational.Y[sn], p)) + (g.h_z.array() * Z.array()).sum() +
                           g.h_v.dot(delta);
                };
                total += 0.5 * (term(i) + term(i + 1)) * dt;
            }
            out(p) = total;
        }
    });
    return out;
}

Estimate lemma6_check(const ProblemSpec& spec, const PathEnsemble& ensemble, const TrajectoryBundle& bundle_u,
                      const VariationalSolution& variational)
{
    check_same_ensemble(ensemble, bundle_u.ensemble_fingerprint);
    check_same_ensemble(ensemble, variational.ensemble_fingerprint);
    return estimate(lemma6_samples(spec, bundle_u, variational));
}

DualityReport duality_check(const ProblemSpec& spec, const PathEnsemble& ensemble, const TrajectoryBundle& bundle_u,
                            const AdjointPath& adjoint, const VariationalSolution& variational)
{
    check_same_ensemble(ensemble, bundle_u.ensemble_fingerprint);
    check_same_ensemble(ensemble, adjoint.ensemble_fingerprint);
    check_same_ensemble(ensemble, variational.ensemble_fingerprint);
    const int n = spec.dims.n;
    const int d = spec.dims.d;
    const auto& grid = ensemble.grid();
    const int N = grid.steps();
    const Eigen::Index P = ensemble.paths();

    Eigen::ArrayXd s_terminal(P);
    for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t p = begin; p < end; ++p) {
            double total = 0.0;
            for (int i = 0; i < N; ++i) {
                const auto si = static_cast<std::size_t>(i);
                const auto pi = path_vector(adjoint.p[si], p);
                const auto H = hamiltonian(spec, grid[i], path_vector(bundle_u.y[si], p),
                                           path_matrix(bundle_u.z[si], p, n, d),
                                           path_vector(bundle_u.control.values[si], p), pi);
                const Vector integrand = H.H_z.transpose() * path_vector(variational.Y[si], p) -
                                         path_matrix(variational.Z[si], p, n, d).transpose() * pi;
                total += integrand.dot(path_vector(ensemble.increment(i), p));
            }
            s_terminal(p) = total;
        }
    });

    const Eigen::ArrayXd l6 = lemma6_samples(spec, bundle_u, variational);
    const Eigen::ArrayXd h = directional_derivative_samples(spec, bundle_u, adjoint, variational.v);
    const Eigen::ArrayXd diff = l6 - h;

    DualityReport out;
    out.s_terminal = estimate(s_terminal);
    out.lemma6 = estimate(l6).value;
    out.hamiltonian = estimate(h).value;
    const auto diff_est = estimate(diff);
    out.gap = std::abs(diff_est.value);
    out.gap_stderr = diff_est.se;
    out.residual = estimate(diff - s_terminal).value;
    // Zero-variance cases are judged against a roundoff allowance.
    const double floor = 1e-12 * (1.0 + std::abs(out.lemma6));
    out.martingale_pass = std::abs(out.s_terminal.value) <= 3.0 * out.s_terminal.se + floor;
    out.gap_pass = out.gap <= 3.0 * out.gap_stderr + std::abs(out.residual) + floor;
    return out;
}

NormEstimates empirical_norms(const PathProcess& process, const TimeGrid& grid, const std::vector<double>& p_list)
{
    if (process.empty() || process.front().rows() == 0)
        throw std::invalid_argument("empirical_norms: empty process");
    for (double p : p_list)
        if (!(p > 0.0))
            throw std::invalid_argument("empirical_norms: exponents must be > 0");
    const Eigen::Index P = process.front().rows();
    const auto nodes = static_cast<int>(process.size());
    // Processes defined on intervals (N arrays) use every array; node
    // processes (N + 1 arrays) drop the terminal node from the Riemann sum.
    const int riemann_nodes = std::min(nodes, grid.steps());

    Eigen::ArrayXXd absval(P, nodes);
    for (int i = 0; i < nodes; ++i)
        absval.col(i) = process[static_cast<std::size_t>(i)].rowwise().norm().array();

    NormEstimates out;
    out.p_list = p_list;
    const Eigen::ArrayXd sup = absval.rowwise().maxCoeff();
    const Eigen::ArrayXd quad = absval.leftCols(riemann_nodes).square().rowwise().sum() * grid.dt();
    for (double p : p_list) {
        const double outer = std::min(1.0, 1.0 / p);
        out.sp_norm.push_back(std::pow(sup.pow(p).mean(), outer));
        out.mp_norm.push_back(std::pow(quad.pow(p / 2.0).mean(), outer));
    }

    double proxy = 0.0;
    for (int i = 0; i < nodes; ++i)
        proxy = std::max(proxy, absval.col(i).mean());
    for (double level : {1.0, 2.0, 4.0, 8.0}) {
        double total = 0.0;
        for (Eigen::Index p = 0; p < P; ++p) {
            int tau = nodes - 1;
            for (int i = 0; i < nodes; ++i)
                if (absval(p, i) >= level) {
                    tau = i;
                    break;
                }
            total += absval(p, tau);
        }
        proxy = std::max(proxy, total / static_cast<double>(P));
    }
    out.classD_proxy = proxy;

    out.finite = std::isfinite(out.classD_proxy);
    for (std::size_t j = 0; j < p_list.size(); ++j)
        out.finite = out.finite && std::isfinite(out.sp_norm[j]) && std::isfinite(out.mp_norm[j]);
    return out;
}

PathProcess path_prefix(const PathProcess& process, Eigen::Index paths)
{
    PathProcess out;
    out.reserve(process.size());
    for (const auto& a : process) {
        if (paths > a.rows())
            throw std::invalid_argument("path_prefix: not enough paths");
        out.push_back(a.topRows(paths));
    }
    return out;
}

GradientIdentity gradient_identity(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& u,
                                   const ControlProcess& v, const std::vector<double>& theta_grid,
                                   const BsdeOptions& options)
{
    validate_theta_grid(theta_grid);
    const auto base = solve_bsde(spec, ensemble, u, options);
    const auto adjoint = solve_adjoint(spec, ensemble, base);
    const double J0 = evaluate_cost_direct(spec, ensemble, base).J;
    const double derivative = directional_derivative(spec, ensemble, base, adjoint, v).value;

    GradientIdentity out;
    for (double theta : theta_grid) {
        const auto bundle = solve_bsde(spec, ensemble, perturb(u, v, theta, spec.control_set), options);
        const double quotient = (evaluate_cost_direct(spec, ensemble, bundle).J - J0) / theta;
        out.rows.push_back({theta, quotient, derivative, std::abs(quotient - derivative)});
    }
    out.decreasing = true;
    for (std::size_t j = 1; j < out.rows.size(); ++j)
        if (out.rows[j].gap > out.rows[j - 1].gap)
            out.decreasing = false;
    return out;
}

}  // namespace bsmp
