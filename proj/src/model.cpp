#include "bsmp/model.hpp"

#include "bsmp/philox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bsmp {

void AssumptionProfile::validate() const
{
    if (!(growth_alpha > 0.0 && growth_alpha < 1.0))
        throw std::invalid_argument("growth_alpha must lie in (0, 1)");
    if (!(lipschitz_bound >= 0.0))
        throw std::invalid_argument("lipschitz_bound must be >= 0");
    if (!(probe_radius > 0.0))
        throw std::invalid_argument("probe_radius must be > 0");
}

void ProblemSpec::validate() const
{
    dims.validate();
    assumptions.validate();
    if (!driver || !driver_grad || !running_cost || !running_cost_grad || !initial_cost || !initial_cost_grad ||
        !terminal)
        throw std::invalid_argument("problem '" + name + "' is missing a model function");
    if (!(horizon > 0.0))
        throw std::invalid_argument("horizon must be > 0");
    if (control_set.dim() != dims.m)
        throw std::invalid_argument("control set dimension does not match m");
}

bool AssumptionReport::all_passed() const
{
    return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.passed; });
}

const AssumptionCheck& AssumptionReport::at(const std::string& name) const
{
    for (const auto& c : checks)
        if (c.name == name)
            return c;
    throw std::out_of_range("no assumption check named " + name);
}

namespace {

struct Prober {
    const ProblemSpec& spec;
    GaussianStream rng;

    double uniform(double lo, double hi) { return lo + (hi - lo) * rng.next_uniform(); }

    Vector random_vector(int size, double radius)
    {
        Vector x(size);
        for (int i = 0; i < size; ++i)
            x(i) = uniform(-radius, radius);
        return x;
    }

    Vector random_control()
    {
        const double r = spec.assumptions.probe_radius;
        const Vector a = spec.control_set.project(random_vector(spec.dims.m, r));
        const Vector b = spec.control_set.project(random_vector(spec.dims.m, r));
        const double lambda = rng.next_uniform();
        return lambda * a + (1.0 - lambda) * b;
    }

    ProbePoint random_point()
    {
        const double r = spec.assumptions.probe_radius;
        ProbePoint pt;
        pt.t = uniform(0.0, spec.horizon);
        pt.y = random_vector(spec.dims.n, r);
        // Spread |z| over several decades so the sublinear growth probe sees small z too.
        const double scale = std::pow(10.0, -std::floor(uniform(0.0, 5.0)));
        pt.z = Eigen::Map<Matrix>(random_vector(spec.dims.n * spec.dims.d, r * scale).data(), spec.dims.n,
                                  spec.dims.d);
        pt.v = random_control();
        return pt;
    }
};

std::string describe(const ProbePoint& pt)
{
    std::ostringstream os;
    os.precision(6);
    os << "t=" << pt.t << " y=[" << pt.y.transpose() << "] z=[" << pt.z.reshaped().transpose() << "] v=["
       << pt.v.transpose() << "]";
    return os.str();
}

void record(AssumptionCheck& check, double ratio, const std::string& where)
{
    if (!std::isfinite(ratio)) {
        check.hard_failure = true;
        check.passed = false;
        check.max_violation_ratio = std::numeric_limits<double>::infinity();
        check.worst_probe = where;
        return;
    }
    if (ratio > check.max_violation_ratio) {
        check.max_violation_ratio = ratio;
        check.worst_probe = where;
    }
    if (ratio > 1.0)
        check.passed = false;
}

double max_abs(const DriverJacobian& j)
{
    double m = std::max(j.b_y.cwiseAbs().maxCoeff(), j.b_v.cwiseAbs().maxCoeff());
    for (const auto& bz : j.b_z)
        m = std::max(m, bz.cwiseAbs().maxCoeff());
    return m;
}

double max_abs(const CostGradient& g)
{
    return std::max({g.h_y.cwiseAbs().maxCoeff(), g.h_z.cwiseAbs().maxCoeff(), g.h_v.cwiseAbs().maxCoeff()});
}

double max_abs_diff(const DriverJacobian& a, const DriverJacobian& b)
{
    double m = std::max((a.b_y - b.b_y).cwiseAbs().maxCoeff(), (a.b_v - b.b_v).cwiseAbs().maxCoeff());
    for (std::size_t j = 0; j < a.b_z.size(); ++j)
        m = std::max(m, (a.b_z[j] - b.b_z[j]).cwiseAbs().maxCoeff());
    return m;
}

double max_abs_diff(const CostGradient& a, const CostGradient& b)
{
    return std::max({(a.h_y - b.h_y).cwiseAbs().maxCoeff(), (a.h_z - b.h_z).cwiseAbs().maxCoeff(),
                     (a.h_v - b.h_v).cwiseAbs().maxCoeff()});
}

// Repeatedly halve the segment [0, 1], keeping the half with the larger jump
// in f. For a C^1 function the slope converges to a bounded |f'|; across a
// jump it doubles at every level.
template <class F>
double bisection_slope(F&& f, double length, int levels = 30)
{
    double a = 0.0, b = 1.0;
    double fa = f(a), fb = f(b);
    double slope = std::abs(fb - fa) / length;
    for (int level = 0; level < levels; ++level) {
        const double mid = 0.5 * (a + b);
        const double fm = f(mid);
        if (std::abs(fm - fa) >= std::abs(fb - fm)) {
            b = mid;
            fb = fm;
        } else {
            a = mid;
            fa = fm;
        }
        slope = std::abs(fb - fa) / ((b - a) * length);
        if (!std::isfinite(slope))
            return slope;
    }
    return slope;
}

}  // namespace

AssumptionReport validate_assumptions(const ProblemSpec& spec, int probe_budget, std::uint64_t seed)
{
    if (probe_budget < 1)
        throw std::invalid_argument("probe_budget must be >= 1");
    spec.validate();

    const auto& ap = spec.assumptions;
    const double C = ap.lipschitz_bound;
    const int n = spec.dims.n, d = spec.dims.d;

    AssumptionReport report;
    report.checks = {
        {"4.1", "b, h, g finite and continuously differentiable (bisection slope probe)", true, false, 0.0, ""},
        {"4.2", "derivatives of b, h, g bounded by C", true, false, 0.0, ""},
        {"4.3", "|g(y)| <= C (1 + |y|)", true, false, 0.0, ""},
        {"4.5", "|f(t,y,z,v) - f(t,y,0,v)| <= C (phi_t + |y| + |z| + |v|)^alpha for f = b, h", true, false, 0.0, ""},
        {"4.6", "derivatives of b, h Lipschitz in z with constant C", true, false, 0.0, ""},
    };
    auto& c41 = report.checks[0];
    auto& c42 = report.checks[1];
    auto& c43 = report.checks[2];
    auto& c45 = report.checks[3];
    auto& c46 = report.checks[4];

    Prober prober{spec, GaussianStream(seed, 0x9a55)};
    const double bounded = std::max(C, 1.0) * 1e3;

    for (int probe = 0; probe < probe_budget; ++probe) {
        const ProbePoint pt = prober.random_point();
        const std::string where = describe(pt);

        const Vector b = spec.driver(pt.t, pt.y, pt.z, pt.v);
        const double h = spec.running_cost(pt.t, pt.y, pt.z, pt.v);
        const double g = spec.initial_cost(pt.y);
        if (!b.allFinite() || !std::isfinite(h) || !std::isfinite(g)) {
            record(c41, std::numeric_limits<double>::infinity(), where);
            continue;
        }

        // (4.1) slope probes along segments in v, y and z.
        const Vector v_other = prober.random_control();
        const Vector y_other = prober.random_vector(n, ap.probe_radius);
        const Matrix z_other = Eigen::Map<Matrix>(prober.random_vector(n * d, ap.probe_radius).data(), n, d);
        const double len_v = std::max((v_other - pt.v).norm(), 1e-300);
        const double len_y = std::max((y_other - pt.y).norm(), 1e-300);
        const double len_z = std::max((z_other - pt.z).norm(), 1e-300);
        for (int comp = 0; comp < n; ++comp) {
            auto b_along_v = [&](double s) {
                return spec.driver(pt.t, pt.y, pt.z, pt.v + s * (v_other - pt.v))(comp);
            };
            auto b_along_y = [&](double s) {
                return spec.driver(pt.t, pt.y + s * (y_other - pt.y), pt.z, pt.v)(comp);
            };
            auto b_along_z = [&](double s) {
                const Matrix z = pt.z + s * (z_other - pt.z);
                return spec.driver(pt.t, pt.y, z, pt.v)(comp);
            };
            record(c41, bisection_slope(b_along_v, len_v) / bounded, where + " (b along v)");
            record(c41, bisection_slope(b_along_y, len_y) / bounded, where + " (b along y)");
            record(c41, bisection_slope(b_along_z, len_z) / bounded, where + " (b along z)");
        }
        auto h_along_v = [&](double s) { return spec.running_cost(pt.t, pt.y, pt.z, pt.v + s * (v_other - pt.v)); };
        auto h_along_y = [&](double s) { return spec.running_cost(pt.t, pt.y + s * (y_other - pt.y), pt.z, pt.v); };
        auto g_along_y = [&](double s) { return spec.initial_cost(pt.y + s * (y_other - pt.y)); };
        record(c41, bisection_slope(h_along_v, len_v) / bounded, where + " (h along v)");
        record(c41, bisection_slope(h_along_y, len_y) / bounded, where + " (h along y)");
        record(c41, bisection_slope(g_along_y, len_y) / bounded, where + " (g along y)");

        // (4.2) bounded derivatives.
        const DriverJacobian jb = spec.driver_grad(pt.t, pt.y, pt.z, pt.v);
        const CostGradient jh = spec.running_cost_grad(pt.t, pt.y, pt.z, pt.v);
        const Vector gy = spec.initial_cost_grad(pt.y);
        const double deriv = std::max({max_abs(jb), max_abs(jh), gy.cwiseAbs().maxCoeff()});
        record(c42, C > 0.0 ? deriv / C : (deriv > 0.0 ? std::numeric_limits<double>::max() : 0.0), where);

        // (4.3) linear growth of g.
        record(c43, std::abs(g) / (std::max(C, 1e-300) * (1.0 + pt.y.norm())), where);

        // (4.5) sublinear growth in z.
        const double phi = ap.phi ? ap.phi(pt.t) : 0.0;
        const double base = phi + pt.y.norm() + pt.z.norm() + pt.v.norm();
        const Matrix z0 = Matrix::Zero(n, d);
        const double db = (b - spec.driver(pt.t, pt.y, z0, pt.v)).norm();
        const double dh = std::abs(h - spec.running_cost(pt.t, pt.y, z0, pt.v));
        const double allowed = C * std::pow(base, ap.growth_alpha);
        const double worst = std::max(db, dh);
        if (worst > 0.0)
            record(c45, allowed > 0.0 ? worst / allowed : std::numeric_limits<double>::max(), where);

        // (4.6) derivatives Lipschitz in z.
        const double dz = (z_other - pt.z).norm();
        if (dz > 0.0) {
            const DriverJacobian jb2 = spec.driver_grad(pt.t, pt.y, z_other, pt.v);
            const CostGradient jh2 = spec.running_cost_grad(pt.t, pt.y, z_other, pt.v);
            const double change = std::max(max_abs_diff(jb, jb2), max_abs_diff(jh, jh2));
            if (change > 0.0)
                record(c46, C > 0.0 ? change / (C * dz) : std::numeric_limits<double>::max(), where);
        }
    }
    return report;
}

namespace {

void accumulate_error(double& worst, double analytic, double fd, const char* what)
{
    if (!std::isfinite(fd))
        throw NumericalError(std::string("grad_check: non-finite finite difference for ") + what);
    worst = std::max(worst, std::abs(analytic - fd) / (1.0 + std::abs(analytic)));
}

}  // namespace

double grad_check(const ProblemSpec& spec, const ProbePoint& point, double step)
{
    if (!(step > 0.0))
        throw std::invalid_argument("grad_check step must be > 0");
    const int n = spec.dims.n, d = spec.dims.d, m = spec.dims.m;
    const double t = point.t;
    const auto& y = point.y;
    const auto& z = point.z;
    const auto& v = point.v;
    const DriverJacobian jb = spec.driver_grad(t, y, z, v);
    const CostGradient jh = spec.running_cost_grad(t, y, z, v);
    const Vector gy = spec.initial_cost_grad(y);
    const double inv = 1.0 / (2.0 * step);

    double worst = 0.0;
    for (int c = 0; c < n; ++c) {
        Vector yp = y, ym = y;
        yp(c) += step;
        ym(c) -= step;
        const Vector fd_b = (spec.driver(t, yp, z, v) - spec.driver(t, ym, z, v)) * inv;
        for (int a = 0; a < n; ++a)
            accumulate_error(worst, jb.b_y(a, c), fd_b(a), "b_y");
        accumulate_error(worst, jh.h_y(c), (spec.running_cost(t, yp, z, v) - spec.running_cost(t, ym, z, v)) * inv,
                         "h_y");
        accumulate_error(worst, gy(c), (spec.initial_cost(yp) - spec.initial_cost(ym)) * inv, "g_y");
    }
    for (int j = 0; j < d; ++j) {
        for (int c = 0; c < n; ++c) {
            Matrix zp = z, zm = z;
            zp(c, j) += step;
            zm(c, j) -= step;
            const Vector fd_b = (spec.driver(t, y, zp, v) - spec.driver(t, y, zm, v)) * inv;
            for (int a = 0; a < n; ++a)
                accumulate_error(worst, jb.b_z[j](a, c), fd_b(a), "b_z");
            accumulate_error(worst, jh.h_z(c, j),
                             (spec.running_cost(t, y, zp, v) - spec.running_cost(t, y, zm, v)) * inv, "h_z");
        }
    }
    for (int c = 0; c < m; ++c) {
        Vector vp = v, vm = v;
        vp(c) += step;
        vm(c) -= step;
        const Vector fd_b = (spec.driver(t, y, z, vp) - spec.driver(t, y, z, vm)) * inv;
        for (int a = 0; a < n; ++a)
            accumulate_error(worst, jb.b_v(a, c), fd_b(a), "b_v");
        accumulate_error(worst, jh.h_v(c), (spec.running_cost(t, y, z, vp) - spec.running_cost(t, y, z, vm)) * inv,
                         "h_v");
    }
    return worst;
}

}  // namespace bsmp
