#pragma once

#include "bsmp/model.hpp"
#include "bsmp/sampling.hpp"

#include <functional>
#include <string>

namespace bsmp::test {

using Fn4 = std::function<double(double t, double y, double z, double v)>;
using Fn1 = std::function<double(double)>;

inline const Fn4 kZero4 = [](double, double, double, double) { return 0.0; };

/// Scalar problem (n = d = m = 1) assembled from plain functions; every
/// derivative defaults to zero, g defaults to the identity and xi to W_T.
struct ScalarModel {
    std::string name = "custom";
    Fn4 b = kZero4, b_y = kZero4, b_z = kZero4, b_v = kZero4;
    Fn4 h = kZero4, h_y = kZero4, h_z = kZero4, h_v = kZero4;
    Fn1 g = [](double y) { return y; };
    Fn1 g_y = [](double) { return 1.0; };
    Fn1 xi = [](double w) { return w; };
    double lo = -1.0, hi = 1.0, horizon = 1.0;

    ProblemSpec build() const
    {
        ProblemSpec spec;
        spec.name = name;
        spec.dims = {1, 1, 1};
        spec.horizon = horizon;
        spec.control_set = ControlSet::interval(lo, hi);
        auto one = [](double x) { return Vector::Constant(1, x); };
        auto mat = [](double x) { return Matrix::Constant(1, 1, x); };
        spec.driver = [f = b, one](double t, const VecRef& y, const MatRef& z, const VecRef& v) {
            return one(f(t, y(0), z(0, 0), v(0)));
        };
        spec.driver_grad = [fy = b_y, fz = b_z, fv = b_v, mat](double t, const VecRef& y, const MatRef& z,
                                                                const VecRef& v) {
            return DriverJacobian{mat(fy(t, y(0), z(0, 0), v(0))), {mat(fz(t, y(0), z(0, 0), v(0)))},
                                  mat(fv(t, y(0), z(0, 0), v(0)))};
        };
        spec.running_cost = [f = h](double t, const VecRef& y, const MatRef& z, const VecRef& v) {
            return f(t, y(0), z(0, 0), v(0));
        };
        spec.running_cost_grad = [fy = h_y, fz = h_z, fv = h_v, one, mat](double t, const VecRef& y,
                                                                          const MatRef& z, const VecRef& v) {
            return CostGradient{one(fy(t, y(0), z(0, 0), v(0))), mat(fz(t, y(0), z(0, 0), v(0))),
                                one(fv(t, y(0), z(0, 0), v(0)))};
        };
        spec.initial_cost = [f = g](const VecRef& y) { return f(y(0)); };
        spec.initial_cost_grad = [f = g_y, one](const VecRef& y) { return one(f(y(0))); };
        spec.terminal = [f = xi, one](const VecRef& w) { return one(f(w(0))); };
        spec.validate();
        return spec;
    }
};

/// b = v, h = v^2 / 2, g = kappa y, xi = W_T.
inline ScalarModel lq_model(double kappa, double lo = -2.0, double hi = 2.0)
{
    ScalarModel m;
    m.name = "lq_custom";
    m.b = [](double, double, double, double v) { return v; };
    m.b_v = [](double, double, double, double) { return 1.0; };
    m.h = [](double, double, double, double v) { return 0.5 * v * v; };
    m.h_v = [](double, double, double, double v) { return v; };
    m.g = [kappa](double y) { return kappa * y; };
    m.g_y = [kappa](double) { return kappa; };
    m.lo = lo;
    m.hi = hi;
    return m;
}

inline PathEnsemble standard_ensemble(Eigen::Index paths = 10000, int steps = 50, std::uint64_t seed = 7,
                                      double horizon = 1.0)
{
    return sample_ensemble(TimeGrid(horizon, steps), paths, 1, seed);
}

}  // namespace bsmp::test
