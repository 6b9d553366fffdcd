#include "bsmp/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bsmp {
namespace {

Vector scalar(double x)
{
    return Vector::Constant(1, x);
}

Matrix scalar_matrix(double x)
{
    return Matrix::Constant(1, 1, x);
}

DriverJacobian scalar_jacobian(double by, double bz, double bv)
{
    return {scalar_matrix(by), {scalar_matrix(bz)}, scalar_matrix(bv)};
}

CostGradient scalar_gradient(double hy, double hz, double hv)
{
    return {scalar(hy), scalar_matrix(hz), scalar(hv)};
}

ProblemSpec scalar_problem(std::string name, double horizon, double u_lo, double u_hi)
{
    ProblemSpec spec;
    spec.name = std::move(name);
    spec.dims = {1, 1, 1};
    spec.horizon = horizon;
    spec.control_set = ControlSet::interval(u_lo, u_hi);
    return spec;
}

// lq: b = v, h = v^2 / 2, g = kappa y, xi = W_T.
ProblemSpec build_lq(const ModelParams& p, double horizon)
{
    const double kappa = p.at("kappa");
    auto spec = scalar_problem("lq", horizon, p.at("u_lo"), p.at("u_hi"));
    spec.driver = [](double, const VecRef&, const MatRef&, const VecRef& v) -> Vector { return v; };
    spec.driver_grad = [](double, const VecRef&, const MatRef&, const VecRef&) {
        return scalar_jacobian(0.0, 0.0, 1.0);
    };
    spec.running_cost = [](double, const VecRef&, const MatRef&, const VecRef& v) { return 0.5 * v.squaredNorm(); };
    spec.running_cost_grad = [](double, const VecRef&, const MatRef&, const VecRef& v) {
        return scalar_gradient(0.0, 0.0, v(0));
    };
    spec.initial_cost = [kappa](const VecRef& y) { return kappa * y(0); };
    spec.initial_cost_grad = [kappa](const VecRef&) { return scalar(kappa); };
    spec.terminal = [](const VecRef& w) { return scalar(w(0)); };
    return spec;
}

ModelOracle oracle_lq(const ModelParams& p, double horizon)
{
    const double kappa = p.at("kappa");
    const double c = std::clamp(kappa, p.at("u_lo"), p.at("u_hi"));
    // J(c) = T (-kappa c + c^2 / 2) for a constant control c.
    return {scalar(c), horizon * (-kappa * c + 0.5 * c * c), 0.0};
}

// zero_driver: b = 0, h = w v^2, g = y, xi = a W_T + c.
ProblemSpec build_zero_driver(const ModelParams& p, double horizon)
{
    const double weight = p.at("running_weight");
    const double a = p.at("xi_scale");
    const double c = p.at("xi_shift");
    auto spec = scalar_problem("zero_driver", horizon, p.at("u_lo"), p.at("u_hi"));
    spec.driver = [](double, const VecRef&, const MatRef&, const VecRef&) { return scalar(0.0); };
    spec.driver_grad = [](double, const VecRef&, const MatRef&, const VecRef&) {
        return scalar_jacobian(0.0, 0.0, 0.0);
    };
    spec.running_cost = [weight](double, const VecRef&, const MatRef&, const VecRef& v) {
        return weight * v.squaredNorm();
    };
    spec.running_cost_grad = [weight](double, const VecRef&, const MatRef&, const VecRef& v) {
        return scalar_gradient(0.0, 0.0, 2.0 * weight * v(0));
    };
    spec.initial_cost = [](const VecRef& y) { return y(0); };
    spec.initial_cost_grad = [](const VecRef&) { return scalar(1.0); };
    spec.terminal = [a, c](const VecRef& w) { return scalar(a * w(0) + c); };
    return spec;
}

ModelOracle oracle_zero_driver(const ModelParams& p, double)
{
    const double u = std::clamp(0.0, p.at("u_lo"), p.at("u_hi"));
    return {scalar(u), p.at("xi_shift") + p.at("running_weight") * u * u, p.at("xi_shift")};
}

// heavy_tail: b = gain v, h = v^2 / 2, g = y, xi = |W_T|^{-1/2} (integrable, not square integrable).
ProblemSpec build_heavy_tail(const ModelParams& p, double horizon)
{
    const double gain = p.at("control_gain");
    auto spec = scalar_problem("heavy_tail", horizon, p.at("u_lo"), p.at("u_hi"));
    spec.driver = [gain](double, const VecRef&, const MatRef&, const VecRef& v) { return scalar(gain * v(0)); };
    spec.driver_grad = [gain](double, const VecRef&, const MatRef&, const VecRef&) {
        return scalar_jacobian(0.0, 0.0, gain);
    };
    spec.running_cost = [](double, const VecRef&, const MatRef&, const VecRef& v) { return 0.5 * v.squaredNorm(); };
    spec.running_cost_grad = [](double, const VecRef&, const MatRef&, const VecRef& v) {
        return scalar_gradient(0.0, 0.0, v(0));
    };
    spec.initial_cost = [](const VecRef& y) { return y(0); };
    spec.initial_cost_grad = [](const VecRef&) { return scalar(1.0); };
    spec.terminal = [](const VecRef& w) { return scalar(1.0 / std::sqrt(std::abs(w(0)))); };
    spec.assumptions.terminal_in_L1_only = true;
    return spec;
}

ModelOracle oracle_heavy_tail(const ModelParams& p, double horizon)
{
    const double gain = p.at("control_gain");
    const double c = std::clamp(gain, p.at("u_lo"), p.at("u_hi"));
    const double mean_xi = half_inverse_moment(horizon);
    return {scalar(c), mean_xi + horizon * (-gain * c + 0.5 * c * c), mean_xi};
}

// nonlinear: b = sin(v) + a tanh(y) + c z, h = v^2 / 2 + e y^2, g = tanh(y), xi = W_T.
ProblemSpec build_nonlinear(const ModelParams& p, double horizon)
{
    const double a = p.at("y_coupling");
    const double c = p.at("z_coupling");
    const double e = p.at("y_cost");
    auto spec = scalar_problem("nonlinear", horizon, p.at("u_lo"), p.at("u_hi"));
    spec.driver = [a, c](double, const VecRef& y, const MatRef& z, const VecRef& v) {
        return scalar(std::sin(v(0)) + a * std::tanh(y(0)) + c * z(0, 0));
    };
    spec.driver_grad = [a, c](double, const VecRef& y, const MatRef&, const VecRef& v) {
        const double th = std::tanh(y(0));
        return scalar_jacobian(a * (1.0 - th * th), c, std::cos(v(0)));
    };
    spec.running_cost = [e](double, const VecRef& y, const MatRef&, const VecRef& v) {
        return 0.5 * v.squaredNorm() + e * y.squaredNorm();
    };
    spec.running_cost_grad = [e](double, const VecRef& y, const MatRef&, const VecRef& v) {
        return scalar_gradient(2.0 * e * y(0), 0.0, v(0));
    };
    spec.initial_cost = [](const VecRef& y) { return std::tanh(y(0)); };
    spec.initial_cost_grad = [](const VecRef& y) {
        const double th = std::tanh(y(0));
        return scalar(1.0 - th * th);
    };
    spec.terminal = [](const VecRef& w) { return scalar(w(0)); };
    return spec;
}

ModelOracle oracle_none(const ModelParams&, double)
{
    return {};
}

}  // namespace

double half_inverse_moment(double horizon)
{
    return std::pow(horizon, -0.25) * std::pow(2.0, -0.25) * std::tgamma(0.25) / std::sqrt(std::numbers::pi);
}

const std::vector<ModelRegistryEntry>& model_registry()
{
    static const std::vector<ModelRegistryEntry> registry = {
        {"lq", "b = v, h = v^2/2, g = kappa y, xi = W_T; optimum u = kappa, J = -kappa^2 T / 2",
         {{"kappa", 0.5}, {"u_lo", -2.0}, {"u_hi", 2.0}}, build_lq, oracle_lq},
        {"zero_driver", "b = 0, h = w v^2, g = y, xi = a W_T + c; optimum u = 0, J = c",
         {{"running_weight", 1.0}, {"xi_scale", 0.0}, {"xi_shift", 3.0}, {"u_lo", -1.0}, {"u_hi", 1.0}},
         build_zero_driver, oracle_zero_driver},
        {"heavy_tail", "b = gain v, h = v^2/2, g = y, xi = |W_T|^(-1/2) (L1, not L2)",
         {{"control_gain", 0.0}, {"u_lo", -1.0}, {"u_hi", 1.0}}, build_heavy_tail, oracle_heavy_tail},
        {"nonlinear", "b = sin(v) + a tanh(y) + c z, h = v^2/2 + e y^2, g = tanh(y), xi = W_T; no oracle",
         {{"y_coupling", 0.1}, {"z_coupling", 0.1}, {"y_cost", 0.1}, {"u_lo", -1.0}, {"u_hi", 1.0}},
         build_nonlinear, oracle_none},
    };
    return registry;
}

const ModelRegistryEntry& find_model(const std::string& key)
{
    for (const auto& entry : model_registry())
        if (entry.key == key)
            return entry;
    throw std::invalid_argument("unknown model key '" + key + "'");
}

ModelParams resolve_params(const ModelRegistryEntry& entry, const ModelParams& params)
{
    ModelParams resolved = entry.defaults;
    for (const auto& [name, value] : params) {
        if (!resolved.contains(name))
            throw std::invalid_argument("model '" + entry.key + "' has no parameter '" + name + "'");
        resolved[name] = value;
    }
    return resolved;
}

ProblemSpec make_model(const std::string& key, const ModelParams& params, double horizon)
{
    const auto& entry = find_model(key);
    auto spec = entry.build(resolve_params(entry, params), horizon);
    spec.validate();
    return spec;
}

ModelOracle model_oracle(const std::string& key, const ModelParams& params, double horizon)
{
    const auto& entry = find_model(key);
    return entry.oracle(resolve_params(entry, params), horizon);
}

}  // namespace bsmp
