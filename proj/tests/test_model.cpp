#include "doctest.h"
#include "support.hpp"

#include "bsmp/models.hpp"
#include "bsmp/philox.hpp"

#include <cmath>

using namespace bsmp;
using bsmp::test::ScalarModel;

namespace {

ScalarModel linear_model()
{
    ScalarModel m;
    m.b = [](double, double, double, double v) { return v; };
    m.b_v = [](double, double, double, double) { return 1.0; };
    m.h = [](double, double, double, double v) { return 0.5 * v * v; };
    m.h_v = [](double, double, double, double v) { return v; };
    return m;
}

ProbePoint point(double t, double y, double z, double v)
{
    return {t, Vector::Constant(1, y), Matrix::Constant(1, 1, z), Vector::Constant(1, v)};
}

// Simpson's rule for E|W_T|^{-1/2}: with w = s^2 the integrand 4 phi(s^2) is smooth.
double half_moment_quadrature(double horizon)
{
    const double sd = std::sqrt(horizon);
    auto f = [sd](double s) { return 4.0 * std::exp(-0.5 * std::pow(s * s / sd, 2)) / (sd * std::sqrt(2.0 * M_PI)); };
    const int n = 20000;
    const double hi = 10.0 * std::sqrt(sd), h = hi / n;
    double sum = f(0.0) + f(hi);
    for (int k = 1; k < n; ++k)
        sum += (k % 2 ? 4.0 : 2.0) * f(k * h);
    return sum * h / 3.0;
}

}  // namespace

TEST_CASE("assumption probes pass on a linear-quadratic problem")
{
    const auto report = validate_assumptions(linear_model().build(), 2000);
    for (const auto& c : report.checks)
        CHECK_MESSAGE(c.passed, c.name << " " << c.worst_probe);
    CHECK(report.all_passed());
}

TEST_CASE("quadratic initial cost violates linear growth")
{
    auto m = linear_model();
    m.g = [](double y) { return y * y; };
    m.g_y = [](double y) { return 2.0 * y; };
    const auto report = validate_assumptions(m.build(), 2000);
    CHECK_FALSE(report.at("4.3").passed);
    CHECK(report.at("4.3").max_violation_ratio > 1.0);
    CHECK_FALSE(report.all_passed());
}

TEST_CASE("a driver with a jump in v fails the differentiability probe")
{
    auto m = linear_model();
    m.b = [](double, double, double, double v) { return v >= 0.0 ? 1.0 : -1.0; };
    m.b_v = bsmp::test::kZero4;
    const auto report = validate_assumptions(m.build(), 500);
    CHECK_FALSE(report.at("4.1").passed);
}

TEST_CASE("assumption probes are deterministic for a seed")
{
    const auto spec = make_model("nonlinear");
    const auto a = validate_assumptions(spec, 300, 11);
    const auto b = validate_assumptions(spec, 300, 11);
    REQUIRE(a.checks.size() == b.checks.size());
    for (std::size_t k = 0; k < a.checks.size(); ++k)
        CHECK(a.checks[k].max_violation_ratio == b.checks[k].max_violation_ratio);
    CHECK_THROWS_AS(validate_assumptions(spec, 0), std::invalid_argument);
}

TEST_CASE("grad_check on polynomial data is exact up to roundoff")
{
    const auto spec = linear_model().build();
    for (double v : {-1.0, -0.3, 0.0, 0.8})
        CHECK(grad_check(spec, point(0.4, 1.7, -0.6, v), 1e-5) <= 1e-8);
}

TEST_CASE("grad_check on sin(y) v with the correct derivative")
{
    ScalarModel m;
    m.b = [](double, double y, double, double v) { return std::sin(y) * v; };
    m.b_y = [](double, double y, double, double v) { return std::cos(y) * v; };
    m.b_v = [](double, double y, double, double) { return std::sin(y); };
    const auto spec = m.build();
    CHECK(grad_check(spec, point(0.2, 0.9, 0.1, 0.7), 1e-5) <= 1e-9);
    CHECK(grad_check(spec, point(0.2, -2.3, 0.1, -0.4), 1e-5) <= 1e-9);
}

TEST_CASE("grad_check flags a derivative off by a factor of two")
{
    ScalarModel m;
    m.b = [](double, double y, double, double v) { return std::sin(y) * v; };
    m.b_y = [](double, double y, double, double v) { return 2.0 * std::cos(y) * v; };
    m.b_v = [](double, double y, double, double) { return std::sin(y); };
    // analytic 2c, truth c: |2c - c| / (1 + |2c|) with c = cos(0) * 1 = 1 gives 1/3.
    const double err = grad_check(m.build(), point(0.0, 0.0, 0.0, 1.0), 1e-5);
    CHECK(err == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    // Large analytic values push the relative error towards 0.5.
    ScalarModel big = m;
    big.b = [](double, double y, double, double v) { return 50.0 * y * v; };
    big.b_y = [](double, double, double, double v) { return 100.0 * v; };
    big.b_v = [](double, double y, double, double) { return 50.0 * y; };
    CHECK(grad_check(big.build(), point(0.0, 0.0, 0.0, 1.0), 1e-5) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("grad_check rejects a non-positive step")
{
    CHECK_THROWS_AS(grad_check(linear_model().build(), point(0, 0, 0, 0), 0.0), std::invalid_argument);
}

TEST_CASE("registered models pass grad_check at random points")
{
    for (const auto& entry : model_registry()) {
        const auto spec = make_model(entry.key);
        GaussianStream rng(3, 1);
        for (int k = 0; k < 20; ++k) {
            const double v = spec.control_set.project(Vector::Constant(1, rng.next_normal()))(0);
            const auto pt = point(rng.next_uniform(), rng.next_normal(), rng.next_normal(), v);
            CHECK_MESSAGE(grad_check(spec, pt, 1e-5) <= 1e-4, entry.key);
        }
    }
}

TEST_CASE("box projection")
{
    const auto box = ControlSet::interval(-1.0, 1.0);
    CHECK(box.project(Vector::Constant(1, 0.3))(0) == 0.3);
    CHECK(box.project(Vector::Constant(1, 2.5))(0) == 1.0);
    CHECK(box.project(Vector::Constant(1, -7.0))(0) == -1.0);
    CHECK(box.contains(Vector::Constant(1, 1.0)));
    CHECK_FALSE(box.contains(Vector::Constant(1, 1.1)));
}

TEST_CASE("ball projection scales radially")
{
    const auto ball = ControlSet::ball(Vector::Zero(2), 1.0);
    const Vector out = ball.project(Eigen::Vector2d(3.0, 4.0));
    CHECK(out(0) == doctest::Approx(0.6));
    CHECK(out(1) == doctest::Approx(0.8));
    const Eigen::Vector2d inside(0.1, -0.2);
    CHECK(ball.project(inside) == inside);
}

TEST_CASE("halfspace intersection projection")
{
    // x >= 0 and y >= 0 written as -x <= 0, -y <= 0: projection clamps both coordinates.
    const auto quadrant =
        ControlSet::halfspaces({{Eigen::Vector2d(-1.0, 0.0), 0.0}, {Eigen::Vector2d(0.0, -1.0), 0.0}});
    const Vector out = quadrant.project(Eigen::Vector2d(-2.0, -3.0));
    CHECK(out.norm() < 1e-9);
    // Simplex-like corner: x + y <= 1 from (2, 2) lands on (0.5, 0.5).
    const auto tri = ControlSet::halfspaces({{Eigen::Vector2d(1.0, 1.0), 1.0}});
    const Vector mid = tri.project(Eigen::Vector2d(2.0, 2.0));
    CHECK(mid(0) == doctest::Approx(0.5));
    CHECK(mid(1) == doctest::Approx(0.5));
}

TEST_CASE("projection is idempotent and nonexpansive")
{
    const auto ball = ControlSet::ball(Eigen::Vector2d(1.0, -1.0), 0.5);
    GaussianStream rng(5, 2);
    for (int k = 0; k < 50; ++k) {
        const Eigen::Vector2d a(3 * rng.next_normal(), 3 * rng.next_normal());
        const Eigen::Vector2d b(3 * rng.next_normal(), 3 * rng.next_normal());
        const Vector pa = ball.project(a), pb = ball.project(b);
        CHECK((ball.project(pa) - pa).norm() < 1e-12);
        CHECK((pa - pb).norm() <= (a - b).norm() + 1e-12);
    }
}

TEST_CASE("invalid control sets are rejected")
{
    CHECK_THROWS_AS(ControlSet::interval(1.0, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(ControlSet::ball(Vector::Zero(1), -1.0), std::invalid_argument);
}

TEST_CASE("model registry")
{
    std::vector<std::string> keys;
    for (const auto& e : model_registry())
        keys.push_back(e.key);
    CHECK(keys == std::vector<std::string>{"lq", "zero_driver", "heavy_tail", "nonlinear"});
    CHECK_THROWS_AS(make_model("nope"), std::invalid_argument);
    CHECK_THROWS_AS(make_model("lq", {{"gamma", 1.0}}), std::invalid_argument);

    const auto oracle = model_oracle("lq", {{"kappa", 0.5}});
    CHECK((*oracle.optimal_control)(0) == 0.5);
    CHECK(*oracle.optimal_cost == doctest::Approx(-0.125));
    // Constrained case: kappa outside U clamps the optimum.
    const auto clamped = model_oracle("lq", {{"kappa", 3.0}});
    CHECK((*clamped.optimal_control)(0) == 2.0);
    CHECK(*clamped.optimal_cost == doctest::Approx(-3.0 * 2.0 + 2.0));
    CHECK_FALSE(model_oracle("nonlinear").optimal_cost.has_value());
}

TEST_CASE("closed-form half inverse moment matches quadrature")
{
    for (double T : {1.0, 0.5, 2.0})
        CHECK(half_inverse_moment(T) == doctest::Approx(half_moment_quadrature(T)).epsilon(1e-9));
}

TEST_CASE("problem validation catches missing pieces")
{
    auto spec = linear_model().build();
    spec.driver = nullptr;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    auto dims = linear_model().build();
    dims.dims.m = 2;
    CHECK_THROWS_AS(dims.validate(), std::invalid_argument);
}
