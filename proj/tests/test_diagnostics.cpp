#include "doctest.h"
#include "support.hpp"

#include "bsmp/diagnostics.hpp"
#include "bsmp/models.hpp"

#include <cmath>

using namespace bsmp;

namespace {

const BsdeOptions kOptions{};
const std::vector<double> kThetas{0.2, 0.1, 0.05, 0.025};

ControlProcess constant(const ProblemSpec& spec, const PathEnsemble& ens, double c)
{
    return ControlProcess::constant(ens.grid().steps(), ens.paths(), Vector::Constant(1, c), spec.control_set);
}

bool all_zero(const ConvergenceTable& table)
{
    for (const auto& s : table.series)
        for (double v : s.values)
            if (v != 0.0)
                return false;
    return true;
}

struct Setup {
    TrajectoryBundle bundle;
    AdjointPath adjoint;
    VariationalSolution variational;
};

Setup setup(const ProblemSpec& spec, const PathEnsemble& ens, double u, double v)
{
    auto bundle = solve_bsde(spec, ens, constant(spec, ens, u), kOptions);
    auto adjoint = solve_adjoint(spec, ens, bundle);
    auto variational = solve_variational(spec, ens, bundle, constant(spec, ens, v), kOptions.basis,
                                         kOptions.picard_iters);
    return {std::move(bundle), std::move(adjoint), std::move(variational)};
}

PathProcess constant_process(int nodes, Eigen::Index paths, double value)
{
    return PathProcess(static_cast<std::size_t>(nodes), RowArray::Constant(paths, 1, value));
}

}  // namespace

TEST_CASE("theta grid validation")
{
    CHECK_NOTHROW(validate_theta_grid(kThetas));
    CHECK_THROWS_AS(validate_theta_grid({0.1, 0.2}), std::invalid_argument);
    CHECK_THROWS_AS(validate_theta_grid({1.5, 0.1}), std::invalid_argument);
    CHECK_THROWS_AS(validate_theta_grid({0.1, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(validate_theta_grid({}), std::invalid_argument);
}

TEST_CASE("log-log slope and monotonicity helpers")
{
    std::vector<double> y;
    for (double t : kThetas)
        y.push_back(3.0 * t * t);
    CHECK(loglog_slope(kThetas, y) == doctest::Approx(2.0));
    CHECK(std::isnan(loglog_slope(kThetas, {1.0, 0.0, 1.0, 1.0})));
    CHECK(nonincreasing({3, 2, 2, 1}, {0, 0, 0, 0}));
    CHECK_FALSE(nonincreasing({3, 2, 2.5, 1}, {0, 0, 0, 0}));
    CHECK(nonincreasing({3, 2, 2.5, 1}, {0, 0.4, 0.6, 0}));
}

TEST_CASE("variation rate table")
{
    const auto ens = test::standard_ensemble(4000, 50);
    SUBCASE("identical controls")
    {
        const auto spec = make_model("nonlinear");
        CHECK(all_zero(lemma4_table(spec, ens, constant(spec, ens, 0.3), constant(spec, ens, 0.3), kThetas, kOptions)));
    }
    SUBCASE("control-free dynamics")
    {
        const auto spec = make_model("zero_driver");
        const auto t = lemma4_table(spec, ens, constant(spec, ens, 0.0), constant(spec, ens, 1.0), kThetas, kOptions);
        CHECK(all_zero(t));
        CHECK(t.at("sup_y").all_zero);
    }
    SUBCASE("b = v: sup difference is theta^2 T^2")
    {
        const auto spec = make_model("lq");
        const auto t = lemma4_table(spec, ens, constant(spec, ens, 0.0), constant(spec, ens, 1.0), kThetas, kOptions);
        const auto& s = t.at("sup_y");
        for (std::size_t j = 0; j < kThetas.size(); ++j)
            CHECK(s.values[j] == doctest::Approx(kThetas[j] * kThetas[j]).epsilon(1e-9));
        CHECK(s.slope == doctest::Approx(2.0).epsilon(1e-6));
        CHECK(s.monotone);
    }
    SUBCASE("nonlinear rate")
    {
        const auto spec = make_model("nonlinear");
        const auto t = lemma4_table(spec, ens, constant(spec, ens, 0.0), constant(spec, ens, 1.0), kThetas, kOptions);
        CHECK(t.at("sup_y").slope >= 0.9);
    }
}

TEST_CASE("first-order expansion table")
{
    const auto ens = test::standard_ensemble(4000, 50);
    SUBCASE("identical controls")
    {
        const auto spec = make_model("nonlinear");
        CHECK(all_zero(lemma5_table(spec, ens, constant(spec, ens, 0.3), constant(spec, ens, 0.3), kThetas, kOptions)));
    }
    SUBCASE("affine dynamics make the quotient exact")
    {
        const auto spec = make_model("lq");
        const auto t = lemma5_table(spec, ens, constant(spec, ens, 0.0), constant(spec, ens, 1.0), kThetas, kOptions);
        for (const auto& s : t.series)
            for (double v : s.values)
                CHECK(v <= 1e-16);
    }
    SUBCASE("sin(v) driver: metrics shrink with theta")
    {
        const auto spec = make_model("nonlinear");
        const auto t = lemma5_table(spec, ens, constant(spec, ens, 0.0), constant(spec, ens, 1.0), kThetas, kOptions);
        for (const auto& s : t.series) {
            CHECK_MESSAGE(s.monotone, s.name);
            CHECK(s.values.back() < s.values.front());
        }
    }
}

TEST_CASE("directional derivative functional")
{
    const double kappa = 0.5;
    const auto spec = make_model("lq", {{"kappa", kappa}});
    const auto ens = test::standard_ensemble(10000, 50);
    SUBCASE("zero direction")
    {
        const auto nl = make_model("nonlinear");
        const auto s = setup(nl, ens, 0.2, 0.2);
        CHECK(lemma6_check(nl, ens, s.bundle, s.variational).value == 0.0);
    }
    SUBCASE("at the optimum every direction is flat")
    {
        for (double c : {-1.0, 0.0, 1.7}) {
            const auto s = setup(spec, ens, kappa, c);
            const auto l6 = lemma6_check(spec, ens, s.bundle, s.variational);
            CHECK(std::abs(l6.value) <= 3.0 * l6.se + 1e-12);
        }
    }
    SUBCASE("from zero towards the optimum")
    {
        const auto s = setup(spec, ens, 0.0, kappa);
        const auto l6 = lemma6_check(spec, ens, s.bundle, s.variational);
        CHECK(std::abs(l6.value + kappa * kappa) <= 4.0 * l6.se + 1e-12);
    }
}

TEST_CASE("duality and the martingale term")
{
    const auto ens = test::standard_ensemble(10000, 50);
    SUBCASE("zero direction")
    {
        const auto spec = make_model("nonlinear");
        const auto s = setup(spec, ens, 0.4, 0.4);
        const auto rep = duality_check(spec, ens, s.bundle, s.adjoint, s.variational);
        CHECK(rep.s_terminal.value == 0.0);
        CHECK(rep.gap == 0.0);
        CHECK(rep.martingale_pass);
        CHECK(rep.gap_pass);
    }
    SUBCASE("LQ: Z = 0 and H_z = 0")
    {
        const auto spec = make_model("lq");
        const auto s = setup(spec, ens, 0.0, 1.0);
        const auto rep = duality_check(spec, ens, s.bundle, s.adjoint, s.variational);
        CHECK(rep.s_terminal.value == 0.0);
        CHECK(rep.lemma6 == doctest::Approx(rep.hamiltonian).epsilon(1e-12));
        CHECK(rep.gap_pass);
    }
    SUBCASE("z-dependent driver: E[S_T] is zero within noise")
    {
        const auto spec = make_model("nonlinear");
        const auto s = setup(spec, ens, 0.0, 1.0);
        const auto rep = duality_check(spec, ens, s.bundle, s.adjoint, s.variational);
        CHECK(rep.s_terminal.se > 0.0);
        CHECK(std::abs(rep.s_terminal.value) <= 3.0 * rep.s_terminal.se);
        CHECK(rep.martingale_pass);
        CHECK(rep.gap <= 3.0 * rep.gap_stderr + std::abs(rep.residual) + 1e-12);
        CHECK(rep.gap_pass);
    }
}

TEST_CASE("empirical norms of a constant process")
{
    const TimeGrid grid(2.0, 10);
    const auto x = constant_process(11, 50, 1.0);
    const auto n = empirical_norms(x, grid, {0.5, 1.0, 2.0, 4.0});
    for (double v : n.sp_norm)
        CHECK(v == doctest::Approx(1.0));
    CHECK(n.mp_norm[2] == doctest::Approx(std::sqrt(2.0)));
    CHECK(n.classD_proxy == doctest::Approx(1.0));
    CHECK(n.finite);
    CHECK_THROWS_AS(empirical_norms(x, grid, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(empirical_norms({}, grid, {1.0}), std::invalid_argument);
}

TEST_CASE("norms of Brownian motion are stable under path doubling")
{
    const auto ens = test::standard_ensemble(20000, 50);
    PathProcess w;
    for (int i = 0; i <= 50; ++i)
        w.push_back(ens.brownian(i));
    const auto full = empirical_norms(w, ens.grid(), {2.0});
    const auto half = empirical_norms(path_prefix(w, 10000), ens.grid(), {2.0});
    const double ratio = full.sp_norm[0] / half.sp_norm[0];
    CHECK(ratio >= 0.8);
    CHECK(ratio <= 1.25);
    CHECK(path_prefix(w, 10).front().rows() == 10);
}

TEST_CASE("heavy-tailed solution: class (D) proxy is stable")
{
    const auto spec = make_model("heavy_tail");
    const auto ens = test::standard_ensemble(20000, 50);
    const auto bundle = solve_bsde(spec, ens, constant(spec, ens, 0.0), kOptions);
    const auto full = empirical_norms(bundle.y, ens.grid(), {0.5, 0.9, 2.0});
    const auto half = empirical_norms(path_prefix(bundle.y, 10000), ens.grid(), {0.5, 0.9, 2.0});
    CHECK(full.finite);
    const double ratio = full.classD_proxy / half.classD_proxy;
    CHECK(ratio >= 0.8);
    CHECK(ratio <= 1.25);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(full.sp_norm[j] / half.sp_norm[j] >= 0.8);
        CHECK(full.sp_norm[j] / half.sp_norm[j] <= 1.25);
    }
    // y_0 against E|W_1|^{-1/2}.
    const auto y0 = estimate(bundle.pathwise_y0.col(0).array());
    CHECK(std::abs(bundle.y0()(0) - half_inverse_moment(1.0)) <= 5.0 * y0.se);
}

TEST_CASE("gradient identity")
{
    const auto ens = test::standard_ensemble(4000, 25);
    SUBCASE("LQ: the quotient is exactly linear in theta")
    {
        const auto spec = make_model("lq");
        const auto gi = gradient_identity(spec, ens, constant(spec, ens, 0.0), constant(spec, ens, 1.0),
                                          {0.1, 0.05, 0.025}, kOptions);
        REQUIRE(gi.rows.size() == 3);
        for (const auto& row : gi.rows)
            CHECK(row.gap == doctest::Approx(0.5 * row.theta).epsilon(1e-6));
        CHECK(gi.decreasing);
    }
    SUBCASE("nonlinear")
    {
        const auto spec = make_model("nonlinear");
        const auto gi = gradient_identity(spec, ens, constant(spec, ens, 0.0), constant(spec, ens, 1.0),
                                          {0.1, 0.05, 0.025}, kOptions);
        CHECK(gi.decreasing);
        CHECK(gi.rows.back().gap < 0.05);
    }
}
