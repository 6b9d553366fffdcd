#include "doctest.h"
#include "support.hpp"

#include "bsmp/parallel.hpp"
#include "bsmp/philox.hpp"

#include <cmath>
#include <cstring>

using namespace bsmp;

namespace {

bool identical(const RowArray& a, const RowArray& b)
{
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

struct ThreadGuard {
    int saved = thread_count();
    ~ThreadGuard() { set_thread_count(saved); }
};

}  // namespace

TEST_CASE("Philox4x32-10 known-answer vectors")
{
    using C = Philox4x32::Counter;
    CHECK(Philox4x32::block(C{0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(Philox4x32::block(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(Philox4x32::block(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("Gaussian stream is a pure function of its index")
{
    GaussianStream a(42, 3), b(42, 3), c(42, 4);
    CHECK(a.normal_pair(17) == b.normal_pair(17));
    CHECK(a.normal_pair(17) != c.normal_pair(17));
    const double first = a.next_normal();
    CHECK(first == b.normal_pair(0).first);
    const auto [u, w] = a.uniform_pair(9);
    CHECK((u >= 0.0 && u < 1.0 && w >= 0.0 && w < 1.0));
}

TEST_CASE("time grid")
{
    const TimeGrid grid(2.0, 4);
    CHECK(grid.dt() == 0.5);
    CHECK(grid[0] == 0.0);
    CHECK(grid[4] == 2.0);
    CHECK(grid.nodes().size() == 5);
    CHECK_THROWS_AS(TimeGrid(1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(-1.0, 3), std::invalid_argument);
}

TEST_CASE("antithetic pairs mirror increments")
{
    const auto ens = sample_ensemble(TimeGrid(1.0, 1), 2, 1, 99, true);
    CHECK(ens.increment(0)(1, 0) == -ens.increment(0)(0, 0));
    CHECK(ens.increment(0)(0, 0) != 0.0);
    CHECK_THROWS_AS(sample_ensemble(TimeGrid(1.0, 1), 3, 1, 99, true), std::invalid_argument);
}

TEST_CASE("terminal Brownian values have the right first two moments")
{
    for (std::uint64_t seed : {1u, 7u, 12345u}) {
        const Eigen::Index P = 10000;
        const auto ens = sample_ensemble(TimeGrid(1.0, 1), P, 1, seed);
        const Eigen::ArrayXd w = ens.brownian(1).col(0).array();
        const double mean = w.mean();
        const double var = (w - mean).square().sum() / static_cast<double>(P - 1);
        CHECK(std::abs(mean) <= 4.0 / std::sqrt(static_cast<double>(P)));
        CHECK(std::abs(var - 1.0) <= 0.1);
    }
}

TEST_CASE("Brownian paths accumulate increments")
{
    const auto ens = sample_ensemble(TimeGrid(1.0, 10), 50, 2, 3);
    CHECK(ens.brownian(0).isZero(0.0));
    for (int i = 0; i < 10; ++i)
        CHECK((ens.brownian(i + 1) - ens.brownian(i) - ens.increment(i)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(ens.brownian_dim() == 2);
    CHECK(ens.increment(0).cols() == 2);
}

TEST_CASE("sampling is deterministic and thread independent")
{
    ThreadGuard guard;
    const TimeGrid grid(1.0, 20);
    set_thread_count(1);
    const auto a = sample_ensemble(grid, 5000, 2, 7);
    const auto b = sample_ensemble(grid, 5000, 2, 7);
    set_thread_count(4);
    const auto c = sample_ensemble(grid, 5000, 2, 7);
    for (int i = 0; i < grid.steps(); ++i) {
        CHECK(identical(a.increment(i), b.increment(i)));
        CHECK(identical(a.increment(i), c.increment(i)));
    }
    CHECK(a.fingerprint() == c.fingerprint());
    CHECK(a.fingerprint() != sample_ensemble(grid, 5000, 2, 8).fingerprint());
}

TEST_CASE("growing the path count keeps existing paths")
{
    const TimeGrid grid(1.0, 5);
    const auto small = sample_ensemble(grid, 100, 1, 7);
    const auto large = sample_ensemble(grid, 300, 1, 7);
    for (int i = 0; i < grid.steps(); ++i)
        CHECK(identical(small.increment(i), RowArray(large.increment(i).topRows(100))));
}

TEST_CASE("external increments are validated")
{
    const TimeGrid grid(1.0, 2);
    std::vector<RowArray> ok(2, RowArray::Zero(3, 1));
    CHECK_NOTHROW(PathEnsemble(grid, ok));
    std::vector<RowArray> short_list(1, RowArray::Zero(3, 1));
    CHECK_THROWS_AS(PathEnsemble(grid, short_list), std::invalid_argument);
    std::vector<RowArray> ragged{RowArray::Zero(3, 1), RowArray::Zero(4, 1)};
    CHECK_THROWS_AS(PathEnsemble(grid, ragged), std::invalid_argument);
    std::vector<RowArray> bad(2, RowArray::Zero(3, 1));
    bad[1](0, 0) = std::nan("");
    CHECK_THROWS(PathEnsemble(grid, bad));
}

TEST_CASE("block partition ignores the worker count")
{
    ThreadGuard guard;
    for (int threads : {1, 3, 8}) {
        set_thread_count(threads);
        std::vector<std::ptrdiff_t> ends(static_cast<std::size_t>(block_count(2500)), -1);
        for_each_block(2500, [&](std::ptrdiff_t b, std::ptrdiff_t begin, std::ptrdiff_t end) {
            CHECK(begin == b * kPathBlock);
            ends[static_cast<std::size_t>(b)] = end;
        });
        CHECK(ends == std::vector<std::ptrdiff_t>{1024, 2048, 2500});
    }
}
