#include "bsmp/sampling.hpp"

#include "bsmp/parallel.hpp"
#include "bsmp/philox.hpp"

#include <cmath>

namespace bsmp {

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

TimeGrid::TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps)
{
    if (!(horizon > 0.0))
        throw std::invalid_argument("time grid horizon must be > 0");
    if (steps < 1)
        throw std::invalid_argument("time grid needs at least one step");
    dt_ = horizon / steps;
    nodes_.resize(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i < steps; ++i)
        nodes_[static_cast<std::size_t>(i)] = i * dt_;
    nodes_.back() = horizon;
}

PathEnsemble::PathEnsemble(TimeGrid grid, std::vector<RowArray> increments, std::uint64_t seed, bool antithetic)
    : grid_(std::move(grid)), seed_(seed), antithetic_(antithetic), increments_(std::move(increments))
{
    if (static_cast<int>(increments_.size()) != grid_.steps())
        throw std::invalid_argument("increment count does not match the grid");
    paths_ = increments_.front().rows();
    dim_ = static_cast<int>(increments_.front().cols());
    if (paths_ < 1 || dim_ < 1)
        throw std::invalid_argument("ensemble needs at least one path and one Brownian dimension");
    for (const auto& inc : increments_)
        if (inc.rows() != paths_ || inc.cols() != dim_)
            throw std::invalid_argument("increment arrays must all be P x d");
        else if (!inc.allFinite())
            throw std::invalid_argument("increments must be finite");

    brownian_.resize(increments_.size() + 1);
    brownian_[0] = RowArray::Zero(paths_, dim_);
    for (std::size_t i = 0; i < increments_.size(); ++i)
        brownian_[i + 1] = brownian_[i] + increments_[i];

    const double horizon = grid_.horizon();
    std::uint64_t h = fnv1a(&horizon, sizeof(double));
    const int steps = grid_.steps();
    h = fnv1a(&steps, sizeof(int), h);
    for (const auto& inc : increments_)
        h = fnv1a(inc.data(), sizeof(double) * static_cast<std::size_t>(inc.size()), h);
    fingerprint_ = h;
}

PathEnsemble sample_ensemble(const TimeGrid& grid, Eigen::Index path_count, int brownian_dim, std::uint64_t seed,
                             bool antithetic)
{
    if (path_count < 2)
        throw std::invalid_argument("path_count must be >= 2");
    if (antithetic && path_count % 2 != 0)
        throw std::invalid_argument("antithetic sampling needs an even path_count");
    if (brownian_dim < 1)
        throw std::invalid_argument("Brownian dimension must be >= 1");

    const int steps = grid.steps();
    const double sd = std::sqrt(grid.dt());
    std::vector<RowArray> increments(static_cast<std::size_t>(steps), RowArray(path_count, brownian_dim));
    const auto draws_per_path = static_cast<std::uint64_t>(steps) * static_cast<std::uint64_t>(brownian_dim);

    for_each_block(path_count, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t p = begin; p < end; ++p) {
            const auto stream_id = static_cast<std::uint64_t>(antithetic ? p / 2 : p);
            const double sign = (antithetic && p % 2 == 1) ? -1.0 : 1.0;
            const GaussianStream stream(seed, stream_id);
            for (std::uint64_t k = 0; k < draws_per_path; ++k) {
                const auto [a, b] = stream.normal_pair(k / 2);
                const double z = (k % 2 == 0) ? a : b;
                const auto step = static_cast<std::size_t>(k / static_cast<std::uint64_t>(brownian_dim));
                const auto coord = static_cast<Eigen::Index>(k % static_cast<std::uint64_t>(brownian_dim));
                increments[step](p, coord) = sign * sd * z;
            }
        }
    });
    return PathEnsemble(grid, std::move(increments), seed, antithetic);
}

}  // namespace bsmp
