#pragma once

#include "bsmp/linalg.hpp"

#include <cstdint>
#include <vector>

namespace bsmp {

/// Uniform grid 0 = t_0 < ... < t_N = T.
class TimeGrid {
public:
    TimeGrid(double horizon, int steps);

    double horizon() const { return horizon_; }
    int steps() const { return steps_; }
    double dt() const { return dt_; }
    double operator[](int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& nodes() const { return nodes_; }

    bool operator==(const TimeGrid& other) const
    {
        return horizon_ == other.horizon_ && steps_ == other.steps_;
    }

private:
    double horizon_;
    int steps_;
    double dt_;
    std::vector<double> nodes_;
};

/// Brownian increments and cumulative paths on a grid, shared read-only by
/// every solver (common random numbers).
class PathEnsemble {
public:
    /// Wrap externally supplied increments (steps x (P x d)).
    PathEnsemble(TimeGrid grid, std::vector<RowArray> increments, std::uint64_t seed = 0, bool antithetic = false);

    const TimeGrid& grid() const { return grid_; }
    Eigen::Index paths() const { return paths_; }
    int brownian_dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }
    bool antithetic() const { return antithetic_; }

    /// Delta W_i = W_{i+1} - W_i, P x d, for i in [0, N).
    const RowArray& increment(int i) const { return increments_[static_cast<std::size_t>(i)]; }
    /// W_{t_i}, P x d, for i in [0, N]; W_0 = 0.
    const RowArray& brownian(int i) const { return brownian_[static_cast<std::size_t>(i)]; }

    /// Content hash of the increments and grid, used to check that two
    /// results were produced on the same ensemble.
    std::uint64_t fingerprint() const { return fingerprint_; }

private:
    TimeGrid grid_;
    Eigen::Index paths_;
    int dim_;
    std::uint64_t seed_;
    bool antithetic_;
    std::vector<RowArray> increments_;
    std::vector<RowArray> brownian_;
    std::uint64_t fingerprint_;
};

/// Gaussian increments from counter-based streams keyed by (seed, path)
/// (or (seed, pair) when antithetic), so the result is independent of the
/// worker count and extending path_count keeps existing paths.
PathEnsemble sample_ensemble(const TimeGrid& grid, Eigen::Index path_count, int brownian_dim, std::uint64_t seed,
                             bool antithetic = false);

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 14695981039346656037ULL);

}  // namespace bsmp
