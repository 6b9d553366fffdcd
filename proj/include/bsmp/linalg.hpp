#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace bsmp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// One row per path. Rows are contiguous so a path's value at a step can be
// mapped in place (a vector in R^k, or an n x d matrix stored column-major).
using RowArray = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A discrete process: steps[i] is the P x k array of values at grid node i.
using PathProcess = std::vector<RowArray>;

using VecRef = Eigen::Ref<const Vector>;
using MatRef = Eigen::Ref<const Matrix>;

struct Dimensions {
    int n = 1;  // state
    int d = 1;  // Brownian
    int m = 1;  // control

    void validate() const
    {
        if (n < 1 || d < 1 || m < 1)
            throw std::invalid_argument("dimensions must be positive (n, d, m >= 1)");
    }

    bool operator==(const Dimensions&) const = default;
};

/// Error raised when a numerical routine produces non-finite values or
/// cannot repair an ill-posed linear system.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Path p of a row array, viewed as a column vector.
inline auto path_vector(const RowArray& a, Eigen::Index p)
{
    return a.row(p).transpose();
}

/// Path p of a flattened n x d row, viewed as an n x d matrix.
inline Eigen::Map<const Matrix> path_matrix(const RowArray& a, Eigen::Index p, int n, int d)
{
    return {a.row(p).data(), n, d};
}

inline Eigen::Map<Matrix> path_matrix(RowArray& a, Eigen::Index p, int n, int d)
{
    return {a.row(p).data(), n, d};
}

inline bool all_finite(const RowArray& a)
{
    return a.allFinite();
}

}  // namespace bsmp
