#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace bsmp {

/// A Monte Carlo mean with its standard error.
struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

/// Sample mean and standard error of the mean (unbiased variance).
inline Estimate estimate(const Eigen::ArrayXd& samples)
{
    const auto count = samples.size();
    if (count == 0)
        return {};
    const double mean = samples.sum() / static_cast<double>(count);
    if (count < 2)
        return {mean, 0.0};
    const double var = (samples - mean).square().sum() / static_cast<double>(count - 1);
    return {mean, std::sqrt(var / static_cast<double>(count))};
}

}  // namespace bsmp
