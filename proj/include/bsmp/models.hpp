#pragma once

#include "bsmp/model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bsmp {

using ModelParams = std::map<std::string, double>;

/// Closed-form reference values a registered problem may document.
struct ModelOracle {
    std::optional<Vector> optimal_control;  // constant optimal control, when known
    std::optional<double> optimal_cost;
    std::optional<double> y0;               // y_0 under the zero control, when known
};

struct ModelRegistryEntry {
    std::string key;
    std::string summary;
    ModelParams defaults;
    ProblemSpec (*build)(const ModelParams& params, double horizon);
    ModelOracle (*oracle)(const ModelParams& params, double horizon);
};

/// All registered problems, in a fixed order.
const std::vector<ModelRegistryEntry>& model_registry();

const ModelRegistryEntry& find_model(const std::string& key);

/// Merge params over the entry defaults; unknown parameter names are rejected.
ModelParams resolve_params(const ModelRegistryEntry& entry, const ModelParams& params);

ProblemSpec make_model(const std::string& key, const ModelParams& params = {}, double horizon = 1.0);

ModelOracle model_oracle(const std::string& key, const ModelParams& params = {}, double horizon = 1.0);

/// E|W_T|^{-1/2} for W_T ~ N(0, T): T^{-1/4} 2^{-1/4} Gamma(1/4) / sqrt(pi).
double half_inverse_moment(double horizon);

}  // namespace bsmp
