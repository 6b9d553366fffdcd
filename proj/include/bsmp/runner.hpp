#pragma once

#include "bsmp/io.hpp"
#include "bsmp/models.hpp"
#include "bsmp/regression.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bsmp {

struct OptimizerConfig {
    double step_size = 0.5;
    int max_iters = 50;
    double tolerance = 1e-8;
    std::optional<std::vector<double>> u0;  // default: projection of 0 onto U
};

/// Everything a run depends on. Parsed from a JSON document; every field
/// has a default, and unknown keys are rejected.
struct RunConfig {
    std::string model = "lq";
    ModelParams params;
    double horizon = 1.0;
    int steps = 50;
    long long paths = 10000;
    std::uint64_t seed = 7;
    bool antithetic = false;
    RegressionBasis basis;
    int picard_iters = 2;
    OptimizerConfig optimizer;
    std::vector<double> theta_grid{0.2, 0.1, 0.05, 0.025};
    std::string output_dir = "bsmp_out";
    std::optional<double> winsor_cap;
    // Constant base control and probe direction; defaults depend on the model.
    std::optional<std::vector<double>> control;
    std::optional<std::vector<double>> probe;
    int dump_paths = 64;  // paths written to trajectory CSVs
    int threads = 1;      // worker count; never affects results

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;

    static RunConfig from_json(const Json& doc);
    static RunConfig load(const std::string& path);
};

struct Verdict {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

enum class ExitCode : int { ok = 0, runtime_error = 1, verdict_failure = 2 };

/// Runs one subcommand (solve, cost, optimize, verify, benchmark), writes its
/// outputs under config.output_dir and returns the process exit code.
/// Errors are reported as one line on `diag`.
int run(const std::string& subcommand, const RunConfig& config, std::ostream& diag);

}  // namespace bsmp
