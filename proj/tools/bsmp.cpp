#include "bsmp/runner.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Controlled BSDE solver and stochastic maximum principle toolkit"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out_dir;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "override the ensemble seed");
    app.add_option("--threads", threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "override the output directory");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"solve", "solve the BSDE for the configured control and write trajectories"},
        {"cost", "compare the direct and augmented cost estimators"},
        {"optimize", "projected-gradient optimization of the control"},
        {"verify", "run every diagnostic and write verdicts"},
        {"benchmark", "optimize every registered model that has an oracle"},
    };
    // Subcommands inherit fallthrough, so global flags may follow the subcommand name.
    app.fallthrough();
    for (const auto& [name, help] : commands)
        app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e);
        std::cerr << "bsmp: error: usage: " << e.what() << '\n';
        return 1;
    }

    bsmp::RunConfig config;
    try {
        if (!config_path.empty())
            config = bsmp::RunConfig::load(config_path);
    } catch (const std::exception& e) {
        std::cerr << "bsmp: error: config: " << e.what() << '\n';
        return 1;
    }
    if (seed)
        config.seed = *seed;
    if (threads)
        config.threads = *threads;
    if (out_dir)
        config.output_dir = *out_dir;

    const std::string command = app.get_subcommands().front()->get_name();
    const int code = bsmp::run(command, config, std::cerr);
    if (code == 0)
        std::cout << "bsmp " << command << ": all verdicts passed (" << config.output_dir << ")\n";
    return code;
}
