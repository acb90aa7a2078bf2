#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "rate_alloc/error.hpp"

using namespace rate_alloc;
using namespace rate_alloc::cli;

namespace {

void add_run_options(CLI::App* cmd, RunConfig& config, std::string& curve, bool with_stages) {
    cmd->add_option("--image", config.image, "Input PGM (P2 or P5)");
    cmd->add_option("--synthetic", config.synthetic, "Built-in image: flat, checkerboard, gradient");
    cmd->add_option("--block-size", config.block_size, "Block side length B")->capture_default_str();
    cmd->add_option("--rate", config.rate, "Overall sampling rate in (0, 1]")->capture_default_str();
    cmd->add_option("--curve", curve, "Sparsity curve parameters a,b,sr1,ps1");
    cmd->add_option("--out", config.out, "Output directory")->capture_default_str();
    if (with_stages) {
        cmd->add_option("--stages", config.stages, "Number of sampling stages N")->capture_default_str();
        cmd->add_option("--seed", config.seed, "Measurement matrix seed")->capture_default_str();
        cmd->add_option("--predictor", config.predictor, "Bounds predictor: oracle or energy")->capture_default_str();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Measurement-bounds-based adaptive sampling-rate allocation"};
    app.require_subcommand(1);

    RunConfig config;
    std::string curve;
    std::filesystem::path problem_path;
    std::optional<std::filesystem::path> solution_out;
    bool verify = false;

    auto* analyze = app.add_subcommand("analyze", "Per-block sparsity and measurement bounds");
    add_run_options(analyze, config, curve, false);
    auto* allocate = app.add_subcommand("allocate", "Single-stage bounds-proportional allocation");
    add_run_options(allocate, config, curve, false);
    allocate->add_flag("--uniform", config.uniform, "Split the budget evenly instead");
    auto* simulate = app.add_subcommand("simulate", "Multi-stage sampling with adjoint reconstruction");
    add_run_options(simulate, config, curve, true);
    auto* compare = app.add_subcommand("compare", "Uniform vs adaptive allocations on one image and operator");
    add_run_options(compare, config, curve, true);
    auto* solve = app.add_subcommand("solve", "Solve one KL allocation problem from JSON");
    solve->add_option("problem", problem_path, "Problem JSON file")->required();
    solve->add_flag("--verify", verify, "Check against the bisection oracle and the KKT residual");
    solve->add_option("--out", solution_out, "Also write the solution JSON here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInputError;
    }

    try {
        if (!curve.empty()) config.curve = parse_curve(curve);
        if (*analyze) return cmd_analyze(config);
        if (*allocate) return cmd_allocate(config);
        if (*simulate) return cmd_simulate(config);
        if (*compare) return cmd_compare(config);
        if (*solve) return cmd_solve(problem_path, verify, solution_out);
    } catch (const InfeasibleError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInfeasible;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}
