#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "rate_alloc/analysis.hpp"

namespace rate_alloc::cli {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kInputError = 2,
    kVerificationFailed = 3,
    kInfeasible = 4,
};

struct RunConfig {
    std::optional<std::filesystem::path> image;
    std::optional<std::string> synthetic;
    std::size_t block_size = 32;
    double rate = 0.1;
    std::size_t stages = 2;
    std::uint64_t seed = 1;
    std::string predictor = "oracle";
    CurveParams curve;
    std::filesystem::path out = ".";
    bool uniform = false;  // allocate: skip the bounds and split evenly
};

// "a,b,sr1,ps1"
CurveParams parse_curve(const std::string& text);

int cmd_analyze(const RunConfig& config);
int cmd_allocate(const RunConfig& config);
int cmd_simulate(const RunConfig& config);
int cmd_compare(const RunConfig& config);
int cmd_solve(const std::filesystem::path& problem_path, bool verify, const std::optional<std::filesystem::path>& out);

}  // namespace rate_alloc::cli
