#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "json.hpp"

namespace rate_alloc {

struct AllocationPlan;
struct MultiStagePlan;
struct KlAllocSolution;
class KlAllocProblem;
struct ImageAnalysis;

// Writes to a sibling temporary file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// Heatmaps, one grid row per line. Integers verbatim, reals with 6 significant digits.
std::string csv_grid(std::span<const std::int64_t> values, std::size_t rows, std::size_t cols);
std::string csv_grid(std::span<const std::size_t> values, std::size_t rows, std::size_t cols);
std::string csv_grid(std::span<const double> values, std::size_t rows, std::size_t cols);

// {"p": [...], "r": [...], "alpha": x, "a": [...]}
KlAllocProblem problem_from_json(const nlohmann::json& j);
nlohmann::json to_json(const KlAllocProblem& problem);
// {"q": [...], "mu": x, "status": "...", "iterations": k}
nlohmann::json to_json(const KlAllocSolution& solution);

nlohmann::json to_json(const AllocationPlan& plan);
nlohmann::json to_json(const MultiStagePlan& plan);
nlohmann::json analysis_summary(const ImageAnalysis& analysis);

}  // namespace rate_alloc
