#include "rate_alloc/report.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "rate_alloc/allocation.hpp"
#include "rate_alloc/analysis.hpp"
#include "rate_alloc/error.hpp"
#include "rate_alloc/kl_solver.hpp"
#include "rate_alloc/multistage.hpp"

namespace rate_alloc {

using nlohmann::json;

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw InputError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw InputError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

template <typename T, typename Fmt>
std::string grid_text(std::span<const T> values, std::size_t rows, std::size_t cols, Fmt fmt) {
    if (values.size() != rows * cols) throw InputError("heatmap size does not match the grid");
    std::string out;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c) out += ',';
            out += fmt(values[r * cols + c]);
        }
        out += '\n';
    }
    return out;
}

std::string six_digits(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<double> number_array(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array()) {
        throw InputError(std::string("problem JSON needs an array '") + key + "'");
    }
    std::vector<double> out;
    for (const auto& v : j.at(key)) {
        if (!v.is_number()) throw InputError(std::string("non-numeric entry in '") + key + "'");
        out.push_back(v.get<double>());
    }
    return out;
}

json solution_trace(const KlAllocSolution& s) {
    json trace = json::array();
    for (const auto& e : s.trace) trace.push_back({{"mu", e.mu}, {"kind", to_string(e.kind)}});
    return trace;
}

}  // namespace

std::string csv_grid(std::span<const std::int64_t> values, std::size_t rows, std::size_t cols) {
    return grid_text(values, rows, cols, [](std::int64_t v) { return std::to_string(v); });
}

std::string csv_grid(std::span<const std::size_t> values, std::size_t rows, std::size_t cols) {
    return grid_text(values, rows, cols, [](std::size_t v) { return std::to_string(v); });
}

std::string csv_grid(std::span<const double> values, std::size_t rows, std::size_t cols) {
    return grid_text(values, rows, cols, six_digits);
}

KlAllocProblem problem_from_json(const json& j) {
    if (!j.is_object()) throw InputError("problem JSON must be an object");
    if (!j.contains("alpha") || !j.at("alpha").is_number()) throw InputError("problem JSON needs a number 'alpha'");
    return KlAllocProblem(number_array(j, "p"), number_array(j, "r"), j.at("alpha").get<double>(),
                          number_array(j, "a"));
}

json to_json(const KlAllocProblem& problem) {
    return {{"p", std::vector<double>(problem.p().begin(), problem.p().end())},
            {"r", std::vector<double>(problem.r().begin(), problem.r().end())},
            {"alpha", problem.alpha()},
            {"a", std::vector<double>(problem.a().begin(), problem.a().end())}};
}

json to_json(const KlAllocSolution& solution) {
    return {{"q", solution.q},
            {"mu", solution.mu_star},
            {"status", to_string(solution.status)},
            {"iterations", solution.iterations()}};
}

json to_json(const AllocationPlan& plan) {
    return {{"block_size", plan.block_size},
            {"grid", {{"rows", plan.grid_rows}, {"cols", plan.grid_cols}}},
            {"image", {{"height", plan.height}, {"width", plan.width}}},
            {"rate", plan.rate},
            {"budget", plan.total_budget},
            {"threshold", plan.threshold},
            {"implied_eta", plan.implied_eta},
            {"bounds", plan.bounds.per_block_m},
            {"M", plan.per_block_M}};
}

json to_json(const MultiStagePlan& plan) {
    json stages = json::array();
    for (const auto& st : plan.stages) {
        json s = {{"stage", st.stage_index},
                  {"rate", st.stage_rate},
                  {"budget", st.stage_budget},
                  {"skipped", st.skipped},
                  {"alpha", st.alpha},
                  {"beta", st.beta},
                  {"M", st.stage_M},
                  {"cumulative_M", st.cumulative_M}};
        if (!st.predicted_bounds.empty()) s["predicted_bounds"] = st.predicted_bounds;
        if (st.solution) {
            s["solver"] = to_json(*st.solution);
            s["solver"]["trace"] = solution_trace(*st.solution);
        }
        if (st.diagnostic) {
            s["diagnostic"] = {{"cross_entropy", st.diagnostic->cross_entropy}, {"kl", st.diagnostic->kl}};
        }
        stages.push_back(std::move(s));
    }
    json out = {{"block_size", plan.block_size},
                {"grid", {{"rows", plan.grid_rows}, {"cols", plan.grid_cols}}},
                {"image", {{"height", plan.height}, {"width", plan.width}}},
                {"rate", plan.rate},
                {"stages", plan.stage_count},
                {"predictor", plan.predictor},
                {"total_measurements", plan.total_measurements()},
                {"final_M", plan.final_M},
                {"stage_detail", std::move(stages)}};
    if (!plan.true_bounds.empty()) out["true_bounds"] = plan.true_bounds;
    if (plan.aggregate_cross_entropy) out["aggregate_cross_entropy"] = *plan.aggregate_cross_entropy;
    return out;
}

json analysis_summary(const ImageAnalysis& analysis) {
    return {{"block_size", analysis.grid.block_size},
            {"grid", {{"rows", analysis.grid.rows}, {"cols", analysis.grid.cols}}},
            {"threshold", analysis.sparsity.threshold},
            {"target_ps", analysis.target_ps},
            {"ps", analysis.sparsity.overall_ratio},
            {"sum_bounds", analysis.bounds.total()}};
}

}  // namespace rate_alloc
