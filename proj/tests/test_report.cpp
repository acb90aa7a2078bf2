#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "rate_alloc/allocation.hpp"
#include "rate_alloc/error.hpp"
#include "rate_alloc/kl_solver.hpp"
#include "rate_alloc/multistage.hpp"
#include "rate_alloc/parallel.hpp"
#include "rate_alloc/report.hpp"
#include "rate_alloc/synthetic.hpp"
#include "test_support.hpp"

using namespace rate_alloc;
using nlohmann::json;

TEST_CASE("CSV heatmaps") {
    const std::vector<std::int64_t> m = {1, 894, 3, 4, 5, 6};
    CHECK(csv_grid(std::span<const std::int64_t>(m), 2, 3) == "1,894,3\n4,5,6\n");
    const std::vector<std::size_t> k = {0, 7};
    CHECK(csv_grid(std::span<const std::size_t>(k), 1, 2) == "0,7\n");
    const std::vector<double> b = {3.0102999566, 163.6048, 0.0, 1e-9};
    CHECK(csv_grid(std::span<const double>(b), 2, 2) == "3.0103,163.605\n0,1e-09\n");
    CHECK_THROWS_AS(csv_grid(std::span<const std::int64_t>(m), 2, 2), InputError);
}

TEST_CASE("problem JSON round trips at full precision") {
    rate_alloc::testing::ProblemGenerator gen(1);
    for (int trial = 0; trial < 20; ++trial) {
        const KlAllocProblem pr = gen.next(1 + gen.pick(20));
        const json original = to_json(pr);
        const json j = json::parse(original.dump());
        CHECK(j == original);
        const KlAllocProblem back = problem_from_json(j);
        CHECK(std::vector<double>(back.a().begin(), back.a().end()) ==
              std::vector<double>(pr.a().begin(), pr.a().end()));
        CHECK(back.alpha() == pr.alpha());
        // the constructor renormalizes p and r, which may move the last bit
        CHECK(rate_alloc::testing::max_abs_diff(solve(back).q, solve(pr).q) <= 1e-14);
    }
}

TEST_CASE("problem JSON validation") {
    CHECK_THROWS_AS(problem_from_json(json::array()), InputError);
    CHECK_THROWS_AS(problem_from_json(json{{"p", {1}}, {"r", {1}}, {"a", {1}}}), InputError);
    CHECK_THROWS_AS(problem_from_json(json{{"p", {"x"}}, {"r", {1}}, {"alpha", 0.5}, {"a", {1}}}), InputError);
    CHECK_THROWS_AS(problem_from_json(json{{"p", {1}}, {"alpha", 0.5}, {"a", {1}}}), InputError);
    CHECK_NOTHROW(problem_from_json(json{{"p", {1}}, {"r", {1}}, {"alpha", 0.5}, {"a", {1}}}));
}

TEST_CASE("solution JSON fields") {
    const KlAllocProblem pr({0.6, 0.3, 0.1}, {1, 1, 1}, 0.5, {0.5, 1, 1});
    const KlAllocSolution sol = solve(pr);
    const json j = to_json(sol);
    CHECK(j.at("q").get<std::vector<double>>() == sol.q);
    CHECK(j.at("mu").get<double>() == sol.mu_star);
    CHECK(j.at("status") == "converged-by-newton");
    CHECK(j.at("iterations").get<std::size_t>() == sol.iterations());
    CHECK(json::parse(j.dump()).at("mu").get<double>() == sol.mu_star);
}

TEST_CASE("plan JSON carries the per-block budgets") {
    const Image img = synthetic_image(SyntheticKind::checkerboard);
    const AllocationPlan plan = single_stage_plan(img, 32, 0.1, CurveParams{});
    const json j = to_json(plan);
    CHECK(j.at("M").get<std::vector<std::int64_t>>() == plan.per_block_M);
    CHECK(j.at("budget") == 922);
    CHECK(j.at("implied_eta").get<double>() == plan.implied_eta);
    CHECK(j.at("threshold").get<double>() == plan.threshold);
}

TEST_CASE("atomic writes replace the target") {
    const auto path = std::filesystem::temp_directory_path() / "rate_alloc_test_atomic.txt";
    write_file_atomic(path, "first");
    write_file_atomic(path, "second");
    CHECK(read_file(path) == "second");
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    CHECK_FALSE(std::filesystem::exists(tmp));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_file(path), InputError);
}

TEST_CASE("parallel_for visits every index and rethrows") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(50, [](std::size_t i) {
                        if (i == 17) throw InputError("boom");
                    }),
                    InputError);
    CHECK(worker_count() >= 1);
}

TEST_CASE("synthetic images") {
    const Image flat = synthetic_image(SyntheticKind::flat);
    for (double v : flat.pixels()) CHECK(v == 0.2);
    const Image board = synthetic_image(SyntheticKind::checkerboard);
    CHECK(board.at(0, 0) == 0.2);
    CHECK(board.at(32, 32) != board.at(32, 35));
    const Image grad = synthetic_image(SyntheticKind::gradient);
    CHECK(grad.at(10, 0) == 0.0);
    CHECK(grad.at(10, 95) == 1.0);
    CHECK(parse_synthetic_kind("checkerboard") == SyntheticKind::checkerboard);
    CHECK(to_string(SyntheticKind::gradient) == "gradient");
    CHECK_THROWS_AS(parse_synthetic_kind("noise"), InputError);
}
