#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "rate_alloc/allocation.hpp"
#include "rate_alloc/error.hpp"
#include "rate_alloc/synthetic.hpp"
#include "test_support.hpp"

using namespace rate_alloc;

namespace {

std::int64_t total(const std::vector<std::int64_t>& v) { return std::accumulate(v.begin(), v.end(), std::int64_t{0}); }

// Real-valued target after capping: capped entries sit at their cap and the
// rest of the budget is spread over the others in proportion to their shares.
std::vector<double> capped_target(const std::vector<double>& shares, std::int64_t budget,
                                  const std::vector<std::int64_t>& caps) {
    const std::size_t n = shares.size();
    std::vector<bool> fixed(n, false);
    std::vector<double> x(n);
    for (;;) {
        double remaining = static_cast<double>(budget), weight = 0.0;
        std::size_t free_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (fixed[i]) {
                remaining -= static_cast<double>(caps[i]);
            } else {
                weight += shares[i];
                ++free_count;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (fixed[i]) {
                x[i] = static_cast<double>(caps[i]);
            } else {
                x[i] = weight > 0.0 ? remaining * shares[i] / weight : remaining / static_cast<double>(free_count);
            }
        }
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (!fixed[i] && x[i] >= static_cast<double>(caps[i])) {
                fixed[i] = true;
                changed = true;
            }
        }
        if (!changed) return x;
    }
}

// Smallest achievable max |M_i - x_i| over all integer vectors with the given
// sum and 0 <= M_i <= cap_i, by enumeration.
double best_max_deviation(const std::vector<double>& x, std::int64_t budget, const std::vector<std::int64_t>& caps) {
    const std::size_t n = x.size();
    std::vector<std::int64_t> m(n, 0);
    double best = 1e300;
    std::function<void(std::size_t, std::int64_t, double)> rec = [&](std::size_t i, std::int64_t left, double worst) {
        if (worst >= best) return;
        if (i == n) {
            if (left == 0) best = worst;
            return;
        }
        for (std::int64_t v = 0; v <= std::min(caps[i], left); ++v) {
            rec(i + 1, left - v, std::max(worst, std::abs(static_cast<double>(v) - x[i])));
        }
    };
    rec(0, budget, 0.0);
    return best;
}

double max_deviation(const std::vector<std::int64_t>& m, const std::vector<double>& x) {
    double w = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) w = std::max(w, std::abs(static_cast<double>(m[i]) - x[i]));
    return w;
}

}  // namespace

TEST_CASE("measurement budget rounds half away from zero") {
    CHECK(measurement_budget(0.1, 96 * 96) == 922);
    CHECK(measurement_budget(0.5, 3) == 2);
    CHECK(measurement_budget(1.0, 1024) == 1024);
    CHECK(measurement_budget(0.0, 1024) == 0);
}

TEST_CASE("proportional shares") {
    const auto eq = proportional_shares(BoundsProfile{{3, 3, 3, 3}}, 100);
    for (double s : eq) CHECK(s == doctest::Approx(25.0));
    const auto two = proportional_shares(BoundsProfile{{2, 1, 1}}, 8);
    CHECK(two[0] == doctest::Approx(4.0));
    CHECK(two[1] == doctest::Approx(2.0));
    CHECK(two[2] == doctest::Approx(2.0));
    const auto zero = proportional_shares(BoundsProfile{{0, 0, 0}}, 9);
    for (double s : zero) CHECK(s == 3.0);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 200.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> m(1 + trial);
        for (double& x : m) x = u(rng);
        const auto s = proportional_shares(BoundsProfile{m}, 12345);
        CHECK(std::accumulate(s.begin(), s.end(), 0.0) == doctest::Approx(12345.0).epsilon(1e-13));
    }
}

TEST_CASE("apportion examples") {
    CHECK(apportion(std::vector<double>{2.5, 2.5, 3.0}, 8, 1024) == std::vector<std::int64_t>{3, 2, 3});
    CHECK(apportion(std::vector<double>{4, 0, 7, 1}, 12, 1024) == std::vector<std::int64_t>{4, 0, 7, 1});
    // surplus 6 from the capped entry is split 2:16, i.e. 0.667 and 5.333
    const std::vector<double> shares = {1030, 2, 16};
    const auto capped = apportion(shares, 1048, 1024);
    CHECK(capped == std::vector<std::int64_t>{1024, 3, 21});
    const std::vector<std::int64_t> caps(3, 1024);
    const auto target = capped_target(shares, 1048, caps);
    CHECK(max_deviation(capped, target) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("apportion rejects infeasible and malformed input") {
    CHECK_THROWS_AS(apportion(std::vector<double>{5, 5}, 11, 5), InfeasibleError);
    CHECK_THROWS_AS(apportion(std::vector<double>{5, 5}, -1, 5), InputError);
    CHECK_NOTHROW(apportion(std::vector<double>{5, 5}, 10, 5));
    CHECK(apportion(std::vector<double>{0, 0}, 0, 5) == std::vector<std::int64_t>{0, 0});
}

TEST_CASE("apportion is close to the best achievable max deviation") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 400; ++trial) {
        const std::size_t n = 1 + trial % 5;
        std::vector<std::int64_t> caps(n);
        for (auto& c : caps) c = std::uniform_int_distribution<std::int64_t>(0, 7)(rng);
        const std::int64_t capacity = total(caps);
        const std::int64_t budget = std::uniform_int_distribution<std::int64_t>(0, capacity)(rng);
        std::vector<double> shares(n);
        double s = 0.0;
        for (double& x : shares) {
            x = u(rng) < 0.15 ? 0.0 : u(rng);
            s += x;
        }
        for (double& x : shares) x = s > 0.0 ? x * static_cast<double>(budget) / s : 0.0;

        const auto m = apportion(shares, budget, caps);
        CHECK(total(m) == budget);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(m[i] >= 0);
            CHECK(m[i] <= caps[i]);
        }
        const auto target = capped_target(shares, budget, caps);
        const double best = best_max_deviation(target, budget, caps);
        bool binding = false;
        for (std::size_t i = 0; i < n; ++i) binding = binding || shares[i] > static_cast<double>(caps[i]);
        if (binding) {
            // Rounding happens before capping, so a capped entry can shed one
            // unit more or less than its real-valued surplus.
            CHECK(max_deviation(m, target) <= best + 1.0 + 1e-9);
        } else {
            CHECK(max_deviation(m, target) <= best + 1e-9);
        }
    }
}

TEST_CASE("uniform counts") {
    const auto c = uniform_counts(9, 1024, 0.1, 922);
    CHECK(total(c) == 922);
    for (std::size_t i = 0; i < 9; ++i) CHECK((c[i] == 102 || c[i] == 103));
    CHECK(c[0] == 103);
    CHECK(c[8] == 102);
    const auto full = uniform_counts(4, 16, 1.0, 64);
    for (auto x : full) CHECK(x == 16);
}

TEST_CASE("single-stage plan on the checkerboard synthetic") {
    const Image img = synthetic_image(SyntheticKind::checkerboard);
    const AllocationPlan plan = single_stage_plan(img, 32, 0.1, CurveParams{});
    CHECK(plan.total_budget == 922);
    CHECK(total(plan.per_block_M) == 922);
    CHECK(plan.grid_rows == 3);
    CHECK(plan.grid_cols == 3);
    for (std::size_t i = 0; i < 9; ++i) {
        if (i != 4) CHECK(plan.per_block_M[4] > plan.per_block_M[i]);
        CHECK(plan.per_block_rate[i] == static_cast<double>(plan.per_block_M[i]) / 1024.0);
    }
    CHECK(plan.implied_eta == doctest::Approx(922.0 / 921.6));
}

TEST_CASE("identical blocks get equal budgets up to one unit") {
    std::mt19937_64 rng(3);
    const Image tile = rate_alloc::testing::random_image(rng, 16, 16);
    std::vector<double> px(64 * 48);
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 48; ++c) px[r * 48 + c] = tile.at(r % 16, c % 16);
    const AllocationPlan plan = single_stage_plan(Image(64, 48, px), 16, 0.3, CurveParams{});
    const auto [lo, hi] = std::minmax_element(plan.per_block_M.begin(), plan.per_block_M.end());
    CHECK(*hi - *lo <= 1);
    CHECK(total(plan.per_block_M) == measurement_budget(0.3, 64 * 48));
}

TEST_CASE("conservation, caps and fairness over images and rates") {
    std::mt19937_64 rng(4);
    std::vector<Image> images = {synthetic_image(SyntheticKind::checkerboard), synthetic_image(SyntheticKind::flat),
                                 synthetic_image(SyntheticKind::gradient),
                                 rate_alloc::testing::random_image(rng, 70, 45)};
    for (const Image& img : images) {
        for (std::size_t b : {8u, 16u, 32u}) {
            for (double rate : {0.01, 0.04, 0.1, 0.25, 0.3, 0.4, 0.5, 1.0}) {
                const AllocationPlan plan = single_stage_plan(img, b, rate, CurveParams{});
                const auto len = static_cast<std::int64_t>(b * b);
                CHECK(total(plan.per_block_M) == measurement_budget(rate, plan.padded_pixels()));
                for (std::size_t i = 0; i < plan.per_block_M.size(); ++i) {
                    CHECK(plan.per_block_M[i] >= 0);
                    CHECK(plan.per_block_M[i] <= len);
                    if (rate == 1.0) CHECK(plan.per_block_M[i] == len);
                    for (std::size_t j = 0; j < plan.per_block_M.size(); ++j) {
                        if (plan.bounds.per_block_m[i] >= plan.bounds.per_block_m[j])
                            CHECK(plan.per_block_M[i] >= plan.per_block_M[j] - 1);
                    }
                }
                const AllocationPlan uni = uniform_plan(img, b, rate);
                CHECK(total(uni.per_block_M) == plan.total_budget);
            }
        }
    }
}

TEST_CASE("plans are deterministic") {
    std::mt19937_64 rng(5);
    const Image img = rate_alloc::testing::random_image(rng, 50, 50);
    const AllocationPlan a = single_stage_plan(img, 16, 0.25, CurveParams{});
    const AllocationPlan b = single_stage_plan(img, 16, 0.25, CurveParams{});
    CHECK(a.per_block_M == b.per_block_M);
    CHECK(a.threshold == b.threshold);
    CHECK(a.bounds.per_block_m == b.bounds.per_block_m);
}

TEST_CASE("plan rejects bad rates") {
    const Image img = synthetic_image(SyntheticKind::flat);
    CHECK_THROWS_AS(single_stage_plan(img, 32, 0.0, CurveParams{}), InputError);
    CHECK_THROWS_AS(single_stage_plan(img, 32, 1.5, CurveParams{}), InputError);
    CHECK_THROWS_AS(uniform_plan(img, 32, -0.1), InputError);
}
