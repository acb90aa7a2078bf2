#include "rate_alloc/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rate_alloc/error.hpp"

namespace rate_alloc {

std::int64_t measurement_budget(double rate, std::size_t pixels) {
    return std::llround(rate * static_cast<double>(pixels));
}

std::vector<double> proportional_shares(const BoundsProfile& bounds, std::int64_t budget) {
    const auto& m = bounds.per_block_m;
    std::vector<double> shares(m.size(), 0.0);
    if (m.empty()) return shares;
    const double total = bounds.total();
    const double b = static_cast<double>(budget);
    for (std::size_t i = 0; i < m.size(); ++i) {
        shares[i] = total > 0.0 ? b * m[i] / total : b / static_cast<double>(m.size());
    }
    return shares;
}

namespace {

// Largest-remainder rounding over the indices in `who`; entries outside stay 0.
std::vector<std::int64_t> largest_remainder(std::span<const double> shares, std::int64_t budget,
                                            const std::vector<std::size_t>& who) {
    std::vector<std::int64_t> out(shares.size(), 0);
    if (who.empty()) return out;
    std::vector<double> frac(shares.size(), 0.0);
    std::int64_t assigned = 0;
    for (std::size_t i : who) {
        const double s = std::max(shares[i], 0.0);
        const double f = std::floor(s);
        out[i] = static_cast<std::int64_t>(f);
        frac[i] = s - f;
        assigned += out[i];
    }
    std::vector<std::size_t> order(who);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return frac[x] > frac[y]; });

    std::int64_t deficit = budget - assigned;
    while (deficit > 0) {
        for (std::size_t i : order) {
            if (deficit == 0) break;
            ++out[i];
            --deficit;
        }
    }
    // Shares overshooting the budget (rounding noise): take back from the smallest remainders.
    while (deficit < 0) {
        bool changed = false;
        for (auto it = order.rbegin(); it != order.rend() && deficit < 0; ++it) {
            if (out[*it] > 0) {
                --out[*it];
                ++deficit;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return out;
}

}  // namespace

std::vector<std::int64_t> apportion(std::span<const double> shares, std::int64_t budget,
                                    std::span<const std::int64_t> caps) {
    const std::size_t n = shares.size();
    if (caps.size() != n) throw InputError("apportion: caps and shares differ in length");
    if (budget < 0) throw InputError("apportion: negative budget");
    std::int64_t capacity = 0;
    for (auto c : caps) {
        if (c < 0) throw InputError("apportion: negative cap");
        capacity += c;
    }
    if (budget > capacity) {
        throw InfeasibleError("budget " + std::to_string(budget) + " exceeds total capacity " +
                              std::to_string(capacity));
    }

    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::int64_t> counts = largest_remainder(shares, budget, all);

    std::vector<bool> closed(n, false);
    for (;;) {
        std::int64_t surplus = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (counts[i] >= caps[i]) {
                surplus += counts[i] - caps[i];
                counts[i] = caps[i];
                closed[i] = true;
            }
        }
        if (surplus == 0) break;

        std::vector<std::size_t> open;
        double weight = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!closed[i]) {
                open.push_back(i);
                weight += std::max(shares[i], 0.0);
            }
        }
        // Non-empty: the capacity check above leaves room somewhere.
        std::vector<double> extra(n, 0.0);
        for (std::size_t i : open) {
            extra[i] = weight > 0.0 ? static_cast<double>(surplus) * std::max(shares[i], 0.0) / weight
                                    : static_cast<double>(surplus) / static_cast<double>(open.size());
        }
        const auto add = largest_remainder(extra, surplus, open);
        for (std::size_t i : open) counts[i] += add[i];
    }
    return counts;
}

std::vector<std::int64_t> apportion(std::span<const double> shares, std::int64_t budget, std::int64_t cap) {
    const std::vector<std::int64_t> caps(shares.size(), cap);
    return apportion(shares, budget, caps);
}

std::vector<std::int64_t> uniform_counts(std::size_t blocks, std::size_t block_len, double rate,
                                         std::int64_t budget) {
    if (blocks == 0) return {};
    const auto n = static_cast<std::int64_t>(blocks);
    const auto len = static_cast<std::int64_t>(block_len);
    auto base = static_cast<std::int64_t>(std::floor(rate * static_cast<double>(block_len)));
    base = std::clamp<std::int64_t>(base, 0, std::min(len, budget / n));

    const std::int64_t rest = budget - base * n;
    const std::vector<double> shares(blocks, static_cast<double>(rest) / static_cast<double>(n));
    auto counts = apportion(shares, rest, len - base);
    for (auto& c : counts) c += base;
    return counts;
}

namespace {

AllocationPlan plan_shell(const BlockGrid& grid, std::size_t height, std::size_t width, double rate) {
    if (!(rate > 0.0 && rate <= 1.0)) {
        throw InputError("sampling rate must lie in (0, 1], got " + std::to_string(rate));
    }
    AllocationPlan plan;
    plan.block_size = grid.block_size;
    plan.grid_rows = grid.rows;
    plan.grid_cols = grid.cols;
    plan.height = height;
    plan.width = width;
    plan.rate = rate;
    plan.total_budget = measurement_budget(rate, grid.padded_pixels());
    plan.implied_eta = static_cast<double>(plan.total_budget) / (rate * static_cast<double>(grid.padded_pixels()));
    return plan;
}

void fill_rates(AllocationPlan& plan) {
    const double len = static_cast<double>(plan.block_size * plan.block_size);
    plan.per_block_rate.resize(plan.per_block_M.size());
    for (std::size_t i = 0; i < plan.per_block_M.size(); ++i) {
        plan.per_block_rate[i] = static_cast<double>(plan.per_block_M[i]) / len;
    }
}

}  // namespace

AllocationPlan single_stage_plan(const ImageAnalysis& analysis, std::size_t height, std::size_t width, double rate) {
    AllocationPlan plan = plan_shell(analysis.grid, height, width, rate);
    plan.threshold = analysis.sparsity.threshold;
    plan.bounds = analysis.bounds;
    const auto shares = proportional_shares(analysis.bounds, plan.total_budget);
    const auto cap = static_cast<std::int64_t>(plan.block_size * plan.block_size);
    plan.per_block_M = apportion(shares, plan.total_budget, cap);
    fill_rates(plan);
    return plan;
}

AllocationPlan single_stage_plan(const Image& image, std::size_t block_size, double rate, const CurveParams& curve) {
    if (!(rate > 0.0 && rate <= 1.0)) {
        throw InputError("sampling rate must lie in (0, 1], got " + std::to_string(rate));
    }
    const ImageAnalysis analysis = analyze_image(image, block_size, rate, curve);
    return single_stage_plan(analysis, image.height(), image.width(), rate);
}

AllocationPlan uniform_plan(const Image& image, std::size_t block_size, double rate) {
    const BlockGrid grid = partition(image, block_size);
    AllocationPlan plan = plan_shell(grid, image.height(), image.width(), rate);
    plan.bounds.per_block_m.assign(grid.block_count(), 1.0);
    plan.per_block_M = uniform_counts(grid.block_count(), block_size * block_size, rate, plan.total_budget);
    fill_rates(plan);
    return plan;
}

}  // namespace rate_alloc
