#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rate_alloc/analysis.hpp"
#include "rate_alloc/imaging.hpp"

namespace rate_alloc {

struct AllocationPlan {
    std::size_t block_size = 0;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::size_t height = 0;  // original image size
    std::size_t width = 0;
    double rate = 0.0;
    std::int64_t total_budget = 0;
    std::vector<std::int64_t> per_block_M;
    std::vector<double> per_block_rate;  // M_i / B^2
    double threshold = 0.0;
    BoundsProfile bounds;
    // total_budget / (rate * padded pixels): how far exact rounding moved the total.
    double implied_eta = 1.0;

    std::size_t padded_pixels() const noexcept { return grid_rows * grid_cols * block_size * block_size; }
};

// round(rate * pixels), half away from zero.
std::int64_t measurement_budget(double rate, std::size_t pixels);

// budget * m_i / sum(m); uniform when every bound is zero.
std::vector<double> proportional_shares(const BoundsProfile& bounds, std::int64_t budget);

// Largest-remainder rounding of real shares onto integers summing to budget,
// followed by cap enforcement: over-cap entries are clamped and their surplus is
// re-apportioned over the remaining entries in proportion to their shares, until
// nothing exceeds its cap. Remainder ties go to the lower index.
// Throws InfeasibleError when budget exceeds the sum of caps.
std::vector<std::int64_t> apportion(std::span<const double> shares, std::int64_t budget,
                                    std::span<const std::int64_t> caps);
std::vector<std::int64_t> apportion(std::span<const double> shares, std::int64_t budget, std::int64_t cap);

// Rate-fixed split: every block starts at floor(rate * block_len) and the rest of
// the budget is topped up evenly by apportion, extra units going to the lowest
// indices.
std::vector<std::int64_t> uniform_counts(std::size_t blocks, std::size_t block_len, double rate,
                                         std::int64_t budget);

// Bounds-proportional plan at overall rate s_r (0 < s_r <= 1).
AllocationPlan single_stage_plan(const Image& image, std::size_t block_size, double rate, const CurveParams& curve);
AllocationPlan single_stage_plan(const ImageAnalysis& analysis, std::size_t height, std::size_t width, double rate);

// Same budget split evenly across blocks.
AllocationPlan uniform_plan(const Image& image, std::size_t block_size, double rate);

}  // namespace rate_alloc
