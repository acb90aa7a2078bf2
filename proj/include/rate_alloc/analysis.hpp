#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rate_alloc/imaging.hpp"

namespace rate_alloc {

// Fitted sampling-rate -> sparsity-ratio curve:
//   p_s = b * ln(a * (s_r - s_r1) + 1) + p_s1
struct CurveParams {
    double a = 78.77;
    double b = 0.0444;
    double s_r1 = 0.01;
    double p_s1 = 0.005;

    // Throws InputError unless a, b > 0 and s_r1, p_s1 lie in (0, 1).
    void validate() const;
};

struct SparsityProfile {
    double threshold = 0.0;
    double overall_ratio = 0.0;
    std::vector<std::size_t> per_block_k;
};

struct BoundsProfile {
    std::vector<double> per_block_m;

    double total() const;
};

// Throws InputError when s_r < s_r1 or the curve value reaches 1.
double target_sparsity_ratio(double sampling_rate, const CurveParams& params);

// Fraction of coefficients with |f| > threshold over every block.
double sparsity_ratio(std::span<const CoeffBlock> blocks, double threshold);

// Exhaustive search over {0} and the distinct |f| values for the threshold whose
// sparsity ratio is closest to target_ps. Ties go to the smaller threshold.
double solve_threshold(std::span<const CoeffBlock> blocks, double target_ps);

std::size_t block_sparsity(const CoeffBlock& coeffs, double threshold);

// k log10(n / k), with k clamped to floor(n / e) so the result stays monotone in k.
double measurement_bounds(std::size_t k, std::size_t block_len);

SparsityProfile sparsity_profile(std::span<const CoeffBlock> blocks, double threshold);
BoundsProfile bounds_profile(std::span<const CoeffBlock> blocks, double threshold);

// Full single-image pipeline up to the bounds: partition, DCT, curve lookup,
// threshold search, per-block sparsity and bounds.
struct ImageAnalysis {
    BlockGrid grid;
    std::vector<CoeffBlock> coeffs;
    double target_ps = 0.0;
    SparsityProfile sparsity;
    BoundsProfile bounds;
};

ImageAnalysis analyze_image(const Image& image, std::size_t block_size, double sampling_rate,
                            const CurveParams& params);

}  // namespace rate_alloc
