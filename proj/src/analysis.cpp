#include "rate_alloc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rate_alloc/error.hpp"
#include "rate_alloc/parallel.hpp"

namespace rate_alloc {

void CurveParams::validate() const {
    if (!(a > 0.0) || !(b > 0.0) || !(s_r1 > 0.0 && s_r1 < 1.0) || !(p_s1 > 0.0 && p_s1 < 1.0)) {
        throw InputError("curve parameters need a > 0, b > 0 and s_r1, p_s1 in (0, 1)");
    }
}

double BoundsProfile::total() const {
    double s = 0.0;
    for (double m : per_block_m) s += m;
    return s;
}

double target_sparsity_ratio(double sampling_rate, const CurveParams& params) {
    params.validate();
    if (!(sampling_rate >= params.s_r1)) {
        throw InputError("sampling rate " + std::to_string(sampling_rate) +
                         " is below the curve anchor " + std::to_string(params.s_r1));
    }
    const double ps = params.b * std::log(params.a * (sampling_rate - params.s_r1) + 1.0) + params.p_s1;
    if (!(ps < 1.0)) {
        throw InputError("target sparsity ratio " + std::to_string(ps) + " is not below 1");
    }
    return ps;
}

namespace {

std::size_t coefficient_count(std::span<const CoeffBlock> blocks) {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.coefficients.size();
    return n;
}

}  // namespace

std::size_t block_sparsity(const CoeffBlock& coeffs, double threshold) {
    return static_cast<std::size_t>(std::count_if(coeffs.coefficients.begin(), coeffs.coefficients.end(),
                                                  [threshold](double f) { return std::abs(f) > threshold; }));
}

double sparsity_ratio(std::span<const CoeffBlock> blocks, double threshold) {
    const std::size_t total = coefficient_count(blocks);
    if (total == 0) return 0.0;
    std::size_t above = 0;
    for (const auto& b : blocks) above += block_sparsity(b, threshold);
    return static_cast<double>(above) / static_cast<double>(total);
}

double solve_threshold(std::span<const CoeffBlock> blocks, double target_ps) {
    if (!(target_ps > 0.0 && target_ps <= 1.0)) {
        throw InputError("target sparsity ratio must lie in (0, 1]");
    }
    std::vector<double> mags;
    mags.reserve(coefficient_count(blocks));
    for (const auto& b : blocks) {
        for (double f : b.coefficients) mags.push_back(std::abs(f));
    }
    if (mags.empty()) {
        throw InputError("threshold search needs at least one coefficient");
    }
    std::sort(mags.begin(), mags.end());
    const double total = static_cast<double>(mags.size());

    // Candidates in increasing order; count(|f| > T) = total - upper_bound(T).
    double best_t = 0.0;
    double best_dist = std::abs(static_cast<double>(mags.end() - std::upper_bound(mags.begin(), mags.end(), 0.0)) /
                                    total - target_ps);
    for (auto it = mags.begin(); it != mags.end();) {
        const double t = *it;
        auto next = std::upper_bound(it, mags.end(), t);
        if (t > 0.0) {
            const double ratio = static_cast<double>(mags.end() - next) / total;
            const double dist = std::abs(ratio - target_ps);
            if (dist < best_dist) {
                best_dist = dist;
                best_t = t;
            }
        }
        it = next;
    }
    return best_t;
}

double measurement_bounds(std::size_t k, std::size_t block_len) {
    if (k == 0 || block_len == 0) return 0.0;
    const auto peak = static_cast<std::size_t>(std::floor(static_cast<double>(block_len) / std::numbers::e));
    const std::size_t k_eff = std::max<std::size_t>(1, std::min(k, peak));
    const double kd = static_cast<double>(k_eff);
    return kd * std::log10(static_cast<double>(block_len) / kd);
}

SparsityProfile sparsity_profile(std::span<const CoeffBlock> blocks, double threshold) {
    SparsityProfile profile;
    profile.threshold = threshold;
    profile.per_block_k.resize(blocks.size());
    parallel_for(blocks.size(), [&](std::size_t i) { profile.per_block_k[i] = block_sparsity(blocks[i], threshold); });
    std::size_t above = 0;
    for (std::size_t k : profile.per_block_k) above += k;
    const std::size_t total = coefficient_count(blocks);
    profile.overall_ratio = total == 0 ? 0.0 : static_cast<double>(above) / static_cast<double>(total);
    return profile;
}

BoundsProfile bounds_profile(std::span<const CoeffBlock> blocks, double threshold) {
    BoundsProfile bounds;
    bounds.per_block_m.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        bounds.per_block_m[i] = measurement_bounds(block_sparsity(blocks[i], threshold), blocks[i].coefficients.size());
    }
    return bounds;
}

ImageAnalysis analyze_image(const Image& image, std::size_t block_size, double sampling_rate,
                            const CurveParams& params) {
    ImageAnalysis out;
    out.grid = partition(image, block_size);
    out.coeffs.resize(out.grid.block_count());
    parallel_for(out.coeffs.size(), [&](std::size_t i) { out.coeffs[i] = dct2(out.grid.blocks[i]); });
    out.target_ps = target_sparsity_ratio(sampling_rate, params);
    const double threshold = solve_threshold(out.coeffs, out.target_ps);
    out.sparsity = sparsity_profile(out.coeffs, threshold);
    out.bounds = bounds_profile(out.coeffs, threshold);
    return out;
}

}  // namespace rate_alloc
