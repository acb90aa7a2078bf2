#include "rate_alloc/multistage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rate_alloc/error.hpp"
#include "rate_alloc/parallel.hpp"

namespace rate_alloc {

// ---------------------------------------------------------------------------
// Predictors

double predict_bounds_oracle(const CoeffBlock& coeffs, double threshold) {
    return measurement_bounds(block_sparsity(coeffs, threshold), coeffs.coefficients.size());
}

double predict_bounds_energy(std::span<const double> padded_measurements, std::size_t measured) {
    const std::size_t end = std::min(measured, padded_measurements.size());
    if (end < 2) return kPredictorFloor;
    const auto values = padded_measurements.subspan(1, end - 1);
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::max(std::sqrt(ss / n), kPredictorFloor);
}

OracleBoundsPredictor::OracleBoundsPredictor(std::vector<CoeffBlock> coeffs, double threshold)
    : coeffs_(std::move(coeffs)), threshold_(threshold) {}

double OracleBoundsPredictor::predict(std::span<const double>, const PredictionContext& ctx) const {
    if (ctx.block_index >= coeffs_.size()) {
        throw InputError("oracle predictor has no block " + std::to_string(ctx.block_index));
    }
    return predict_bounds_oracle(coeffs_[ctx.block_index], threshold_);
}

double EnergyBoundsPredictor::predict(std::span<const double> padded_measurements,
                                      const PredictionContext& ctx) const {
    return predict_bounds_energy(padded_measurements, ctx.measured);
}

std::unique_ptr<BoundsPredictor> make_predictor(const std::string& name, const ImageAnalysis& analysis) {
    if (name == "oracle") {
        return std::make_unique<OracleBoundsPredictor>(analysis.coeffs, analysis.sparsity.threshold);
    }
    if (name == "energy") return std::make_unique<EnergyBoundsPredictor>();
    throw InputError("unknown predictor '" + name + "' (expected oracle or energy)");
}

// ---------------------------------------------------------------------------
// Diagnostics

KlDiagnostic kl_diagnostic(std::span<const double> true_m, std::span<const double> predicted_m) {
    if (true_m.size() != predicted_m.size() || true_m.empty()) {
        throw InputError("diagnostic needs two non-empty vectors of equal length");
    }
    double total = 0.0;
    double predicted_total = 0.0;
    for (std::size_t i = 0; i < true_m.size(); ++i) {
        if (!(true_m[i] >= 0.0)) throw InputError("true bounds must be nonnegative");
        total += true_m[i];
        predicted_total += std::max(predicted_m[i], kPredictorFloor);
    }
    if (!(total > 0.0)) throw InputError("true bounds sum to zero");

    KlDiagnostic d;
    for (std::size_t i = 0; i < true_m.size(); ++i) {
        const double rho = true_m[i] / total;
        if (rho == 0.0) continue;
        const double rho_hat = std::max(predicted_m[i], kPredictorFloor) / predicted_total;
        d.cross_entropy -= rho * std::log(rho_hat);
        d.kl += rho * std::log(rho / rho_hat);
    }
    d.kl = std::max(d.kl, 0.0);
    return d;
}

// ---------------------------------------------------------------------------
// Stage quantities

double stage_rate(std::size_t t, std::size_t stages, double rate, std::int64_t allocated, std::size_t pixels) {
    if (stages == 0 || t < 1 || t > stages) throw InputError("stage index out of range");
    const double n = static_cast<double>(stages);
    if (t == 1) return rate / n;
    const double s = static_cast<double>(t) * rate / n - static_cast<double>(allocated) / static_cast<double>(pixels);
    return std::max(s, 0.0);
}

std::optional<MixingCoeffs> mixing_coeffs(std::size_t t, std::size_t stages, double rate, std::int64_t allocated,
                                          std::size_t pixels) {
    const double s = stage_rate(t, stages, rate, allocated, pixels);
    const double alpha = s / (static_cast<double>(t) * rate / static_cast<double>(stages));
    if (!(alpha > 0.0)) return std::nullopt;
    const double clamped = std::min(alpha, 1.0);
    return MixingCoeffs{clamped, 1.0 - clamped};
}

std::vector<double> fixed_ratio(std::span<const std::int64_t> cumulative) {
    const std::int64_t total = std::accumulate(cumulative.begin(), cumulative.end(), std::int64_t{0});
    if (total <= 0) throw InputError("fixed ratio needs a positive measurement total");
    std::vector<double> r(cumulative.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = static_cast<double>(cumulative[i]) / static_cast<double>(total);
    }
    return r;
}

std::vector<double> upper_bounds(std::span<const std::int64_t> cumulative, double stage_rate, std::size_t pixels,
                                 std::size_t block_size) {
    if (!(stage_rate > 0.0)) throw InputError("upper bounds need a positive stage rate");
    const auto len = static_cast<std::int64_t>(block_size * block_size);
    const std::int64_t allocated = std::accumulate(cumulative.begin(), cumulative.end(), std::int64_t{0});
    // The stage may add q_i s_r^t HW measurements to block i without passing
    // B^2, so q_i <= (B^2 - cumulative_i) / (s_r^t HW). Summing over blocks,
    // sum a_i = (HW - allocated) / (s_r^t HW), and s_r^t HW = t s_r HW / N -
    // allocated <= HW - allocated because t s_r / N <= 1, so sum a_i >= 1.
    // Clamping the denominator keeps that true under rounding when the two
    // sides coincide (s_r = 1, t = N).
    const double denom = std::min(stage_rate * static_cast<double>(pixels),
                                  static_cast<double>(static_cast<std::int64_t>(pixels) - allocated));
    std::vector<double> a(cumulative.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = static_cast<double>(std::max<std::int64_t>(len - cumulative[i], 0)) / denom;
    }
    return a;
}

std::int64_t MultiStagePlan::total_measurements() const {
    return std::accumulate(final_M.begin(), final_M.end(), std::int64_t{0});
}

// ---------------------------------------------------------------------------
// Protocol

namespace {

void sample_stage(const MeasurementMatrix& matrix, const BlockGrid& grid, std::size_t stage,
                  std::span<const std::int64_t> stage_M, std::vector<MeasurementRecord>& records) {
    parallel_for(records.size(), [&](std::size_t i) {
        const std::size_t start = records[i].rows_used() + 1;
        const std::size_t end = start + static_cast<std::size_t>(stage_M[i]) - 1;
        records[i].append(stage, sample_rows(matrix, start, end, vectorize(grid.blocks[i])));
    });
}

}  // namespace

MultiStagePlan run_simulation(const Image& image, const SimulationConfig& config, const BoundsPredictor& predictor,
                              const MeasurementMatrix& matrix) {
    if (config.stages < 1) throw InputError("at least one stage is required");
    if (!(config.rate > 0.0 && config.rate <= 1.0)) throw InputError("sampling rate must lie in (0, 1]");
    const std::size_t b = config.block_size;
    if (matrix.dim() != b * b) throw InputError("operator size does not match the block size");

    const BlockGrid grid = partition(image, b);
    const std::size_t blocks = grid.block_count();
    const std::size_t pixels = grid.padded_pixels();
    const std::size_t len = b * b;
    const std::size_t stages = config.stages;

    if (config.rate * static_cast<double>(pixels) / static_cast<double>(stages) < static_cast<double>(blocks)) {
        throw InputError("stage-1 budget is smaller than the block count; raise the rate or use fewer stages");
    }

    MultiStagePlan plan;
    plan.block_size = b;
    plan.grid_rows = grid.rows;
    plan.grid_cols = grid.cols;
    plan.height = image.height();
    plan.width = image.width();
    plan.rate = config.rate;
    plan.stage_count = stages;
    plan.predictor = predictor.name();

    if (config.rate >= config.curve.s_r1) {
        const ImageAnalysis analysis = analyze_image(image, b, config.rate, config.curve);
        if (analysis.bounds.total() > 0.0) plan.true_bounds = analysis.bounds.per_block_m;
    }

    plan.records.resize(blocks);
    for (std::size_t i = 0; i < blocks; ++i) plan.records[i].block_index = i;
    std::vector<std::int64_t> cumulative(blocks, 0);

    // Stage 1: same rate everywhere.
    {
        StageState st;
        st.stage_index = 1;
        st.stage_rate = stage_rate(1, stages, config.rate, 0, pixels);
        st.stage_budget = measurement_budget(st.stage_rate, pixels);
        st.stage_M = uniform_counts(blocks, len, st.stage_rate, st.stage_budget);
        sample_stage(matrix, grid, 1, st.stage_M, plan.records);
        for (std::size_t i = 0; i < blocks; ++i) cumulative[i] += st.stage_M[i];
        st.cumulative_M = cumulative;
        plan.stages.push_back(std::move(st));
    }

    double cross_entropy_sum = 0.0;
    std::size_t predicting_stages = 0;

    for (std::size_t t = 2; t <= stages; ++t) {
        const std::int64_t allocated = std::accumulate(cumulative.begin(), cumulative.end(), std::int64_t{0});
        StageState st;
        st.stage_index = t;
        st.stage_rate = stage_rate(t, stages, config.rate, allocated, pixels);
        st.stage_budget = measurement_budget(st.stage_rate, pixels);
        const auto mix = mixing_coeffs(t, stages, config.rate, allocated, pixels);

        if (!mix || st.stage_budget <= 0) {
            st.skipped = true;
            st.stage_budget = 0;
            st.stage_M.assign(blocks, 0);
            sample_stage(matrix, grid, t, st.stage_M, plan.records);
            st.cumulative_M = cumulative;
            plan.stages.push_back(std::move(st));
            continue;
        }
        st.alpha = mix->alpha;
        st.beta = mix->beta;

        st.predicted_bounds.resize(blocks);
        parallel_for(blocks, [&](std::size_t i) {
            PredictionContext ctx{i, t, static_cast<std::size_t>(cumulative[i]), b};
            const double m = predictor.predict(plan.records[i].padded(len), ctx);
            if (!(m >= 0.0) || !std::isfinite(m)) {
                throw InputError("predictor returned an invalid bound for block " + std::to_string(i));
            }
            st.predicted_bounds[i] = std::max(m, kPredictorFloor);
        });

        KlAllocProblem problem(st.predicted_bounds, fixed_ratio(cumulative), st.alpha,
                               upper_bounds(cumulative, st.stage_rate, pixels, b));
        KlAllocSolution solution = solve(problem);

        std::vector<double> shares(blocks);
        std::vector<std::int64_t> caps(blocks);
        for (std::size_t i = 0; i < blocks; ++i) {
            shares[i] = static_cast<double>(st.stage_budget) * solution.q[i];
            caps[i] = static_cast<std::int64_t>(len) - cumulative[i];
        }
        st.stage_M = apportion(shares, st.stage_budget, caps);
        sample_stage(matrix, grid, t, st.stage_M, plan.records);
        for (std::size_t i = 0; i < blocks; ++i) cumulative[i] += st.stage_M[i];
        st.cumulative_M = cumulative;

        if (!plan.true_bounds.empty()) {
            st.diagnostic = kl_diagnostic(plan.true_bounds, st.predicted_bounds);
            cross_entropy_sum += st.diagnostic->cross_entropy;
            ++predicting_stages;
        }
        st.problem = std::move(problem);
        st.solution = std::move(solution);
        plan.stages.push_back(std::move(st));
    }

    if (predicting_stages > 0) {
        plan.aggregate_cross_entropy = cross_entropy_sum / (static_cast<double>(predicting_stages) *
                                                            static_cast<double>(blocks));
    }
    plan.final_M = cumulative;
    return plan;
}

}  // namespace rate_alloc
