#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rate_alloc/allocation.hpp"
#include "rate_alloc/analysis.hpp"
#include "rate_alloc/kl_solver.hpp"
#include "rate_alloc/sensing.hpp"

namespace rate_alloc {

inline constexpr double kPredictorFloor = 1e-9;

struct PredictionContext {
    std::size_t block_index = 0;
    std::size_t stage = 0;           // stage being planned (>= 2)
    std::size_t measured = 0;        // rows sampled for this block so far
    std::size_t block_size = 0;
};

// Estimates a block's measurement bound from what has been sampled so far.
class BoundsPredictor {
public:
    virtual ~BoundsPredictor() = default;
    virtual std::string name() const = 0;
    // padded_measurements has length B^2: the block's concatenated samples
    // followed by zeros. Must return a finite value >= 0.
    virtual double predict(std::span<const double> padded_measurements, const PredictionContext& ctx) const = 0;
};

// Returns the true bound of each block. This is the information ceiling of the
// protocol, since a real predictor only sees measurements.
class OracleBoundsPredictor final : public BoundsPredictor {
public:
    OracleBoundsPredictor(std::vector<CoeffBlock> coeffs, double threshold);
    std::string name() const override { return "oracle"; }
    double predict(std::span<const double> padded_measurements, const PredictionContext& ctx) const override;

private:
    std::vector<CoeffBlock> coeffs_;
    double threshold_;
};

// Population standard deviation of entries 1..measured-1 (entry 0 is skipped),
// floored at kPredictorFloor. Tracks block energy, not sparsity.
class EnergyBoundsPredictor final : public BoundsPredictor {
public:
    std::string name() const override { return "energy"; }
    double predict(std::span<const double> padded_measurements, const PredictionContext& ctx) const override;
};

double predict_bounds_oracle(const CoeffBlock& coeffs, double threshold);
double predict_bounds_energy(std::span<const double> padded_measurements, std::size_t measured);

struct KlDiagnostic {
    double cross_entropy = 0.0;
    double kl = 0.0;
};

// Ratios rho = m / sum(m) against rho_hat = max(m_hat, floor) / sum. Requires
// sum(true_m) > 0.
KlDiagnostic kl_diagnostic(std::span<const double> true_m, std::span<const double> predicted_m);

// t * s_r / N - allocated / pixels, clamped at 0; s_r / N for t = 1.
double stage_rate(std::size_t t, std::size_t stages, double rate, std::int64_t allocated, std::size_t pixels);

struct MixingCoeffs {
    double alpha = 1.0;
    double beta = 0.0;
};

// alpha = s_r^t / (t s_r / N), beta = 1 - alpha. Empty when alpha <= 0 (the
// stage has nothing left to spend).
std::optional<MixingCoeffs> mixing_coeffs(std::size_t t, std::size_t stages, double rate, std::int64_t allocated,
                                          std::size_t pixels);

// r_i = cumulative_i / sum(cumulative). Throws InputError on a zero total.
std::vector<double> fixed_ratio(std::span<const std::int64_t> cumulative);

// a_i = (B^2 - cumulative_i) / (s_r^t * pixels).
std::vector<double> upper_bounds(std::span<const std::int64_t> cumulative, double stage_rate, std::size_t pixels,
                                 std::size_t block_size);

struct StageState {
    std::size_t stage_index = 1;
    double stage_rate = 0.0;
    std::int64_t stage_budget = 0;
    bool skipped = false;
    double alpha = 1.0;
    double beta = 0.0;
    std::vector<std::int64_t> stage_M;
    std::vector<std::int64_t> cumulative_M;
    std::optional<KlAllocProblem> problem;
    std::optional<KlAllocSolution> solution;
    std::vector<double> predicted_bounds;
    std::optional<KlDiagnostic> diagnostic;
};

struct MultiStagePlan {
    std::size_t block_size = 0;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    double rate = 0.0;
    std::size_t stage_count = 0;
    std::string predictor;
    std::vector<StageState> stages;
    std::vector<std::int64_t> final_M;
    std::vector<MeasurementRecord> records;
    std::vector<double> true_bounds;  // empty when the image has no bounds (all zero)
    // Mean cross-entropy over predicting stages and blocks, as in the training loss.
    std::optional<double> aggregate_cross_entropy;

    std::size_t padded_pixels() const noexcept { return grid_rows * grid_cols * block_size * block_size; }
    std::int64_t total_measurements() const;
    GridShape shape() const { return {block_size, grid_rows, grid_cols, height, width}; }
};

struct SimulationConfig {
    std::size_t block_size = 32;
    double rate = 0.1;
    std::size_t stages = 2;
    CurveParams curve;
};

// N-stage protocol: stage 1 samples every block at the same rate; each later
// stage predicts bounds from the samples so far, solves the KL allocation
// problem for the stage's share of the budget, and samples the next rows.
// Throws InputError unless rate * pixels / N >= block count.
MultiStagePlan run_simulation(const Image& image, const SimulationConfig& config, const BoundsPredictor& predictor,
                              const MeasurementMatrix& matrix);

std::unique_ptr<BoundsPredictor> make_predictor(const std::string& name, const ImageAnalysis& analysis);

}  // namespace rate_alloc
