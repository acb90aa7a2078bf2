#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace rate_alloc {

// minimize  -sum_i p_i ln(alpha q_i + beta r_i)
// subject to sum_i q_i = 1, 0 <= q_i <= a_i,  with beta = 1 - alpha.
//
// The optimum is q_i = clamp(mu p_i - beta r_i / alpha, 0, a_i) for the unique
// mu > 0 with Q(mu) = sum_i q_i(mu) = 1. Q is piecewise linear and
// non-decreasing; its pieces are indexed by which coordinates sit at the lower
// clamp, strictly inside, or at the cap.
class KlAllocProblem {
public:
    // p and r are normalized here, so any nonnegative weights work for p and any
    // positive weights for r. Throws InputError on malformed data and
    // InfeasibleError when the caps on positive-weight coordinates sum below 1.
    KlAllocProblem(std::vector<double> p, std::vector<double> r, double alpha, std::vector<double> a);

    std::size_t size() const noexcept { return p_.size(); }
    std::span<const double> p() const noexcept { return p_; }
    std::span<const double> r() const noexcept { return r_; }
    std::span<const double> a() const noexcept { return a_; }
    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }
    // beta r_i / alpha
    double offset(std::size_t i) const noexcept { return offset_[i]; }

    // mu p_i - beta r_i / alpha before clamping.
    double raw(std::size_t i, double mu) const noexcept { return mu * p_[i] - offset_[i]; }
    double coordinate(std::size_t i, double mu) const noexcept;

    // Smallest mu at which every positive-weight coordinate is capped.
    double upper_mu() const noexcept { return upper_mu_; }
    double capacity() const noexcept { return capacity_; }
    // Indices with p_i > 0; the rest are pinned at q_i = 0.
    std::span<const std::size_t> active() const noexcept { return active_; }

private:
    std::vector<double> p_, r_, a_, offset_;
    std::vector<std::size_t> active_;
    double alpha_ = 1.0;
    double beta_ = 0.0;
    double upper_mu_ = 0.0;
    double capacity_ = 0.0;
};

// Index sets (0-based, ascending) at a given mu. Equality with 0 counts as
// lower and equality with a_i counts as upper.
struct SegmentSets {
    std::vector<std::size_t> lower;
    std::vector<std::size_t> center;
    std::vector<std::size_t> upper;

    bool operator==(const SegmentSets&) const = default;
};

enum class StepKind { newton, bisection };
enum class SolveStatus { converged_by_newton, converged_with_bisection };

std::string_view to_string(StepKind kind);
std::string_view to_string(SolveStatus status);

struct TraceEntry {
    double mu;
    StepKind kind;
};

struct KlAllocSolution {
    std::vector<double> q;
    double mu_star = 0.0;
    double initial_mu = 0.0;
    SegmentSets segments;
    std::vector<TraceEntry> trace;
    SolveStatus status = SolveStatus::converged_by_newton;

    std::size_t iterations() const noexcept { return trace.size(); }
};

std::vector<double> q_of_mu(const KlAllocProblem& problem, double mu);
double q_value(const KlAllocProblem& problem, double mu);
double q_derivative(const KlAllocProblem& problem, double mu);
SegmentSets segment_sets(const KlAllocProblem& problem, double mu);

// Closed-form Newton update from the segment sets at mu:
//   (1 + sum_center beta r_i / alpha - sum_upper a_i) / sum_center p_i
// Empty when the denominator is zero or the numerator is not positive.
std::optional<double> newton_step(const KlAllocProblem& problem, double mu);
std::optional<double> newton_step(const KlAllocProblem& problem, const SegmentSets& sets);

// Newton iteration on Q(mu) = 1 with a bracket [lo, hi] that tightens on every
// step: a Newton move up proves mu is below the root, a move down proves it is
// above. Steps leaving the bracket, and degenerate steps, become bisections.
KlAllocSolution solve(const KlAllocProblem& problem);

// Plain bisection on sign(Q(mu) - 1) over [0, upper_mu()], 200 halvings.
// Independent of the Newton path; used for verification only.
KlAllocSolution oracle_solve(const KlAllocProblem& problem);

// Largest violation of the optimality conditions at (q, mu): stationarity,
// complementary slackness, primal feasibility and |sum q - 1|.
double kkt_residual(const KlAllocProblem& problem, std::span<const double> q, double mu_star);

double objective(const KlAllocProblem& problem, std::span<const double> q);

}  // namespace rate_alloc
