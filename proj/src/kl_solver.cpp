#include "rate_alloc/kl_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rate_alloc/error.hpp"

namespace rate_alloc {

namespace {

void normalize(std::vector<double>& v, const char* name) {
    double sum = 0.0;
    for (double x : v) sum += x;
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        throw InputError(std::string(name) + " must have a positive finite sum");
    }
    for (double& x : v) x /= sum;
}

constexpr double kFlatTolerance = 1e-12;

}  // namespace

KlAllocProblem::KlAllocProblem(std::vector<double> p, std::vector<double> r, double alpha, std::vector<double> a)
    : p_(std::move(p)), r_(std::move(r)), a_(std::move(a)) {
    const std::size_t n = p_.size();
    if (n == 0 || r_.size() != n || a_.size() != n) {
        throw InputError("p, r and a must be non-empty and of equal length");
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw InputError("alpha must lie in (0, 1], got " + std::to_string(alpha));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(p_[i] >= 0.0) || !std::isfinite(p_[i])) throw InputError("p entries must be finite and nonnegative");
        if (!(r_[i] > 0.0) || !std::isfinite(r_[i])) throw InputError("r entries must be finite and positive");
        if (!(a_[i] >= 0.0) || !std::isfinite(a_[i])) throw InputError("a entries must be finite and nonnegative");
    }
    normalize(p_, "p");
    normalize(r_, "r");
    alpha_ = alpha;
    beta_ = 1.0 - alpha;

    offset_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        offset_[i] = beta_ * r_[i] / alpha_;
        if (p_[i] > 0.0) {
            active_.push_back(i);
            capacity_ += a_[i];
            upper_mu_ = std::max(upper_mu_, (a_[i] + offset_[i]) / p_[i]);
        }
    }
    if (capacity_ < 1.0) {
        throw InfeasibleError("infeasible allocation: caps on positive-weight coordinates sum to " +
                              std::to_string(capacity_) + " < 1");
    }
    // Nudge past rounding so every active coordinate is capped at upper_mu_.
    upper_mu_ = std::nextafter(std::nextafter(upper_mu_, std::numeric_limits<double>::infinity()),
                               std::numeric_limits<double>::infinity());
}

double KlAllocProblem::coordinate(std::size_t i, double mu) const noexcept {
    if (p_[i] == 0.0) return 0.0;
    return std::min(std::max(raw(i, mu), 0.0), a_[i]);
}

std::string_view to_string(StepKind kind) { return kind == StepKind::newton ? "newton" : "bisection"; }

std::string_view to_string(SolveStatus status) {
    return status == SolveStatus::converged_by_newton ? "converged-by-newton" : "converged-with-bisection";
}

std::vector<double> q_of_mu(const KlAllocProblem& problem, double mu) {
    std::vector<double> q(problem.size(), 0.0);
    for (std::size_t i : problem.active()) q[i] = problem.coordinate(i, mu);
    return q;
}

double q_value(const KlAllocProblem& problem, double mu) {
    double s = 0.0;
    for (std::size_t i : problem.active()) s += problem.coordinate(i, mu);
    return s;
}

double q_derivative(const KlAllocProblem& problem, double mu) {
    double s = 0.0;
    for (std::size_t i : problem.active()) {
        const double v = problem.raw(i, mu);
        if (v > 0.0 && v < problem.a()[i]) s += problem.p()[i];
    }
    return s;
}

SegmentSets segment_sets(const KlAllocProblem& problem, double mu) {
    SegmentSets sets;
    const auto p = problem.p();
    const auto a = problem.a();
    for (std::size_t i = 0; i < problem.size(); ++i) {
        if (p[i] == 0.0) {
            sets.lower.push_back(i);
            continue;
        }
        const double v = problem.raw(i, mu);
        if (v <= 0.0) {
            sets.lower.push_back(i);
        } else if (v >= a[i]) {
            sets.upper.push_back(i);
        } else {
            sets.center.push_back(i);
        }
    }
    return sets;
}

std::optional<double> newton_step(const KlAllocProblem& problem, const SegmentSets& sets) {
    double numerator = 1.0;
    double denominator = 0.0;
    for (std::size_t i : sets.center) {
        numerator += problem.offset(i);
        denominator += problem.p()[i];
    }
    for (std::size_t i : sets.upper) numerator -= problem.a()[i];
    if (!(denominator > 0.0) || !(numerator > 0.0)) return std::nullopt;
    return numerator / denominator;
}

std::optional<double> newton_step(const KlAllocProblem& problem, double mu) {
    return newton_step(problem, segment_sets(problem, mu));
}

namespace {

KlAllocSolution finish(const KlAllocProblem& problem, KlAllocSolution sol, double mu) {
    sol.mu_star = mu;
    sol.q = q_of_mu(problem, mu);
    sol.segments = segment_sets(problem, mu);
    return sol;
}

}  // namespace

KlAllocSolution solve(const KlAllocProblem& problem) {
    KlAllocSolution sol;
    double lo = 0.0;
    double hi = problem.upper_mu();

    double mu;
    if (problem.beta() == 0.0) {
        mu = hi / 2.0;
    } else {
        const double eps = 1e-12 * hi;
        mu = std::min(std::max(problem.beta() / problem.alpha(), lo + eps), hi - eps);
    }
    sol.initial_mu = mu;

    const std::size_t cap = 10 * problem.size() + 100;
    bool bisected = false;
    auto status = [&] { return bisected ? SolveStatus::converged_with_bisection : SolveStatus::converged_by_newton; };

    while (sol.trace.size() < cap) {
        const SegmentSets sets = segment_sets(problem, mu);
        const auto step = newton_step(problem, sets);

        if (step) {
            // Same linear piece on both ends of the step: the step is the root.
            if (segment_sets(problem, *step) == sets) {
                if (*step != mu) sol.trace.push_back({*step, StepKind::newton});
                sol.status = status();
                return finish(problem, std::move(sol), *step);
            }
            if (*step > mu) {
                lo = std::max(lo, mu);
            } else {
                hi = std::min(hi, mu);
            }
        } else {
            // No usable Newton move; Q's sign still locates the root.
            const double q = q_value(problem, mu);
            if (sets.center.empty() && std::abs(q - 1.0) <= kFlatTolerance) {
                sol.status = status();
                return finish(problem, std::move(sol), mu);
            }
            if (q < 1.0) {
                lo = std::max(lo, mu);
            } else {
                hi = std::min(hi, mu);
            }
        }

        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
            sol.status = status();
            return finish(problem, std::move(sol), hi);
        }

        if (step && *step > lo && *step < hi) {
            mu = *step;
            sol.trace.push_back({mu, StepKind::newton});
        } else {
            mu = 0.5 * (lo + hi);
            bisected = true;
            sol.trace.push_back({mu, StepKind::bisection});
        }
    }
    throw InternalError("allocation solver exceeded " + std::to_string(cap) + " iterations");
}

KlAllocSolution oracle_solve(const KlAllocProblem& problem) {
    double lo = 0.0;
    double hi = problem.upper_mu();
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (q_value(problem, mid) >= 1.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    KlAllocSolution sol;
    sol.initial_mu = problem.upper_mu();
    sol.status = SolveStatus::converged_with_bisection;
    return finish(problem, std::move(sol), hi);
}

double kkt_residual(const KlAllocProblem& problem, std::span<const double> q, double mu_star) {
    constexpr double kActive = 1e-12;
    if (q.size() != problem.size() || !(mu_star > 0.0)) return std::numeric_limits<double>::infinity();
    const double nu = 1.0 / mu_star;
    const double alpha = problem.alpha();
    const double beta = problem.beta();

    double worst = 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double qi = q[i];
        const double ai = problem.a()[i];
        const double pi = problem.p()[i];
        sum += qi;
        worst = std::max({worst, -qi, qi - ai});
        // A zero cap pins the coordinate; its two multipliers absorb any gradient.
        if (ai == 0.0) continue;

        double grad = 0.0;  // alpha p_i / (alpha q_i + beta r_i)
        if (pi > 0.0) {
            const double mix = alpha * qi + beta * problem.r()[i];
            if (!(mix > 0.0)) return std::numeric_limits<double>::infinity();
            grad = alpha * pi / mix;
        }
        const bool at_lower = qi <= kActive;
        const bool at_upper = qi >= ai - kActive;
        const double lambda = at_lower ? std::max(nu - grad, 0.0) : 0.0;
        const double pi_mult = at_upper ? std::max(grad - nu, 0.0) : 0.0;

        const double stationarity = std::abs(-grad - lambda + pi_mult + nu);
        const double slackness = std::max(std::abs(lambda * qi), std::abs(pi_mult * (ai - qi)));
        worst = std::max({worst, stationarity, slackness});
    }
    return std::max(worst, std::abs(sum - 1.0));
}

double objective(const KlAllocProblem& problem, std::span<const double> q) {
    if (q.size() != problem.size()) throw InputError("q has the wrong length");
    double value = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double pi = problem.p()[i];
        if (pi == 0.0) continue;
        const double mix = problem.alpha() * q[i] + problem.beta() * problem.r()[i];
        if (!(mix > 0.0)) {
            throw InputError("objective undefined: nonpositive mixture at index " + std::to_string(i));
        }
        value -= pi * std::log(mix);
    }
    return value;
}

}  // namespace rate_alloc
