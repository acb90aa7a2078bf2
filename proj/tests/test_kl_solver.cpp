#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "rate_alloc/error.hpp"
#include "rate_alloc/kl_solver.hpp"
#include "test_support.hpp"

using namespace rate_alloc;
using rate_alloc::testing::breakpoint_solution;
using rate_alloc::testing::max_abs_diff;
using rate_alloc::testing::ProblemGenerator;

namespace {

KlAllocProblem hand_instance() {
    return KlAllocProblem({0.6, 0.3, 0.1}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 0.5, {0.5, 1.0, 1.0});
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("problem construction validates and normalizes") {
    const KlAllocProblem pr({2.0, 6.0}, {1.0, 3.0}, 0.25, {1.0, 1.0});
    CHECK(pr.p()[0] == 0.25);
    CHECK(pr.p()[1] == 0.75);
    CHECK(pr.r()[1] == 0.75);
    CHECK(pr.beta() == 0.75);
    CHECK(pr.offset(0) == doctest::Approx(0.75 * 0.25 / 0.25));

    CHECK_THROWS_AS(KlAllocProblem({0.5, 0.5}, {1.0, 0.0}, 0.5, {1, 1}), InputError);
    CHECK_THROWS_AS(KlAllocProblem({0.5, -0.1}, {1.0, 1.0}, 0.5, {1, 1}), InputError);
    CHECK_THROWS_AS(KlAllocProblem({0.0, 0.0}, {1.0, 1.0}, 0.5, {1, 1}), InputError);
    CHECK_THROWS_AS(KlAllocProblem({0.5, 0.5}, {1.0, 1.0}, 0.0, {1, 1}), InputError);
    CHECK_THROWS_AS(KlAllocProblem({0.5, 0.5}, {1.0, 1.0}, 1.5, {1, 1}), InputError);
    CHECK_THROWS_AS(KlAllocProblem({0.5, 0.5}, {1.0, 1.0}, 0.5, {1, -1}), InputError);
    CHECK_THROWS_AS(KlAllocProblem({0.5, 0.5}, {1.0, 1.0}, 0.5, {1}), InputError);
    CHECK_THROWS_AS(KlAllocProblem({}, {}, 0.5, {}), InputError);
    // caps on the positive-weight coordinates fall short of 1
    CHECK_THROWS_AS(KlAllocProblem({0.5, 0.5, 0.0}, {1, 1, 1}, 0.5, {0.4, 0.4, 5.0}), InfeasibleError);
}

TEST_CASE("closed form on the hand-worked instance") {
    const KlAllocProblem pr = hand_instance();
    const auto q = q_of_mu(pr, 1.0);
    CHECK(q[0] == doctest::Approx(0.6 - 1.0 / 3).epsilon(1e-14));
    CHECK(q[1] == 0.0);
    CHECK(q[2] == 0.0);
    CHECK(q_value(pr, 1.0) == doctest::Approx(0.26666666666666667).epsilon(1e-14));
    CHECK(q_derivative(pr, 1.0) == doctest::Approx(0.6).epsilon(1e-14));

    const SegmentSets at1 = segment_sets(pr, 1.0);
    CHECK(at1.lower == std::vector<std::size_t>{1, 2});
    CHECK(at1.center == std::vector<std::size_t>{0});
    CHECK(at1.upper.empty());

    const SegmentSets at2 = segment_sets(pr, 2.2222);
    CHECK(at2.lower == std::vector<std::size_t>{2});
    CHECK(at2.center == std::vector<std::size_t>{1});
    CHECK(at2.upper == std::vector<std::size_t>{0});
}

TEST_CASE("Newton steps on the hand-worked instance") {
    const KlAllocProblem pr = hand_instance();
    const auto s1 = newton_step(pr, 1.0);
    REQUIRE(s1);
    CHECK(*s1 == doctest::Approx(20.0 / 9.0).epsilon(1e-14));
    const auto s2 = newton_step(pr, *s1);
    REQUIRE(s2);
    CHECK(*s2 == doctest::Approx(25.0 / 9.0).epsilon(1e-14));
    const auto s3 = newton_step(pr, *s2);
    REQUIRE(s3);
    CHECK(std::abs(*s3 - *s2) <= 1e-14);
}

TEST_CASE("solve on the hand-worked instance") {
    const KlAllocProblem pr = hand_instance();
    const KlAllocSolution sol = solve(pr);
    CHECK(sol.initial_mu == 1.0);
    CHECK(std::abs(sol.mu_star - 25.0 / 9.0) <= 1e-12);
    CHECK(std::abs(sol.q[0] - 0.5) <= 1e-12);
    CHECK(std::abs(sol.q[1] - 0.5) <= 1e-12);
    CHECK(sol.q[2] == 0.0);
    CHECK(sol.status == SolveStatus::converged_by_newton);
    CHECK(sol.iterations() <= 3);
    for (const auto& t : sol.trace) CHECK(t.kind == StepKind::newton);
    CHECK(kkt_residual(pr, sol.q, sol.mu_star) <= 1e-10);

    const KlAllocSolution ref = oracle_solve(pr);
    CHECK(max_abs_diff(ref.q, {0.5, 0.5, 0.0}) <= 1e-10);

    const double expected = -(0.6 * std::log(5.0 / 12) + 0.3 * std::log(5.0 / 12) + 0.1 * std::log(1.0 / 6));
    CHECK(objective(pr, sol.q) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("single coordinate") {
    const KlAllocProblem pr({1.0}, {1.0}, 0.5, {2.0});
    const KlAllocSolution sol = solve(pr);
    CHECK(sol.q == std::vector<double>{1.0});
    CHECK(sol.mu_star == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(oracle_solve(pr).q[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("p equal to r gives q = r") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (double alpha : {0.1, 0.5, 0.9, 1.0}) {
        std::vector<double> w(7);
        for (double& x : w) x = u(rng);
        const KlAllocProblem pr(w, w, alpha, std::vector<double>(7, 1.0));
        const KlAllocSolution sol = solve(pr);
        double entropy = 0.0;
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(std::abs(sol.q[i] - pr.r()[i]) <= 1e-13);
            entropy -= pr.p()[i] * std::log(pr.p()[i]);
        }
        CHECK(objective(pr, sol.q) == doctest::Approx(entropy).epsilon(1e-12));
        CHECK(kkt_residual(pr, sol.q, sol.mu_star) <= 1e-12);
    }
}

TEST_CASE("zero-weight coordinates stay at zero") {
    const KlAllocProblem pr({0.0, 0.7, 0.3, 0.0}, {0.25, 0.25, 0.25, 0.25}, 0.4, {3.0, 0.8, 0.8, 3.0});
    for (double mu : {0.01, 1.0, 100.0}) {
        const auto q = q_of_mu(pr, mu);
        CHECK(q[0] == 0.0);
        CHECK(q[3] == 0.0);
    }
    const KlAllocSolution sol = solve(pr);
    CHECK(sol.q[0] == 0.0);
    CHECK(sol.q[3] == 0.0);
    CHECK(std::abs(sum(sol.q) - 1.0) <= 1e-12);
}

TEST_CASE("only one positive-weight coordinate") {
    const KlAllocProblem pr({0.0, 1.0, 0.0}, {0.2, 0.3, 0.5}, 0.6, {1.0, 2.0, 1.0});
    const SegmentSets s = segment_sets(pr, 1.0);
    CHECK(std::find(s.center.begin(), s.center.end(), 0) == s.center.end());
    CHECK(std::find(s.center.begin(), s.center.end(), 2) == s.center.end());
    const KlAllocSolution sol = solve(pr);
    CHECK(sol.q[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("small mu with beta > 0 gives zero; large mu caps everything") {
    const KlAllocProblem pr = hand_instance();
    CHECK(q_value(pr, 1e-6) == 0.0);
    const double big = 1.01 * pr.upper_mu();
    CHECK(q_value(pr, big) == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(q_derivative(pr, big) == 0.0);
}

TEST_CASE("beta = 0 starts at half the bracket") {
    const KlAllocProblem pr({0.5, 0.3, 0.2}, {1, 1, 1}, 1.0, {1, 1, 1});
    const KlAllocSolution sol = solve(pr);
    CHECK(sol.initial_mu == pr.upper_mu() / 2);
    CHECK(max_abs_diff(sol.q, {0.5, 0.3, 0.2}) <= 1e-14);
}

TEST_CASE("tight caps summing to one force q = a") {
    const KlAllocProblem pr({0.1, 0.2, 0.7}, {0.5, 0.3, 0.2}, 0.3, {0.5, 0.25, 0.25});
    const KlAllocSolution sol = solve(pr);
    CHECK(max_abs_diff(sol.q, {0.5, 0.25, 0.25}) <= 1e-12);
    CHECK(max_abs_diff(oracle_solve(pr).q, {0.5, 0.25, 0.25}) <= 1e-12);
}

TEST_CASE("Q is monotone and its slope matches finite differences") {
    ProblemGenerator gen(31);
    for (int trial = 0; trial < 200; ++trial) {
        const KlAllocProblem pr = gen.next(1 + gen.pick(40));
        std::vector<double> kinks;
        for (std::size_t i : pr.active()) {
            kinks.push_back(pr.offset(i) / pr.p()[i]);
            kinks.push_back((pr.offset(i) + pr.a()[i]) / pr.p()[i]);
        }
        kinks.push_back(0.0);
        kinks.push_back(pr.upper_mu() * 1.5);
        std::sort(kinks.begin(), kinks.end());
        for (std::size_t k = 0; k + 1 < kinks.size(); ++k) {
            const double x0 = kinks[k], x1 = kinks[k + 1];
            if (x1 - x0 < 1e-6 * std::max(1.0, x1)) continue;
            const double m1 = x0 + 0.25 * (x1 - x0);
            const double m2 = x0 + 0.75 * (x1 - x0);
            const double slope = (q_value(pr, m2) - q_value(pr, m1)) / (m2 - m1);
            CHECK(slope == doctest::Approx(q_derivative(pr, m1)).epsilon(1e-7).scale(1.0));
            CHECK(q_derivative(pr, m1) == q_derivative(pr, m2));
            CHECK(q_value(pr, m1) <= q_value(pr, m2));
        }
        double prev = -1.0;
        for (int s = 0; s <= 50; ++s) {
            const double v = q_value(pr, pr.upper_mu() * s / 40.0 + 1e-300);
            CHECK(v >= prev);
            prev = v;
        }
    }
}

TEST_CASE("segment sets partition the indices") {
    ProblemGenerator gen(32);
    for (int trial = 0; trial < 100; ++trial) {
        const KlAllocProblem pr = gen.next(1 + gen.pick(60));
        const double mu = gen.unit() * pr.upper_mu();
        const SegmentSets s = segment_sets(pr, mu);
        std::vector<std::size_t> all;
        all.insert(all.end(), s.lower.begin(), s.lower.end());
        all.insert(all.end(), s.center.begin(), s.center.end());
        all.insert(all.end(), s.upper.begin(), s.upper.end());
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expect(pr.size());
        std::iota(expect.begin(), expect.end(), 0);
        CHECK(all == expect);
    }
}

TEST_CASE("solve agrees with the oracle and the breakpoint solution") {
    ProblemGenerator gen(33);
    for (int trial = 0; trial < 300; ++trial) {
        const KlAllocProblem pr = gen.next(1 + gen.pick(128));
        const KlAllocSolution sol = solve(pr);
        const KlAllocSolution ref = oracle_solve(pr);
        const auto exact = breakpoint_solution(pr);
        CHECK(max_abs_diff(sol.q, ref.q) <= 1e-8);
        CHECK(max_abs_diff(sol.q, exact) <= 1e-9);
        CHECK(std::abs(sum(sol.q) - 1.0) <= 1e-10);
        CHECK(kkt_residual(pr, sol.q, sol.mu_star) <= 1e-8);
        CHECK(q_of_mu(pr, sol.mu_star) == sol.q);
        CHECK(segment_sets(pr, sol.mu_star) == sol.segments);
        for (std::size_t i = 0; i < pr.size(); ++i) {
            CHECK(sol.q[i] >= 0.0);
            CHECK(sol.q[i] <= pr.a()[i] + 1e-12);
            if (pr.p()[i] == 0.0) CHECK(sol.q[i] == 0.0);
        }
        if (sol.status == SolveStatus::converged_by_newton) CHECK(std::abs(q_value(pr, sol.mu_star) - 1.0) <= 1e-12);
    }
}

TEST_CASE("solution beats random feasible points") {
    ProblemGenerator gen(34);
    for (int trial = 0; trial < 100; ++trial) {
        const KlAllocProblem pr = gen.next(2 + gen.pick(30));
        // With beta = 0 a positive-weight coordinate capped at 0 makes every objective value infinite.
        const bool unbounded = pr.beta() == 0.0 && std::any_of(pr.active().begin(), pr.active().end(),
                                                               [&](std::size_t i) { return pr.a()[i] == 0.0; });
        if (unbounded) continue;
        const KlAllocSolution sol = solve(pr);
        const double best = objective(pr, sol.q);
        // Convex combinations with another feasible point stay feasible.
        const auto other = q_of_mu(pr, pr.upper_mu());  // all caps, sums to capacity >= 1
        std::vector<double> feasible(pr.size());
        for (std::size_t i = 0; i < pr.size(); ++i) feasible[i] = other[i] / sum(other);
        for (double t : {0.1, 0.5, 0.9, 1.0}) {
            std::vector<double> mix(pr.size());
            for (std::size_t i = 0; i < pr.size(); ++i) mix[i] = (1 - t) * sol.q[i] + t * feasible[i];
            CHECK(best <= objective(pr, mix) + 1e-9);
        }
    }
}

TEST_CASE("KKT residual detects a perturbed solution") {
    const KlAllocProblem pr = hand_instance();
    const KlAllocSolution sol = solve(pr);
    std::vector<double> q = {0.5 - 1e-3, 0.5 + 1e-3, 0.0};
    CHECK(kkt_residual(pr, q, sol.mu_star) > 1e-4);

    ProblemGenerator gen(35);
    int checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const KlAllocProblem rp = gen.next(3 + gen.pick(20));
        const KlAllocSolution s = solve(rp);
        // move mass between two interior coordinates
        if (s.segments.center.size() < 2) continue;
        auto moved = s.q;
        moved[s.segments.center[0]] += 1e-3;
        moved[s.segments.center[1]] -= 1e-3;
        CHECK(kkt_residual(rp, moved, s.mu_star) > 1e-4);
        ++checked;
    }
    CHECK(checked > 10);
}

TEST_CASE("q depends on p only through its ratios") {
    ProblemGenerator gen(36);
    for (int trial = 0; trial < 50; ++trial) {
        const KlAllocProblem base = gen.next(1 + gen.pick(50));
        std::vector<double> w(base.p().begin(), base.p().end());
        for (double& x : w) x *= 37.5;
        std::vector<double> r(base.r().begin(), base.r().end());
        std::vector<double> a(base.a().begin(), base.a().end());
        const KlAllocProblem scaled(w, r, base.alpha(), a);
        CHECK(max_abs_diff(solve(base).q, solve(scaled).q) <= 1e-14);
    }
}

TEST_CASE("Newton direction points at the root") {
    ProblemGenerator gen(37);
    int checked = 0, degenerate = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        const KlAllocProblem pr = gen.next(1 + gen.pick(64));
        const double root = oracle_solve(pr).mu_star;
        // half the samples spread over the bracket, half within two decades of the root
        const double mu = trial % 2 == 0 ? gen.unit() * pr.upper_mu()
                                         : std::min(root * std::exp(4.6 * (2.0 * gen.unit() - 1.0)), pr.upper_mu());
        if (!(mu > 0.0)) continue;
        const auto step = newton_step(pr, mu);
        if (!step) {
            ++degenerate;
            continue;
        }
        const int lhs = (*step > mu) - (*step < mu);
        const int rhs = (root > mu) - (root < mu);
        CHECK(lhs == rhs);
        ++checked;
    }
    CHECK(checked > 500);
    MESSAGE("degenerate Newton steps: " << degenerate << " of " << checked + degenerate);
}

TEST_CASE("Newton step at beta/alpha is rarely degenerate on stage-shaped problems") {
    int sampled = 0, degenerate = 0;
    std::mt19937_64 rng(39);
    for (int trial = 0; trial < 3000; ++trial) {
        const KlAllocProblem pr = rate_alloc::testing::stage_problem(rng);
        ++sampled;
        if (!newton_step(pr, pr.beta() / pr.alpha())) ++degenerate;
    }
    CHECK(static_cast<double>(degenerate) < 0.01 * sampled);
    MESSAGE("degenerate at beta/alpha: " << degenerate << " of " << sampled);

    ProblemGenerator gen(40);
    int corpus = 0, corpus_degenerate = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        const KlAllocProblem pr = gen.next(1 + gen.pick(64));
        if (pr.beta() == 0.0) continue;
        ++corpus;
        if (!newton_step(pr, pr.beta() / pr.alpha())) ++corpus_degenerate;
    }
    MESSAGE("degenerate at beta/alpha on the adversarial corpus: " << corpus_degenerate << " of " << corpus);
}

TEST_CASE("solve iteration cap is never reached on large problems") {
    ProblemGenerator gen(38);
    for (int trial = 0; trial < 30; ++trial) {
        const KlAllocProblem pr = gen.next(1024);
        const KlAllocSolution sol = solve(pr);
        CHECK(sol.iterations() < 10 * 1024 + 100);
        CHECK(max_abs_diff(sol.q, oracle_solve(pr).q) <= 1e-8);
    }
}

TEST_CASE("status and step kinds print") {
    CHECK(to_string(StepKind::newton) == "newton");
    CHECK(to_string(StepKind::bisection) == "bisection");
    CHECK(to_string(SolveStatus::converged_by_newton) == "converged-by-newton");
    CHECK(to_string(SolveStatus::converged_with_bisection) == "converged-with-bisection");
}
