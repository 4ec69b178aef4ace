#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "mtbp/genfun.hpp"
#include "mtbp/model.hpp"
#include "mtbp/rng.hpp"
#include "mtbp/simulate.hpp"
#include "mtbp/spectral.hpp"

using namespace mtbp;

namespace {

std::int64_t terminal_total(const Ensemble& ens, std::size_t r) {
    std::int64_t t = 0;
    for (int i = 0; i < ens.d; ++i)
        t += ens.terminal[r * static_cast<std::size_t>(ens.d) + static_cast<std::size_t>(i)];
    return t;
}

double sample_mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// standard error of the sample mean, from the sample itself
double mean_se(const std::vector<double>& xs) {
    const double m = sample_mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    const auto n = static_cast<double>(xs.size());
    return std::sqrt(ss / (n - 1.0) / n);
}

// survival of the critical binary law by direct iteration of s - s^2/2
double binary_survival(std::int64_t n) {
    double s = 1.0;
    for (std::int64_t k = 0; k < n; ++k) s -= s * s / 2.0;
    return s;
}

// one shared heavy run, reused by the frequency / conditioning / KS checks
const Ensemble& big_binary_run() {
    static const Ensemble ens =
        run_ensemble(testutil::critical_binary(), 100, 1'000'000, 20240601u);
    return ens;
}

CTModel ct_binary() {
    CTModel model;
    model.d = 1;
    model.id = "ct-binary";
    model.rates.push_back({0.0, {1.0}});
    model.laws.push_back({0.0, {testutil::law_from({{{0}, 0.5}, {{2}, 0.5}})}});
    return model;
}

CTModel ct_tripling() {
    CTModel model;
    model.d = 1;
    model.id = "ct-tripling";
    model.rates.push_back({0.0, {1.0}});
    model.laws.push_back({0.0, {testutil::law_from({{{0}, 0.5}, {{3}, 0.5}})}});
    return model;
}

/* Unit-time law of the rate-1 binary-splitting process. Its pgf is
 * (1 + s)/(3 - s), i.e. p_0 = 1/3 and p_k = 4 * 3^-(k+1); the tail beyond 60
 * is folded into p_0 (mass ~ 2 * 3^-61).
 */
BranchingModel ct_binary_skeleton() {
    std::map<std::int64_t, double> pmf;
    double tail = 1.0 - 1.0 / 3.0;
    for (std::int64_t k = 1; k <= 60; ++k) {
        const double p = 4.0 * std::pow(3.0, -static_cast<double>(k + 1));
        pmf[k] = p;
        tail -= p;
    }
    pmf[0] = 1.0 / 3.0 + tail;
    return testutil::single_type(pmf, "ct-binary-skeleton");
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("step_population basics") {
    const BranchingModel binary = testutil::critical_binary();

    SUBCASE("zero population stays zero and consumes no draws") {
        RngStream stepped(5, 0), fresh(5, 0);
        const PopulationState next = step_population(binary, 0, {0}, stepped);
        CHECK(next == PopulationState{0});
        CHECK(stepped.next_u64() == fresh.next_u64());
    }

    SUBCASE("same seed and stream reproduce the same path") {
        RngStream a(123, 7), b(123, 7);
        PopulationState pa{5}, pb{5};
        for (std::int64_t n = 0; n < 10; ++n) {
            pa = step_population(binary, n, pa, a);
            pb = step_population(binary, n, pb, b);
            CHECK(pa == pb);
        }
    }

    SUBCASE("argument errors") {
        RngStream rng(1, 0);
        CHECK_THROWS_AS(step_population(binary, -1, {1}, rng), std::invalid_argument);
        CHECK_THROWS_AS(step_population(binary, 0, {-1}, rng), std::invalid_argument);
        CHECK_THROWS_AS(step_population(binary, 0, {1, 1}, rng), std::invalid_argument);
    }

    SUBCASE("exceeding the cap in a single step throws") {
        // deterministic tripling: 4 particles always step to 12 > 10
        const BranchingModel det = testutil::single_type({{3, 1.0}}, "det-tripling");
        RngStream rng(9, 0);
        CHECK_THROWS_WITH_AS(step_population(det, 0, {4}, rng, 10),
                             doctest::Contains("particle cap of 10"), std::runtime_error);
    }
}

TEST_CASE("one step reproduces the exact offspring distribution") {
    const BranchingModel model = testutil::twotype_small();
    const testutil::StatePmf exact = testutil::exact_pmf(model, {1, 1}, 1);

    const std::int64_t draws = 20000;
    std::map<testutil::State, std::int64_t> counts;
    RngStream rng(99, 0);
    for (std::int64_t r = 0; r < draws; ++r) {
        const PopulationState next = step_population(model, 0, {1, 1}, rng);
        ++counts[testutil::State(next.begin(), next.end())];
    }

    double total_freq = 0.0;
    for (const auto& [state, p] : exact) {
        const auto it = counts.find(state);
        const double freq =
            it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(draws);
        total_freq += freq;
        const double tol = 4.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(draws)) + 1e-3;
        CHECK(std::abs(freq - p) <= tol);
    }
    // no mass outside the exact support
    CHECK(total_freq == doctest::Approx(1.0));
}

TEST_CASE("zero replications give an empty ensemble") {
    const Ensemble ens = run_ensemble(testutil::critical_binary(), 5, 0, 1);
    CHECK(ens.replications == 0);
    CHECK(ens.terminal.empty());
    CHECK(ens.survived.empty());
    CHECK(ens.capped.empty());
    CHECK(ens.capped_count == 0);
    CHECK_THROWS_AS(conditioned_stats(ens, Vec::Ones(1)), std::invalid_argument);
}

TEST_CASE("ensembles are reproducible and thread-count invariant") {
    const BranchingModel model = testutil::twotype_period2();
    EnsembleOptions opts;
    opts.record_totals = true;

    const Ensemble a = run_ensemble(model, 12, 400, 31337, opts);
    const Ensemble b = run_ensemble(model, 12, 400, 31337, opts);
    CHECK(a.terminal == b.terminal);
    CHECK(a.survived == b.survived);
    CHECK(a.capped == b.capped);
    CHECK(a.totals == b.totals);

    EnsembleOptions threaded = opts;
    threaded.threads = 3;
    const Ensemble c = run_ensemble(model, 12, 400, 31337, threaded);
    CHECK(a.terminal == c.terminal);
    CHECK(a.survived == c.survived);
    CHECK(a.totals == c.totals);

    const Ensemble other = run_ensemble(model, 12, 400, 31338, opts);
    CHECK(a.terminal != other.terminal);

    // totals: R x (n+1), first column is the initial size, zero is absorbing
    REQUIRE(a.totals.size() == 400u * 13u);
    for (std::size_t r = 0; r < 400; ++r) {
        CHECK(a.totals[r * 13] == 1);
        CHECK(a.totals[r * 13 + 12] == terminal_total(a, r));
        for (std::size_t k = 0; k + 1 < 13; ++k)
            if (a.totals[r * 13 + k] == 0) CHECK(a.totals[r * 13 + k + 1] == 0);
    }
}

TEST_CASE("one-generation sample mean matches the offspring mean") {
    const Ensemble ens = run_ensemble(testutil::critical_binary(), 1, 100000, 7);
    std::vector<double> totals(static_cast<std::size_t>(ens.replications));
    for (std::size_t r = 0; r < totals.size(); ++r)
        totals[r] = static_cast<double>(terminal_total(ens, r));
    // E Z_1 = 1, sd = 1
    CHECK(std::abs(sample_mean(totals) - 1.0) <= 3.0 * mean_se(totals) + 1e-6);
}

TEST_CASE("terminal means track the mean-matrix product") {
    const BranchingModel model = testutil::twotype_mixing();
    const std::int64_t n = 10;
    Mat product = Mat::Identity(2, 2);
    for (std::int64_t k = 0; k < n; ++k) product = product * mean_matrix(model, k);

    const std::int64_t R = 200000;
    const Ensemble ens = run_ensemble(model, n, R, 5150);
    for (int i = 0; i < 2; ++i) {
        std::vector<double> xs(static_cast<std::size_t>(R));
        for (std::size_t r = 0; r < xs.size(); ++r)
            xs[r] = static_cast<double>(ens.terminal[r * 2 + static_cast<std::size_t>(i)]);
        // start is one particle of type 1, so E Z_n(i) is row 1 of the product
        CHECK(std::abs(sample_mean(xs) - product(0, i)) <= 3.0 * mean_se(xs) + 1e-6);
    }
}

TEST_CASE("seeded survival frequency matches the exact curve") {
    const Ensemble& ens = big_binary_run();
    REQUIRE(ens.replications == 1'000'000);
    CHECK(ens.capped_count == 0);

    std::int64_t survivors = 0;
    std::int64_t flag_mismatches = 0;
    for (std::size_t r = 0; r < static_cast<std::size_t>(ens.replications); ++r) {
        if (ens.survived[r] != (terminal_total(ens, r) > 0 ? 1 : 0)) ++flag_mismatches;
        survivors += ens.survived[r];
    }
    CHECK(flag_mismatches == 0);
    const double freq =
        static_cast<double>(survivors) / static_cast<double>(ens.replications);
    CHECK(std::abs(freq - binary_survival(100)) <= 0.0005);
}

TEST_CASE("conditioned survivor sizes follow a unit exponential") {
    const Ensemble& ens = big_binary_run();
    const ConditionedStats st = conditioned_stats(ens, Vec::Ones(1));

    std::int64_t survivors = 0;
    for (std::uint8_t s : ens.survived) survivors += s;
    CHECK(st.survivors == survivors);
    CHECK(st.samples.size() == static_cast<std::size_t>(survivors));  // nothing capped
    CHECK(st.survival_frequency ==
          doctest::Approx(static_cast<double>(survivors) / 1e6));

    CHECK(std::abs(sample_mean(st.samples) - 1.0) <= 1e-12);
    CHECK(st.min >= 0.0);
    CHECK(st.max > 1.0);
    // survivor mean is E[Z_n]/P(survive) = 1/p_n by the martingale property
    CHECK(std::abs(st.raw_mean - 1.0 / binary_survival(100)) <= 1.5);
    // exponential limit: KS distance dominated by the size-2 lattice spacing
    CHECK(ks_exponential(st.samples) < 0.05);
    // E[Z^2] = n + 1, so the normalized conditional variance is (n+1) p_n - 1
    CHECK(std::abs(st.variance - (101.0 * binary_survival(100) - 1.0)) <= 0.07);
}

TEST_CASE("supercritical extinction frequency matches the fixed point") {
    // q solves q = (1 + q^3)/2, i.e. (q - 1)(q^2 + q - 1) = 0
    const double q = (std::sqrt(5.0) - 1.0) / 2.0;
    EnsembleOptions opts;
    opts.particle_cap = 1000;
    const std::int64_t R = 20000;
    const Ensemble ens = run_ensemble(testutil::supercritical_tripling(), 60, R, 4242, opts);

    std::int64_t extinct = 0;
    for (std::uint8_t s : ens.survived) extinct += (s == 0);
    const double freq = static_cast<double>(extinct) / static_cast<double>(R);
    CHECK(std::abs(freq - q) <= 0.011);  // 3 sigma at R = 20000 is 0.0103

    // capped trajectories froze above the cap and count as survivors
    CHECK(ens.capped_count > 0);
    for (std::size_t r = 0; r < static_cast<std::size_t>(R); ++r)
        if (ens.capped[r]) {
            CHECK(ens.survived[r] == 1);
            CHECK(terminal_total(ens, r) > 1000);
        }
}

TEST_CASE("martingale increments are centered") {
    const BranchingModel model = testutil::twotype_period2();
    const std::int64_t n = 16;

    // same seed: trajectory r of the longer run extends trajectory r of the
    // shorter one, so the pair (Z_n, Z_{n+1}) is coupled per trajectory
    EnsembleOptions totals_opts;
    totals_opts.record_totals = true;
    const Ensemble small_n = run_ensemble(model, n, 200, 8080, totals_opts);
    const Ensemble small_n1 = run_ensemble(model, n + 1, 200, 8080, totals_opts);
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t r = 0; r < 200; ++r)
        for (std::size_t k = 0; k <= un; ++k)
            CHECK(small_n.totals[r * (un + 1) + k] == small_n1.totals[r * (un + 2) + k]);

    const std::int64_t R = 100000;
    const Ensemble at_n = run_ensemble(model, n, R, 8080);
    const Ensemble at_n1 = run_ensemble(model, n + 1, R, 8080);

    const EigenSequence seq = eigen_sequence(model, n + 1);
    std::vector<double> increments(static_cast<std::size_t>(R));
    for (std::size_t r = 0; r < increments.size(); ++r) {
        double wn = 0.0, wn1 = 0.0;
        for (int i = 0; i < 2; ++i) {
            wn += seq.v[static_cast<std::size_t>(n)][i] *
                  static_cast<double>(at_n.terminal[r * 2 + static_cast<std::size_t>(i)]);
            wn1 += seq.v[static_cast<std::size_t>(n) + 1][i] *
                   static_cast<double>(at_n1.terminal[r * 2 + static_cast<std::size_t>(i)]);
        }
        // A_n v_{n+1} = lambda_n v_n makes <Z, v> / Lambda a martingale
        increments[r] = wn1 - seq.lambda[static_cast<std::size_t>(n)] * wn;
    }
    CHECK(std::abs(sample_mean(increments)) <= 3.0 * mean_se(increments) + 1e-9);
}

TEST_CASE("normalized supercritical second moments stay bounded") {
    const double m = 1.5, var = 2.25;  // offspring mean and variance of {0, 3}
    const std::int64_t n = 14;
    const std::int64_t R = 20000;
    const Ensemble ens = run_ensemble(testutil::supercritical_tripling(), n, R, 11);

    const double scale = std::pow(m, static_cast<double>(n));
    std::vector<double> w2(static_cast<std::size_t>(R));
    for (std::size_t r = 0; r < w2.size(); ++r) {
        const double w = static_cast<double>(terminal_total(ens, r)) / scale;
        w2[r] = w * w;
    }
    // Var Z_n = var * m^(n-1) (m^n - 1)/(m - 1), so E W_n^2 -> 1 + var/(m^2 - m)
    const double var_z =
        var * std::pow(m, static_cast<double>(n - 1)) * (scale - 1.0) / (m - 1.0);
    const double expected = 1.0 + var_z / (scale * scale);
    CHECK(std::abs(sample_mean(w2) - expected) <= 3.0 * mean_se(w2) + 0.01);
    CHECK(sample_mean(w2) < 6.0);
}

TEST_CASE("ensemble covariance matches the analytic covariance sequence") {
    SUBCASE("one type, critical") {
        const std::int64_t n = 20, R = 200000;
        const std::vector<Mat> cov = covariance_sequence(testutil::critical_binary(), 0, n);
        REQUIRE(cov.size() == static_cast<std::size_t>(n) + 1);
        CHECK(cov.back()(0, 0) == doctest::Approx(static_cast<double>(n)));

        const Ensemble ens = run_ensemble(testutil::critical_binary(), n, R, 321);
        std::vector<double> xs(static_cast<std::size_t>(R));
        for (std::size_t r = 0; r < xs.size(); ++r)
            xs[r] = static_cast<double>(terminal_total(ens, r));
        const double mean = sample_mean(xs);
        std::vector<double> sq(xs.size());
        for (std::size_t r = 0; r < xs.size(); ++r) sq[r] = (xs[r] - mean) * (xs[r] - mean);
        CHECK(std::abs(sample_mean(sq) - cov.back()(0, 0)) <= 3.0 * mean_se(sq) + 0.01);
    }

    SUBCASE("two types") {
        const BranchingModel model = testutil::twotype_small();
        const std::int64_t n = 8, R = 100000;
        const Mat cov = covariance_sequence(model, 0, n).back();

        const Ensemble ens = run_ensemble(model, n, R, 654);
        std::vector<double> x0(static_cast<std::size_t>(R)), x1(x0.size());
        for (std::size_t r = 0; r < x0.size(); ++r) {
            x0[r] = static_cast<double>(ens.terminal[r * 2]);
            x1[r] = static_cast<double>(ens.terminal[r * 2 + 1]);
        }
        const double m0 = sample_mean(x0), m1 = sample_mean(x1);
        for (int p = 0; p < 2; ++p)
            for (int s = 0; s < 2; ++s) {
                const std::vector<double>& xp = p == 0 ? x0 : x1;
                const std::vector<double>& xq = s == 0 ? x0 : x1;
                const double mp = p == 0 ? m0 : m1;
                const double mq = s == 0 ? m0 : m1;
                std::vector<double> prod(xp.size());
                for (std::size_t r = 0; r < prod.size(); ++r)
                    prod[r] = (xp[r] - mp) * (xq[r] - mq);
                CHECK(std::abs(sample_mean(prod) - cov(p, s)) <=
                      3.0 * mean_se(prod) + 1e-3);
            }
    }
}

TEST_CASE("survivor composition aligns with the forward direction") {
    const BranchingModel model = testutil::twotype_period2();
    const std::int64_t n = 128, R = 400000;
    const EigenSequence seq = eigen_sequence(model, n);

    const Ensemble ens = run_ensemble(model, n, R, 777);
    double p0 = 0.0, p1 = 0.0;
    std::int64_t survivors = 0;
    for (std::size_t r = 0; r < static_cast<std::size_t>(R); ++r) {
        if (!ens.survived[r] || ens.capped[r]) continue;
        const double total = static_cast<double>(terminal_total(ens, r));
        p0 += static_cast<double>(ens.terminal[r * 2]) / total;
        p1 += static_cast<double>(ens.terminal[r * 2 + 1]) / total;
        ++survivors;
    }
    REQUIRE(survivors >= 1000);
    p0 /= static_cast<double>(survivors);
    p1 /= static_cast<double>(survivors);
    CHECK(std::abs(p0 - seq.u[static_cast<std::size_t>(n)][0]) < 0.05);
    CHECK(std::abs(p1 - seq.u[static_cast<std::size_t>(n)][1]) < 0.05);
}

TEST_CASE("conditioned statistics normalize the survivor samples") {
    const BranchingModel model = testutil::twotype_period2();
    const EigenSequence seq = eigen_sequence(model, 32);
    const Ensemble ens = run_ensemble(model, 32, 50000, 2718);
    const ConditionedStats st = conditioned_stats(ens, seq.v[32]);

    std::int64_t survivors = 0;
    for (std::uint8_t s : ens.survived) survivors += s;
    CHECK(st.survivors == survivors);
    CHECK(st.samples.size() == static_cast<std::size_t>(survivors - ens.capped_count));
    CHECK(std::abs(sample_mean(st.samples) - 1.0) <= 1e-12);
    CHECK(st.raw_mean > 0.0);
    CHECK(st.min <= 1.0);
    CHECK(st.max >= 1.0);

    double ss = 0.0;
    for (double x : st.samples) ss += (x - 1.0) * (x - 1.0);
    CHECK(st.variance ==
          doctest::Approx(ss / static_cast<double>(st.samples.size() - 1)));

    SUBCASE("weight vector must match the type count") {
        CHECK_THROWS_AS(conditioned_stats(ens, Vec::Ones(3)), std::invalid_argument);
    }
}

TEST_CASE("conditioning on an empty survivor set throws") {
    // survival by generation 80 is ~ 9e-8; 50 trajectories all die
    const Ensemble ens = run_ensemble(testutil::subcritical_decay(), 80, 50, 12);
    std::int64_t survivors = 0;
    for (std::uint8_t s : ens.survived) survivors += s;
    REQUIRE(survivors == 0);
    CHECK_THROWS_WITH_AS(conditioned_stats(ens, Vec::Ones(1)),
                         doctest::Contains("conditioning event is empty"),
                         std::runtime_error);
}

TEST_CASE("capped trajectories are survivors but never samples") {
    EnsembleOptions opts;
    opts.particle_cap = 100;
    const Ensemble ens = run_ensemble(testutil::supercritical_tripling(), 40, 500, 5, opts);
    REQUIRE(ens.capped_count > 0);

    std::int64_t uncapped_survivors = 0;
    for (std::size_t r = 0; r < 500; ++r) {
        if (ens.capped[r]) {
            CHECK(ens.survived[r] == 1);
            const std::int64_t total = terminal_total(ens, r);
            // frozen at the first crossing: above the cap, below one more step
            CHECK(total > 100);
            CHECK(total <= 300);
        } else if (ens.survived[r]) {
            ++uncapped_survivors;
        }
    }
    if (uncapped_survivors == 0) {
        CHECK_THROWS_AS(conditioned_stats(ens, Vec::Ones(1)), std::runtime_error);
    } else {
        const ConditionedStats st = conditioned_stats(ens, Vec::Ones(1));
        CHECK(st.samples.size() == static_cast<std::size_t>(uncapped_survivors));
        CHECK(st.survivors == uncapped_survivors + ens.capped_count);
    }
}

TEST_CASE("cap freeze holds the recorded totals constant") {
    EnsembleOptions opts;
    opts.particle_cap = 100;
    opts.record_totals = true;
    const std::int64_t n = 40;
    const Ensemble ens = run_ensemble(testutil::supercritical_tripling(), n, 200, 5, opts);
    REQUIRE(ens.capped_count > 0);
    for (std::size_t r = 0; r < 200; ++r) {
        if (!ens.capped[r]) continue;
        bool frozen = false;
        for (std::size_t k = 0; k <= static_cast<std::size_t>(n); ++k) {
            const std::int64_t cur = ens.totals[r * static_cast<std::size_t>(n + 1) + k];
            if (frozen)
                CHECK(cur == ens.totals[r * static_cast<std::size_t>(n + 1) + k - 1]);
            if (cur > opts.particle_cap) frozen = true;
        }
        CHECK(frozen);
    }
}

TEST_CASE("ks statistic closed forms") {
    // single sample at 1: ECDF jumps 0 -> 1, F(1) = 1 - 1/e
    CHECK(ks_exponential({1.0}) == doctest::Approx(1.0 - std::exp(-1.0)));
    // single sample at 0: F(0) = 0 against an ECDF that is already 1
    CHECK(ks_exponential({0.0}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(ks_exponential({}), std::invalid_argument);

    SUBCASE("mid-quantile grid attains the half-step floor") {
        const std::size_t n = 1000;
        std::vector<double> grid(n);
        for (std::size_t i = 0; i < n; ++i)
            grid[i] = -std::log1p(-(static_cast<double>(i) + 0.5) / static_cast<double>(n));
        CHECK(ks_exponential(grid) <= 0.5 / static_cast<double>(n) + 1e-9);
        CHECK(ks_exponential(grid) >= 0.5 / static_cast<double>(n) - 1e-9);
    }

    SUBCASE("seeded exponential draws pass at the 5% level") {
        std::vector<double> xs(10000);
        RngStream rng(2, 0);
        for (double& x : xs) x = rng.exponential(1.0);
        CHECK(ks_exponential(xs) < 0.0136);  // 1.358 / sqrt(n)
    }
}

TEST_CASE("ct model schedules pick the active piece") {
    CTModel model = ct_tripling();
    model.rates.push_back({2.0, {2.0}});
    check_structure(model);
    CHECK(model.rate_bound() == 2.0);
    CHECK(model.rates_at(0.0)[0] == 1.0);
    CHECK(model.rates_at(1.9)[0] == 1.0);
    CHECK(model.rates_at(2.0)[0] == 2.0);
    CHECK(model.rates_at(50.0)[0] == 2.0);
    CHECK(model.laws_at(5.0)[0].atoms.size() == 2);

    SUBCASE("structure errors") {
        CTModel bad = ct_binary();
        bad.rates[0].start = 0.5;
        CHECK_THROWS_AS(check_structure(bad), std::invalid_argument);

        bad = ct_binary();
        bad.rates.push_back({0.0, {1.0}});
        CHECK_THROWS_AS(check_structure(bad), std::invalid_argument);

        bad = ct_binary();
        bad.rates[0].rho = {1.0, 1.0};
        CHECK_THROWS_AS(check_structure(bad), std::invalid_argument);

        bad = ct_binary();
        bad.rates[0].rho = {-1.0};
        CHECK_THROWS_AS(check_structure(bad), std::invalid_argument);

        bad = ct_binary();
        bad.laws[0].laws[0].atoms[0].p = 0.4;
        CHECK_THROWS_WITH_AS(check_structure(bad), doctest::Contains("law piece"),
                             std::invalid_argument);

        bad = ct_binary();
        bad.laws.clear();
        CHECK_THROWS_AS(check_structure(bad), std::invalid_argument);
    }
}

TEST_CASE("ct simulation basics") {
    const CTModel model = ct_binary();

    SUBCASE("an empty start stays empty") {
        EnsembleOptions opts;
        opts.initial = {0};
        const Ensemble ens = simulate_ct(model, 5.0, 50, 3, opts);
        for (std::size_t r = 0; r < 50; ++r) {
            CHECK(ens.survived[r] == 0);
            CHECK(ens.terminal[r] == 0);
        }
    }

    SUBCASE("zero horizon returns the initial state") {
        const Ensemble ens = simulate_ct(model, 0.0, 20, 3);
        for (std::size_t r = 0; r < 20; ++r) {
            CHECK(ens.terminal[r] == 1);
            CHECK(ens.survived[r] == 1);
        }
    }

    SUBCASE("zero replications give an empty ensemble") {
        const Ensemble ens = simulate_ct(model, 5.0, 0, 3);
        CHECK(ens.replications == 0);
        CHECK(ens.terminal.empty());
        CHECK(ens.generations == -1);
        CHECK(ens.horizon_time == 5.0);
    }

    SUBCASE("deterministic and thread-count invariant") {
        const Ensemble a = simulate_ct(model, 8.0, 300, 17);
        const Ensemble b = simulate_ct(model, 8.0, 300, 17);
        EnsembleOptions threaded;
        threaded.threads = 3;
        const Ensemble c = simulate_ct(model, 8.0, 300, 17, threaded);
        CHECK(a.terminal == b.terminal);
        CHECK(a.survived == b.survived);
        CHECK(a.terminal == c.terminal);
    }

    SUBCASE("argument errors") {
        CHECK_THROWS_AS(simulate_ct(model, -1.0, 10, 3), std::invalid_argument);
        CHECK_THROWS_AS(simulate_ct(model, 1.0, -1, 3), std::invalid_argument);
        EnsembleOptions opts;
        opts.particle_cap = 0;
        CHECK_THROWS_AS(simulate_ct(model, 1.0, 10, 3, opts), std::invalid_argument);
    }
}

TEST_CASE("critical ct mean is conserved") {
    const Ensemble ens = simulate_ct(ct_binary(), 5.0, 100000, 13);
    std::vector<double> xs(static_cast<std::size_t>(ens.replications));
    for (std::size_t r = 0; r < xs.size(); ++r) xs[r] = static_cast<double>(ens.terminal[r]);
    CHECK(std::abs(sample_mean(xs) - 1.0) <= 3.0 * mean_se(xs) + 1e-6);
}

TEST_CASE("supercritical ct mean grows at the rate exponent") {
    // E Z_T = exp((m - 1) rho T) with m = 1.5, rho = 1
    const double expected = std::exp(0.5 * 3.0);
    const Ensemble ens = simulate_ct(ct_tripling(), 3.0, 50000, 29);
    std::vector<double> xs(static_cast<std::size_t>(ens.replications));
    for (std::size_t r = 0; r < xs.size(); ++r) xs[r] = static_cast<double>(ens.terminal[r]);
    CHECK(std::abs(sample_mean(xs) - expected) <= 3.0 * mean_se(xs));
}

TEST_CASE("ct survival matches the embedded unit-time skeleton") {
    const BranchingModel skeleton = ct_binary_skeleton();

    // closed form for the skeleton: survival after integer time T is 2/(T + 2)
    const SurvivalCurve curve = extinction_curve(skeleton, 50);
    CHECK(std::abs(curve.survival(1, 0) - 2.0 / 3.0) <= 1e-12);
    CHECK(std::abs(curve.survival(2, 0) - 0.5) <= 1e-12);
    const double predicted = curve.survival(50, 0);
    CHECK(std::abs(predicted - 1.0 / 26.0) <= 1e-12);

    const std::int64_t R = 100000;
    const Ensemble ens = simulate_ct(ct_binary(), 50.0, R, 77);
    std::int64_t survivors = 0;
    for (std::uint8_t s : ens.survived) survivors += s;
    const double freq = static_cast<double>(survivors) / static_cast<double>(R);
    CHECK(std::abs(freq - predicted) <= 0.00183);  // 3 sigma at R = 1e5
}

TEST_CASE("moment ode closed forms") {
    SUBCASE("critical flow is constant") {
        const MomentCurve curve = moment_ode(ct_binary(), 5.0, 1e-2, Vec::Ones(1));
        CHECK(curve.times.front() == 0.0);
        CHECK(curve.times.back() == doctest::Approx(5.0));
        for (const Vec& m : curve.means) CHECK(std::abs(m[0] - 1.0) <= 1e-10);
    }

    SUBCASE("constant-rate growth hits the exponential") {
        const MomentCurve curve = moment_ode(ct_tripling(), 4.0, 1e-3, Vec::Ones(1));
        CHECK(std::abs(curve.means.back()[0] - std::exp(2.0)) <= 1e-9);
        // transition is the same scalar flow
        CHECK(std::abs(curve.transition.back()(0, 0) - std::exp(2.0)) <= 1e-9);
    }

    SUBCASE("two-type symmetric flow matches its eigen decomposition") {
        CTModel model;
        model.d = 2;
        model.id = "ct-mixing";
        model.rates.push_back({0.0, {1.0, 1.0}});
        const BranchingModel base = testutil::twotype_mixing();
        model.laws.push_back({0.0, base.schedule[0].laws});

        const double T = 2.0;
        const MomentCurve curve = moment_ode(model, T, 1e-3, Vec::Unit(2, 0));
        // B = A - I with A = [[.5,.25],[.25,.5]]; eigenpairs (-1/4, (1,1)),
        // (-3/4, (1,-1)); m(t) = (e^{-t/4}(1,1) + e^{-3t/4}(1,-1)) / 2
        const double a = std::exp(-T / 4.0) / 2.0, b = std::exp(-3.0 * T / 4.0) / 2.0;
        CHECK(std::abs(curve.means.back()[0] - (a + b)) <= 1e-9);
        CHECK(std::abs(curve.means.back()[1] - (a - b)) <= 1e-9);
    }

    SUBCASE("piecewise rates integrate piece by piece") {
        CTModel model = ct_tripling();
        model.rates.push_back({2.0, {2.0}});
        const MomentCurve curve = moment_ode(model, 3.0, 1e-3, Vec::Ones(1));
        // exponent 0.5 * (1*2 + 2*1) = 2
        CHECK(std::abs(curve.means.back()[0] - std::exp(2.0)) <= 1e-9);
        // the grid lands exactly on the breakpoint, where the mean is e
        bool hit = false;
        for (std::size_t k = 0; k < curve.times.size(); ++k)
            if (curve.times[k] == 2.0) {
                hit = true;
                CHECK(std::abs(curve.means[k][0] - std::exp(1.0)) <= 1e-9);
            }
        CHECK(hit);
    }

    SUBCASE("transition matrix acts linearly on initial means") {
        CTModel model;
        model.d = 2;
        model.id = "ct-mixing";
        model.rates.push_back({0.0, {1.0, 1.0}});
        model.laws.push_back({0.0, testutil::twotype_mixing().schedule[0].laws});

        Vec m0(2);
        m0 << 0.3, 1.7;
        const MomentCurve from_unit = moment_ode(model, 1.5, 1e-3, Vec::Unit(2, 0));
        const MomentCurve from_m0 = moment_ode(model, 1.5, 1e-3, m0);
        const Vec predicted = from_unit.transition.back() * m0;
        CHECK(std::abs(predicted[0] - from_m0.means.back()[0]) <= 1e-12);
        CHECK(std::abs(predicted[1] - from_m0.means.back()[1]) <= 1e-12);
    }

    SUBCASE("zero horizon yields the single initial row") {
        const MomentCurve curve = moment_ode(ct_binary(), 0.0, 1e-2, Vec::Ones(1));
        REQUIRE(curve.times.size() == 1);
        CHECK(curve.times[0] == 0.0);
        CHECK(curve.means[0][0] == 1.0);
        CHECK(curve.transition[0](0, 0) == 1.0);
    }

    SUBCASE("argument errors") {
        CTModel model = ct_tripling();
        model.rates.push_back({0.5, {2.0}});
        CHECK_THROWS_WITH_AS(moment_ode(model, 1.0, 0.7, Vec::Ones(1)),
                             doctest::Contains("smallest gap"), std::invalid_argument);
        CHECK_THROWS_AS(moment_ode(model, 1.0, 0.0, Vec::Ones(1)), std::invalid_argument);
        CHECK_THROWS_AS(moment_ode(model, -1.0, 0.1, Vec::Ones(1)), std::invalid_argument);
        CHECK_THROWS_AS(moment_ode(model, 1.0, 0.1, Vec::Ones(2)), std::invalid_argument);
    }
}

TEST_CASE("csv writers emit one row per record") {
    const Ensemble ens = run_ensemble(testutil::twotype_mixing(), 2, 3, 44);
    std::ostringstream out;
    write_ensemble_csv(out, ens);
    std::istringstream lines(out.str());
    std::string line;
    REQUIRE(std::getline(lines, line));
    CHECK(line == "trajectory,survived,Z_1,Z_2");
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
        CHECK(line.rfind(std::to_string(rows) + ",", 0) == 0);
        ++rows;
    }
    CHECK(rows == 3);

    const MomentCurve curve = moment_ode(ct_binary(), 1.0, 0.25, Vec::Ones(1));
    std::ostringstream mout;
    write_moment_csv(mout, curve);
    std::istringstream mlines(mout.str());
    REQUIRE(std::getline(mlines, line));
    CHECK(line == "t,m_1");
    rows = 0;
    while (std::getline(mlines, line)) ++rows;
    CHECK(rows == curve.times.size());
}

}  // TEST_SUITE
