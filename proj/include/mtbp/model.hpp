#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mtbp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/* One offspring outcome: a vector of child counts per type and its probability. */
struct Atom {
    std::vector<std::int64_t> offspring;
    double p = 0.0;
};

/* Finite-support offspring distribution for one parent type at one time step.
 * Atom offspring vectors are distinct, probabilities are nonnegative and sum
 * to 1 within 1e-12 (checked by check_structure / the JSON loader).
 */
struct OffspringLaw {
    std::vector<Atom> atoms;

    // P(child count of the given type >= 2)
    double pair_mass(int type) const;
    // P(no children at all)
    double zero_mass() const;
    double total_mass() const;
    // E[sum_i X_i]^2-moment: E[(X_1+...+X_d)^2]
    double second_moment_total() const;
    // E[X_i (X_i - 1)], the diagonal second factorial moment
    double second_factorial(int type) const;
    std::vector<double> mean() const;
};

enum class TailMode { repeat_last, periodic };

/* Extends a finite schedule to all times: either the last block repeats
 * forever, or the final `period` step indices cycle.
 */
struct TailPolicy {
    TailMode mode = TailMode::repeat_last;
    std::int64_t period = 1;
};

/* Laws for all types, taking effect at step `start` (until the next entry). */
struct ScheduleEntry {
    std::int64_t start = 0;
    std::vector<OffspringLaw> laws;  // one per type
};

/* Time-indexed multi-type branching model: at step n every particle of type j
 * is replaced by a draw from laws_at(n)[j], independently across particles.
 * Schedule starts are strictly increasing beginning at 0; the tail policy
 * defines laws for every n >= schedule_end().
 */
struct BranchingModel {
    int d = 1;
    std::vector<ScheduleEntry> schedule;
    TailPolicy tail;
    std::string id;  // optional name echoed into artifacts

    // first index governed by the tail policy (= last start + 1)
    std::int64_t schedule_end() const;
    // index of the schedule entry whose laws apply at step n (tail resolved)
    std::size_t block_index(std::int64_t n) const;
    const std::vector<OffspringLaw>& laws_at(std::int64_t n) const;
    // step index the tail cycle starts at (schedule_end - period; repeat_last
    // tails cycle the single last block)
    std::int64_t cycle_start() const;
    std::int64_t cycle_length() const;
};

/* Throws std::invalid_argument on structural defects: empty/ragged schedules,
 * non-increasing starts, dimension mismatches, negative offspring counts or
 * probabilities, duplicate atoms, pmf mass off 1 by more than 1e-12, or a
 * periodic tail longer than the schedule it cycles.
 */
void check_structure(const BranchingModel& model);

namespace detail {
// single-law structural check; `where` prefixes the error message
void check_law(const OffspringLaw& law, int d, const std::string& where);
}

/* Positivity / moment summary for one schedule block and parent type. */
struct AssumptionCell {
    std::int64_t start = 0;   // first step the block covers
    std::int64_t end = 0;     // one past the last covered step; -1 = unbounded
    int type = 0;             // parent type
    std::vector<double> pair_mass;        // per child type: P(X_i >= 2)
    double zero_mass = 0.0;               // P(X = 0)
    double second_moment = 0.0;           // E[(X_1+...+X_d)^2]
    std::vector<double> second_factorial; // per child type: E[X_i(X_i-1)]
    bool positivity_pass = false;         // all pair_mass > 0
    bool extinction_pass = false;         // zero_mass > 0
};

/* Model-wide report. Periodic/constant tails collapse the per-step checks to
 * one pass over the distinct schedule blocks; `cells` covers every step that
 * way. epsilon0 is the smallest of all pair and zero masses, k0 the largest
 * second moment; both are the constants the contraction and growth bounds
 * are built from. product_entry_* bound the entries of the step-k mean-matrix
 * products over the horizon (uniform-criticality diagnostic), max_mean_rowsum
 * bounds E[|Z_{n+k}|  given one type-j parent at n].
 */
struct AssumptionReport {
    int d = 1;
    std::int64_t horizon = 0;
    std::vector<AssumptionCell> cells;
    double epsilon0 = 0.0;
    double k0 = 0.0;
    double min_second_factorial = 0.0;
    bool positivity_all = false;   // every cell has all pair masses > 0
    bool extinction_all = false;   // every cell has zero mass > 0
    bool moments_finite = true;    // finite support makes every moment finite
    bool finite_support = true;    // uniform-integrability proxy
    double product_entry_min = 0.0;
    double product_entry_max = 0.0;
    std::int64_t product_min_n = 0, product_min_k = 0;
    std::int64_t product_max_n = 0, product_max_k = 0;
    double max_mean_rowsum = 0.0;

    bool pass() const { return positivity_all && extinction_all && moments_finite; }
};

/* Structural validation plus the positivity/moment report over the horizon. */
AssumptionReport validate_model(const BranchingModel& model, std::int64_t horizon = 64);

/* g_n^j as a function of s in [0,1]^d: sum_a p_a * prod_i s_i^{a_i} (0^0 = 1).
 * s outside the unit box is a domain error.
 */
double pgf_eval(const OffspringLaw& law, const Vec& s);

// A_n(j, i) = E[children of type i from one type-j parent at step n]
Mat mean_matrix(const BranchingModel& model, std::int64_t n);

// Hessian of the law's pgf at s (in [0,1]^d); symmetric by construction
Mat pgf_hessian(const OffspringLaw& law, const Vec& s);

struct SkipOptions {
    double mass_tol = 1e-9;              // in (0, 1e-6]
    std::size_t support_cap = 1'000'000;  // atoms kept per working distribution
};

struct SkipResult {
    BranchingModel model;      // the l-step process, same type space
    double truncated_mass = 0; // largest mass dropped while building any law
};

/* Exact l-step subsampling: the returned model's step-n law is the
 * distribution of Z_{(n+1)l} given Z_{nl} = e_j, built by iterated
 * convolution. Support is truncated (smallest atoms first) only while the
 * total dropped mass stays below mass_tol; each law is renormalized and the
 * dropped mass reported. Exceeding the support cap beyond that budget is an
 * error naming the cap. l = 0 is a domain error.
 */
SkipResult skip_generations(const BranchingModel& model, std::int64_t l,
                            const SkipOptions& opts = {});

/* Covariance matrices D_n of Z_n started from one particle of type j:
 * D_0 = 0,  D_{n+1} = A_n^T D_n A_n + sum_i E[Z_n(i)] * C_n(i)
 * where C_n(i) is the offspring covariance of type i at step n. Every D_n is
 * symmetric positive semidefinite.
 */
std::vector<Mat> covariance_sequence(const BranchingModel& model, int start_type,
                                     std::int64_t horizon);

}
