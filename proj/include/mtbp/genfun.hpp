#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mtbp/model.hpp"
#include "mtbp/spectral.hpp"

namespace mtbp {

// g_n applied once: component j is pgf_eval(laws_at(n)[j], s)
Vec apply_generation(const BranchingModel& model, std::int64_t n, const Vec& s);

// f_{k,n}(s) = g_k(g_{k+1}(... g_{n-1}(s))); f_{k,k}(s) = s; k > n is a domain error
Vec compose_pgf(const BranchingModel& model, std::int64_t k, std::int64_t n, const Vec& s);

/* Non-extinction probabilities per starting type:
 *   survival(n, j) = 1 - f_{0,n}^j(0) = P(Z_n != 0 | Z_0 = e_j).
 * Computed backwards through 1 - g in expm1/log1p form, which is stable down
 * to the underflow edge; below ~1e-250 iteration continues on a normalized
 * direction with a log-scale (linear update plus the retained quadratic
 * correction), so log_survival stays finite when survival underflows to 0.
 */
struct SurvivalCurve {
    Mat survival;      // (horizon+1) x d
    Mat log_survival;  // natural logs, finite even when survival == 0
};
SurvivalCurve extinction_curve(const BranchingModel& model, std::int64_t horizon);

/* Survival of the fixed-horizon event {Z_n != 0} viewed from time k <= n,
 * i.e. w(j) = 1 - f_{k,n}^j(s) for the given terminal s; returned as a
 * direction + log norm so deep tails stay representable.
 */
struct ScaledVec {
    Vec hat;              // l1-normalized, entrywise >= 0
    double log_norm = 0;  // value = exp(log_norm) * hat
};
ScaledVec survival_from(const BranchingModel& model, std::int64_t k, std::int64_t n,
                        const Vec& one_minus_s);

/* Cumulative series over the factor products, per step n:
 *   xi_n    = sum_{k<n} 1/Lambda_{k+1}
 *   gamma_n = (1/2) sum_{k<n} <v_{k+1}^T H_k(1) v_{k+1}, u_k> /
 *             (lambda_k Lambda_tilde_{k+1} <v_{k+1},u_{k+1}> <v_k,u_k>)
 * (H_k(1)^j the step-k type-j pgf Hessian at 1). Linear values use
 * compensated summation and may saturate to inf on long subcritical horizons;
 * the log columns are always finite. alpha0 is alpha_eval at s = 0 (nan at
 * n = 0), with log_alpha0 its stable log-space companion.
 */
struct SeriesTable {
    std::int64_t horizon = 0;
    std::vector<double> xi, gamma;
    std::vector<double> log_xi, log_gamma;
    std::vector<double> log_Lambda;
    Mat survival;      // rows 0..horizon, columns per starting type
    Mat log_survival;
    std::vector<double> alpha0;
    std::vector<double> log_alpha0;
};
SeriesTable series_table(const BranchingModel& model, const EigenSequence& seq,
                         std::int64_t horizon);

/* alpha(n, s) = 1/<1 - f_{0,n}(s), u_0> - 1/(Lambda_tilde_n <1 - s, u_n>),
 * the correction that closes the harmonic-sum identity for <1-f, u_0>.
 * Requires 0 <= s <= 1 with s != 1, and 1 <= n <= seq.horizon.
 */
double alpha_eval(const BranchingModel& model, const EigenSequence& seq,
                  std::int64_t n, const Vec& s);

// Columns: n, Xi, Gamma, log_Lambda, surv_1..surv_d, alpha0.
void write_series_csv(std::ostream& out, const SeriesTable& table);

}
