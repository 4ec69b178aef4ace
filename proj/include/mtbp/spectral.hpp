#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mtbp/model.hpp"

namespace mtbp {

/* ln(max_i v_i/u_i) - ln(min_i v_i/u_i) for strictly positive u, v.
 * Scale-invariant; any nonpositive component is a domain error.
 */
double hilbert_distance(const Vec& u, const Vec& v);

// M_{k,n} = A_k A_{k+1} ... A_{n-1}; M_{k,k} = I; k > n is a domain error
Mat product_matrix(const BranchingModel& model, std::int64_t k, std::int64_t n);

/* Direction sequences v_n, u_n (entrywise positive, l1-normalized) with the
 * step factors lambda_n, lambda_tilde_n:
 *   A_n v_{n+1} = lambda_n v_n,   A_n^T u_n = lambda_tilde_n u_{n+1},
 * v_n computed by a certified finite look-ahead (normalized column of
 * M_{n,n+k} applied to the uniform direction), u_n by exact forward recursion
 * from u0. Lambda_n / Lambda_tilde_n are the running products (Lambda_0 = 1),
 * kept both as plain products and in log space.
 * alignment_error bounds ||v_n - (true direction)||_1 uniformly in n.
 */
struct EigenSequence {
    std::int64_t horizon = 0;  // N: v,u defined for 0..N, factors for 0..N-1
    std::vector<Vec> v;
    std::vector<Vec> u;
    std::vector<double> lambda;
    std::vector<double> lambda_tilde;
    std::vector<double> Lambda;
    std::vector<double> Lambda_tilde;
    std::vector<double> log_Lambda;
    std::vector<double> log_Lambda_tilde;
    double alignment_error = 0.0;
    std::int64_t lookahead = 0;  // steps of look-ahead used for each v_n
    double min_component = 0.0;  // smallest entry across all v_n and u_n
    double tol = 0.0;
    Vec u0;
};

struct SpectralOptions {
    double tol = 1e-12;               // residual target for the eigen relation
    Vec u0;                           // default: uniform; normalized if needed
    std::int64_t max_lookahead = 200000;
};

/* Requires the positivity and moment checks to pass on every block the
 * computation touches (otherwise throws, naming the failing block and types).
 */
EigenSequence eigen_sequence(const BranchingModel& model, std::int64_t horizon,
                             const SpectralOptions& opts = {});

/* Empirical two-sided bounds over 0 <= k < n <= horizon:
 *   entry_band:   max over entries of M_{k,n}(j,i) / (Lambda_n/Lambda_k) and
 *                 its reciprocal,
 *   duality_band: max of Lambda_n/Lambda_tilde_n and its reciprocal.
 * Products are accumulated with scaling, so long horizons don't overflow.
 */
struct SpectralBand {
    double entry_band = 1.0;
    double duality_band = 1.0;
};
SpectralBand ratio_band(const BranchingModel& model, const EigenSequence& seq);

/* Columns: n, lambda, lambda_tilde, log_Lambda, log_Lambda_tilde,
 * v_1..v_d, u_1..u_d, alignment_error. Factors are nan on the last row.
 */
void write_spectral_csv(std::ostream& out, const EigenSequence& seq);

}
