#include "mtbp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "mtbp/detail/format.hpp"

namespace mtbp {

namespace {

struct Kahan {
    double sum = 0.0, carry = 0.0;
    void add(double x) {
        double y = x - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

struct PositivityConstants {
    double eps0;     // smallest pair / zero mass over all blocks
    double k0;       // largest second moment
    double col_max;  // largest induced-l1 norm of any step matrix
};

// gate: every block needs all pair masses > 0 (zero mass is not required
// here, but contributes to eps0 when present)
PositivityConstants positivity_constants(const BranchingModel& model) {
    PositivityConstants c{std::numeric_limits<double>::infinity(), 0.0, 0.0};
    for (const auto& entry : model.schedule) {
        for (int j = 0; j < model.d; ++j) {
            const auto& law = entry.laws[static_cast<std::size_t>(j)];
            for (int i = 0; i < model.d; ++i) {
                const double pm = law.pair_mass(i);
                if (pm <= 0.0)
                    throw std::runtime_error(
                        "positivity check failed for the block starting at step " +
                        std::to_string(entry.start) + ", parent type " + std::to_string(j + 1) +
                        ", child type " + std::to_string(i + 1) +
                        ": P(at least two children of that type) = 0");
                c.eps0 = std::min(c.eps0, pm);
            }
            c.k0 = std::max(c.k0, law.second_moment_total());
        }
    }
    for (const auto& entry : model.schedule) {
        Mat a = Mat::Zero(model.d, model.d);
        for (int j = 0; j < model.d; ++j) {
            auto m = entry.laws[static_cast<std::size_t>(j)].mean();
            for (int i = 0; i < model.d; ++i) a(j, i) = m[static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < model.d; ++i) c.col_max = std::max(c.col_max, a.col(i).sum());
    }
    return c;
}

}  // namespace

double hilbert_distance(const Vec& u, const Vec& v) {
    if (u.size() != v.size()) throw std::invalid_argument("dimension mismatch");
    if (u.size() == 0) throw std::invalid_argument("empty vectors");
    double rmin = std::numeric_limits<double>::infinity();
    double rmax = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        if (!(u[i] > 0.0) || !(v[i] > 0.0))
            throw std::invalid_argument("projective distance needs strictly positive vectors");
        const double r = v[i] / u[i];
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
    }
    return std::log(rmax) - std::log(rmin);
}

Mat product_matrix(const BranchingModel& model, std::int64_t k, std::int64_t n) {
    if (k < 0 || k > n) throw std::invalid_argument("need 0 <= k <= n");
    Mat prod = Mat::Identity(model.d, model.d);
    for (std::int64_t t = k; t < n; ++t) prod = prod * mean_matrix(model, t);
    return prod;
}

EigenSequence eigen_sequence(const BranchingModel& model, std::int64_t horizon,
                             const SpectralOptions& opts) {
    check_structure(model);
    if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
    if (!(opts.tol > 0.0)) throw std::invalid_argument("tol must be > 0");

    const auto consts = positivity_constants(model);
    // every step-matrix entry lies in [eps0, sqrt(k0)], so one application
    // lands in a projective ball of diameter 2*log(ratio) and each further
    // step contracts by tanh(log(ratio)/2)
    const double ratio = std::max(std::sqrt(consts.k0) / consts.eps0, 1.0 + 1e-12);
    const double diam = 2.0 * std::log(ratio);
    const double contraction = std::tanh(std::log(ratio) / 2.0);

    // the certified direction error delta turns into an eigen-relation
    // residual of at most 2*lambda*delta, so aim below tol by that margin
    const double delta_target = opts.tol / (2.0 * (1.0 + consts.col_max));
    const double eps_target = std::log1p(delta_target);
    std::int64_t lookahead = 1;
    double eps_k = diam;
    while (eps_k > eps_target) {
        eps_k *= contraction;
        ++lookahead;
        if (lookahead > opts.max_lookahead)
            throw std::runtime_error(
                "alignment tolerance " + detail::csv_num(opts.tol) + " needs more than " +
                std::to_string(opts.max_lookahead) + " look-ahead steps (contraction rate " +
                detail::csv_num(contraction) + ")");
    }

    EigenSequence seq;
    seq.horizon = horizon;
    seq.lookahead = lookahead;
    seq.alignment_error = std::expm1(eps_k);
    seq.tol = opts.tol;

    // step matrices are cached per schedule block
    std::vector<Mat> block_mat(model.schedule.size());
    for (std::size_t b = 0; b < model.schedule.size(); ++b)
        block_mat[b] = mean_matrix(model, model.schedule[b].start);
    auto step = [&](std::int64_t t) -> const Mat& { return block_mat[model.block_index(t)]; };

    const int d = model.d;
    seq.v.resize(static_cast<std::size_t>(horizon) + 1);
    for (std::int64_t n = 0; n <= horizon; ++n) {
        Vec w = Vec::Constant(d, 1.0 / d);
        for (std::int64_t t = n + lookahead - 1; t >= n; --t) {
            w = step(t) * w;
            w /= w.sum();
        }
        seq.v[static_cast<std::size_t>(n)] = w;
    }

    Vec u0 = opts.u0.size() == 0 ? Vec::Constant(d, 1.0 / d) : opts.u0;
    if (u0.size() != d) throw std::invalid_argument("u0 has wrong dimension");
    for (Eigen::Index i = 0; i < u0.size(); ++i)
        if (!(u0[i] > 0.0)) throw std::invalid_argument("u0 must be strictly positive");
    u0 /= u0.sum();
    seq.u0 = u0;

    seq.u.resize(static_cast<std::size_t>(horizon) + 1);
    seq.u[0] = u0;
    seq.lambda.resize(static_cast<std::size_t>(horizon));
    seq.lambda_tilde.resize(static_cast<std::size_t>(horizon));
    seq.Lambda.assign(1, 1.0);
    seq.Lambda_tilde.assign(1, 1.0);
    seq.log_Lambda.assign(1, 0.0);
    seq.log_Lambda_tilde.assign(1, 0.0);
    Kahan log_l, log_lt;
    double prod_l = 1.0, prod_lt = 1.0;
    for (std::int64_t n = 0; n < horizon; ++n) {
        const Mat& a = step(n);
        const double lam = (a * seq.v[static_cast<std::size_t>(n) + 1]).sum();
        Vec unext = a.transpose() * seq.u[static_cast<std::size_t>(n)];
        const double lamt = unext.sum();
        unext /= lamt;
        seq.lambda[static_cast<std::size_t>(n)] = lam;
        seq.lambda_tilde[static_cast<std::size_t>(n)] = lamt;
        seq.u[static_cast<std::size_t>(n) + 1] = unext;
        prod_l *= lam;
        prod_lt *= lamt;
        log_l.add(std::log(lam));
        log_lt.add(std::log(lamt));
        seq.Lambda.push_back(prod_l);
        seq.Lambda_tilde.push_back(prod_lt);
        seq.log_Lambda.push_back(log_l.sum);
        seq.log_Lambda_tilde.push_back(log_lt.sum);
    }

    seq.min_component = std::numeric_limits<double>::infinity();
    for (const auto& w : seq.v) seq.min_component = std::min(seq.min_component, w.minCoeff());
    for (const auto& w : seq.u) seq.min_component = std::min(seq.min_component, w.minCoeff());
    return seq;
}

SpectralBand ratio_band(const BranchingModel& model, const EigenSequence& seq) {
    const std::int64_t n_max = seq.horizon;
    const int d = model.d;
    std::vector<Mat> step(static_cast<std::size_t>(n_max));
    for (std::int64_t t = 0; t < n_max; ++t) step[static_cast<std::size_t>(t)] = mean_matrix(model, t);

    SpectralBand band;
    for (std::int64_t k = 0; k < n_max; ++k) {
        Mat prod = Mat::Identity(d, d);
        double log_scale = 0.0;
        for (std::int64_t n = k + 1; n <= n_max; ++n) {
            prod = prod * step[static_cast<std::size_t>(n - 1)];
            const double m = prod.maxCoeff();
            if (m > 1e100 || m < 1e-100) {
                prod /= m;
                log_scale += std::log(m);
            }
            const double log_growth = seq.log_Lambda[static_cast<std::size_t>(n)] -
                                      seq.log_Lambda[static_cast<std::size_t>(k)];
            for (int j = 0; j < d; ++j)
                for (int i = 0; i < d; ++i) {
                    const double r =
                        std::exp(std::log(prod(j, i)) + log_scale - log_growth);
                    band.entry_band = std::max({band.entry_band, r, 1.0 / r});
                }
        }
    }
    for (std::int64_t n = 0; n <= n_max; ++n) {
        const double r = std::exp(seq.log_Lambda[static_cast<std::size_t>(n)] -
                                  seq.log_Lambda_tilde[static_cast<std::size_t>(n)]);
        band.duality_band = std::max({band.duality_band, r, 1.0 / r});
    }
    return band;
}

void write_spectral_csv(std::ostream& out, const EigenSequence& seq) {
    const int d = static_cast<int>(seq.v.front().size());
    out << "n,lambda,lambda_tilde,log_Lambda,log_Lambda_tilde";
    for (int i = 1; i <= d; ++i) out << ",v_" << i;
    for (int i = 1; i <= d; ++i) out << ",u_" << i;
    out << ",alignment_error\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::int64_t n = 0; n <= seq.horizon; ++n) {
        const auto idx = static_cast<std::size_t>(n);
        out << n << ',' << detail::csv_num(n < seq.horizon ? seq.lambda[idx] : nan) << ','
            << detail::csv_num(n < seq.horizon ? seq.lambda_tilde[idx] : nan) << ','
            << detail::csv_num(seq.log_Lambda[idx]) << ','
            << detail::csv_num(seq.log_Lambda_tilde[idx]);
        for (int i = 0; i < d; ++i) out << ',' << detail::csv_num(seq.v[idx][i]);
        for (int i = 0; i < d; ++i) out << ',' << detail::csv_num(seq.u[idx][i]);
        out << ',' << detail::csv_num(seq.alignment_error) << '\n';
    }
}

}
