#include "mtbp/genfun.hpp"

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
        // past the overflow edge the sum must park at +inf, not turn NaN
        carry = std::isfinite(t) ? (t - sum) - y : 0.0;
        sum = t;
    }
};

double logaddexp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

/* 1 - g(1 - w) per type, evaluated as sum_a p_a * (-expm1(sum_i a_i log1p(-w_i))),
 * which keeps full relative precision for survival masses all the way down to
 * the underflow edge.
 */
Vec one_minus_g(const std::vector<OffspringLaw>& laws, const Vec& w) {
    const int d = static_cast<int>(w.size());
    Vec lw(d);
    for (int i = 0; i < d; ++i) lw[i] = std::log1p(-w[i]);  // -inf at w_i == 1 is fine
    Vec out(d);
    for (int j = 0; j < d; ++j) {
        Kahan acc;
        for (const auto& atom : laws[static_cast<std::size_t>(j)].atoms) {
            double e = 0.0;
            bool dead = false;  // some factor (1-w_i)^{a_i} equals exactly 0
            for (int i = 0; i < d; ++i) {
                const std::int64_t a = atom.offspring[static_cast<std::size_t>(i)];
                if (a == 0) continue;
                if (lw[i] == -std::numeric_limits<double>::infinity()) { dead = true; break; }
                e += static_cast<double>(a) * lw[i];
            }
            acc.add(dead ? atom.p : atom.p * -std::expm1(e));
        }
        out[j] = acc.sum;
    }
    return out;
}

constexpr double scale_down_at = 1e-250;  // leave the linear representation here
constexpr double scale_up_at = 1e-200;    // and rejoin it here

}  // namespace

Vec apply_generation(const BranchingModel& model, std::int64_t n, const Vec& s) {
    if (s.size() != model.d) throw std::invalid_argument("argument has wrong dimension");
    const auto& laws = model.laws_at(n);
    Vec out(model.d);
    for (int j = 0; j < model.d; ++j) out[j] = pgf_eval(laws[static_cast<std::size_t>(j)], s);
    return out;
}

Vec compose_pgf(const BranchingModel& model, std::int64_t k, std::int64_t n, const Vec& s) {
    check_structure(model);
    if (k < 0 || k > n) throw std::invalid_argument("need 0 <= k <= n");
    Vec cur = s;
    for (std::int64_t t = n - 1; t >= k; --t) cur = apply_generation(model, t, cur);
    return cur;
}

ScaledVec survival_from(const BranchingModel& model, std::int64_t k, std::int64_t n,
                        const Vec& one_minus_s) {
    if (k < 0 || k > n) throw std::invalid_argument("need 0 <= k <= n");
    if (one_minus_s.size() != model.d) throw std::invalid_argument("argument has wrong dimension");
    for (Eigen::Index i = 0; i < one_minus_s.size(); ++i)
        if (!(one_minus_s[i] >= 0.0) || one_minus_s[i] > 1.0)
            throw std::invalid_argument("pgf argument outside [0,1]^d");

    const int d = model.d;
    Vec w = one_minus_s;
    bool scaled = false;
    Vec hat;
    double log_norm = 0.0;

    for (std::int64_t t = n - 1; t >= k; --t) {
        const auto& laws = model.laws_at(t);
        if (!scaled) {
            if (w.maxCoeff() == 0.0) return {Vec::Zero(d), -std::numeric_limits<double>::infinity()};
            if (w.maxCoeff() < scale_down_at) {
                log_norm = std::log(w.sum());
                hat = w / w.sum();
                scaled = true;
            }
        }
        if (!scaled) {
            w = one_minus_g(laws, w);
        } else {
            // linear propagation of the direction, with the quadratic pgf
            // term retained at the current scale (it is O(|w|) relative here
            // and only matters right at the switch boundary)
            const Mat a = mean_matrix(model, t);
            Vec y = a * hat;
            const double s = std::exp(log_norm);
            if (s > 0.0) {
                for (int j = 0; j < d; ++j) {
                    const Mat h = pgf_hessian(laws[static_cast<std::size_t>(j)], Vec::Ones(d));
                    y[j] -= 0.5 * s * hat.dot(h * hat);
                }
            }
            for (int j = 0; j < d; ++j) y[j] = std::max(y[j], 0.0);
            const double norm = y.sum();
            log_norm += std::log(norm);
            hat = y / norm;
            if (std::exp(log_norm) > scale_up_at) {
                w = std::exp(log_norm) * hat;
                scaled = false;
            }
        }
    }
    if (!scaled) {
        const double norm = w.sum();
        if (norm == 0.0) return {Vec::Zero(d), -std::numeric_limits<double>::infinity()};
        return {w / norm, std::log(norm)};
    }
    return {hat, log_norm};
}

SurvivalCurve extinction_curve(const BranchingModel& model, std::int64_t horizon) {
    check_structure(model);
    if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
    SurvivalCurve curve;
    curve.survival = Mat::Zero(horizon + 1, model.d);
    curve.log_survival = Mat::Zero(horizon + 1, model.d);
    curve.survival.row(0).setOnes();
    for (std::int64_t n = 1; n <= horizon; ++n) {
        const ScaledVec sv = survival_from(model, 0, n, Vec::Ones(model.d));
        for (int j = 0; j < model.d; ++j) {
            curve.survival(n, j) = std::exp(sv.log_norm) * sv.hat[j];
            curve.log_survival(n, j) = sv.log_norm + std::log(sv.hat[j]);
        }
    }
    return curve;
}

SeriesTable series_table(const BranchingModel& model, const EigenSequence& seq,
                         std::int64_t horizon) {
    check_structure(model);
    if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
    if (seq.horizon < horizon)
        throw std::invalid_argument("eigen sequence horizon is shorter than requested");

    const int d = model.d;
    SeriesTable table;
    table.horizon = horizon;
    table.survival = Mat::Zero(horizon + 1, d);
    table.log_survival = Mat::Zero(horizon + 1, d);
    table.survival.row(0).setOnes();

    const double neg_inf = -std::numeric_limits<double>::infinity();
    table.xi.assign(1, 0.0);
    table.gamma.assign(1, 0.0);
    table.log_xi.assign(1, neg_inf);
    table.log_gamma.assign(1, neg_inf);
    table.log_Lambda.assign(seq.log_Lambda.begin(),
                            seq.log_Lambda.begin() + static_cast<std::ptrdiff_t>(horizon) + 1);
    table.alpha0.assign(1, std::numeric_limits<double>::quiet_NaN());
    table.log_alpha0.assign(1, std::numeric_limits<double>::quiet_NaN());

    Kahan xi_acc, gamma_acc;
    double log_xi = neg_inf, log_gamma = neg_inf;
    for (std::int64_t n = 1; n <= horizon; ++n) {
        const auto k = static_cast<std::size_t>(n - 1);
        const double log_xi_term = -seq.log_Lambda[k + 1];
        xi_acc.add(std::exp(log_xi_term));
        log_xi = logaddexp(log_xi, log_xi_term);

        const auto& laws = model.laws_at(n - 1);
        const Vec& vk1 = seq.v[k + 1];
        double num = 0.0;
        for (int j = 0; j < d; ++j) {
            const Mat h = pgf_hessian(laws[static_cast<std::size_t>(j)], Vec::Ones(d));
            num += seq.u[k][j] * vk1.dot(h * vk1);
        }
        const double log_term = std::log(0.5) + std::log(num) - std::log(seq.lambda[k]) -
                                seq.log_Lambda_tilde[k + 1] -
                                std::log(vk1.dot(seq.u[k + 1])) -
                                std::log(seq.v[k].dot(seq.u[k]));
        gamma_acc.add(std::exp(log_term));
        log_gamma = logaddexp(log_gamma, log_term);

        table.xi.push_back(xi_acc.sum);
        table.gamma.push_back(gamma_acc.sum);
        table.log_xi.push_back(log_xi);
        table.log_gamma.push_back(log_gamma);

        const ScaledVec sv = survival_from(model, 0, n, Vec::Ones(d));
        for (int j = 0; j < d; ++j) {
            table.survival(n, j) = std::exp(sv.log_norm) * sv.hat[j];
            table.log_survival(n, j) = sv.log_norm + std::log(sv.hat[j]);
        }

        // alpha(n, 0): <1 - s, u_n> = 1 at s = 0 because u_n is l1-normalized
        const double log_dot = sv.log_norm + std::log(sv.hat.dot(seq.u0));
        const double a = -log_dot;
        const double b = -seq.log_Lambda_tilde[k + 1];
        const double log_alpha =
            b >= a ? neg_inf : a + std::log1p(-std::exp(b - a));  // alpha >= 0
        table.log_alpha0.push_back(log_alpha);
        table.alpha0.push_back(std::exp(log_alpha));
    }
    return table;
}

double alpha_eval(const BranchingModel& model, const EigenSequence& seq, std::int64_t n,
                  const Vec& s) {
    if (n < 1) throw std::invalid_argument("alpha needs n >= 1");
    if (n > seq.horizon) throw std::invalid_argument("eigen sequence horizon is too short");
    if (s.size() != model.d) throw std::invalid_argument("argument has wrong dimension");
    bool all_one = true;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (!(s[i] >= 0.0) || s[i] > 1.0)
            throw std::invalid_argument("pgf argument outside [0,1]^d");
        if (s[i] != 1.0) all_one = false;
    }
    if (all_one) throw std::invalid_argument("alpha is undefined at s = 1");

    const Vec w_end = Vec::Ones(model.d) - s;
    const ScaledVec sv = survival_from(model, 0, n, w_end);
    const double log_dot0 = sv.log_norm + std::log(sv.hat.dot(seq.u0));
    const double log_dotn = std::log(w_end.dot(seq.u[static_cast<std::size_t>(n)]));
    const double a = -log_dot0;
    const double b = -(seq.log_Lambda_tilde[static_cast<std::size_t>(n)] + log_dotn);
    if (b >= a) return 0.0;  // numerically degenerate; alpha is >= 0
    return std::exp(a + std::log1p(-std::exp(b - a)));
}

void write_series_csv(std::ostream& out, const SeriesTable& table) {
    const int d = static_cast<int>(table.survival.cols());
    out << "n,Xi,Gamma,log_Lambda";
    for (int i = 1; i <= d; ++i) out << ",surv_" << i;
    out << ",alpha0\n";
    for (std::int64_t n = 0; n <= table.horizon; ++n) {
        const auto idx = static_cast<std::size_t>(n);
        out << n << ',' << detail::csv_num(table.xi[idx]) << ','
            << detail::csv_num(table.gamma[idx]) << ','
            << detail::csv_num(table.log_Lambda[idx]);
        for (int i = 0; i < d; ++i) out << ',' << detail::csv_num(table.survival(n, i));
        out << ',' << detail::csv_num(table.alpha0[idx]) << '\n';
    }
}

}
