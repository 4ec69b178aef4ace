#include "mtbp/classify.hpp"

#include "mtbp/version.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "json.hpp"

namespace mtbp {

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::SURVIVES: return "SURVIVES";
        case Verdict::EXTINCT_EXPONENTIAL_LIMIT: return "EXTINCT_EXPONENTIAL_LIMIT";
        case Verdict::EXTINCT_NO_EXPONENTIAL_LIMIT: return "EXTINCT_NO_EXPONENTIAL_LIMIT";
        case Verdict::INCONCLUSIVE: return "INCONCLUSIVE";
    }
    return "INCONCLUSIVE";
}

namespace {

double logaddexp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

// growth factor of one tail cycle: the unique positive eigenvalue of the
// cycle's mean-matrix product
double cycle_growth(const BranchingModel& model) {
    const std::int64_t base = model.cycle_start();
    const std::int64_t len = model.cycle_length();
    Mat prod = Mat::Identity(model.d, model.d);
    for (std::int64_t t = base; t < base + len; ++t) prod = prod * mean_matrix(model, t);
    if (model.d == 1) return prod(0, 0);
    Eigen::EigenSolver<Mat> solver(prod);
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i)
        best = std::max(best, solver.eigenvalues()[i].real());
    return best;
}

}  // namespace

ClassificationReport classify(const BranchingModel& model, const ClassifyOptions& opts) {
    check_structure(model);
    if (opts.horizon < 4) throw std::invalid_argument("classification horizon must be >= 4");

    ClassificationReport rep;
    rep.options = opts;
    rep.horizon = opts.horizon;
    rep.assumptions = validate_model(model, std::min<std::int64_t>(opts.horizon, 256));
    if (!rep.assumptions.pass())
        throw std::runtime_error(
            "classification requires the positivity and extinction checks to pass; "
            "run validate for the failing blocks");

    rep.cycle_start = model.cycle_start();
    rep.cycle_length = model.cycle_length();
    rep.rho = cycle_growth(model);
    rep.rho_per_step = std::pow(rep.rho, 1.0 / static_cast<double>(rep.cycle_length));

    Verdict analytic;
    if (std::abs(rep.rho_per_step - 1.0) <= opts.rho_unit_tol)
        analytic = Verdict::EXTINCT_EXPONENTIAL_LIMIT;
    else if (rep.rho_per_step > 1.0)
        analytic = Verdict::SURVIVES;
    else
        analytic = Verdict::EXTINCT_NO_EXPONENTIAL_LIMIT;

    // numeric diagnostics: a convergent sum has a vanishing tail increment;
    // the growth-weighted sum separates the two extinct regimes. xi_n is
    // sum_{m<=n} 1/Lambda_m, accumulated in log scale straight off the
    // growth factors; only the half and full partial sums enter the ratios.
    SpectralOptions sopts;
    sopts.tol = opts.spectral_tol;
    const EigenSequence seq = eigen_sequence(model, opts.horizon, sopts);
    const auto half = static_cast<std::size_t>(opts.horizon / 2);
    const auto full = static_cast<std::size_t>(opts.horizon);
    const double neg_inf = -std::numeric_limits<double>::infinity();
    double log_xi = neg_inf, log_xi_half = neg_inf;
    for (std::size_t n = 1; n <= full; ++n) {
        log_xi = logaddexp(log_xi, -seq.log_Lambda[n]);
        if (n == half) log_xi_half = log_xi;
    }
    rep.xi_tail_ratio = -std::expm1(log_xi_half - log_xi);
    const double lx_half = seq.log_Lambda[half] + log_xi_half;
    const double lx_full = seq.log_Lambda[full] + log_xi;
    rep.lambda_xi_tail_ratio = -std::expm1(lx_half - lx_full);

    if (rep.xi_tail_ratio < opts.saturation_threshold)
        rep.numeric_verdict = Verdict::SURVIVES;
    else if (rep.lambda_xi_tail_ratio >= opts.divergence_floor)
        rep.numeric_verdict = Verdict::EXTINCT_EXPONENTIAL_LIMIT;
    else if (rep.lambda_xi_tail_ratio < opts.saturation_threshold)
        rep.numeric_verdict = Verdict::EXTINCT_NO_EXPONENTIAL_LIMIT;
    else
        rep.numeric_verdict = Verdict::INCONCLUSIVE;

    rep.analytic_tail = !opts.force_numeric;
    rep.verdict = opts.force_numeric ? rep.numeric_verdict : analytic;
    return rep;
}

std::string classification_json(const ClassificationReport& report,
                                const std::string& tool_config_json) {
    nlohmann::ordered_json j;
    j["tool"] = {{"name", "mtbp"}, {"version", version}};
    j["config"] = nlohmann::ordered_json::parse(tool_config_json);
    j["verdict"] = to_string(report.verdict);
    j["tail"] = {{"analytic", report.analytic_tail},
                 {"rho", report.rho},
                 {"rho_per_step", report.rho_per_step},
                 {"cycle_start", report.cycle_start},
                 {"cycle_length", report.cycle_length}};
    j["numeric"] = {{"verdict", to_string(report.numeric_verdict)},
                    {"xi_tail_ratio", report.xi_tail_ratio},
                    {"lambda_xi_tail_ratio", report.lambda_xi_tail_ratio},
                    {"horizon", report.horizon}};
    j["thresholds"] = {{"rho_unit_tol", report.options.rho_unit_tol},
                       {"saturation_threshold", report.options.saturation_threshold},
                       {"divergence_floor", report.options.divergence_floor}};
    const auto& a = report.assumptions;
    j["checks"] = {{"positivity_all", a.positivity_all},
                   {"extinction_all", a.extinction_all},
                   {"finite_support", a.finite_support},
                   {"epsilon0", a.epsilon0},
                   {"k0", a.k0},
                   {"min_second_factorial", a.min_second_factorial},
                   {"product_entry_min", a.product_entry_min},
                   {"product_entry_max", a.product_entry_max},
                   {"max_mean_rowsum", a.max_mean_rowsum}};
    return j.dump(2) + "\n";
}

}
