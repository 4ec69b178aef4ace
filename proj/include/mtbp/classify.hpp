#pragma once

#include <cstdint>
#include <string>

#include "mtbp/model.hpp"
#include "mtbp/spectral.hpp"

namespace mtbp {

enum class Verdict {
    SURVIVES,                        // positive survival probability
    EXTINCT_EXPONENTIAL_LIMIT,       // dies a.s.; conditioned size has an exponential limit
    EXTINCT_NO_EXPONENTIAL_LIMIT,    // dies a.s.; growth-decay rules that limit out
    INCONCLUSIVE                     // numeric path could not separate the regimes
};

const char* to_string(Verdict v);

struct ClassifyOptions {
    std::int64_t horizon = 4096;       // diagnostics horizon
    double rho_unit_tol = 1e-9;        // |rho^(1/L) - 1| below this counts as 1
    double saturation_threshold = 0.01;  // tail increment ratio below => converged
    double divergence_floor = 0.1;       // tail increment ratio above => diverging
    bool force_numeric = false;        // skip the exact tail path (diagnostics only)
    double spectral_tol = 1e-12;
};

/* Every model's tail is eventually periodic, so the per-cycle growth factor
 * rho (the positive eigenvalue of the one-cycle mean product) decides the
 * verdict exactly: rho > 1 survives, rho = 1 dies with an exponential limit,
 * rho < 1 dies without one. The numeric path (reported alongside, and used
 * when force_numeric is set) reads the same trichotomy off the tail
 * increments of xi_n and Lambda_n * xi_n and may return INCONCLUSIVE when the
 * horizon can't separate them.
 */
struct ClassificationReport {
    Verdict verdict = Verdict::INCONCLUSIVE;
    bool analytic_tail = false;
    double rho = 0.0;               // per-cycle factor
    double rho_per_step = 0.0;      // rho^(1/cycle_length)
    std::int64_t cycle_start = 0;
    std::int64_t cycle_length = 1;
    Verdict numeric_verdict = Verdict::INCONCLUSIVE;
    double xi_tail_ratio = 0.0;         // (xi_N - xi_{N/2}) / xi_N
    double lambda_xi_tail_ratio = 0.0;  // same for Lambda_n * xi_n
    std::int64_t horizon = 0;
    AssumptionReport assumptions;
    ClassifyOptions options;
};

ClassificationReport classify(const BranchingModel& model, const ClassifyOptions& opts = {});

// Full report as a JSON document (verdicts, factors, diagnostics, thresholds).
std::string classification_json(const ClassificationReport& report,
                                const std::string& tool_config_json = "{}");

}
