#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mtbp/model.hpp"
#include "mtbp/rng.hpp"

namespace mtbp {

using PopulationState = std::vector<std::int64_t>;  // counts per type, >= 0

struct EnsembleOptions {
    PopulationState initial;                  // default: one particle of type 1
    std::int64_t particle_cap = 10'000'000;   // total count a trajectory may reach
    int threads = 1;
    bool record_totals = false;               // per-generation total sizes
};

/* Seeded batch of independent trajectories. Trajectory r is a pure function
 * of (seed, r): each one advances on its own RngStream(seed, r), so results
 * are identical for any thread count and any subset of trajectories.
 * Terminal states are row-major R x d. Capped trajectories stop evolving at
 * the generation the particle cap was exceeded and keep that state (they
 * count as surviving, and capped_count reports how many there were).
 */
struct Ensemble {
    std::string model_id;
    std::int64_t generations = 0;   // discrete horizon n (-1 for CT runs)
    double horizon_time = 0.0;      // CT horizon T (0 for discrete runs)
    std::int64_t replications = 0;
    std::uint64_t seed = 0;
    int d = 1;
    PopulationState initial;
    std::vector<std::int64_t> terminal;   // R*d
    std::vector<std::uint8_t> survived;   // R
    std::vector<std::uint8_t> capped;     // R
    std::int64_t capped_count = 0;
    std::vector<std::int64_t> totals;     // R*(n+1) when recorded, else empty
};

/* One synchronous generation: every particle of type j is replaced by a draw
 * from the step-n law for type j; draws consume the stream type-major, then
 * particle-major. A zero population stays zero without consuming draws.
 * Exceeding the particle cap here is an error (run_ensemble flags instead).
 */
PopulationState step_population(const BranchingModel& model, std::int64_t n,
                                const PopulationState& population, RngStream& rng,
                                std::int64_t particle_cap = 10'000'000);

Ensemble run_ensemble(const BranchingModel& model, std::int64_t generations,
                      std::int64_t replications, std::uint64_t seed,
                      const EnsembleOptions& opts = {});

/* Survivor statistics: samples are <terminal, weights> over surviving,
 * uncapped trajectories, divided by their sample mean (so the sample mean is
 * exactly 1). Throws if the ensemble is empty or no trajectory survived.
 */
struct ConditionedStats {
    std::vector<double> samples;
    double survival_frequency = 0.0;
    std::int64_t survivors = 0;
    double raw_mean = 0.0;   // mean of <terminal, weights> before normalizing
    double variance = 0.0;   // of the normalized samples
    double min = 0.0, max = 0.0;
};
ConditionedStats conditioned_stats(const Ensemble& ensemble, const Vec& weights);

/* sup_x |ECDF(x) - (1 - e^{-x})| over the sample; empty input is a domain error. */
double ks_exponential(const std::vector<double>& samples);

/* Continuous-time model: piecewise-constant per-type event rates and
 * piecewise-constant law schedules. Piece starts begin at 0 and increase
 * strictly; rate_bound is the global rate ceiling used for thinning.
 */
struct CTModel {
    int d = 1;
    struct RatePiece {
        double start = 0.0;
        std::vector<double> rho;  // one rate per type, > 0
    };
    struct LawPiece {
        double start = 0.0;
        std::vector<OffspringLaw> laws;  // one per type
    };
    std::vector<RatePiece> rates;
    std::vector<LawPiece> laws;
    std::string id;

    double rate_bound() const;  // max rate over pieces and types
    const std::vector<double>& rates_at(double t) const;
    const std::vector<OffspringLaw>& laws_at(double t) const;
};

void check_structure(const CTModel& model);

/* Exact event-driven simulation by thinning: proposals arrive at the global
 * ceiling rate_bound per particle and are accepted with rho_t(j)/rate_bound,
 * so piecewise-constant rates and laws are handled without time-stepping
 * error. Per event the stream is consumed in the fixed order: waiting time,
 * particle pick, acceptance, then (if accepted) the offspring draw.
 * Trajectory r again depends only on (seed, r).
 */
Ensemble simulate_ct(const CTModel& model, double horizon_time,
                     std::int64_t replications, std::uint64_t seed,
                     const EnsembleOptions& opts = {});

/* Mean flow m'(t) = B(t)^T m(t) with B_t(j,i) = rho_t(j) (E[X_t^j(i)] - 1{i=j}),
 * integrated with classical RK4 on a grid that lands exactly on every piece
 * boundary. A step larger than the smallest gap between breakpoints in
 * [0, T] is a domain error.
 */
struct MomentCurve {
    std::vector<double> times;
    std::vector<Vec> means;       // E Z_t for the given initial mean
    std::vector<Mat> transition;  // Phi(t) with m(t) = Phi(t) m(0)
};
MomentCurve moment_ode(const CTModel& model, double horizon_time, double step,
                       const Vec& initial_mean);

// Columns: trajectory, survived, Z_1..Z_d.
void write_ensemble_csv(std::ostream& out, const Ensemble& ensemble);

// Columns: t, m_1..m_d.
void write_moment_csv(std::ostream& out, const MomentCurve& curve);

}
