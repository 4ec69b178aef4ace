#include "mtbp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "mtbp/detail/format.hpp"

namespace mtbp {

namespace {

/* Inverse-CDF table for one law. The cumulative array is normalized by the
 * law's total mass and its last entry is pinned to 1, so every u in [0,1)
 * lands on an atom.
 */
struct LawSampler {
    const OffspringLaw* law = nullptr;
    std::vector<double> cdf;
};

LawSampler make_sampler(const OffspringLaw& law) {
    LawSampler s;
    s.law = &law;
    s.cdf.reserve(law.atoms.size());
    const double total = law.total_mass();
    double acc = 0.0;
    for (const Atom& a : law.atoms) {
        acc += a.p;
        s.cdf.push_back(acc / total);
    }
    s.cdf.back() = 1.0;
    return s;
}

const Atom& sample_atom(const LawSampler& s, RngStream& rng) {
    const double u = rng.uniform();
    const auto it = std::upper_bound(s.cdf.begin(), s.cdf.end(), u);
    const auto idx = static_cast<std::size_t>(it - s.cdf.begin());
    return s.law->atoms[idx];
}

std::vector<std::vector<LawSampler>> block_tables(const BranchingModel& model) {
    std::vector<std::vector<LawSampler>> tables(model.schedule.size());
    for (std::size_t b = 0; b < model.schedule.size(); ++b)
        for (const OffspringLaw& law : model.schedule[b].laws)
            tables[b].push_back(make_sampler(law));
    return tables;
}

std::int64_t total_count(const PopulationState& population) {
    std::int64_t t = 0;
    for (std::int64_t c : population) t += c;
    return t;
}

// one synchronous generation against prebuilt samplers; draws are consumed
// type-major then particle-major
PopulationState step_with(const std::vector<LawSampler>& samplers,
                          const PopulationState& population, RngStream& rng) {
    const auto d = population.size();
    PopulationState next(d, 0);
    for (std::size_t j = 0; j < d; ++j)
        for (std::int64_t p = 0; p < population[j]; ++p) {
            const Atom& a = sample_atom(samplers[j], rng);
            for (std::size_t i = 0; i < d; ++i) next[i] += a.offspring[i];
        }
    return next;
}

void check_population(const PopulationState& population, int d) {
    if (population.size() != static_cast<std::size_t>(d))
        throw std::invalid_argument("population must have one count per type");
    for (std::int64_t c : population)
        if (c < 0) throw std::invalid_argument("population counts must be nonnegative");
}

}  // namespace

PopulationState step_population(const BranchingModel& model, std::int64_t n,
                                const PopulationState& population, RngStream& rng,
                                std::int64_t particle_cap) {
    check_structure(model);
    if (n < 0) throw std::invalid_argument("generation index must be nonnegative");
    check_population(population, model.d);
    if (total_count(population) == 0) return population;

    std::vector<LawSampler> samplers;
    for (const OffspringLaw& law : model.laws_at(n)) samplers.push_back(make_sampler(law));
    PopulationState next = step_with(samplers, population, rng);
    if (total_count(next) > particle_cap)
        throw std::runtime_error("population exceeded the particle cap of " +
                                 std::to_string(particle_cap));
    return next;
}

Ensemble run_ensemble(const BranchingModel& model, std::int64_t generations,
                      std::int64_t replications, std::uint64_t seed,
                      const EnsembleOptions& opts) {
    check_structure(model);
    if (generations < 0) throw std::invalid_argument("generations must be nonnegative");
    if (replications < 0) throw std::invalid_argument("replications must be nonnegative");
    if (opts.particle_cap < 1) throw std::invalid_argument("particle cap must be positive");
    if (opts.threads < 1) throw std::invalid_argument("thread count must be positive");

    PopulationState initial = opts.initial;
    if (initial.empty()) {
        initial.assign(static_cast<std::size_t>(model.d), 0);
        initial[0] = 1;
    }
    check_population(initial, model.d);

    const auto tables = block_tables(model);
    const auto d = static_cast<std::size_t>(model.d);
    const auto R = static_cast<std::size_t>(replications);
    const auto n = static_cast<std::size_t>(generations);

    Ensemble ens;
    ens.model_id = model.id;
    ens.generations = generations;
    ens.horizon_time = 0.0;
    ens.replications = replications;
    ens.seed = seed;
    ens.d = model.d;
    ens.initial = initial;
    ens.terminal.assign(R * d, 0);
    ens.survived.assign(R, 0);
    ens.capped.assign(R, 0);
    if (opts.record_totals) ens.totals.assign(R * (n + 1), 0);

    const auto run_range = [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            RngStream rng(seed, static_cast<std::uint64_t>(r));
            PopulationState population = initial;
            bool capped = false;
            if (opts.record_totals) ens.totals[r * (n + 1)] = total_count(population);
            for (std::size_t t = 0; t < n; ++t) {
                if (!capped && total_count(population) > 0) {
                    population = step_with(tables[model.block_index(static_cast<std::int64_t>(t))],
                                           population, rng);
                    if (total_count(population) > opts.particle_cap) capped = true;
                }
                if (opts.record_totals) ens.totals[r * (n + 1) + t + 1] = total_count(population);
            }
            for (std::size_t i = 0; i < d; ++i) ens.terminal[r * d + i] = population[i];
            ens.survived[r] = total_count(population) > 0 ? 1 : 0;
            ens.capped[r] = capped ? 1 : 0;
        }
    };

    const auto threads = static_cast<std::size_t>(std::min<std::int64_t>(opts.threads, replications));
    if (threads <= 1) {
        run_range(0, R);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (R + threads - 1) / threads;
        for (std::size_t k = 0; k < threads; ++k) {
            const std::size_t r0 = k * chunk;
            const std::size_t r1 = std::min(R, r0 + chunk);
            if (r0 >= r1) break;
            pool.emplace_back(run_range, r0, r1);
        }
        for (std::thread& th : pool) th.join();
    }

    for (std::uint8_t c : ens.capped) ens.capped_count += c;
    return ens;
}

ConditionedStats conditioned_stats(const Ensemble& ensemble, const Vec& weights) {
    if (ensemble.replications < 1) throw std::invalid_argument("ensemble is empty");
    if (weights.size() != ensemble.d)
        throw std::invalid_argument("weights must have one entry per type");

    const auto d = static_cast<std::size_t>(ensemble.d);
    ConditionedStats st;
    for (std::size_t r = 0; r < static_cast<std::size_t>(ensemble.replications); ++r) {
        if (!ensemble.survived[r]) continue;
        ++st.survivors;
        if (ensemble.capped[r]) continue;
        double x = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            x += weights[static_cast<Eigen::Index>(i)] *
                 static_cast<double>(ensemble.terminal[r * d + i]);
        st.samples.push_back(x);
    }
    st.survival_frequency =
        static_cast<double>(st.survivors) / static_cast<double>(ensemble.replications);
    if (st.samples.empty())
        throw std::runtime_error("conditioning event is empty: no surviving uncapped trajectory");

    double sum = 0.0;
    for (double x : st.samples) sum += x;
    st.raw_mean = sum / static_cast<double>(st.samples.size());
    if (!(st.raw_mean > 0.0))
        throw std::runtime_error("survivor mean is not positive; cannot normalize");
    for (double& x : st.samples) x /= st.raw_mean;

    double ss = 0.0;
    st.min = std::numeric_limits<double>::infinity();
    st.max = -std::numeric_limits<double>::infinity();
    for (double x : st.samples) {
        ss += (x - 1.0) * (x - 1.0);
        st.min = std::min(st.min, x);
        st.max = std::max(st.max, x);
    }
    st.variance = st.samples.size() > 1 ? ss / static_cast<double>(st.samples.size() - 1) : 0.0;
    return st;
}

double ks_exponential(const std::vector<double>& samples) {
    if (samples.empty()) throw std::invalid_argument("ks statistic needs at least one sample");
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = sorted[i] <= 0.0 ? 0.0 : -std::expm1(-sorted[i]);
        d = std::max(d, f - static_cast<double>(i) / n);
        d = std::max(d, static_cast<double>(i + 1) / n - f);
    }
    return d;
}

double CTModel::rate_bound() const {
    double bound = 0.0;
    for (const RatePiece& piece : rates)
        for (double r : piece.rho) bound = std::max(bound, r);
    return bound;
}

namespace {
template <class Piece>
const Piece& piece_at(const std::vector<Piece>& pieces, double t) {
    std::size_t lo = 0;
    for (std::size_t k = 1; k < pieces.size(); ++k)
        if (pieces[k].start <= t) lo = k;
    return pieces[lo];
}
}  // namespace

const std::vector<double>& CTModel::rates_at(double t) const { return piece_at(rates, t).rho; }

const std::vector<OffspringLaw>& CTModel::laws_at(double t) const {
    return piece_at(laws, t).laws;
}

void check_structure(const CTModel& model) {
    if (model.d < 1) throw std::invalid_argument("type count must be at least 1");
    if (model.rates.empty()) throw std::invalid_argument("rate schedule is empty");
    if (model.laws.empty()) throw std::invalid_argument("law schedule is empty");
    if (model.rates.front().start != 0.0)
        throw std::invalid_argument("rate schedule must start at time 0");
    if (model.laws.front().start != 0.0)
        throw std::invalid_argument("law schedule must start at time 0");
    for (std::size_t k = 0; k < model.rates.size(); ++k) {
        const auto& piece = model.rates[k];
        if (k > 0 && !(piece.start > model.rates[k - 1].start))
            throw std::invalid_argument("rate piece starts must increase strictly");
        if (!std::isfinite(piece.start) || piece.start < 0.0)
            throw std::invalid_argument("rate piece starts must be finite and nonnegative");
        if (piece.rho.size() != static_cast<std::size_t>(model.d))
            throw std::invalid_argument("each rate piece needs one rate per type");
        for (double r : piece.rho)
            if (!std::isfinite(r) || r <= 0.0)
                throw std::invalid_argument("branching rates must be finite and positive");
    }
    for (std::size_t k = 0; k < model.laws.size(); ++k) {
        const auto& piece = model.laws[k];
        if (k > 0 && !(piece.start > model.laws[k - 1].start))
            throw std::invalid_argument("law piece starts must increase strictly");
        if (!std::isfinite(piece.start) || piece.start < 0.0)
            throw std::invalid_argument("law piece starts must be finite and nonnegative");
        if (piece.laws.size() != static_cast<std::size_t>(model.d))
            throw std::invalid_argument("each law piece needs one law per type");
        for (std::size_t j = 0; j < piece.laws.size(); ++j)
            detail::check_law(piece.laws[j], model.d,
                              "law piece " + std::to_string(k) + ", type " +
                                  std::to_string(j + 1));
    }
}

Ensemble simulate_ct(const CTModel& model, double horizon_time, std::int64_t replications,
                     std::uint64_t seed, const EnsembleOptions& opts) {
    check_structure(model);
    if (!(horizon_time >= 0.0) || !std::isfinite(horizon_time))
        throw std::invalid_argument("time horizon must be finite and nonnegative");
    if (replications < 0) throw std::invalid_argument("replications must be nonnegative");
    if (opts.particle_cap < 1) throw std::invalid_argument("particle cap must be positive");
    if (opts.threads < 1) throw std::invalid_argument("thread count must be positive");

    PopulationState initial = opts.initial;
    if (initial.empty()) {
        initial.assign(static_cast<std::size_t>(model.d), 0);
        initial[0] = 1;
    }
    check_population(initial, model.d);

    // one sampler table per law piece
    std::vector<std::vector<LawSampler>> tables(model.laws.size());
    for (std::size_t k = 0; k < model.laws.size(); ++k)
        for (const OffspringLaw& law : model.laws[k].laws)
            tables[k].push_back(make_sampler(law));
    const auto table_at = [&](double t) -> const std::vector<LawSampler>& {
        std::size_t lo = 0;
        for (std::size_t k = 1; k < model.laws.size(); ++k)
            if (model.laws[k].start <= t) lo = k;
        return tables[lo];
    };

    const double bound = model.rate_bound();
    const auto d = static_cast<std::size_t>(model.d);
    const auto R = static_cast<std::size_t>(replications);

    Ensemble ens;
    ens.model_id = model.id;
    ens.generations = -1;
    ens.horizon_time = horizon_time;
    ens.replications = replications;
    ens.seed = seed;
    ens.d = model.d;
    ens.initial = initial;
    ens.terminal.assign(R * d, 0);
    ens.survived.assign(R, 0);
    ens.capped.assign(R, 0);

    const auto run_range = [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            RngStream rng(seed, static_cast<std::uint64_t>(r));
            PopulationState population = initial;
            bool capped = false;
            double t = 0.0;
            /* Thinning loop: proposals arrive at rate bound*total; each is a
             * real event with probability rho_t(type)/bound. The stream order
             * per proposal is fixed: waiting time, particle pick, acceptance,
             * offspring (accepted proposals only).
             */
            while (true) {
                const std::int64_t total = total_count(population);
                if (total == 0) break;
                if (total > opts.particle_cap) {
                    capped = true;
                    break;
                }
                t += rng.exponential(bound * static_cast<double>(total));
                if (t > horizon_time) break;
                const double u = rng.uniform();
                auto pick = static_cast<std::int64_t>(u * static_cast<double>(total));
                pick = std::min(pick, total - 1);
                std::size_t type = 0;
                std::int64_t acc = population[0];
                while (pick >= acc) {
                    ++type;
                    acc += population[type];
                }
                const double accept = rng.uniform();
                const std::vector<double>& rho = model.rates_at(t);
                if (accept * bound >= rho[type]) continue;
                const Atom& a = sample_atom(table_at(t)[type], rng);
                population[type] -= 1;
                for (std::size_t i = 0; i < d; ++i) population[i] += a.offspring[i];
            }
            for (std::size_t i = 0; i < d; ++i) ens.terminal[r * d + i] = population[i];
            ens.survived[r] = total_count(population) > 0 ? 1 : 0;
            ens.capped[r] = capped ? 1 : 0;
        }
    };

    const auto threads = static_cast<std::size_t>(std::min<std::int64_t>(opts.threads, replications));
    if (threads <= 1) {
        run_range(0, R);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (R + threads - 1) / threads;
        for (std::size_t k = 0; k < threads; ++k) {
            const std::size_t r0 = k * chunk;
            const std::size_t r1 = std::min(R, r0 + chunk);
            if (r0 >= r1) break;
            pool.emplace_back(run_range, r0, r1);
        }
        for (std::thread& th : pool) th.join();
    }

    for (std::uint8_t c : ens.capped) ens.capped_count += c;
    return ens;
}

MomentCurve moment_ode(const CTModel& model, double horizon_time, double step,
                       const Vec& initial_mean) {
    check_structure(model);
    if (!(horizon_time >= 0.0) || !std::isfinite(horizon_time))
        throw std::invalid_argument("time horizon must be finite and nonnegative");
    if (!(step > 0.0) || !std::isfinite(step))
        throw std::invalid_argument("step must be finite and positive");
    if (initial_mean.size() != model.d)
        throw std::invalid_argument("initial mean must have one entry per type");

    // breakpoints of either schedule inside [0, T], deduplicated
    std::vector<double> breaks{0.0, horizon_time};
    for (const auto& piece : model.rates)
        if (piece.start > 0.0 && piece.start < horizon_time) breaks.push_back(piece.start);
    for (const auto& piece : model.laws)
        if (piece.start > 0.0 && piece.start < horizon_time) breaks.push_back(piece.start);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < breaks.size(); ++k)
        min_gap = std::min(min_gap, breaks[k] - breaks[k - 1]);
    if (horizon_time > 0.0 && step > min_gap)
        throw std::invalid_argument("step exceeds the smallest gap between schedule breakpoints");

    const auto drift_at = [&](double t) {
        const std::vector<double>& rho = model.rates_at(t);
        const std::vector<OffspringLaw>& laws = model.laws_at(t);
        Mat b(model.d, model.d);
        for (int j = 0; j < model.d; ++j) {
            const std::vector<double> m = laws[static_cast<std::size_t>(j)].mean();
            for (int i = 0; i < model.d; ++i)
                b(j, i) = rho[static_cast<std::size_t>(j)] *
                          (m[static_cast<std::size_t>(i)] - (i == j ? 1.0 : 0.0));
        }
        return b;
    };

    MomentCurve curve;
    Mat phi = Mat::Identity(model.d, model.d);
    curve.times.push_back(0.0);
    curve.transition.push_back(phi);
    curve.means.push_back(initial_mean);

    for (std::size_t k = 1; k < breaks.size(); ++k) {
        const double a = breaks[k - 1];
        const double b = breaks[k];
        const auto substeps = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::ceil((b - a) / step - 1e-12)));
        const double h = (b - a) / static_cast<double>(substeps);
        for (std::int64_t s = 0; s < substeps; ++s) {
            const double t0 = a + h * static_cast<double>(s);
            const double t1 = s + 1 == substeps ? b : t0 + h;
            // the drift is constant on (a, b); sample it mid-substep
            const Mat bt = drift_at((t0 + t1) / 2.0).transpose();
            const Mat k1 = bt * phi;
            const Mat k2 = bt * (phi + (h / 2.0) * k1);
            const Mat k3 = bt * (phi + (h / 2.0) * k2);
            const Mat k4 = bt * (phi + h * k3);
            phi = phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            curve.times.push_back(t1);
            curve.transition.push_back(phi);
            curve.means.push_back(phi * initial_mean);
        }
    }
    return curve;
}

void write_ensemble_csv(std::ostream& out, const Ensemble& ensemble) {
    out << "trajectory,survived";
    for (int i = 1; i <= ensemble.d; ++i) out << ",Z_" << i;
    out << "\n";
    const auto d = static_cast<std::size_t>(ensemble.d);
    for (std::size_t r = 0; r < static_cast<std::size_t>(ensemble.replications); ++r) {
        out << r << "," << static_cast<int>(ensemble.survived[r]);
        for (std::size_t i = 0; i < d; ++i) out << "," << ensemble.terminal[r * d + i];
        out << "\n";
    }
}

void write_moment_csv(std::ostream& out, const MomentCurve& curve) {
    const auto d = curve.means.empty() ? 0 : curve.means.front().size();
    out << "t";
    for (Eigen::Index i = 1; i <= d; ++i) out << ",m_" << i;
    out << "\n";
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
        out << detail::csv_num(curve.times[k]);
        for (Eigen::Index i = 0; i < d; ++i) out << "," << detail::csv_num(curve.means[k][i]);
        out << "\n";
    }
}

}
