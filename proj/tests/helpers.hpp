#pragma once

// Shared builders and reference implementations for the test suite.  The
// reference code below recomputes everything from first principles (exact
// distribution enumeration, polynomial composition, dense eigensolves) so
// library results can be checked against independent arithmetic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mtbp/model.hpp"
#include "mtbp/rng.hpp"

namespace testutil {

using mtbp::Atom;
using mtbp::BranchingModel;
using mtbp::OffspringLaw;
using mtbp::ScheduleEntry;
using mtbp::TailMode;

using AtomSpec = std::pair<std::vector<std::int64_t>, double>;

inline OffspringLaw law_from(const std::vector<AtomSpec>& atoms) {
    OffspringLaw law;
    for (const auto& [offspring, p] : atoms) law.atoms.push_back(Atom{offspring, p});
    return law;
}

inline BranchingModel constant_model(int d, std::vector<OffspringLaw> laws, std::string id) {
    BranchingModel m;
    m.d = d;
    m.schedule.push_back(ScheduleEntry{0, std::move(laws)});
    m.tail.mode = TailMode::repeat_last;
    m.id = std::move(id);
    return m;
}

inline BranchingModel single_type(const std::map<std::int64_t, double>& pmf, std::string id) {
    OffspringLaw law;
    for (const auto& [k, p] : pmf) law.atoms.push_back(Atom{{k}, p});
    return constant_model(1, {law}, std::move(id));
}

// one-type examples used throughout: unit mean, mean 1.5, mean 0.8
inline BranchingModel critical_binary() {
    return single_type({{0, 0.5}, {2, 0.5}}, "critical-binary");
}

inline BranchingModel supercritical_tripling() {
    return single_type({{0, 0.5}, {3, 0.5}}, "supercritical-tripling");
}

inline BranchingModel subcritical_decay() {
    return single_type({{0, 0.6}, {2, 0.4}}, "subcritical-decay");
}

// period-2 schedule whose one-cycle mean product [[.5,.5],[.5,.5]]x[[.25,.25],[.75,.75]]
// has unit spectral radius
inline BranchingModel twotype_period2() {
    OffspringLaw diag = law_from({{{0, 0}, 0.625}, {{1, 1}, 0.25}, {{2, 2}, 0.125}});
    OffspringLaw low1 =
        law_from({{{0, 0}, 0.6875}, {{1, 0}, 0.125}, {{0, 1}, 0.125}, {{2, 2}, 0.0625}});
    OffspringLaw low2 =
        law_from({{{0, 0}, 0.25}, {{1, 0}, 0.25}, {{0, 1}, 0.25}, {{2, 2}, 0.25}});
    BranchingModel m;
    m.d = 2;
    m.schedule.push_back(ScheduleEntry{0, {diag, diag}});
    m.schedule.push_back(ScheduleEntry{1, {low1, low2}});
    m.tail.mode = TailMode::periodic;
    m.tail.period = 2;
    m.id = "twotype-period2";
    return m;
}

// constant two-type model with mean matrix [[.5,.25],[.25,.5]]
inline BranchingModel twotype_mixing() {
    OffspringLaw a =
        law_from({{{0, 0}, 0.4375}, {{1, 0}, 0.375}, {{0, 1}, 0.125}, {{2, 2}, 0.0625}});
    OffspringLaw b =
        law_from({{{0, 0}, 0.4375}, {{0, 1}, 0.375}, {{1, 0}, 0.125}, {{2, 2}, 0.0625}});
    return constant_model(2, {a, b}, "twotype-mixing");
}

// type 1 cannot die out in a single step but can once two steps are merged
inline BranchingModel skipgap_twotype() {
    OffspringLaw a = law_from({{{1, 0}, 0.45}, {{0, 1}, 0.5}, {{2, 2}, 0.05}});
    OffspringLaw b = law_from({{{0, 0}, 0.8}, {{2, 2}, 0.2}});
    return constant_model(2, {a, b}, "skipgap-twotype");
}

// small two-type law with at most two children per individual, cheap to enumerate
inline BranchingModel twotype_small() {
    OffspringLaw a = law_from({{{0, 0}, 0.5}, {{1, 1}, 0.25}, {{2, 0}, 0.25}});
    OffspringLaw b = law_from({{{0, 0}, 0.5}, {{0, 2}, 0.25}, {{1, 1}, 0.25}});
    return constant_model(2, {a, b}, "twotype-small");
}

// ---------------------------------------------------------------------------
// exact population distributions by direct convolution (small models only)

using State = std::vector<std::int64_t>;
using StatePmf = std::map<State, double>;

inline StatePmf state_convolve(const StatePmf& a, const StatePmf& b) {
    StatePmf out;
    for (const auto& [x, px] : a)
        for (const auto& [y, py] : b) {
            State z(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] + y[i];
            out[z] += px * py;
        }
    return out;
}

inline StatePmf law_pmf(const OffspringLaw& law, std::size_t d) {
    StatePmf out;
    for (const auto& atom : law.atoms) {
        State z = atom.offspring;
        z.resize(d, 0);
        out[z] += atom.p;
    }
    return out;
}

// distribution of the population after n steps, starting from z0
inline StatePmf exact_pmf(const BranchingModel& model, const State& z0, int n) {
    const auto d = static_cast<std::size_t>(model.d);
    StatePmf pmf{{z0, 1.0}};
    for (int step = 0; step < n; ++step) {
        const auto& laws = model.laws_at(step);
        // per-type tables of z-fold self-convolutions, grown on demand
        std::vector<std::vector<StatePmf>> powers(d);
        for (std::size_t j = 0; j < d; ++j) powers[j].push_back({{State(d, 0), 1.0}});
        StatePmf next;
        for (const auto& [z, pz] : pmf) {
            StatePmf dist{{State(d, 0), 1.0}};
            for (std::size_t j = 0; j < d; ++j) {
                auto& pw = powers[j];
                while (static_cast<std::int64_t>(pw.size()) <= z[j])
                    pw.push_back(state_convolve(pw.back(), law_pmf(laws[j], d)));
                dist = state_convolve(dist, pw[static_cast<std::size_t>(z[j])]);
            }
            for (const auto& [k, pk] : dist) next[k] += pz * pk;
        }
        pmf = std::move(next);
    }
    return pmf;
}

inline std::map<std::int64_t, double> exact_pmf_1d(const std::map<std::int64_t, double>& law,
                                                   int n) {
    BranchingModel m = single_type(law, "scratch");
    StatePmf pmf = exact_pmf(m, {1}, n);
    std::map<std::int64_t, double> out;
    for (const auto& [z, p] : pmf) out[z[0]] += p;
    return out;
}

inline double pmf_survival(const StatePmf& pmf) {
    double dead = 0.0;
    for (const auto& [z, p] : pmf)
        if (std::all_of(z.begin(), z.end(), [](std::int64_t c) { return c == 0; })) dead += p;
    return 1.0 - dead;
}

inline std::vector<double> pmf_mean(const StatePmf& pmf) {
    std::vector<double> m;
    for (const auto& [z, p] : pmf) {
        if (m.empty()) m.assign(z.size(), 0.0);
        for (std::size_t i = 0; i < z.size(); ++i) m[i] += p * static_cast<double>(z[i]);
    }
    return m;
}

inline std::vector<std::vector<double>> pmf_covariance(const StatePmf& pmf) {
    const std::vector<double> m = pmf_mean(pmf);
    std::vector<std::vector<double>> c(m.size(), std::vector<double>(m.size(), 0.0));
    for (const auto& [z, p] : pmf)
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t j = 0; j < m.size(); ++j)
                c[i][j] += p * (static_cast<double>(z[i]) - m[i]) *
                           (static_cast<double>(z[j]) - m[j]);
    return c;
}

// ---------------------------------------------------------------------------
// one-type generating functions as plain polynomials

using Poly = std::vector<double>;  // coefficient of s^k at index k

inline Poly poly_from(const std::map<std::int64_t, double>& pmf) {
    std::int64_t deg = 0;
    for (const auto& [k, p] : pmf) deg = std::max(deg, k);
    Poly c(static_cast<std::size_t>(deg) + 1, 0.0);
    for (const auto& [k, p] : pmf) c[static_cast<std::size_t>(k)] += p;
    return c;
}

inline Poly poly_mul(const Poly& a, const Poly& b) {
    Poly out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

// f(g(s)) by Horner over polynomial coefficients
inline Poly poly_compose(const Poly& f, const Poly& g) {
    Poly out{0.0};
    for (std::size_t i = f.size(); i-- > 0;) {
        out = poly_mul(out, g);
        out[0] += f[i];
    }
    return out;
}

inline double poly_eval(const Poly& c, double s) {
    double acc = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) acc = acc * s + c[i];
    return acc;
}

// ---------------------------------------------------------------------------
// random laws for differentiation cross-checks; every type keeps a zero atom
// and an atom with a repeated child so the structural checks pass

inline OffspringLaw random_law(mtbp::RngStream& rng, int d) {
    OffspringLaw law;
    const auto dim = static_cast<std::size_t>(d);
    std::vector<std::vector<std::int64_t>> supports;
    supports.push_back(std::vector<std::int64_t>(dim, 0));
    {
        std::vector<std::int64_t> pair(dim, 0);
        pair[static_cast<std::size_t>(rng.next_u64() % static_cast<std::uint64_t>(d))] = 2;
        supports.push_back(pair);
    }
    const int extra = 2 + static_cast<int>(rng.next_u64() % 3);
    for (int k = 0; k < extra; ++k) {
        std::vector<std::int64_t> v(dim);
        for (std::size_t i = 0; i < dim; ++i)
            v[i] = static_cast<std::int64_t>(rng.next_u64() % 3);
        if (std::find(supports.begin(), supports.end(), v) == supports.end())
            supports.push_back(v);
    }
    std::vector<double> w(supports.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = 0.05 + rng.uniform();
        total += w[i];
    }
    for (std::size_t i = 0; i < supports.size(); ++i)
        law.atoms.push_back(Atom{supports[i], w[i] / total});
    return law;
}

inline BranchingModel random_model(mtbp::RngStream& rng, int d) {
    std::vector<OffspringLaw> laws;
    for (int j = 0; j < d; ++j) laws.push_back(random_law(rng, d));
    return constant_model(d, std::move(laws), "random");
}

// every child type gets a doubled atom, so all pair masses are positive and
// the direction-sequence preconditions hold
inline OffspringLaw random_positive_law(mtbp::RngStream& rng, int d) {
    OffspringLaw law;
    const auto dim = static_cast<std::size_t>(d);
    std::vector<std::vector<std::int64_t>> supports;
    supports.push_back(std::vector<std::int64_t>(dim, 0));
    for (std::size_t i = 0; i < dim; ++i) {
        std::vector<std::int64_t> v(dim, 0);
        v[i] = 2;
        supports.push_back(v);
    }
    const int extra = 1 + static_cast<int>(rng.next_u64() % 2);
    for (int k = 0; k < extra; ++k) {
        std::vector<std::int64_t> v(dim);
        for (std::size_t i = 0; i < dim; ++i)
            v[i] = static_cast<std::int64_t>(rng.next_u64() % 2);
        if (std::find(supports.begin(), supports.end(), v) == supports.end())
            supports.push_back(v);
    }
    std::vector<double> w(supports.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = 0.1 + rng.uniform();
        total += w[i];
    }
    for (std::size_t i = 0; i < supports.size(); ++i)
        law.atoms.push_back(Atom{supports[i], w[i] / total});
    return law;
}

inline BranchingModel random_positive_model(mtbp::RngStream& rng, int d) {
    std::vector<OffspringLaw> laws;
    for (int j = 0; j < d; ++j) laws.push_back(random_positive_law(rng, d));
    return constant_model(d, std::move(laws), "random-positive");
}

}  // namespace testutil
