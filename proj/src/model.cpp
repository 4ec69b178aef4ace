#include "mtbp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "mtbp/detail/format.hpp"

namespace mtbp {

namespace {

// integer-exponent power with 0^0 = 1, exact for the common small exponents
double ipow(double base, std::int64_t e) {
    double acc = 1.0, b = base;
    while (e > 0) {
        if (e & 1) acc *= b;
        b *= b;
        e >>= 1;
    }
    return acc;
}

struct Kahan {
    double sum = 0.0, carry = 0.0;
    void add(double x) {
        double y = x - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

std::string fmt_double(double v) { return detail::csv_num(v); }

}  // namespace

double OffspringLaw::pair_mass(int type) const {
    double m = 0.0;
    for (const auto& a : atoms)
        if (a.offspring[static_cast<std::size_t>(type)] >= 2) m += a.p;
    return m;
}

double OffspringLaw::zero_mass() const {
    double m = 0.0;
    for (const auto& a : atoms) {
        bool zero = true;
        for (auto c : a.offspring)
            if (c != 0) { zero = false; break; }
        if (zero) m += a.p;
    }
    return m;
}

double OffspringLaw::total_mass() const {
    Kahan k;
    for (const auto& a : atoms) k.add(a.p);
    return k.sum;
}

double OffspringLaw::second_moment_total() const {
    double m = 0.0;
    for (const auto& a : atoms) {
        double n = 0.0;
        for (auto c : a.offspring) n += static_cast<double>(c);
        m += a.p * n * n;
    }
    return m;
}

double OffspringLaw::second_factorial(int type) const {
    double m = 0.0;
    for (const auto& a : atoms) {
        double c = static_cast<double>(a.offspring[static_cast<std::size_t>(type)]);
        m += a.p * c * (c - 1.0);
    }
    return m;
}

std::vector<double> OffspringLaw::mean() const {
    std::vector<double> m(atoms.front().offspring.size(), 0.0);
    for (const auto& a : atoms)
        for (std::size_t i = 0; i < m.size(); ++i)
            m[i] += a.p * static_cast<double>(a.offspring[i]);
    return m;
}

std::int64_t BranchingModel::schedule_end() const { return schedule.back().start + 1; }

std::int64_t BranchingModel::cycle_length() const {
    return tail.mode == TailMode::periodic ? tail.period : 1;
}

std::int64_t BranchingModel::cycle_start() const { return schedule_end() - cycle_length(); }

std::size_t BranchingModel::block_index(std::int64_t n) const {
    if (n < 0) throw std::invalid_argument("step index must be >= 0");
    const std::int64_t end = schedule_end();
    if (n >= end) {
        if (tail.mode == TailMode::repeat_last) return schedule.size() - 1;
        const std::int64_t base = cycle_start();
        n = base + (n - base) % tail.period;
    }
    auto it = std::upper_bound(schedule.begin(), schedule.end(), n,
                               [](std::int64_t v, const ScheduleEntry& e) { return v < e.start; });
    return static_cast<std::size_t>(it - schedule.begin()) - 1;
}

const std::vector<OffspringLaw>& BranchingModel::laws_at(std::int64_t n) const {
    return schedule[block_index(n)].laws;
}

namespace detail {

void check_law(const OffspringLaw& law, int d, const std::string& where) {
    if (law.atoms.empty()) throw std::invalid_argument(where + ": no atoms");
    for (const auto& atom : law.atoms) {
        if (atom.offspring.size() != static_cast<std::size_t>(d))
            throw std::invalid_argument(where + ": offspring vector length != d");
        for (auto c : atom.offspring)
            if (c < 0) throw std::invalid_argument(where + ": negative offspring count");
        if (!(atom.p >= 0.0) || !std::isfinite(atom.p))
            throw std::invalid_argument(where + ": probabilities must be finite and >= 0");
    }
    std::vector<std::vector<std::int64_t>> seen;
    seen.reserve(law.atoms.size());
    for (const auto& atom : law.atoms) seen.push_back(atom.offspring);
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
        throw std::invalid_argument(where + ": duplicate offspring vectors");
    const double mass = law.total_mass();
    if (std::abs(mass - 1.0) > 1e-12)
        throw std::invalid_argument(where + ": pmf mass " + fmt_double(mass) +
                                    " != 1 (tolerance 1e-12)");
}

}  // namespace detail

void check_structure(const BranchingModel& model) {
    if (model.d < 1) throw std::invalid_argument("type count d must be >= 1");
    if (model.schedule.empty()) throw std::invalid_argument("schedule must have at least one entry");
    if (model.schedule.front().start != 0)
        throw std::invalid_argument("first schedule entry must start at step 0");
    for (std::size_t e = 0; e < model.schedule.size(); ++e) {
        const auto& entry = model.schedule[e];
        if (e > 0 && entry.start <= model.schedule[e - 1].start)
            throw std::invalid_argument("schedule starts must increase strictly");
        if (entry.laws.size() != static_cast<std::size_t>(model.d))
            throw std::invalid_argument("schedule entry starting at step " +
                                        std::to_string(entry.start) + " has " +
                                        std::to_string(entry.laws.size()) + " laws, expected " +
                                        std::to_string(model.d));
        for (int j = 0; j < model.d; ++j)
            detail::check_law(entry.laws[static_cast<std::size_t>(j)], model.d,
                              "type " + std::to_string(j + 1) + " law starting at step " +
                                  std::to_string(entry.start));
    }
    if (model.tail.mode == TailMode::periodic) {
        if (model.tail.period < 1) throw std::invalid_argument("tail period must be >= 1");
        if (model.tail.period > model.schedule_end())
            throw std::invalid_argument("tail period " + std::to_string(model.tail.period) +
                                        " exceeds the scheduled steps (" +
                                        std::to_string(model.schedule_end()) + ")");
    }
}

double pgf_eval(const OffspringLaw& law, const Vec& s) {
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (!(s[i] >= 0.0) || s[i] > 1.0)
            throw std::invalid_argument("pgf argument outside [0,1]^d");
    Kahan k;
    for (const auto& atom : law.atoms) {
        double term = atom.p;
        for (std::size_t i = 0; i < atom.offspring.size(); ++i)
            term *= ipow(s[static_cast<Eigen::Index>(i)], atom.offspring[i]);
        k.add(term);
    }
    return k.sum;
}

Mat mean_matrix(const BranchingModel& model, std::int64_t n) {
    const auto& laws = model.laws_at(n);
    Mat a = Mat::Zero(model.d, model.d);
    for (int j = 0; j < model.d; ++j) {
        auto m = laws[static_cast<std::size_t>(j)].mean();
        for (int i = 0; i < model.d; ++i) a(j, i) = m[static_cast<std::size_t>(i)];
    }
    return a;
}

Mat pgf_hessian(const OffspringLaw& law, const Vec& s) {
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (!(s[i] >= 0.0) || s[i] > 1.0)
            throw std::invalid_argument("pgf argument outside [0,1]^d");
    const int d = static_cast<int>(s.size());
    Mat h = Mat::Zero(d, d);
    for (const auto& atom : law.atoms) {
        for (int p = 0; p < d; ++p) {
            const std::int64_t ap = atom.offspring[static_cast<std::size_t>(p)];
            for (int q = p; q < d; ++q) {
                const std::int64_t aq = atom.offspring[static_cast<std::size_t>(q)];
                double coef;
                if (p == q) {
                    if (ap < 2) continue;
                    coef = static_cast<double>(ap) * static_cast<double>(ap - 1);
                } else {
                    if (ap < 1 || aq < 1) continue;
                    coef = static_cast<double>(ap) * static_cast<double>(aq);
                }
                double term = atom.p * coef;
                for (int i = 0; i < d; ++i) {
                    std::int64_t e = atom.offspring[static_cast<std::size_t>(i)];
                    if (i == p) e -= 1;
                    if (i == q) e -= 1;
                    term *= ipow(s[i], e);
                }
                h(p, q) += term;
                if (p != q) h(q, p) += term;
            }
        }
    }
    return h;
}

AssumptionReport validate_model(const BranchingModel& model, std::int64_t horizon) {
    check_structure(model);
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");

    AssumptionReport rep;
    rep.d = model.d;
    rep.horizon = horizon;
    rep.epsilon0 = std::numeric_limits<double>::infinity();
    rep.k0 = 0.0;
    rep.min_second_factorial = std::numeric_limits<double>::infinity();
    rep.positivity_all = true;
    rep.extinction_all = true;

    // periodic tails recur over the final blocks, so one pass over the
    // schedule blocks covers every step
    for (std::size_t e = 0; e < model.schedule.size(); ++e) {
        const auto& entry = model.schedule[e];
        const std::int64_t next =
            e + 1 < model.schedule.size() ? model.schedule[e + 1].start : -1;
        for (int j = 0; j < model.d; ++j) {
            const auto& law = entry.laws[static_cast<std::size_t>(j)];
            AssumptionCell cell;
            cell.start = entry.start;
            cell.end = next;
            cell.type = j;
            cell.zero_mass = law.zero_mass();
            cell.second_moment = law.second_moment_total();
            cell.positivity_pass = true;
            for (int i = 0; i < model.d; ++i) {
                const double pm = law.pair_mass(i);
                const double sf = law.second_factorial(i);
                cell.pair_mass.push_back(pm);
                cell.second_factorial.push_back(sf);
                if (pm <= 0.0) cell.positivity_pass = false;
                rep.epsilon0 = std::min(rep.epsilon0, pm);
                rep.min_second_factorial = std::min(rep.min_second_factorial, sf);
            }
            cell.extinction_pass = cell.zero_mass > 0.0;
            rep.epsilon0 = std::min(rep.epsilon0, cell.zero_mass);
            rep.k0 = std::max(rep.k0, cell.second_moment);
            rep.positivity_all = rep.positivity_all && cell.positivity_pass;
            rep.extinction_all = rep.extinction_all && cell.extinction_pass;
            rep.cells.push_back(std::move(cell));
        }
    }

    // entry bounds for the mean-matrix products over the horizon, with
    // rescaling so long super/subcritical stretches don't overflow
    std::vector<Mat> step(static_cast<std::size_t>(horizon));
    for (std::int64_t t = 0; t < horizon; ++t)
        step[static_cast<std::size_t>(t)] = mean_matrix(model, t);
    double log_min = std::numeric_limits<double>::infinity();
    double log_max = -std::numeric_limits<double>::infinity();
    double log_row_max = -std::numeric_limits<double>::infinity();
    for (std::int64_t k = 0; k < horizon; ++k) {
        Mat prod = Mat::Identity(model.d, model.d);
        double log_scale = 0.0;
        for (std::int64_t n = k + 1; n <= horizon; ++n) {
            prod = prod * step[static_cast<std::size_t>(n - 1)];
            const double m = prod.maxCoeff();
            if (m > 1e100 || (m > 0.0 && m < 1e-100)) {
                prod /= m;
                log_scale += std::log(m);
            }
            for (int j = 0; j < model.d; ++j) {
                double row = 0.0;
                for (int i = 0; i < model.d; ++i) {
                    const double le = std::log(prod(j, i)) + log_scale;
                    if (le < log_min) {
                        log_min = le;
                        rep.product_min_n = k;
                        rep.product_min_k = n - k;
                    }
                    if (le > log_max) {
                        log_max = le;
                        rep.product_max_n = k;
                        rep.product_max_k = n - k;
                    }
                    row += prod(j, i);
                }
                log_row_max = std::max(log_row_max, std::log(row) + log_scale);
            }
        }
    }
    rep.product_entry_min = std::exp(log_min);
    rep.product_entry_max = std::exp(log_max);
    rep.max_mean_rowsum = std::exp(log_row_max);
    return rep;
}

namespace {

using Support = std::vector<std::int64_t>;
using Dist = std::map<Support, double>;

struct TruncationBudget {
    double dropped = 0.0;
    double tol = 0.0;
    std::size_t cap = 0;
    std::int64_t step = 0;
};

void truncate(Dist& dist, TruncationBudget& budget) {
    if (dist.size() <= budget.cap) return;
    std::vector<std::pair<double, const Support*>> order;
    order.reserve(dist.size());
    for (const auto& [supp, p] : dist) order.emplace_back(p, &supp);
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    const std::size_t excess = dist.size() - budget.cap;
    for (std::size_t i = 0; i < excess; ++i) {
        budget.dropped += order[i].first;
        if (budget.dropped > budget.tol)
            throw std::runtime_error(
                "skip support exceeded the cap of " + std::to_string(budget.cap) +
                " atoms at step " + std::to_string(budget.step) +
                " and the mass tolerance " + fmt_double(budget.tol) + " is exhausted");
        dist.erase(*order[i].second);
    }
}

Dist convolve(const Dist& a, const Dist& b, TruncationBudget& budget) {
    Dist out;
    for (const auto& [sa, pa] : a)
        for (const auto& [sb, pb] : b) {
            Support s(sa.size());
            for (std::size_t i = 0; i < s.size(); ++i) s[i] = sa[i] + sb[i];
            out[s] += pa * pb;
        }
    truncate(out, budget);
    return out;
}

// k-fold convolution power of one type's law, filled by doubling
const Dist& law_power(std::vector<Dist>& cache, const Dist& base, std::int64_t k,
                      TruncationBudget& budget, std::size_t d) {
    while (cache.size() <= static_cast<std::size_t>(k)) {
        if (cache.empty()) {
            Dist unit;
            unit.emplace(Support(d, 0), 1.0);
            cache.push_back(std::move(unit));
            continue;
        }
        const std::size_t m = cache.size();
        cache.push_back(m == 1 ? base : convolve(cache[m / 2], cache[m - m / 2], budget));
    }
    return cache[static_cast<std::size_t>(k)];
}

}  // namespace

SkipResult skip_generations(const BranchingModel& model, std::int64_t l,
                            const SkipOptions& opts) {
    check_structure(model);
    if (l < 1) throw std::invalid_argument("skip length l must be >= 1");
    if (!(opts.mass_tol > 0.0) || opts.mass_tol > 1e-6)
        throw std::invalid_argument("mass_tol must lie in (0, 1e-6]");
    if (opts.support_cap < 1) throw std::invalid_argument("support cap must be >= 1");

    const std::int64_t cycle = model.cycle_length();
    const std::int64_t base = model.cycle_start();
    const std::int64_t skip_cycle = cycle / std::gcd(cycle, l);
    // first skipped index whose l original steps all lie in the tail cycle
    const std::int64_t settled = (base + l - 1) / l;
    const std::int64_t entries = settled + skip_cycle;

    SkipResult result;
    result.model.d = model.d;
    result.model.tail = skip_cycle == 1
                            ? TailPolicy{TailMode::repeat_last, 1}
                            : TailPolicy{TailMode::periodic, skip_cycle};
    if (!model.id.empty()) result.model.id = model.id + "-skip" + std::to_string(l);

    for (std::int64_t m = 0; m < entries; ++m) {
        ScheduleEntry entry;
        entry.start = m;
        for (int j = 0; j < model.d; ++j) {
            TruncationBudget budget{0.0, opts.mass_tol, opts.support_cap, m};
            Dist dist;
            Support seed(static_cast<std::size_t>(model.d), 0);
            seed[static_cast<std::size_t>(j)] = 1;
            dist.emplace(std::move(seed), 1.0);
            for (std::int64_t t = m * l; t < (m + 1) * l; ++t) {
                const auto& laws = model.laws_at(t);
                std::vector<Dist> bases(static_cast<std::size_t>(model.d));
                std::vector<std::vector<Dist>> powers(static_cast<std::size_t>(model.d));
                for (int i = 0; i < model.d; ++i)
                    for (const auto& atom : laws[static_cast<std::size_t>(i)].atoms)
                        bases[static_cast<std::size_t>(i)][atom.offspring] += atom.p;
                Dist next;
                for (const auto& [supp, p] : dist) {
                    Dist acc;
                    acc.emplace(Support(static_cast<std::size_t>(model.d), 0), 1.0);
                    for (int i = 0; i < model.d; ++i) {
                        const std::int64_t count = supp[static_cast<std::size_t>(i)];
                        if (count == 0) continue;
                        const Dist& pw =
                            law_power(powers[static_cast<std::size_t>(i)],
                                      bases[static_cast<std::size_t>(i)], count, budget,
                                      static_cast<std::size_t>(model.d));
                        acc = convolve(acc, pw, budget);
                    }
                    for (const auto& [s2, p2] : acc) next[s2] += p * p2;
                }
                truncate(next, budget);
                dist = std::move(next);
            }
            double mass = 0.0;
            for (const auto& [supp, p] : dist) mass += p;
            result.truncated_mass = std::max(result.truncated_mass, 1.0 - mass);
            OffspringLaw law;
            for (const auto& [supp, p] : dist) law.atoms.push_back({supp, p / mass});
            entry.laws.push_back(std::move(law));
        }
        result.model.schedule.push_back(std::move(entry));
    }
    return result;
}

std::vector<Mat> covariance_sequence(const BranchingModel& model, int start_type,
                                     std::int64_t horizon) {
    check_structure(model);
    if (start_type < 0 || start_type >= model.d)
        throw std::invalid_argument("start type out of range");
    if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");

    std::vector<Mat> out;
    out.reserve(static_cast<std::size_t>(horizon) + 1);
    Mat cov = Mat::Zero(model.d, model.d);
    Vec mean = Vec::Zero(model.d);
    mean[start_type] = 1.0;
    out.push_back(cov);
    for (std::int64_t n = 0; n < horizon; ++n) {
        const Mat a = mean_matrix(model, n);
        const auto& laws = model.laws_at(n);
        Mat source = Mat::Zero(model.d, model.d);
        for (int i = 0; i < model.d; ++i) {
            const auto& law = laws[static_cast<std::size_t>(i)];
            const auto mu = law.mean();
            Mat c = Mat::Zero(model.d, model.d);
            for (const auto& atom : law.atoms)
                for (int p = 0; p < model.d; ++p)
                    for (int q = 0; q < model.d; ++q)
                        c(p, q) += atom.p *
                                   static_cast<double>(atom.offspring[static_cast<std::size_t>(p)]) *
                                   static_cast<double>(atom.offspring[static_cast<std::size_t>(q)]);
            for (int p = 0; p < model.d; ++p)
                for (int q = 0; q < model.d; ++q)
                    c(p, q) -= mu[static_cast<std::size_t>(p)] * mu[static_cast<std::size_t>(q)];
            source += mean[i] * c;
        }
        cov = a.transpose() * cov * a + source;
        cov = ((cov + cov.transpose()) * 0.5).eval();  // keep symmetry exact
        mean = (a.transpose() * mean).eval();
        out.push_back(cov);
    }
    return out;
}

}
