#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>

#include "mtbp/classify.hpp"
#include "mtbp/genfun.hpp"
#include "mtbp/model.hpp"
#include "mtbp/model_io.hpp"
#include "mtbp/simulate.hpp"
#include "mtbp/spectral.hpp"
#include "mtbp/version.hpp"

namespace py = pybind11;
using namespace mtbp;

namespace {

Vec to_vec(const std::vector<double>& values) {
    Vec v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
    return v;
}

std::vector<double> vec_list(const Vec& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<std::vector<double>> mat_list(const Mat& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        rows[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
    }
    return rows;
}

py::dict stats_dict(const ConditionedStats& st) {
    py::dict d;
    d["samples"] = st.samples;
    d["survival_frequency"] = st.survival_frequency;
    d["survivors"] = st.survivors;
    d["mean_raw"] = st.raw_mean;
    d["variance"] = st.variance;
    d["min"] = st.min;
    d["max"] = st.max;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "multi-type branching processes with time-dependent offspring laws";
    m.attr("__version__") = version;

    py::class_<BranchingModel>(m, "Model")
        .def_static("from_json", &model_from_json, py::arg("text"),
                    "Parse a model from a JSON document.")
        .def_static("load", &load_model, py::arg("path"), "Load a model from a JSON file.")
        .def("to_json", &model_to_json)
        .def_property_readonly("d", [](const BranchingModel& mm) { return mm.d; })
        .def_property_readonly("id", [](const BranchingModel& mm) { return mm.id; })
        .def("__repr__", [](const BranchingModel& mm) {
            return "<Model d=" + std::to_string(mm.d) +
                   (mm.id.empty() ? "" : " id=" + mm.id) + ">";
        });

    py::class_<CTModel>(m, "CTModel")
        .def_static("from_json", &ct_model_from_json, py::arg("text"))
        .def_static("load", &load_ct_model, py::arg("path"))
        .def_property_readonly("d", [](const CTModel& mm) { return mm.d; })
        .def_property_readonly("id", [](const CTModel& mm) { return mm.id; })
        .def_property_readonly("rate_bound", [](const CTModel& mm) { return mm.rate_bound(); })
        .def("__repr__", [](const CTModel& mm) {
            return "<CTModel d=" + std::to_string(mm.d) +
                   (mm.id.empty() ? "" : " id=" + mm.id) + ">";
        });

    py::class_<Ensemble>(m, "Ensemble")
        .def_property_readonly("replications", [](const Ensemble& e) { return e.replications; })
        .def_property_readonly("d", [](const Ensemble& e) { return e.d; })
        .def_property_readonly("seed", [](const Ensemble& e) { return e.seed; })
        .def_property_readonly("capped_count", [](const Ensemble& e) { return e.capped_count; })
        .def_property_readonly("terminal",
                               [](const Ensemble& e) {
                                   std::vector<std::vector<std::int64_t>> rows(
                                       static_cast<std::size_t>(e.replications));
                                   const auto d = static_cast<std::size_t>(e.d);
                                   for (std::size_t r = 0; r < rows.size(); ++r)
                                       rows[r].assign(e.terminal.begin() + static_cast<std::ptrdiff_t>(r * d),
                                                      e.terminal.begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
                                   return rows;
                               })
        .def_property_readonly("survived",
                               [](const Ensemble& e) {
                                   std::vector<bool> s(e.survived.begin(), e.survived.end());
                                   return s;
                               })
        .def_property_readonly("survival_frequency",
                               [](const Ensemble& e) {
                                   std::int64_t n = 0;
                                   for (auto s : e.survived) n += s;
                                   return static_cast<double>(n) /
                                          static_cast<double>(std::max<std::int64_t>(
                                              e.replications, 1));
                               })
        .def(
            "conditioned",
            [](const Ensemble& e, const std::vector<double>& weights) {
                Vec w = weights.empty() ? Vec(Vec::Ones(e.d) / static_cast<double>(e.d))
                                        : to_vec(weights);
                return stats_dict(conditioned_stats(e, w));
            },
            py::arg("weights") = std::vector<double>{},
            "Survivor statistics along the given type weights (default uniform); "
            "samples are normalized to sample mean 1.");

    m.def(
        "validate",
        [](const BranchingModel& model, std::int64_t horizon) {
            const AssumptionReport r = validate_model(model, horizon);
            py::dict d;
            d["pass"] = r.pass();
            d["positivity_all"] = r.positivity_all;
            d["extinction_all"] = r.extinction_all;
            d["finite_support"] = r.finite_support;
            d["epsilon0"] = r.epsilon0;
            d["k0"] = r.k0;
            d["min_second_factorial"] = r.min_second_factorial;
            d["product_entry_min"] = r.product_entry_min;
            d["product_entry_max"] = r.product_entry_max;
            d["max_mean_rowsum"] = r.max_mean_rowsum;
            return d;
        },
        py::arg("model"), py::arg("horizon") = 64,
        "Positivity and moment checks over the horizon.");

    m.def(
        "mean_matrix",
        [](const BranchingModel& model, std::int64_t n) { return mat_list(mean_matrix(model, n)); },
        py::arg("model"), py::arg("n"),
        "Entry (j, i): expected type-i children of one type-j parent at step n.");

    m.def(
        "compose_pgf",
        [](const BranchingModel& model, std::int64_t k, std::int64_t n,
           const std::vector<double>& s) { return vec_list(compose_pgf(model, k, n, to_vec(s))); },
        py::arg("model"), py::arg("k"), py::arg("n"), py::arg("s"),
        "Generating function of Z_n at argument s, seen from step k.");

    m.def(
        "extinction_curve",
        [](const BranchingModel& model, std::int64_t horizon) {
            const SurvivalCurve c = extinction_curve(model, horizon);
            py::dict d;
            d["survival"] = mat_list(c.survival);
            d["log_survival"] = mat_list(c.log_survival);
            return d;
        },
        py::arg("model"), py::arg("horizon"),
        "P(Z_n != 0) per starting type, rows n = 0..horizon.");

    m.def(
        "eigen_factors",
        [](const BranchingModel& model, std::int64_t horizon, double tol) {
            SpectralOptions opts;
            opts.tol = tol;
            const EigenSequence seq = eigen_sequence(model, horizon, opts);
            py::dict d;
            std::vector<std::vector<double>> v, u;
            for (const Vec& x : seq.v) v.push_back(vec_list(x));
            for (const Vec& x : seq.u) u.push_back(vec_list(x));
            d["v"] = v;
            d["u"] = u;
            d["lambda_"] = seq.lambda;
            d["lambda_tilde"] = seq.lambda_tilde;
            d["log_Lambda"] = seq.log_Lambda;
            d["log_Lambda_tilde"] = seq.log_Lambda_tilde;
            d["alignment_error"] = seq.alignment_error;
            d["lookahead"] = seq.lookahead;
            return d;
        },
        py::arg("model"), py::arg("horizon"), py::arg("tol") = 1e-12,
        "Certified direction sequences v_n, u_n and the growth factors.");

    m.def(
        "series",
        [](const BranchingModel& model, std::int64_t horizon, double tol) {
            SpectralOptions opts;
            opts.tol = tol;
            const EigenSequence seq = eigen_sequence(model, horizon, opts);
            const SeriesTable t = series_table(model, seq, horizon);
            py::dict d;
            d["xi"] = t.xi;
            d["gamma"] = t.gamma;
            d["log_xi"] = t.log_xi;
            d["log_gamma"] = t.log_gamma;
            d["log_Lambda"] = t.log_Lambda;
            d["survival"] = mat_list(t.survival);
            d["log_survival"] = mat_list(t.log_survival);
            d["alpha0"] = t.alpha0;
            return d;
        },
        py::arg("model"), py::arg("horizon"), py::arg("tol") = 1e-12,
        "Cumulative growth series, survival curve and the alpha correction.");

    m.def(
        "classify",
        [](const BranchingModel& model, std::int64_t horizon, bool numeric) {
            ClassifyOptions opts;
            opts.horizon = horizon;
            opts.force_numeric = numeric;
            const ClassificationReport r = classify(model, opts);
            py::dict d;
            d["verdict"] = std::string(to_string(r.verdict));
            d["rho"] = r.rho;
            d["rho_per_step"] = r.rho_per_step;
            d["cycle_start"] = r.cycle_start;
            d["cycle_length"] = r.cycle_length;
            d["numeric_verdict"] = std::string(to_string(r.numeric_verdict));
            d["xi_tail_ratio"] = r.xi_tail_ratio;
            d["lambda_xi_tail_ratio"] = r.lambda_xi_tail_ratio;
            return d;
        },
        py::arg("model"), py::arg("horizon") = 4096, py::arg("numeric") = false,
        "Extinction / exponential-limit trichotomy.");

    m.def(
        "simulate",
        [](const BranchingModel& model, std::int64_t generations, std::int64_t replications,
           std::uint64_t seed, const std::vector<std::int64_t>& initial, std::int64_t cap,
           int threads) {
            EnsembleOptions opts;
            opts.initial = initial;
            opts.particle_cap = cap;
            opts.threads = threads;
            py::gil_scoped_release release;
            return run_ensemble(model, generations, replications, seed, opts);
        },
        py::arg("model"), py::arg("generations"), py::arg("replications"), py::arg("seed") = 1,
        py::arg("initial") = std::vector<std::int64_t>{}, py::arg("cap") = 10'000'000,
        py::arg("threads") = 1,
        "Seeded ensemble of independent trajectories; trajectory r depends only on (seed, r).");

    m.def(
        "simulate_ct",
        [](const CTModel& model, double time, std::int64_t replications, std::uint64_t seed,
           const std::vector<std::int64_t>& initial, std::int64_t cap, int threads) {
            EnsembleOptions opts;
            opts.initial = initial;
            opts.particle_cap = cap;
            opts.threads = threads;
            py::gil_scoped_release release;
            return simulate_ct(model, time, replications, seed, opts);
        },
        py::arg("model"), py::arg("time"), py::arg("replications"), py::arg("seed") = 1,
        py::arg("initial") = std::vector<std::int64_t>{}, py::arg("cap") = 10'000'000,
        py::arg("threads") = 1, "Event-driven continuous-time ensemble (exact thinning).");

    m.def(
        "moment_ode",
        [](const CTModel& model, double time, double step, const std::vector<double>& initial) {
            Vec m0;
            if (initial.empty()) {
                m0 = Vec::Zero(model.d);
                m0[0] = 1.0;
            } else {
                m0 = to_vec(initial);
            }
            const MomentCurve c = moment_ode(model, time, step, m0);
            py::dict d;
            d["times"] = c.times;
            std::vector<std::vector<double>> means;
            for (const Vec& x : c.means) means.push_back(vec_list(x));
            d["means"] = means;
            return d;
        },
        py::arg("model"), py::arg("time"), py::arg("step") = 1e-3,
        py::arg("initial") = std::vector<double>{},
        "Mean flow of the continuous-time model, integrated with RK4.");

    m.def(
        "skip",
        [](const BranchingModel& model, std::int64_t every, double mass_tol,
           std::size_t support_cap) {
            SkipOptions opts;
            opts.mass_tol = mass_tol;
            opts.support_cap = support_cap;
            SkipResult r = skip_generations(model, every, opts);
            return py::make_tuple(std::move(r.model), r.truncated_mass);
        },
        py::arg("model"), py::arg("every"), py::arg("mass_tol") = 1e-9,
        py::arg("support_cap") = std::size_t{1'000'000},
        "Exact l-step subsampled model; returns (model, truncated_mass).");

    m.def("ks_exponential", &ks_exponential, py::arg("samples"),
          "Kolmogorov-Smirnov distance of the sample to the unit exponential law.");

    m.def(
        "hilbert_distance",
        [](const std::vector<double>& u, const std::vector<double>& v) {
            return hilbert_distance(to_vec(u), to_vec(v));
        },
        py::arg("u"), py::arg("v"));
}
