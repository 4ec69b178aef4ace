#include "mtbp/cli.hpp"

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "mtbp/classify.hpp"
#include "mtbp/detail/format.hpp"
#include "mtbp/genfun.hpp"
#include "mtbp/model.hpp"
#include "mtbp/model_io.hpp"
#include "mtbp/simulate.hpp"
#include "mtbp/spectral.hpp"
#include "mtbp/version.hpp"

namespace mtbp {

namespace {

using nlohmann::ordered_json;

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
    std::vector<double> values;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, comma - pos);
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw input_error(what + ": \"" + item + "\" is not a number");
        }
        pos = comma + 1;
    }
    return values;
}

std::vector<std::int64_t> parse_counts(const std::string& text, const std::string& what) {
    std::vector<std::int64_t> values;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, comma - pos);
        try {
            std::size_t used = 0;
            values.push_back(std::stoll(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw input_error(what + ": \"" + item + "\" is not an integer");
        }
        pos = comma + 1;
    }
    return values;
}

Vec to_vec(const std::vector<double>& values) {
    Vec v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
    return v;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw input_error("cannot write " + path);
    file << content;
    if (!file) throw input_error("failed while writing " + path);
}

// artifacts are built in memory first, so a failed computation writes nothing
void emit(const std::string& content, const std::string& path, std::ostream& out) {
    if (path.empty() || path == "-")
        out << content;
    else
        write_text(path, content);
}

std::string provenance(const std::string& model_id, const ordered_json& config) {
    std::ostringstream os;
    os << "# mtbp " << version << "\n";
    os << "# model: " << (model_id.empty() ? "-" : model_id) << "\n";
    os << "# config: " << config.dump() << "\n";
    return os.str();
}

ordered_json tool_block() { return ordered_json{{"name", "mtbp"}, {"version", version}}; }

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"multi-type branching processes with time-dependent offspring laws"};
    app.set_version_flag("--version", std::string("mtbp ") + version);
    app.require_subcommand(1);
    int rc = 0;

    // validate
    std::string v_model, v_out;
    std::int64_t v_horizon = 64;
    auto* validate = app.add_subcommand(
        "validate", "structural, positivity and moment checks over a horizon");
    validate->add_option("model", v_model, "model JSON file")->required();
    validate->add_option("--horizon", v_horizon, "steps the checks cover")
        ->capture_default_str();
    validate->add_option("--out", v_out, "write the JSON report to this file");
    validate->callback([&] {
        const BranchingModel model = load_model(v_model);
        const AssumptionReport report = validate_model(model, v_horizon);
        const ordered_json config{
            {"command", "validate"}, {"model", model.id}, {"horizon", v_horizon}};
        emit(report_to_json(report, config.dump()), v_out, out);
        if (!report.pass()) rc = 1;
    });

    // spectral
    std::string s_model, s_out, s_u0;
    std::int64_t s_horizon = 64;
    double s_tol = 1e-12;
    bool s_band = false;
    auto* spectral = app.add_subcommand(
        "spectral", "certified direction sequences and growth factors");
    spectral->add_option("model", s_model, "model JSON file")->required();
    spectral->add_option("--horizon", s_horizon, "last step computed")->capture_default_str();
    spectral->add_option("--tol", s_tol, "residual target for the direction sequence")
        ->capture_default_str();
    spectral->add_option("--u0", s_u0, "starting left direction (comma-separated, default uniform)");
    spectral->add_flag("--band", s_band, "also report product/duality ratio bands");
    spectral->add_option("--out", s_out, "write the CSV table to this file");
    spectral->callback([&] {
        const BranchingModel model = load_model(s_model);
        SpectralOptions sopts;
        sopts.tol = s_tol;
        if (!s_u0.empty()) sopts.u0 = to_vec(parse_doubles(s_u0, "--u0"));
        const EigenSequence seq = eigen_sequence(model, s_horizon, sopts);
        ordered_json config{{"command", "spectral"},
                            {"model", model.id},
                            {"horizon", s_horizon},
                            {"tol", s_tol}};
        std::ostringstream body;
        body << provenance(model.id, config);
        body << "# alignment_error: " << detail::csv_num(seq.alignment_error) << "\n";
        body << "# lookahead: " << seq.lookahead << "\n";
        if (s_band) {
            const SpectralBand band = ratio_band(model, seq);
            body << "# entry_band: " << detail::csv_num(band.entry_band) << "\n";
            body << "# duality_band: " << detail::csv_num(band.duality_band) << "\n";
        }
        write_spectral_csv(body, seq);
        emit(body.str(), s_out, out);
    });

    // series
    std::string q_model, q_out;
    std::int64_t q_horizon = 64;
    double q_tol = 1e-12;
    auto* series = app.add_subcommand(
        "series", "cumulative growth series, survival curve and the alpha correction");
    series->add_option("model", q_model, "model JSON file")->required();
    series->add_option("--horizon", q_horizon, "last step computed")->capture_default_str();
    series->add_option("--tol", q_tol, "residual target for the direction sequence")
        ->capture_default_str();
    series->add_option("--out", q_out, "write the CSV table to this file");
    series->callback([&] {
        const BranchingModel model = load_model(q_model);
        SpectralOptions sopts;
        sopts.tol = q_tol;
        const EigenSequence seq = eigen_sequence(model, q_horizon, sopts);
        const SeriesTable table = series_table(model, seq, q_horizon);
        ordered_json config{{"command", "series"},
                            {"model", model.id},
                            {"horizon", q_horizon},
                            {"tol", q_tol}};
        std::ostringstream body;
        body << provenance(model.id, config);
        write_series_csv(body, table);
        emit(body.str(), q_out, out);
    });

    // classify
    std::string c_model, c_out;
    std::int64_t c_horizon = 4096;
    bool c_numeric = false;
    auto* classify_cmd = app.add_subcommand(
        "classify", "extinction / exponential-limit trichotomy");
    classify_cmd->add_option("model", c_model, "model JSON file")->required();
    classify_cmd->add_option("--horizon", c_horizon, "diagnostics horizon")
        ->capture_default_str();
    classify_cmd->add_flag("--numeric", c_numeric,
                           "use the numeric tail diagnostics for the verdict");
    classify_cmd->add_option("--out", c_out, "write the JSON report to this file");
    classify_cmd->callback([&] {
        const BranchingModel model = load_model(c_model);
        ClassifyOptions copts;
        copts.horizon = c_horizon;
        copts.force_numeric = c_numeric;
        const ClassificationReport report = classify(model, copts);
        const ordered_json config{{"command", "classify"},
                                  {"model", model.id},
                                  {"horizon", c_horizon},
                                  {"numeric", c_numeric}};
        emit(classification_json(report, config.dump()), c_out, out);
    });

    // simulate
    std::string m_model, m_out, m_stats, m_initial;
    std::int64_t m_gens = 0, m_reps = 0, m_cap = 10'000'000;
    std::uint64_t m_seed = 1;
    int m_threads = 1;
    auto* simulate = app.add_subcommand("simulate", "seeded trajectory ensembles");
    simulate->add_option("model", m_model, "model JSON file")->required();
    simulate->add_option("-n,--generations", m_gens, "generations per trajectory")->required();
    simulate->add_option("-R,--reps", m_reps, "independent trajectories")->required();
    simulate->add_option("--seed", m_seed, "stream seed")->capture_default_str();
    simulate->add_option("--initial", m_initial,
                         "starting counts per type (comma-separated, default one of type 1)");
    simulate->add_option("--cap", m_cap, "freeze trajectories past this total size")
        ->capture_default_str();
    simulate->add_option("--threads", m_threads, "worker threads")->capture_default_str();
    simulate->add_option("--out", m_out, "write terminal states as CSV to this file");
    simulate->add_option("--stats", m_stats,
                         "write survivor statistics as JSON here (\"-\" = stdout)");
    simulate->callback([&] {
        const BranchingModel model = load_model(m_model);
        EnsembleOptions eopts;
        eopts.particle_cap = m_cap;
        eopts.threads = m_threads;
        if (!m_initial.empty()) eopts.initial = parse_counts(m_initial, "--initial");
        const Ensemble ens = run_ensemble(model, m_gens, m_reps, m_seed, eopts);
        ordered_json config{{"command", "simulate"},
                            {"model", model.id},
                            {"generations", m_gens},
                            {"replications", m_reps},
                            {"seed", m_seed},
                            {"cap", m_cap},
                            {"threads", m_threads},
                            {"initial", ens.initial}};
        if (!m_out.empty()) {
            std::ostringstream body;
            body << provenance(model.id, config);
            write_ensemble_csv(body, ens);
            emit(body.str(), m_out, out);
        }
        if (!m_stats.empty() || m_out.empty()) {
            ordered_json stats;
            stats["tool"] = tool_block();
            stats["config"] = config;
            std::int64_t survivors = 0;
            for (std::uint8_t s : ens.survived) survivors += s;
            stats["survivors"] = survivors;
            const double denom = static_cast<double>(std::max<std::int64_t>(ens.replications, 1));
            stats["survival_frequency"] = static_cast<double>(survivors) / denom;
            stats["capped"] = ens.capped_count;
            std::vector<double> term_mean(static_cast<std::size_t>(ens.d), 0.0);
            for (std::size_t r = 0; r < static_cast<std::size_t>(ens.replications); ++r)
                for (std::size_t i = 0; i < static_cast<std::size_t>(ens.d); ++i)
                    term_mean[i] += static_cast<double>(
                        ens.terminal[r * static_cast<std::size_t>(ens.d) + i]);
            for (double& x : term_mean) x /= denom;
            stats["terminal_mean"] = term_mean;
            // survivor sizes are measured along the collapse direction when the
            // positivity checks allow computing it, otherwise uniformly
            Vec weights = Vec::Ones(ens.d) / static_cast<double>(ens.d);
            std::string weight_kind = "uniform";
            try {
                const EigenSequence seq = eigen_sequence(model, m_gens);
                weights = seq.v[static_cast<std::size_t>(m_gens)];
                weight_kind = "collapse-direction";
            } catch (const std::exception&) {
            }
            try {
                const ConditionedStats st = conditioned_stats(ens, weights);
                stats["conditioned"] = {{"weights", weight_kind},
                                        {"samples", st.samples.size()},
                                        {"mean_raw", st.raw_mean},
                                        {"variance", st.variance},
                                        {"min", st.min},
                                        {"max", st.max},
                                        {"ks_exponential", ks_exponential(st.samples)}};
            } catch (const std::exception& e) {
                stats["conditioned"] = nullptr;
                stats["note"] = e.what();
            }
            emit(stats.dump(2) + "\n", m_stats, out);
        }
    });

    // ct-simulate
    std::string t_model, t_out, t_stats, t_initial;
    double t_time = 0.0;
    std::int64_t t_reps = 0, t_cap = 10'000'000;
    std::uint64_t t_seed = 1;
    int t_threads = 1;
    auto* ct = app.add_subcommand("ct-simulate",
                                  "event-driven continuous-time ensembles (exact thinning)");
    ct->add_option("model", t_model, "continuous-time model JSON file")->required();
    ct->add_option("-T,--time", t_time, "time horizon")->required();
    ct->add_option("-R,--reps", t_reps, "independent trajectories")->required();
    ct->add_option("--seed", t_seed, "stream seed")->capture_default_str();
    ct->add_option("--initial", t_initial,
                   "starting counts per type (comma-separated, default one of type 1)");
    ct->add_option("--cap", t_cap, "freeze trajectories past this total size")
        ->capture_default_str();
    ct->add_option("--threads", t_threads, "worker threads")->capture_default_str();
    ct->add_option("--out", t_out, "write terminal states as CSV to this file");
    ct->add_option("--stats", t_stats,
                   "write survivor statistics as JSON here (\"-\" = stdout)");
    ct->callback([&] {
        const CTModel model = load_ct_model(t_model);
        EnsembleOptions eopts;
        eopts.particle_cap = t_cap;
        eopts.threads = t_threads;
        if (!t_initial.empty()) eopts.initial = parse_counts(t_initial, "--initial");
        const Ensemble ens = simulate_ct(model, t_time, t_reps, t_seed, eopts);
        ordered_json config{{"command", "ct-simulate"},
                            {"model", model.id},
                            {"time", t_time},
                            {"replications", t_reps},
                            {"seed", t_seed},
                            {"cap", t_cap},
                            {"threads", t_threads},
                            {"initial", ens.initial}};
        if (!t_out.empty()) {
            std::ostringstream body;
            body << provenance(model.id, config);
            write_ensemble_csv(body, ens);
            emit(body.str(), t_out, out);
        }
        if (!t_stats.empty() || t_out.empty()) {
            ordered_json stats;
            stats["tool"] = tool_block();
            stats["config"] = config;
            std::int64_t survivors = 0;
            for (std::uint8_t s : ens.survived) survivors += s;
            stats["survivors"] = survivors;
            stats["survival_frequency"] =
                static_cast<double>(survivors) /
                static_cast<double>(std::max<std::int64_t>(ens.replications, 1));
            stats["capped"] = ens.capped_count;
            const Vec weights = Vec::Ones(ens.d) / static_cast<double>(ens.d);
            try {
                const ConditionedStats st = conditioned_stats(ens, weights);
                stats["conditioned"] = {{"weights", "uniform"},
                                        {"samples", st.samples.size()},
                                        {"mean_raw", st.raw_mean},
                                        {"variance", st.variance},
                                        {"min", st.min},
                                        {"max", st.max},
                                        {"ks_exponential", ks_exponential(st.samples)}};
            } catch (const std::exception& e) {
                stats["conditioned"] = nullptr;
                stats["note"] = e.what();
            }
            emit(stats.dump(2) + "\n", t_stats, out);
        }
    });

    // moment-ode
    std::string o_model, o_out, o_initial;
    double o_time = 0.0, o_step = 1e-3;
    auto* ode = app.add_subcommand("moment-ode",
                                   "mean flow of the continuous-time model (RK4)");
    ode->add_option("model", o_model, "continuous-time model JSON file")->required();
    ode->add_option("-T,--time", o_time, "time horizon")->required();
    ode->add_option("--step", o_step, "target step size")->capture_default_str();
    ode->add_option("--initial", o_initial,
                    "initial mean per type (comma-separated, default one of type 1)");
    ode->add_option("--out", o_out, "write the CSV table to this file");
    ode->callback([&] {
        const CTModel model = load_ct_model(o_model);
        Vec m0 = Vec::Zero(model.d);
        m0[0] = 1.0;
        if (!o_initial.empty()) m0 = to_vec(parse_doubles(o_initial, "--initial"));
        const MomentCurve curve = moment_ode(model, o_time, o_step, m0);
        ordered_json config{{"command", "moment-ode"},
                            {"model", model.id},
                            {"time", o_time},
                            {"step", o_step}};
        std::ostringstream body;
        body << provenance(model.id, config);
        write_moment_csv(body, curve);
        emit(body.str(), o_out, out);
    });

    // skip
    std::string k_model, k_out;
    std::int64_t k_every = 0;
    double k_mass_tol = 1e-9;
    std::int64_t k_support_cap = 1'000'000;
    auto* skip = app.add_subcommand(
        "skip", "exact l-step subsampled model (iterated convolution)");
    skip->add_option("model", k_model, "model JSON file")->required();
    skip->add_option("-l,--every", k_every, "steps collapsed into one")->required();
    skip->add_option("--mass-tol", k_mass_tol, "total probability the truncation may drop")
        ->capture_default_str();
    skip->add_option("--support-cap", k_support_cap, "working support size limit")
        ->capture_default_str();
    skip->add_option("--out", k_out, "write the subsampled model JSON to this file");
    skip->callback([&] {
        const BranchingModel model = load_model(k_model);
        SkipOptions kopts;
        kopts.mass_tol = k_mass_tol;
        kopts.support_cap = static_cast<std::size_t>(k_support_cap);
        const SkipResult result = skip_generations(model, k_every, kopts);
        emit(model_to_json(result.model), k_out, out);
        if (result.truncated_mass > 0.0)
            err << "note: truncated mass up to " << detail::csv_num(result.truncated_mass)
                << " per law\n";
    });

    std::vector<const char*> argv;
    argv.push_back("mtbp");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << "mtbp " << version << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const input_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}

}
