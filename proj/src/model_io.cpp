#include "mtbp/model_io.hpp"

#include "mtbp/version.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mtbp {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw input_error(msg); }

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            fail("unknown key \"" + item.key() + "\" in " + where);
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) fail("missing key \"" + key + "\" in " + where);
    return *it;
}

std::int64_t as_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) fail(where + " must be an integer");
    return v.get<std::int64_t>();
}

double as_num(const json& v, const std::string& where) {
    if (!v.is_number()) fail(where + " must be a number");
    return v.get<double>();
}

Atom parse_atom(const json& a, int d, const std::string& where) {
    if (!a.is_object()) fail(where + " must be an object");
    reject_unknown_keys(a, {"offspring", "p"}, where);
    const json& off = require(a, "offspring", where);
    if (!off.is_array() || off.size() != static_cast<std::size_t>(d))
        fail(where + ".offspring must be an array of " + std::to_string(d) + " counts");
    Atom atom;
    for (std::size_t i = 0; i < off.size(); ++i)
        atom.offspring.push_back(as_int(off[i], where + ".offspring[" + std::to_string(i) + "]"));
    atom.p = as_num(require(a, "p", where), where + ".p");
    return atom;
}

OffspringLaw parse_law(const json& arr, int d, const std::string& where) {
    if (!arr.is_array() || arr.empty()) fail(where + " must be a nonempty array of atoms");
    OffspringLaw law;
    for (std::size_t k = 0; k < arr.size(); ++k)
        law.atoms.push_back(parse_atom(arr[k], d, where + "[" + std::to_string(k) + "]"));
    return law;
}

std::vector<OffspringLaw> parse_law_set(const json& arr, int d, const std::string& where) {
    if (!arr.is_array() || arr.size() != static_cast<std::size_t>(d))
        fail(where + " must be an array with one law per type (" + std::to_string(d) + ")");
    std::vector<OffspringLaw> laws;
    for (std::size_t j = 0; j < arr.size(); ++j)
        laws.push_back(parse_law(arr[j], d, where + "[" + std::to_string(j) + "]"));
    return laws;
}

json parse_document(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        fail(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) fail("the model document must be a JSON object");
    return doc;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

BranchingModel model_from_json(const std::string& text) {
    const json doc = parse_document(text);
    reject_unknown_keys(doc, {"d", "schedule", "tail", "id"}, "the model document");

    BranchingModel model;
    const std::int64_t d = as_int(require(doc, "d", "the model document"), "d");
    if (d < 1 || d > 64) fail("d must be between 1 and 64");
    model.d = static_cast<int>(d);

    const json& sched = require(doc, "schedule", "the model document");
    if (!sched.is_array() || sched.empty()) fail("schedule must be a nonempty array");
    for (std::size_t b = 0; b < sched.size(); ++b) {
        const std::string where = "schedule[" + std::to_string(b) + "]";
        const json& entry = sched[b];
        if (!entry.is_object()) fail(where + " must be an object");
        reject_unknown_keys(entry, {"start", "laws"}, where);
        ScheduleEntry se;
        se.start = as_int(require(entry, "start", where), where + ".start");
        se.laws = parse_law_set(require(entry, "laws", where), model.d, where + ".laws");
        model.schedule.push_back(std::move(se));
    }

    if (doc.contains("tail")) {
        const json& tail = doc["tail"];
        if (!tail.is_object()) fail("tail must be an object");
        reject_unknown_keys(tail, {"mode", "period"}, "tail");
        const json& mode = require(tail, "mode", "tail");
        if (!mode.is_string()) fail("tail.mode must be a string");
        const std::string m = mode.get<std::string>();
        if (m == "repeat_last") {
            if (tail.contains("period")) fail("tail.period only applies to mode \"periodic\"");
            model.tail.mode = TailMode::repeat_last;
        } else if (m == "periodic") {
            model.tail.mode = TailMode::periodic;
            model.tail.period = as_int(require(tail, "period", "tail"), "tail.period");
        } else {
            fail("tail.mode must be \"repeat_last\" or \"periodic\"");
        }
    }

    if (doc.contains("id")) {
        if (!doc["id"].is_string()) fail("id must be a string");
        model.id = doc["id"].get<std::string>();
    }

    try {
        check_structure(model);
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    return model;
}

BranchingModel load_model(const std::string& path) { return model_from_json(read_file(path)); }

namespace {
ordered_json law_to_json(const OffspringLaw& law) {
    ordered_json arr = ordered_json::array();
    for (const Atom& a : law.atoms)
        arr.push_back(ordered_json{{"offspring", a.offspring}, {"p", a.p}});
    return arr;
}
}  // namespace

std::string model_to_json(const BranchingModel& model) {
    ordered_json doc;
    doc["d"] = model.d;
    doc["schedule"] = ordered_json::array();
    for (const ScheduleEntry& se : model.schedule) {
        ordered_json entry;
        entry["start"] = se.start;
        entry["laws"] = ordered_json::array();
        for (const OffspringLaw& law : se.laws) entry["laws"].push_back(law_to_json(law));
        doc["schedule"].push_back(std::move(entry));
    }
    if (model.tail.mode == TailMode::periodic)
        doc["tail"] = {{"mode", "periodic"}, {"period", model.tail.period}};
    else
        doc["tail"] = {{"mode", "repeat_last"}};
    if (!model.id.empty()) doc["id"] = model.id;
    return doc.dump(2) + "\n";
}

void save_model(const BranchingModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path);
    out << model_to_json(model);
    if (!out) throw input_error("failed while writing " + path);
}

CTModel ct_model_from_json(const std::string& text) {
    const json doc = parse_document(text);
    reject_unknown_keys(doc, {"d", "rates", "laws", "id"}, "the model document");

    CTModel model;
    const std::int64_t d = as_int(require(doc, "d", "the model document"), "d");
    if (d < 1 || d > 64) fail("d must be between 1 and 64");
    model.d = static_cast<int>(d);

    const json& rates = require(doc, "rates", "the model document");
    if (!rates.is_array() || rates.empty()) fail("rates must be a nonempty array");
    for (std::size_t k = 0; k < rates.size(); ++k) {
        const std::string where = "rates[" + std::to_string(k) + "]";
        const json& piece = rates[k];
        if (!piece.is_object()) fail(where + " must be an object");
        reject_unknown_keys(piece, {"start", "rho"}, where);
        CTModel::RatePiece rp;
        rp.start = as_num(require(piece, "start", where), where + ".start");
        const json& rho = require(piece, "rho", where);
        if (!rho.is_array() || rho.size() != static_cast<std::size_t>(model.d))
            fail(where + ".rho must be an array with one rate per type");
        for (std::size_t i = 0; i < rho.size(); ++i)
            rp.rho.push_back(as_num(rho[i], where + ".rho[" + std::to_string(i) + "]"));
        model.rates.push_back(std::move(rp));
    }

    const json& laws = require(doc, "laws", "the model document");
    if (!laws.is_array() || laws.empty()) fail("laws must be a nonempty array");
    for (std::size_t k = 0; k < laws.size(); ++k) {
        const std::string where = "laws[" + std::to_string(k) + "]";
        const json& piece = laws[k];
        if (!piece.is_object()) fail(where + " must be an object");
        reject_unknown_keys(piece, {"start", "laws"}, where);
        CTModel::LawPiece lp;
        lp.start = as_num(require(piece, "start", where), where + ".start");
        lp.laws = parse_law_set(require(piece, "laws", where), model.d, where + ".laws");
        model.laws.push_back(std::move(lp));
    }

    if (doc.contains("id")) {
        if (!doc["id"].is_string()) fail("id must be a string");
        model.id = doc["id"].get<std::string>();
    }

    try {
        check_structure(model);
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    return model;
}

CTModel load_ct_model(const std::string& path) { return ct_model_from_json(read_file(path)); }

std::string report_to_json(const AssumptionReport& report, const std::string& tool_config_json) {
    ordered_json j;
    j["tool"] = {{"name", "mtbp"}, {"version", version}};
    j["config"] = ordered_json::parse(tool_config_json);
    j["pass"] = report.pass();
    j["d"] = report.d;
    j["horizon"] = report.horizon;
    j["constants"] = {{"epsilon0", report.epsilon0},
                      {"k0", report.k0},
                      {"min_second_factorial", report.min_second_factorial}};
    j["checks"] = {{"positivity_all", report.positivity_all},
                   {"extinction_all", report.extinction_all},
                   {"moments_finite", report.moments_finite},
                   {"finite_support", report.finite_support}};
    j["products"] = {{"entry_min", report.product_entry_min},
                     {"entry_min_at", {report.product_min_n, report.product_min_k}},
                     {"entry_max", report.product_entry_max},
                     {"entry_max_at", {report.product_max_n, report.product_max_k}},
                     {"max_mean_rowsum", report.max_mean_rowsum}};
    j["cells"] = ordered_json::array();
    for (const AssumptionCell& c : report.cells) {
        ordered_json cell;
        cell["start"] = c.start;
        cell["end"] = c.end;
        cell["type"] = c.type + 1;
        cell["pair_mass"] = c.pair_mass;
        cell["zero_mass"] = c.zero_mass;
        cell["second_moment"] = c.second_moment;
        cell["second_factorial"] = c.second_factorial;
        cell["positivity_pass"] = c.positivity_pass;
        cell["extinction_pass"] = c.extinction_pass;
        j["cells"].push_back(std::move(cell));
    }
    return j.dump(2) + "\n";
}

}
