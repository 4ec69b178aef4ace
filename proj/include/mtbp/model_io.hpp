#pragma once

#include <string>

#include "mtbp/model.hpp"
#include "mtbp/simulate.hpp"

namespace mtbp {

/* Raised for unreadable or malformed input files; the CLI maps it to exit
 * code 2 (computation failures keep exiting 1).
 */
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/* Document shape (unknown keys anywhere are rejected):
 * {
 *   "d": 2,
 *   "schedule": [ { "start": 0, "laws": [ [ {"offspring": [0,0], "p": 0.5}, ... ],
 *                                          ... one array per type ] }, ... ],
 *   "tail": {"mode": "repeat_last"} | {"mode": "periodic", "period": 2},
 *   "id": "optional-name"
 * }
 */
BranchingModel model_from_json(const std::string& text);
BranchingModel load_model(const std::string& path);
std::string model_to_json(const BranchingModel& model);
void save_model(const BranchingModel& model, const std::string& path);

/* Continuous-time document shape:
 * {
 *   "d": 1,
 *   "rates": [ {"start": 0.0, "rho": [1.0]}, ... ],
 *   "laws":  [ {"start": 0.0, "laws": [ [ {"offspring":[0], "p":0.5}, ... ] ]} ],
 *   "id": "optional-name"
 * }
 */
CTModel ct_model_from_json(const std::string& text);
CTModel load_ct_model(const std::string& path);

// Assumption report as a JSON document.
std::string report_to_json(const AssumptionReport& report,
                           const std::string& tool_config_json = "{}");

}
