#pragma once

namespace mtbp {

inline constexpr const char* version = "0.1.0";

}
