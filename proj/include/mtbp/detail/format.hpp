#pragma once

#include <charconv>
#include <string>

namespace mtbp::detail {

// shortest round-trip formatting so re-runs produce byte-identical artifacts
// and exact values read back without loss
inline std::string csv_num(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}
