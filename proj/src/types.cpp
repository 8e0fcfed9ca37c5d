// SPDX-License-Identifier: Apache-2.0
#include "awracle/types.hpp"

#include "awracle/errors.hpp"

namespace awracle {

std::string to_string(Degradation kind) {
    switch (kind) {
        case Degradation::haze: return "haze";
        case Degradation::rain: return "rain";
        case Degradation::snow: return "snow";
    }
    return "unknown";
}

std::string to_string(Severity severity) {
    return severity == Severity::light ? "light" : "heavy";
}

Degradation parse_degradation(std::string_view text) {
    if (text == "haze") return Degradation::haze;
    if (text == "rain") return Degradation::rain;
    if (text == "snow") return Degradation::snow;
    throw ParameterError("unknown degradation kind '" + std::string(text) + "' (expected haze, rain or snow)");
}

Severity parse_severity(std::string_view text) {
    if (text == "light") return Severity::light;
    if (text == "heavy") return Severity::heavy;
    throw ParameterError("unknown severity '" + std::string(text) + "' (expected light or heavy)");
}

std::vector<Degradation> parse_degradation_list(std::string_view text) {
    std::vector<Degradation> kinds;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto item = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
        const auto kind = parse_degradation(item);
        for (auto k : kinds) {
            if (k == kind) throw ParameterError("degradation kind '" + std::string(item) + "' listed twice");
        }
        kinds.push_back(kind);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return kinds;
}

}  // namespace awracle
