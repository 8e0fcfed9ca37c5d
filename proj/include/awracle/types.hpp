// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace awracle {

enum class Degradation { haze, rain, snow };
enum class Severity { light, heavy };

inline constexpr Degradation kAllDegradations[] = {Degradation::haze, Degradation::rain, Degradation::snow};
inline constexpr Severity kAllSeverities[] = {Severity::light, Severity::heavy};

std::string to_string(Degradation kind);
std::string to_string(Severity severity);
/// Throws ParameterError naming the offending value.
Degradation parse_degradation(std::string_view text);
Severity parse_severity(std::string_view text);
/// Comma-separated list, e.g. "haze,rain,snow".
std::vector<Degradation> parse_degradation_list(std::string_view text);

}  // namespace awracle
