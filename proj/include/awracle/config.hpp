// SPDX-License-Identifier: Apache-2.0
//
// "key = value" configuration: UTF-8 lines, '#' starts a comment, keys are
// dotted paths ("model.heads", "train.epochs", "embed.seed").
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace awracle {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Throws ConfigError with the line number on malformed lines or duplicate keys.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "<string>");
KeyValues read_key_value_file(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& values);

bool parse_bool(const std::string& key, const std::string& value);
std::size_t parse_size(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
int parse_int(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value);

std::string format_double(double value);
std::string format_size_list(const std::vector<std::size_t>& values);

}  // namespace awracle
